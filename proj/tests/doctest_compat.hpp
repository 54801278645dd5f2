#pragma once

// torch's c10 logging defines glog-style CHECK macros; the doctest asserts
// take priority inside test code.
#ifdef CHECK
#undef CHECK
#endif
#ifdef CHECK_EQ
#undef CHECK_EQ
#endif
#ifdef CHECK_NE
#undef CHECK_NE
#endif
#ifdef CHECK_GT
#undef CHECK_GT
#endif
#ifdef CHECK_LT
#undef CHECK_LT
#endif
#ifdef CHECK_GE
#undef CHECK_GE
#endif
#ifdef CHECK_LE
#undef CHECK_LE
#endif

#include <doctest.h>
