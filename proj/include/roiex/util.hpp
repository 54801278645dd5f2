#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace roiex {

// Deterministic 64-bit mixer (splitmix64). All project randomness fans out
// of one root seed through derive_seed, so reruns are reproducible.
uint64_t mix64(uint64_t x);
uint64_t derive_seed(uint64_t root, uint64_t stream);
uint64_t derive_seed(uint64_t root, uint64_t stream, uint64_t substream);

// Self-contained RNG so results do not depend on stdlib distribution
// implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}
  uint64_t next();
  double next_double();            // uniform in [0,1)
  int64_t next_below(int64_t n);   // uniform in [0,n)
 private:
  uint64_t state_;
};

// Fisher-Yates permutation of 0..n-1.
std::vector<int64_t> shuffled_indices(int64_t n, uint64_t seed);

// k distinct indices from 0..n-1, uniform, returned ascending.
std::vector<int64_t> sample_without_replacement(int64_t n, int64_t k, uint64_t seed);

void ensure_directory(const std::filesystem::path& dir);
void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace roiex
