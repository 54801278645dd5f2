#include "doctest_compat.hpp"
#include <torch/torch.h>

#include <cmath>

#include "roiex/dataset.hpp"
#include "roiex/metrics.hpp"
#include "roiex/util.hpp"
#include "test_helpers.hpp"

using namespace roiex;
using roiex_test::TempDir;

namespace {

// 8-bit grid keeps the 256-threshold sweep exact against pair counting.
torch::Tensor grid_scores(int64_t h, int64_t w, uint64_t seed) {
  Rng rng(seed);
  auto t = torch::empty({h, w});
  auto acc = t.accessor<float, 2>();
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x)
      acc[y][x] = static_cast<float>(rng.next_below(256)) / 255.0f;
  return t;
}

torch::Tensor random_mask(int64_t h, int64_t w, uint64_t seed) {
  Rng rng(seed);
  auto t = torch::empty({h, w});
  auto acc = t.accessor<float, 2>();
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) acc[y][x] = rng.next_double() < 0.4 ? 1.0f : 0.0f;
  return t;
}

// P(score_pos > score_neg) + 0.5 P(tie) over all positive/negative pairs.
double pair_counting_auc(const torch::Tensor& scores, const torch::Tensor& gt) {
  std::vector<double> pos, neg;
  auto s = scores.flatten();
  auto g = gt.flatten();
  for (int64_t i = 0; i < s.size(0); ++i)
    (g[i].item<float>() > 0.5f ? pos : neg).push_back(s[i].item<double>());
  double wins = 0.0;
  for (double p : pos)
    for (double n : neg) wins += p > n ? 1.0 : (p == n ? 0.5 : 0.0);
  return wins / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

}  // namespace

TEST_SUITE_BEGIN("metrics");

TEST_CASE("confusion_counts against a brute-force loop") {
  auto pred = random_mask(8, 8, 61);
  auto gt = random_mask(8, 8, 62);
  auto c = confusion_counts(pred, gt);
  int64_t tp = 0, fp = 0, tn = 0, fn = 0;
  for (int64_t y = 0; y < 8; ++y)
    for (int64_t x = 0; x < 8; ++x) {
      const bool p = pred[y][x].item<float>() > 0.5f;
      const bool g = gt[y][x].item<float>() > 0.5f;
      (p ? (g ? tp : fp) : (g ? fn : tn))++;
    }
  CHECK(c.tp == tp);
  CHECK(c.fp == fp);
  CHECK(c.tn == tn);
  CHECK(c.fn == fn);
  CHECK(c.total() == 64);

  auto same = confusion_counts(gt, gt);
  CHECK(same.fp == 0);
  CHECK(same.fn == 0);
  auto inverted = confusion_counts(1.0f - gt, gt);
  CHECK(inverted.tp == 0);
  CHECK(inverted.tn == 0);
  CHECK_THROWS_AS(confusion_counts(pred, random_mask(4, 4, 63)), std::invalid_argument);
}

TEST_CASE("accuracy, precision, recall with decided degenerate cases") {
  ConfusionCounts perfect{10, 0, 20, 0};
  CHECK(accuracy(perfect) == 1.0);
  CHECK(precision(perfect) == 1.0);
  CHECK(recall(perfect) == 1.0);

  ConfusionCounts all_bg{0, 0, 5, 5};  // predicted all background on mixed gt
  CHECK(precision(all_bg) == 0.0);
  CHECK(recall(all_bg) == 0.0);

  ConfusionCounts c{3, 1, 4, 2};
  CHECK(accuracy(c) == doctest::Approx(0.7));
  CHECK(precision(c) == doctest::Approx(0.75));
  CHECK(recall(c) == doctest::Approx(0.6));
}

TEST_CASE("f_measure with beta^2 = 0.3") {
  CHECK(f_measure(1.0, 1.0) == doctest::Approx(1.0));
  CHECK(f_measure(0.7, 0.0) == 0.0);
  CHECK(f_measure(0.0, 0.0) == 0.0);
  // Table-1-style check: P=0.896, R=0.877 -> F ~= 0.8916 (reported 0.890)
  CHECK(std::abs(f_measure(0.896, 0.877) - 0.8916) <= 0.0005);

  SUBCASE("strictly increasing in each argument") {
    const double f0 = f_measure(0.6, 0.5);
    CHECK(f_measure(0.65, 0.5) > f0);
    CHECK(f_measure(0.6, 0.55) > f0);
  }
}

TEST_CASE("roc_pr_curves on a perfect scorer pass through (0,1)") {
  auto gt = random_mask(10, 10, 64);
  auto [roc, pr] = roc_pr_curves({gt}, {gt});
  REQUIRE(roc.xs.size() == 256);
  bool hits_corner = false;
  for (size_t i = 0; i < roc.xs.size(); ++i)
    if (roc.xs[i] == 0.0 && roc.ys[i] == 1.0) hits_corner = true;
  CHECK(hits_corner);
  for (size_t i = 1; i < roc.thresholds.size(); ++i)
    CHECK(roc.thresholds[i] < roc.thresholds[i - 1]);
  CHECK(auc(roc) == doctest::Approx(1.0));
}

TEST_CASE("constant scores collapse the ROC to the corners") {
  auto gt = random_mask(8, 8, 65);
  auto scores = torch::full({8, 8}, 0.4f);
  auto [roc, pr] = roc_pr_curves({scores}, {gt});
  for (size_t i = 0; i < roc.xs.size(); ++i) {
    const bool at00 = roc.xs[i] == 0.0 && roc.ys[i] == 0.0;
    const bool at11 = roc.xs[i] == 1.0 && roc.ys[i] == 1.0;
    CHECK((at00 || at11));
  }
  CHECK(auc(roc) == doctest::Approx(0.5));
}

TEST_CASE("curves match a per-threshold recount on a 3-image toy set") {
  std::vector<torch::Tensor> scores = {grid_scores(6, 6, 66), grid_scores(6, 6, 67),
                                       grid_scores(6, 6, 68)};
  std::vector<torch::Tensor> gts = {random_mask(6, 6, 69), random_mask(6, 6, 70),
                                    random_mask(6, 6, 71)};
  auto [roc, pr] = roc_pr_curves(scores, gts);
  for (size_t k = 0; k < roc.thresholds.size(); k += 17) {
    const double t = roc.thresholds[k];
    ConfusionCounts pooled;
    for (size_t i = 0; i < scores.size(); ++i)
      pooled += confusion_counts(scores[i].ge(t).to(torch::kFloat32), gts[i]);
    const double tpr = recall(pooled);
    const double fpr = static_cast<double>(pooled.fp) / static_cast<double>(pooled.fp + pooled.tn);
    CHECK(roc.xs[k] == doctest::Approx(fpr).epsilon(1e-12));
    CHECK(roc.ys[k] == doctest::Approx(tpr).epsilon(1e-12));
    CHECK(pr.xs[k] == doctest::Approx(tpr).epsilon(1e-12));
    CHECK(pr.ys[k] == doctest::Approx(precision(pooled)).epsilon(1e-12));
  }
  CHECK_THROWS_AS(roc_pr_curves({}, {}), std::invalid_argument);
}

TEST_CASE("auc matches pair counting on toy sets") {
  for (uint64_t seed = 80; seed < 90; ++seed) {
    auto scores = grid_scores(10, 10, seed);       // 100 pixels, 8-bit grid
    auto gt = random_mask(10, 10, seed + 100);
    if (gt.sum().item<float>() == 0.0f || gt.sum().item<float>() == 100.0f) continue;
    auto [roc, pr] = roc_pr_curves({scores}, {gt});
    CHECK(std::abs(auc(roc) - pair_counting_auc(scores, gt)) <= 1e-3);
  }
}

TEST_CASE("auc is invariant under monotone transforms of well-separated scores") {
  // score levels far enough apart that sqrt keeps every pair threshold-separable
  const float levels[5] = {0.1f, 0.3f, 0.5f, 0.7f, 0.9f};
  Rng rng(91);
  auto scores = torch::empty({9, 9});
  auto acc = scores.accessor<float, 2>();
  for (int64_t y = 0; y < 9; ++y)
    for (int64_t x = 0; x < 9; ++x) acc[y][x] = levels[rng.next_below(5)];
  auto gt = random_mask(9, 9, 92);
  auto [roc1, pr1] = roc_pr_curves({scores}, {gt});
  auto [roc2, pr2] = roc_pr_curves({scores.sqrt()}, {gt});
  const double oracle = pair_counting_auc(scores, gt);
  CHECK(std::abs(auc(roc1) - oracle) <= 1e-3);
  CHECK(std::abs(auc(roc2) - oracle) <= 1e-3);
}

TEST_CASE("otsu_threshold separates a bimodal map and matches exhaustive search") {
  auto bimodal = torch::cat({torch::full({4, 4}, 0.2f), torch::full({4, 4}, 0.8f)}, 0);
  const double t = otsu_threshold(bimodal);
  CHECK(t > 0.2);
  CHECK(t < 0.8);
  CHECK(otsu_threshold(torch::full({5, 5}, 0.3f)) == 0.5);

  // exhaustive oracle: argmax of between-class variance over the 256
  // candidate thresholds (k+1)/256, classes formed by direct comparison
  auto exhaustive = [](const torch::Tensor& map) {
    const auto flat = map.flatten();
    double best_var = -1.0;
    int64_t best_k = 0;
    for (int64_t k = 0; k < 256; ++k) {
      const double cut = static_cast<double>(k + 1) / 256.0;
      double n0 = 0, n1 = 0, s0 = 0, s1 = 0;
      for (int64_t i = 0; i < flat.size(0); ++i) {
        const double v = flat[i].item<float>();
        if (v < cut) { n0 += 1; s0 += v; }
        else { n1 += 1; s1 += v; }
      }
      if (n0 == 0 || n1 == 0) continue;
      const double total = n0 + n1;
      const double mu0 = s0 / n0, mu1 = s1 / n1;
      const double var = (n0 / total) * (n1 / total) * (mu0 - mu1) * (mu0 - mu1);
      if (var > best_var) { best_var = var; best_k = k; }
    }
    return static_cast<double>(best_k + 1) / 256.0;
  };
  for (uint64_t seed = 0; seed < 50; ++seed) {
    auto map = grid_scores(8, 8, 700 + seed);
    CHECK(otsu_threshold(map) == exhaustive(map));
  }
}

TEST_CASE("otsu oracle note: bin means vs value means agree on the grid") {
  // Bin index floor(v*256) classifies exactly like v >= (k+1)/256 for
  // 8-bit-grid values, so the two variance computations rank candidates
  // identically; sanity-check one instance by hand.
  auto map = torch::tensor({{0.0f, 1.0f}, {1.0f, 1.0f}});
  const double t = otsu_threshold(map);
  CHECK(t > 0.0);
  CHECK(t <= 1.0);
  CHECK(map.ge(t).sum().item<int>() == 3);
}

TEST_CASE("compute_report pools pixels and survives a persistence round-trip") {
  TempDir tmp("report");
  std::vector<std::string> ids = {"a", "b", "c"};
  std::vector<torch::Tensor> scores, gts;
  for (uint64_t i = 0; i < 3; ++i) {
    scores.push_back(grid_scores(12, 12, 900 + i));
    gts.push_back(random_mask(12, 12, 950 + i));
  }
  auto report = compute_report(ids, scores, gts);

  for (double v : {report.ac, report.auc, report.precision, report.recall, report.f_measure}) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  CHECK(report.per_image.size() == 3);
  CHECK(report.pooled.total() == 3 * 144);

  SUBCASE("identical recomputation from persisted score maps") {
    std::vector<torch::Tensor> reloaded;
    for (size_t i = 0; i < 3; ++i) {
      auto path = tmp.path() / (ids[i] + ".png");
      save_map_png(scores[i], path);
      reloaded.push_back(load_map_png(path));
    }
    auto again = compute_report(ids, reloaded, gts);
    CHECK(again.ac == report.ac);
    CHECK(again.auc == report.auc);
    CHECK(again.precision == report.precision);
    CHECK(again.recall == report.recall);
    CHECK(again.f_measure == report.f_measure);
  }

  SUBCASE("json serialization carries the five scalars") {
    auto text = report_to_json(report);
    CHECK(text.find("\"ac\"") != std::string::npos);
    CHECK(text.find("\"auc\"") != std::string::npos);
    CHECK(text.find("\"precision\"") != std::string::npos);
    CHECK(text.find("\"recall\"") != std::string::npos);
    CHECK(text.find("\"f_measure\"") != std::string::npos);
  }
}

TEST_CASE("evaluate_dataset requires ground truth") {
  auto ds = synthesize_dataset(95, 4, 32, 32);
  ds.samples[1].gt_mask.reset();
  UNetConfig cfg;
  cfg.input_size = 32;
  cfg.base_width = 2;
  auto model = build_unet(cfg);
  CHECK_THROWS_WITH_AS(evaluate_dataset(model, ds), doctest::Contains(ds.samples[1].id.c_str()),
                       std::runtime_error);
  ds.samples[1].gt_mask = torch::zeros({32, 32});
  auto report = evaluate_dataset(model, ds);
  CHECK(report.per_image.size() == 4);
}

TEST_SUITE_END();
