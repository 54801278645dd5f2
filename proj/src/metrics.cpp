#include "roiex/metrics.hpp"

#include <nlohmann/json.hpp>

#include <stdexcept>

#include "roiex/util.hpp"

namespace roiex {

using nlohmann::json;

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& other) {
  tp += other.tp;
  fp += other.fp;
  tn += other.tn;
  fn += other.fn;
  return *this;
}

ConfusionCounts confusion_counts(const torch::Tensor& pred, const torch::Tensor& gt) {
  if (pred.sizes() != gt.sizes())
    throw std::invalid_argument("confusion_counts: prediction and ground truth shapes differ");
  auto p = pred.gt(0.5);
  auto g = gt.gt(0.5);
  ConfusionCounts c;
  c.tp = (p & g).sum().item<int64_t>();
  c.fp = (p & ~g).sum().item<int64_t>();
  c.fn = (~p & g).sum().item<int64_t>();
  c.tn = (~p & ~g).sum().item<int64_t>();
  return c;
}

double accuracy(const ConfusionCounts& c) {
  const int64_t total = c.total();
  return total == 0 ? 0.0 : static_cast<double>(c.tp + c.tn) / static_cast<double>(total);
}

double precision(const ConfusionCounts& c) {
  const int64_t denom = c.tp + c.fp;
  return denom == 0 ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(denom);
}

double recall(const ConfusionCounts& c) {
  const int64_t denom = c.tp + c.fn;
  return denom == 0 ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(denom);
}

double f_measure(double p, double r, double beta2) {
  const double denom = beta2 * p + r;
  return denom == 0.0 ? 0.0 : (1.0 + beta2) * p * r / denom;
}

std::pair<Curve, Curve> roc_pr_curves(const std::vector<torch::Tensor>& score_maps,
                                      const std::vector<torch::Tensor>& gts,
                                      int64_t n_thresholds) {
  if (score_maps.empty() || score_maps.size() != gts.size())
    throw std::invalid_argument("roc_pr_curves: need matching, non-empty map lists");
  if (n_thresholds < 2) throw std::invalid_argument("roc_pr_curves: need at least 2 thresholds");
  std::vector<torch::Tensor> s_flat, g_flat;
  for (size_t i = 0; i < score_maps.size(); ++i) {
    if (score_maps[i].sizes() != gts[i].sizes())
      throw std::invalid_argument("roc_pr_curves: score/gt shape mismatch at index " +
                                  std::to_string(i));
    s_flat.push_back(score_maps[i].flatten());
    g_flat.push_back(gts[i].flatten());
  }
  auto scores = torch::cat(s_flat);
  auto gt = torch::cat(g_flat).gt(0.5);
  const auto positives = gt.sum().item<int64_t>();
  const auto negatives = gt.numel() - positives;

  Curve roc{CurveKind::roc, {}, {}, {}};
  Curve pr{CurveKind::pr, {}, {}, {}};
  for (int64_t k = 0; k < n_thresholds; ++k) {
    const double t =
        static_cast<double>(n_thresholds - 1 - k) / static_cast<double>(n_thresholds - 1);
    auto pred = scores.ge(t);
    const int64_t tp = (pred & gt).sum().item<int64_t>();
    const int64_t fp = pred.sum().item<int64_t>() - tp;
    const double tpr = positives == 0 ? 0.0 : static_cast<double>(tp) / positives;
    const double fpr = negatives == 0 ? 0.0 : static_cast<double>(fp) / negatives;
    const double prec = (tp + fp) == 0 ? 0.0 : static_cast<double>(tp) / (tp + fp);
    roc.thresholds.push_back(t);
    roc.xs.push_back(fpr);
    roc.ys.push_back(tpr);
    pr.thresholds.push_back(t);
    pr.xs.push_back(tpr);  // recall
    pr.ys.push_back(prec);
  }
  return {std::move(roc), std::move(pr)};
}

double auc(const Curve& curve) {
  if (curve.kind != CurveKind::roc) throw std::invalid_argument("auc: expected a ROC curve");
  if (curve.xs.size() < 2 || curve.xs.size() != curve.ys.size())
    throw std::invalid_argument("auc: malformed curve");
  std::vector<std::pair<double, double>> pts;
  pts.reserve(curve.xs.size() + 2);
  pts.emplace_back(0.0, 0.0);
  for (size_t i = 0; i < curve.xs.size(); ++i) pts.emplace_back(curve.xs[i], curve.ys[i]);
  pts.emplace_back(1.0, 1.0);
  std::sort(pts.begin(), pts.end());
  double area = 0.0;
  for (size_t i = 1; i < pts.size(); ++i)
    area += (pts[i].first - pts[i - 1].first) * (pts[i].second + pts[i - 1].second) / 2.0;
  return area;
}

double otsu_threshold(const torch::Tensor& map) {
  if (map.dim() != 2) throw std::invalid_argument("otsu_threshold: expected map {H,W}");
  constexpr int64_t kBins = 256;
  const double lo = map.min().item<double>();
  const double hi = map.max().item<double>();
  if (lo == hi) return 0.5;

  auto bins = map.mul(kBins).to(torch::kInt64).clamp(0, kBins - 1).flatten();
  auto hist = torch::bincount(bins, {}, kBins).to(torch::kFloat64);
  auto counts = hist.accessor<double, 1>();
  const double total = static_cast<double>(map.numel());

  // cumulative weight/mean of the "below" class for each candidate split
  double global_mean = 0.0;
  for (int64_t k = 0; k < kBins; ++k) global_mean += k * counts[k];
  global_mean /= total;

  double w0 = 0.0, sum0 = 0.0;
  double best_var = -1.0;
  int64_t best_k = 0;
  for (int64_t k = 0; k < kBins; ++k) {
    w0 += counts[k] / total;
    sum0 += k * counts[k] / total;
    if (w0 <= 0.0 || w0 >= 1.0) continue;
    const double mu0 = sum0 / w0;
    const double mu1 = (global_mean - sum0) / (1.0 - w0);
    const double var = w0 * (1.0 - w0) * (mu0 - mu1) * (mu0 - mu1);
    if (var > best_var) {
      best_var = var;
      best_k = k;
    }
  }
  return static_cast<double>(best_k + 1) / static_cast<double>(kBins);
}

MetricReport compute_report(const std::vector<std::string>& ids,
                            const std::vector<torch::Tensor>& score_maps,
                            const std::vector<torch::Tensor>& gts) {
  if (ids.size() != score_maps.size() || ids.size() != gts.size() || ids.empty())
    throw std::invalid_argument("compute_report: need matching, non-empty inputs");

  MetricReport report;
  for (size_t i = 0; i < ids.size(); ++i) {
    PerImageMetrics pim;
    pim.id = ids[i];
    pim.otsu = otsu_threshold(score_maps[i]);
    auto pred = score_maps[i].ge(pim.otsu).to(torch::kFloat32);
    auto counts = confusion_counts(pred, gts[i]);
    pim.ac = accuracy(counts);
    pim.p = precision(counts);
    pim.r = recall(counts);
    pim.f = f_measure(pim.p, pim.r, report.beta2);
    report.per_image.push_back(pim);
    report.pooled += counts;
  }
  report.ac = accuracy(report.pooled);
  report.precision = precision(report.pooled);
  report.recall = recall(report.pooled);
  report.f_measure = f_measure(report.precision, report.recall, report.beta2);

  std::tie(report.roc, report.pr) = roc_pr_curves(score_maps, gts);
  report.auc = auc(report.roc);

  for (size_t i = 0; i < report.pr.xs.size(); ++i) {
    const double f = f_measure(report.pr.ys[i], report.pr.xs[i], report.beta2);
    if (f > report.max_f) {
      report.max_f = f;
      report.precision_at_max_f = report.pr.ys[i];
      report.recall_at_max_f = report.pr.xs[i];
      report.threshold_at_max_f = report.pr.thresholds[i];
    }
  }
  return report;
}

torch::Tensor score_map_for_image(RoiUNet& model, const torch::Tensor& image) {
  torch::NoGradGuard no_grad;
  auto prob = model->forward(image.unsqueeze(0))
                  .index({0, static_cast<int64_t>(SceneLabel::foreground)});
  // 8-bit grid so the persisted PNG reproduces the report exactly
  return prob.mul(255.0).round().div(255.0);
}

MetricReport evaluate_dataset(RoiUNet& model, const Dataset& dataset) {
  std::vector<std::string> missing;
  for (const auto& s : dataset.samples)
    if (!s.gt_mask.has_value()) missing.push_back(s.id);
  if (!missing.empty()) {
    std::string joined;
    for (const auto& id : missing) joined += (joined.empty() ? "" : ", ") + id;
    throw std::runtime_error("evaluate_dataset: missing ground-truth masks for: " + joined);
  }

  std::vector<std::string> ids;
  std::vector<torch::Tensor> scores, gts;
  for (const auto& s : dataset.samples) {
    ids.push_back(s.id);
    scores.push_back(score_map_for_image(model, s.image));
    gts.push_back(*s.gt_mask);
  }
  return compute_report(ids, scores, gts);
}

std::string report_to_json(const MetricReport& report) {
  json j;
  j["ac"] = report.ac;
  j["auc"] = report.auc;
  j["precision"] = report.precision;
  j["recall"] = report.recall;
  j["f_measure"] = report.f_measure;
  j["beta2"] = report.beta2;
  j["pooled"] = {{"tp", report.pooled.tp},
                 {"fp", report.pooled.fp},
                 {"tn", report.pooled.tn},
                 {"fn", report.pooled.fn}};
  j["max_f_mode"] = {{"f", report.max_f},
                     {"precision", report.precision_at_max_f},
                     {"recall", report.recall_at_max_f},
                     {"threshold", report.threshold_at_max_f}};
  auto curve_json = [](const Curve& c) {
    return json{{"x", c.xs}, {"y", c.ys}, {"thresholds", c.thresholds}};
  };
  j["roc"] = curve_json(report.roc);
  j["pr"] = curve_json(report.pr);
  j["per_image"] = json::array();
  for (const auto& pim : report.per_image)
    j["per_image"].push_back({{"id", pim.id},
                              {"otsu", pim.otsu},
                              {"ac", pim.ac},
                              {"precision", pim.p},
                              {"recall", pim.r},
                              {"f_measure", pim.f}});
  return j.dump(2);
}

void write_report_json(const MetricReport& report, const std::filesystem::path& path) {
  write_text_file(path, report_to_json(report));
}

}  // namespace roiex
