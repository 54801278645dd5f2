#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <string>
#include <vector>

#include "roiex/dataset.hpp"
#include "roiex/extractor.hpp"

namespace roiex {

struct ConfusionCounts {
  int64_t tp = 0, fp = 0, tn = 0, fn = 0;
  int64_t total() const { return tp + fp + tn + fn; }
  ConfusionCounts& operator+=(const ConfusionCounts& other);
};

ConfusionCounts confusion_counts(const torch::Tensor& pred, const torch::Tensor& gt);

double accuracy(const ConfusionCounts& c);
double precision(const ConfusionCounts& c);  // 0 when tp+fp == 0
double recall(const ConfusionCounts& c);     // 0 when tp+fn == 0

// (1+b2) p r / (b2 p + r); 0 when the denominator vanishes.
double f_measure(double p, double r, double beta2 = 0.3);

enum class CurveKind { roc, pr };

struct Curve {
  CurveKind kind = CurveKind::roc;
  std::vector<double> xs;          // ROC: FPR, PR: recall
  std::vector<double> ys;          // ROC: TPR, PR: precision
  std::vector<double> thresholds;  // strictly decreasing
};

// Threshold sweep over [0,1], pixel counts pooled over all images.
std::pair<Curve, Curve> roc_pr_curves(const std::vector<torch::Tensor>& score_maps,
                                      const std::vector<torch::Tensor>& gts,
                                      int64_t n_thresholds = 256);

// Trapezoidal area under an FPR-sorted ROC curve, (0,0)/(1,1) appended.
double auc(const Curve& curve);

// 256-bin between-class-variance maximizer; constant maps give 0.5.
double otsu_threshold(const torch::Tensor& map);

struct PerImageMetrics {
  std::string id;
  double otsu = 0.0;
  double ac = 0.0, p = 0.0, r = 0.0, f = 0.0;
};

struct MetricReport {
  double ac = 0.0, auc = 0.0, precision = 0.0, recall = 0.0, f_measure = 0.0;
  double beta2 = 0.3;
  Curve roc, pr;
  ConfusionCounts pooled;
  std::vector<PerImageMetrics> per_image;
  // Alternate (labeled) mode: point metrics at the PR sweep's max-F threshold.
  double max_f = 0.0, precision_at_max_f = 0.0, recall_at_max_f = 0.0, threshold_at_max_f = 0.0;
};

// Point metrics on per-image OTSU binarization (micro-averaged pixel
// counts), AUC from the pooled ROC. Score maps are expected in [0,1].
MetricReport compute_report(const std::vector<std::string>& ids,
                            const std::vector<torch::Tensor>& score_maps,
                            const std::vector<torch::Tensor>& gts);

// Runs the extractor over the dataset; score maps are the foreground
// probabilities quantized to the 8-bit grid so persisted maps reproduce the
// report exactly.
MetricReport evaluate_dataset(RoiUNet& model, const Dataset& dataset);

torch::Tensor score_map_for_image(RoiUNet& model, const torch::Tensor& image);

std::string report_to_json(const MetricReport& report);
void write_report_json(const MetricReport& report, const std::filesystem::path& path);

}  // namespace roiex
