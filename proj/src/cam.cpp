#include "roiex/cam.hpp"

#include <stdexcept>

namespace roiex {

namespace F = torch::nn::functional;

namespace {

void check_tap(const ActivationBundle& bundle, int64_t tap) {
  if (tap < 0 || tap > 2) throw std::invalid_argument("cam: tap index must be in {0,1,2}");
  if (!bundle.activations[static_cast<size_t>(tap)].defined() ||
      !bundle.gradients[static_cast<size_t>(tap)].defined())
    throw std::invalid_argument("cam: bundle is missing tap " + std::to_string(tap));
}

}  // namespace

torch::Tensor grad_cam_weights(const ActivationBundle& bundle, int64_t tap) {
  check_tap(bundle, tap);
  return bundle.gradients[static_cast<size_t>(tap)].mean({1, 2});
}

torch::Tensor grad_cam_map(const ActivationBundle& bundle, int64_t tap,
                           const torch::Tensor& alpha) {
  check_tap(bundle, tap);
  const auto& acts = bundle.activations[static_cast<size_t>(tap)];
  if (alpha.dim() != 1 || alpha.size(0) != acts.size(0))
    throw std::invalid_argument("grad_cam_map: alpha length must equal the tap channel count");
  return torch::relu((alpha.view({-1, 1, 1}) * acts).sum(0));
}

torch::Tensor normalize_map(const torch::Tensor& raw) {
  const double lo = raw.min().item<double>();
  const double hi = raw.max().item<double>();
  if (hi == lo) return torch::zeros_like(raw);
  return (raw - lo) / (hi - lo);
}

torch::Tensor upsample_map(const torch::Tensor& map, int64_t target_h, int64_t target_w) {
  if (map.dim() != 2) throw std::invalid_argument("upsample_map: expected map of shape {H,W}");
  return F::interpolate(map.unsqueeze(0).unsqueeze(0),
                        F::InterpolateFuncOptions()
                            .size(std::vector<int64_t>{target_h, target_w})
                            .mode(torch::kBilinear)
                            .align_corners(false))
      .squeeze(0)
      .squeeze(0);
}

torch::Tensor merge_maps(const torch::Tensor& a, const torch::Tensor& b, const torch::Tensor& c) {
  if (a.sizes() != b.sizes() || a.sizes() != c.sizes())
    throw std::invalid_argument("merge_maps: maps must share one shape");
  return (a + b + c) / 3.0;
}

PseudoLabel binarize(const torch::Tensor& map, double threshold, const std::string& source_id) {
  if (threshold < 0.0 || threshold > 1.0)
    throw std::invalid_argument("binarize: threshold must lie in [0,1]");
  PseudoLabel label;
  label.mask = map.ge(threshold).to(torch::kFloat32);
  label.threshold_used = threshold;
  label.source_id = source_id;
  return label;
}

SaliencyResult multiscale_saliency(SceneClassifier& model, const torch::Tensor& image,
                                   int64_t class_index) {
  auto bundle = class_gradients(model, image, class_index);
  const int64_t h = image.size(1), w = image.size(2);
  SaliencyResult result;
  for (int64_t t = 0; t < 3; ++t) {
    auto alpha = grad_cam_weights(bundle, t);
    auto raw = grad_cam_map(bundle, t, alpha);
    result.per_tap[static_cast<size_t>(t)] = upsample_map(normalize_map(raw), h, w);
  }
  result.merged = merge_maps(result.per_tap[0], result.per_tap[1], result.per_tap[2]);
  return result;
}

std::map<std::string, PseudoLabel> generate_pseudo_labels(SceneClassifier& model,
                                                          const Dataset& dataset,
                                                          double threshold) {
  if (model->trained_epochs() == 0)
    throw std::runtime_error("generate_pseudo_labels: classifier has not been trained");
  std::map<std::string, PseudoLabel> labels;
  for (const auto& sample : dataset.samples) {
    if (sample.image.size(1) != model->config().input_size ||
        sample.image.size(2) != model->config().input_size)
      throw std::runtime_error("generate_pseudo_labels: sample " + sample.id +
                               " does not match the classifier input size");
    if (sample.label == SceneLabel::background) {
      PseudoLabel label;
      label.mask = torch::zeros({sample.image.size(1), sample.image.size(2)});
      label.threshold_used = threshold;
      label.source_id = sample.id;
      labels.emplace(sample.id, std::move(label));
      continue;
    }
    auto saliency = multiscale_saliency(model, sample.image,
                                        static_cast<int64_t>(SceneLabel::foreground));
    labels.emplace(sample.id, binarize(saliency.merged, threshold, sample.id));
  }
  return labels;
}

}  // namespace roiex
