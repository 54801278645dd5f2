#pragma once

#include <torch/torch.h>

#include <map>
#include <string>

#include "roiex/classifier.hpp"
#include "roiex/dataset.hpp"

namespace roiex {

struct PseudoLabel {
  torch::Tensor mask;  // {H,W}, {0,1}
  std::string source_id;
  double threshold_used = 0.5;
};

// alpha_k: spatial mean of the class-score gradient over tap t, one weight
// per channel.
torch::Tensor grad_cam_weights(const ActivationBundle& bundle, int64_t tap);

// ReLU(sum_k alpha_k * A^{k,t}); non-negative by construction.
torch::Tensor grad_cam_map(const ActivationBundle& bundle, int64_t tap,
                           const torch::Tensor& alpha);

// Min-max to [0,1]; a constant map collapses to all zeros.
torch::Tensor normalize_map(const torch::Tensor& raw);

torch::Tensor upsample_map(const torch::Tensor& map, int64_t target_h, int64_t target_w);

// Arithmetic mean of the three per-tap maps at input resolution.
torch::Tensor merge_maps(const torch::Tensor& a, const torch::Tensor& b, const torch::Tensor& c);

PseudoLabel binarize(const torch::Tensor& map, double threshold = 0.5,
                     const std::string& source_id = "");

// Merged multiscale saliency for one image: per-tap Grad-CAM, normalize,
// upsample to input resolution, average. Also exposes the per-tap maps for
// inspection output.
struct SaliencyResult {
  torch::Tensor merged;                     // {H,W} in [0,1]
  std::array<torch::Tensor, 3> per_tap;     // each {H,W} in [0,1]
};
SaliencyResult multiscale_saliency(SceneClassifier& model, const torch::Tensor& image,
                                   int64_t class_index);

// Foreground-labeled images go through the Grad-CAM pipeline and a 0.5
// threshold; background-labeled images receive all-zero pseudo labels.
std::map<std::string, PseudoLabel> generate_pseudo_labels(SceneClassifier& model,
                                                          const Dataset& dataset,
                                                          double threshold = 0.5);

}  // namespace roiex
