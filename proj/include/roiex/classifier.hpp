#pragma once

#include <torch/torch.h>

#include <array>
#include <vector>

#include "roiex/dataset.hpp"

namespace roiex {

// VGG19-style feature stack: num_blocks conv blocks (3x3 conv + ReLU, VGG19
// conv counts 2,2,4,4,4), max-pool after each block, global average pooling
// and a linear head with 2 class scores. The three taps are the ReLU outputs
// that end the last three blocks, right before those blocks' pools; for the
// full 5-block stack these are the 17th/26th/35th modules of the flat
// conv-relu-pool enumeration.
struct ClassifierConfig {
  int64_t input_size = 256;
  std::vector<int64_t> block_widths = {64, 128, 256, 512, 512};
  uint64_t seed = 0;

  int64_t num_blocks() const { return static_cast<int64_t>(block_widths.size()); }
};

struct TapsForward {
  torch::Tensor scores;                 // {B,2}, pre-softmax
  std::array<torch::Tensor, 3> taps;    // {B,K_t,H_t,W_t}, post-ReLU
};

struct ActivationBundle {
  std::array<torch::Tensor, 3> activations;  // {K_t,H_t,W_t}
  std::array<torch::Tensor, 3> gradients;    // same shapes, d y^c / d A
  int64_t class_index = 0;
};

class SceneClassifierImpl : public torch::nn::Module {
 public:
  explicit SceneClassifierImpl(ClassifierConfig config);

  torch::Tensor forward(torch::Tensor x);
  TapsForward forward_with_taps(torch::Tensor x);

  // Resumes the forward pass from tap t's activation (pool of that block
  // onward). This is the function the finite-difference oracle probes.
  torch::Tensor forward_from_tap(int64_t tap, torch::Tensor activation);

  void set_input_stats(torch::Tensor mean, torch::Tensor stddev);
  void mark_trained(int64_t epochs);
  int64_t trained_epochs() const;

  const ClassifierConfig& config() const { return config_; }

 private:
  torch::Tensor standardize(const torch::Tensor& x) const;
  torch::Tensor head(torch::Tensor x);

  ClassifierConfig config_;
  std::vector<torch::nn::Sequential> blocks_;
  std::vector<torch::nn::MaxPool2d> pools_;
  torch::nn::Linear fc_{nullptr};
  torch::Tensor input_mean_, input_std_, trained_epochs_;
};

TORCH_MODULE(SceneClassifier);

SceneClassifier build_classifier(const ClassifierConfig& config);

struct ClassifierHyperparams {
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  int64_t batch_size = 16;
  int64_t epochs = 50;
  uint64_t seed = 0;
};

struct ClassifierTrainResult {
  std::vector<double> loss_history;  // mean per-sample CE per epoch
  double train_accuracy = 0.0;
};

ClassifierTrainResult train_classifier(SceneClassifier& model, const Dataset& dataset,
                                       const ClassifierHyperparams& hp);

// Gradients of the pre-softmax score y^c w.r.t. each tapped activation.
ActivationBundle class_gradients(SceneClassifier& model, const torch::Tensor& image,
                                 int64_t class_index);

double classification_accuracy(SceneClassifier& model, const Dataset& dataset,
                               int64_t batch_size = 16);

}  // namespace roiex
