#pragma once

#include <torch/torch.h>

#include <map>
#include <vector>

#include "roiex/cam.hpp"
#include "roiex/contrastive.hpp"
#include "roiex/dataset.hpp"

namespace roiex {

// Symmetric UNet: 4 pooling stages down, 4 transposed-conv stages up with
// skip connections, 1x1 head to 2 channels, per-pixel softmax. Feature taps
// sit on the outputs of the first three upsampling stages:
//   up_1f at H/8, up_2f at H/4, up_3f at H/2 (up_3f exists for ablations).
struct UNetConfig {
  int64_t input_size = 256;
  int64_t base_width = 64;
  uint64_t seed = 0;
};

struct ExtractorForward {
  torch::Tensor prob;   // {B,2,H,W}, per-pixel softmax
  torch::Tensor up_1f;  // {B,8w,H/8,W/8}
  torch::Tensor up_2f;  // {B,4w,H/4,W/4}
  torch::Tensor up_3f;  // {B,2w,H/2,W/2}
};

class RoiUNetImpl : public torch::nn::Module {
 public:
  explicit RoiUNetImpl(UNetConfig config);

  ExtractorForward forward_with_feature_taps(torch::Tensor x);
  torch::Tensor forward(torch::Tensor x);  // prob only

  void set_input_stats(torch::Tensor mean, torch::Tensor stddev);
  const UNetConfig& config() const { return config_; }

 private:
  torch::nn::Sequential double_conv(const std::string& name, int64_t in, int64_t out);

  UNetConfig config_;
  torch::nn::Sequential enc0_{nullptr}, enc1_{nullptr}, enc2_{nullptr}, enc3_{nullptr},
      bottleneck_{nullptr};
  torch::nn::ConvTranspose2d upconv1_{nullptr}, upconv2_{nullptr}, upconv3_{nullptr},
      upconv4_{nullptr};
  torch::nn::Sequential dec1_{nullptr}, dec2_{nullptr}, dec3_{nullptr}, dec4_{nullptr};
  torch::nn::Conv2d head_{nullptr};
  torch::nn::MaxPool2d pool_{nullptr};
  torch::Tensor input_mean_, input_std_;
};

TORCH_MODULE(RoiUNet);

RoiUNet build_unet(const UNetConfig& config);

// Argmax over the two per-pixel probabilities; ties go to foreground.
torch::Tensor predict_mask(RoiUNet& model, const torch::Tensor& image);

// Mean over pixels of -sum_c Y^c log P^c with probabilities clamped away
// from 0 and 1 by kProbEps.
inline constexpr double kProbEps = 1e-7;
torch::Tensor pixel_cross_entropy(const torch::Tensor& prob, const torch::Tensor& target);

torch::Tensor joint_loss(const torch::Tensor& ce, const torch::Tensor& l_q1,
                         const torch::Tensor& l_q2);

enum class Tap { up1 = 0, up2 = 1, up3 = 2 };

struct ExtractorTrainConfig {
  double lr0 = 5e-5;
  int64_t lr_halve_every = 20;  // epochs
  int64_t batch_size = 2;
  int64_t epochs = 100;
  double tau = 0.07;
  bool contrastive_enabled = true;
  std::vector<Tap> contrastive_taps = {Tap::up1, Tap::up2};
  FeatureCaps caps;
  uint64_t seed = 0;
};

// lr(e) = lr0 * 0.5^floor(e / halve_every), epochs counted from 0.
double learning_rate_at(const ExtractorTrainConfig& config, int64_t epoch);

struct EpochStats {
  double lr = 0.0;
  double ce = 0.0;
  double lq1 = 0.0;
  double lq2 = 0.0;
  double lq3 = 0.0;
  double total = 0.0;
};

struct ExtractorTrainResult {
  std::vector<EpochStats> history;
};

ExtractorTrainResult train_extractor(RoiUNet& model, const Dataset& dataset,
                                     const std::map<std::string, PseudoLabel>& pseudo_labels,
                                     const ExtractorTrainConfig& config);

}  // namespace roiex
