#include "roiex/extractor.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "roiex/util.hpp"

namespace roiex {

torch::nn::Sequential RoiUNetImpl::double_conv(const std::string& name, int64_t in, int64_t out) {
  torch::nn::Sequential seq(
      torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).padding(1)), torch::nn::ReLU(),
      torch::nn::Conv2d(torch::nn::Conv2dOptions(out, out, 3).padding(1)), torch::nn::ReLU());
  return register_module(name, seq);
}

RoiUNetImpl::RoiUNetImpl(UNetConfig config) : config_(config) {
  if (config_.base_width < 1) throw std::invalid_argument("unet: base width must be positive");
  if (config_.input_size < 16 || config_.input_size % 16 != 0)
    throw std::invalid_argument("unet: input size must be divisible by 2^4");
  torch::manual_seed(config_.seed);
  const int64_t w = config_.base_width;
  pool_ = register_module("pool", torch::nn::MaxPool2d(torch::nn::MaxPool2dOptions(2)));
  enc0_ = double_conv("enc0", 3, w);
  enc1_ = double_conv("enc1", w, 2 * w);
  enc2_ = double_conv("enc2", 2 * w, 4 * w);
  enc3_ = double_conv("enc3", 4 * w, 8 * w);
  bottleneck_ = double_conv("bottleneck", 8 * w, 16 * w);
  upconv1_ = register_module("upconv1", torch::nn::ConvTranspose2d(
                                            torch::nn::ConvTranspose2dOptions(16 * w, 8 * w, 2).stride(2)));
  dec1_ = double_conv("dec1", 16 * w, 8 * w);
  upconv2_ = register_module("upconv2", torch::nn::ConvTranspose2d(
                                            torch::nn::ConvTranspose2dOptions(8 * w, 4 * w, 2).stride(2)));
  dec2_ = double_conv("dec2", 8 * w, 4 * w);
  upconv3_ = register_module("upconv3", torch::nn::ConvTranspose2d(
                                            torch::nn::ConvTranspose2dOptions(4 * w, 2 * w, 2).stride(2)));
  dec3_ = double_conv("dec3", 4 * w, 2 * w);
  upconv4_ = register_module("upconv4", torch::nn::ConvTranspose2d(
                                            torch::nn::ConvTranspose2dOptions(2 * w, w, 2).stride(2)));
  dec4_ = double_conv("dec4", 2 * w, w);
  head_ = register_module("head", torch::nn::Conv2d(torch::nn::Conv2dOptions(w, 2, 1)));
  input_mean_ = register_buffer("input_mean", torch::zeros({3, 1, 1}));
  input_std_ = register_buffer("input_std", torch::ones({3, 1, 1}));
}

void RoiUNetImpl::set_input_stats(torch::Tensor mean, torch::Tensor stddev) {
  input_mean_.copy_(mean.reshape({3, 1, 1}));
  input_std_.copy_(stddev.reshape({3, 1, 1}).clamp_min(1e-6));
}

ExtractorForward RoiUNetImpl::forward_with_feature_taps(torch::Tensor x) {
  if (x.dim() != 4 || x.size(1) != 3 || x.size(2) != config_.input_size ||
      x.size(3) != config_.input_size)
    throw std::invalid_argument("unet: expected input of shape {B,3," +
                                std::to_string(config_.input_size) + "," +
                                std::to_string(config_.input_size) + "}");
  x = (x - input_mean_) / input_std_;
  auto e0 = enc0_->forward(x);                  // {B,w,H,W}
  auto e1 = enc1_->forward(pool_->forward(e0)); // H/2
  auto e2 = enc2_->forward(pool_->forward(e1)); // H/4
  auto e3 = enc3_->forward(pool_->forward(e2)); // H/8
  auto bn = bottleneck_->forward(pool_->forward(e3));  // H/16

  ExtractorForward out;
  auto d1 = dec1_->forward(torch::cat({upconv1_->forward(bn), e3}, 1));  // H/8
  out.up_1f = d1;
  auto d2 = dec2_->forward(torch::cat({upconv2_->forward(d1), e2}, 1));  // H/4
  out.up_2f = d2;
  auto d3 = dec3_->forward(torch::cat({upconv3_->forward(d2), e1}, 1));  // H/2
  out.up_3f = d3;
  auto d4 = dec4_->forward(torch::cat({upconv4_->forward(d3), e0}, 1));  // H
  out.prob = torch::softmax(head_->forward(d4), 1);
  return out;
}

torch::Tensor RoiUNetImpl::forward(torch::Tensor x) {
  return forward_with_feature_taps(std::move(x)).prob;
}

RoiUNet build_unet(const UNetConfig& config) {
  return RoiUNet(config);
}

torch::Tensor predict_mask(RoiUNet& model, const torch::Tensor& image) {
  torch::NoGradGuard no_grad;
  if (image.dim() != 3) throw std::invalid_argument("predict_mask: expected a single image {3,H,W}");
  auto prob = model->forward(image.unsqueeze(0));
  return prob.index({0, static_cast<int64_t>(SceneLabel::foreground)}).ge(0.5).to(torch::kFloat32);
}

torch::Tensor pixel_cross_entropy(const torch::Tensor& prob, const torch::Tensor& target) {
  auto p = prob.dim() == 3 ? prob.unsqueeze(0) : prob;
  auto y = target.dim() == 2 ? target.unsqueeze(0) : target;
  if (p.dim() != 4 || p.size(1) != 2)
    throw std::invalid_argument("cross_entropy_loss: expected probabilities {B,2,H,W}");
  if (y.dim() != 3 || y.size(0) != p.size(0) || y.size(1) != p.size(2) || y.size(2) != p.size(3))
    throw std::invalid_argument("cross_entropy_loss: target shape does not match probabilities");
  auto logp = torch::log(p.clamp(kProbEps, 1.0 - kProbEps));
  auto picked = logp.gather(1, y.to(torch::kInt64).unsqueeze(1));
  return -picked.mean();
}

torch::Tensor joint_loss(const torch::Tensor& ce, const torch::Tensor& l_q1,
                         const torch::Tensor& l_q2) {
  for (const auto* term : {&ce, &l_q1, &l_q2})
    if (term->isnan().any().item<bool>())
      throw std::runtime_error("joint_loss: NaN loss term");
  return ce + l_q1 + l_q2;
}

double learning_rate_at(const ExtractorTrainConfig& config, int64_t epoch) {
  return config.lr0 * std::pow(0.5, static_cast<double>(epoch / config.lr_halve_every));
}

ExtractorTrainResult train_extractor(RoiUNet& model, const Dataset& dataset,
                                     const std::map<std::string, PseudoLabel>& pseudo_labels,
                                     const ExtractorTrainConfig& config) {
  for (const auto& s : dataset.samples)
    if (!pseudo_labels.count(s.id))
      throw std::runtime_error("train_extractor: missing pseudo label for sample " + s.id);

  // per-channel standardization from the training split
  {
    auto sum = torch::zeros({3});
    auto sumsq = torch::zeros({3});
    int64_t count = 0;
    for (const auto& s : dataset.samples) {
      sum += s.image.sum({1, 2});
      sumsq += s.image.square().sum({1, 2});
      count += s.image.size(1) * s.image.size(2);
    }
    auto mean = sum / count;
    model->set_input_stats(mean, (sumsq / count - mean.square()).clamp_min(0).sqrt());
  }

  const std::vector<Tap> taps =
      config.contrastive_enabled ? config.contrastive_taps : std::vector<Tap>{};

  torch::manual_seed(config.seed);
  torch::optim::Adam optimizer(model->parameters(), torch::optim::AdamOptions(config.lr0));
  const int64_t n = static_cast<int64_t>(dataset.samples.size());

  ExtractorTrainResult result;
  model->train();
  for (int64_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = learning_rate_at(config, epoch);
    for (auto& group : optimizer.param_groups())
      static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);

    auto order = shuffled_indices(n, derive_seed(config.seed, static_cast<uint64_t>(epoch)));
    EpochStats stats;
    stats.lr = lr;
    int64_t steps = 0;
    for (size_t begin = 0; begin < static_cast<size_t>(n);
         begin += static_cast<size_t>(config.batch_size), ++steps) {
      const size_t end =
          std::min(begin + static_cast<size_t>(config.batch_size), static_cast<size_t>(n));
      std::vector<torch::Tensor> images, targets;
      for (size_t i = begin; i < end; ++i) {
        const auto& s = dataset.samples[static_cast<size_t>(order[i])];
        images.push_back(s.image);
        targets.push_back(pseudo_labels.at(s.id).mask);
      }
      auto batch = torch::stack(images);
      auto target = torch::stack(targets);

      optimizer.zero_grad();
      auto fwd = model->forward_with_feature_taps(batch);
      auto ce = pixel_cross_entropy(fwd.prob, target);

      // binarized prediction of the current network; no gradient through it
      auto y_hat =
          fwd.prob.select(1, static_cast<int64_t>(SceneLabel::foreground)).detach().ge(0.5).to(
              torch::kFloat32);

      const int64_t b = batch.size(0);
      std::array<torch::Tensor, 3> lq = {torch::zeros({}), torch::zeros({}), torch::zeros({})};
      for (size_t ti = 0; ti < taps.size(); ++ti) {
        const auto& tap_features = taps[ti] == Tap::up1   ? fwd.up_1f
                                   : taps[ti] == Tap::up2 ? fwd.up_2f
                                                          : fwd.up_3f;
        auto acc = torch::zeros({});
        for (int64_t i = 0; i < b; ++i) {
          const uint64_t seed = derive_seed(config.seed, static_cast<uint64_t>(epoch),
                                            static_cast<uint64_t>(steps * 64 + i * 8 + ti));
          acc = acc + contrastive_loss_for_tap(tap_features[i], y_hat[i], config.tau, config.caps,
                                               seed);
        }
        lq[ti] = acc / static_cast<double>(b);
      }

      auto total = joint_loss(ce, lq[0], lq[1]) + lq[2];
      total.backward();
      optimizer.step();

      stats.ce += ce.item<double>();
      stats.lq1 += lq[0].item<double>();
      stats.lq2 += lq[1].item<double>();
      stats.lq3 += lq[2].item<double>();
      stats.total += total.item<double>();
    }
    stats.ce /= static_cast<double>(steps);
    stats.lq1 /= static_cast<double>(steps);
    stats.lq2 /= static_cast<double>(steps);
    stats.lq3 /= static_cast<double>(steps);
    stats.total /= static_cast<double>(steps);
    result.history.push_back(stats);
  }
  model->eval();
  return result;
}

}  // namespace roiex
