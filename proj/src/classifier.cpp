#include "roiex/classifier.hpp"

#include <numeric>
#include <stdexcept>

#include "roiex/util.hpp"

namespace roiex {

namespace {

int64_t vgg_convs_in_block(int64_t block) {
  return block < 2 ? 2 : 4;  // VGG19: 2,2,4,4,4
}

void validate_config(const ClassifierConfig& cfg) {
  const int64_t nb = cfg.num_blocks();
  if (nb < 3) throw std::invalid_argument("classifier: need at least 3 blocks for the three taps");
  for (int64_t w : cfg.block_widths)
    if (w < 1) throw std::invalid_argument("classifier: block widths must be positive");
  const int64_t factor = int64_t{1} << nb;
  if (cfg.input_size < factor || cfg.input_size % factor != 0)
    throw std::invalid_argument("classifier: input size must be divisible by 2^" +
                                std::to_string(nb));
}

}  // namespace

SceneClassifierImpl::SceneClassifierImpl(ClassifierConfig config) : config_(std::move(config)) {
  validate_config(config_);
  torch::manual_seed(config_.seed);
  int64_t in_ch = 3;
  for (int64_t b = 0; b < config_.num_blocks(); ++b) {
    const int64_t width = config_.block_widths[static_cast<size_t>(b)];
    torch::nn::Sequential block;
    for (int64_t c = 0; c < vgg_convs_in_block(b); ++c) {
      block->push_back(torch::nn::Conv2d(
          torch::nn::Conv2dOptions(c == 0 ? in_ch : width, width, 3).padding(1)));
      block->push_back(torch::nn::ReLU());
    }
    in_ch = width;
    blocks_.push_back(register_module("block" + std::to_string(b), block));
    pools_.push_back(register_module("pool" + std::to_string(b),
                                     torch::nn::MaxPool2d(torch::nn::MaxPool2dOptions(2))));
  }
  fc_ = register_module("fc", torch::nn::Linear(in_ch, 2));
  input_mean_ = register_buffer("input_mean", torch::zeros({3, 1, 1}));
  input_std_ = register_buffer("input_std", torch::ones({3, 1, 1}));
  trained_epochs_ = register_buffer("trained_epochs", torch::zeros({1}, torch::kInt64));
}

torch::Tensor SceneClassifierImpl::standardize(const torch::Tensor& x) const {
  return (x - input_mean_) / input_std_;
}

torch::Tensor SceneClassifierImpl::head(torch::Tensor x) {
  x = torch::adaptive_avg_pool2d(x, {1, 1}).flatten(1);
  return fc_->forward(x);
}

torch::Tensor SceneClassifierImpl::forward(torch::Tensor x) {
  return forward_with_taps(std::move(x)).scores;
}

TapsForward SceneClassifierImpl::forward_with_taps(torch::Tensor x) {
  if (x.dim() != 4 || x.size(1) != 3 || x.size(2) != config_.input_size ||
      x.size(3) != config_.input_size)
    throw std::invalid_argument("classifier: expected input of shape {B,3," +
                                std::to_string(config_.input_size) + "," +
                                std::to_string(config_.input_size) + "}");
  TapsForward out;
  const int64_t nb = config_.num_blocks();
  x = standardize(x);
  for (int64_t b = 0; b < nb; ++b) {
    x = blocks_[static_cast<size_t>(b)]->forward(x);
    if (b >= nb - 3) out.taps[static_cast<size_t>(b - (nb - 3))] = x;
    x = pools_[static_cast<size_t>(b)]->forward(x);
  }
  out.scores = head(x);
  return out;
}

torch::Tensor SceneClassifierImpl::forward_from_tap(int64_t tap, torch::Tensor activation) {
  if (tap < 0 || tap > 2) throw std::invalid_argument("classifier: tap index must be in {0,1,2}");
  const int64_t nb = config_.num_blocks();
  const int64_t start = nb - 3 + tap;
  torch::Tensor x = pools_[static_cast<size_t>(start)]->forward(std::move(activation));
  for (int64_t b = start + 1; b < nb; ++b) {
    x = blocks_[static_cast<size_t>(b)]->forward(x);
    x = pools_[static_cast<size_t>(b)]->forward(x);
  }
  return head(x);
}

void SceneClassifierImpl::set_input_stats(torch::Tensor mean, torch::Tensor stddev) {
  input_mean_.copy_(mean.reshape({3, 1, 1}));
  input_std_.copy_(stddev.reshape({3, 1, 1}).clamp_min(1e-6));
}

void SceneClassifierImpl::mark_trained(int64_t epochs) {
  trained_epochs_.fill_(epochs);
}

int64_t SceneClassifierImpl::trained_epochs() const {
  return trained_epochs_.item<int64_t>();
}

SceneClassifier build_classifier(const ClassifierConfig& config) {
  return SceneClassifier(config);
}

namespace {

std::pair<torch::Tensor, torch::Tensor> stack_batch(const Dataset& ds,
                                                    const std::vector<int64_t>& order,
                                                    size_t begin, size_t end) {
  std::vector<torch::Tensor> images;
  std::vector<int64_t> labels;
  for (size_t i = begin; i < end; ++i) {
    const auto& s = ds.samples[static_cast<size_t>(order[i])];
    images.push_back(s.image);
    labels.push_back(static_cast<int64_t>(s.label));
  }
  return {torch::stack(images), torch::tensor(labels, torch::kInt64)};
}

std::pair<torch::Tensor, torch::Tensor> channel_stats(const Dataset& ds) {
  auto sum = torch::zeros({3});
  auto sumsq = torch::zeros({3});
  int64_t count = 0;
  for (const auto& s : ds.samples) {
    sum += s.image.sum({1, 2});
    sumsq += s.image.square().sum({1, 2});
    count += s.image.size(1) * s.image.size(2);
  }
  auto mean = sum / count;
  auto var = sumsq / count - mean.square();
  return {mean, var.clamp_min(0).sqrt()};
}

}  // namespace

ClassifierTrainResult train_classifier(SceneClassifier& model, const Dataset& dataset,
                                       const ClassifierHyperparams& hp) {
  if (dataset.count_with_label(SceneLabel::foreground) == 0 ||
      dataset.count_with_label(SceneLabel::background) == 0)
    throw std::runtime_error("train_classifier: dataset must contain both classes");

  auto [mean, stddev] = channel_stats(dataset);
  model->set_input_stats(mean, stddev);

  torch::manual_seed(hp.seed);
  torch::optim::SGD optimizer(model->parameters(), torch::optim::SGDOptions(hp.lr)
                                                       .momentum(hp.momentum)
                                                       .weight_decay(hp.weight_decay));
  const int64_t n = static_cast<int64_t>(dataset.samples.size());
  ClassifierTrainResult result;
  model->train();
  for (int64_t epoch = 0; epoch < hp.epochs; ++epoch) {
    auto order = shuffled_indices(n, derive_seed(hp.seed, static_cast<uint64_t>(epoch)));
    double loss_sum = 0.0;
    for (size_t begin = 0; begin < static_cast<size_t>(n); begin += hp.batch_size) {
      const size_t end = std::min(begin + static_cast<size_t>(hp.batch_size),
                                  static_cast<size_t>(n));
      auto [images, labels] = stack_batch(dataset, order, begin, end);
      optimizer.zero_grad();
      auto scores = model->forward(images);
      auto loss = torch::nn::functional::cross_entropy(scores, labels);
      loss.backward();
      optimizer.step();
      loss_sum += loss.item<double>() * static_cast<double>(end - begin);
    }
    result.loss_history.push_back(loss_sum / static_cast<double>(n));
  }
  model->eval();
  model->mark_trained(hp.epochs);
  result.train_accuracy = classification_accuracy(model, dataset, hp.batch_size);
  return result;
}

double classification_accuracy(SceneClassifier& model, const Dataset& dataset,
                               int64_t batch_size) {
  torch::NoGradGuard no_grad;
  const int64_t n = static_cast<int64_t>(dataset.samples.size());
  std::vector<int64_t> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  int64_t correct = 0;
  for (size_t begin = 0; begin < static_cast<size_t>(n); begin += batch_size) {
    const size_t end = std::min(begin + static_cast<size_t>(batch_size), static_cast<size_t>(n));
    auto [images, labels] = stack_batch(dataset, order, begin, end);
    auto pred = model->forward(images).argmax(1);
    correct += pred.eq(labels).sum().item<int64_t>();
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

ActivationBundle class_gradients(SceneClassifier& model, const torch::Tensor& image,
                                 int64_t class_index) {
  if (class_index != 0 && class_index != 1)
    throw std::invalid_argument("class_gradients: class index must be 0 or 1");
  if (image.dim() != 3)
    throw std::invalid_argument("class_gradients: expected a single image {3,H,W}");

  auto out = model->forward_with_taps(image.unsqueeze(0));
  auto score = out.scores.index({0, class_index});
  auto grads = torch::autograd::grad({score}, {out.taps[0], out.taps[1], out.taps[2]});

  ActivationBundle bundle;
  bundle.class_index = class_index;
  for (size_t t = 0; t < 3; ++t) {
    bundle.activations[t] = out.taps[t].detach().squeeze(0);
    bundle.gradients[t] = grads[t].squeeze(0);
  }
  return bundle;
}

}  // namespace roiex
