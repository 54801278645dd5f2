#pragma once

#include <torch/torch.h>

#include <optional>

namespace roiex {

// Pixel-partitioned contrastive batch: q rows are foreground feature vectors
// (gradient-carrying), k_plus is their gradient-stopped copy, queue columns
// are background feature vectors. Everything is L2-normalized.
struct ContrastiveBatch {
  torch::Tensor q;       // {N,C}
  torch::Tensor k_plus;  // {N,C}, detached
  torch::Tensor queue;   // {C,K}, detached
};

struct FeatureCaps {
  int64_t n_max = 1024;
  int64_t k_max = 4096;
};

// Nearest-neighbor reduction of the predicted mask to a tap's spatial size.
// Taps are always coarser than the prediction, so upsampling is rejected.
torch::Tensor downsample_mask(const torch::Tensor& mask, int64_t target_h, int64_t target_w);

// Splits feature vectors by mask value; subsamples above the caps with the
// given seed; nullopt when either side is empty.
std::optional<ContrastiveBatch> partition_features(const torch::Tensor& features,
                                                   const torch::Tensor& mask,
                                                   const FeatureCaps& caps, uint64_t seed);

// [l_pos | l_neg]: row-wise q.k_plus dot in column 0, q x queue after it.
torch::Tensor compute_logits(const ContrastiveBatch& batch);

// InfoNCE with the positive at column 0, computed via a shifted log-sum-exp.
torch::Tensor info_nce(const torch::Tensor& logits, double tau);

// downsample -> partition -> logits -> InfoNCE; zero when the partition is
// degenerate (all-foreground or all-background prediction).
torch::Tensor contrastive_loss_for_tap(const torch::Tensor& features, const torch::Tensor& mask,
                                       double tau, const FeatureCaps& caps, uint64_t seed);

}  // namespace roiex
