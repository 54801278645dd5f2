#include "roiex/contrastive.hpp"

#include <stdexcept>

#include "roiex/util.hpp"

namespace roiex {

namespace F = torch::nn::functional;

torch::Tensor downsample_mask(const torch::Tensor& mask, int64_t target_h, int64_t target_w) {
  if (mask.dim() != 2) throw std::invalid_argument("downsample_mask: expected mask {H,W}");
  if (target_h > mask.size(0) || target_w > mask.size(1))
    throw std::invalid_argument("downsample_mask: target must not exceed the source size");
  return F::interpolate(mask.unsqueeze(0).unsqueeze(0),
                        F::InterpolateFuncOptions()
                            .size(std::vector<int64_t>{target_h, target_w})
                            .mode(torch::kNearest))
      .squeeze(0)
      .squeeze(0);
}

namespace {

torch::Tensor maybe_subsample(const torch::Tensor& rows, int64_t cap, uint64_t seed) {
  const int64_t n = rows.size(0);
  if (n <= cap) return rows;
  auto picked = sample_without_replacement(n, cap, seed);
  auto idx = torch::tensor(picked, torch::kInt64);
  return rows.index_select(0, idx);
}

torch::Tensor l2_normalize_rows(const torch::Tensor& rows) {
  return rows / rows.norm(2, /*dim=*/1, /*keepdim=*/true).clamp_min(1e-12);
}

}  // namespace

std::optional<ContrastiveBatch> partition_features(const torch::Tensor& features,
                                                   const torch::Tensor& mask,
                                                   const FeatureCaps& caps, uint64_t seed) {
  if (features.dim() != 3)
    throw std::invalid_argument("partition_features: expected features {C,h,w}");
  if (mask.dim() != 2 || mask.size(0) != features.size(1) || mask.size(1) != features.size(2))
    throw std::invalid_argument("partition_features: mask shape must match feature spatial dims");

  const int64_t c = features.size(0);
  auto flat = features.reshape({c, -1}).transpose(0, 1);  // {h*w, C}
  auto flat_mask = mask.reshape({-1});
  auto fg_idx = flat_mask.gt(0.5).nonzero().squeeze(1);
  auto bg_idx = flat_mask.le(0.5).nonzero().squeeze(1);
  if (fg_idx.numel() == 0 || bg_idx.numel() == 0) return std::nullopt;

  auto fg = maybe_subsample(flat.index_select(0, fg_idx), caps.n_max, derive_seed(seed, 0));
  auto bg = maybe_subsample(flat.index_select(0, bg_idx), caps.k_max, derive_seed(seed, 1));

  ContrastiveBatch batch;
  batch.q = l2_normalize_rows(fg);
  batch.k_plus = batch.q.detach();
  batch.queue = l2_normalize_rows(bg).detach().transpose(0, 1).contiguous();
  return batch;
}

torch::Tensor compute_logits(const ContrastiveBatch& batch) {
  if (batch.q.dim() != 2 || batch.k_plus.dim() != 2 || batch.queue.dim() != 2)
    throw std::invalid_argument("compute_logits: q, k_plus must be {N,C} and queue {C,K}");
  if (batch.q.sizes() != batch.k_plus.sizes())
    throw std::invalid_argument("compute_logits: q and k_plus shapes differ");
  if (batch.queue.size(0) != batch.q.size(1))
    throw std::invalid_argument("compute_logits: queue feature dimension mismatch");
  auto l_pos = (batch.q * batch.k_plus).sum(1, /*keepdim=*/true);  // {N,1}
  auto l_neg = batch.q.mm(batch.queue);                            // {N,K}
  return torch::cat({l_pos, l_neg}, 1);
}

torch::Tensor info_nce(const torch::Tensor& logits, double tau) {
  if (tau <= 0.0) throw std::invalid_argument("info_nce: tau must be positive");
  if (logits.dim() != 2 || logits.size(1) < 1)
    throw std::invalid_argument("info_nce: expected logits {N,K+1}");
  auto scaled = logits / tau;
  auto lse = torch::logsumexp(scaled, /*dim=*/1);
  return (lse - scaled.select(1, 0)).mean();
}

torch::Tensor contrastive_loss_for_tap(const torch::Tensor& features, const torch::Tensor& mask,
                                       double tau, const FeatureCaps& caps, uint64_t seed) {
  auto tap_mask = downsample_mask(mask, features.size(1), features.size(2));
  auto batch = partition_features(features, tap_mask, caps, seed);
  if (!batch) return torch::zeros({}, features.options().requires_grad(false));
  return info_nce(compute_logits(*batch), tau);
}

}  // namespace roiex
