#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace roiex {

// Tensor conventions used throughout:
//   image: float32 {3,H,W}, values in [0,1]
//   mask:  float32 {H,W}, values in {0,1}

enum class Split { train, test };
enum class SceneLabel { background = 0, foreground = 1 };

std::string split_name(Split split);

struct ImageSample {
  std::string id;
  torch::Tensor image;
  SceneLabel label = SceneLabel::background;
  std::optional<torch::Tensor> gt_mask;
};

struct Dataset {
  std::vector<ImageSample> samples;
  Split split = Split::train;
  uint64_t seed = 0;
  std::vector<std::string> skipped_ids;  // unreadable files recorded by the loader

  int64_t count_with_label(SceneLabel label) const;
};

// Bilinear resize, output clamped to [0,1].
torch::Tensor resize_image(const torch::Tensor& image, int64_t target_h, int64_t target_w);

// Nearest-neighbor resize; output stays binary.
torch::Tensor resize_mask(const torch::Tensor& mask, int64_t target_h, int64_t target_w);

// Directory layout: <root>/<split>/{foreground,background}/*.png with
// optional masks under <root>/<split>/masks/<id>.png (8-bit, {0,255}).
Dataset load_dataset(const std::filesystem::path& root, Split split,
                     int64_t target_h = 256, int64_t target_w = 256,
                     uint64_t seed = 0);

struct SynthConfig {
  uint64_t seed = 1;
  int64_t n = 200;
  int64_t height = 128;
  int64_t width = 128;
  // Texture parameters. Foreground regions carry a high-frequency checker
  // pattern; the background is a smooth coarse-cell noise field.
  int64_t smooth_cells = 8;        // cells across the smooth background grid
  double region_min_frac = 0.20;   // region side as a fraction of image side
  double region_max_frac = 0.40;
  int64_t max_regions = 3;
  int64_t checker_min_period = 2;  // pixels
  int64_t checker_max_period = 4;
};

Dataset synthesize_dataset(const SynthConfig& config);
Dataset synthesize_dataset(uint64_t seed, int64_t n, int64_t height, int64_t width);

// 8-bit single-channel PNG, foreground=255; round-trip exact.
void save_mask(const torch::Tensor& mask, const std::filesystem::path& path);
torch::Tensor load_mask(const std::filesystem::path& path);

void save_image_png(const torch::Tensor& image, const std::filesystem::path& path);
torch::Tensor load_image_png(const std::filesystem::path& path);

// Grayscale [0,1] map as 8-bit PNG (used for saliency/score maps).
void save_map_png(const torch::Tensor& map, const std::filesystem::path& path);
torch::Tensor load_map_png(const std::filesystem::path& path);

// Deterministic 80/20-style split of a dataset by seeded shuffle.
std::pair<Dataset, Dataset> split_dataset(const Dataset& full, double train_ratio, uint64_t seed);

}  // namespace roiex
