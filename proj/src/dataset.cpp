#include "roiex/dataset.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <iostream>
#include <set>
#include <stdexcept>

#include "roiex/util.hpp"

namespace roiex {

namespace F = torch::nn::functional;

std::string split_name(Split split) {
  return split == Split::train ? "train" : "test";
}

int64_t Dataset::count_with_label(SceneLabel label) const {
  return std::count_if(samples.begin(), samples.end(),
                       [label](const ImageSample& s) { return s.label == label; });
}

torch::Tensor resize_image(const torch::Tensor& image, int64_t target_h, int64_t target_w) {
  if (image.dim() != 3 || image.size(0) != 3)
    throw std::invalid_argument("resize_image: expected image of shape {3,H,W}");
  if (target_h < 1 || target_w < 1)
    throw std::invalid_argument("resize_image: target dimensions must be positive");
  auto out = F::interpolate(image.unsqueeze(0),
                            F::InterpolateFuncOptions()
                                .size(std::vector<int64_t>{target_h, target_w})
                                .mode(torch::kBilinear)
                                .align_corners(false))
                 .squeeze(0);
  return out.clamp(0.0, 1.0);
}

torch::Tensor resize_mask(const torch::Tensor& mask, int64_t target_h, int64_t target_w) {
  if (mask.dim() != 2)
    throw std::invalid_argument("resize_mask: expected mask of shape {H,W}");
  if (target_h < 1 || target_w < 1)
    throw std::invalid_argument("resize_mask: target dimensions must be positive");
  return F::interpolate(mask.unsqueeze(0).unsqueeze(0),
                        F::InterpolateFuncOptions()
                            .size(std::vector<int64_t>{target_h, target_w})
                            .mode(torch::kNearest))
      .squeeze(0)
      .squeeze(0);
}

namespace {

torch::Tensor mat_to_image(const cv::Mat& bgr) {
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  auto t = torch::from_blob(rgb.data, {rgb.rows, rgb.cols, 3}, torch::kUInt8).clone();
  return t.permute({2, 0, 1}).to(torch::kFloat32).div(255.0);
}

cv::Mat image_to_mat(const torch::Tensor& image) {
  auto hwc = image.clamp(0, 1).mul(255.0).round().to(torch::kUInt8).permute({1, 2, 0}).contiguous();
  cv::Mat rgb(static_cast<int>(hwc.size(0)), static_cast<int>(hwc.size(1)), CV_8UC3,
              hwc.data_ptr<uint8_t>());
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  return bgr;
}

}  // namespace

void save_image_png(const torch::Tensor& image, const std::filesystem::path& path) {
  if (image.dim() != 3 || image.size(0) != 3)
    throw std::invalid_argument("save_image_png: expected image of shape {3,H,W}");
  if (!cv::imwrite(path.string(), image_to_mat(image)))
    throw std::runtime_error("save_image_png: failed to write " + path.string());
}

torch::Tensor load_image_png(const std::filesystem::path& path) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw std::runtime_error("load_image_png: cannot read " + path.string());
  return mat_to_image(bgr);
}

void save_mask(const torch::Tensor& mask, const std::filesystem::path& path) {
  if (mask.dim() != 2) throw std::invalid_argument("save_mask: expected mask of shape {H,W}");
  auto u8 = mask.gt(0.5).to(torch::kUInt8).mul(255).contiguous();
  cv::Mat m(static_cast<int>(u8.size(0)), static_cast<int>(u8.size(1)), CV_8UC1,
            u8.data_ptr<uint8_t>());
  if (!cv::imwrite(path.string(), m))
    throw std::runtime_error("save_mask: failed to write " + path.string());
}

torch::Tensor load_mask(const std::filesystem::path& path) {
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
  if (m.empty()) throw std::runtime_error("load_mask: cannot read " + path.string());
  auto t = torch::from_blob(m.data, {m.rows, m.cols}, torch::kUInt8).clone();
  return t.ge(128).to(torch::kFloat32);
}

void save_map_png(const torch::Tensor& map, const std::filesystem::path& path) {
  if (map.dim() != 2) throw std::invalid_argument("save_map_png: expected map of shape {H,W}");
  auto u8 = map.clamp(0, 1).mul(255.0).round().to(torch::kUInt8).contiguous();
  cv::Mat m(static_cast<int>(u8.size(0)), static_cast<int>(u8.size(1)), CV_8UC1,
            u8.data_ptr<uint8_t>());
  if (!cv::imwrite(path.string(), m))
    throw std::runtime_error("save_map_png: failed to write " + path.string());
}

torch::Tensor load_map_png(const std::filesystem::path& path) {
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
  if (m.empty()) throw std::runtime_error("load_map_png: cannot read " + path.string());
  auto t = torch::from_blob(m.data, {m.rows, m.cols}, torch::kUInt8).clone();
  return t.to(torch::kFloat32).div(255.0);
}

Dataset load_dataset(const std::filesystem::path& root, Split split,
                     int64_t target_h, int64_t target_w, uint64_t seed) {
  namespace fs = std::filesystem;
  const fs::path dir = root / split_name(split);
  if (!fs::is_directory(dir))
    throw std::runtime_error("load_dataset: dataset directory not found: " + dir.string());

  Dataset ds;
  ds.split = split;
  ds.seed = seed;

  const fs::path mask_dir = dir / "masks";
  std::set<std::string> seen_ids;

  for (const auto& [class_dir, label] :
       {std::pair{std::string("foreground"), SceneLabel::foreground},
        std::pair{std::string("background"), SceneLabel::background}}) {
    const fs::path cdir = dir / class_dir;
    if (!fs::is_directory(cdir)) continue;
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(cdir)) {
      if (entry.is_regular_file() && entry.path().extension() == ".png")
        files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& file : files) {
      const std::string id = file.stem().string();
      if (!seen_ids.insert(id).second)
        throw std::runtime_error("load_dataset: duplicate sample id: " + id);
      ImageSample sample;
      sample.id = id;
      sample.label = label;
      try {
        sample.image = resize_image(load_image_png(file), target_h, target_w);
      } catch (const std::exception& e) {
        std::cerr << "warning: skipping unreadable sample " << id << ": " << e.what() << "\n";
        ds.skipped_ids.push_back(id);
        continue;
      }
      const fs::path mask_path = mask_dir / (id + ".png");
      if (fs::exists(mask_path)) {
        torch::Tensor mask;
        try {
          mask = load_mask(mask_path);
        } catch (const std::exception& e) {
          std::cerr << "warning: skipping sample with unreadable mask " << id << ": " << e.what()
                    << "\n";
          ds.skipped_ids.push_back(id);
          continue;
        }
        mask = resize_mask(mask, target_h, target_w);
        if (mask.size(0) != sample.image.size(1) || mask.size(1) != sample.image.size(2))
          throw std::runtime_error("load_dataset: mask/image size mismatch for sample " + id);
        sample.gt_mask = mask;
      }
      ds.samples.push_back(std::move(sample));
    }
  }

  if (ds.samples.empty())
    throw std::runtime_error("load_dataset: no samples found in " + dir.string());

  std::sort(ds.samples.begin(), ds.samples.end(),
            [](const ImageSample& a, const ImageSample& b) { return a.id < b.id; });
  return ds;
}

namespace {

// Smooth field: coarse uniform grid upsampled bilinearly, one grid per channel.
torch::Tensor smooth_background(Rng& rng, int64_t h, int64_t w, int64_t cells) {
  const int64_t gh = std::max<int64_t>(cells, 2);
  const int64_t gw = std::max<int64_t>(cells, 2);
  auto grid = torch::empty({3, gh, gw}, torch::kFloat32);
  auto acc = grid.accessor<float, 3>();
  for (int64_t c = 0; c < 3; ++c)
    for (int64_t y = 0; y < gh; ++y)
      for (int64_t x = 0; x < gw; ++x)
        acc[c][y][x] = static_cast<float>(0.2 + 0.6 * rng.next_double());
  auto field = F::interpolate(grid.unsqueeze(0),
                              F::InterpolateFuncOptions()
                                  .size(std::vector<int64_t>{h, w})
                                  .mode(torch::kBilinear)
                                  .align_corners(true))
                   .squeeze(0);
  // faint per-pixel jitter so the background is not piecewise-planar
  auto img = field.accessor<float, 3>();
  for (int64_t c = 0; c < 3; ++c)
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w; ++x)
        img[c][y][x] = std::clamp(img[c][y][x] + static_cast<float>(0.04 * rng.next_double() - 0.02),
                                  0.0f, 1.0f);
  return field;
}

void paint_textured_region(Rng& rng, torch::Tensor& image, torch::Tensor& mask,
                           const SynthConfig& cfg) {
  const int64_t h = image.size(1), w = image.size(2);
  const double span = cfg.region_max_frac - cfg.region_min_frac;
  const int64_t rh = std::max<int64_t>(
      2, static_cast<int64_t>(h * (cfg.region_min_frac + span * rng.next_double())));
  const int64_t rw = std::max<int64_t>(
      2, static_cast<int64_t>(w * (cfg.region_min_frac + span * rng.next_double())));
  const int64_t y0 = rng.next_below(h - rh + 1);
  const int64_t x0 = rng.next_below(w - rw + 1);
  const int64_t period =
      cfg.checker_min_period + rng.next_below(cfg.checker_max_period - cfg.checker_min_period + 1);
  const int64_t phase = rng.next_below(2);
  const float amp = static_cast<float>(0.30 + 0.10 * rng.next_double());
  float base[3];
  for (auto& b : base) b = static_cast<float>(0.35 + 0.30 * rng.next_double());

  auto img = image.accessor<float, 3>();
  auto msk = mask.accessor<float, 2>();
  for (int64_t y = y0; y < y0 + rh; ++y) {
    for (int64_t x = x0; x < x0 + rw; ++x) {
      const float checker = (((y - y0) / period + (x - x0) / period + phase) % 2 == 0) ? 1.f : -1.f;
      const float jitter = static_cast<float>(0.08 * rng.next_double() - 0.04);
      for (int64_t c = 0; c < 3; ++c)
        img[c][y][x] = std::clamp(base[c] + amp * checker + jitter, 0.0f, 1.0f);
      msk[y][x] = 1.0f;
    }
  }
}

}  // namespace

Dataset synthesize_dataset(const SynthConfig& cfg) {
  if (cfg.n < 1) throw std::invalid_argument("synthesize_dataset: n must be >= 1");
  Dataset ds;
  ds.split = Split::train;
  ds.seed = cfg.seed;
  ds.samples.reserve(static_cast<size_t>(cfg.n));
  for (int64_t i = 0; i < cfg.n; ++i) {
    Rng rng(derive_seed(cfg.seed, static_cast<uint64_t>(i)));
    const bool foreground = (i % 2 == 0);
    ImageSample sample;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04lld_%s", static_cast<long long>(i),
                  foreground ? "fg" : "bg");
    sample.id = buf;
    sample.label = foreground ? SceneLabel::foreground : SceneLabel::background;
    sample.image = smooth_background(rng, cfg.height, cfg.width, cfg.smooth_cells);
    auto mask = torch::zeros({cfg.height, cfg.width}, torch::kFloat32);
    if (foreground) {
      const int64_t n_regions = 1 + rng.next_below(cfg.max_regions);
      for (int64_t r = 0; r < n_regions; ++r)
        paint_textured_region(rng, sample.image, mask, cfg);
    }
    sample.gt_mask = mask;
    ds.samples.push_back(std::move(sample));
  }
  return ds;
}

Dataset synthesize_dataset(uint64_t seed, int64_t n, int64_t height, int64_t width) {
  SynthConfig cfg;
  cfg.seed = seed;
  cfg.n = n;
  cfg.height = height;
  cfg.width = width;
  return synthesize_dataset(cfg);
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& full, double train_ratio, uint64_t seed) {
  if (train_ratio <= 0.0 || train_ratio >= 1.0)
    throw std::invalid_argument("split_dataset: train_ratio must be in (0,1)");
  const int64_t n = static_cast<int64_t>(full.samples.size());
  const int64_t n_train = std::clamp<int64_t>(static_cast<int64_t>(n * train_ratio), 1, n - 1);
  auto order = shuffled_indices(n, derive_seed(seed, /*stream=*/0xA11));
  Dataset train, test;
  train.split = Split::train;
  test.split = Split::test;
  train.seed = full.seed;
  test.seed = full.seed;
  for (int64_t i = 0; i < n; ++i) {
    const auto& s = full.samples[static_cast<size_t>(order[static_cast<size_t>(i)])];
    (i < n_train ? train : test).samples.push_back(s);
  }
  auto by_id = [](const ImageSample& a, const ImageSample& b) { return a.id < b.id; };
  std::sort(train.samples.begin(), train.samples.end(), by_id);
  std::sort(test.samples.begin(), test.samples.end(), by_id);
  return {std::move(train), std::move(test)};
}

}  // namespace roiex
