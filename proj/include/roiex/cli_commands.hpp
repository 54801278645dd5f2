#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace roiex {

// Resolved run configuration: defaults, overlaid by an optional JSON config
// file, overlaid by command-line flags. Every stage writes the resolved
// snapshot it ran with to <out>/<stage>_config.json.
struct RunConfig {
  uint64_t seed = 1;
  std::string out_dir = "out";
  std::string data_root = "data";
  int64_t image_size = 256;
  double split_ratio = 0.8;

  int64_t synth_n = 200;
  int64_t synth_size = 128;
  bool force = false;

  std::vector<int64_t> classifier_widths = {64, 128, 256, 512, 512};
  int64_t classifier_epochs = 50;
  double classifier_lr = 0.01;
  double classifier_momentum = 0.9;
  double classifier_weight_decay = 1e-4;
  int64_t classifier_batch = 16;

  int64_t unet_base_width = 64;
  int64_t extractor_epochs = 100;
  double extractor_lr0 = 5e-5;
  int64_t lr_halve_every = 20;
  int64_t extractor_batch = 2;
  double tau = 0.07;
  std::vector<std::string> taps = {"up1", "up2"};
  bool contrastive = true;
  int64_t n_max = 1024;
  int64_t k_max = 4096;

  std::string eval_split = "test";
  bool save_heatmaps = false;
  bool render_plots = false;
};

RunConfig load_run_config(const std::optional<std::filesystem::path>& config_file);
std::string run_config_to_json(const RunConfig& config);

void cmd_synth(const RunConfig& config);
void cmd_train_classifier(const RunConfig& config);
void cmd_gen_pseudo(const RunConfig& config);
void cmd_train_extractor(const RunConfig& config);
void cmd_evaluate(const RunConfig& config);
void cmd_plot(const RunConfig& config);

}  // namespace roiex
