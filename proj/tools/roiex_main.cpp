#include <CLI11.hpp>

#include <iostream>
#include <optional>

#include "roiex/cli_commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"roiex: weakly-supervised ROI extraction (Grad-CAM pseudo labels + contrastive UNet)"};
  app.require_subcommand(1);

  std::optional<std::string> config_file, out_dir, data_root;
  std::optional<uint64_t> seed;
  std::optional<int64_t> image_size;
  std::optional<double> split_ratio;
  app.add_option("--config", config_file, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "root seed for all stages");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--data", data_root, "dataset root directory");
  app.add_option("--image-size", image_size, "model input size (pixels)");
  app.add_option("--split-ratio", split_ratio, "train fraction for synth");

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset on disk");
  std::optional<int64_t> synth_n, synth_size;
  bool force = false;
  synth->add_option("--n", synth_n, "number of samples")->check(CLI::PositiveNumber);
  synth->add_option("--size", synth_size, "image side length")->check(CLI::PositiveNumber);
  synth->add_flag("--force", force, "overwrite an existing non-empty dataset directory");

  auto* train_cls = app.add_subcommand("train-classifier", "train the scene classifier");
  std::optional<int64_t> cls_epochs, cls_batch;
  std::optional<double> cls_lr;
  std::optional<std::vector<int64_t>> cls_widths;
  train_cls->add_option("--epochs", cls_epochs);
  train_cls->add_option("--batch", cls_batch);
  train_cls->add_option("--lr", cls_lr);
  train_cls->add_option("--widths", cls_widths, "block widths, e.g. 8,16,32,32,32")->delimiter(',');

  auto* gen_pseudo = app.add_subcommand("gen-pseudo", "generate Grad-CAM pseudo labels");
  bool heatmaps = false;
  gen_pseudo->add_flag("--heatmaps", heatmaps, "also write per-layer heatmap PNGs");

  auto* train_ext = app.add_subcommand("train-extractor", "train the UNet extractor");
  std::optional<int64_t> ext_epochs, base_width;
  std::optional<double> tau;
  std::optional<std::vector<std::string>> taps;
  std::string ablate;
  train_ext->add_option("--epochs", ext_epochs);
  train_ext->add_option("--base-width", base_width);
  train_ext->add_option("--tau", tau);
  train_ext->add_option("--taps", taps, "contrastive taps, e.g. up1,up2")->delimiter(',');
  train_ext->add_option("--ablate", ablate, "ablation switch: no-contrast")
      ->check(CLI::IsMember({"no-contrast"}));

  auto* evaluate = app.add_subcommand("evaluate", "evaluate the extractor and write the report");
  std::optional<std::string> eval_split;
  bool plots = false;
  evaluate->add_option("--split", eval_split)->check(CLI::IsMember({"train", "test"}));
  evaluate->add_flag("--plot", plots, "also render ROC/PR plots");

  auto* plot = app.add_subcommand("plot", "render ROC/PR plots from the evaluation report");

  CLI11_PARSE(app, argc, argv);

  try {
    auto cfg = roiex::load_run_config(
        config_file ? std::optional<std::filesystem::path>(*config_file) : std::nullopt);
    if (seed) cfg.seed = *seed;
    if (out_dir) cfg.out_dir = *out_dir;
    if (data_root) cfg.data_root = *data_root;
    if (image_size) cfg.image_size = *image_size;
    if (split_ratio) cfg.split_ratio = *split_ratio;
    if (synth_n) cfg.synth_n = *synth_n;
    if (synth_size) cfg.synth_size = *synth_size;
    cfg.force = cfg.force || force;
    if (cls_epochs) cfg.classifier_epochs = *cls_epochs;
    if (cls_batch) cfg.classifier_batch = *cls_batch;
    if (cls_lr) cfg.classifier_lr = *cls_lr;
    if (cls_widths) cfg.classifier_widths = *cls_widths;
    cfg.save_heatmaps = cfg.save_heatmaps || heatmaps;
    if (ext_epochs) cfg.extractor_epochs = *ext_epochs;
    if (base_width) cfg.unet_base_width = *base_width;
    if (tau) cfg.tau = *tau;
    if (taps) cfg.taps = *taps;
    if (ablate == "no-contrast") cfg.contrastive = false;
    if (eval_split) cfg.eval_split = *eval_split;
    cfg.render_plots = cfg.render_plots || plots;

    if (*synth) roiex::cmd_synth(cfg);
    else if (*train_cls) roiex::cmd_train_classifier(cfg);
    else if (*gen_pseudo) roiex::cmd_gen_pseudo(cfg);
    else if (*train_ext) roiex::cmd_train_extractor(cfg);
    else if (*evaluate) roiex::cmd_evaluate(cfg);
    else if (*plot) roiex::cmd_plot(cfg);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
