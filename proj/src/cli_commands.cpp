#include "roiex/cli_commands.hpp"

#include <nlohmann/json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <iostream>
#include <sstream>

#include "roiex/cam.hpp"
#include "roiex/checkpoint.hpp"
#include "roiex/classifier.hpp"
#include "roiex/dataset.hpp"
#include "roiex/extractor.hpp"
#include "roiex/metrics.hpp"
#include "roiex/util.hpp"

namespace roiex {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Seed streams per stage, all fanned out of the root seed. The generator
// itself uses the root seed directly so `synth --seed S` replays
// synthesize_dataset(S, ...) exactly.
enum SeedStream : uint64_t {
  kSplitStream = 1,
  kClassifierBuild = 2,
  kClassifierTrain = 3,
  kExtractorBuild = 4,
  kExtractorTrain = 5,
};

json config_to_json_object(const RunConfig& c) {
  return json{
      {"seed", c.seed},
      {"out", c.out_dir},
      {"data", {{"root", c.data_root}, {"image_size", c.image_size}, {"split_ratio", c.split_ratio}}},
      {"synth", {{"n", c.synth_n}, {"size", c.synth_size}}},
      {"classifier",
       {{"widths", c.classifier_widths},
        {"epochs", c.classifier_epochs},
        {"lr", c.classifier_lr},
        {"momentum", c.classifier_momentum},
        {"weight_decay", c.classifier_weight_decay},
        {"batch_size", c.classifier_batch}}},
      {"extractor",
       {{"base_width", c.unet_base_width},
        {"epochs", c.extractor_epochs},
        {"lr0", c.extractor_lr0},
        {"lr_halve_every", c.lr_halve_every},
        {"batch_size", c.extractor_batch},
        {"tau", c.tau},
        {"taps", c.taps},
        {"contrastive", c.contrastive},
        {"n_max", c.n_max},
        {"k_max", c.k_max}}},
      {"eval", {{"split", c.eval_split}, {"heatmaps", c.save_heatmaps}, {"plots", c.render_plots}}}};
}

void write_snapshot(const RunConfig& c, const std::string& stage) {
  ensure_directory(c.out_dir);
  write_text_file(fs::path(c.out_dir) / (stage + "_config.json"),
                  config_to_json_object(c).dump(2) + "\n");
}

void write_stage_log(const RunConfig& c, const std::string& stage,
                     const std::vector<std::string>& lines) {
  ensure_directory(fs::path(c.out_dir) / "logs");
  std::string text;
  for (const auto& line : lines) text += line + "\n";
  write_text_file(fs::path(c.out_dir) / "logs" / (stage + ".log"), text);
  for (const auto& line : lines) std::cout << "[" << stage << "] " << line << "\n";
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::train;
  if (name == "test") return Split::test;
  throw std::invalid_argument("unknown split: " + name);
}

std::vector<Tap> parse_taps(const std::vector<std::string>& names) {
  std::vector<Tap> taps;
  for (const auto& name : names) {
    if (name == "up1") taps.push_back(Tap::up1);
    else if (name == "up2") taps.push_back(Tap::up2);
    else if (name == "up3") taps.push_back(Tap::up3);
    else throw std::invalid_argument("unknown contrastive tap: " + name + " (use up1|up2|up3)");
  }
  if (taps.size() > 3) throw std::invalid_argument("at most three contrastive taps");
  return taps;
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

fs::path classifier_checkpoint(const RunConfig& c) {
  return fs::path(c.out_dir) / "checkpoints" / "classifier.pt";
}
fs::path extractor_checkpoint(const RunConfig& c) {
  return fs::path(c.out_dir) / "checkpoints" / "extractor.pt";
}
fs::path pseudo_dir(const RunConfig& c) { return fs::path(c.out_dir) / "pseudo"; }

}  // namespace

RunConfig load_run_config(const std::optional<fs::path>& config_file) {
  RunConfig c;
  if (!config_file) return c;
  auto j = json::parse(read_text_file(*config_file));
  c.seed = j.value("seed", c.seed);
  c.out_dir = j.value("out", c.out_dir);
  if (j.contains("data")) {
    const auto& d = j["data"];
    c.data_root = d.value("root", c.data_root);
    c.image_size = d.value("image_size", c.image_size);
    c.split_ratio = d.value("split_ratio", c.split_ratio);
  }
  if (j.contains("synth")) {
    const auto& s = j["synth"];
    c.synth_n = s.value("n", c.synth_n);
    c.synth_size = s.value("size", c.synth_size);
  }
  if (j.contains("classifier")) {
    const auto& k = j["classifier"];
    c.classifier_widths = k.value("widths", c.classifier_widths);
    c.classifier_epochs = k.value("epochs", c.classifier_epochs);
    c.classifier_lr = k.value("lr", c.classifier_lr);
    c.classifier_momentum = k.value("momentum", c.classifier_momentum);
    c.classifier_weight_decay = k.value("weight_decay", c.classifier_weight_decay);
    c.classifier_batch = k.value("batch_size", c.classifier_batch);
  }
  if (j.contains("extractor")) {
    const auto& e = j["extractor"];
    c.unet_base_width = e.value("base_width", c.unet_base_width);
    c.extractor_epochs = e.value("epochs", c.extractor_epochs);
    c.extractor_lr0 = e.value("lr0", c.extractor_lr0);
    c.lr_halve_every = e.value("lr_halve_every", c.lr_halve_every);
    c.extractor_batch = e.value("batch_size", c.extractor_batch);
    c.tau = e.value("tau", c.tau);
    c.taps = e.value("taps", c.taps);
    c.contrastive = e.value("contrastive", c.contrastive);
    c.n_max = e.value("n_max", c.n_max);
    c.k_max = e.value("k_max", c.k_max);
  }
  if (j.contains("eval")) {
    const auto& e = j["eval"];
    c.eval_split = e.value("split", c.eval_split);
    c.save_heatmaps = e.value("heatmaps", c.save_heatmaps);
    c.render_plots = e.value("plots", c.render_plots);
  }
  return c;
}

std::string run_config_to_json(const RunConfig& config) {
  return config_to_json_object(config).dump(2);
}

void cmd_synth(const RunConfig& c) {
  if (c.synth_n < 1) throw std::invalid_argument("synth: --n must be >= 1");
  const fs::path root(c.data_root);
  if (fs::exists(root) && !fs::is_empty(root) && !c.force)
    throw std::runtime_error("synth: " + root.string() +
                             " exists and is not empty; pass --force to overwrite");
  write_snapshot(c, "synth");

  auto full = synthesize_dataset(c.seed, c.synth_n, c.synth_size, c.synth_size);
  auto [train, test] = split_dataset(full, c.split_ratio, derive_seed(c.seed, kSplitStream));

  for (const auto* ds : {&train, &test}) {
    const fs::path dir = root / split_name(ds->split);
    ensure_directory(dir / "foreground");
    ensure_directory(dir / "background");
    ensure_directory(dir / "masks");
    for (const auto& s : ds->samples) {
      const char* cls = s.label == SceneLabel::foreground ? "foreground" : "background";
      save_image_png(s.image, dir / cls / (s.id + ".png"));
      save_mask(*s.gt_mask, dir / "masks" / (s.id + ".png"));
    }
  }
  write_stage_log(c, "synth",
                  {"seed=" + std::to_string(c.seed), "n=" + std::to_string(c.synth_n),
                   "size=" + std::to_string(c.synth_size),
                   "train_samples=" + std::to_string(train.samples.size()),
                   "test_samples=" + std::to_string(test.samples.size()),
                   "split_ratio=" + format_double(c.split_ratio)});
}

void cmd_train_classifier(const RunConfig& c) {
  write_snapshot(c, "train_classifier");
  auto ds = load_dataset(c.data_root, Split::train, c.image_size, c.image_size, c.seed);

  ClassifierConfig cfg;
  cfg.input_size = c.image_size;
  cfg.block_widths = c.classifier_widths;
  cfg.seed = derive_seed(c.seed, kClassifierBuild);
  auto model = build_classifier(cfg);

  ClassifierHyperparams hp;
  hp.lr = c.classifier_lr;
  hp.momentum = c.classifier_momentum;
  hp.weight_decay = c.classifier_weight_decay;
  hp.batch_size = c.classifier_batch;
  hp.epochs = c.classifier_epochs;
  hp.seed = derive_seed(c.seed, kClassifierTrain);
  auto result = train_classifier(model, ds, hp);

  ensure_directory(fs::path(c.out_dir) / "checkpoints");
  save_classifier(model, classifier_checkpoint(c));
  std::string csv = "epoch,loss\n";
  for (size_t e = 0; e < result.loss_history.size(); ++e)
    csv += std::to_string(e) + "," + format_double(result.loss_history[e]) + "\n";
  write_text_file(fs::path(c.out_dir) / "checkpoints" / "classifier_loss.csv", csv);

  write_stage_log(c, "train_classifier",
                  {"samples=" + std::to_string(ds.samples.size()),
                   "foreground=" + std::to_string(ds.count_with_label(SceneLabel::foreground)),
                   "background=" + std::to_string(ds.count_with_label(SceneLabel::background)),
                   "skipped=" + std::to_string(ds.skipped_ids.size()),
                   "epochs=" + std::to_string(c.classifier_epochs),
                   "final_loss=" + format_double(result.loss_history.back()),
                   "train_accuracy=" + format_double(result.train_accuracy)});
}

void cmd_gen_pseudo(const RunConfig& c) {
  if (!fs::exists(classifier_checkpoint(c)))
    throw std::runtime_error("gen-pseudo: classifier checkpoint not found at " +
                             classifier_checkpoint(c).string() + "; run train-classifier first");
  write_snapshot(c, "gen_pseudo");
  auto model = load_classifier(classifier_checkpoint(c));
  auto ds = load_dataset(c.data_root, Split::train, c.image_size, c.image_size, c.seed);

  auto labels = generate_pseudo_labels(model, ds);
  ensure_directory(pseudo_dir(c));
  for (const auto& [id, label] : labels) save_mask(label.mask, pseudo_dir(c) / (id + ".png"));

  if (c.save_heatmaps) {
    ensure_directory(pseudo_dir(c) / "heatmaps");
    for (const auto& s : ds.samples) {
      if (s.label != SceneLabel::foreground) continue;
      auto saliency = multiscale_saliency(model, s.image,
                                          static_cast<int64_t>(SceneLabel::foreground));
      for (size_t t = 0; t < 3; ++t)
        save_map_png(saliency.per_tap[t],
                     pseudo_dir(c) / "heatmaps" / (s.id + "_tap" + std::to_string(t + 1) + ".png"));
      save_map_png(saliency.merged, pseudo_dir(c) / "heatmaps" / (s.id + "_merged.png"));
    }
  }
  write_stage_log(c, "gen_pseudo", {"labels=" + std::to_string(labels.size()),
                                    "heatmaps=" + std::string(c.save_heatmaps ? "yes" : "no")});
}

void cmd_train_extractor(const RunConfig& c) {
  const auto taps = parse_taps(c.taps);  // validate flags before any heavy work
  if (!fs::exists(pseudo_dir(c)))
    throw std::runtime_error("train-extractor: pseudo labels not found at " +
                             pseudo_dir(c).string() + "; run gen-pseudo first");
  write_snapshot(c, "train_extractor");
  auto ds = load_dataset(c.data_root, Split::train, c.image_size, c.image_size, c.seed);

  std::map<std::string, PseudoLabel> labels;
  for (const auto& s : ds.samples) {
    const fs::path path = pseudo_dir(c) / (s.id + ".png");
    if (!fs::exists(path))
      throw std::runtime_error("train-extractor: missing pseudo label for sample " + s.id +
                               "; run gen-pseudo first");
    PseudoLabel label;
    label.mask = load_mask(path);
    label.source_id = s.id;
    labels.emplace(s.id, std::move(label));
  }

  UNetConfig ucfg;
  ucfg.input_size = c.image_size;
  ucfg.base_width = c.unet_base_width;
  ucfg.seed = derive_seed(c.seed, kExtractorBuild);
  auto model = build_unet(ucfg);

  ExtractorTrainConfig tcfg;
  tcfg.lr0 = c.extractor_lr0;
  tcfg.lr_halve_every = c.lr_halve_every;
  tcfg.batch_size = c.extractor_batch;
  tcfg.epochs = c.extractor_epochs;
  tcfg.tau = c.tau;
  tcfg.contrastive_enabled = c.contrastive;
  tcfg.contrastive_taps = taps;
  tcfg.caps = FeatureCaps{c.n_max, c.k_max};
  tcfg.seed = derive_seed(c.seed, kExtractorTrain);
  auto result = train_extractor(model, ds, labels, tcfg);

  ensure_directory(fs::path(c.out_dir) / "checkpoints");
  save_extractor(model, extractor_checkpoint(c));
  const bool three_taps = tcfg.contrastive_taps.size() > 2;
  std::string csv = three_taps ? "epoch,lr,ce,lq1,lq2,lq3,total\n" : "epoch,lr,ce,lq1,lq2,total\n";
  for (size_t e = 0; e < result.history.size(); ++e) {
    const auto& st = result.history[e];
    csv += std::to_string(e) + "," + format_double(st.lr) + "," + format_double(st.ce) + "," +
           format_double(st.lq1) + "," + format_double(st.lq2) + ",";
    if (three_taps) csv += format_double(st.lq3) + ",";
    csv += format_double(st.total) + "\n";
  }
  write_text_file(fs::path(c.out_dir) / "checkpoints" / "extractor_log.csv", csv);

  write_stage_log(c, "train_extractor",
                  {"samples=" + std::to_string(ds.samples.size()),
                   "epochs=" + std::to_string(c.extractor_epochs),
                   "contrastive=" + std::string(c.contrastive ? "on" : "off"),
                   "final_ce=" + format_double(result.history.back().ce),
                   "final_total=" + format_double(result.history.back().total)});
}

void cmd_evaluate(const RunConfig& c) {
  if (!fs::exists(extractor_checkpoint(c)))
    throw std::runtime_error("evaluate: extractor checkpoint not found at " +
                             extractor_checkpoint(c).string() + "; run train-extractor first");
  write_snapshot(c, "evaluate");
  auto model = load_extractor(extractor_checkpoint(c));
  auto ds = load_dataset(c.data_root, parse_split(c.eval_split), c.image_size, c.image_size, c.seed);

  auto report = evaluate_dataset(model, ds);
  ensure_directory(fs::path(c.out_dir) / "reports");
  write_report_json(report, fs::path(c.out_dir) / "reports" / "report.json");

  ensure_directory(fs::path(c.out_dir) / "pred" / "mask");
  ensure_directory(fs::path(c.out_dir) / "pred" / "otsu");
  ensure_directory(fs::path(c.out_dir) / "pred" / "scores");
  for (size_t i = 0; i < ds.samples.size(); ++i) {
    const auto& s = ds.samples[i];
    save_mask(predict_mask(model, s.image), fs::path(c.out_dir) / "pred" / "mask" / (s.id + ".png"));
    auto score = score_map_for_image(model, s.image);
    save_map_png(score, fs::path(c.out_dir) / "pred" / "scores" / (s.id + ".png"));
    save_mask(score.ge(report.per_image[i].otsu).to(torch::kFloat32),
              fs::path(c.out_dir) / "pred" / "otsu" / (s.id + ".png"));
  }

  write_stage_log(c, "evaluate",
                  {"split=" + c.eval_split, "samples=" + std::to_string(ds.samples.size()),
                   "ac=" + format_double(report.ac), "auc=" + format_double(report.auc),
                   "precision=" + format_double(report.precision),
                   "recall=" + format_double(report.recall),
                   "f_measure=" + format_double(report.f_measure)});
  if (c.render_plots) cmd_plot(c);
}

namespace {

void render_curve(const Curve& curve, const std::string& title, const fs::path& path) {
  const int size = 560, margin = 48;
  cv::Mat canvas(size, size, CV_8UC3, cv::Scalar(255, 255, 255));
  auto to_px = [&](double x, double y) {
    return cv::Point(margin + static_cast<int>(x * (size - 2 * margin)),
                     size - margin - static_cast<int>(y * (size - 2 * margin)));
  };
  for (int g = 0; g <= 10; ++g) {
    const double f = g / 10.0;
    cv::line(canvas, to_px(f, 0), to_px(f, 1), cv::Scalar(230, 230, 230));
    cv::line(canvas, to_px(0, f), to_px(1, f), cv::Scalar(230, 230, 230));
  }
  cv::rectangle(canvas, to_px(0, 1), to_px(1, 0), cv::Scalar(0, 0, 0));
  for (size_t i = 1; i < curve.xs.size(); ++i)
    cv::line(canvas, to_px(curve.xs[i - 1], curve.ys[i - 1]), to_px(curve.xs[i], curve.ys[i]),
             cv::Scalar(180, 60, 20), 2);
  cv::putText(canvas, title, cv::Point(margin, margin - 16), cv::FONT_HERSHEY_SIMPLEX, 0.6,
              cv::Scalar(0, 0, 0), 1);
  if (!cv::imwrite(path.string(), canvas))
    throw std::runtime_error("plot: failed to write " + path.string());
}

}  // namespace

void cmd_plot(const RunConfig& c) {
  const fs::path report_path = fs::path(c.out_dir) / "reports" / "report.json";
  if (!fs::exists(report_path))
    throw std::runtime_error("plot: report not found at " + report_path.string() +
                             "; run evaluate first");
  auto j = json::parse(read_text_file(report_path));
  auto parse_curve = [](const json& cj, CurveKind kind) {
    Curve curve;
    curve.kind = kind;
    curve.xs = cj.at("x").get<std::vector<double>>();
    curve.ys = cj.at("y").get<std::vector<double>>();
    curve.thresholds = cj.at("thresholds").get<std::vector<double>>();
    return curve;
  };
  ensure_directory(fs::path(c.out_dir) / "plots");
  render_curve(parse_curve(j.at("roc"), CurveKind::roc), "ROC (FPR vs TPR)",
               fs::path(c.out_dir) / "plots" / "roc.png");
  render_curve(parse_curve(j.at("pr"), CurveKind::pr), "PR (recall vs precision)",
               fs::path(c.out_dir) / "plots" / "pr.png");
  write_stage_log(c, "plot", {"roc=plots/roc.png", "pr=plots/pr.png"});
}

}  // namespace roiex
