#include "roiex/checkpoint.hpp"

#include <nlohmann/json.hpp>
#include <torch/serialize.h>

#include <stdexcept>

namespace roiex {

using nlohmann::json;

namespace {

void write_module_state(torch::serialize::OutputArchive& archive, const torch::nn::Module& module) {
  for (const auto& p : module.named_parameters())
    archive.write("param/" + p.key(), p.value().detach());
  for (const auto& b : module.named_buffers())
    archive.write("buffer/" + b.key(), b.value(), /*is_buffer=*/true);
}

void read_module_state(torch::serialize::InputArchive& archive, torch::nn::Module& module) {
  torch::NoGradGuard no_grad;
  for (auto p : module.named_parameters()) {
    torch::Tensor loaded;
    archive.read("param/" + p.key(), loaded);
    p.value().copy_(loaded);
  }
  for (auto b : module.named_buffers()) {
    torch::Tensor loaded;
    archive.read("buffer/" + b.key(), loaded, /*is_buffer=*/true);
    b.value().copy_(loaded);
  }
}

json read_config_json(torch::serialize::InputArchive& archive, const std::string& expected_kind) {
  c10::IValue kind, config;
  archive.read("kind", kind);
  if (kind.toStringRef() != expected_kind)
    throw std::runtime_error("checkpoint: expected kind '" + expected_kind + "', found '" +
                             kind.toStringRef() + "'");
  archive.read("config_json", config);
  return json::parse(config.toStringRef());
}

}  // namespace

void save_classifier(const SceneClassifier& model, const std::filesystem::path& path) {
  torch::serialize::OutputArchive archive;
  archive.write("kind", c10::IValue(std::string("roiex-classifier-v1")));
  json cfg{{"input_size", model->config().input_size},
           {"block_widths", model->config().block_widths},
           {"seed", model->config().seed}};
  archive.write("config_json", c10::IValue(cfg.dump()));
  write_module_state(archive, *model);
  archive.save_to(path.string());
}

SceneClassifier load_classifier(const std::filesystem::path& path) {
  torch::serialize::InputArchive archive;
  archive.load_from(path.string());
  auto cfg_json = read_config_json(archive, "roiex-classifier-v1");
  ClassifierConfig cfg;
  cfg.input_size = cfg_json.at("input_size").get<int64_t>();
  cfg.block_widths = cfg_json.at("block_widths").get<std::vector<int64_t>>();
  cfg.seed = cfg_json.at("seed").get<uint64_t>();
  auto model = build_classifier(cfg);
  read_module_state(archive, *model);
  model->eval();
  return model;
}

void save_extractor(const RoiUNet& model, const std::filesystem::path& path) {
  torch::serialize::OutputArchive archive;
  archive.write("kind", c10::IValue(std::string("roiex-extractor-v1")));
  json cfg{{"input_size", model->config().input_size},
           {"base_width", model->config().base_width},
           {"seed", model->config().seed}};
  archive.write("config_json", c10::IValue(cfg.dump()));
  write_module_state(archive, *model);
  archive.save_to(path.string());
}

RoiUNet load_extractor(const std::filesystem::path& path) {
  torch::serialize::InputArchive archive;
  archive.load_from(path.string());
  auto cfg_json = read_config_json(archive, "roiex-extractor-v1");
  UNetConfig cfg;
  cfg.input_size = cfg_json.at("input_size").get<int64_t>();
  cfg.base_width = cfg_json.at("base_width").get<int64_t>();
  cfg.seed = cfg_json.at("seed").get<uint64_t>();
  auto model = build_unet(cfg);
  read_module_state(archive, *model);
  model->eval();
  return model;
}

}  // namespace roiex
