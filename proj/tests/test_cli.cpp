#include "doctest_compat.hpp"
#include <torch/torch.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "roiex/cli_commands.hpp"
#include "roiex/util.hpp"
#include "test_helpers.hpp"

using namespace roiex;
using roiex_test::TempDir;
namespace fs = std::filesystem;

namespace {

RunConfig desk_config(const fs::path& root) {
  RunConfig c;
  c.seed = 7;
  c.data_root = (root / "data").string();
  c.out_dir = (root / "out").string();
  c.image_size = 32;
  c.synth_n = 12;
  c.synth_size = 32;
  c.classifier_widths = {4, 8, 8, 8, 8};
  c.classifier_epochs = 2;
  c.classifier_batch = 4;
  c.unet_base_width = 2;
  c.extractor_epochs = 2;
  c.extractor_lr0 = 1e-3;
  c.n_max = 64;
  c.k_max = 128;
  return c;
}

size_t count_pngs(const fs::path& dir) {
  size_t n = 0;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".png") ++n;
  return n;
}

}  // namespace

TEST_SUITE_BEGIN("cli");

TEST_CASE("synth writes the dataset layout deterministically") {
  TempDir tmp("synth");
  auto cfg = desk_config(tmp.path());
  cmd_synth(cfg);

  const fs::path root(cfg.data_root);
  CHECK(fs::is_directory(root / "train" / "foreground"));
  CHECK(fs::is_directory(root / "train" / "background"));
  CHECK(fs::is_directory(root / "train" / "masks"));
  CHECK(fs::is_directory(root / "test" / "masks"));
  const size_t train_count =
      count_pngs(root / "train" / "foreground") + count_pngs(root / "train" / "background");
  const size_t test_count =
      count_pngs(root / "test" / "foreground") + count_pngs(root / "test" / "background");
  CHECK(train_count == 9);  // floor(12 * 0.8) = 9
  CHECK(test_count == 3);
  CHECK(fs::exists(fs::path(cfg.out_dir) / "synth_config.json"));

  SUBCASE("rerun without --force is refused; with --force reproduces bytes") {
    CHECK_THROWS_WITH_AS(cmd_synth(cfg), doctest::Contains("--force"), std::runtime_error);
    fs::path sample_png;
    for (const auto& e : fs::recursive_directory_iterator(root))
      if (e.path().extension() == ".png") { sample_png = e.path(); break; }
    auto before = read_text_file(sample_png);
    auto cfg2 = cfg;
    cfg2.force = true;
    cmd_synth(cfg2);
    CHECK(read_text_file(sample_png) == before);
  }

  SUBCASE("n must be positive") {
    auto bad = cfg;
    bad.force = true;
    bad.synth_n = 0;
    CHECK_THROWS_AS(cmd_synth(bad), std::invalid_argument);
  }
}

TEST_CASE("stages demand their upstream artifacts by name") {
  TempDir tmp("stages");
  auto cfg = desk_config(tmp.path());
  cmd_synth(cfg);
  CHECK_THROWS_WITH_AS(cmd_gen_pseudo(cfg), doctest::Contains("train-classifier"),
                       std::runtime_error);
  CHECK_THROWS_WITH_AS(cmd_train_extractor(cfg), doctest::Contains("gen-pseudo"),
                       std::runtime_error);
  CHECK_THROWS_WITH_AS(cmd_evaluate(cfg), doctest::Contains("train-extractor"),
                       std::runtime_error);
  CHECK_THROWS_WITH_AS(cmd_plot(cfg), doctest::Contains("evaluate"), std::runtime_error);
}

TEST_CASE("full desk-scale pipeline emits every artifact") {
  TempDir tmp("pipeline");
  auto cfg = desk_config(tmp.path());
  cmd_synth(cfg);
  cmd_train_classifier(cfg);
  const fs::path out(cfg.out_dir);
  CHECK(fs::exists(out / "checkpoints" / "classifier.pt"));
  CHECK(fs::exists(out / "checkpoints" / "classifier_loss.csv"));
  {
    auto csv = read_text_file(out / "checkpoints" / "classifier_loss.csv");
    CHECK(csv.rfind("epoch,loss\n", 0) == 0);
  }

  cmd_gen_pseudo(cfg);
  CHECK(count_pngs(out / "pseudo") == 9);  // one per training sample

  cmd_train_extractor(cfg);
  CHECK(fs::exists(out / "checkpoints" / "extractor.pt"));
  {
    auto csv = read_text_file(out / "checkpoints" / "extractor_log.csv");
    CHECK(csv.rfind("epoch,lr,ce,lq1,lq2,total\n", 0) == 0);
  }

  cmd_evaluate(cfg);
  CHECK(fs::exists(out / "reports" / "report.json"));
  auto report = read_text_file(out / "reports" / "report.json");
  for (const char* key : {"\"ac\"", "\"auc\"", "\"precision\"", "\"recall\"", "\"f_measure\""})
    CHECK(report.find(key) != std::string::npos);
  CHECK(count_pngs(out / "pred" / "mask") == 3);
  CHECK(count_pngs(out / "pred" / "scores") == 3);
  CHECK(count_pngs(out / "pred" / "otsu") == 3);

  cmd_plot(cfg);
  CHECK(fs::exists(out / "plots" / "roc.png"));
  CHECK(fs::exists(out / "plots" / "pr.png"));

  SUBCASE("stage rerun reproduces byte-identical outputs") {
    auto loss_csv = read_text_file(out / "checkpoints" / "classifier_loss.csv");
    auto ext_csv = read_text_file(out / "checkpoints" / "extractor_log.csv");
    fs::path pseudo_png;
    for (const auto& e : fs::directory_iterator(out / "pseudo"))
      if (e.path().extension() == ".png") { pseudo_png = e.path(); break; }
    auto pseudo_bytes = read_text_file(pseudo_png);
    auto report_bytes = read_text_file(out / "reports" / "report.json");

    cmd_train_classifier(cfg);
    cmd_gen_pseudo(cfg);
    cmd_train_extractor(cfg);
    cmd_evaluate(cfg);
    CHECK(read_text_file(out / "checkpoints" / "classifier_loss.csv") == loss_csv);
    CHECK(read_text_file(out / "checkpoints" / "extractor_log.csv") == ext_csv);
    CHECK(read_text_file(pseudo_png) == pseudo_bytes);
    CHECK(read_text_file(out / "reports" / "report.json") == report_bytes);
  }

  SUBCASE("no-contrast ablation produces a distinct report") {
    auto ab = cfg;
    ab.out_dir = (tmp.path() / "out_nc").string();
    ab.contrastive = false;
    cmd_train_classifier(ab);
    cmd_gen_pseudo(ab);
    cmd_train_extractor(ab);
    cmd_evaluate(ab);
    const fs::path nc(ab.out_dir);
    CHECK(fs::exists(nc / "reports" / "report.json"));
    auto log = read_text_file(nc / "checkpoints" / "extractor_log.csv");
    CHECK(log != read_text_file(out / "checkpoints" / "extractor_log.csv"));
    // total column equals the ce column when contrastive learning is off
    std::istringstream lines(log);
    std::string line;
    std::getline(lines, line);  // header
    while (std::getline(lines, line)) {
      std::vector<std::string> cells;
      std::istringstream ls(line);
      std::string cell;
      while (std::getline(ls, cell, ',')) cells.push_back(cell);
      REQUIRE(cells.size() == 6);
      CHECK(cells[2] == cells[5]);  // ce == total, exactly
      CHECK(cells[3] == "0");
      CHECK(cells[4] == "0");
    }
  }
}

TEST_CASE("config file values load and taps are validated") {
  TempDir tmp("config");
  auto path = tmp.path() / "cfg.json";
  write_text_file(path, R"({
    "seed": 99,
    "out": "somewhere",
    "data": {"root": "d", "image_size": 64, "split_ratio": 0.75},
    "extractor": {"taps": ["up2", "up3"], "contrastive": false, "tau": 0.2}
  })");
  auto cfg = load_run_config(path);
  CHECK(cfg.seed == 99);
  CHECK(cfg.out_dir == "somewhere");
  CHECK(cfg.image_size == 64);
  CHECK(cfg.split_ratio == 0.75);
  CHECK(cfg.taps == std::vector<std::string>{"up2", "up3"});
  CHECK(cfg.contrastive == false);
  CHECK(cfg.tau == 0.2);
  CHECK(cfg.classifier_epochs == 50);  // untouched defaults
  CHECK(cfg.extractor_lr0 == 5e-5);

  // invalid tap names are rejected before any heavy work
  auto bad = desk_config(tmp.path());
  bad.taps = {"up9"};
  CHECK_THROWS_AS(cmd_train_extractor(bad), std::invalid_argument);
}

#ifdef ROIEX_BIN
TEST_CASE("binary smoke: synth subcommand and usage errors") {
  TempDir tmp("bin");
  const std::string bin = ROIEX_BIN;
  const std::string data = (tmp.path() / "d").string();
  const std::string out = (tmp.path() / "o").string();
  std::string ok_cmd = bin + " synth --seed 3 --n 4 --size 32 --data " + data + " --out " + out +
                       " > /dev/null 2>&1";
  CHECK(std::system(ok_cmd.c_str()) == 0);
  CHECK(fs::is_directory(fs::path(data) / "train"));
  std::string bad_cmd = bin + " synth --n 0 --data " + data + " --out " + out + " > /dev/null 2>&1";
  CHECK(std::system(bad_cmd.c_str()) != 0);
  std::string noarg_cmd = bin + " > /dev/null 2>&1";
  CHECK(std::system(noarg_cmd.c_str()) != 0);
}
#endif

TEST_SUITE_END();
