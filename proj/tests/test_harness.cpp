#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include <nlohmann/json.hpp>

#include "imblab/errors.hpp"
#include "imblab/harness.hpp"
#include "imblab/io.hpp"
#include "imblab/svg.hpp"
#include "tiny_config.hpp"

using namespace imblab;

namespace {

std::string fresh_dir(const std::string& name) {
  std::filesystem::remove_all(name);
  ensure_dir(name);
  return name;
}

std::string json_without_timing(const std::string& text) {
  auto j = nlohmann::json::parse(text);
  j.erase("timing");
  return j.dump();
}

std::string csv_without_last_column(const std::string& text) {
  std::string out;
  for (auto& row : csv_parse(text)) {
    row.pop_back();
    for (size_t i = 0; i < row.size(); ++i) out += (i ? "," : "") + row[i];
    out += '\n';
  }
  return out;
}

}  // namespace

TEST_CASE("config digest is stable under field reordering") {
  const char* a = R"({"seed": 7, "dataset": {"num_scenes": 12, "height": 16, "width": 16,
    "num_classes": 2, "objects_per_scene": [1,2], "object_size": [5,7], "seed": 2121},
    "train_fraction": 0.75,
    "anchors": {"strides": [4], "scales": [1.5], "aspect_ratios": [1.0]},
    "detector": {"channels": [4,8], "conv_strides": [2,2]},
    "loss": {"variant": "ce", "guided": true, "optimal_bias": true},
    "schedule": {"iterations": 25, "batch_scenes": 2}})";
  const char* b = R"({"train_fraction": 0.75,
    "loss": {"optimal_bias": true, "variant": "ce", "guided": true},
    "detector": {"conv_strides": [2,2], "channels": [4,8]},
    "schedule": {"batch_scenes": 2, "iterations": 25},
    "anchors": {"aspect_ratios": [1.0], "strides": [4], "scales": [1.5]},
    "dataset": {"seed": 2121, "num_scenes": 12, "height": 16, "width": 16,
    "num_classes": 2, "object_size": [5,7], "objects_per_scene": [1,2]},
    "seed": 7})";
  CHECK(experiment_from_json_text(a).digest() == experiment_from_json_text(b).digest());
}

TEST_CASE("experiment config round-trips through its JSON file") {
  const auto cfg = tiny_experiment(3);
  save_experiment_config("tiny_config_roundtrip.json", cfg);
  const auto loaded = load_experiment_config("tiny_config_roundtrip.json");
  CHECK(loaded.digest() == cfg.digest());
  CHECK_THROWS_AS(load_experiment_config("not_there.json"), ConfigError);
  CHECK_THROWS_AS(experiment_from_json_text("{ not json"), ConfigError);
}

TEST_CASE("shipped imb_std config matches the built-in preset") {
  const auto from_file =
      load_experiment_config(std::string(IMBLAB_SOURCE_DIR) + "/configs/imb_std.json");
  CHECK(from_file.digest() == imb_std_preset().digest());
}

TEST_CASE("derived detector fields are resolved from the other blocks") {
  auto cfg = tiny_experiment();
  CHECK(cfg.detector.num_classes == 2);
  CHECK(cfg.detector.anchors_per_location == 1);
  CHECK(cfg.detector.input_height == 16);
  CHECK(cfg.detector.init_policy.kind == InitPolicyKind::optimal_bias);
  cfg.loss.optimal_bias = false;
  cfg.loss.init_pi = 0.02;
  resolve_experiment(cfg);
  CHECK(cfg.detector.init_policy.kind == InitPolicyKind::manual_pi);
  CHECK(cfg.detector.init_policy.pi == 0.02);
}

TEST_CASE("generate refuses to overwrite without force and is deterministic") {
  const auto cfg = tiny_experiment();
  const auto out = fresh_dir("harness_gen");
  HarnessOptions opts;
  opts.out_dir = out;
  CHECK(cmd_generate(cfg, opts) == kExitOk);
  const auto manifest1 = read_text_file(out + "/dataset/manifest.json");
  CHECK_THROWS_AS(cmd_generate(cfg, opts), DataError);
  opts.force = true;
  CHECK(cmd_generate(cfg, opts) == kExitOk);
  CHECK(read_text_file(out + "/dataset/manifest.json") == manifest1);
}

TEST_CASE("train requires a matching dataset") {
  const auto cfg = tiny_experiment();
  HarnessOptions opts;
  opts.out_dir = fresh_dir("harness_nodata");
  CHECK_THROWS_AS(cmd_train(cfg, opts), ConfigError);

  // dataset generated from a different block is rejected
  opts.force = true;
  auto other = cfg;
  other.dataset.seed = 4242;
  resolve_experiment(other);
  CHECK(cmd_generate(other, opts) == kExitOk);
  CHECK_THROWS_AS(cmd_train(cfg, opts), ConfigError);
}

TEST_CASE("train and eval emit deterministic artifacts") {
  const auto cfg = tiny_experiment();
  HarnessOptions opts;
  opts.out_dir = fresh_dir("harness_train");
  REQUIRE(cmd_generate(cfg, opts) == kExitOk);
  REQUIRE(cmd_train(cfg, opts) == kExitOk);

  const std::string run_dir = opts.out_dir + "/runs/" + run_dir_name(cfg);
  for (const char* file : {"run_record.csv", "run_record.json", "checkpoint.json",
                           "loss_curves.svg", "cls_loss.svg"})
    CHECK(file_exists(run_dir + "/" + std::string(file)));

  const auto csv1 = read_text_file(run_dir + "/run_record.csv");
  const auto ckpt1 = read_text_file(run_dir + "/checkpoint.json");
  REQUIRE(cmd_train(cfg, opts) == kExitOk);  // rerun overwrites the same run dir
  CHECK(read_text_file(run_dir + "/run_record.csv") == csv1);
  CHECK(read_text_file(run_dir + "/checkpoint.json") == ckpt1);

  const auto svg = read_text_file(run_dir + "/loss_curves.svg");
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("<polyline") != std::string::npos);
  CHECK(svg.find("L_reg") != std::string::npos);

  // eval emits report + sweep; reruns identical up to timing fields
  REQUIRE(cmd_eval(cfg, run_dir + "/checkpoint.json", opts) == kExitOk);
  const auto report1 = read_text_file(run_dir + "/eval_report.json");
  const auto sweep1 = read_text_file(run_dir + "/sweep.csv");
  REQUIRE(cmd_eval(cfg, run_dir + "/checkpoint.json", opts) == kExitOk);
  CHECK(json_without_timing(read_text_file(run_dir + "/eval_report.json")) ==
        json_without_timing(report1));
  CHECK(csv_without_last_column(read_text_file(run_dir + "/sweep.csv")) ==
        csv_without_last_column(sweep1));
  // one sweep row per fixed theta plus the adaptive row
  const auto sweep_rows = csv_parse(sweep1);
  CHECK(sweep_rows.size() == 1 + cfg.eval.sweep_thetas.size() + 1);
  CHECK(sweep_rows.back()[0] == "adaptive");

  CHECK_THROWS_AS(cmd_eval(cfg, run_dir + "/missing.json", opts), DataError);
}

TEST_CASE("strict mode surfaces divergence through the exit code") {
  auto cfg = tiny_experiment();
  cfg.loss = LossConfig{};
  cfg.loss.fixed_w = 1.0;
  cfg.schedule.learning_rate = 1e6;
  resolve_experiment(cfg);
  HarnessOptions opts;
  opts.out_dir = fresh_dir("harness_strict");
  REQUIRE(cmd_generate(cfg, opts) == kExitOk);
  opts.strict = true;
  CHECK(cmd_train(cfg, opts) == kExitDiverged);
  opts.strict = false;
  CHECK(cmd_train(cfg, opts) == kExitOk);  // partial artifacts, success exit
  const std::string run_dir = opts.out_dir + "/runs/" + run_dir_name(cfg);
  CHECK(read_text_file(run_dir + "/run_record.json").find("diverged") != std::string::npos);
}

TEST_CASE("grid: bad specs are rejected, tiny pi_w grid emits a parsable table") {
  auto cfg = tiny_experiment();
  cfg.schedule.iterations = 10;
  resolve_experiment(cfg);
  HarnessOptions opts;
  opts.out_dir = fresh_dir("harness_grid");
  opts.parallel = 2;

  CHECK_THROWS_AS(cmd_grid(cfg, "{}", opts), ConfigError);
  CHECK_THROWS_AS(cmd_grid(cfg, R"({"mode":"pi_w","pi":[],"w":[]})", opts), ConfigError);
  CHECK_THROWS_AS(cmd_grid(cfg, "not json", opts), ConfigError);

  REQUIRE(cmd_grid(cfg, R"({"mode":"pi_w","pi":["0.5","optimal"],"w":["1","guided"]})",
                   opts) == kExitOk);
  const auto table = csv_parse(read_text_file(opts.out_dir + "/grid/grid.csv"));
  REQUIRE(table.size() == 3);  // header + 2 pi rows
  CHECK(table[0] == CsvRow{"pi\\w", "1", "guided"});
  CHECK(table[1].size() == 3);
  // every cell is either a number or n/a
  for (size_t r = 1; r < table.size(); ++r)
    for (size_t c = 1; c < table[r].size(); ++c) {
      if (table[r][c] == "n/a") continue;
      CHECK_NOTHROW(parse_double(table[r][c]));
    }
}

TEST_CASE("grid ablation emits the six-cell table") {
  auto cfg = tiny_experiment();
  cfg.schedule.iterations = 8;
  resolve_experiment(cfg);
  HarnessOptions opts;
  opts.out_dir = fresh_dir("harness_ablation");
  opts.parallel = 2;
  REQUIRE(cmd_grid(cfg, R"({"mode":"ablation"})", opts) == kExitOk);
  const auto table = csv_parse(read_text_file(opts.out_dir + "/grid/ablation.csv"));
  REQUIRE(table.size() == 7);  // header + six cells
  CHECK(table[1][0] == "focal_baseline");
  CHECK(table[5][0] == "sampling_free");
  CHECK(table[6][0] == "sampling_free_focal");
}

TEST_CASE("analyze reports stats, optimal bias and the analytic table") {
  auto cfg = tiny_experiment();
  cfg.analyze_rows.push_back({"focal", 0.25, 2.0, 1.0, 1e-2, 1e3, 80.0});
  cfg.analyze_rows.push_back({"ce", 0.25, 0.0, 0.1, 1e-5, 1e3, 80.0});
  HarnessOptions opts;
  opts.out_dir = fresh_dir("harness_analyze");
  REQUIRE(cmd_generate(cfg, opts) == kExitOk);
  REQUIRE(cmd_analyze(cfg, opts) == kExitOk);
  const auto j = nlohmann::json::parse(read_text_file(opts.out_dir + "/analysis.json"));
  CHECK(j.at("optimal_pi").get<double>() > 0.0);
  CHECK(j.at("stats_ignore_included").at("n_total").get<int64_t>() >
        j.at("stats_ignore_excluded").at("n_total").get<int64_t>() - 1);
  const auto& table = j.at("initial_loss_table");
  REQUIRE(table.size() == 2);
  CHECK(table[0].at("value").get<double>() == doctest::Approx(1.19).epsilon(0.01));
  CHECK(table[1].at("value").get<double>() == doctest::Approx(1.23).epsilon(0.01));
}

TEST_CASE("svg plot output is well-formed for simple series") {
  const auto svg = svg_line_plot("t", "x", "y", {{"a", {{0, 1}, {1, 2}, {2, 0.5}}}});
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("</svg>") != std::string::npos);
  CHECK(svg.find("<polyline") != std::string::npos);
  // identical inputs, identical bytes
  CHECK(svg == svg_line_plot("t", "x", "y", {{"a", {{0, 1}, {1, 2}, {2, 0.5}}}}));
}
