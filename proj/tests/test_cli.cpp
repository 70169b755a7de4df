#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#include "json.hpp"

#include "dacount/config.hpp"
#include "dacount/experiment.hpp"
#include "support/tmpdir.hpp"

using namespace dacount;
using dacount::testing::TmpDir;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  REQUIRE(is.good());
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

json read_json(const fs::path& p) {
  std::ifstream is(p);
  REQUIRE(is.good());
  return json::parse(is);
}

ExperimentConfig smoke_config(const std::string& out_root) {
  ExperimentConfig cfg;
  cfg.name = "smoke";
  cfg.out_root = out_root;
  cfg.toy_n = 12;
  cfg.toy_h = 48;
  cfg.toy_w = 48;
  cfg.train.counter = CounterConfig::preset("toy");
  cfg.train.fdisc.widths = {4, 4, 4};
  cfg.train.mdisc.widths = {4, 4, 4};
  cfg.train.lr_g = 1e-4;
  cfg.train.lr_d = 1e-4;
  cfg.train.batch_source = 2;
  cfg.train.batch_target = 2;
  cfg.train.max_steps = 6;
  cfg.train.eval_every = 3;
  cfg.train.patience = 2;
  cfg.train.val_fraction = 0.25;
  cfg.train.sigma = 2.0;
  cfg.train.seed = 91;
  cfg.refiner.widths = {4, 8, 8};
  return cfg;
}

}  // namespace

TEST_CASE("experiment config round-trips through the ini file") {
  TmpDir tmp("cli-config");
  ExperimentConfig cfg = smoke_config("runs");
  cfg.source_root = "src";
  cfg.target_root = "tgt";
  cfg.deterministic = false;
  cfg.train_mode = "spr_supervised";
  cfg.train.weights = LossWeights{2e-3, 0.5e-3, 0.25};
  cfg.train.pixel_reduction = PixelReduction::Sum;
  cfg.train.counter.pad_inputs = true;
  cfg.gap.brightness = 0.3;
  cfg.gap.invert_blobs = false;
  cfg.filter = FilterRule::preset("shtb");
  cfg.filter->count_hi = 555;
  cfg.refiner.kernels = {5, 5, 3, 5, 5};

  const std::string path = tmp / "config.ini";
  write_experiment_config(path, cfg);
  const ExperimentConfig back = load_experiment_config(path);
  CHECK(back == cfg);
  CHECK(config_hash(back) == config_hash(cfg));

  ExperimentConfig other = cfg;
  other.train.seed = 92;
  CHECK(config_hash(other) != config_hash(cfg));
  ExperimentConfig unfiltered = cfg;
  unfiltered.filter.reset();
  CHECK(config_hash(unfiltered) != config_hash(cfg));
  CHECK_FALSE(unfiltered == cfg);
}

TEST_CASE("config loading rejects unknown modes and bad files") {
  TmpDir tmp("cli-badcfg");
  ExperimentConfig cfg = smoke_config("runs");
  cfg.train_mode = "osmosis";
  const std::string path = tmp / "bad.ini";
  // the writer does not validate; the loader must
  write_experiment_config(path, cfg);
  CHECK_THROWS_AS(load_experiment_config(path), std::invalid_argument);
  CHECK_THROWS_AS(load_experiment_config(tmp / "absent.ini"), std::runtime_error);
}

TEST_CASE("experiment directories are never silently reused") {
  TmpDir tmp("cli-dirs");
  ExperimentConfig cfg = smoke_config(tmp / "runs");
  const std::string dir = make_experiment_dir(cfg, false, tmp / "exp");
  CHECK(fs::exists(fs::path(dir) / "config.ini"));
  std::ofstream(fs::path(dir) / "marker.txt") << "x\n";
  CHECK_THROWS_AS(make_experiment_dir(cfg, false, tmp / "exp"), std::invalid_argument);
  CHECK_NOTHROW(make_experiment_dir(cfg, true, tmp / "exp"));
  // stamped form creates fresh directories under out_root
  const std::string stamped = make_experiment_dir(cfg, false);
  CHECK(fs::exists(fs::path(stamped) / "config.ini"));
  CHECK(stamped.find(config_hash(cfg).substr(0, 8)) != std::string::npos);
}

TEST_CASE("command flag validation maps to the usage exit code") {
  CliOptions none;
  CHECK(cmd_train(none) == kExitUsage);
  CHECK(cmd_gen_toy(none) == kExitUsage);
  CHECK(cmd_evaluate(none) == kExitUsage);

  TmpDir tmp("cli-usage");
  ExperimentConfig cfg = smoke_config(tmp / "runs");
  const std::string path = tmp / "config.ini";
  write_experiment_config(path, cfg);

  CliOptions bad_n;
  bad_n.config_path = path;
  bad_n.out_dir = tmp / "g0";
  bad_n.toy_n = 0;
  CHECK(cmd_gen_toy(bad_n) == kExitUsage);

  ExperimentConfig adapt_cfg = cfg;
  adapt_cfg.train_mode = "adapt";
  const std::string apath = tmp / "adapt.ini";
  write_experiment_config(apath, adapt_cfg);
  CliOptions wrong_mode;
  wrong_mode.config_path = apath;
  wrong_mode.out_dir = tmp / "t0";
  CHECK(cmd_train(wrong_mode) == kExitUsage);

  CliOptions no_counter;
  no_counter.config_path = path;
  no_counter.out_dir = tmp / "e0";
  CHECK(cmd_evaluate(no_counter) == kExitUsage);

  // missing data root -> data error, not usage
  CliOptions no_data;
  no_data.config_path = path;
  no_data.out_dir = tmp / "t1";
  CHECK(cmd_train(no_data) == kExitUsage);  // source_root empty in config
  ExperimentConfig ghost = cfg;
  ghost.source_root = tmp / "missing-root";
  const std::string gpath = tmp / "ghost.ini";
  write_experiment_config(gpath, ghost);
  CliOptions bad_root;
  bad_root.config_path = gpath;
  bad_root.out_dir = tmp / "t2";
  CHECK(cmd_train(bad_root) == kExitData);
}

TEST_CASE("gen-toy is reproducible across output directories") {
  TmpDir tmp("cli-gentoy");
  ExperimentConfig cfg = smoke_config(tmp / "runs");
  cfg.toy_n = 3;
  const std::string path = tmp / "config.ini";
  write_experiment_config(path, cfg);

  CliOptions a;
  a.config_path = path;
  a.out_dir = tmp / "da";
  a.seed = 2024;
  REQUIRE(cmd_gen_toy(a) == kExitOk);
  CliOptions b = a;
  b.out_dir = tmp / "db";
  REQUIRE(cmd_gen_toy(b) == kExitOk);

  for (const char* rel : {"config.ini", "source/images/img0000.png", "source/ann/img0000.json",
                          "target/images/img0002.png", "target/ann/img0002.json"}) {
    CAPTURE(rel);
    CHECK(slurp(fs::path(tmp / "da") / rel) == slurp(fs::path(tmp / "db") / rel));
  }
  int n_imgs = 0;
  for (const auto& e : fs::directory_iterator(fs::path(tmp / "da") / "source" / "images"))
    n_imgs += e.path().extension() == ".png";
  CHECK(n_imgs == 3);
  // the echoed config pins the resolved seed and relative data roots
  const ExperimentConfig echoed = load_experiment_config((fs::path(tmp / "da") / "config.ini").string());
  CHECK(echoed.train.seed == 2024);
  CHECK(echoed.source_root == "source");
  CHECK(echoed.target_root == "target");
}

TEST_CASE("deterministic-mode toggle controls seed resolution") {
  TmpDir tmp("cli-seed");
  ExperimentConfig cfg = smoke_config(tmp / "runs");
  cfg.toy_n = 1;
  cfg.toy_h = cfg.toy_w = 32;
  const std::string path = tmp / "config.ini";
  write_experiment_config(path, cfg);

  setenv("DACOUNT_DETERMINISTIC", "0", 1);
  CliOptions a;
  a.config_path = path;
  a.out_dir = tmp / "ea";
  REQUIRE(cmd_gen_toy(a) == kExitOk);
  CliOptions b = a;
  b.out_dir = tmp / "eb";
  REQUIRE(cmd_gen_toy(b) == kExitOk);
  const uint64_t sa = load_experiment_config((fs::path(tmp / "ea") / "config.ini").string()).train.seed;
  const uint64_t sb = load_experiment_config((fs::path(tmp / "eb") / "config.ini").string()).train.seed;
  CHECK(sa != sb);  // entropy-derived seeds

  CliOptions c = a;
  c.out_dir = tmp / "ec";
  c.seed = 7;  // explicit seed wins over the environment toggle
  REQUIRE(cmd_gen_toy(c) == kExitOk);
  const ExperimentConfig ec = load_experiment_config((fs::path(tmp / "ec") / "config.ini").string());
  CHECK(ec.train.seed == 7);
  CHECK(ec.deterministic);
  unsetenv("DACOUNT_DETERMINISTIC");

  CliOptions d = a;
  d.out_dir = tmp / "ed";
  REQUIRE(cmd_gen_toy(d) == kExitOk);
  CHECK(load_experiment_config((fs::path(tmp / "ed") / "config.ini").string()).train.seed ==
        cfg.train.seed);
}

TEST_CASE("the full command pipeline produces every artifact") {
  TmpDir tmp("cli-smoke");
  ExperimentConfig cfg = smoke_config(tmp / "runs");
  const std::string path = tmp / "config.ini";
  write_experiment_config(path, cfg);

  CliOptions gen;
  gen.config_path = path;
  gen.out_dir = tmp / "data";
  REQUIRE(cmd_gen_toy(gen) == kExitOk);
  const std::string data_cfg = (fs::path(tmp / "data") / "config.ini").string();

  // supervised training from the echoed config (relative roots resolve
  // against the config file's directory)
  CliOptions train;
  train.config_path = data_cfg;
  train.out_dir = tmp / "run_train";
  REQUIRE(cmd_train(train) == kExitOk);
  const fs::path tdir(tmp / "run_train");
  for (const char* f : {"config.ini", "train_log.csv", "val_log.csv", "best.ckpt", "last.ckpt",
                        "loss_curves.png", "eval_source.json", "eval_source.csv",
                        "maps_source.png", "report.json"}) {
    CAPTURE(f);
    CHECK(fs::exists(tdir / f));
  }
  const json treport = read_json(tdir / "report.json");
  CHECK(treport.at("mode") == "supervised");
  CHECK(treport.at("seed").get<uint64_t>() == 91);
  CHECK(treport.at("steps_run").get<int>() >= 1);
  CHECK(treport.at("eval_source").at("n_samples").get<int>() == 12);
  CHECK(treport.at("eval_source").at("mae").get<double>() >= 0.0);
  CHECK(!treport.contains("eval_target"));

  // adversarial adaptation exercises the full loss surface
  CliOptions adapt = train;
  adapt.out_dir = tmp / "run_adapt";
  REQUIRE(cmd_adapt(adapt) == kExitOk);
  const fs::path adir(tmp / "run_adapt");
  for (const char* f : {"eval_target.json", "eval_target.csv", "maps_target.png", "report.json"}) {
    CAPTURE(f);
    CHECK(fs::exists(adir / f));
  }
  const json areport = read_json(adir / "report.json");
  CHECK(areport.at("mode") == "adapt");
  CHECK(areport.at("eval_target").at("n_samples").get<int>() == 12);

  // refiner training on top of the adapted counter
  CliOptions rt;
  rt.config_path = data_cfg;
  rt.out_dir = tmp / "run_rt";
  rt.counter_ckpt = (adir / "best.ckpt").string();
  REQUIRE(cmd_refine_train(rt) == kExitOk);
  const fs::path rtdir(tmp / "run_rt");
  for (const char* f : {"refiner.ckpt", "refine_report.json", "refine_log.csv",
                        "refine_val_log.csv", "maps_refined.png"}) {
    CAPTURE(f);
    CHECK(fs::exists(rtdir / f));
  }
  const json rreport = read_json(rtdir / "refine_report.json");
  CHECK(rreport.at("test_mse").get<double>() >= 0.0);
  CHECK(rreport.at("n_refined").get<int>() == 12);

  // refined evaluation on the target domain
  CliOptions refine = rt;
  refine.out_dir = tmp / "run_refine";
  refine.refiner_ckpt = (rtdir / "refiner.ckpt").string();
  REQUIRE(cmd_refine(refine) == kExitOk);
  CHECK(fs::exists(fs::path(tmp / "run_refine") / "eval_refined.json"));
  CHECK(fs::exists(fs::path(tmp / "run_refine") / "maps_refined.png"));

  // plain evaluation with an explicit data root
  CliOptions ev;
  ev.config_path = data_cfg;
  ev.out_dir = tmp / "run_eval";
  ev.counter_ckpt = (adir / "best.ckpt").string();
  ev.data_root = (fs::path(tmp / "data") / "source").string();
  REQUIRE(cmd_evaluate(ev) == kExitOk);
  const json eval_rep = read_json(fs::path(tmp / "run_eval") / "eval.json");
  CHECK(eval_rep.at("n_samples").get<int>() == 12);
  CHECK(fs::exists(fs::path(tmp / "run_eval") / "maps_eval.png"));

  // checkpoint loaders reject the wrong archive kind
  CHECK_THROWS_AS(load_counter_checkpoint((rtdir / "refiner.ckpt").string()), std::runtime_error);
  CHECK_THROWS_AS(load_refiner_checkpoint((adir / "best.ckpt").string()), std::runtime_error);
  CHECK(load_counter_checkpoint((adir / "best.ckpt").string()) != nullptr);
  CHECK(load_refiner_checkpoint((rtdir / "refiner.ckpt").string()) != nullptr);
}

TEST_CASE("zero-weight adaptation reports the same source evaluation as training") {
  TmpDir tmp("cli-zerow");
  ExperimentConfig cfg = smoke_config(tmp / "runs");
  cfg.toy_n = 8;
  cfg.toy_h = cfg.toy_w = 32;
  cfg.train.weights = LossWeights{0.0, 0.0, 0.0};
  cfg.train.max_steps = 4;
  cfg.train.eval_every = 2;
  const std::string path = tmp / "config.ini";
  write_experiment_config(path, cfg);

  CliOptions gen;
  gen.config_path = path;
  gen.out_dir = tmp / "data";
  REQUIRE(cmd_gen_toy(gen) == kExitOk);
  const std::string data_cfg = (fs::path(tmp / "data") / "config.ini").string();

  CliOptions train;
  train.config_path = data_cfg;
  train.out_dir = tmp / "sup";
  REQUIRE(cmd_train(train) == kExitOk);
  CliOptions adapt = train;
  adapt.out_dir = tmp / "ada";
  REQUIRE(cmd_adapt(adapt) == kExitOk);

  const json s = read_json(fs::path(tmp / "sup") / "report.json");
  const json a = read_json(fs::path(tmp / "ada") / "report.json");
  CHECK(s.at("eval_source").at("mae").get<double>() ==
        a.at("eval_source").at("mae").get<double>());
  CHECK(s.at("eval_source").at("mse").get<double>() ==
        a.at("eval_source").at("mse").get<double>());
  CHECK(s.at("best_val_cnt").get<double>() == a.at("best_val_cnt").get<double>());
}
