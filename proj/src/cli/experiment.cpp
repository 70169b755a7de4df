#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <stdexcept>

#include "dacount/experiment.hpp"
#include "dacount/losses.hpp"
#include "dacount/metrics.hpp"
#include "dacount/plots.hpp"
#include "dacount/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace dacount {

namespace {

int run_command(const std::function<void()>& body) {
  try {
    body();
    return kExitOk;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
}

// Relative dataset roots resolve against the cwd first, then against the
// directory holding the config file (so a gen-toy config.ini works from
// anywhere).
std::string resolve_root(const std::string& root, const std::string& config_path) {
  if (root.empty()) return root;
  const fs::path p(root);
  if (p.is_absolute() || fs::exists(p) || config_path.empty()) return root;
  const fs::path q = fs::path(config_path).parent_path() / p;
  return fs::exists(q) ? q.string() : root;
}

ExperimentConfig resolve_config(const CliOptions& opt) {
  if (opt.config_path.empty()) throw std::invalid_argument("missing required --config <file>");
  ExperimentConfig cfg = load_experiment_config(opt.config_path);

  bool deterministic = cfg.deterministic;
  if (const char* env = std::getenv("DACOUNT_DETERMINISTIC")) {
    const std::string v(env);
    deterministic = !(v == "0" || v == "false" || v == "off");
  }
  if (opt.seed) {
    cfg.train.seed = *opt.seed;
    deterministic = true;
  } else if (!deterministic) {
    std::random_device rd;
    cfg.train.seed = (static_cast<uint64_t>(rd()) << 32) | rd();
  }
  cfg.deterministic = deterministic;

  cfg.source_root = resolve_root(cfg.source_root, opt.config_path);
  cfg.target_root = resolve_root(cfg.target_root, opt.config_path);
  cfg.train.validate();
  return cfg;
}

Dataset load_required(const ExperimentConfig& cfg, const std::string& root, const char* which,
                      bool is_source) {
  if (root.empty())
    throw std::invalid_argument(std::string(which) + " is required but empty in the config");
  Dataset ds = load_dataset(root);
  if (is_source && cfg.filter) {
    const int before = ds.size();
    ds = apply_filter(ds, *cfg.filter);
    if (ds.empty())
      throw std::runtime_error("scene filter rejected all " + std::to_string(before) +
                               " samples under '" + root + "'");
  }
  return ds;
}

void write_json_file(const fs::path& path, const json& j) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write '" + path.string() + "'");
  os << j.dump(2) << '\n';
}

void write_eval_files(const fs::path& dir, const std::string& stem, const EvalReport& rep) {
  write_json_file(dir / (stem + ".json"), rep.to_json());
  std::ofstream csv(dir / (stem + ".csv"));
  if (!csv) throw std::runtime_error("cannot write '" + (dir / (stem + ".csv")).string() + "'");
  rep.write_csv(csv);
}

// Grid rows for the map plots: ground truth | prediction [| refined],
// one row per sample, all at image resolution.
std::vector<std::vector<Tensor>> map_rows(CounterNet& g, MapRefiner* r, const Dataset& ds,
                                          double sigma, int max_rows) {
  std::vector<std::vector<Tensor>> rows;
  const double out_scale = g.config().out_scale();
  const int n = std::min(max_rows, ds.size());
  for (int i = 0; i < n; ++i) {
    const Sample& s = ds.samples[static_cast<size_t>(i)];
    const int h = s.image.dim(1), w = s.image.dim(2);
    Tape t;
    TapBundle tb = g.forward(t, s.image.reshaped({1, 1, h, w}), /*frozen=*/true);
    Var full = semantic_reshape_to(t, tb.density, out_scale, 1.0, h, w);
    Tensor coarse = t.val(full);
    coarse.clamp_min_(0.0);
    std::vector<Tensor> row;
    row.push_back(density_from_points(s.ann, h, w, sigma, 1.0).grid);
    row.push_back(coarse.reshaped({h, w}));
    if (r) {
      Tensor refined = t.val(r->forward(t, full, /*frozen=*/true));
      refined.clamp_min_(0.0);
      row.push_back(refined.reshaped({h, w}));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

// Coarse counter predictions at image resolution, one (H,W) map per sample.
std::vector<Tensor> coarse_maps(CounterNet& g, const Dataset& ds) {
  std::vector<Tensor> maps;
  maps.reserve(ds.samples.size());
  const double out_scale = g.config().out_scale();
  for (const auto& s : ds.samples) {
    const int h = s.image.dim(1), w = s.image.dim(2);
    Tape t;
    TapBundle tb = g.forward(t, s.image.reshaped({1, 1, h, w}), /*frozen=*/true);
    maps.push_back(t.val(semantic_reshape_to(t, tb.density, out_scale, 1.0, h, w))
                       .reshaped({h, w}));
  }
  return maps;
}

std::shared_ptr<CounterNet> require_counter(const CliOptions& opt) {
  if (opt.counter_ckpt.empty())
    throw std::invalid_argument("missing required --counter <checkpoint>");
  return load_counter_checkpoint(opt.counter_ckpt);
}

json train_report(const ExperimentConfig& cfg, const TrainState& st) {
  json r;
  r["mode"] = to_string(st.mode);
  r["seed"] = cfg.train.seed;
  r["steps_run"] = st.steps_run;
  r["best_step"] = st.best_step;
  r["best_val_cnt"] = st.best_val_cnt;
  r["warnings"] = st.warnings;
  json vh = json::array();
  for (const auto& [s, v] : st.val_history) vh.push_back({s, v});
  r["val_history"] = vh;
  return r;
}

void run_training_command(const CliOptions& opt, bool adapt) {
  ExperimentConfig cfg = resolve_config(opt);
  const TrainMode mode = adapt ? TrainMode::Adapt : train_mode_from_string(cfg.train_mode);
  if (!adapt && mode == TrainMode::Adapt)
    throw std::invalid_argument("config sets train.mode = adapt; use the adapt command");

  Dataset src = load_required(cfg, cfg.source_root, "data.source_root", /*is_source=*/true);
  Dataset tgt;
  if (adapt) tgt = load_required(cfg, cfg.target_root, "data.target_root", /*is_source=*/false);

  const fs::path dir = make_experiment_dir(cfg, opt.force, opt.out_dir);
  TrainState st = adapt ? adapt_train(src, tgt, cfg.train, dir.string())
                        : (mode == TrainMode::SprSupervised
                               ? spr_supervised_train(src, cfg.train, dir.string())
                               : supervised_train(src, cfg.train, dir.string()));

  plot_loss_curves(st.log, (dir / "loss_curves.png").string());
  json report = train_report(cfg, st);

  const EvalConfig ec{cfg.train.sigma};
  const EvalReport es = evaluate(*st.counter, src, nullptr, ec);
  write_eval_files(dir, "eval_source", es);
  report["eval_source"] = es.to_json();
  plot_map_grid(map_rows(*st.counter, nullptr, src, cfg.train.sigma, 4),
                (dir / "maps_source.png").string());
  if (adapt) {
    const EvalReport et = evaluate(*st.counter, tgt, nullptr, ec);
    write_eval_files(dir, "eval_target", et);
    report["eval_target"] = et.to_json();
    plot_map_grid(map_rows(*st.counter, nullptr, tgt, cfg.train.sigma, 4),
                  (dir / "maps_target.png").string());
  }
  write_json_file(dir / "report.json", report);
  std::cout << "experiment dir: " << dir.string() << '\n';
}

}  // namespace

std::shared_ptr<CounterNet> load_counter_checkpoint(const std::string& path) {
  const Checkpoint c = load_checkpoint(path);
  TrainConfig cfg;
  try {
    cfg = c.config.get<TrainConfig>();
  } catch (const json::exception& e) {
    throw std::runtime_error("'" + path + "' is not a counter checkpoint: " + e.what());
  }
  auto net = std::make_shared<CounterNet>(cfg.counter, RngStream(cfg.seed, "g_init"));
  c.load_module("g", *net);
  return net;
}

std::shared_ptr<MapRefiner> load_refiner_checkpoint(const std::string& path) {
  const Checkpoint c = load_checkpoint(path);
  RefinerConfig cfg;
  try {
    cfg = c.config.at("refiner").get<RefinerConfig>();
  } catch (const json::exception& e) {
    throw std::runtime_error("'" + path + "' is not a refiner checkpoint: " + e.what());
  }
  auto net = std::make_shared<MapRefiner>(cfg, RngStream(0, "r_init"));
  c.load_module("r", *net);
  return net;
}

void save_refiner_checkpoint(const std::string& path, MapRefiner& refiner, int best_step,
                             double test_mse) {
  Checkpoint c;
  c.config = json{{"refiner", refiner.config()}};
  c.step = best_step;
  c.extra["test_mse"] = test_mse;
  c.store_module("r", refiner);
  save_checkpoint(path, c);
}

int cmd_gen_toy(const CliOptions& opt) {
  return run_command([&] {
    ExperimentConfig cfg = resolve_config(opt);
    if (opt.toy_n) cfg.toy_n = *opt.toy_n;
    if (cfg.toy_n < 1)
      throw std::invalid_argument("gen-toy: toy.n_images must be >= 1, got " +
                                  std::to_string(cfg.toy_n));
    cfg.source_root = "source";  // resolved relative to the echoed config.ini
    cfg.target_root = "target";
    const fs::path dir = make_experiment_dir(cfg, opt.force, opt.out_dir);
    auto [src, tgt] = gen_toy_domains(cfg.train.seed, cfg.toy_n, cfg.toy_h, cfg.toy_w, cfg.gap);
    save_dataset((dir / "source").string(), src);
    save_dataset((dir / "target").string(), tgt);
    std::cout << "experiment dir: " << dir.string() << '\n';
  });
}

int cmd_train(const CliOptions& opt) {
  return run_command([&] { run_training_command(opt, /*adapt=*/false); });
}

int cmd_adapt(const CliOptions& opt) {
  return run_command([&] { run_training_command(opt, /*adapt=*/true); });
}

int cmd_refine_train(const CliOptions& opt) {
  return run_command([&] {
    ExperimentConfig cfg = resolve_config(opt);
    auto counter = require_counter(opt);
    Dataset src = load_required(cfg, cfg.source_root, "data.source_root", /*is_source=*/true);
    Dataset tgt;
    if (!cfg.target_root.empty()) tgt = load_dataset(cfg.target_root);

    const fs::path dir = make_experiment_dir(cfg, opt.force, opt.out_dir);
    std::vector<Tensor> tgt_coarse = tgt.empty() ? std::vector<Tensor>{}
                                                 : coarse_maps(*counter, tgt);
    RefinerPipelineResult res =
        refiner_pipeline(src, src, *counter, tgt_coarse, cfg.train, cfg.refiner, dir.string());
    save_refiner_checkpoint((dir / "refiner.ckpt").string(), *res.refiner, res.best_step,
                            res.test_mse);

    json report{{"test_mse", res.test_mse},
                {"best_step", res.best_step},
                {"n_refined", res.refined_target_maps.size()}};
    json vh = json::array();
    for (const auto& [s, v] : res.val_history) vh.push_back({s, v});
    report["val_history"] = vh;
    write_json_file(dir / "refine_report.json", report);

    if (!tgt.empty()) {
      std::vector<std::vector<Tensor>> rows;
      const double sigma = cfg.train.sigma;
      for (int i = 0; i < std::min(4, tgt.size()); ++i) {
        const Sample& s = tgt.samples[static_cast<size_t>(i)];
        rows.push_back({density_from_points(s.ann, s.image.dim(1), s.image.dim(2), sigma, 1.0).grid,
                        tgt_coarse[static_cast<size_t>(i)],
                        res.refined_target_maps[static_cast<size_t>(i)]});
      }
      plot_map_grid(rows, (dir / "maps_refined.png").string());
    }
    std::cout << "experiment dir: " << dir.string() << '\n';
  });
}

int cmd_refine(const CliOptions& opt) {
  return run_command([&] {
    ExperimentConfig cfg = resolve_config(opt);
    auto counter = require_counter(opt);
    if (opt.refiner_ckpt.empty())
      throw std::invalid_argument("missing required --refiner <checkpoint>");
    auto refiner = load_refiner_checkpoint(opt.refiner_ckpt);

    const std::string root = !opt.data_root.empty()
                                 ? opt.data_root
                                 : (!cfg.target_root.empty() ? cfg.target_root : cfg.source_root);
    Dataset ds = load_required(cfg, root, "--data / data.target_root", /*is_source=*/false);

    const fs::path dir = make_experiment_dir(cfg, opt.force, opt.out_dir);
    const EvalReport rep = evaluate(*counter, ds, refiner.get(), EvalConfig{cfg.train.sigma});
    write_eval_files(dir, "eval_refined", rep);
    plot_map_grid(map_rows(*counter, refiner.get(), ds, cfg.train.sigma, 4),
                  (dir / "maps_refined.png").string());
    std::cout << "experiment dir: " << dir.string() << '\n';
  });
}

int cmd_evaluate(const CliOptions& opt) {
  return run_command([&] {
    ExperimentConfig cfg = resolve_config(opt);
    auto counter = require_counter(opt);
    std::shared_ptr<MapRefiner> refiner;
    if (!opt.refiner_ckpt.empty()) refiner = load_refiner_checkpoint(opt.refiner_ckpt);

    const std::string root = !opt.data_root.empty()
                                 ? opt.data_root
                                 : (!cfg.target_root.empty() ? cfg.target_root : cfg.source_root);
    Dataset ds = load_required(cfg, root, "--data / data.target_root", /*is_source=*/false);

    const fs::path dir = make_experiment_dir(cfg, opt.force, opt.out_dir);
    const EvalReport rep = evaluate(*counter, ds, refiner.get(), EvalConfig{cfg.train.sigma});
    write_eval_files(dir, "eval", rep);
    plot_map_grid(map_rows(*counter, refiner.get(), ds, cfg.train.sigma, 4),
                  (dir / "maps_eval.png").string());
    std::cout << "experiment dir: " << dir.string() << '\n';
  });
}

}  // namespace dacount
