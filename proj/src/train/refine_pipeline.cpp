#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "dacount/losses.hpp"
#include "dacount/train.hpp"

namespace fs = std::filesystem;

namespace dacount {

RefinerPipelineResult refiner_pipeline(const Dataset& source_train, const Dataset& source_test,
                                       CounterNet& counter,
                                       const std::vector<Tensor>& target_coarse_maps,
                                       const TrainConfig& cfg, const RefinerConfig& rcfg,
                                       const std::string& log_dir) {
  cfg.validate();
  if (source_train.empty())
    throw std::invalid_argument("refiner_pipeline: counter training set is empty");
  if (source_test.size() < 10)
    throw std::invalid_argument("refiner_pipeline: need at least 10 held-out samples for the "
                                "70/10/20 split, got " +
                                std::to_string(source_test.size()));

  // Counter predictions on the held-out set, upsampled to image resolution,
  // paired with full-resolution ground truth.
  const double out_scale = counter.config().out_scale();
  std::vector<Tensor> inputs, targets;
  inputs.reserve(source_test.samples.size());
  targets.reserve(source_test.samples.size());
  for (const auto& s : source_test.samples) {
    const int h = s.image.dim(1), w = s.image.dim(2);
    Tape t;
    TapBundle tb = counter.forward(t, s.image.reshaped({1, 1, h, w}), /*frozen=*/true);
    inputs.push_back(t.val(semantic_reshape_to(t, tb.density, out_scale, 1.0, h, w)));
    targets.push_back(
        density_from_points(s.ann, h, w, cfg.sigma, 1.0).grid.reshaped({1, 1, h, w}));
  }

  RngStream split_rng(cfg.seed, "refiner_split");
  const auto splits = split_indices(source_test.size(), {0.7, 0.1, 0.2}, split_rng);
  const auto& tr_idx = splits[0];
  const auto& va_idx = splits[1];
  const auto& te_idx = splits[2];

  auto refiner = std::make_shared<MapRefiner>(rcfg, RngStream(cfg.seed, "r_init"));
  Adam opt(refiner->parameters(), AdamConfig{cfg.lr_r, cfg.beta1, cfg.beta2, cfg.eps});
  RngStream sampler(cfg.seed, "refiner_sampler");

  const auto eval_mse = [&](const std::vector<int>& idx) {
    double total = 0.0;
    for (int i : idx) {
      Tape t;
      Var out = refiner->forward(t, t.constant(inputs[static_cast<size_t>(i)]), /*frozen=*/true);
      total += t.val(t.mse(out, t.constant(targets[static_cast<size_t>(i)])))[0];
    }
    return total / static_cast<double>(idx.size());
  };

  std::ofstream log_csv, val_csv;
  if (!log_dir.empty()) {
    fs::create_directories(log_dir);
    log_csv.open(fs::path(log_dir) / "refine_log.csv");
    val_csv.open(fs::path(log_dir) / "refine_val_log.csv");
    log_csv << "step,l_map\n";
    val_csv << "step,val_map,best_val,best_step\n";
  }

  RefinerPipelineResult res;
  res.refiner = refiner;
  double best_val = 0.0;
  bool has_best = false;
  int evals_since_improve = 0;
  std::vector<Tensor> best_values;

  auto eval_and_check = [&](int step) {
    const double v = eval_mse(va_idx);
    res.val_history.emplace_back(step, v);
    if (!has_best || v < best_val) {
      has_best = true;
      best_val = v;
      res.best_step = step;
      evals_since_improve = 0;
      best_values.clear();
      for (const Parameter* p : refiner->parameters()) best_values.push_back(p->value);
    } else {
      ++evals_since_improve;
    }
    if (val_csv.is_open())
      val_csv << step << ',' << v << ',' << best_val << ',' << res.best_step << '\n';
    return evals_since_improve >= cfg.patience;
  };

  int step = 0;
  bool stopped = false;
  while (step < cfg.max_steps) {
    Tape t;
    Var loss{};
    for (int b = 0; b < cfg.batch_source; ++b) {
      const int i = tr_idx[static_cast<size_t>(
          sampler.uniform_int(0, static_cast<int>(tr_idx.size()) - 1))];
      Var out = refiner->forward(t, t.constant(inputs[static_cast<size_t>(i)]));
      Var l = t.mse(out, t.constant(targets[static_cast<size_t>(i)]));
      loss = b == 0 ? l : t.add(loss, l);
    }
    loss = t.scale(loss, 1.0 / cfg.batch_source);
    refiner->zero_grads();
    t.backward(loss);
    opt.step();
    ++step;
    const double lv = t.val(loss)[0];
    if (log_csv.is_open()) log_csv << step << ',' << lv << '\n';
    if (!std::isfinite(lv))
      throw NumericalError("refiner_pipeline diverged at step " + std::to_string(step) +
                           " (non-finite loss)");
    if (step % cfg.eval_every == 0 && eval_and_check(step)) {
      stopped = true;
      break;
    }
  }
  if (!stopped && (res.val_history.empty() || res.val_history.back().first != step))
    eval_and_check(step);

  if (has_best) {
    auto params = refiner->parameters();
    for (size_t i = 0; i < params.size(); ++i) params[i]->value = best_values[i];
  }
  res.test_mse = eval_mse(te_idx);

  res.refined_target_maps.reserve(target_coarse_maps.size());
  for (const auto& m : target_coarse_maps) {
    if (m.rank() != 2)
      throw std::invalid_argument("refiner_pipeline: target maps must be (H,W), got " +
                                  m.shape_str());
    const int h = m.dim(0), w = m.dim(1);
    Tape t;
    Var out = refiner->forward(t, t.constant(m.reshaped({1, 1, h, w})), /*frozen=*/true);
    res.refined_target_maps.push_back(t.val(out).reshaped({h, w}));
  }
  return res;
}

}  // namespace dacount
