#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "dacount/config.hpp"
#include "dacount/train.hpp"

namespace fs = std::filesystem;

namespace dacount {

std::string to_string(TrainMode m) {
  switch (m) {
    case TrainMode::Supervised: return "supervised";
    case TrainMode::SprSupervised: return "spr_supervised";
    case TrainMode::Adapt: return "adapt";
  }
  return "?";
}

TrainMode train_mode_from_string(const std::string& s) {
  if (s == "supervised") return TrainMode::Supervised;
  if (s == "spr_supervised") return TrainMode::SprSupervised;
  if (s == "adapt") return TrainMode::Adapt;
  throw std::invalid_argument("unknown train mode '" + s +
                              "' (supervised, spr_supervised, adapt)");
}

void TrainConfig::validate() const {
  if (!(lr_g > 0.0) || !(lr_d > 0.0) || !(lr_r > 0.0))
    throw std::invalid_argument("TrainConfig: learning rates must be positive");
  if (patience < 1) throw std::invalid_argument("TrainConfig: patience must be >= 1");
  if (eval_every < 1) throw std::invalid_argument("TrainConfig: eval_every must be >= 1");
  if (batch_source < 1 || batch_target < 1)
    throw std::invalid_argument("TrainConfig: batch sizes must be >= 1");
  if (max_steps < 1) throw std::invalid_argument("TrainConfig: max_steps must be >= 1");
  if (!(val_fraction > 0.0 && val_fraction <= 0.5))
    throw std::invalid_argument("TrainConfig: val_fraction must be in (0, 0.5]");
  if (!(sigma > 0.0)) throw std::invalid_argument("TrainConfig: sigma must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0) || !(eps > 0.0))
    throw std::invalid_argument("TrainConfig: bad optimizer parameters");
  weights.validate();
}

std::vector<std::vector<int>> split_indices(int n, const std::vector<double>& fractions,
                                            RngStream& rng) {
  if (n < 0) throw std::invalid_argument("split_indices: negative n");
  double sum = std::accumulate(fractions.begin(), fractions.end(), 0.0);
  if (std::abs(sum - 1.0) > 1e-9)
    throw std::invalid_argument("split_indices: fractions must sum to 1");
  std::vector<int> perm(static_cast<size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(perm);
  std::vector<std::vector<int>> out;
  int used = 0;
  for (size_t i = 0; i < fractions.size(); ++i) {
    int take = (i + 1 == fractions.size())
                   ? n - used
                   : static_cast<int>(std::llround(fractions[i] * n));
    take = std::clamp(take, 0, n - used);
    out.emplace_back(perm.begin() + used, perm.begin() + used + take);
    used += take;
  }
  return out;
}

Trainer::Trainer(TrainMode mode, Dataset source, Dataset target, TrainConfig cfg)
    : mode_(mode),
      source_(std::move(source)),
      target_(std::move(target)),
      cfg_(std::move(cfg)),
      src_sampler_(cfg_.seed, "src_sampler"),
      tgt_sampler_(cfg_.seed, "tgt_sampler"),
      spr_scales_(cfg_.seed, "spr_scales") {
  cfg_.validate();
  if (source_.empty()) throw std::invalid_argument("trainer: source dataset is empty");
  if (mode_ == TrainMode::Adapt && target_.empty())
    throw std::invalid_argument(
        "adapt_train: target dataset is empty; adaptation is undefined without target images");

  densify(source_, cfg_.sigma, cfg_.counter.out_scale());
  build();

  const int n = source_.size();
  if (n == 1) {
    train_idx_ = {0};
    val_idx_ = {0};  // degenerate overfit setup: validate on the training sample
  } else {
    RngStream split_rng(cfg_.seed, "val_split");
    std::vector<int> perm(static_cast<size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    split_rng.shuffle(perm);
    const int n_val =
        std::clamp(static_cast<int>(std::llround(cfg_.val_fraction * n)), 1, n - 1);
    val_idx_.assign(perm.begin(), perm.begin() + n_val);
    train_idx_.assign(perm.begin() + n_val, perm.end());
  }
  tgt_pool_.resize(static_cast<size_t>(target_.size()));
  std::iota(tgt_pool_.begin(), tgt_pool_.end(), 0);
}

void Trainer::build() {
  g_ = std::make_shared<CounterNet>(cfg_.counter, RngStream(cfg_.seed, "g_init"));
  opt_g_ = std::make_unique<Adam>(g_->parameters(),
                                  AdamConfig{cfg_.lr_g, cfg_.beta1, cfg_.beta2, cfg_.eps});
  if (mode_ != TrainMode::Adapt) return;

  FeatureDiscConfig f1c = cfg_.fdisc;
  f1c.in_channels = g_->f1_channels();
  FeatureDiscConfig f2c = cfg_.fdisc;
  f2c.in_channels = g_->f2_channels();
  d1_ = std::make_shared<FeatureDiscriminator>(f1c, RngStream(cfg_.seed, "d1_init"));
  d2_ = std::make_shared<FeatureDiscriminator>(f2c, RngStream(cfg_.seed, "d2_init"));
  d3_ = std::make_shared<MapDiscriminator>(cfg_.mdisc, RngStream(cfg_.seed, "d3_init"));
  std::vector<Parameter*> dp = d1_->parameters();
  for (Parameter* p : d2_->parameters()) dp.push_back(p);
  for (Parameter* p : d3_->parameters()) dp.push_back(p);
  opt_d_ = std::make_unique<Adam>(std::move(dp),
                                  AdamConfig{cfg_.lr_d, cfg_.beta1, cfg_.beta2, cfg_.eps});
}

Tensor Trainer::draw_batch_images(const Dataset& ds, const std::vector<int>& pool, RngStream& rng,
                                  int batch, std::vector<int>* out_idx) {
  std::vector<int> idx(static_cast<size_t>(batch));
  for (int i = 0; i < batch; ++i)
    idx[static_cast<size_t>(i)] = pool[static_cast<size_t>(
        rng.uniform_int(0, static_cast<int>(pool.size()) - 1))];
  if (out_idx) *out_idx = idx;
  return stack_images(ds, idx);
}

StepLog Trainer::step_once() {
  StepLog log;
  log.step = step_ + 1;
  log.lr_g = cfg_.lr_g;
  log.lr_d = mode_ == TrainMode::Adapt ? cfg_.lr_d : 0.0;

  std::vector<int> sidx;
  const Tensor src_imgs = draw_batch_images(source_, train_idx_, src_sampler_, cfg_.batch_source,
                                            &sidx);
  const Tensor src_gts = stack_gts(source_, sidx);
  Tensor tgt_imgs;
  if (mode_ == TrainMode::Adapt)
    tgt_imgs = draw_batch_images(target_, tgt_pool_, tgt_sampler_, cfg_.batch_target, nullptr);

  if (mode_ == TrainMode::Adapt) log = d_update(src_imgs, tgt_imgs, log);
  log = g_update(src_imgs, src_gts, tgt_imgs, log);

  ++step_;
  log_.push_back(log);
  return log;
}

StepLog Trainer::d_update(const Tensor& src_imgs, const Tensor& tgt_imgs, StepLog log) {
  Tape t;
  TapBundle tbs = g_->forward(t, src_imgs, /*frozen=*/true);
  TapBundle tbt = g_->forward(t, tgt_imgs, /*frozen=*/true);
  Var l1 = loss_feature_disc(t, d1_->forward(t, tbs.f1), d1_->forward(t, tbt.f1),
                             cfg_.pixel_reduction);
  Var l2 = loss_feature_disc(t, d2_->forward(t, tbs.f2), d2_->forward(t, tbt.f2),
                             cfg_.pixel_reduction);
  Var l3 = loss_map_disc(t, d3_->forward(t, tbs.density), d3_->forward(t, tbt.density));
  Var total = t.add(t.add(l1, l2), l3);
  d1_->zero_grads();
  d2_->zero_grads();
  d3_->zero_grads();
  t.backward(total);
  opt_d_->step();
  log.l_d_feat1 = t.val(l1)[0];
  log.l_d_feat2 = t.val(l2)[0];
  log.l_d_map = t.val(l3)[0];
  return log;
}

StepLog Trainer::g_update(const Tensor& src_imgs, const Tensor& src_gts, const Tensor& tgt_imgs,
                          StepLog log) {
  LossWeights w = cfg_.weights;
  if (mode_ != TrainMode::Adapt) w.lambda = w.beta = 0.0;  // no discriminators exist
  if (mode_ == TrainMode::Supervised) w.gamma = 0.0;

  Tape t;
  TapBundle tbs = g_->forward(t, src_imgs);
  Var cnt = loss_count(t, tbs.density, t.constant(src_gts));
  std::optional<Var> adv_feat, adv_map, spr;

  auto spr_term = [&](const Tensor& imgs, Var a_full) {
    const PyramidScales drawn = PyramidScales::sample(spr_scales_);
    const int h = imgs.dim(2), wdt = imgs.dim(3), stride = g_->config().stride();
    const int hm = spr_scaled_dim(h, drawn.m, stride), wm = spr_scaled_dim(wdt, drawn.m, stride);
    const int hn = spr_scaled_dim(h, drawn.n, stride), wn = spr_scaled_dim(wdt, drawn.n, stride);
    TapBundle tbm = g_->forward(t, resize_bilinear(imgs, hm, wm));
    TapBundle tbn = g_->forward(t, resize_bilinear(imgs, hn, wn));
    PyramidScales eff;
    eff.m = std::sqrt((static_cast<double>(hm) / h) * (static_cast<double>(wm) / wdt));
    eff.n = std::sqrt((static_cast<double>(hn) / h) * (static_cast<double>(wn) / wdt));
    return loss_spr(t, a_full, tbm.density, tbn.density, eff);
  };

  if (mode_ == TrainMode::Adapt && (w.lambda > 0.0 || w.beta > 0.0 || w.gamma > 0.0)) {
    TapBundle tbt = g_->forward(t, tgt_imgs);
    if (w.lambda > 0.0)
      adv_feat = loss_feature_adv(t, d1_->forward(t, tbt.f1, /*frozen=*/true),
                                  d2_->forward(t, tbt.f2, /*frozen=*/true), cfg_.pixel_reduction);
    if (w.beta > 0.0) adv_map = loss_map_adv(t, d3_->forward(t, tbt.density, /*frozen=*/true));
    if (w.gamma > 0.0) spr = spr_term(tgt_imgs, tbt.density);
  } else if (mode_ == TrainMode::SprSupervised && w.gamma > 0.0) {
    spr = spr_term(src_imgs, tbs.density);
  }

  Var total = loss_total(t, cnt, adv_feat, adv_map, spr, w);
  g_->zero_grads();
  t.backward(total);
  opt_g_->step();

  log.l_cnt = t.val(cnt)[0];
  if (adv_feat) log.l_adv_feat = t.val(*adv_feat)[0];
  if (adv_map) log.l_adv_map = t.val(*adv_map)[0];
  if (spr) log.l_spr = t.val(*spr)[0];
  log.l_total = t.val(total)[0];
  return log;
}

double Trainer::validate() {
  double total = 0.0;
  for (int i : val_idx_) {
    Tape t;
    TapBundle tb = g_->forward(t, stack_images(source_, {i}), /*frozen=*/true);
    Var c = loss_count(t, tb.density, t.constant(stack_gts(source_, {i})));
    total += t.val(c)[0];
  }
  return total / static_cast<double>(val_idx_.size());
}

void Trainer::check_finite(const StepLog& log, const std::string& log_dir) const {
  for (double v : {log.l_cnt, log.l_d_feat1, log.l_d_feat2, log.l_d_map, log.l_adv_feat,
                   log.l_adv_map, log.l_spr, log.l_total})
    if (!std::isfinite(v)) {
      std::string where;
      if (!log_dir.empty()) {
        where = (fs::path(log_dir) / "nan_snapshot.ckpt").string();
        save_checkpoint(where);
      }
      throw NumericalError("training diverged at step " + std::to_string(log.step) +
                           " (non-finite loss)" +
                           (where.empty() ? "" : "; diagnostic snapshot at " + where));
    }
}

TrainState Trainer::run(const std::string& log_dir) {
  std::ofstream train_csv, val_csv;
  if (!log_dir.empty()) {
    fs::create_directories(log_dir);
    train_csv.open(fs::path(log_dir) / "train_log.csv");
    val_csv.open(fs::path(log_dir) / "val_log.csv");
    train_csv << "step,l_cnt,l_d_feat1,l_d_feat2,l_d_map,l_adv_feat,l_adv_map,l_spr,l_total,lr_g,"
                 "lr_d\n";
    val_csv << "step,val_cnt,best_val,best_step,evals_since_improve\n";
  }
  const auto fmt = [](double v) {
    std::ostringstream os;
    os << std::setprecision(12) << v;
    return os.str();
  };

  auto eval_and_check = [&]() {
    const double v = validate();
    val_history_.emplace_back(step_, v);
    if (!has_best_ || v < best_val_) {
      has_best_ = true;
      best_val_ = v;
      best_step_ = step_;
      evals_since_improve_ = 0;
      best_g_values_.clear();
      for (const Parameter* p : g_->parameters()) best_g_values_.push_back(p->value);
      if (!log_dir.empty()) save_checkpoint((fs::path(log_dir) / "best.ckpt").string());
    } else {
      ++evals_since_improve_;
      if (v > 1.5 * best_val_ + 1e-12 && warnings_.empty()) {
        warnings_.push_back("validation counting loss oscillates (step " +
                            std::to_string(step_) + ": " + fmt(v) + " vs best " + fmt(best_val_) +
                            "); adversarial updates may be unstable");
        std::cerr << "warning: " << warnings_.back() << "\n";
      }
    }
    if (val_csv.is_open())
      val_csv << step_ << ',' << fmt(v) << ',' << fmt(best_val_) << ',' << best_step_ << ','
              << evals_since_improve_ << '\n';
    return evals_since_improve_ >= cfg_.patience;
  };

  bool stopped = false;
  while (step_ < cfg_.max_steps) {
    const StepLog l = step_once();
    if (train_csv.is_open())
      train_csv << l.step << ',' << fmt(l.l_cnt) << ',' << fmt(l.l_d_feat1) << ','
                << fmt(l.l_d_feat2) << ',' << fmt(l.l_d_map) << ',' << fmt(l.l_adv_feat) << ','
                << fmt(l.l_adv_map) << ',' << fmt(l.l_spr) << ',' << fmt(l.l_total) << ','
                << fmt(l.lr_g) << ',' << fmt(l.lr_d) << '\n';
    check_finite(l, log_dir);
    if (step_ % cfg_.eval_every == 0 && eval_and_check()) {
      stopped = true;
      break;
    }
  }
  if (!stopped && (val_history_.empty() || val_history_.back().first != step_)) eval_and_check();

  if (!log_dir.empty()) save_checkpoint((fs::path(log_dir) / "last.ckpt").string());

  // Return the counter at its best validation step.
  if (has_best_) {
    auto params = g_->parameters();
    for (size_t i = 0; i < params.size(); ++i) params[i]->value = best_g_values_[i];
  }

  TrainState st;
  st.cfg = cfg_;
  st.mode = mode_;
  st.counter = g_;
  st.d1 = d1_;
  st.d2 = d2_;
  st.d3 = d3_;
  st.steps_run = step_;
  st.best_step = best_step_;
  st.best_val_cnt = best_val_;
  st.log = log_;
  st.val_history = val_history_;
  st.warnings = warnings_;
  return st;
}

void Trainer::save_checkpoint(const std::string& path) const {
  Checkpoint c;
  nlohmann::json jc = cfg_;
  jc["mode"] = to_string(mode_);
  c.config = jc;
  c.step = step_;
  c.store_module("g", *g_);
  opt_g_->store(c, "opt_g");
  if (d1_) {
    c.store_module("d1", *d1_);
    c.store_module("d2", *d2_);
    c.store_module("d3", *d3_);
    opt_d_->store(c, "opt_d");
  }
  c.extra["rng"] = {{"src_sampler", src_sampler_.serialize()},
                    {"tgt_sampler", tgt_sampler_.serialize()},
                    {"spr_scales", spr_scales_.serialize()}};
  c.extra["best"] = {{"has", has_best_},
                     {"val", best_val_},
                     {"step", best_step_},
                     {"evals_since_improve", evals_since_improve_}};
  if (has_best_) {
    auto params = const_cast<CounterNet&>(*g_).parameters();
    for (size_t i = 0; i < params.size(); ++i)
      c.add("best_g." + params[i]->name, best_g_values_[i]);
  }
  nlohmann::json vh = nlohmann::json::array();
  for (const auto& [s, v] : val_history_) vh.push_back({s, v});
  c.extra["val_history"] = vh;
  dacount::save_checkpoint(path, c);
}

void Trainer::restore(const std::string& path) {
  nlohmann::json expected = cfg_;
  expected["mode"] = to_string(mode_);
  Checkpoint c = load_checkpoint(path, &expected);
  c.load_module("g", *g_);
  opt_g_->load(c, "opt_g");
  if (d1_) {
    c.load_module("d1", *d1_);
    c.load_module("d2", *d2_);
    c.load_module("d3", *d3_);
    opt_d_->load(c, "opt_d");
  }
  step_ = static_cast<int>(c.step);
  src_sampler_.deserialize(c.extra.at("rng").at("src_sampler").get<std::string>());
  tgt_sampler_.deserialize(c.extra.at("rng").at("tgt_sampler").get<std::string>());
  spr_scales_.deserialize(c.extra.at("rng").at("spr_scales").get<std::string>());
  const auto& b = c.extra.at("best");
  has_best_ = b.at("has").get<bool>();
  best_val_ = b.at("val").get<double>();
  best_step_ = b.at("step").get<int>();
  evals_since_improve_ = b.at("evals_since_improve").get<int>();
  best_g_values_.clear();
  if (has_best_) {
    for (const Parameter* p : g_->parameters()) {
      const Tensor* t = c.find("best_g." + p->name);
      if (!t) throw std::runtime_error("restore: checkpoint missing 'best_g." + p->name + "'");
      best_g_values_.push_back(*t);
    }
  }
  val_history_.clear();
  for (const auto& e : c.extra.at("val_history"))
    val_history_.emplace_back(e.at(0).get<int>(), e.at(1).get<double>());
  log_.clear();
}

TrainState supervised_train(const Dataset& source_ds, const TrainConfig& cfg,
                            const std::string& log_dir) {
  Trainer tr(TrainMode::Supervised, source_ds, Dataset{}, cfg);
  return tr.run(log_dir);
}

TrainState spr_supervised_train(const Dataset& labeled_ds, const TrainConfig& cfg,
                                const std::string& log_dir) {
  Trainer tr(TrainMode::SprSupervised, labeled_ds, Dataset{}, cfg);
  return tr.run(log_dir);
}

TrainState adapt_train(const Dataset& source_ds, const Dataset& target_ds, const TrainConfig& cfg,
                       const std::string& log_dir) {
  Trainer tr(TrainMode::Adapt, source_ds, target_ds, cfg);
  return tr.run(log_dir);
}

}  // namespace dacount
