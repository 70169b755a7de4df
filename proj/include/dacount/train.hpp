#pragma once

#include <memory>
#include <string>
#include <vector>

#include "dacount/checkpoint.hpp"
#include "dacount/counter.hpp"
#include "dacount/data.hpp"
#include "dacount/discriminators.hpp"
#include "dacount/losses.hpp"
#include "dacount/refiner.hpp"
#include "dacount/rng.hpp"

namespace dacount {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

// Adaptive-moment optimizer over an externally owned parameter set.
class Adam {
 public:
  Adam(std::vector<Parameter*> params, AdamConfig cfg);
  void step();  // applies Parameter::grad to Parameter::value
  int64_t t() const { return t_; }
  void store(Checkpoint& c, const std::string& prefix) const;
  void load(const Checkpoint& c, const std::string& prefix);

 private:
  std::vector<Parameter*> params_;
  std::vector<Tensor> m_, v_;
  AdamConfig cfg_;
  int64_t t_ = 0;
};

enum class TrainMode { Supervised, SprSupervised, Adapt };
std::string to_string(TrainMode m);
TrainMode train_mode_from_string(const std::string& s);

struct TrainConfig {
  CounterConfig counter;
  FeatureDiscConfig fdisc;  // in_channels filled in per tap
  MapDiscConfig mdisc;

  double lr_g = 1e-5;
  double lr_d = 1e-5;
  double lr_r = 1e-4;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  LossWeights weights;
  PixelReduction pixel_reduction = PixelReduction::Mean;

  int batch_source = 4;
  int batch_target = 4;
  int max_steps = 2000;
  int eval_every = 200;   // steps between validation passes
  int patience = 5;       // non-improving validation passes before stopping
  double val_fraction = 0.1;
  double sigma = 4.0;     // ground-truth kernel width
  uint64_t seed = 1;

  void validate() const;
};

// One row of the dense per-step metrics log.
struct StepLog {
  int step = 0;
  double l_cnt = 0.0;
  double l_d_feat1 = 0.0, l_d_feat2 = 0.0, l_d_map = 0.0;
  double l_adv_feat = 0.0, l_adv_map = 0.0, l_spr = 0.0;
  double l_total = 0.0;
  double lr_g = 0.0, lr_d = 0.0;
};

struct TrainState {
  TrainConfig cfg;
  TrainMode mode = TrainMode::Supervised;
  std::shared_ptr<CounterNet> counter;  // restored to the best-validation step
  std::shared_ptr<FeatureDiscriminator> d1, d2;
  std::shared_ptr<MapDiscriminator> d3;
  int steps_run = 0;
  int best_step = -1;
  double best_val_cnt = 0.0;
  std::vector<StepLog> log;
  std::vector<std::pair<int, double>> val_history;  // (step, validation L_cnt)
  std::vector<std::string> warnings;
};

// Iterative trainer behind the three entry points below. Exposed so tests
// can drive single steps and exercise checkpoint resume.
class Trainer {
 public:
  Trainer(TrainMode mode, Dataset source, Dataset target, TrainConfig cfg);

  StepLog step_once();  // one D-update (Adapt mode) followed by one G-update
  double validate();    // mean counting loss over the held-out source split
  // Full loop with early stopping; writes train_log.csv / val_log.csv and
  // checkpoints under log_dir when non-empty. Returns the best counter.
  TrainState run(const std::string& log_dir = "");

  void save_checkpoint(const std::string& path) const;
  void restore(const std::string& path);  // config must match

  CounterNet& counter() { return *g_; }
  FeatureDiscriminator& d1() { return *d1_; }
  FeatureDiscriminator& d2() { return *d2_; }
  MapDiscriminator& d3() { return *d3_; }
  int step() const { return step_; }
  const std::vector<int>& train_indices() const { return train_idx_; }
  const std::vector<int>& val_indices() const { return val_idx_; }

 private:
  void build();
  StepLog d_update(const Tensor& src_imgs, const Tensor& tgt_imgs, StepLog log);
  StepLog g_update(const Tensor& src_imgs, const Tensor& src_gts, const Tensor& tgt_imgs,
                   StepLog log);
  Tensor draw_batch_images(const Dataset& ds, const std::vector<int>& pool, RngStream& rng,
                           int batch, std::vector<int>* out_idx);
  void check_finite(const StepLog& log, const std::string& log_dir) const;

  TrainMode mode_;
  Dataset source_, target_;
  TrainConfig cfg_;

  std::shared_ptr<CounterNet> g_;
  std::shared_ptr<FeatureDiscriminator> d1_, d2_;
  std::shared_ptr<MapDiscriminator> d3_;
  std::unique_ptr<Adam> opt_g_, opt_d_;

  RngStream src_sampler_, tgt_sampler_, spr_scales_;
  std::vector<int> train_idx_, val_idx_, tgt_pool_;

  int step_ = 0;
  double best_val_ = 0.0;
  int best_step_ = -1;
  int evals_since_improve_ = 0;
  bool has_best_ = false;
  std::vector<Tensor> best_g_values_;
  std::vector<StepLog> log_;
  std::vector<std::pair<int, double>> val_history_;
  std::vector<std::string> warnings_;
};

// Minimizes the counting loss on a labeled source set.
TrainState supervised_train(const Dataset& source_ds, const TrainConfig& cfg,
                            const std::string& log_dir = "");
// Supervised counting plus the scale-pyramid consistency term on the same
// labeled set.
TrainState spr_supervised_train(const Dataset& labeled_ds, const TrainConfig& cfg,
                                const std::string& log_dir = "");
// Full adversarial adaptation: alternating discriminator and counter
// updates over a labeled source set and an unlabeled target set.
TrainState adapt_train(const Dataset& source_ds, const Dataset& target_ds, const TrainConfig& cfg,
                       const std::string& log_dir = "");

struct RefinerPipelineResult {
  std::shared_ptr<MapRefiner> refiner;
  std::vector<Tensor> refined_target_maps;  // same shapes as the inputs
  double test_mse = 0.0;                    // map MSE on the held-out test split
  int best_step = -1;
  std::vector<std::pair<int, double>> val_history;
};

// Trains a residual refiner on the counter's own predictions over a
// held-out labeled set (split 70/10/20 into train/val/test), then applies
// it to the provided coarse target maps. Target maps must be (H,W) at
// image resolution with even dims.
RefinerPipelineResult refiner_pipeline(const Dataset& source_train, const Dataset& source_test,
                                       CounterNet& counter,
                                       const std::vector<Tensor>& target_coarse_maps,
                                       const TrainConfig& cfg, const RefinerConfig& rcfg = {},
                                       const std::string& log_dir = "");

// Deterministic shuffled split helper: returns index lists whose sizes are
// round(fraction_i * n); the last bucket takes the remainder.
std::vector<std::vector<int>> split_indices(int n, const std::vector<double>& fractions,
                                            RngStream& rng);

}  // namespace dacount
