#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>

#include "dacount/config.hpp"

namespace dacount {

// Parsed command-line flags; fields a subcommand does not use stay empty.
struct CliOptions {
  std::string config_path;       // --config
  std::string out_dir;           // --out: exact experiment dir (skips the stamped name)
  bool force = false;            // --force: allow reuse of a non-empty directory
  std::optional<uint64_t> seed;  // --seed: overrides the config seed
  std::optional<int> toy_n;      // --n: overrides toy.n_images (gen-toy)
  std::string counter_ckpt;      // --counter: trained counter checkpoint
  std::string refiner_ckpt;      // --refiner: trained refiner checkpoint
  std::string data_root;         // --data: dataset root for evaluate/refine
};

// Subcommand drivers. Each resolves the config, creates the experiment
// directory, runs, and maps failures to the kExit* codes (stderr gets a
// one-line "error: ..." message).
int cmd_gen_toy(const CliOptions& opt);
int cmd_train(const CliOptions& opt);  // train.mode: supervised or spr_supervised
int cmd_adapt(const CliOptions& opt);
int cmd_refine_train(const CliOptions& opt);
int cmd_refine(const CliOptions& opt);
int cmd_evaluate(const CliOptions& opt);

// Checkpoint helpers shared by the commands and the tests. Loaders rebuild
// the network from the stored config, then restore its parameters.
std::shared_ptr<CounterNet> load_counter_checkpoint(const std::string& path);
std::shared_ptr<MapRefiner> load_refiner_checkpoint(const std::string& path);
void save_refiner_checkpoint(const std::string& path, MapRefiner& refiner, int best_step,
                             double test_mse);

}  // namespace dacount
