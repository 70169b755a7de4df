#pragma once

#include <optional>
#include <string>

#include "json.hpp"

#include "dacount/data.hpp"
#include "dacount/metrics.hpp"
#include "dacount/train.hpp"

namespace dacount {

// JSON bindings for every config type, used for checkpoint manifests,
// config hashing, and the experiment-directory echo.
void to_json(nlohmann::json& j, const CounterConfig::Block& b);
void from_json(const nlohmann::json& j, CounterConfig::Block& b);
void to_json(nlohmann::json& j, const CounterConfig& c);
void from_json(const nlohmann::json& j, CounterConfig& c);
void to_json(nlohmann::json& j, const FeatureDiscConfig& c);
void from_json(const nlohmann::json& j, FeatureDiscConfig& c);
void to_json(nlohmann::json& j, const MapDiscConfig& c);
void from_json(const nlohmann::json& j, MapDiscConfig& c);
void to_json(nlohmann::json& j, const LossWeights& w);
void from_json(const nlohmann::json& j, LossWeights& w);
void to_json(nlohmann::json& j, const GapConfig& g);
void from_json(const nlohmann::json& j, GapConfig& g);
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);
void to_json(nlohmann::json& j, const RefinerConfig& c);
void from_json(const nlohmann::json& j, RefinerConfig& c);

// Everything a CLI run needs: training hyperparameters plus dataset
// locations, toy-generator settings, and output placement.
struct ExperimentConfig {
  std::string name = "exp";
  std::string out_root = "runs";
  bool deterministic = true;  // fixed seed; when false the seed is drawn from entropy

  std::string source_root;
  std::string target_root;
  std::optional<FilterRule> filter;  // when set, source samples must carry passing metadata

  // Toy generator settings (gen-toy command).
  int toy_n = 40;
  int toy_h = 64, toy_w = 64;
  GapConfig gap;

  TrainConfig train;
  std::string train_mode = "supervised";  // mode used by the train command
  RefinerConfig refiner;

  nlohmann::json to_json_value() const;
  bool operator==(const ExperimentConfig& o) const;
};

void to_json(nlohmann::json& j, const FilterRule& r);
void from_json(const nlohmann::json& j, FilterRule& r);

// INI round trip: load_experiment_config(write_experiment_config(cfg)) == cfg.
ExperimentConfig load_experiment_config(const std::string& path);
void write_experiment_config(const std::string& path, const ExperimentConfig& cfg);

// 16-hex-digit hash of the canonical JSON form.
std::string config_hash(const ExperimentConfig& cfg);

// Creates "<out_root>/<name>-<UTC timestamp>-<hash>" (or `override_dir`
// when non-empty). Refuses to reuse an existing non-empty directory unless
// `force`; echoes the resolved config into <dir>/config.ini.
std::string make_experiment_dir(const ExperimentConfig& cfg, bool force,
                                const std::string& override_dir = "");

// Drops samples that carry no metadata or whose metadata fails the rule.
Dataset apply_filter(const Dataset& ds, const FilterRule& rule);

// Process exit codes shared by all commands.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;      // bad flags or invalid configuration
inline constexpr int kExitData = 3;       // missing or malformed data/artifacts
inline constexpr int kExitNumerical = 4;  // NaN/Inf abort during optimization

}  // namespace dacount
