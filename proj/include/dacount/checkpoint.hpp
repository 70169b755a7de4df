#pragma once

#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "dacount/module.hpp"
#include "dacount/tensor.hpp"

namespace dacount {

// Binary checkpoint archive: an 8-byte magic, a length-prefixed JSON
// manifest (config, step, tensor directory, free-form extras), then the
// tensor payload as raw little-endian float64. Round trips are bit exact.
struct Checkpoint {
  static constexpr char kMagic[8] = {'D', 'A', 'C', 'K', 'P', 'T', '1', '\n'};

  nlohmann::json config;  // experiment config; loads verify equality against it
  int64_t step = 0;
  nlohmann::json extra = nlohmann::json::object();  // rng state, best metrics, ...
  std::vector<std::pair<std::string, Tensor>> tensors;

  void add(const std::string& name, const Tensor& t);
  const Tensor* find(const std::string& name) const;

  // Copies every parameter of `m` under "<prefix>.<param name>".
  void store_module(const std::string& prefix, const Module& m);
  // Restores parameters by name; throws if any is missing or has a
  // mismatched shape.
  void load_module(const std::string& prefix, Module& m) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& c);

// Loads an archive. If `expected_config` is non-null it must compare equal
// to the stored config, otherwise the load is rejected.
Checkpoint load_checkpoint(const std::string& path, const nlohmann::json* expected_config = nullptr);

}  // namespace dacount
