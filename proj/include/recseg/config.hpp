#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "recseg/train.hpp"

namespace recseg {

// Everything a pipeline run depends on. Loaded from JSON; unknown keys are an
// error so typos cannot silently fall back to defaults.
struct RunConfig {
  std::uint64_t seed = 1;
  std::string data_dir = "data";
  std::string run_dir = "run";
  std::vector<std::string> categories{"chair", "table"};
  std::size_t shapes_per_category = 125;
  std::size_t n_points = 512;
  double split = 0.8;
  std::string variant = "full";
  std::size_t epochs = 60;
  std::size_t max_iterations = 0;
  std::size_t batch_size = 10;
  double lr = 0.001;
  double noise_sigma = 0.01;
  double lambda_sym = 1.0;
  bool semantic = true;
  bool normalization = true;
  std::size_t checkpoint_every = 0;
  int max_depth = 12;
  int min_points = 10;
  double tie_tol = 0.1;

  train::TrainConfig train_config() const {
    train::TrainConfig t;
    t.batch_size = batch_size;
    t.epochs = epochs;
    t.max_iterations = max_iterations;
    t.lr = lr;
    t.noise_sigma = noise_sigma;
    t.lambda_sym = lambda_sym;
    t.seed = seed;
    t.variant = nets::variant_from_string(variant);
    t.semantic = semantic;
    t.checkpoint_every = checkpoint_every;
    return t;
  }

  model::InferenceConfig inference_config() const {
    model::InferenceConfig c;
    c.max_depth = max_depth;
    c.min_points = min_points;
    c.lambda_sym = lambda_sym;
    return c;
  }

  nets::NetDims net_dims() const {
    nets::NetDims d;
    d.normalization = normalization;
    d.semantic_classes = semantic ? static_cast<int>(data::semantic_classes().size()) : 0;
    return d;
  }

  void check() const {
    for (const auto& c : categories) data::category_classes(c);
    nets::variant_from_string(variant);
    if (!(split >= 0.0 && split <= 1.0)) throw InvalidArgument("split must be in [0, 1]");
    if (batch_size == 0) throw InvalidArgument("batch_size must be >= 1");
    if (noise_sigma < 0) throw InvalidArgument("noise_sigma must be >= 0");
    if (!(lr >= 0)) throw InvalidArgument("lr must be >= 0");
    if (n_points < 16) throw InvalidArgument("n_points must be >= 16");
    inference_config().check();
  }
};

namespace detail {

template <class F>
void for_each_config_field(RunConfig& c, F&& f) {
  f("seed", c.seed);
  f("data_dir", c.data_dir);
  f("run_dir", c.run_dir);
  f("categories", c.categories);
  f("shapes_per_category", c.shapes_per_category);
  f("n_points", c.n_points);
  f("split", c.split);
  f("variant", c.variant);
  f("epochs", c.epochs);
  f("max_iterations", c.max_iterations);
  f("batch_size", c.batch_size);
  f("lr", c.lr);
  f("noise_sigma", c.noise_sigma);
  f("lambda_sym", c.lambda_sym);
  f("semantic", c.semantic);
  f("normalization", c.normalization);
  f("checkpoint_every", c.checkpoint_every);
  f("max_depth", c.max_depth);
  f("min_points", c.min_points);
  f("tie_tol", c.tie_tol);
}

}  // namespace detail

inline nlohmann::json config_to_json(const RunConfig& cfg) {
  RunConfig c = cfg;
  nlohmann::ordered_json j;
  detail::for_each_config_field(c, [&](const char* key, auto& v) { j[key] = v; });
  return nlohmann::json::parse(j.dump());
}

// Overlays the keys present in j onto base.
inline RunConfig config_from_json(const nlohmann::json& j, RunConfig base = {}) {
  if (!j.is_object()) throw ParseError("config: expected a JSON object");
  std::map<std::string, bool> known;
  detail::for_each_config_field(base, [&](const char* key, auto&) { known[key] = true; });
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key())) throw ParseError("config: unknown key '" + it.key() + "'");
  detail::for_each_config_field(base, [&](const char* key, auto& v) {
    auto it = j.find(key);
    if (it == j.end()) return;
    try {
      v = it->template get<std::remove_reference_t<decltype(v)>>();
    } catch (const nlohmann::json::exception&) {
      throw ParseError(std::string("config: key '") + key + "' has the wrong type");
    }
  });
  return base;
}

inline std::string config_echo(const RunConfig& c) {
  nlohmann::ordered_json j;
  RunConfig copy = c;
  detail::for_each_config_field(copy, [&](const char* key, auto& v) { j[key] = v; });
  return j.dump(2) + "\n";
}

}  // namespace recseg
