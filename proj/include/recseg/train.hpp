#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "recseg/autodiff/checkpoint.hpp"
#include "recseg/data.hpp"
#include "recseg/model.hpp"

namespace recseg::train {

using model::ForcedStats;
using model::LossBreakdown;
using nets::ModelParams;

// One supervised shape: its cloud, ground-truth tree and per-part classes.
struct Sample {
  std::string id;
  std::string category;
  PointCloud cloud;
  Hierarchy gt;
  std::vector<int> part_semantics;
  std::vector<int> instance_label;
};

inline Sample make_sample(const data::ShapeRecord& r, const BuildOptions& opt = {}) {
  Sample s;
  s.id = r.shape_id();
  s.category = r.category;
  s.cloud = r.cloud;
  s.gt = data::record_hierarchy(r, opt);
  s.part_semantics = r.part_semantics();
  s.instance_label = r.instance_label;
  return s;
}

struct TrainConfig {
  std::size_t batch_size = 10;
  std::size_t epochs = 1;
  std::size_t max_iterations = 0;  // 0 = no cap beyond epochs
  double lr = 0.001;
  double noise_sigma = 0.01;
  double lambda_sym = 1.0;
  std::uint64_t seed = 1;
  nets::Variant variant = nets::Variant::Full;
  bool semantic = true;  // train the semantic head when the model has one
  std::size_t checkpoint_every = 0;  // iterations; 0 disables periodic checkpoints
  std::string checkpoint_dir;
};

struct IterLog {
  std::size_t iter = 0;  // 1-based Adam step
  std::size_t epoch = 0;
  double class_loss = 0, seg_loss = 0, sym_loss = 0, semantic_loss = 0, total = 0;
  ForcedStats stats;
};

struct TrainResult {
  std::vector<IterLog> curve;
  ad::AdamState<float> adam;
  bool stopped_early = false;
};

// Seed for a (run seed, epoch, shape) triple; independent streams per use.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t salt = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(salt)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

inline PointCloud jitter(const PointCloud& c, double sigma, std::uint64_t seed) {
  if (sigma <= 0) return c;
  PointCloud out = c;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> N(0.0, sigma);
  for (auto& p : out.positions)
    for (int k = 0; k < 3; ++k) p[k] += N(rng);
  return out;
}

inline std::string checkpoint_path(const std::string& dir, std::size_t iter) {
  std::ostringstream ss;
  ss << dir << "/ckpt_" << std::setw(6) << std::setfill('0') << iter << ".bin";
  return ss.str();
}

// Mini-batch Adam over teacher-forced losses. Gradients are averaged over the
// batch. on_iter may return false to stop after the current step.
inline TrainResult train(const std::vector<Sample>& samples, ModelParams<float>& params, const TrainConfig& cfg,
                         const std::function<bool(const IterLog&)>& on_iter = {}) {
  if (samples.empty()) throw InvalidArgument("training set is empty");
  if (cfg.batch_size == 0) throw InvalidArgument("batch size must be >= 1");
  const nets::Wiring wiring = nets::build_ablation(cfg.variant);
  TrainResult res;
  res.adam.lr = cfg.lr;
  res.adam.init(params.store);
  if (!cfg.checkpoint_dir.empty()) std::filesystem::create_directories(cfg.checkpoint_dir);

  std::vector<std::size_t> order(samples.size());
  std::size_t iter = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 shuffle_rng(mix_seed(cfg.seed, epoch, 0, 1));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      params.store.zero_grad();
      IterLog log;
      log.epoch = epoch;
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t idx = order[b];
        const Sample& s = samples[idx];
        const PointCloud noisy = jitter(s.cloud, cfg.noise_sigma, mix_seed(cfg.seed, epoch, idx, 2));
        std::mt19937_64 drop_rng(mix_seed(cfg.seed, epoch, idx, 3));
        model::LossConfig lc;
        lc.lambda_sym = cfg.lambda_sym;
        lc.train = true;
        if (cfg.semantic) lc.part_semantics = s.part_semantics;
        ad::Tape<float> tape;
        auto r = model::teacher_forced_loss(tape, params, noisy, s.gt, wiring, lc, drop_rng);
        if (!std::isfinite(r.loss.total) || !std::isfinite(r.loss.semantic))
          throw NumericError("non-finite loss on shape '" + s.id + "' at iteration " + std::to_string(iter + 1));
        tape.backward(r.objective);
        log.class_loss += r.loss.class_mean;
        log.seg_loss += r.loss.seg_mean;
        log.sym_loss += r.loss.sym_param;
        log.semantic_loss += r.loss.semantic;
        log.total += r.loss.total;
        log.stats += r.stats;
      }
      const double n = static_cast<double>(end - start);
      const float inv = 1.0f / static_cast<float>(end - start);
      for (auto& [name, p] : params.store) p.grad *= inv;
      ad::adam_step(params.store, res.adam);
      ++iter;
      log.iter = iter;
      log.class_loss /= n;
      log.seg_loss /= n;
      log.sym_loss /= n;
      log.semantic_loss /= n;
      log.total /= n;
      res.curve.push_back(log);

      if (cfg.checkpoint_every > 0 && !cfg.checkpoint_dir.empty() && iter % cfg.checkpoint_every == 0)
        ad::save_checkpoint(checkpoint_path(cfg.checkpoint_dir, iter), params.store, &res.adam);
      const bool keep_going = !on_iter || on_iter(log);
      if (!keep_going) {
        res.stopped_early = true;
        return res;
      }
      if (cfg.max_iterations > 0 && iter >= cfg.max_iterations) return res;
    }
  }
  return res;
}

// Teacher-forced evaluation without dropout or noise.
struct ForcedEval {
  LossBreakdown mean;
  ForcedStats stats;
};

template <class T>
ForcedEval evaluate_forced(const std::vector<Sample>& samples, ModelParams<T>& params, nets::Variant variant,
                           double lambda_sym = 1.0, bool semantic = true) {
  ForcedEval out;
  const nets::Wiring wiring = nets::build_ablation(variant);
  std::mt19937_64 rng(0);
  for (const auto& s : samples) {
    model::LossConfig lc;
    lc.lambda_sym = lambda_sym;
    if (semantic) lc.part_semantics = s.part_semantics;
    ad::Tape<T> tape(false);
    auto r = model::teacher_forced_loss(tape, params, s.cloud, s.gt, wiring, lc, rng);
    out.mean.class_mean += r.loss.class_mean;
    out.mean.seg_mean += r.loss.seg_mean;
    out.mean.sym_param += r.loss.sym_param;
    out.mean.semantic += r.loss.semantic;
    out.mean.total += r.loss.total;
    out.stats += r.stats;
  }
  if (!samples.empty()) {
    const double n = static_cast<double>(samples.size());
    out.mean.class_mean /= n;
    out.mean.seg_mean /= n;
    out.mean.sym_param /= n;
    out.mean.semantic /= n;
    out.mean.total /= n;
  }
  return out;
}

inline std::string curve_csv(const std::vector<IterLog>& curve) {
  std::ostringstream ss;
  ss << "iter,class_loss,seg_loss,sym_loss\n";
  ss << std::setprecision(9);
  for (const auto& l : curve) ss << l.iter << ',' << l.class_loss << ',' << l.seg_loss << ',' << l.sym_loss << '\n';
  return ss.str();
}

}  // namespace recseg::train
