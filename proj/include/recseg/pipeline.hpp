#pragma once

#include <filesystem>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "recseg/config.hpp"
#include "recseg/eval.hpp"
#include "recseg/ply.hpp"
#include "recseg/verify.hpp"

// File-level commands behind the command line tool.
namespace recseg::pipeline {

namespace fs = std::filesystem;

enum ExitCode : int {
  kOk = 0,
  kInternal = 1,
  kInvalid = 2,
  kIo = 3,
  kParse = 4,
  kCheckFailed = 5,
  kNumeric = 6,
};

inline int exit_code(Error::Kind k) {
  switch (k) {
    case Error::Kind::Invalid: return kInvalid;
    case Error::Kind::Io: return kIo;
    case Error::Kind::Parse: return kParse;
    case Error::Kind::Check: return kCheckFailed;
    case Error::Kind::Numeric: return kNumeric;
  }
  return kInternal;
}

inline std::string error_line(int code, const std::string& kind, std::string msg) {
  for (char& c : msg)
    if (c == '\n' || c == '\r') c = ' ';
  return "error: code=" + std::to_string(code) + " kind=" + kind + " msg=" + msg;
}

inline RunConfig load_config(const std::optional<std::string>& path) {
  if (!path) return RunConfig{};
  const std::string text = data::read_text(*path);
  try {
    return config_from_json(parse_json_text(text));
  } catch (const ParseError& e) {
    throw ParseError(*path + ": " + e.what());
  }
}

inline std::string shape_file_name(const std::string& category, std::uint64_t seed) {
  return "shapes/" + category + "_" + std::to_string(seed) + ".json";
}

// Seed of the i-th shape of a category for a run seed.
inline std::uint64_t shape_seed(std::uint64_t run_seed, std::size_t category_index, std::size_t i) {
  return run_seed * 1000000ULL + category_index * 100000ULL + i;
}

inline data::DatasetManifest cmd_gen_data(const RunConfig& cfg, std::ostream& log) {
  cfg.check();
  fs::create_directories(fs::path(cfg.data_dir) / "shapes");
  std::vector<std::string> paths;
  for (std::size_t c = 0; c < cfg.categories.size(); ++c) {
    for (std::size_t i = 0; i < cfg.shapes_per_category; ++i) {
      const std::uint64_t s = shape_seed(cfg.seed, c, i);
      const auto rec = data::generate_shape(cfg.categories[c], s, cfg.n_points);
      const std::string rel = shape_file_name(cfg.categories[c], s);
      data::save_record((fs::path(cfg.data_dir) / rel).string(), rec);
      paths.push_back(rel);
    }
  }
  auto manifest = data::split_dataset(paths, cfg.split, cfg.seed, cfg.n_points);
  data::write_text((fs::path(cfg.data_dir) / "manifest.json").string(), data::manifest_to_json(manifest).dump(2) + "\n");
  log << "generated " << paths.size() << " shapes (" << manifest.train.size() << " train, " << manifest.test.size()
      << " test) in " << cfg.data_dir << "\n";
  return manifest;
}

inline data::DatasetManifest load_manifest(const std::string& data_dir) {
  const std::string path = (fs::path(data_dir) / "manifest.json").string();
  try {
    return data::manifest_from_json(parse_json_text(data::read_text(path)));
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

inline std::vector<train::Sample> load_samples(const std::string& data_dir, const std::vector<std::string>& rel,
                                               double tie_tol) {
  std::vector<train::Sample> out;
  BuildOptions opt;
  opt.tie_tol = tie_tol;
  for (const auto& r : rel) out.push_back(train::make_sample(data::load_record((fs::path(data_dir) / r).string()), opt));
  return out;
}

inline Hierarchy cmd_build_hierarchy(const std::string& shape_path, const std::string& out_path, bool detect,
                                     double tie_tol, std::ostream& log) {
  const auto rec = data::load_record(shape_path);
  const auto parts = rec.split_parts();
  const auto groups = detect_symmetry_groups(parts, DetectOptions{}, detect ? nullptr : &rec.groups);
  BuildOptions opt;
  opt.tie_tol = tie_tol;
  const Hierarchy h = build_hierarchy(parts, groups, opt, rec.shape_id());
  const auto report = validate(h, rec.cloud);
  if (!report.ok()) throw CheckFailed("hierarchy does not validate: " + report.violations.front());
  data::write_text(out_path, serialize(h) + "\n");
  log << "wrote " << out_path << " (" << count_nodes(h.root) << " nodes, " << groups.size() << " symmetry groups)\n";
  return h;
}

inline std::string final_checkpoint(const RunConfig& cfg) { return (fs::path(cfg.run_dir) / "model.ckpt").string(); }

// Trains on the manifest's train split; writes the config echo, loss curve and
// final checkpoint into the run directory.
inline train::TrainResult cmd_train(const RunConfig& cfg, std::ostream& log) {
  cfg.check();
  fs::create_directories(cfg.run_dir);
  data::write_text((fs::path(cfg.run_dir) / "config.json").string(), config_echo(cfg));
  const auto manifest = load_manifest(cfg.data_dir);
  const auto samples = load_samples(cfg.data_dir, manifest.train, cfg.tie_tol);
  if (samples.empty()) throw InvalidArgument("training split is empty");
  nets::ModelParams<float> params(cfg.net_dims(), cfg.seed);
  auto tcfg = cfg.train_config();
  if (cfg.checkpoint_every > 0) tcfg.checkpoint_dir = (fs::path(cfg.run_dir) / "checkpoints").string();
  log << "training " << cfg.variant << " on " << samples.size() << " shapes, " << params.count() << " parameters\n";
  auto res = train::train(samples, params, tcfg, [&](const train::IterLog& l) {
    if (l.iter % 20 == 0 || l.iter == 1)
      log << "iter " << l.iter << " epoch " << l.epoch << " class " << l.class_loss << " seg " << l.seg_loss << " sym "
          << l.sym_loss << " sem " << l.semantic_loss << "\n";
    return true;
  });
  data::write_text((fs::path(cfg.run_dir) / "loss.csv").string(), train::curve_csv(res.curve));
  ad::save_checkpoint(final_checkpoint(cfg), params.store, &res.adam);
  log << "wrote " << final_checkpoint(cfg) << "\n";
  return res;
}

inline nets::ModelParams<float> load_model(const RunConfig& cfg, const std::string& checkpoint) {
  nets::ModelParams<float> params(cfg.net_dims(), cfg.seed);
  ad::load_checkpoint(checkpoint, params.store, static_cast<ad::AdamState<float>*>(nullptr));
  return params;
}

inline model::SegmentationResult cmd_segment(const RunConfig& cfg, const std::string& checkpoint,
                                             const std::string& shape_path, const std::string& out_path,
                                             std::ostream& log) {
  cfg.check();
  auto params = load_model(cfg, checkpoint);
  const auto rec = data::load_record(shape_path);
  const auto res = model::infer_segment(params, rec.cloud, cfg.inference_config(),
                                        nets::build_ablation(nets::variant_from_string(cfg.variant)));
  auto j = model::result_to_json(res);
  if (params.dims.semantic_classes > 0) {
    const auto cls = model::predict_leaf_semantics(res, params, params.dims.semantic_classes);
    for (std::size_t i = 0; i < res.parts.size(); ++i)
      j["parts"][i]["class"] = data::semantic_classes().at(static_cast<std::size_t>(cls[i]));
  }
  data::write_text(out_path, j.dump() + "\n");
  log << "wrote " << out_path << " (" << res.parts.size() << " parts)\n";
  return res;
}

inline eval::EvalReport cmd_eval(const RunConfig& cfg, const std::string& checkpoint, const std::string& split,
                                 std::ostream& log) {
  cfg.check();
  if (split != "train" && split != "test") throw InvalidArgument("split must be 'train' or 'test'");
  auto params = load_model(cfg, checkpoint);
  const auto manifest = load_manifest(cfg.data_dir);
  const auto samples = load_samples(cfg.data_dir, split == "train" ? manifest.train : manifest.test, cfg.tie_tol);
  if (samples.empty()) throw InvalidArgument("split '" + split + "' is empty");
  const auto rep = eval::evaluate(samples, params, nets::variant_from_string(cfg.variant), cfg.inference_config());
  fs::create_directories(cfg.run_dir);
  data::write_text((fs::path(cfg.run_dir) / "report.csv").string(), eval::report_csv({rep}));
  data::write_text((fs::path(cfg.run_dir) / "report.json").string(), eval::report_json(rep).dump(2) + "\n");
  log << std::setprecision(4) << "AP@0.25 " << rep.mean_ap25 << "  AP@0.5 " << rep.mean_ap50;
  if (params.dims.semantic_classes > 0) log << "  leaf label accuracy " << rep.leaf_label_accuracy;
  log << "  (" << samples.size() << " shapes)\n";
  return rep;
}

inline void cmd_export_ply(const std::string& result_path, const std::string& shape_path, const std::string& out_path,
                           std::ostream& log) {
  const auto rec = data::load_record(shape_path);
  const std::string text = data::read_text(result_path);
  model::SegmentationResult res;
  try {
    res = model::result_from_json(parse_json_text(text));
  } catch (const ParseError& e) {
    throw ParseError(result_path + ": " + e.what());
  }
  if (res.instance_id.size() != rec.cloud.size())
    throw InvalidArgument("result has " + std::to_string(res.instance_id.size()) + " labels for " +
                          std::to_string(rec.cloud.size()) + " points");
  data::write_text(out_path, ply::write_ply(rec.cloud, res.instance_id));
  log << "wrote " << out_path << "\n";
}

inline constexpr double kGradTolerance = 1e-4;

inline bool cmd_grad_check(std::uint64_t seed, std::ostream& log) {
  double worst = 0;
  for (const auto& b : verify::gradient_suite(seed)) {
    log << std::left << std::setw(34) << b.name << " max rel err " << std::scientific << std::setprecision(3)
        << b.report.max_rel_err << std::defaultfloat << "  (" << b.report.checked << " entries, worst "
        << b.report.worst << ")\n";
    worst = std::max(worst, b.report.max_rel_err);
  }
  const bool pass = worst <= kGradTolerance;
  log << (pass ? "PASS" : "FAIL") << ", max rel err " << std::scientific << std::setprecision(3) << worst
      << (pass ? " <= " : " > ") << "1e-4\n"
      << std::defaultfloat;
  return pass;
}

}  // namespace recseg::pipeline
