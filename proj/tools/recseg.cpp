#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "recseg/pipeline.hpp"

namespace pl = recseg::pipeline;

namespace {

const char* kExitCodes =
    "Exit codes:\n"
    "  0  success\n"
    "  1  internal error\n"
    "  2  invalid argument or configuration\n"
    "  3  file I/O failure\n"
    "  4  malformed input (JSON syntax, schema, checkpoint)\n"
    "  5  verification failed (gradient check, hierarchy validation)\n"
    "  6  numeric failure (NaN/Inf during training or inference)\n"
    "Errors are printed as one line: error: code=N kind=K msg=...";

struct Overrides {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> data_dir, run_dir, variant;
  std::optional<std::size_t> epochs, max_iterations, n_points, shapes_per_category;
  std::optional<int> min_points, max_depth;

  void add_to(CLI::App* app) {
    app->add_option("--config", config, "JSON run configuration");
    app->add_option("--seed", seed, "run seed");
    app->add_option("--data-dir", data_dir, "dataset directory");
    app->add_option("--run-dir", run_dir, "run output directory");
    app->add_option("--variant", variant, "full | no_rcf | no_psf");
    app->add_option("--epochs", epochs, "training epochs");
    app->add_option("--max-iterations", max_iterations, "stop after this many optimizer steps (0 = no cap)");
    app->add_option("--points", n_points, "points per generated shape");
    app->add_option("--count", shapes_per_category, "shapes generated per category");
    app->add_option("--min-points", min_points, "inference: nodes below this size become leaves");
    app->add_option("--max-depth", max_depth, "inference: depth cap");
  }

  recseg::RunConfig resolve() const {
    recseg::RunConfig c = pl::load_config(config);
    if (seed) c.seed = *seed;
    if (data_dir) c.data_dir = *data_dir;
    if (run_dir) c.run_dir = *run_dir;
    if (variant) c.variant = *variant;
    if (epochs) c.epochs = *epochs;
    if (max_iterations) c.max_iterations = *max_iterations;
    if (n_points) c.n_points = *n_points;
    if (shapes_per_category) c.shapes_per_category = *shapes_per_category;
    if (min_points) c.min_points = *min_points;
    if (max_depth) c.max_depth = *max_depth;
    c.check();
    return c;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"recursive part segmentation of point clouds"};
  app.footer(kExitCodes);
  app.require_subcommand(1);

  Overrides gen_o, train_o, seg_o, eval_o;
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset and its train/test manifest");
  gen_o.add_to(gen);

  std::string shape, out, result, checkpoint, split = "test";
  bool detect = false;
  double tie_tol = 0.1;
  auto* hier = app.add_subcommand("build-hierarchy", "build and validate the ground-truth hierarchy of one shape");
  hier->add_option("--shape", shape, "shape record JSON")->required();
  hier->add_option("--out", out, "output hierarchy JSON")->required();
  hier->add_flag("--detect", detect, "detect symmetry groups instead of using the recorded ones");
  hier->add_option("--tie-tol", tie_tol, "relative tolerance under which merge distances count as tied");

  auto* tr = app.add_subcommand("train", "train a model on the manifest's train split");
  train_o.add_to(tr);

  auto* seg = app.add_subcommand("segment", "segment one shape with a trained checkpoint");
  seg_o.add_to(seg);
  seg->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  seg->add_option("--shape", shape, "shape record JSON")->required();
  seg->add_option("--out", out, "output result JSON")->required();

  auto* ev = app.add_subcommand("eval", "AP and semantic scores on a split");
  eval_o.add_to(ev);
  ev->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  ev->add_option("--split", split, "train | test");

  auto* ply = app.add_subcommand("export-ply", "write a colored ASCII PLY of a segmentation result");
  ply->add_option("--result", result, "segmentation result JSON")->required();
  ply->add_option("--shape", shape, "shape record JSON")->required();
  ply->add_option("--out", out, "output PLY")->required();

  std::uint64_t gc_seed = 11;
  auto* gc = app.add_subcommand("grad-check", "finite-difference check of every op and network block");
  gc->add_option("--seed", gc_seed, "seed for the reduced model and inputs");

  for (auto* sub : app.get_subcommands([](CLI::App*) { return true; })) sub->footer(kExitCodes);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << pl::error_line(pl::kInvalid, "usage", e.what()) << "\n";
    return pl::kInvalid;
  }

  try {
    if (*gen) {
      pl::cmd_gen_data(gen_o.resolve(), std::cout);
    } else if (*hier) {
      pl::cmd_build_hierarchy(shape, out, detect, tie_tol, std::cout);
    } else if (*tr) {
      pl::cmd_train(train_o.resolve(), std::cout);
    } else if (*seg) {
      pl::cmd_segment(seg_o.resolve(), checkpoint, shape, out, std::cout);
    } else if (*ev) {
      pl::cmd_eval(eval_o.resolve(), checkpoint, split, std::cout);
    } else if (*ply) {
      pl::cmd_export_ply(result, shape, out, std::cout);
    } else if (*gc) {
      if (!pl::cmd_grad_check(gc_seed, std::cout)) {
        std::cerr << pl::error_line(pl::kCheckFailed, "check", "gradient check exceeded 1e-4") << "\n";
        return pl::kCheckFailed;
      }
    }
  } catch (const recseg::Error& e) {
    const int code = pl::exit_code(e.kind());
    std::cerr << pl::error_line(code, recseg::kind_name(e.kind()), e.what()) << "\n";
    return code;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << pl::error_line(pl::kIo, "io", e.what()) << "\n";
    return pl::kIo;
  } catch (const std::exception& e) {
    std::cerr << pl::error_line(pl::kInternal, "internal", e.what()) << "\n";
    return pl::kInternal;
  }
  return pl::kOk;
}
