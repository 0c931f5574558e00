// Fits the full model to a handful of shapes and segments one of them.
#include <iostream>

#include "recseg/eval.hpp"
#include "recseg/ply.hpp"

int main(int argc, char** argv) {
  using namespace recseg;
  const std::size_t steps = argc > 1 ? std::stoul(argv[1]) : 150;
  std::vector<train::Sample> samples;
  for (std::uint64_t s = 0; s < 3; ++s) samples.push_back(train::make_sample(data::generate_shape("table", 40 + s, 512)));

  nets::NetDims dims;
  dims.semantic_classes = static_cast<int>(data::semantic_classes().size());
  nets::ModelParams<float> params(dims, 1);
  train::TrainConfig cfg;
  cfg.batch_size = samples.size();
  cfg.epochs = steps;
  train::train(samples, params, cfg, [](const train::IterLog& l) {
    if (l.iter % 25 == 0) std::cout << "iter " << l.iter << " total " << l.total << "\n";
    return true;
  });

  const auto res = model::infer_segment(params, samples[0].cloud, model::InferenceConfig{});
  const auto cls = model::predict_leaf_semantics(res, params, dims.semantic_classes);
  for (std::size_t i = 0; i < res.parts.size(); ++i)
    std::cout << "part " << res.parts[i].id << ": " << res.parts[i].point_ids.size() << " points, "
              << data::semantic_classes()[static_cast<std::size_t>(cls[i])] << ", confidence "
              << res.parts[i].confidence << "\n";
  data::write_text("demo_table.ply", ply::write_ply(samples[0].cloud, res.instance_id));
  std::cout << "wrote demo_table.ply\n";
}
