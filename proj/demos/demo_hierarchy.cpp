// Generates one shape per category and prints its ground-truth hierarchy.
#include <iostream>

#include "recseg/data.hpp"

int main(int argc, char** argv) {
  const std::uint64_t seed = argc > 1 ? std::stoull(argv[1]) : 3;
  for (const auto& cat : recseg::data::categories()) {
    const auto rec = recseg::data::generate_shape(cat, seed, 512);
    const auto h = recseg::data::record_hierarchy(rec);
    std::cout << cat << ": " << rec.parts.size() << " parts, " << rec.groups.size() << " symmetry groups, "
              << recseg::count_nodes(h.root) << " tree nodes\n";
    recseg::visit_preorder(h.root, [](const recseg::HierNode& n, int depth) {
      std::cout << std::string(2 * static_cast<std::size_t>(depth + 1), ' ') << recseg::to_string(n.kind) << " {";
      for (std::size_t i = 0; i < n.part_ids.size(); ++i) std::cout << (i ? "," : "") << n.part_ids[i];
      std::cout << "}";
      if (n.symmetry)
        std::cout << " " << recseg::to_string(n.symmetry->kind) << " fold " << n.symmetry->fold;
      std::cout << "\n";
    });
  }
}
