#include "hinet/instances.hpp"

namespace hinet {

Hierarchy random_hierarchy(Rng& rng, HierarchyKind kind, const InstanceLimits& limits) {
  const std::size_t height = 1 + rng.below(limits.max_height);
  std::vector<std::size_t> sizes;
  for (std::size_t l = 0; l < height; ++l) sizes.push_back(1 + rng.below(limits.max_width));

  std::vector<Edge> edges;
  for (std::size_t l = 1; l < height; ++l) {
    for (std::size_t c = 0; c < sizes[l]; ++c) {
      if (kind == HierarchyKind::Tree) {
        edges.push_back({l, rng.below(sizes[l - 1]), c});
        continue;
      }
      std::vector<std::size_t> parents;
      for (std::size_t p = 0; p < sizes[l - 1]; ++p) {
        if (rng.below(2) == 1) parents.push_back(p);
      }
      if (parents.empty()) parents.push_back(rng.below(sizes[l - 1]));
      for (std::size_t p : parents) edges.push_back({l, p, c});
    }
  }
  return Hierarchy(std::move(sizes), std::move(edges), kind);
}

LevelPosteriors random_posteriors(const Hierarchy& hierarchy, Rng& rng) {
  LevelPosteriors out;
  for (std::size_t l = 0; l <= hierarchy.height(); ++l) {
    std::vector<double> level(level_output_size(hierarchy, l));
    double sum = 0.0;
    for (double& v : level) {
      v = rng.exponential();
      sum += v;
    }
    for (double& v : level) v /= sum;
    out.levels.push_back(std::move(level));
  }
  return out;
}

Instance make_instance(std::uint64_t seed, std::size_t index, const InstanceLimits& limits) {
  Rng rng(seed + 0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(index) + 1));
  const auto kind = index % 2 == 0 ? HierarchyKind::Tree : HierarchyKind::Dag;
  Hierarchy hierarchy = random_hierarchy(rng, kind, limits);
  LevelPosteriors posteriors = random_posteriors(hierarchy, rng);
  std::string descriptor =
      "seed=" + std::to_string(seed) + " index=" + std::to_string(index) + " " + summarize(hierarchy);
  return {std::move(hierarchy), std::move(posteriors), std::move(descriptor)};
}

std::string summarize(const Hierarchy& hierarchy) {
  std::string out = hierarchy.kind() == HierarchyKind::Tree ? "tree" : "dag";
  out += " levels=[";
  for (std::size_t l = 0; l < hierarchy.height(); ++l) {
    if (l > 0) out += ',';
    out += std::to_string(hierarchy.level_size(l));
  }
  out += "] edges=" + std::to_string(hierarchy.edges().size());
  return out;
}

}  // namespace hinet
