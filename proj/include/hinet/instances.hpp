#pragma once

// Seeded random hierarchies and posteriors for property checks.

#include <cstddef>
#include <cstdint>
#include <string>

#include "hinet/hierarchy.hpp"
#include "hinet/inference.hpp"
#include "hinet/rng.hpp"

namespace hinet {

struct InstanceLimits {
  std::size_t max_height = 4;
  std::size_t max_width = 6;
};

// Tree: every child picks one uniform parent. Dag: every child keeps each
// possible parent with probability 1/2, and at least one.
Hierarchy random_hierarchy(Rng& rng, HierarchyKind kind, const InstanceLimits& limits = {});

// Flat Dirichlet draw per level.
LevelPosteriors random_posteriors(const Hierarchy& hierarchy, Rng& rng);

struct Instance {
  Hierarchy hierarchy;
  LevelPosteriors posteriors;
  std::string descriptor;
};

// Instance `index` of the stream keyed by `seed`; even indices are trees and
// odd ones DAGs.
Instance make_instance(std::uint64_t seed, std::size_t index, const InstanceLimits& limits = {});

// "tree levels=[2,3]" style summary.
std::string summarize(const Hierarchy& hierarchy);

}  // namespace hinet
