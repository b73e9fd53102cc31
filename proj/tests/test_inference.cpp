#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "doctest.h"
#include "hinet/error.hpp"
#include "hinet/inference.hpp"
#include "hinet/instances.hpp"
#include "hinet/rng.hpp"
#include "test_support.hpp"

using namespace hinet;
using namespace hinet::testing;

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::Validation;
}

// Relabels the nodes of one level: new index perm[old].
struct Relabeled {
  Hierarchy hierarchy;
  LevelPosteriors posteriors;
};

Relabeled relabel(const Hierarchy& h, const LevelPosteriors& y, std::size_t level,
                  const std::vector<std::size_t>& perm) {
  std::vector<std::size_t> sizes(h.level_sizes().begin(), h.level_sizes().end());
  std::vector<Edge> edges;
  for (Edge e : h.edges()) {
    if (e.child_level == level) e.child = perm[e.child];
    if (e.child_level == level + 1) e.parent = perm[e.parent];
    edges.push_back(e);
  }
  LevelPosteriors out = y;
  for (std::size_t old = 0; old < sizes[level]; ++old) out.levels[level][perm[old]] = y.levels[level][old];
  return {Hierarchy(sizes, edges, h.kind()), out};
}

}  // namespace

TEST_SUITE_BEGIN("inference");

TEST_CASE("worked example") {
  const Hierarchy h = parse_hierarchy(kSmallTree);
  const auto masks = build_masks(h);
  const LevelPosteriors y = worked_posteriors();

  SUBCASE("downpour") {
    const ScoredTrace best = downpour(y, masks);
    CHECK(best.trace == Trace{{1, 1}});
    CHECK(best.terminal_level() == 2);
    CHECK(best.log_score == doctest::Approx(std::log(0.2)).epsilon(1e-14));
    const DownpourTable table = downpour_table(y, masks);
    CHECK(table.stop_values[1] == doctest::Approx(std::log(0.6 * 0.2)).epsilon(1e-14));
    CHECK(table.stop_values[2] == doctest::Approx(std::log(0.2)).epsilon(1e-14));
    CHECK(table.stop_parents[2] == 1);
  }
  SUBCASE("trace scores") {
    CHECK(trace_score({{1, 1}}, y, masks) == doctest::Approx(std::log(0.2)).epsilon(1e-14));
    CHECK(trace_score({{0}}, y, masks) == doctest::Approx(std::log(0.12)).epsilon(1e-14));
    CHECK(trace_score({{0, 0}}, y, masks) == doctest::Approx(std::log(0.18)).epsilon(1e-14));
    CHECK(prefix_score(std::vector<std::size_t>{1, 1}, y) ==
          doctest::Approx(std::log(0.2)).epsilon(1e-14));
    CHECK(kind_of([&] { trace_score({{0, 1}}, y, masks); }) == ErrorKind::Validation);
  }
  SUBCASE("oracle and theorems") {
    const ScoredTrace oracle = brute_force_map(y, masks, h);
    CHECK(oracle.trace == Trace{{1, 1}});
    CHECK(oracle.log_score == doctest::Approx(std::log(0.2)).epsilon(1e-14));
    const TheoremReport report = check_theorems(y, masks, h);
    CHECK(report.all_ok());
    CHECK_FALSE(report.counterexample.has_value());
    CHECK(report.downpour_result.log_score == report.oracle_result.log_score);
  }
}

TEST_CASE("zero entries score -inf") {
  const Hierarchy h = parse_hierarchy(kSmallTree);
  const auto masks = build_masks(h);
  LevelPosteriors y = worked_posteriors();
  y.levels[1] = {0.5, 0.0, 0.5};
  CHECK(trace_score({{1, 1}}, y, masks) == kNegInf);
  const ScoredTrace best = downpour(y, masks);
  CHECK(best.trace == Trace{{0}});
  CHECK(best.log_score == doctest::Approx(std::log(0.3)));
  const TheoremReport report = check_theorems(y, masks, h);
  CHECK(report.all_ok());
}

TEST_CASE("every trace at -inf still decodes deterministically") {
  const Hierarchy h = parse_hierarchy(kSmallTree);
  const auto masks = build_masks(h);
  const LevelPosteriors y{{{1.0, 0.0}, {0.0, 1.0, 0.0}, {1.0}}};
  const ScoredTrace best = downpour(y, masks);
  const ScoredTrace oracle = brute_force_map(y, masks, h);
  CHECK(best.log_score == kNegInf);
  CHECK(best.trace == oracle.trace);
  CHECK(best.trace == Trace{{0}});
  CHECK(check_theorems(y, masks, h).all_ok());
}

TEST_CASE("height one") {
  const Hierarchy h({1}, {}, HierarchyKind::Tree);
  const auto masks = build_masks(h);
  const ScoredTrace best = downpour({{{1.0}, {1.0}}}, masks);
  CHECK(best.trace == Trace{{0}});
  CHECK(best.log_score == 0.0);
}

TEST_CASE("ties") {
  const Hierarchy h = parse_hierarchy(kSmallTree);
  const auto masks = build_masks(h);
  const LevelPosteriors y = uniform_posteriors();
  SUBCASE("shallowest stop then smallest parent") {
    CHECK(downpour(y, masks).trace == Trace{{0}});
    CHECK(brute_force_map(y, masks, h).trace == Trace{{0}});
    CHECK(check_theorems(y, masks, h).all_ok());
  }
  SUBCASE("tie order") {
    CHECK(precedes_on_tie({{1}}, {{0, 0}}));
    CHECK(precedes_on_tie({{0}}, {{1}}));
    CHECK(precedes_on_tie({{1, 0}}, {{0, 1}}));
    CHECK_FALSE(precedes_on_tie({{0, 1}}, {{1, 0}}));
    CHECK_FALSE(precedes_on_tie({{0}}, {{0}}));
  }
  SUBCASE("dag tie across parents keeps the smallest parent") {
    const Hierarchy dag({2, 1}, {{1, 0, 0}, {1, 1, 0}}, HierarchyKind::Dag);
    const auto dag_masks = build_masks(dag);
    const LevelPosteriors yy{{{0.5, 0.5}, {0.9, 0.1}, {1.0}}};
    CHECK(downpour(yy, dag_masks).trace == Trace{{0, 0}});
    CHECK(brute_force_map(yy, dag_masks, dag).trace == Trace{{0, 0}});
  }
}

TEST_CASE("property: downpour equals an independent exhaustive maximum") {
  for (std::size_t i = 0; i < 300; ++i) {
    const Instance inst = make_instance(77, i);
    const auto masks = build_masks(inst.hierarchy);
    const ScoredTrace best = downpour(inst.posteriors, masks);
    double oracle = kNegInf;
    std::vector<std::size_t> arg;
    for (const auto& path : all_paths(inst.hierarchy)) {
      const double s = oracle_log_score(path, inst.posteriors);
      if (s > oracle) {
        oracle = s;
        arg = path;
      }
    }
    CHECK(best.log_score == doctest::Approx(oracle).epsilon(1e-12));
    CHECK(best.trace.nodes == arg);
  }
}

TEST_CASE("property: permutation equivariance") {
  Rng rng(4);
  for (std::size_t i = 0; i < 200; ++i) {
    const Instance inst = make_instance(91, i);
    const Hierarchy& h = inst.hierarchy;
    const std::size_t level = rng.below(h.height());
    std::vector<std::size_t> perm(h.level_size(level));
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(std::span<std::size_t>(perm));
    const Relabeled r = relabel(h, inst.posteriors, level, perm);

    const ScoredTrace a = downpour(inst.posteriors, build_masks(h));
    const ScoredTrace b = downpour(r.posteriors, build_masks(r.hierarchy));
    Trace mapped = a.trace;
    if (level < mapped.depth()) mapped.nodes[level] = perm[mapped.nodes[level]];
    CHECK(b.trace == mapped);
    CHECK(b.log_score == doctest::Approx(a.log_score).epsilon(1e-12));
  }
}

TEST_CASE("property: repeated calls are identical") {
  const Instance inst = make_instance(3, 1);
  const auto masks = build_masks(inst.hierarchy);
  const ScoredTrace a = downpour(inst.posteriors, masks);
  const ScoredTrace b = downpour(inst.posteriors, masks);
  CHECK(a.trace == b.trace);
  CHECK(a.log_score == b.log_score);
}

TEST_CASE("theorem and monotone checks on random instances") {
  for (std::size_t i = 0; i < 100; ++i) {
    const Instance inst = make_instance(13, i);
    const auto masks = build_masks(inst.hierarchy);
    const TheoremReport report = check_theorems(inst.posteriors, masks, inst.hierarchy, inst.descriptor);
    CHECK_MESSAGE(report.all_ok(), report.instance);
    const MonotoneReport mono = check_monotone_extension(inst.posteriors, inst.hierarchy);
    CHECK_FALSE(mono.counterexample.has_value());
    CHECK(mono.pairs_checked > 0);
  }
}

TEST_CASE("theorem check reports a counterexample for a corrupted input") {
  // Entries above 1 break the monotone bound that the stop argument rests on.
  const Hierarchy h = parse_hierarchy(kSmallTree);
  const auto masks = build_masks(h);
  const LevelPosteriors y{{{0.6, 0.4}, {3.0, 0.5, 0.2}, {1.0}}};
  const MonotoneReport mono = check_monotone_extension(y, h);
  REQUIRE(mono.counterexample.has_value());
  CHECK(describe(*mono.counterexample, h).find("A") != std::string::npos);
}

TEST_CASE("posterior validation") {
  const Hierarchy h = parse_hierarchy(kSmallTree);
  const auto masks = build_masks(h);
  CHECK_NOTHROW(validate_posteriors(worked_posteriors(), masks));
  LevelPosteriors bad = worked_posteriors();
  bad.levels[1] = {0.3, 0.5};
  CHECK(kind_of([&] { validate_posteriors(bad, masks); }) == ErrorKind::MalformedInput);
  bad = worked_posteriors();
  bad.levels[0] = {0.6, 0.3};
  CHECK(kind_of([&] { validate_posteriors(bad, masks); }) == ErrorKind::MalformedInput);
  bad = worked_posteriors();
  bad.levels[0] = {1.2, -0.2};
  CHECK(kind_of([&] { validate_posteriors(bad, masks); }) == ErrorKind::MalformedInput);
  bad = worked_posteriors();
  bad.levels.pop_back();
  CHECK(kind_of([&] { downpour(bad, masks); }) == ErrorKind::MalformedInput);
}

TEST_CASE("posterior text format") {
  const Hierarchy h = parse_hierarchy(kSmallTree);
  SUBCASE("virtual level may be omitted") {
    const LevelPosteriors y = parse_posteriors("0.6 0.4\n0.3 0.5 0.2\n", h);
    REQUIRE(y.levels.size() == 3);
    CHECK(y.levels[2] == std::vector<double>{1.0});
  }
  SUBCASE("renormalized within tolerance") {
    const LevelPosteriors y = parse_posteriors("# c\n0.6 0.4000005\n0.3 0.5 0.2\n1\n", h);
    CHECK(y.levels[0][0] + y.levels[0][1] == doctest::Approx(1.0).epsilon(1e-15));
  }
  SUBCASE("bad sum names the line") {
    try {
      parse_posteriors("0.6 0.4\n0.3 0.3 0.2\n", h);
      FAIL("expected an error");
    } catch (const ParseError& e) {
      CHECK(e.kind() == ErrorKind::MalformedInput);
      CHECK(e.line() == 2);
    }
  }
  SUBCASE("shape and syntax errors") {
    CHECK(kind_of([&] { parse_posteriors("0.6 0.4\n", h); }) == ErrorKind::MalformedInput);
    CHECK(kind_of([&] { parse_posteriors("0.6 0.4\n0.5 0.5\n", h); }) == ErrorKind::MalformedInput);
    CHECK(kind_of([&] { parse_posteriors("0.6 x\n0.3 0.5 0.2\n", h); }) ==
          ErrorKind::MalformedInput);
    CHECK(kind_of([&] { parse_posteriors("0.6 0.4\n0.3 0.5 0.2\n1\n1\n", h); }) ==
          ErrorKind::MalformedInput);
    CHECK(kind_of([&] { parse_posteriors("nan 0.4\n0.3 0.5 0.2\n", h); }) ==
          ErrorKind::MalformedInput);
  }
  SUBCASE("text round trip") {
    const LevelPosteriors y = worked_posteriors();
    CHECK(parse_posteriors(to_text(y), h).levels == y.levels);
  }
}

TEST_SUITE_END();
