#pragma once

// MAP trace decoding over per-level posteriors.
//
// A trace a_0..a_{d-1} ending at the stop neuron of level d scores
//
//   ln y0[a_0] + ln y1[a_1] + ... + ln y_{d-1}[a_{d-1}] + ln y_d[stop]
//
// where y_l is the posterior vector of level l (stop entry last). The
// downpour pass computes the best prefix score ending at every node level by
// level, collects the stop score at every level, and backtraces from the
// best stop. Only mask edges may be followed; zero probabilities become -inf.
//
// Ties: the shallowest stop level wins, and each backpointer keeps the
// smallest parent index. Among equal-scoring traces of equal depth this
// selects the one whose node list is smallest when compared from the deepest
// node upwards; `precedes_on_tie` states that order so the brute-force oracle
// breaks ties the same way.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hinet/hierarchy.hpp"

namespace hinet {

// Per-level probability vectors for levels 0..h, shaped as level_output_size.
struct LevelPosteriors {
  std::vector<std::vector<double>> levels;
};

// Throws Error(MalformedInput) unless shapes match `masks`, every entry is
// finite and >= 0, and every level sums to 1 within `tolerance`.
void validate_posteriors(const LevelPosteriors& posteriors, std::span<const LevelMask> masks,
                         double tolerance = 1e-9);

// Text form: one line per level, space-separated decimals, stop entry last.
// The line for the virtual stop level may be omitted. Each level must sum to
// 1 within 1e-6 and is then divided by its sum.
LevelPosteriors parse_posteriors(std::string_view text, const Hierarchy& hierarchy);
std::string to_text(const LevelPosteriors& posteriors);

struct ScoredTrace {
  Trace trace;
  double log_score;

  // Level whose stop neuron terminates the trace (0-based, equals depth).
  std::size_t terminal_level() const { return trace.depth(); }
};

// DP state of the downpour pass, all in log space.
struct DownpourTable {
  // [level][node]: best prefix score ending at the node.
  std::vector<std::vector<double>> node_values;
  // [level][node]: parent chosen at level - 1 (unused at level 0).
  std::vector<std::vector<std::size_t>> node_parents;
  // [level] for levels 1..h: best score of a trace stopping at that level.
  // Entry 0 is -inf and never selected.
  std::vector<double> stop_values;
  std::vector<std::size_t> stop_parents;
};

DownpourTable downpour_table(const LevelPosteriors& posteriors,
                             std::span<const LevelMask> masks);
ScoredTrace downpour(const LevelPosteriors& posteriors, std::span<const LevelMask> masks);

// Score of a complete trace (including its stop term). Throws
// Error(Validation) when the trace does not follow mask edges.
double trace_score(const Trace& trace, const LevelPosteriors& posteriors,
                   std::span<const LevelMask> masks);
// Score of the node sequence alone, without a stop term.
double prefix_score(std::span<const std::size_t> nodes, const LevelPosteriors& posteriors);

// Tie order shared by downpour and the oracle.
bool precedes_on_tie(const Trace& a, const Trace& b);

// Exhaustive maximum over enumerate_traces.
ScoredTrace brute_force_map(const LevelPosteriors& posteriors, std::span<const LevelMask> masks,
                            const Hierarchy& hierarchy, std::size_t cap = kDefaultTraceCap);

struct Counterexample {
  std::string property;
  std::vector<std::size_t> sequence;
  bool terminated = false;  // sequence score includes the stop term
  double score = 0.0;
  double bound = 0.0;
};

std::string describe(const Counterexample& counterexample, const Hierarchy& hierarchy);

struct TheoremReport {
  std::string instance;
  bool theorem1_ok = true;
  bool theorem2_ok = true;
  bool theorem3_ok = true;
  std::optional<Counterexample> counterexample;
  ScoredTrace downpour_result;
  ScoredTrace oracle_result;

  bool all_ok() const { return theorem1_ok && theorem2_ok && theorem3_ok; }
};

// Verifies by exhaustion:
//  1. every DP node value equals the best prefix ending there and bounds
//     every sequence passing through or ending at that node;
//  2. a stop value that dominates its level bounds every deeper sequence;
//  3. downpour and brute force agree on score (within 1e-12) and trace.
TheoremReport check_theorems(const LevelPosteriors& posteriors, std::span<const LevelMask> masks,
                             const Hierarchy& hierarchy, std::string instance = {},
                             std::size_t cap = kDefaultTraceCap);

struct MonotoneReport {
  std::size_t pairs_checked = 0;
  std::optional<Counterexample> counterexample;
};

// For every enumerated sequence and each of its proper prefixes, the
// extended score (with or without its stop term) never exceeds the prefix's.
MonotoneReport check_monotone_extension(const LevelPosteriors& posteriors,
                                        const Hierarchy& hierarchy,
                                        std::size_t cap = kDefaultTraceCap);

}  // namespace hinet
