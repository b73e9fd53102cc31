#include "hinet/inference.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <limits>

#include "hinet/error.hpp"

namespace hinet {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

[[noreturn]] void malformed(const std::string& message) {
  throw Error(ErrorKind::MalformedInput, message);
}

std::string format_full(double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

bool same_score(double a, double b) {
  if (a == b) return true;
  return std::abs(a - b) <= 1e-12;
}

}  // namespace

void validate_posteriors(const LevelPosteriors& posteriors, std::span<const LevelMask> masks,
                         double tolerance) {
  if (masks.empty()) malformed("no level masks");
  if (posteriors.levels.size() != masks.size() + 1) {
    malformed("expected " + std::to_string(masks.size() + 1) + " posterior levels, got " +
              std::to_string(posteriors.levels.size()));
  }
  for (std::size_t l = 0; l < posteriors.levels.size(); ++l) {
    const auto& level = posteriors.levels[l];
    const std::size_t expected = l == 0 ? masks[0].rows() : masks[l - 1].cols();
    if (level.size() != expected) {
      malformed("posterior level " + std::to_string(l + 1) + " has " +
                std::to_string(level.size()) + " entries, expected " + std::to_string(expected));
    }
    double sum = 0.0;
    for (double p : level) {
      if (!std::isfinite(p) || p < 0.0) {
        malformed("posterior level " + std::to_string(l + 1) + " has an invalid entry");
      }
      sum += p;
    }
    if (std::abs(sum - 1.0) > tolerance) {
      malformed("posterior level " + std::to_string(l + 1) + " sums to " + format_full(sum));
    }
  }
}

LevelPosteriors parse_posteriors(std::string_view text, const Hierarchy& hierarchy) {
  LevelPosteriors out;
  std::vector<std::size_t> line_of;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);

    std::vector<double> values;
    std::size_t i = 0;
    while (i < line.size()) {
      while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
      if (i == line.size()) break;
      std::size_t j = i;
      while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(line.data() + i, line.data() + j, v);
      if (ec != std::errc() || ptr != line.data() + j) {
        throw ParseError(ErrorKind::MalformedInput, line_no,
                         "not a number: '" + std::string(line.substr(i, j - i)) + "'");
      }
      values.push_back(v);
      i = j;
    }
    if (values.empty()) continue;
    out.levels.push_back(std::move(values));
    line_of.push_back(line_no);
  }

  const std::size_t h = hierarchy.height();
  if (out.levels.size() == h) {
    out.levels.push_back({1.0});
    line_of.push_back(line_no);
  }
  if (out.levels.size() != h + 1) {
    malformed("expected " + std::to_string(h) + " or " + std::to_string(h + 1) +
              " posterior lines, got " + std::to_string(out.levels.size()));
  }
  for (std::size_t l = 0; l <= h; ++l) {
    auto& level = out.levels[l];
    const std::size_t expected = level_output_size(hierarchy, l);
    if (level.size() != expected) {
      throw ParseError(ErrorKind::MalformedInput, line_of[l],
                       "level " + std::to_string(l + 1) + " needs " + std::to_string(expected) +
                           " entries, got " + std::to_string(level.size()));
    }
    double sum = 0.0;
    for (double p : level) {
      if (!std::isfinite(p) || p < 0.0) {
        throw ParseError(ErrorKind::MalformedInput, line_of[l], "negative or non-finite entry");
      }
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-6) {
      throw ParseError(ErrorKind::MalformedInput, line_of[l],
                       "level " + std::to_string(l + 1) + " sums to " + format_full(sum));
    }
    for (double& p : level) p /= sum;
  }
  return out;
}

std::string to_text(const LevelPosteriors& posteriors) {
  std::string out;
  char buf[32];
  for (const auto& level : posteriors.levels) {
    for (std::size_t i = 0; i < level.size(); ++i) {
      if (i > 0) out += ' ';
      auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, level[i]);
      out.append(buf, ptr);
    }
    out += '\n';
  }
  return out;
}

DownpourTable downpour_table(const LevelPosteriors& posteriors,
                             std::span<const LevelMask> masks) {
  validate_posteriors(posteriors, masks);
  const std::size_t h = masks.size();
  DownpourTable table;
  table.node_values.resize(h + 1);
  table.node_parents.resize(h + 1);
  table.stop_values.assign(h + 1, kNegInf);
  table.stop_parents.assign(h + 1, kNone);

  for (double p : posteriors.levels[0]) table.node_values[0].push_back(std::log(p));
  table.node_parents[0].assign(table.node_values[0].size(), kNone);

  for (std::size_t l = 1; l <= h; ++l) {
    const LevelMask& mask = masks[l - 1];
    const auto& above = table.node_values[l - 1];
    const auto& y = posteriors.levels[l];

    // Real columns first, then the stop column, all with the same rule.
    auto best_parent = [&](std::size_t column) {
      const double local = std::log(y[column]);
      double best = kNegInf;
      std::size_t parent = kNone;
      for (std::size_t a = 0; a < mask.rows(); ++a) {
        if (!mask.at(a, column)) continue;
        const double candidate = above[a] + local;
        if (parent == kNone || candidate > best) {
          best = candidate;
          parent = a;
        }
      }
      return std::pair{best, parent};
    };

    for (std::size_t b = 0; b < mask.real_columns(); ++b) {
      auto [value, parent] = best_parent(b);
      table.node_values[l].push_back(value);
      table.node_parents[l].push_back(parent);
    }
    auto [stop, parent] = best_parent(mask.stop_column());
    table.stop_values[l] = stop;
    table.stop_parents[l] = parent;
  }
  return table;
}

ScoredTrace downpour(const LevelPosteriors& posteriors, std::span<const LevelMask> masks) {
  const DownpourTable table = downpour_table(posteriors, masks);
  const std::size_t h = masks.size();

  std::size_t best_level = 0;
  for (std::size_t l = 1; l <= h; ++l) {
    if (table.stop_parents[l] == kNone) continue;
    if (best_level == 0 || table.stop_values[l] > table.stop_values[best_level]) best_level = l;
  }
  if (best_level == 0) malformed("no level has a reachable stop neuron; masks are malformed");

  Trace trace;
  trace.nodes.resize(best_level);
  std::size_t node = table.stop_parents[best_level];
  for (std::size_t l = best_level; l-- > 0;) {
    trace.nodes[l] = node;
    if (l > 0) node = table.node_parents[l][node];
  }
  return {std::move(trace), table.stop_values[best_level]};
}

double prefix_score(std::span<const std::size_t> nodes, const LevelPosteriors& posteriors) {
  double score = 0.0;
  for (std::size_t l = 0; l < nodes.size(); ++l) {
    const double term = std::log(posteriors.levels.at(l).at(nodes[l]));
    score = l == 0 ? term : score + term;
  }
  return score;
}

double trace_score(const Trace& trace, const LevelPosteriors& posteriors,
                   std::span<const LevelMask> masks) {
  const std::size_t d = trace.depth();
  auto reject = [](const std::string& why) { throw Error(ErrorKind::Validation, why); };
  if (d == 0 || d > masks.size()) reject("trace depth out of range");
  if (posteriors.levels.size() != masks.size() + 1) malformed("posterior level count mismatch");
  if (trace.nodes[0] >= masks[0].rows()) reject("trace node out of range at level 1");
  for (std::size_t l = 1; l < d; ++l) {
    const LevelMask& mask = masks[l - 1];
    if (trace.nodes[l] >= mask.real_columns() || !mask.at(trace.nodes[l - 1], trace.nodes[l])) {
      reject("trace leaves the mask at level " + std::to_string(l + 1));
    }
  }
  const LevelMask& stop_mask = masks[d - 1];
  if (!stop_mask.at(trace.nodes[d - 1], stop_mask.stop_column())) {
    reject("trace cannot stop at level " + std::to_string(d + 1));
  }
  return prefix_score(trace.nodes, posteriors) + std::log(posteriors.levels[d].back());
}

bool precedes_on_tie(const Trace& a, const Trace& b) {
  if (a.depth() != b.depth()) return a.depth() < b.depth();
  for (std::size_t i = a.depth(); i-- > 0;) {
    if (a.nodes[i] != b.nodes[i]) return a.nodes[i] < b.nodes[i];
  }
  return false;
}

ScoredTrace brute_force_map(const LevelPosteriors& posteriors, std::span<const LevelMask> masks,
                            const Hierarchy& hierarchy, std::size_t cap) {
  validate_posteriors(posteriors, masks);
  const std::vector<Trace> traces = enumerate_traces(hierarchy, cap);
  ScoredTrace best{traces.front(), trace_score(traces.front(), posteriors, masks)};
  for (std::size_t i = 1; i < traces.size(); ++i) {
    const double score = trace_score(traces[i], posteriors, masks);
    if (score > best.log_score ||
        (score == best.log_score && precedes_on_tie(traces[i], best.trace))) {
      best = {traces[i], score};
    }
  }
  return best;
}

std::string describe(const Counterexample& counterexample, const Hierarchy& hierarchy) {
  std::string seq;
  for (std::size_t l = 0; l < counterexample.sequence.size(); ++l) {
    if (l > 0) seq += '/';
    seq += hierarchy.name(l, counterexample.sequence[l]);
  }
  if (counterexample.terminated) seq += "/<stop>";
  return counterexample.property + ": sequence " + seq + " score " +
         format_full(counterexample.score) + " bound " + format_full(counterexample.bound);
}

TheoremReport check_theorems(const LevelPosteriors& posteriors, std::span<const LevelMask> masks,
                             const Hierarchy& hierarchy, std::string instance, std::size_t cap) {
  TheoremReport report;
  report.instance = std::move(instance);
  const DownpourTable table = downpour_table(posteriors, masks);
  const std::vector<Trace> paths = enumerate_traces(hierarchy, cap);
  const std::size_t h = hierarchy.height();

  auto record = [&](bool& flag, std::string property, const Trace& path, bool terminated,
                    double score, double bound) {
    flag = false;
    if (!report.counterexample) {
      report.counterexample =
          Counterexample{std::move(property), path.nodes, terminated, score, bound};
    }
  };

  // Theorem 1: DP value at a node is the best prefix ending there and bounds
  // every sequence through it.
  std::vector<std::vector<double>> best_prefix(h);
  for (std::size_t l = 0; l < h; ++l) best_prefix[l].assign(hierarchy.level_size(l), kNegInf);
  std::vector<std::vector<bool>> seen(h);
  for (std::size_t l = 0; l < h; ++l) seen[l].assign(hierarchy.level_size(l), false);

  std::vector<double> path_prefix(paths.size());
  std::vector<double> path_full(paths.size());
  for (std::size_t i = 0; i < paths.size(); ++i) {
    const Trace& path = paths[i];
    const std::size_t m = path.depth();
    const std::size_t last = path.nodes[m - 1];
    const double prefix = prefix_score(path.nodes, posteriors);
    const double full = trace_score(path, posteriors, masks);
    path_prefix[i] = prefix;
    path_full[i] = full;

    if (!seen[m - 1][last] || prefix > best_prefix[m - 1][last]) {
      best_prefix[m - 1][last] = prefix;
      seen[m - 1][last] = true;
    }
    for (std::size_t k = 0; k < m; ++k) {
      const double bound = table.node_values[k][path.nodes[k]];
      if (prefix > bound) record(report.theorem1_ok, "theorem1", path, false, prefix, bound);
      if (full > bound) record(report.theorem1_ok, "theorem1", path, true, full, bound);
    }
  }
  for (std::size_t l = 0; l < h; ++l) {
    for (std::size_t a = 0; a < hierarchy.level_size(l); ++a) {
      const double dp = table.node_values[l][a];
      if (!seen[l][a] || dp != best_prefix[l][a]) {
        Trace where;
        where.nodes.assign(1, a);
        record(report.theorem1_ok, "theorem1 (dp value at level " + std::to_string(l + 1) + ")",
               where, false, dp, best_prefix[l][a]);
      }
    }
  }

  // Theorem 2: a stop value dominating its level bounds every deeper sequence.
  for (std::size_t n = 1; n <= h; ++n) {
    const double stop = table.stop_values[n];
    bool dominates = true;
    if (n < h) {
      for (double v : table.node_values[n]) dominates = dominates && stop >= v;
    }
    if (!dominates) continue;
    for (std::size_t i = 0; i < paths.size(); ++i) {
      if (paths[i].depth() <= n) continue;
      if (path_prefix[i] > stop) {
        record(report.theorem2_ok, "theorem2", paths[i], false, path_prefix[i], stop);
      }
      if (path_full[i] > stop) {
        record(report.theorem2_ok, "theorem2", paths[i], true, path_full[i], stop);
      }
    }
  }

  // Theorem 3: downpour equals the exhaustive maximum.
  report.downpour_result = downpour(posteriors, masks);
  report.oracle_result = brute_force_map(posteriors, masks, hierarchy, cap);
  if (!same_score(report.downpour_result.log_score, report.oracle_result.log_score) ||
      report.downpour_result.trace != report.oracle_result.trace) {
    record(report.theorem3_ok, "theorem3", report.downpour_result.trace, true,
           report.downpour_result.log_score, report.oracle_result.log_score);
  }
  for (std::size_t i = 0; i < paths.size(); ++i) {
    if (path_full[i] > report.downpour_result.log_score) {
      record(report.theorem3_ok, "theorem3", paths[i], true, path_full[i],
             report.downpour_result.log_score);
    }
  }
  return report;
}

MonotoneReport check_monotone_extension(const LevelPosteriors& posteriors,
                                        const Hierarchy& hierarchy, std::size_t cap) {
  MonotoneReport report;
  const std::vector<Trace> paths = enumerate_traces(hierarchy, cap);
  for (const Trace& path : paths) {
    const std::span<const std::size_t> nodes(path.nodes);
    const double extended = prefix_score(nodes, posteriors);
    const double terminated = extended + std::log(posteriors.levels.at(path.depth()).back());
    auto fail = [&](bool with_stop, double score, double bound) {
      if (!report.counterexample) {
        report.counterexample =
            Counterexample{"monotone extension", path.nodes, with_stop, score, bound};
      }
    };
    ++report.pairs_checked;
    if (terminated > extended) fail(true, terminated, extended);
    for (std::size_t k = 1; k < path.depth(); ++k) {
      const double prefix = prefix_score(nodes.first(k), posteriors);
      report.pairs_checked += 2;
      if (extended > prefix) fail(false, extended, prefix);
      if (terminated > prefix) fail(true, terminated, prefix);
    }
  }
  return report;
}

}  // namespace hinet
