#pragma once

// Datasets of (feature vector, trace) pairs.
//
// Text format, one sample per line:
//
//   0.25,-1.5,3e-05<TAB>A/C
//
// Features are comma-separated decimals with '.' as separator, the label is
// the trace's node names joined by '/'. '#' starts a comment line.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "hinet/hierarchy.hpp"

namespace hinet {

struct Dataset {
  std::size_t input_dim = 0;
  std::vector<std::vector<double>> features;
  std::vector<Trace> labels;
  std::uint64_t spec_hash = 0;

  std::size_t size() const { return labels.size(); }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

// Throws Error(MalformedInput) on empty data, ragged features, non-finite
// values or labels that are not valid traces.
void validate_dataset(const Dataset& dataset, const Hierarchy& hierarchy);

struct SyntheticConfig {
  std::size_t samples_per_trace = 10;
  double cluster_spread = 0.1;
  std::size_t input_dim = 16;
  std::uint64_t seed = 1;
};

// One Gaussian blob per valid trace, centered uniformly in [-1, 1]^input_dim.
// Samples are grouped by trace in enumeration order.
Dataset generate_synthetic(const Hierarchy& hierarchy, const SyntheticConfig& config,
                           std::size_t cap = kDefaultTraceCap);

std::string to_text(const Dataset& dataset, const Hierarchy& hierarchy);
Dataset parse_dataset(std::string_view text, const Hierarchy& hierarchy);
void save_dataset(const std::filesystem::path& path, const Dataset& dataset,
                  const Hierarchy& hierarchy);
Dataset load_dataset(const std::filesystem::path& path, const Hierarchy& hierarchy);

// Seeded split into (train, test) with round(fraction * N) training samples.
// Stratified by trace when every trace present has at least two samples.
std::pair<Dataset, Dataset> split(const Dataset& dataset, double fraction, std::uint64_t seed);

struct Misroute {
  Trace gold;
  Trace predicted;
  std::size_t count = 0;
};

struct EvalReport {
  std::size_t samples = 0;
  double trace_accuracy = 0.0;
  // Entry l: fraction of samples whose predicted symbol at level l (a node,
  // or stop beyond the trace depth) matches the gold one.
  std::vector<double> per_level_accuracy;
  // Most frequent wrong predictions, by count.
  std::vector<Misroute> confusion;
};

using Predictor = std::function<Trace(std::span<const double>)>;

EvalReport evaluate(const Predictor& predict, const Dataset& dataset, const Hierarchy& hierarchy,
                    std::size_t top_misroutes = 5);

std::string format_report(const EvalReport& report, const Hierarchy& hierarchy);

}  // namespace hinet
