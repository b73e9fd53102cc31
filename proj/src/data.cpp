#include "hinet/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "hinet/error.hpp"
#include "hinet/rng.hpp"

namespace hinet {

namespace {

[[noreturn]] void malformed(const std::string& message) {
  throw Error(ErrorKind::MalformedInput, message);
}

void append_double(std::string& out, double value) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  out.append(buf, ptr);
}

std::string fixed6(double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", value);
  return buf;
}

Dataset subset(const Dataset& dataset, std::span<const std::size_t> indices) {
  Dataset out;
  out.input_dim = dataset.input_dim;
  out.spec_hash = dataset.spec_hash;
  for (std::size_t i : indices) {
    out.features.push_back(dataset.features[i]);
    out.labels.push_back(dataset.labels[i]);
  }
  return out;
}

}  // namespace

void validate_dataset(const Dataset& dataset, const Hierarchy& hierarchy) {
  if (dataset.size() == 0) malformed("dataset is empty");
  if (dataset.features.size() != dataset.labels.size()) {
    malformed("feature and label counts differ");
  }
  if (dataset.input_dim == 0) malformed("feature dimension must be positive");
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& row = dataset.features[i];
    if (row.size() != dataset.input_dim) {
      malformed("sample " + std::to_string(i) + " has " + std::to_string(row.size()) +
                " features, expected " + std::to_string(dataset.input_dim));
    }
    for (double v : row) {
      if (!std::isfinite(v)) malformed("sample " + std::to_string(i) + " has a non-finite feature");
    }
    if (!is_valid_trace(hierarchy, dataset.labels[i])) {
      malformed("sample " + std::to_string(i) + " has a label that is not a valid trace");
    }
  }
}

Dataset generate_synthetic(const Hierarchy& hierarchy, const SyntheticConfig& config,
                           std::size_t cap) {
  if (config.samples_per_trace == 0) {
    throw Error(ErrorKind::Validation, "samples_per_trace must be at least 1");
  }
  if (config.input_dim == 0) throw Error(ErrorKind::Validation, "input_dim must be at least 1");
  if (!(config.cluster_spread >= 0.0) || !std::isfinite(config.cluster_spread)) {
    throw Error(ErrorKind::Validation, "cluster_spread must be finite and non-negative");
  }
  const std::vector<Trace> traces = enumerate_traces(hierarchy, cap);

  Rng rng(config.seed);
  Dataset out;
  out.input_dim = config.input_dim;
  out.spec_hash = spec_hash(hierarchy);
  std::vector<double> center(config.input_dim);
  for (const Trace& trace : traces) {
    for (double& c : center) c = rng.uniform(-1.0, 1.0);
    for (std::size_t s = 0; s < config.samples_per_trace; ++s) {
      std::vector<double> point(center);
      for (double& x : point) x += config.cluster_spread * rng.normal();
      out.features.push_back(std::move(point));
      out.labels.push_back(trace);
    }
  }
  return out;
}

std::string to_text(const Dataset& dataset, const Hierarchy& hierarchy) {
  std::string out = "# hinet dataset: " + std::to_string(dataset.size()) + " samples, " +
                    std::to_string(dataset.input_dim) + " features\n";
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& row = dataset.features[i];
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (j > 0) out += ',';
      append_double(out, row[j]);
    }
    out += '\t';
    out += format_trace(hierarchy, dataset.labels[i]);
    out += '\n';
  }
  return out;
}

Dataset parse_dataset(std::string_view text, const Hierarchy& hierarchy) {
  Dataset out;
  out.spec_hash = spec_hash(hierarchy);
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty() || line.front() == '#') continue;

    const std::size_t tab = line.find('\t');
    if (tab == std::string_view::npos || line.find('\t', tab + 1) != std::string_view::npos) {
      throw ParseError(ErrorKind::MalformedInput, line_no,
                       "expected '<features><TAB><label>'");
    }
    const std::string_view feature_text = line.substr(0, tab);
    const std::string_view label_text = line.substr(tab + 1);

    std::vector<double> row;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = feature_text.find(',', start);
      const std::size_t stop = comma == std::string_view::npos ? feature_text.size() : comma;
      const char* first = feature_text.data() + start;
      const char* last = feature_text.data() + stop;
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(first, last, v);
      if (first == last || ec != std::errc() || ptr != last || !std::isfinite(v)) {
        throw ParseError(ErrorKind::MalformedInput, line_no,
                         "bad feature value '" + std::string(first, last) + "'");
      }
      row.push_back(v);
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (out.input_dim == 0) out.input_dim = row.size();
    if (row.size() != out.input_dim) {
      throw ParseError(ErrorKind::MalformedInput, line_no,
                       "expected " + std::to_string(out.input_dim) + " features, got " +
                           std::to_string(row.size()));
    }
    try {
      out.labels.push_back(parse_trace(hierarchy, label_text));
    } catch (const Error& e) {
      throw ParseError(ErrorKind::MalformedInput, line_no, e.what());
    }
    out.features.push_back(std::move(row));
  }
  if (out.size() == 0) malformed("dataset has no samples");
  return out;
}

void save_dataset(const std::filesystem::path& path, const Dataset& dataset,
                  const Hierarchy& hierarchy) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write dataset file '" + path.string() + "'");
  out << to_text(dataset, hierarchy);
  if (!out) throw Error(ErrorKind::Io, "failed writing dataset file '" + path.string() + "'");
}

Dataset load_dataset(const std::filesystem::path& path, const Hierarchy& hierarchy) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open dataset file '" + path.string() + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_dataset(buffer.str(), hierarchy);
}

std::pair<Dataset, Dataset> split(const Dataset& dataset, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw Error(ErrorKind::Validation, "split fraction must lie strictly between 0 and 1");
  }
  const std::size_t n = dataset.size();
  const auto n_train = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 0.5));
  Rng rng(seed);

  std::map<Trace, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < n; ++i) groups[dataset.labels[i]].push_back(i);
  const bool stratified = std::all_of(groups.begin(), groups.end(),
                                      [](const auto& g) { return g.second.size() >= 2; });

  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  if (stratified) {
    // Largest-remainder apportionment of n_train over the groups.
    std::vector<std::size_t> quota;
    std::vector<std::pair<double, std::size_t>> remainders;
    std::size_t assigned = 0;
    std::size_t g = 0;
    for (const auto& [trace, members] : groups) {
      const double exact = fraction * static_cast<double>(members.size());
      const auto base = static_cast<std::size_t>(std::floor(exact));
      quota.push_back(base);
      assigned += base;
      remainders.emplace_back(exact - static_cast<double>(base), g++);
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t r = 0; assigned < n_train && r < remainders.size(); ++r) {
      ++quota[remainders[r].second];
      ++assigned;
    }
    g = 0;
    for (auto& [trace, members] : groups) {
      rng.shuffle(std::span<std::size_t>(members));
      for (std::size_t i = 0; i < members.size(); ++i) {
        (i < quota[g] ? train : test).push_back(members[i]);
      }
      ++g;
    }
    rng.shuffle(std::span<std::size_t>(train));
    rng.shuffle(std::span<std::size_t>(test));
  } else {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    rng.shuffle(std::span<std::size_t>(order));
    train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  }
  return {subset(dataset, train), subset(dataset, test)};
}

EvalReport evaluate(const Predictor& predict, const Dataset& dataset, const Hierarchy& hierarchy,
                    std::size_t top_misroutes) {
  EvalReport report;
  report.samples = dataset.size();
  const std::size_t h = hierarchy.height();
  std::vector<std::size_t> level_hits(h, 0);
  std::size_t exact = 0;
  std::map<std::pair<Trace, Trace>, std::size_t> misses;

  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const Trace predicted = predict(dataset.features[i]);
    const Trace& gold = dataset.labels[i];
    if (predicted == gold) {
      ++exact;
    } else {
      ++misses[{gold, predicted}];
    }
    for (std::size_t l = 0; l < h; ++l) {
      const bool gold_stops = l >= gold.depth();
      const bool pred_stops = l >= predicted.depth();
      if (gold_stops && pred_stops) {
        ++level_hits[l];
      } else if (!gold_stops && !pred_stops && gold.nodes[l] == predicted.nodes[l]) {
        ++level_hits[l];
      }
    }
  }

  const double n = static_cast<double>(std::max<std::size_t>(dataset.size(), 1));
  report.trace_accuracy = static_cast<double>(exact) / n;
  for (std::size_t hits : level_hits) report.per_level_accuracy.push_back(static_cast<double>(hits) / n);

  for (const auto& [pair, count] : misses) report.confusion.push_back({pair.first, pair.second, count});
  std::stable_sort(report.confusion.begin(), report.confusion.end(),
                   [](const Misroute& a, const Misroute& b) { return a.count > b.count; });
  if (report.confusion.size() > top_misroutes) report.confusion.resize(top_misroutes);
  return report;
}

std::string format_report(const EvalReport& report, const Hierarchy& hierarchy) {
  std::string out = "samples: " + std::to_string(report.samples) + "\n";
  out += "trace_accuracy: " + fixed6(report.trace_accuracy) + "\n";
  for (std::size_t l = 0; l < report.per_level_accuracy.size(); ++l) {
    out += "level " + std::to_string(l + 1) + " accuracy: " + fixed6(report.per_level_accuracy[l]) +
           "\n";
  }
  for (const Misroute& m : report.confusion) {
    out += "misrouted: " + format_trace(hierarchy, m.gold) + " -> " +
           format_trace(hierarchy, m.predicted) + " (" + std::to_string(m.count) + ")\n";
  }
  return out;
}

}  // namespace hinet
