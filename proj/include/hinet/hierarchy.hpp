#pragma once

// Label hierarchies stored as leveled node sets.
//
// Levels are 0-based in the API: level 0 holds the top-most labels and level
// h-1 the deepest ones. Edges only ever join level l-1 to level l. Every level
// from 1 onwards carries an extra stop neuron, and a virtual level h consists
// of nothing but a stop neuron, so that every trace, including a full-depth
// one, terminates at a stop neuron.
//
// The text format uses 1-based levels:
//
//   levels 2
//   kind tree          # or dag; defaults to tree
//   nodes 1 A B
//   nodes 2 C D
//   edge A C
//   edge B D

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hinet {

inline constexpr std::size_t kDefaultTraceCap = 1'000'000;
inline constexpr std::size_t kMaxParsedLevels = 4096;

enum class HierarchyKind { Tree, Dag };

struct Edge {
  std::size_t child_level;  // level of the child, >= 1
  std::size_t parent;
  std::size_t child;

  friend auto operator<=>(const Edge&, const Edge&) = default;
};

class Hierarchy {
 public:
  // Validates all structural invariants and throws Error(Validation) on the
  // first violation. Empty `names` yields generated names "L<level>_<index>"
  // with 1-based levels.
  Hierarchy(std::vector<std::size_t> level_sizes, std::vector<Edge> edges,
            HierarchyKind kind, std::vector<std::vector<std::string>> names = {});

  std::size_t height() const { return level_sizes_.size(); }
  std::size_t level_size(std::size_t level) const { return level_sizes_.at(level); }
  std::span<const std::size_t> level_sizes() const { return level_sizes_; }
  HierarchyKind kind() const { return kind_; }

  // Edges in insertion order.
  std::span<const Edge> edges() const { return edges_; }

  const std::string& name(std::size_t level, std::size_t node) const {
    return names_.at(level).at(node);
  }
  std::optional<std::size_t> find(std::size_t level, std::string_view name) const;

  // Sorted ascending.
  std::span<const std::size_t> parents(std::size_t level, std::size_t node) const;
  // Children of `node` (at `level`) on level + 1, sorted ascending.
  std::span<const std::size_t> children(std::size_t level, std::size_t node) const;

  bool has_edge(std::size_t child_level, std::size_t parent, std::size_t child) const;

  friend bool operator==(const Hierarchy&, const Hierarchy&) = default;

 private:
  std::vector<std::size_t> level_sizes_;
  std::vector<Edge> edges_;
  HierarchyKind kind_;
  std::vector<std::vector<std::string>> names_;
  // [level][node] -> sorted neighbour indices
  std::vector<std::vector<std::vector<std::size_t>>> parents_;
  std::vector<std::vector<std::vector<std::size_t>>> children_;
};

bool is_valid_node_name(std::string_view name);

Hierarchy parse_hierarchy(std::string_view text);
Hierarchy load_hierarchy(const std::filesystem::path& path);
// Canonical text form; parse_hierarchy(to_text(h)) == h.
std::string to_text(const Hierarchy& hierarchy);
// 64-bit FNV-1a of the canonical text.
std::uint64_t spec_hash(const Hierarchy& hierarchy);

// Every level l in [1, h] connects all nodes of level l-1 to all nodes of l.
Hierarchy make_dense_hierarchy(std::size_t width, std::size_t height);
// Complete `branching`-ary tree: level l has branching^(l+1) nodes.
Hierarchy make_complete_tree(std::size_t branching, std::size_t height);

// Binary parent x (children + stop) connectivity for the columns of
// `target_level` in [1, h]. At target_level == h there are no real columns.
class LevelMask {
 public:
  LevelMask(std::size_t target_level, std::size_t rows, std::size_t cols);

  std::size_t target_level() const { return target_level_; }
  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t stop_column() const { return cols_ - 1; }
  std::size_t real_columns() const { return cols_ - 1; }

  bool at(std::size_t row, std::size_t col) const { return bits_[row * cols_ + col] != 0; }
  void set(std::size_t row, std::size_t col, bool on) { bits_[row * cols_ + col] = on ? 1 : 0; }
  std::size_t zero_count() const;

 private:
  std::size_t target_level_;
  std::size_t rows_;
  std::size_t cols_;
  std::vector<std::uint8_t> bits_;
};

// One mask per level 1..h (the last one is the all-ones stop-only column).
std::vector<LevelMask> build_masks(const Hierarchy& hierarchy);

// Node indices, one per level from level 0 down to depth-1; the trace ends at
// the stop neuron of level `depth()`.
struct Trace {
  std::vector<std::size_t> nodes;

  std::size_t depth() const { return nodes.size(); }

  friend bool operator==(const Trace&, const Trace&) = default;
  // Enumeration order: shorter traces first, then lexicographic.
  friend std::strong_ordering operator<=>(const Trace& a, const Trace& b) {
    if (auto c = a.nodes.size() <=> b.nodes.size(); c != 0) return c;
    return a.nodes <=> b.nodes;
  }
};

bool is_valid_trace(const Hierarchy& hierarchy, const Trace& trace);
// Throws Error(Validation) describing the first broken link.
void require_valid_trace(const Hierarchy& hierarchy, const Trace& trace);

// All valid traces of depth 1..h in enumeration order. Throws
// Error(Validation) if more than `cap` traces exist.
std::vector<Trace> enumerate_traces(const Hierarchy& hierarchy,
                                    std::size_t cap = kDefaultTraceCap);
// Counts without materializing; saturates at SIZE_MAX.
std::size_t count_traces(const Hierarchy& hierarchy);

// "A/C" style, names joined by '/'.
std::string format_trace(const Hierarchy& hierarchy, const Trace& trace);
Trace parse_trace(const Hierarchy& hierarchy, std::string_view text);

// Length of the per-level output vector: n_0 at level 0, n_l + 1 at levels
// 1..h-1, and 1 at the virtual level h. The stop entry is always last.
std::size_t level_output_size(const Hierarchy& hierarchy, std::size_t level);

// One-hot per level 0..h; stop is selected at every level >= depth.
struct LevelTargets {
  std::vector<std::vector<double>> levels;
};

LevelTargets encode_targets(const Trace& trace, const Hierarchy& hierarchy);

// Bijection between valid traces and [0, size()) following enumeration order.
class TraceIndex {
 public:
  explicit TraceIndex(const Hierarchy& hierarchy, std::size_t cap = kDefaultTraceCap);

  std::size_t size() const { return traces_.size(); }
  std::span<const Trace> traces() const { return traces_; }

  std::size_t id_of(const Trace& trace) const;
  const Trace& trace_at(std::size_t id) const;

 private:
  std::vector<Trace> traces_;
};

std::size_t trace_to_flat_id(const Trace& trace, const Hierarchy& hierarchy);
Trace flat_id_to_trace(std::size_t id, const Hierarchy& hierarchy);

}  // namespace hinet
