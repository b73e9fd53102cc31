#include "hinet/hierarchy.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "hinet/error.hpp"

namespace hinet {

namespace {

[[noreturn]] void invalid(const std::string& message) {
  throw Error(ErrorKind::Validation, message);
}

std::string default_name(std::size_t level, std::size_t node) {
  return "L" + std::to_string(level + 1) + "_" + std::to_string(node);
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

std::optional<std::size_t> parse_size(std::string_view token) {
  std::size_t value = 0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc() || ptr != token.data() + token.size()) return std::nullopt;
  return value;
}

}  // namespace

bool is_valid_node_name(std::string_view name) {
  if (name.empty()) return false;
  return std::all_of(name.begin(), name.end(), [](char c) {
    return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') ||
           c == '_' || c == '.' || c == '-';
  });
}

Hierarchy::Hierarchy(std::vector<std::size_t> level_sizes, std::vector<Edge> edges,
                     HierarchyKind kind, std::vector<std::vector<std::string>> names)
    : level_sizes_(std::move(level_sizes)),
      edges_(std::move(edges)),
      kind_(kind),
      names_(std::move(names)) {
  const std::size_t h = level_sizes_.size();
  if (h == 0) invalid("hierarchy needs at least one level");
  for (std::size_t l = 0; l < h; ++l) {
    if (level_sizes_[l] == 0) invalid("level " + std::to_string(l + 1) + " has no nodes");
  }

  if (names_.empty()) {
    names_.resize(h);
    for (std::size_t l = 0; l < h; ++l) {
      for (std::size_t i = 0; i < level_sizes_[l]; ++i) names_[l].push_back(default_name(l, i));
    }
  }
  if (names_.size() != h) invalid("name table does not match the number of levels");
  for (std::size_t l = 0; l < h; ++l) {
    if (names_[l].size() != level_sizes_[l]) {
      invalid("name table does not match the size of level " + std::to_string(l + 1));
    }
    std::vector<std::string_view> sorted(names_[l].begin(), names_[l].end());
    for (auto name : sorted) {
      if (!is_valid_node_name(name)) invalid("invalid node name '" + std::string(name) + "'");
    }
    std::sort(sorted.begin(), sorted.end());
    auto dup = std::adjacent_find(sorted.begin(), sorted.end());
    if (dup != sorted.end()) {
      invalid("duplicate name '" + std::string(*dup) + "' in level " + std::to_string(l + 1));
    }
  }

  parents_.resize(h);
  children_.resize(h);
  for (std::size_t l = 0; l < h; ++l) {
    parents_[l].resize(level_sizes_[l]);
    children_[l].resize(level_sizes_[l]);
  }
  for (const Edge& e : edges_) {
    if (e.child_level == 0 || e.child_level >= h) {
      invalid("edge targets level " + std::to_string(e.child_level + 1) +
              ", which has no parent level");
    }
    if (e.parent >= level_sizes_[e.child_level - 1] || e.child >= level_sizes_[e.child_level]) {
      invalid("edge endpoint out of range at level " + std::to_string(e.child_level + 1));
    }
    parents_[e.child_level][e.child].push_back(e.parent);
    children_[e.child_level - 1][e.parent].push_back(e.child);
  }
  for (std::size_t l = 0; l < h; ++l) {
    for (auto& list : parents_[l]) std::sort(list.begin(), list.end());
    for (auto& list : children_[l]) std::sort(list.begin(), list.end());
  }
  for (std::size_t l = 1; l < h; ++l) {
    for (std::size_t c = 0; c < level_sizes_[l]; ++c) {
      const auto& ps = parents_[l][c];
      if (std::adjacent_find(ps.begin(), ps.end()) != ps.end()) {
        invalid("duplicate edge into '" + names_[l][c] + "'");
      }
      if (ps.empty()) {
        invalid("node '" + names_[l][c] + "' at level " + std::to_string(l + 1) +
                " has no parent");
      }
      if (kind_ == HierarchyKind::Tree && ps.size() > 1) {
        invalid("node '" + names_[l][c] + "' has " + std::to_string(ps.size()) +
                " parents in a tree hierarchy");
      }
    }
  }
}

std::optional<std::size_t> Hierarchy::find(std::size_t level, std::string_view name) const {
  if (level >= names_.size()) return std::nullopt;
  const auto& list = names_[level];
  for (std::size_t i = 0; i < list.size(); ++i) {
    if (list[i] == name) return i;
  }
  return std::nullopt;
}

std::span<const std::size_t> Hierarchy::parents(std::size_t level, std::size_t node) const {
  return parents_.at(level).at(node);
}

std::span<const std::size_t> Hierarchy::children(std::size_t level, std::size_t node) const {
  return children_.at(level).at(node);
}

bool Hierarchy::has_edge(std::size_t child_level, std::size_t parent, std::size_t child) const {
  if (child_level == 0 || child_level >= height()) return false;
  if (child >= level_sizes_[child_level]) return false;
  const auto& ps = parents_[child_level][child];
  return std::binary_search(ps.begin(), ps.end(), parent);
}

Hierarchy parse_hierarchy(std::string_view text) {
  std::optional<std::size_t> height;
  std::optional<HierarchyKind> kind;
  std::vector<std::vector<std::string>> names;
  std::vector<std::vector<std::size_t>> declared_at;  // [level][node] -> line
  std::vector<Edge> edges;
  std::map<std::pair<std::size_t, std::size_t>, std::vector<std::size_t>> edge_lines;
  std::set<Edge> seen_edges;

  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const auto tok = split_ws(line);
    if (tok.empty()) {
      if (end == text.size()) break;
      continue;
    }

    const std::string_view directive = tok[0];
    if (directive == "levels") {
      if (height) throw ParseError(ErrorKind::Validation, line_no, "'levels' given twice");
      if (tok.size() != 2) throw ParseError(ErrorKind::Validation, line_no, "expected 'levels <h>'");
      auto h = parse_size(tok[1]);
      if (!h || *h == 0) {
        throw ParseError(ErrorKind::Validation, line_no, "level count must be a positive integer");
      }
      if (*h > kMaxParsedLevels) {
        throw ParseError(ErrorKind::Validation, line_no,
                         "level count exceeds " + std::to_string(kMaxParsedLevels));
      }
      height = *h;
      names.resize(*h);
      declared_at.resize(*h);
    } else if (directive == "kind") {
      if (kind) throw ParseError(ErrorKind::Validation, line_no, "'kind' given twice");
      if (tok.size() != 2 || (tok[1] != "tree" && tok[1] != "dag")) {
        throw ParseError(ErrorKind::Validation, line_no, "expected 'kind tree' or 'kind dag'");
      }
      kind = tok[1] == "tree" ? HierarchyKind::Tree : HierarchyKind::Dag;
    } else if (directive == "nodes") {
      if (!height) throw ParseError(ErrorKind::Validation, line_no, "'nodes' before 'levels'");
      if (tok.size() < 3) {
        throw ParseError(ErrorKind::Validation, line_no, "expected 'nodes <level> <name>...'");
      }
      auto level = parse_size(tok[1]);
      if (!level || *level == 0 || *level > *height) {
        throw ParseError(ErrorKind::Validation, line_no,
                         "level must be in 1.." + std::to_string(*height));
      }
      const std::size_t l = *level - 1;
      for (std::size_t i = 2; i < tok.size(); ++i) {
        if (!is_valid_node_name(tok[i])) {
          throw ParseError(ErrorKind::Validation, line_no,
                           "invalid node name '" + std::string(tok[i]) + "'");
        }
        if (std::find(names[l].begin(), names[l].end(), tok[i]) != names[l].end()) {
          throw ParseError(ErrorKind::Validation, line_no,
                           "duplicate name '" + std::string(tok[i]) + "' in level " +
                               std::to_string(*level));
        }
        names[l].emplace_back(tok[i]);
        declared_at[l].push_back(line_no);
      }
    } else if (directive == "edge") {
      if (!height) throw ParseError(ErrorKind::Validation, line_no, "'edge' before 'levels'");
      if (tok.size() != 3) {
        throw ParseError(ErrorKind::Validation, line_no, "expected 'edge <parent> <child>'");
      }
      auto lookup = [&](std::size_t l, std::string_view n) -> std::optional<std::size_t> {
        auto it = std::find(names[l].begin(), names[l].end(), n);
        if (it == names[l].end()) return std::nullopt;
        return static_cast<std::size_t>(it - names[l].begin());
      };
      bool parent_known = false;
      bool child_known = false;
      std::vector<Edge> candidates;
      for (std::size_t l = 0; l < *height; ++l) {
        auto p = lookup(l, tok[1]);
        auto c = lookup(l, tok[2]);
        parent_known |= p.has_value();
        child_known |= c.has_value();
        if (p && l + 1 < *height) {
          if (auto c2 = lookup(l + 1, tok[2])) candidates.push_back({l + 1, *p, *c2});
        }
      }
      if (!parent_known) {
        throw ParseError(ErrorKind::Validation, line_no,
                         "unknown node name '" + std::string(tok[1]) + "'");
      }
      if (!child_known) {
        throw ParseError(ErrorKind::Validation, line_no,
                         "unknown node name '" + std::string(tok[2]) + "'");
      }
      if (candidates.empty()) {
        throw ParseError(ErrorKind::Validation, line_no,
                         "edge " + std::string(tok[1]) + " -> " + std::string(tok[2]) +
                             " does not go from one level to the next");
      }
      if (candidates.size() > 1) {
        throw ParseError(ErrorKind::Validation, line_no,
                         "edge " + std::string(tok[1]) + " -> " + std::string(tok[2]) +
                             " is ambiguous across levels");
      }
      const Edge e = candidates.front();
      auto& lines = edge_lines[{e.child_level, e.child}];
      if (!seen_edges.insert(e).second) {
        throw ParseError(ErrorKind::Validation, line_no, "duplicate edge");
      }
      lines.push_back(line_no);
      edges.push_back(e);
    } else {
      throw ParseError(ErrorKind::Validation, line_no,
                       "unknown directive '" + std::string(directive) + "'");
    }
    if (end == text.size()) break;
  }

  if (!height) throw ParseError(ErrorKind::Validation, line_no, "missing 'levels' line");
  for (std::size_t l = 0; l < *height; ++l) {
    if (names[l].empty()) {
      throw ParseError(ErrorKind::Validation, line_no,
                       "level " + std::to_string(l + 1) + " has no nodes");
    }
  }
  const HierarchyKind resolved = kind.value_or(HierarchyKind::Tree);
  for (std::size_t l = 1; l < *height; ++l) {
    for (std::size_t c = 0; c < names[l].size(); ++c) {
      auto it = edge_lines.find({l, c});
      if (it == edge_lines.end()) {
        throw ParseError(ErrorKind::Validation, declared_at[l][c],
                         "node '" + names[l][c] + "' at level " + std::to_string(l + 1) +
                             " has no parent");
      }
      if (resolved == HierarchyKind::Tree && it->second.size() > 1) {
        throw ParseError(ErrorKind::Validation, it->second[1],
                         "node '" + names[l][c] +
                             "' has more than one parent; declare 'kind dag' to allow this");
      }
    }
  }

  std::vector<std::size_t> sizes;
  for (const auto& level : names) sizes.push_back(level.size());
  return Hierarchy(std::move(sizes), std::move(edges), resolved, std::move(names));
}

Hierarchy load_hierarchy(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open hierarchy file '" + path.string() + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_hierarchy(buffer.str());
}

std::string to_text(const Hierarchy& hierarchy) {
  std::string out = "levels " + std::to_string(hierarchy.height()) + "\n";
  out += hierarchy.kind() == HierarchyKind::Tree ? "kind tree\n" : "kind dag\n";
  for (std::size_t l = 0; l < hierarchy.height(); ++l) {
    out += "nodes " + std::to_string(l + 1);
    for (std::size_t i = 0; i < hierarchy.level_size(l); ++i) out += " " + hierarchy.name(l, i);
    out += "\n";
  }
  for (const Edge& e : hierarchy.edges()) {
    out += "edge " + hierarchy.name(e.child_level - 1, e.parent) + " " +
           hierarchy.name(e.child_level, e.child) + "\n";
  }
  return out;
}

std::uint64_t spec_hash(const Hierarchy& hierarchy) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : to_text(hierarchy)) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

Hierarchy make_dense_hierarchy(std::size_t width, std::size_t height) {
  std::vector<Edge> edges;
  for (std::size_t l = 1; l < height; ++l) {
    for (std::size_t p = 0; p < width; ++p) {
      for (std::size_t c = 0; c < width; ++c) edges.push_back({l, p, c});
    }
  }
  const auto kind = (width > 1 && height > 1) ? HierarchyKind::Dag : HierarchyKind::Tree;
  return Hierarchy(std::vector<std::size_t>(height, width), std::move(edges), kind);
}

Hierarchy make_complete_tree(std::size_t branching, std::size_t height) {
  std::vector<std::size_t> sizes;
  std::vector<Edge> edges;
  std::size_t size = branching;
  for (std::size_t l = 0; l < height; ++l) {
    sizes.push_back(size);
    if (l > 0) {
      for (std::size_t c = 0; c < size; ++c) edges.push_back({l, c / branching, c});
    }
    size *= branching;
  }
  return Hierarchy(std::move(sizes), std::move(edges), HierarchyKind::Tree);
}

LevelMask::LevelMask(std::size_t target_level, std::size_t rows, std::size_t cols)
    : target_level_(target_level), rows_(rows), cols_(cols), bits_(rows * cols, 0) {}

std::size_t LevelMask::zero_count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), 0));
}

std::vector<LevelMask> build_masks(const Hierarchy& hierarchy) {
  const std::size_t h = hierarchy.height();
  std::vector<LevelMask> masks;
  masks.reserve(h);
  for (std::size_t l = 1; l <= h; ++l) {
    const std::size_t rows = hierarchy.level_size(l - 1);
    const std::size_t real = l < h ? hierarchy.level_size(l) : 0;
    LevelMask mask(l, rows, real + 1);
    for (std::size_t p = 0; p < rows; ++p) {
      mask.set(p, real, true);
      if (l < h) {
        for (std::size_t c : hierarchy.children(l - 1, p)) mask.set(p, c, true);
      }
    }
    masks.push_back(std::move(mask));
  }
  return masks;
}

bool is_valid_trace(const Hierarchy& hierarchy, const Trace& trace) {
  if (trace.depth() == 0 || trace.depth() > hierarchy.height()) return false;
  if (trace.nodes[0] >= hierarchy.level_size(0)) return false;
  for (std::size_t l = 1; l < trace.depth(); ++l) {
    if (!hierarchy.has_edge(l, trace.nodes[l - 1], trace.nodes[l])) return false;
  }
  return true;
}

void require_valid_trace(const Hierarchy& hierarchy, const Trace& trace) {
  if (trace.depth() == 0) invalid("empty trace");
  if (trace.depth() > hierarchy.height()) {
    invalid("trace of depth " + std::to_string(trace.depth()) + " exceeds hierarchy height " +
            std::to_string(hierarchy.height()));
  }
  if (trace.nodes[0] >= hierarchy.level_size(0)) invalid("trace node out of range at level 1");
  for (std::size_t l = 1; l < trace.depth(); ++l) {
    if (trace.nodes[l] >= hierarchy.level_size(l)) {
      invalid("trace node out of range at level " + std::to_string(l + 1));
    }
    if (!hierarchy.has_edge(l, trace.nodes[l - 1], trace.nodes[l])) {
      invalid("no edge " + hierarchy.name(l - 1, trace.nodes[l - 1]) + " -> " +
              hierarchy.name(l, trace.nodes[l]));
    }
  }
}

namespace {

void extend_paths(const Hierarchy& hierarchy, std::size_t depth, std::vector<std::size_t>& path,
                  std::vector<Trace>& out, std::size_t cap) {
  if (path.size() == depth) {
    if (out.size() == cap) {
      invalid("trace enumeration exceeds the cap of " + std::to_string(cap));
    }
    out.push_back(Trace{path});
    return;
  }
  const std::size_t level = path.size() - 1;
  for (std::size_t child : hierarchy.children(level, path.back())) {
    path.push_back(child);
    extend_paths(hierarchy, depth, path, out, cap);
    path.pop_back();
  }
}

}  // namespace

std::vector<Trace> enumerate_traces(const Hierarchy& hierarchy, std::size_t cap) {
  if (count_traces(hierarchy) > cap) {
    invalid("trace enumeration exceeds the cap of " + std::to_string(cap));
  }
  std::vector<Trace> out;
  std::vector<std::size_t> path;
  for (std::size_t depth = 1; depth <= hierarchy.height(); ++depth) {
    for (std::size_t root = 0; root < hierarchy.level_size(0); ++root) {
      path.assign(1, root);
      extend_paths(hierarchy, depth, path, out, cap);
    }
  }
  return out;
}

std::size_t count_traces(const Hierarchy& hierarchy) {
  constexpr std::size_t kMax = std::numeric_limits<std::size_t>::max();
  auto add = [](std::size_t a, std::size_t b) { return a > kMax - b ? kMax : a + b; };
  std::vector<std::size_t> ending(hierarchy.level_size(0), 1);
  std::size_t total = ending.size();
  for (std::size_t l = 1; l < hierarchy.height(); ++l) {
    std::vector<std::size_t> next(hierarchy.level_size(l), 0);
    for (std::size_t c = 0; c < next.size(); ++c) {
      for (std::size_t p : hierarchy.parents(l, c)) next[c] = add(next[c], ending[p]);
      total = add(total, next[c]);
    }
    ending = std::move(next);
  }
  return total;
}

std::string format_trace(const Hierarchy& hierarchy, const Trace& trace) {
  std::string out;
  for (std::size_t l = 0; l < trace.depth(); ++l) {
    if (l > 0) out += '/';
    out += hierarchy.name(l, trace.nodes[l]);
  }
  return out;
}

Trace parse_trace(const Hierarchy& hierarchy, std::string_view text) {
  Trace trace;
  std::size_t level = 0;
  std::size_t pos = 0;
  while (true) {
    const std::size_t slash = text.find('/', pos);
    const std::string_view part =
        text.substr(pos, slash == std::string_view::npos ? std::string_view::npos : slash - pos);
    if (level >= hierarchy.height()) {
      invalid("label '" + std::string(text) + "' is deeper than the hierarchy");
    }
    auto index = hierarchy.find(level, part);
    if (!index) {
      invalid("unknown node name '" + std::string(part) + "' at level " +
              std::to_string(level + 1));
    }
    trace.nodes.push_back(*index);
    ++level;
    if (slash == std::string_view::npos) break;
    pos = slash + 1;
  }
  require_valid_trace(hierarchy, trace);
  return trace;
}

std::size_t level_output_size(const Hierarchy& hierarchy, std::size_t level) {
  if (level == 0) return hierarchy.level_size(0);
  if (level < hierarchy.height()) return hierarchy.level_size(level) + 1;
  if (level == hierarchy.height()) return 1;
  invalid("level " + std::to_string(level) + " is beyond the virtual stop level");
}

LevelTargets encode_targets(const Trace& trace, const Hierarchy& hierarchy) {
  require_valid_trace(hierarchy, trace);
  LevelTargets targets;
  for (std::size_t l = 0; l <= hierarchy.height(); ++l) {
    std::vector<double> level(level_output_size(hierarchy, l), 0.0);
    if (l < trace.depth()) {
      level[trace.nodes[l]] = 1.0;
    } else {
      level.back() = 1.0;
    }
    targets.levels.push_back(std::move(level));
  }
  return targets;
}

TraceIndex::TraceIndex(const Hierarchy& hierarchy, std::size_t cap)
    : traces_(enumerate_traces(hierarchy, cap)) {}

std::size_t TraceIndex::id_of(const Trace& trace) const {
  auto it = std::lower_bound(traces_.begin(), traces_.end(), trace);
  if (it == traces_.end() || *it != trace) invalid("trace is not valid for this hierarchy");
  return static_cast<std::size_t>(it - traces_.begin());
}

const Trace& TraceIndex::trace_at(std::size_t id) const {
  if (id >= traces_.size()) {
    invalid("flat id " + std::to_string(id) + " out of range [0, " +
            std::to_string(traces_.size()) + ")");
  }
  return traces_[id];
}

std::size_t trace_to_flat_id(const Trace& trace, const Hierarchy& hierarchy) {
  return TraceIndex(hierarchy).id_of(trace);
}

Trace flat_id_to_trace(std::size_t id, const Hierarchy& hierarchy) {
  return TraceIndex(hierarchy).trace_at(id);
}

}  // namespace hinet
