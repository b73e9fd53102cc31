#include "hinet/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>

#include "hinet/error.hpp"

namespace hinet {

namespace {

enum : std::uint8_t { kText = 1, kU64 = 2, kF64 = 3 };

[[noreturn]] void malformed(const std::string& message) {
  throw Error(ErrorKind::MalformedInput, "checkpoint: " + message);
}

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void bytes(std::string_view s) { out_.append(s); }

  void name(std::string_view n) {
    u32(static_cast<std::uint32_t>(n.size()));
    bytes(n);
  }
  void text(std::string_view n, std::string_view value) {
    name(n);
    u8(kText);
    u64(value.size());
    bytes(value);
  }
  void u64s(std::string_view n, std::initializer_list<std::uint64_t> values) {
    name(n);
    u8(kU64);
    u64(values.size());
    for (auto v : values) u64(v);
  }
  void matrix(std::string_view n, const Eigen::MatrixXd& m) {
    name(n);
    u8(kF64);
    u64(static_cast<std::uint64_t>(m.rows()));
    u64(static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) f64(m(r, c));
    }
  }

  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}

  bool done() const { return pos_ == in_.size(); }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(in_[pos_++]);
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string_view bytes(std::uint64_t n) {
    need(n);
    auto out = in_.substr(pos_, n);
    pos_ += n;
    return out;
  }

 private:
  void need(std::uint64_t n) const {
    if (n > in_.size() - pos_) malformed("truncated file");
  }

  std::string_view in_;
  std::size_t pos_ = 0;
};

struct Section {
  std::uint8_t type = 0;
  std::string text;
  std::vector<std::uint64_t> values;
  Eigen::MatrixXd matrix;
};

void write_header(Writer& w, const Hierarchy& hierarchy, std::string_view model,
                  std::uint32_t matrices, std::size_t input_dim, std::size_t k) {
  w.bytes(kCheckpointMagic);
  w.u32(4 + matrices);
  w.text("model", model);
  w.u64s("spec_hash", {spec_hash(hierarchy)});
  w.text("hierarchy", to_text(hierarchy));
  w.u64s("dims", {input_dim, k});
}

Eigen::MatrixXd as_column(const Eigen::VectorXd& v) { return v; }

const Section& require(const std::map<std::string, Section>& sections, const std::string& name,
                       std::uint8_t type) {
  auto it = sections.find(name);
  if (it == sections.end()) malformed("missing section '" + name + "'");
  if (it->second.type != type) malformed("section '" + name + "' has the wrong type");
  return it->second;
}

Eigen::MatrixXd require_matrix(const std::map<std::string, Section>& sections,
                               const std::string& name, Eigen::Index rows, Eigen::Index cols) {
  const Section& s = require(sections, name, kF64);
  if (s.matrix.rows() != rows || s.matrix.cols() != cols) {
    malformed("section '" + name + "' has shape " + std::to_string(s.matrix.rows()) + "x" +
              std::to_string(s.matrix.cols()) + ", expected " + std::to_string(rows) + "x" +
              std::to_string(cols));
  }
  return s.matrix;
}

DenseLayer require_layer(const std::map<std::string, Section>& sections, const std::string& prefix,
                         Eigen::Index rows, Eigen::Index cols) {
  DenseLayer layer;
  layer.weights = require_matrix(sections, prefix + ".weights", rows, cols);
  layer.bias = require_matrix(sections, prefix + ".bias", cols, 1).col(0);
  return layer;
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write checkpoint '" + path.string() + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::Io, "failed writing checkpoint '" + path.string() + "'");
}

}  // namespace

std::string encode_checkpoint(const Hierarchy& hierarchy, const ModelParams& params) {
  Writer w;
  std::uint32_t skips = 0;
  for (const auto& skip : params.skips) skips += skip.size() > 0 ? 1 : 0;
  write_header(w, hierarchy, "hinet",
               static_cast<std::uint32_t>(2 + 2 * params.levels.size()) + skips,
               params.input_dim(), params.feature_dim());
  w.matrix("trunk.weights", params.trunk.weights);
  w.matrix("trunk.bias", as_column(params.trunk.bias));
  for (std::size_t l = 0; l < params.levels.size(); ++l) {
    const std::string prefix = "level." + std::to_string(l);
    w.matrix(prefix + ".weights", params.levels[l].weights);
    w.matrix(prefix + ".bias", as_column(params.levels[l].bias));
    if (l < params.skips.size() && params.skips[l].size() > 0) {
      w.matrix(prefix + ".skip", params.skips[l]);
    }
  }
  return w.take();
}

std::string encode_checkpoint(const Hierarchy& hierarchy, const FlatParams& params) {
  Writer w;
  write_header(w, hierarchy, "flatten", 4, params.input_dim(), params.feature_dim());
  w.matrix("trunk.weights", params.trunk.weights);
  w.matrix("trunk.bias", as_column(params.trunk.bias));
  w.matrix("output.weights", params.output.weights);
  w.matrix("output.bias", as_column(params.output.bias));
  return w.take();
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  Reader r(bytes);
  if (r.bytes(kCheckpointMagic.size()) != kCheckpointMagic) malformed("bad magic");
  const std::uint32_t count = r.u32();
  std::map<std::string, Section> sections;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name(r.bytes(r.u32()));
    Section s;
    s.type = r.u8();
    if (s.type == kText) {
      s.text = std::string(r.bytes(r.u64()));
    } else if (s.type == kU64) {
      const std::uint64_t n = r.u64();
      if (n > bytes.size() / 8) malformed("section '" + name + "' is too long");
      for (std::uint64_t j = 0; j < n; ++j) s.values.push_back(r.u64());
    } else if (s.type == kF64) {
      const std::uint64_t rows = r.u64();
      const std::uint64_t cols = r.u64();
      if (rows > bytes.size() || cols > bytes.size() || rows * cols > bytes.size() / 8) {
        malformed("section '" + name + "' is too long");
      }
      s.matrix.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
      for (std::uint64_t a = 0; a < rows; ++a) {
        for (std::uint64_t b = 0; b < cols; ++b) {
          s.matrix(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = r.f64();
        }
      }
    } else {
      malformed("section '" + name + "' has unknown type " + std::to_string(s.type));
    }
    if (!sections.emplace(std::move(name), std::move(s)).second) malformed("duplicate section");
  }
  if (!r.done()) malformed("trailing bytes");

  const std::string& model = require(sections, "model", kText).text;
  Hierarchy hierarchy = [&] {
    try {
      return parse_hierarchy(require(sections, "hierarchy", kText).text);
    } catch (const Error& e) {
      malformed(std::string("embedded hierarchy: ") + e.what());
    }
  }();
  const auto& hash = require(sections, "spec_hash", kU64).values;
  if (hash.size() != 1 || hash[0] != spec_hash(hierarchy)) malformed("hierarchy hash mismatch");
  const auto& dims = require(sections, "dims", kU64).values;
  if (dims.size() != 2 || dims[0] == 0 || dims[1] == 0) malformed("bad dims section");
  const auto input_dim = static_cast<Eigen::Index>(dims[0]);
  const auto k = static_cast<Eigen::Index>(dims[1]);

  if (model == "hinet") {
    ModelParams params;
    params.trunk = require_layer(sections, "trunk", input_dim, k);
    params.masks = mask_matrices(hierarchy, static_cast<std::size_t>(k));
    for (std::size_t l = 0; l < params.masks.size(); ++l) {
      const auto& mask = params.masks[l];
      DenseLayer layer =
          require_layer(sections, "level." + std::to_string(l), mask.rows(), mask.cols());
      if (layer.weights.cwiseProduct(mask) != layer.weights) {
        malformed("level " + std::to_string(l) + " has weights outside the mask");
      }
      params.levels.push_back(std::move(layer));
    }
    // Skip matrices are all present (levels 1..h-1) or all absent.
    const std::size_t h = params.levels.size() - 1;
    std::size_t skips = 0;
    for (std::size_t l = 0; l <= h; ++l) {
      const std::string name = "level." + std::to_string(l) + ".skip";
      if (l >= 1 && l < h && sections.count(name)) {
        params.skips.push_back(require_matrix(sections, name, k, params.masks[l].cols()));
        ++skips;
      } else {
        params.skips.emplace_back(0, 0);
      }
    }
    if (skips != 0 && skips != h - 1) malformed("incomplete skip sections");
    if (sections.size() != 4 + 2 + 2 * params.levels.size() + skips) {
      malformed("unexpected sections");
    }
    return {std::move(hierarchy), std::move(params)};
  }
  if (model == "flatten") {
    FlatParams params;
    params.trunk = require_layer(sections, "trunk", input_dim, k);
    const auto classes = static_cast<Eigen::Index>(count_traces(hierarchy));
    params.output = require_layer(sections, "output", k, classes);
    if (sections.size() != 8) malformed("unexpected sections");
    return {std::move(hierarchy), std::move(params)};
  }
  malformed("unknown model kind '" + model + "'");
}

void save_checkpoint(const std::filesystem::path& path, const Hierarchy& hierarchy,
                     const ModelParams& params) {
  write_file(path, encode_checkpoint(hierarchy, params));
}

void save_checkpoint(const std::filesystem::path& path, const Hierarchy& hierarchy,
                     const FlatParams& params) {
  write_file(path, encode_checkpoint(hierarchy, params));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open checkpoint '" + path.string() + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return decode_checkpoint(buffer.str());
}

}  // namespace hinet
