#pragma once

// Binary model checkpoints. Layout (all integers and floats little-endian):
//
//   "HINETv1\n"                      8-byte magic
//   u32 section count
//   per section:
//     u32 name length, name bytes
//     u8  type: 1 text, 2 u64 array, 3 f64 matrix
//     text:   u64 length, bytes
//     u64:    u64 count, values
//     f64:    u64 rows, u64 cols, rows*cols values in row-major order
//
// Sections, in order: "model" (text "hinet" or "flatten"), "spec_hash"
// (u64[1]), "hierarchy" (canonical hierarchy text), "dims" (u64[2]: input
// dimension, k), then the parameter matrices. Biases are stored as n x 1.
//   hinet:   trunk.weights trunk.bias, then per level level.<l>.weights
//            level.<l>.bias and, for models with trunk skips, level.<l>.skip
//            on levels 1..h-1
//   flatten: trunk.weights trunk.bias output.weights output.bias

#include <filesystem>
#include <string>
#include <string_view>
#include <variant>

#include "hinet/baseline.hpp"
#include "hinet/hierarchy.hpp"
#include "hinet/network.hpp"

namespace hinet {

inline constexpr std::string_view kCheckpointMagic{"HINETv1\n", 8};

struct Checkpoint {
  Hierarchy hierarchy;
  std::variant<ModelParams, FlatParams> model;
};

std::string encode_checkpoint(const Hierarchy& hierarchy, const ModelParams& params);
std::string encode_checkpoint(const Hierarchy& hierarchy, const FlatParams& params);
// Throws Error(MalformedInput) on any structural problem, including a
// hierarchy that does not match the stored hash or parameter shapes.
Checkpoint decode_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const Hierarchy& hierarchy,
                     const ModelParams& params);
void save_checkpoint(const std::filesystem::path& path, const Hierarchy& hierarchy,
                     const FlatParams& params);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace hinet
