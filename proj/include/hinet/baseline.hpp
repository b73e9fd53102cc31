#pragma once

// Flatten baseline: the same trunk followed by one softmax over every valid
// trace (all depths), indexed by TraceIndex.

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "hinet/data.hpp"
#include "hinet/hierarchy.hpp"
#include "hinet/network.hpp"

namespace hinet {

struct FlatParams {
  DenseLayer trunk;   // input_dim x k
  DenseLayer output;  // k x T

  std::size_t input_dim() const { return static_cast<std::size_t>(trunk.weights.rows()); }
  std::size_t feature_dim() const { return static_cast<std::size_t>(trunk.weights.cols()); }
  std::size_t class_count() const { return static_cast<std::size_t>(output.weights.cols()); }

  friend bool operator==(const FlatParams&, const FlatParams&) = default;
};

FlatParams init_flat_params(const TraceIndex& index, std::size_t input_dim, std::size_t k,
                            const TrainConfig& config);

struct FlatForwardCache {
  Eigen::VectorXd input;
  Eigen::VectorXd trunk;
  Eigen::VectorXd output;
};

// Probability over the T flat classes.
Eigen::VectorXd flat_forward(const FlatParams& params, std::span<const double> x,
                             FlatForwardCache* cache = nullptr);

// ||onehot(class_id) - p||^2
double flat_cost(const Eigen::VectorXd& probabilities, std::size_t class_id);

struct FlatGradients {
  DenseLayer trunk;
  DenseLayer output;
};

FlatGradients flat_backward(const FlatParams& params, const FlatForwardCache& cache,
                            std::size_t class_id);

struct FlatTrainResult {
  FlatParams params;
  double initial_loss = 0.0;
  std::vector<double> loss_history;
};

FlatTrainResult flat_train(FlatParams params, const Dataset& dataset, const Hierarchy& hierarchy,
                           const TraceIndex& index, const TrainConfig& config);

double flat_mean_cost(const FlatParams& params, const Dataset& dataset, const TraceIndex& index);

// Argmax class (smallest id on ties) mapped back to its trace.
Trace flat_predict(const FlatParams& params, std::span<const double> x, const TraceIndex& index);

// k * n^h. Throws Error(Numeric) on overflow.
std::uint64_t flatten_param_count(std::uint64_t k, std::uint64_t n, std::uint64_t h);

}  // namespace hinet
