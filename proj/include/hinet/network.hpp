#pragma once

// The hierarchical network: a tanh feature trunk feeding a cascade of masked
// per-level layers. Level l's pre-activation z_l is read out through a
// softmax as the level posterior and passed through tanh as the signal for
// level l + 1 (real nodes only; the stop neuron does not feed forward).
// Training minimizes the sum over levels of squared distance between the
// one-hot targets and the posteriors.
//
// With CascadeInput::ParentsAndTrunk, every real level below the first also
// receives the trunk features through an unmasked k x (n_l + 1) matrix. In a
// tree mask each child otherwise sees a single scalar from its parent, so
// everything below a top-level node must be encoded in one activation.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "hinet/data.hpp"
#include "hinet/hierarchy.hpp"
#include "hinet/inference.hpp"

namespace hinet {

// weights: fan_in x fan_out; an input row vector x maps to x * weights + bias.
struct DenseLayer {
  Eigen::MatrixXd weights;
  Eigen::VectorXd bias;

  friend bool operator==(const DenseLayer& a, const DenseLayer& b) {
    return a.weights.rows() == b.weights.rows() && a.weights.cols() == b.weights.cols() &&
           a.weights == b.weights && a.bias.size() == b.bias.size() && a.bias == b.bias;
  }
};

enum class CascadeInput { Parents, ParentsAndTrunk };

struct TrainConfig {
  double learning_rate = 0.1;
  std::size_t epochs = 100;
  std::size_t batch_size = 16;
  std::uint64_t seed = 1;
  double init_scale = 1.0;

  // Throws Error(Validation).
  void validate() const;
};

struct ModelParams {
  DenseLayer trunk;                  // input_dim x k
  std::vector<DenseLayer> levels;    // levels 0..h
  std::vector<Eigen::MatrixXd> masks;  // 0/1, same shape as levels[l].weights
  // k x cols for levels 1..h-1 under ParentsAndTrunk; 0 x 0 everywhere else.
  std::vector<Eigen::MatrixXd> skips;

  std::size_t input_dim() const { return static_cast<std::size_t>(trunk.weights.rows()); }
  std::size_t feature_dim() const { return static_cast<std::size_t>(trunk.weights.cols()); }
  std::size_t height() const { return levels.size() - 1; }
  CascadeInput cascade_input() const;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

// Same layout as ModelParams, without masks.
struct ModelGradients {
  DenseLayer trunk;
  std::vector<DenseLayer> levels;
  std::vector<Eigen::MatrixXd> skips;
};

// Level 0 is dense; level l >= 1 uses the mask for target level l.
std::vector<Eigen::MatrixXd> mask_matrices(const Hierarchy& hierarchy, std::size_t k);

// Weights uniform in +-init_scale / sqrt(fan_in), masked entries and biases 0.
// Skip weights are drawn last, so both variants share the other values.
ModelParams init_params(const Hierarchy& hierarchy, std::size_t input_dim, std::size_t k,
                        const TrainConfig& config,
                        CascadeInput input = CascadeInput::ParentsAndTrunk);

struct ForwardCache {
  Eigen::VectorXd input;
  Eigen::VectorXd trunk;
  std::vector<Eigen::VectorXd> pre;     // z_l
  std::vector<Eigen::VectorXd> hidden;  // tanh(z_l)
  std::vector<Eigen::VectorXd> output;  // softmax(z_l)
};

struct ForwardResult {
  LevelPosteriors posteriors;
  ForwardCache cache;
};

// Throws Error(Validation) on a dimension mismatch.
ForwardResult forward(const ModelParams& params, std::span<const double> x);

Eigen::VectorXd softmax(const Eigen::VectorXd& z);

// Sum over levels of ||target - posterior||^2.
double combined_cost(const LevelPosteriors& posteriors, const LevelTargets& targets);

ModelGradients backward(const ModelParams& params, const ForwardCache& cache,
                        const LevelTargets& targets);

struct TrainResult {
  ModelParams params;
  double initial_loss = 0.0;          // mean cost before the first update
  std::vector<double> loss_history;   // mean cost seen during each epoch
};

// Mini-batch SGD on the mean combined cost. Throws Error(Numeric) naming the
// epoch and batch when the loss stops being finite.
TrainResult train(ModelParams params, const Dataset& dataset, const Hierarchy& hierarchy,
                  const TrainConfig& config);

double mean_cost(const ModelParams& params, const Dataset& dataset, const Hierarchy& hierarchy);

// Forward plus downpour.
ScoredTrace predict(const ModelParams& params, std::span<const double> x,
                    std::span<const LevelMask> masks);

// k*n + h*n^2. Throws Error(Numeric) on overflow.
std::uint64_t hinet_param_count(std::uint64_t k, std::uint64_t n, std::uint64_t h);

// Hierarchical weights excluding biases, the trunk, skips and stop columns:
// the first level's k x n_1 block plus each real-to-real masked block.
std::size_t hierarchical_weight_count(const ModelParams& params);
std::size_t skip_weight_count(const ModelParams& params);

}  // namespace hinet
