#include "hinet/baseline.hpp"

#include <cmath>

#include "hinet/checked_math.hpp"
#include "hinet/error.hpp"
#include "hinet/rng.hpp"

namespace hinet {

FlatParams init_flat_params(const TraceIndex& index, std::size_t input_dim, std::size_t k,
                            const TrainConfig& config) {
  if (input_dim == 0 || k == 0) {
    throw Error(ErrorKind::Validation, "input and feature dimensions must be positive");
  }
  Rng rng(config.seed);
  auto layer = [&](std::size_t fan_in, std::size_t fan_out) {
    DenseLayer out{Eigen::MatrixXd(fan_in, fan_out), Eigen::VectorXd::Zero(fan_out)};
    const double limit = config.init_scale / std::sqrt(static_cast<double>(fan_in));
    for (Eigen::Index r = 0; r < out.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < out.weights.cols(); ++c) {
        out.weights(r, c) = rng.uniform(-limit, limit);
      }
    }
    return out;
  };
  FlatParams params;
  params.trunk = layer(input_dim, k);
  params.output = layer(k, index.size());
  return params;
}

Eigen::VectorXd flat_forward(const FlatParams& params, std::span<const double> x,
                             FlatForwardCache* cache) {
  if (x.size() != params.input_dim()) {
    throw Error(ErrorKind::Validation, "input has " + std::to_string(x.size()) +
                                           " features, model expects " +
                                           std::to_string(params.input_dim()));
  }
  const Eigen::Map<const Eigen::VectorXd> input(x.data(), static_cast<Eigen::Index>(x.size()));
  Eigen::VectorXd trunk =
      (params.trunk.weights.transpose() * input + params.trunk.bias).array().tanh().matrix();
  Eigen::VectorXd p = softmax(params.output.weights.transpose() * trunk + params.output.bias);
  if (cache) {
    cache->input = input;
    cache->trunk = std::move(trunk);
    cache->output = p;
  }
  return p;
}

double flat_cost(const Eigen::VectorXd& probabilities, std::size_t class_id) {
  double cost = probabilities.squaredNorm();
  const double p = probabilities(static_cast<Eigen::Index>(class_id));
  return cost - p * p + (1.0 - p) * (1.0 - p);
}

FlatGradients flat_backward(const FlatParams& params, const FlatForwardCache& cache,
                            std::size_t class_id) {
  const Eigen::VectorXd& y = cache.output;
  Eigen::VectorXd dy = 2.0 * y;
  dy(static_cast<Eigen::Index>(class_id)) -= 2.0;
  const Eigen::VectorXd dz = y.cwiseProduct((dy.array() - y.dot(dy)).matrix());
  FlatGradients g;
  g.output.weights = cache.trunk * dz.transpose();
  g.output.bias = dz;
  const Eigen::VectorXd dz_trunk = (params.output.weights * dz)
                                       .cwiseProduct((1.0 - cache.trunk.array().square()).matrix());
  g.trunk.weights = cache.input * dz_trunk.transpose();
  g.trunk.bias = dz_trunk;
  return g;
}

double flat_mean_cost(const FlatParams& params, const Dataset& dataset, const TraceIndex& index) {
  double total = 0.0;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    total += flat_cost(flat_forward(params, dataset.features[i]), index.id_of(dataset.labels[i]));
  }
  return total / static_cast<double>(dataset.size());
}

FlatTrainResult flat_train(FlatParams params, const Dataset& dataset, const Hierarchy& hierarchy,
                           const TraceIndex& index, const TrainConfig& config) {
  config.validate();
  validate_dataset(dataset, hierarchy);
  if (dataset.input_dim != params.input_dim()) {
    throw Error(ErrorKind::Validation, "dataset feature dimension does not match the model");
  }
  if (params.class_count() != index.size()) {
    throw Error(ErrorKind::Validation, "model class count does not match the trace count");
  }
  std::vector<std::size_t> class_ids;
  for (const Trace& label : dataset.labels) class_ids.push_back(index.id_of(label));

  FlatTrainResult result;
  result.initial_loss = flat_mean_cost(params, dataset, index);

  Rng rng(config.seed);
  std::vector<std::size_t> order(dataset.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    double epoch_cost = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_index) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      FlatGradients sum{
          {Eigen::MatrixXd::Zero(params.trunk.weights.rows(), params.trunk.weights.cols()),
           Eigen::VectorXd::Zero(params.trunk.bias.size())},
          {Eigen::MatrixXd::Zero(params.output.weights.rows(), params.output.weights.cols()),
           Eigen::VectorXd::Zero(params.output.bias.size())}};
      double batch_cost = 0.0;
      for (std::size_t b = start; b < stop; ++b) {
        const std::size_t i = order[b];
        FlatForwardCache cache;
        const Eigen::VectorXd p = flat_forward(params, dataset.features[i], &cache);
        batch_cost += flat_cost(p, class_ids[i]);
        const FlatGradients g = flat_backward(params, cache, class_ids[i]);
        sum.trunk.weights += g.trunk.weights;
        sum.trunk.bias += g.trunk.bias;
        sum.output.weights += g.output.weights;
        sum.output.bias += g.output.bias;
      }
      if (!std::isfinite(batch_cost)) {
        throw Error(ErrorKind::Numeric, "non-finite loss at epoch " + std::to_string(epoch + 1) +
                                            " batch " + std::to_string(batch_index + 1));
      }
      epoch_cost += batch_cost;
      const double step = config.learning_rate / static_cast<double>(stop - start);
      params.trunk.weights -= step * sum.trunk.weights;
      params.trunk.bias -= step * sum.trunk.bias;
      params.output.weights -= step * sum.output.weights;
      params.output.bias -= step * sum.output.bias;
    }
    result.loss_history.push_back(epoch_cost / static_cast<double>(dataset.size()));
  }
  result.params = std::move(params);
  return result;
}

Trace flat_predict(const FlatParams& params, std::span<const double> x, const TraceIndex& index) {
  const Eigen::VectorXd p = flat_forward(params, x);
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < p.size(); ++i) {
    if (p(i) > p(best)) best = i;
  }
  return index.trace_at(static_cast<std::size_t>(best));
}

std::uint64_t flatten_param_count(std::uint64_t k, std::uint64_t n, std::uint64_t h) {
  if (k == 0 || n == 0 || h == 0) throw Error(ErrorKind::Validation, "k, n and h must be >= 1");
  const char* what = "flatten parameter count";
  return checked_mul(k, checked_pow(n, h, what), what);
}

}  // namespace hinet
