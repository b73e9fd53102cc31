#include "hinet/network.hpp"

#include <cmath>

#include "hinet/checked_math.hpp"
#include "hinet/error.hpp"
#include "hinet/rng.hpp"

namespace hinet {

namespace {

DenseLayer uniform_layer(Rng& rng, std::size_t fan_in, std::size_t fan_out, double init_scale) {
  DenseLayer layer{Eigen::MatrixXd(fan_in, fan_out), Eigen::VectorXd::Zero(fan_out)};
  const double limit = init_scale / std::sqrt(static_cast<double>(fan_in));
  for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
    for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) {
      layer.weights(r, c) = rng.uniform(-limit, limit);
    }
  }
  return layer;
}

DenseLayer zeros_like(const DenseLayer& layer) {
  return {Eigen::MatrixXd::Zero(layer.weights.rows(), layer.weights.cols()),
          Eigen::VectorXd::Zero(layer.bias.size())};
}

ModelGradients zero_gradients(const ModelParams& params) {
  ModelGradients g{zeros_like(params.trunk), {}, {}};
  for (const auto& level : params.levels) g.levels.push_back(zeros_like(level));
  for (const auto& skip : params.skips) g.skips.push_back(Eigen::MatrixXd::Zero(skip.rows(), skip.cols()));
  return g;
}

std::vector<double> to_std(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Eigen::VectorXd to_eigen(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw Error(ErrorKind::Validation, "learning_rate must be finite and non-negative");
  }
  if (epochs == 0) throw Error(ErrorKind::Validation, "epochs must be at least 1");
  if (batch_size == 0) throw Error(ErrorKind::Validation, "batch_size must be at least 1");
  if (!(init_scale >= 0.0) || !std::isfinite(init_scale)) {
    throw Error(ErrorKind::Validation, "init_scale must be finite and non-negative");
  }
}

std::vector<Eigen::MatrixXd> mask_matrices(const Hierarchy& hierarchy, std::size_t k) {
  std::vector<Eigen::MatrixXd> out;
  out.push_back(Eigen::MatrixXd::Ones(static_cast<Eigen::Index>(k),
                                      static_cast<Eigen::Index>(hierarchy.level_size(0))));
  for (const LevelMask& mask : build_masks(hierarchy)) {
    Eigen::MatrixXd m(mask.rows(), mask.cols());
    for (std::size_t r = 0; r < mask.rows(); ++r) {
      for (std::size_t c = 0; c < mask.cols(); ++c) m(r, c) = mask.at(r, c) ? 1.0 : 0.0;
    }
    out.push_back(std::move(m));
  }
  return out;
}

CascadeInput ModelParams::cascade_input() const {
  for (const auto& skip : skips) {
    if (skip.size() > 0) return CascadeInput::ParentsAndTrunk;
  }
  return CascadeInput::Parents;
}

ModelParams init_params(const Hierarchy& hierarchy, std::size_t input_dim, std::size_t k,
                        const TrainConfig& config, CascadeInput input) {
  if (input_dim == 0 || k == 0) {
    throw Error(ErrorKind::Validation, "input and feature dimensions must be positive");
  }
  Rng rng(config.seed);
  ModelParams params;
  params.trunk = uniform_layer(rng, input_dim, k, config.init_scale);
  params.masks = mask_matrices(hierarchy, k);
  for (const auto& mask : params.masks) {
    DenseLayer layer = uniform_layer(rng, static_cast<std::size_t>(mask.rows()),
                                     static_cast<std::size_t>(mask.cols()), config.init_scale);
    layer.weights = layer.weights.cwiseProduct(mask);
    params.levels.push_back(std::move(layer));
  }
  const std::size_t h = hierarchy.height();
  for (std::size_t l = 0; l <= h; ++l) {
    if (input == CascadeInput::ParentsAndTrunk && l >= 1 && l < h) {
      params.skips.push_back(uniform_layer(rng, k, static_cast<std::size_t>(params.masks[l].cols()),
                                           config.init_scale)
                                 .weights);
    } else {
      params.skips.emplace_back(0, 0);
    }
  }
  return params;
}

Eigen::VectorXd softmax(const Eigen::VectorXd& z) {
  const double peak = z.maxCoeff();
  Eigen::VectorXd e = (z.array() - peak).exp();
  return e / e.sum();
}

ForwardResult forward(const ModelParams& params, std::span<const double> x) {
  if (x.size() != params.input_dim()) {
    throw Error(ErrorKind::Validation, "input has " + std::to_string(x.size()) +
                                           " features, model expects " +
                                           std::to_string(params.input_dim()));
  }
  ForwardResult result;
  ForwardCache& cache = result.cache;
  cache.input = Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
  cache.trunk =
      (params.trunk.weights.transpose() * cache.input + params.trunk.bias).array().tanh().matrix();

  for (std::size_t l = 0; l < params.levels.size(); ++l) {
    const DenseLayer& layer = params.levels[l];
    Eigen::VectorXd z;
    if (l == 0) {
      z = layer.weights.transpose() * cache.trunk + layer.bias;
    } else {
      z = layer.weights.transpose() * cache.hidden[l - 1].head(layer.weights.rows()) + layer.bias;
      if (params.skips[l].size() > 0) z += params.skips[l].transpose() * cache.trunk;
    }
    cache.hidden.push_back(z.array().tanh().matrix());
    cache.output.push_back(softmax(z));
    result.posteriors.levels.push_back(to_std(cache.output.back()));
    cache.pre.push_back(std::move(z));
  }
  return result;
}

double combined_cost(const LevelPosteriors& posteriors, const LevelTargets& targets) {
  if (posteriors.levels.size() != targets.levels.size()) {
    throw Error(ErrorKind::Validation, "posterior and target level counts differ");
  }
  double cost = 0.0;
  for (std::size_t l = 0; l < targets.levels.size(); ++l) {
    const auto& y = posteriors.levels[l];
    const auto& t = targets.levels[l];
    if (y.size() != t.size()) {
      throw Error(ErrorKind::Validation,
                  "posterior and target sizes differ at level " + std::to_string(l + 1));
    }
    for (std::size_t i = 0; i < y.size(); ++i) cost += (t[i] - y[i]) * (t[i] - y[i]);
  }
  return cost;
}

ModelGradients backward(const ModelParams& params, const ForwardCache& cache,
                        const LevelTargets& targets) {
  const std::size_t levels = params.levels.size();
  if (targets.levels.size() != levels) {
    throw Error(ErrorKind::Validation, "target level count does not match the model");
  }
  ModelGradients grads;
  grads.levels.resize(levels);
  grads.skips.resize(levels);
  Eigen::VectorXd dtrunk = Eigen::VectorXd::Zero(cache.trunk.size());

  Eigen::VectorXd dz_below;  // dE/dz of level l + 1
  for (std::size_t l = levels; l-- > 0;) {
    const Eigen::VectorXd& y = cache.output[l];
    const Eigen::VectorXd dy = 2.0 * (y - to_eigen(targets.levels[l]));
    Eigen::VectorXd dz = y.cwiseProduct((dy.array() - y.dot(dy)).matrix());
    if (l + 1 < levels) {
      const Eigen::MatrixXd& w_next = params.levels[l + 1].weights;
      const Eigen::Index real = w_next.rows();
      const Eigen::VectorXd dh = w_next * dz_below;
      const Eigen::VectorXd h = cache.hidden[l].head(real);
      dz.head(real) += dh.cwiseProduct((1.0 - h.array().square()).matrix());
    }
    const Eigen::VectorXd& input = l == 0 ? cache.trunk
                                          : Eigen::VectorXd(cache.hidden[l - 1].head(
                                                params.levels[l].weights.rows()));
    grads.levels[l].weights = (input * dz.transpose()).cwiseProduct(params.masks[l]);
    grads.levels[l].bias = dz;
    if (params.skips[l].size() > 0) {
      grads.skips[l] = cache.trunk * dz.transpose();
      dtrunk += params.skips[l] * dz;
    } else {
      grads.skips[l].resize(0, 0);
    }
    dz_below = std::move(dz);
  }

  dtrunk += params.levels[0].weights * dz_below;
  const Eigen::VectorXd dz_trunk =
      dtrunk.cwiseProduct((1.0 - cache.trunk.array().square()).matrix());
  grads.trunk.weights = cache.input * dz_trunk.transpose();
  grads.trunk.bias = dz_trunk;
  return grads;
}

double mean_cost(const ModelParams& params, const Dataset& dataset, const Hierarchy& hierarchy) {
  double total = 0.0;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const ForwardResult fr = forward(params, dataset.features[i]);
    total += combined_cost(fr.posteriors, encode_targets(dataset.labels[i], hierarchy));
  }
  return total / static_cast<double>(dataset.size());
}

TrainResult train(ModelParams params, const Dataset& dataset, const Hierarchy& hierarchy,
                  const TrainConfig& config) {
  config.validate();
  validate_dataset(dataset, hierarchy);
  if (dataset.input_dim != params.input_dim()) {
    throw Error(ErrorKind::Validation, "dataset feature dimension does not match the model");
  }
  std::vector<LevelTargets> targets;
  targets.reserve(dataset.size());
  for (const Trace& label : dataset.labels) targets.push_back(encode_targets(label, hierarchy));

  TrainResult result;
  result.initial_loss = mean_cost(params, dataset, hierarchy);

  Rng rng(config.seed);
  std::vector<std::size_t> order(dataset.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    double epoch_cost = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_index) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      ModelGradients sum = zero_gradients(params);
      double batch_cost = 0.0;
      for (std::size_t b = start; b < stop; ++b) {
        const std::size_t i = order[b];
        const ForwardResult fr = forward(params, dataset.features[i]);
        batch_cost += combined_cost(fr.posteriors, targets[i]);
        const ModelGradients g = backward(params, fr.cache, targets[i]);
        sum.trunk.weights += g.trunk.weights;
        sum.trunk.bias += g.trunk.bias;
        for (std::size_t l = 0; l < sum.levels.size(); ++l) {
          sum.levels[l].weights += g.levels[l].weights;
          sum.levels[l].bias += g.levels[l].bias;
          if (sum.skips[l].size() > 0) sum.skips[l] += g.skips[l];
        }
      }
      if (!std::isfinite(batch_cost)) {
        throw Error(ErrorKind::Numeric, "non-finite loss at epoch " + std::to_string(epoch + 1) +
                                            " batch " + std::to_string(batch_index + 1));
      }
      epoch_cost += batch_cost;
      const double step = config.learning_rate / static_cast<double>(stop - start);
      params.trunk.weights -= step * sum.trunk.weights;
      params.trunk.bias -= step * sum.trunk.bias;
      for (std::size_t l = 0; l < params.levels.size(); ++l) {
        params.levels[l].weights -= step * sum.levels[l].weights;
        params.levels[l].bias -= step * sum.levels[l].bias;
        if (params.skips[l].size() > 0) params.skips[l] -= step * sum.skips[l];
      }
    }
    result.loss_history.push_back(epoch_cost / static_cast<double>(dataset.size()));
  }
  result.params = std::move(params);
  return result;
}

ScoredTrace predict(const ModelParams& params, std::span<const double> x,
                    std::span<const LevelMask> masks) {
  return downpour(forward(params, x).posteriors, masks);
}

std::uint64_t hinet_param_count(std::uint64_t k, std::uint64_t n, std::uint64_t h) {
  if (k == 0 || n == 0 || h == 0) throw Error(ErrorKind::Validation, "k, n and h must be >= 1");
  const char* what = "hinet parameter count";
  return checked_add(checked_mul(k, n, what), checked_mul(h, checked_mul(n, n, what), what), what);
}

std::size_t hierarchical_weight_count(const ModelParams& params) {
  std::size_t total = static_cast<std::size_t>(params.levels[0].weights.size());
  for (std::size_t l = 1; l < params.levels.size(); ++l) {
    const auto& w = params.levels[l].weights;
    total += static_cast<std::size_t>(w.rows() * (w.cols() - 1));
  }
  return total;
}

std::size_t skip_weight_count(const ModelParams& params) {
  std::size_t total = 0;
  for (const auto& skip : params.skips) total += static_cast<std::size_t>(skip.size());
  return total;
}

}  // namespace hinet
