#include <cmath>

#include "doctest.h"
#include "gradient_check.hpp"
#include "hinet/baseline.hpp"
#include "hinet/error.hpp"
#include "test_support.hpp"

using namespace hinet;
using namespace hinet::testing;

TEST_SUITE_BEGIN("baseline");

TEST_CASE("flat forward") {
  const Hierarchy h = make_complete_tree(2, 3);
  const TraceIndex index(h);
  TrainConfig config;
  SUBCASE("zero params give 1/T") {
    config.init_scale = 0.0;
    const FlatParams p = init_flat_params(index, 4, 6, config);
    CHECK(p.class_count() == 14);
    const Eigen::VectorXd y = flat_forward(p, std::vector<double>{1, 2, 3, 4});
    for (Eigen::Index i = 0; i < y.size(); ++i) CHECK(y(i) == doctest::Approx(1.0 / 14));
  }
  SUBCASE("distribution and decodable argmax") {
    Rng rng(8);
    for (std::uint64_t s = 0; s < 20; ++s) {
      config.seed = s;
      config.init_scale = 3.0;
      const FlatParams p = init_flat_params(index, 4, 6, config);
      std::vector<double> x(4);
      for (double& v : x) v = rng.uniform(-1, 1);
      CHECK(std::abs(flat_forward(p, x).sum() - 1.0) <= 1e-9);
      CHECK(is_valid_trace(h, flat_predict(p, x, index)));
    }
  }
  SUBCASE("dimension mismatch") {
    const FlatParams p = init_flat_params(index, 4, 6, config);
    CHECK_THROWS_AS(flat_forward(p, std::vector<double>{1}), Error);
  }
  SUBCASE("ties pick the smallest class") {
    config.init_scale = 0.0;
    const FlatParams p = init_flat_params(index, 4, 6, config);
    CHECK(flat_predict(p, std::vector<double>{0, 0, 0, 0}, index) == index.trace_at(0));
  }
}

TEST_CASE("flat gradients match central differences") {
  const Hierarchy h = make_complete_tree(2, 2);
  const TraceIndex index(h);
  for (std::uint64_t s = 0; s < 20; ++s) {
    TrainConfig config;
    config.seed = s;
    config.init_scale = 1.5;
    FlatParams p = init_flat_params(index, 3, 4, config);
    Rng rng(s);
    for (Eigen::Index i = 0; i < p.output.bias.size(); ++i) p.output.bias(i) = rng.uniform(-1, 1);
    const std::vector<double> x{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    const std::size_t target = rng.below(index.size());

    FlatForwardCache cache;
    flat_forward(p, x, &cache);
    const FlatGradients g = flat_backward(p, cache, target);
    double worst = 0.0;
    auto sweep = [&](auto& values, const auto& analytic) {
      for (Eigen::Index r = 0; r < values.rows(); ++r) {
        for (Eigen::Index c = 0; c < values.cols(); ++c) {
          const double saved = values(r, c);
          values(r, c) = saved + kFiniteDifferenceStep;
          const double up = flat_cost(flat_forward(p, x), target);
          values(r, c) = saved - kFiniteDifferenceStep;
          const double down = flat_cost(flat_forward(p, x), target);
          values(r, c) = saved;
          worst = std::max(worst, relative_error(analytic(r, c), (up - down) / (2 * kFiniteDifferenceStep)));
        }
      }
    };
    sweep(p.trunk.weights, g.trunk.weights);
    sweep(p.trunk.bias, g.trunk.bias);
    sweep(p.output.weights, g.output.weights);
    sweep(p.output.bias, g.output.bias);
    CHECK(worst < 1e-5);
  }
}

TEST_CASE("flat training") {
  const Hierarchy h = make_complete_tree(2, 2);
  const TraceIndex index(h);
  SyntheticConfig sc;
  sc.samples_per_trace = 12;
  sc.cluster_spread = 0.05;
  sc.input_dim = 8;
  const Dataset data = generate_synthetic(h, sc);
  TrainConfig config;
  config.learning_rate = 0.5;
  config.batch_size = 4;
  config.epochs = 60;
  const FlatParams start = init_flat_params(index, 8, 16, config);

  SUBCASE("loss falls at least tenfold") {
    const FlatTrainResult r = flat_train(start, data, h, index, config);
    CHECK(r.loss_history.size() == 60);
    CHECK(flat_mean_cost(r.params, data, index) * 10 <= r.initial_loss);
  }
  SUBCASE("zero learning rate") {
    config.learning_rate = 0.0;
    config.epochs = 2;
    CHECK(flat_train(start, data, h, index, config).params == start);
  }
  SUBCASE("determinism") {
    config.epochs = 4;
    const FlatTrainResult a = flat_train(start, data, h, index, config);
    const FlatTrainResult b = flat_train(start, data, h, index, config);
    CHECK(a.params == b.params);
    CHECK(a.loss_history == b.loss_history);
  }
}

TEST_CASE("flatten parameter counts") {
  CHECK(flatten_param_count(128, 10, 4) == 1'280'000);
  CHECK(flatten_param_count(128, 100, 3) == 128'000'000);
  CHECK(flatten_param_count(7, 5, 1) == 35);
  CHECK(flatten_param_count(7, 5, 1) == hinet_param_count(7, 5, 1) - 25);
  double previous = 0.0;
  for (std::uint64_t h = 2; h <= 4; ++h) {
    const double ratio = static_cast<double>(flatten_param_count(16, 3, h)) /
                         static_cast<double>(hinet_param_count(16, 3, h));
    CHECK(ratio > previous);
    previous = ratio;
  }
  CHECK_THROWS_AS(flatten_param_count(128, 1000, 10), Error);
  CHECK_THROWS_AS(flatten_param_count(0, 10, 1), Error);
}

TEST_SUITE_END();
