#include <gtest/gtest.h>

#include <sstream>

#include "godial/neural.hpp"

using namespace godial;

namespace {

// Straight-line dense evaluation used as the oracle for forward().
std::vector<double> reference_forward(const Network& net, const std::vector<double>& x) {
  std::vector<double> a = x;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const auto& layer = net.layers[l];
    std::vector<double> z(layer.out);
    for (std::size_t o = 0; o < layer.out; ++o) {
      double s = layer.bias[o];
      for (std::size_t i = 0; i < layer.in; ++i) s += layer.w(o, i) * a[i];
      z[o] = (l + 1 < net.layers.size()) ? std::max(0.0, s) : s;
    }
    a = z;
  }
  return a;
}

std::vector<double> random_input(Rng& rng, std::size_t n, bool binary) {
  std::vector<double> x(n);
  for (auto& v : x) v = binary ? (uniform01(rng) < 0.3 ? 1.0 : 0.0) : uniform01(rng) * 2.0 - 1.0;
  return x;
}

}  // namespace

TEST(NewNetwork, ParameterCountAndShapes) {
  const auto net = new_network({66, 80, 14}, 3);
  EXPECT_EQ(parameter_count(net), 66u * 80 + 80 + 80 * 14 + 14);
  EXPECT_EQ(flatten_parameters(net).size(), parameter_count(net));
  for (const auto& sizes : std::vector<std::vector<std::size_t>>{{1, 1}, {3, 5, 2}, {4, 7, 6, 3}}) {
    const auto n = new_network(sizes, 1);
    std::size_t closed = 0;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) closed += sizes[l] * sizes[l + 1] + sizes[l + 1];
    EXPECT_EQ(parameter_count(n), closed);
  }
}

TEST(NewNetwork, DeterministicAndBounded) {
  EXPECT_EQ(new_network({66, 80, 14}, 3), new_network({66, 80, 14}, 3));
  EXPECT_NE(new_network({66, 80, 14}, 3), new_network({66, 80, 14}, 4));
  const auto net = new_network({66, 80, 14}, 3);
  for (const auto& l : net.layers) {
    const double lim = std::sqrt(6.0 / static_cast<double>(l.in + l.out));
    for (double w : l.weights) EXPECT_LE(std::abs(w), lim);
    for (double b : l.bias) EXPECT_EQ(b, 0.0);
  }
}

TEST(NewNetwork, RejectsBadSizes) {
  EXPECT_THROW(new_network({1}, 0), std::invalid_argument);
  EXPECT_THROW(new_network({3, 0, 2}, 0), std::invalid_argument);
}

TEST(Forward, ZeroWeightsAndBiasOnly) {
  auto net = new_network({5, 4, 3}, 1);
  for (auto& l : net.layers) std::fill(l.weights.begin(), l.weights.end(), 0.0);
  const std::vector<double> x = {1, 2, 3, 4, 5};
  EXPECT_EQ(forward(net, x), std::vector<double>(3, 0.0));
  net.layers.back().bias = {0.5, -1.0, 2.0};
  EXPECT_EQ(forward(net, x), (std::vector<double>{0.5, -1.0, 2.0}));
}

TEST(Forward, MatchesReferenceEvaluation) {
  Rng rng(10);
  for (int trial = 0; trial < 20; ++trial) {
    auto net = new_network({12, 9, 5}, static_cast<std::uint64_t>(trial));
    for (auto& b : net.layers[0].bias) b = uniform01(rng) - 0.5;
    const auto x = random_input(rng, 12, trial % 2 == 0);
    const auto got = forward(net, x);
    const auto want = reference_forward(net, x);
    for (std::size_t k = 0; k < got.size(); ++k) EXPECT_NEAR(got[k], want[k], 1e-12);
  }
  EXPECT_THROW(forward(new_network({3, 2, 2}, 1), std::vector<double>(4)), std::invalid_argument);
}

TEST(TrainBatch, ExactTargetsLeaveNetworkUnchanged) {
  auto net = new_network({6, 5, 3}, 2);
  const std::vector<double> x = {1, 0, 1, 0, 0, 1};
  const auto q = forward(net, x);
  const auto before = net;
  const std::vector<std::span<const double>> in = {x};
  const std::vector<std::size_t> a = {1};
  const std::vector<double> y = {q[1]};
  EXPECT_EQ(train_batch(net, in, a, y, {0.1, 1.0}), 0.0);
  EXPECT_EQ(net, before);
}

TEST(TrainBatch, ZeroLearningRateReturnsLoss) {
  auto net = new_network({6, 5, 3}, 2);
  const std::vector<double> x = {1, 0, 1, 0, 0, 1};
  const double q = forward(net, x)[2];
  const auto before = net;
  const std::vector<std::span<const double>> in = {x};
  const std::vector<std::size_t> a = {2};
  const std::vector<double> y = {q + 3.0};
  EXPECT_NEAR(train_batch(net, in, a, y, {0.0, 1.0}), 9.0, 1e-12);
  EXPECT_EQ(net, before);
}

TEST(TrainBatch, RejectsBadBatches) {
  auto net = new_network({3, 2, 2}, 1);
  const std::vector<double> x = {1, 0, 1};
  const std::vector<std::span<const double>> in = {x};
  EXPECT_THROW(train_batch(net, in, std::vector<std::size_t>{0}, std::vector<double>{NAN}, {}),
               std::invalid_argument);
  EXPECT_THROW(train_batch(net, {}, {}, {}, {}), std::invalid_argument);
  EXPECT_THROW(train_batch(net, in, std::vector<std::size_t>{5}, std::vector<double>{1.0}, {}),
               std::invalid_argument);
  // A rejected batch must not leave stale gradient behind for the next call.
  auto a = new_network({3, 2, 2}, 1), b = a;
  const std::vector<double> bad = {1, 1};
  const std::vector<std::span<const double>> mixed = {x, bad};
  EXPECT_THROW(train_batch(a, mixed, std::vector<std::size_t>{0, 0}, std::vector<double>{1, 1}, {}),
               std::invalid_argument);
  train_batch(a, in, std::vector<std::size_t>{0}, std::vector<double>{1.0}, {0.1, 1.0});
  train_batch(b, in, std::vector<std::size_t>{0}, std::vector<double>{1.0}, {0.1, 1.0});
  EXPECT_EQ(a, b);
}

TEST(TrainBatch, StepMatchesFiniteDifferenceDescent) {
  // One unclipped step equals theta - lr * mean gradient computed independently.
  auto net = new_network({5, 4, 3}, 8);
  Rng rng(1);
  std::vector<std::vector<double>> xs;
  std::vector<std::span<const double>> in;
  std::vector<std::size_t> acts = {0, 2, 1};
  std::vector<double> ys = {1.0, -0.5, 0.3};
  for (int j = 0; j < 3; ++j) xs.push_back(random_input(rng, 5, false));
  for (const auto& x : xs) in.emplace_back(x);
  std::vector<double> mean(parameter_count(net), 0.0);
  for (int j = 0; j < 3; ++j) {
    const auto g = finite_difference_gradient(net, xs[static_cast<std::size_t>(j)], acts[static_cast<std::size_t>(j)],
                                              ys[static_cast<std::size_t>(j)], 1e-6);
    for (std::size_t k = 0; k < g.size(); ++k) mean[k] += g[k] / 3.0;
  }
  const auto before = flatten_parameters(net);
  train_batch(net, in, acts, ys, {0.01, 0.0});
  const auto after = flatten_parameters(net);
  for (std::size_t k = 0; k < before.size(); ++k) EXPECT_NEAR(after[k], before[k] - 0.01 * mean[k], 1e-8);
}

TEST(TrainBatch, GlobalNormClip) {
  auto net = new_network({4, 3, 2}, 5);
  const std::vector<double> x = {1, -1, 0.5, 2};
  const std::vector<std::span<const double>> in = {x};
  const std::vector<std::size_t> a = {0};
  const std::vector<double> y = {1000.0};
  const auto before = flatten_parameters(net);
  train_batch(net, in, a, y, {0.1, 1.0});
  const auto after = flatten_parameters(net);
  double sq = 0.0;
  for (std::size_t k = 0; k < before.size(); ++k) sq += (after[k] - before[k]) * (after[k] - before[k]);
  EXPECT_NEAR(std::sqrt(sq), 0.1, 1e-9);  // step norm = lr * clip
}

TEST(TrainBatch, LossNonIncreasingOnRepeatedBatch) {
  auto net = new_network({10, 8, 4}, 21);
  Rng rng(5);
  std::vector<std::vector<double>> xs;
  for (int j = 0; j < 8; ++j) xs.push_back(random_input(rng, 10, true));
  std::vector<std::span<const double>> in(xs.begin(), xs.end());
  const std::vector<std::size_t> a = {0, 1, 2, 3, 0, 1, 2, 3};
  const std::vector<double> y = {1, -1, 0.5, 2, 0, 1, -0.5, 0.25};
  double prev = train_batch(net, in, a, y, {1e-3, 1.0});
  for (int step = 0; step < 100; ++step) {
    const double loss = train_batch(net, in, a, y, {1e-3, 1.0});
    EXPECT_LE(loss, prev + 1e-15);
    prev = loss;
  }
}

TEST(GradientCheck, HealthyImplementation) {
  Rng rng(99);
  for (int trial = 0; trial < 10; ++trial) {
    const auto net = new_network({8, 6, 4}, static_cast<std::uint64_t>(trial));
    const auto x = random_input(rng, 8, trial % 2 == 1);
    EXPECT_LT(gradient_check(net, x, uniform_index(rng, 4), uniform01(rng) * 4 - 2), 1e-4);
  }
  EXPECT_THROW(gradient_check(new_network({2, 2, 2}, 1), std::vector<double>{1, 1}, 0, 0.0, 0.0),
               std::invalid_argument);
}

TEST(GradientCheck, DoubledGradientGivesOneThird) {
  const auto net = new_network({6, 5, 3}, 4);
  const std::vector<double> x = {0.3, -1, 0.7, 0.1, 1, -0.2};
  auto g = loss_gradient(net, x, 1, 2.0);
  const auto fd = finite_difference_gradient(net, x, 1, 2.0, 1e-5);
  for (auto& v : g) v *= 2.0;
  // |2g - g| / (|2g| + |g|) = 1/3 wherever g is nonzero
  EXPECT_NEAR(max_relative_error(g, fd), 1.0 / 3.0, 1e-4);
}

TEST(GradientCheck, ZeroNetworkZeroTarget) {
  auto net = new_network({3, 2, 2}, 1);
  for (auto& l : net.layers) std::fill(l.weights.begin(), l.weights.end(), 0.0);
  EXPECT_EQ(gradient_check(net, std::vector<double>{1, 0, 1}, 0, 0.0), 0.0);
}

TEST(Clone, IndependentCopies) {
  auto net = new_network({4, 3, 2}, 5);
  auto copy = clone_network(net);
  const std::vector<double> x = {1, 0, 1, 1};
  EXPECT_EQ(forward(copy, x), forward(net, x));
  const std::vector<std::span<const double>> in = {x};
  train_batch(net, in, std::vector<std::size_t>{0}, std::vector<double>{5.0}, {0.1, 1.0});
  EXPECT_NE(forward(copy, x), forward(net, x));
  const auto net_now = net;
  train_batch(copy, in, std::vector<std::size_t>{1}, std::vector<double>{-5.0}, {0.1, 1.0});
  EXPECT_EQ(net, net_now);
}

TEST(NetworkFile, RoundTripIsExact) {
  auto net = new_network({7, 5, 3}, 12);
  net.layers[0].bias[2] = 0.1 + 0.2;
  std::stringstream ss;
  write_network(ss, net);
  EXPECT_EQ(read_network(ss), net);
}

TEST(NetworkFile, RowMajorOutByIn) {
  auto net = new_network({2, 2}, 1);
  net.layers[0].w(0, 0) = 1;
  net.layers[0].w(0, 1) = 2;
  net.layers[0].w(1, 0) = 3;
  net.layers[0].w(1, 1) = 4;
  net.layers[0].bias = {5, 6};
  std::stringstream ss;
  write_network(ss, net);
  std::string header, line;
  std::getline(ss, header);
  std::getline(ss, line);
  EXPECT_EQ(header, "network 2 2 2");
  EXPECT_EQ(line, "1 2 3 4 5 6");
}

TEST(NetworkFile, RejectsTruncatedAndNonFinite) {
  std::stringstream a("network 2 2 2\n1 2 3\n");
  EXPECT_THROW(read_network(a), std::runtime_error);
  std::stringstream b("network 2 1 1\nnan 0\n");
  EXPECT_THROW(read_network(b), std::runtime_error);
  std::stringstream c("netwrk 2 1 1\n");
  EXPECT_THROW(read_network(c), std::runtime_error);
}
