#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <set>

#include "doctest.h"
#include "falcon/design_graph.hpp"
#include "falcon/errors.hpp"
#include "falcon/meta_model.hpp"
#include "model_support.hpp"
#include "test_support.hpp"

using namespace falcon;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using falcon::testing::graph_level_space;
using falcon::testing::node_level_space;
using falcon::testing::dense_lp_oracle;
using falcon::testing::random_graph;
using falcon::testing::RandomGraph;
using falcon::testing::random_input;
using falcon::testing::random_matrix;

namespace {

double pair_oracle(const std::vector<double>& pred, const std::vector<double>& y, double lambda, double tau) {
  double loss = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) loss += (pred[i] - y[i]) * (pred[i] - y[i]);
  for (std::size_t i = 0; i < y.size(); ++i) {
    for (std::size_t j = 0; j < y.size(); ++j) {
      if (j <= i || y[i] == y[j]) continue;
      const double sign = y[i] > y[j] ? -1.0 : 1.0;
      loss += lambda * sign / (1.0 + std::exp(-(pred[i] - pred[j]) / tau));
    }
  }
  return loss;
}

// Scalar re-implementation of the forward pass with plain loops.
std::vector<double> naive_forward(const MetaModelParams& p, const GraphInput& in) {
  const std::size_t n = in.node_count();
  std::vector<std::vector<double>> h(n);
  for (std::size_t v = 0; v < n; ++v) {
    for (Eigen::Index j = 0; j < in.features.cols(); ++j) h[v].push_back(in.features(v, j));
  }
  for (const auto& layer : p.layers) {
    std::vector<std::vector<double>> next(n, std::vector<double>(layer.bias.size()));
    for (std::size_t v = 0; v < n; ++v) {
      const auto deg = in.offsets[v + 1] - in.offsets[v];
      for (Eigen::Index o = 0; o < layer.bias.size(); ++o) {
        double acc = layer.bias(o);
        for (std::size_t i = 0; i < h[v].size(); ++i) acc += layer.self(o, i) * h[v][i];
        for (auto k = in.offsets[v]; k < in.offsets[v + 1]; ++k) {
          const auto u = in.adjacency[k];
          for (std::size_t i = 0; i < h[u].size(); ++i) acc += layer.neighbor(o, i) * h[u][i] / deg;
        }
        for (Eigen::Index l = 0; l < layer.edge.cols(); ++l) acc += layer.edge(o, l) * in.edge_mean(v, l);
        next[v][o] = std::max(acc, 0.0);
      }
    }
    h = std::move(next);
  }
  std::vector<double> out(n);
  for (std::size_t v = 0; v < n; ++v) {
    std::vector<double> x = h[v];
    for (Eigen::Index o = 0; o < p.projection.rows(); ++o) {
      double z = p.projection_bias(o);
      for (Eigen::Index i = 0; i < p.projection.cols(); ++i) z += p.projection(o, i) * in.channel(v, i);
      x.push_back(z);
    }
    if (p.head_hidden.size() > 0) {
      std::vector<double> a(p.head_hidden.rows());
      for (Eigen::Index o = 0; o < p.head_hidden.rows(); ++o) {
        double acc = p.head_hidden_bias(o);
        for (std::size_t i = 0; i < x.size(); ++i) acc += p.head_hidden(o, i) * x[i];
        a[o] = std::max(acc, 0.0);
      }
      x = a;
    }
    double y = p.head_out_bias(0);
    for (std::size_t i = 0; i < x.size(); ++i) y += p.head_out(0, i) * x[i];
    out[v] = y;
  }
  return out;
}

MetaModelConfig small_config() {
  MetaModelConfig c;
  c.hidden_dim = 4;
  c.mp_layers = 2;
  c.head_hidden_dim = 3;
  return c;
}

double loss_at(const MetaModelParams& p, const MetaModelConfig& c, const GraphInput& in,
               const std::vector<std::uint32_t>& rows, const std::vector<double>& y) {
  return loss_and_gradient(p, c, in, rows, y).loss;
}

}  // namespace

TEST_CASE("config validation") {
  MetaModelConfig c;
  CHECK_NOTHROW(c.validate());
  c.alpha = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.rank_temperature = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.hidden_dim = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.optimizer = OptimizerKind::kGradientDescent;
  c.rank_weight = 0.25;
  const auto back = MetaModelConfig::from_json(c.to_json());
  CHECK(back.optimizer == OptimizerKind::kGradientDescent);
  CHECK(back.rank_weight == 0.25);
  CHECK_THROWS_AS(MetaModelConfig::from_json({{"optimizer", "sgd"}}), ConfigError);
}

TEST_CASE("encode_edge") {
  const auto& s = node_level_space();
  auto d = s.design(0);
  const auto dropout = s.dimension_index("dropout");
  d.choices[dropout] = 1;
  const auto e = encode_edge(s, 0, s.id_of(d));
  CHECK(e.size() == s.label_count());
  CHECK(e[dropout] == 1.0);
  CHECK(std::accumulate(e.begin(), e.end(), 0.0) == 1.0);
  CHECK_THROWS_AS(encode_edge(s, 0, 0), DomainError);
  d.choices[dropout] = 2;
  CHECK_THROWS_AS(encode_edge(s, 0, s.id_of(d)), DomainError);

  const auto& g = graph_level_space();
  const auto off = g.from_assignment({{"dropout", 0.0}, {"pre_layers", 1}, {"mp_layers", 2}, {"post_layers", 1},
                                      {"connectivity", "STACK"}, {"activation", "ReLU"}, {"batch_norm", "True"},
                                      {"aggregation", "Mean"}, {"pool_flag", "False"}});
  const auto on = g.from_assignment({{"dropout", 0.0}, {"pre_layers", 1}, {"mp_layers", 2}, {"post_layers", 1},
                                     {"connectivity", "STACK"}, {"activation", "ReLU"}, {"batch_norm", "True"},
                                     {"aggregation", "Mean"}, {"pool_flag", "True"}, {"pool_type", "SAGPool"},
                                     {"pool_loop", 2}});
  const auto b = encode_edge(g, g.id_of(off), g.id_of(on));
  CHECK(b.size() == g.dimension_count() + 1);
  CHECK(b[g.dimension_count()] == 1.0);
  CHECK(std::accumulate(b.begin(), b.end(), 0.0) == 1.0);
}

TEST_CASE("instance entropy and selection") {
  InstanceMatrix m;
  const std::vector<std::vector<std::uint8_t>> rows{{1, 1, 0}, {1, 0, 0}, {1, 1, 0}, {1, 0, 0}};
  for (std::size_t r = 0; r < rows.size(); ++r) m.add_row(static_cast<DesignId>(r), rows[r]);
  const auto h = instance_entropy(m);
  CHECK(h[0] == 0.0);
  CHECK(h[1] == doctest::Approx(std::log(2.0)));
  CHECK(h[2] == 0.0);

  const std::vector<std::uint8_t> bad{1};
  CHECK_THROWS_AS(m.add_row(9, bad), DataError);
  CHECK_THROWS_AS(instance_entropy(InstanceMatrix{}), DomainError);

  Rng rng(1);
  CHECK(select_instances(m, 10, rng) == std::vector<std::size_t>{0, 1, 2});
  const auto two = select_instances(m, 2, rng);
  CHECK(two.size() == 2);
  CHECK(std::is_sorted(two.begin(), two.end()));
  CHECK(two[0] != two[1]);

  Rng a(5), b(5);
  CHECK(select_instances(m, 2, a) == select_instances(m, 2, b));
}

TEST_CASE("selection probabilities follow the entropy softmax") {
  InstanceMatrix m;
  const std::vector<std::vector<std::uint8_t>> rows{{1, 1}, {1, 0}, {1, 1}, {1, 0}};
  for (std::size_t r = 0; r < rows.size(); ++r) m.add_row(static_cast<DesignId>(r), rows[r]);
  // softmax([0, ln 2]) = [1/3, 2/3]
  Rng rng(7);
  const int draws = 30000;
  int second = 0;
  for (int t = 0; t < draws; ++t) second += select_instances(m, 1, rng)[0] == 1;
  CHECK(static_cast<double>(second) / draws == doctest::Approx(2.0 / 3.0).epsilon(0.02));
}

TEST_CASE("identical anchor rows give uniform selection") {
  InstanceMatrix m;
  const std::vector<std::uint8_t> row{1, 0, 1, 1};
  for (DesignId r = 0; r < 3; ++r) m.add_row(r, row);
  Rng rng(3);
  std::vector<int> counts(4, 0);
  const int draws = 40000;
  for (int t = 0; t < draws; ++t) ++counts[select_instances(m, 1, rng)[0]];
  for (int c : counts) CHECK(static_cast<double>(c) / draws == doctest::Approx(0.25).epsilon(0.04));
}

TEST_CASE("label propagation examples") {
  const std::vector<std::uint32_t> offsets{0, 1, 2};
  const std::vector<std::uint32_t> adjacency{1, 0};
  MatrixXd y0(2, 1);
  y0 << 1, 0;
  const auto y = label_propagate(offsets, adjacency, y0, 0.5, 1);
  CHECK(y(0, 0) == doctest::Approx(0.5));
  CHECK(y(1, 0) == doctest::Approx(0.5));
  CHECK(label_propagate(offsets, adjacency, y0, 0.0, 5) == y0);

  // An isolated node scales by (1 - alpha) per step.
  const std::vector<std::uint32_t> lone{0, 0};
  MatrixXd one(1, 1);
  one << 2.0;
  CHECK(label_propagate(lone, std::span<const std::uint32_t>(), one, 0.8, 3)(0, 0) ==
        doctest::Approx(2.0 * std::pow(0.2, 3)));

  CHECK_THROWS_AS(label_propagate(offsets, adjacency, MatrixXd::Zero(3, 1), 0.5, 1), DomainError);
}

TEST_CASE("label propagation matches the dense oracle and is linear") {
  Rng rng(21);
  for (int t = 0; t < 40; ++t) {
    const std::size_t n = 1 + rng.index(50);
    const auto g = random_graph(rng, n, rng.uniform() * 0.3, 1);
    const auto width = static_cast<Eigen::Index>(1 + rng.index(4));
    const double alpha = 0.05 + 0.9 * rng.uniform();
    const int steps = static_cast<int>(rng.index(6));
    const MatrixXd y0 = random_matrix(rng, n, width);
    const MatrixXd z0 = random_matrix(rng, n, width);
    const MatrixXd y = label_propagate(g.offsets, g.adjacency, y0, alpha, steps);
    CHECK((y - dense_lp_oracle(g, y0, alpha, steps)).cwiseAbs().maxCoeff() < 1e-12);
    const MatrixXd lhs = label_propagate(g.offsets, g.adjacency, 2.5 * y0 - 0.75 * z0, alpha, steps);
    const MatrixXd rhs = 2.5 * y - 0.75 * label_propagate(g.offsets, g.adjacency, z0, alpha, steps);
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("ranking loss examples") {
  const std::vector<double> y{1.0, 0.0};
  for (double c : {-0.3, 0.0, 0.4, 1.7}) {
    const std::vector<double> pred{c, c};
    CHECK(ranking_loss(pred, y, 1.0, 1.0) == doctest::Approx((c - 1) * (c - 1) + c * c - 0.5));
  }
  CHECK(ranking_loss(y, y, 0.0, 0.1) == 0.0);
  CHECK_THROWS_AS(ranking_loss(y, y, 1.0, 0.0), ConfigError);
  CHECK_THROWS_AS(ranking_loss(std::vector<double>{1.0}, y, 1.0, 1.0), DomainError);

  Rng rng(4);
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = 1 + rng.index(6);
    std::vector<double> p(n), target(n);
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = rng.normal();
      target[i] = static_cast<double>(rng.index(3)) / 2.0;  // ties on purpose
    }
    const double lambda = rng.uniform() * 2.0;
    const double tau = 0.05 + rng.uniform();
    std::vector<double> grad(n);
    CHECK(ranking_loss(p, target, lambda, tau, grad) == doctest::Approx(pair_oracle(p, target, lambda, tau)));
    for (std::size_t i = 0; i < n; ++i) {
      auto up = p, down = p;
      up[i] += 1e-6;
      down[i] -= 1e-6;
      const double fd = (pair_oracle(up, target, lambda, tau) - pair_oracle(down, target, lambda, tau)) / 2e-6;
      CHECK(grad[i] == doctest::Approx(fd).epsilon(1e-5));
    }
  }
}

TEST_CASE("rank term prefers order-preserving predictions") {
  Rng rng(8);
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 2 + rng.index(8);
    std::vector<double> y(n);
    for (auto& v : y) v = rng.normal();
    std::vector<double> keep(n), flip(n);
    for (std::size_t i = 0; i < n; ++i) {
      keep[i] = std::exp(y[i]);
      flip[i] = -std::exp(y[i]);
    }
    const double tau = 0.05 + rng.uniform();
    const double rank_keep = ranking_loss(keep, y, 1.0, tau) - ranking_loss(keep, y, 0.0, tau);
    const double rank_flip = ranking_loss(flip, y, 1.0, tau) - ranking_loss(flip, y, 0.0, tau);
    CHECK(rank_keep < rank_flip);
  }
}

TEST_CASE("3-node path forward trace") {
  // path 0 - 1 - 2, one feature, one edge label
  const std::vector<std::uint32_t> offsets{0, 1, 3, 4};
  const std::vector<std::uint32_t> adjacency{1, 0, 2, 1};
  const std::vector<std::uint16_t> labels{0, 0, 0, 0};
  MatrixXd x(3, 1);
  x << 1, 2, 3;
  MatrixXd channel(3, 1);
  channel << 1, 0, 0;

  MetaModelParams p;
  MessageLayer layer;
  layer.self = MatrixXd::Constant(1, 1, 0.5);
  layer.neighbor = MatrixXd::Constant(1, 1, 1.0);
  layer.edge = MatrixXd::Constant(1, 1, 0.25);
  layer.bias = VectorXd::Zero(1);
  p.layers.push_back(layer);
  p.head_out = MatrixXd::Constant(1, 1, 2.0);
  p.head_out_bias = VectorXd::Constant(1, -1.0);

  // h = [0.5 + 2 + 0.25, 1 + 2 + 0.25, 1.5 + 2 + 0.25] = [2.75, 3.25, 3.75]
  const auto plain = forward(p, GraphInput::from_parts(offsets, adjacency, labels, 1, x, MatrixXd()));
  CHECK(plain(0) == doctest::Approx(4.5));
  CHECK(plain(1) == doctest::Approx(5.5));
  CHECK(plain(2) == doctest::Approx(6.5));

  p.projection = MatrixXd::Constant(1, 1, 1.0);
  p.projection_bias = VectorXd::Zero(1);
  p.head_out.resize(1, 2);
  p.head_out << 2.0, 3.0;
  const auto with_channel = forward(p, GraphInput::from_parts(offsets, adjacency, labels, 1, x, channel));
  CHECK(with_channel(0) == doctest::Approx(7.5));
  CHECK(with_channel(1) == doctest::Approx(5.5));
  CHECK(with_channel(2) == doctest::Approx(6.5));
}

TEST_CASE("forward matches a scalar reference implementation") {
  Rng rng(31);
  for (int t = 0; t < 20; ++t) {
    auto c = small_config();
    c.mp_layers = static_cast<int>(rng.index(4));
    c.head_hidden_dim = static_cast<int>(rng.index(3)) * 2;
    c.use_task_channel = rng.index(2) == 1;
    const auto in = random_input(rng, 3 + rng.index(12), 3, 5, c.use_task_channel ? 2 : 0);
    const auto p = init_params(c, 5, 3, c.use_task_channel ? 2 : 0, rng);
    const auto fast = forward(p, in);
    const auto slow = naive_forward(p, in);
    for (std::size_t v = 0; v < slow.size(); ++v) CHECK(fast(v) == doctest::Approx(slow[v]).epsilon(1e-12));
  }
}

TEST_CASE("zero parameters predict the output bias everywhere") {
  Rng rng(2);
  const auto c = small_config();
  const auto in = random_input(rng, 12, 3, 5, 2);
  auto p = init_params(c, 5, 3, 2, rng).zeros_like();
  p.head_out_bias(0) = 0.7;
  const auto out = forward(p, in);
  for (Eigen::Index v = 0; v < out.size(); ++v) CHECK(out(v) == 0.7);
}

TEST_CASE("isolated node depends only on its own inputs") {
  Rng rng(12);
  const auto c = small_config();
  const std::vector<std::uint32_t> offsets{0, 1, 2, 2};
  const std::vector<std::uint32_t> adjacency{1, 0};
  const std::vector<std::uint16_t> labels{1, 1};
  const auto p = init_params(c, 4, 2, 2, rng);
  MatrixXd x = random_matrix(rng, 3, 4);
  MatrixXd ch = random_matrix(rng, 3, 2);
  const double before = forward(p, GraphInput::from_parts(offsets, adjacency, labels, 2, x, ch))(2);
  x.topRows(2) = random_matrix(rng, 2, 4);
  ch.topRows(2) = random_matrix(rng, 2, 2);
  CHECK(forward(p, GraphInput::from_parts(offsets, adjacency, labels, 2, x, ch))(2) == before);
}

TEST_CASE("forward is equivariant to node relabeling") {
  Rng rng(17);
  for (int t = 0; t < 10; ++t) {
    const std::size_t n = 4 + rng.index(10);
    const auto g = random_graph(rng, n, 0.4, 3);
    const MatrixXd x = random_matrix(rng, n, 5);
    const MatrixXd ch = random_matrix(rng, n, 2);
    const auto c = small_config();
    const auto p = init_params(c, 5, 3, 2, rng);
    const auto base = forward(p, GraphInput::from_parts(g.offsets, g.adjacency, g.labels, 3, x, ch));

    std::vector<std::uint32_t> perm(n);  // old -> new
    std::iota(perm.begin(), perm.end(), 0u);
    for (std::size_t i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.index(i + 1)]);
    std::vector<std::vector<std::pair<std::uint32_t, std::uint16_t>>> adj(n);
    for (std::uint32_t v = 0; v < n; ++v) {
      for (auto k = g.offsets[v]; k < g.offsets[v + 1]; ++k) adj[perm[v]].push_back({perm[g.adjacency[k]], g.labels[k]});
    }
    RandomGraph h;
    h.offsets.push_back(0);
    for (auto& list : adj) {
      std::sort(list.begin(), list.end());
      for (auto [u, l] : list) {
        h.adjacency.push_back(u);
        h.labels.push_back(l);
      }
      h.offsets.push_back(static_cast<std::uint32_t>(h.adjacency.size()));
    }
    MatrixXd px(n, 5), pch(n, 2);
    for (std::size_t v = 0; v < n; ++v) {
      px.row(perm[v]) = x.row(v);
      pch.row(perm[v]) = ch.row(v);
    }
    const auto moved = forward(p, GraphInput::from_parts(h.offsets, h.adjacency, h.labels, 3, px, pch));
    for (std::size_t v = 0; v < n; ++v) CHECK(moved(perm[v]) == doctest::Approx(base(v)).epsilon(1e-12));
  }
}

TEST_CASE("analytic gradients match central finite differences") {
  Rng rng(99);
  for (int t = 0; t < 8; ++t) {
    auto c = small_config();
    c.mp_layers = 1 + t % 3;
    c.head_hidden_dim = t % 2 == 0 ? 3 : 0;
    c.use_task_channel = t % 4 != 3;
    c.rank_weight = 0.5 + rng.uniform();
    c.rank_temperature = 0.5;
    const Eigen::Index channel = c.use_task_channel ? 2 : 0;
    const std::size_t n = 10 + rng.index(8);
    const auto in = random_input(rng, n, 3, 4, channel);
    const auto p = init_params(c, 4, 3, static_cast<std::size_t>(channel), rng);
    std::vector<std::uint32_t> rows;
    for (std::uint32_t v = 0; v < n; ++v) {
      if (rng.uniform() < 0.4) rows.push_back(v);
    }
    if (rows.size() < 2) rows = {0, 1};
    std::reverse(rows.begin(), rows.end());
    std::vector<double> y(rows.size());
    for (auto& v : y) v = rng.uniform();

    const auto lg = loss_and_gradient(p, c, in, rows, y);
    CHECK(lg.loss == doctest::Approx(loss_at(p, c, in, rows, y)));
    const auto names = p.tensor_names();
    const auto analytic = lg.gradient.tensors();
    REQUIRE(analytic.size() == names.size());
    MetaModelParams probe = p;
    auto w = probe.tensors();
    for (std::size_t k = 0; k < w.size(); ++k) {
      double diff = 0.0, scale = 0.0;
      for (std::size_t i = 0; i < w[k].size(); ++i) {
        const double keep = w[k][i];
        w[k][i] = keep + 1e-5;
        const double up = loss_at(probe, c, in, rows, y);
        w[k][i] = keep - 1e-5;
        const double down = loss_at(probe, c, in, rows, y);
        w[k][i] = keep;
        const double fd = (up - down) / 2e-5;
        diff += (fd - analytic[k][i]) * (fd - analytic[k][i]);
        scale += fd * fd + analytic[k][i] * analytic[k][i];
      }
      INFO("tensor " << names[k]);
      CHECK(std::sqrt(diff) <= 1e-4 * std::max(std::sqrt(scale), 1e-8));
    }
  }
}

TEST_CASE("training separates a single ordered pair") {
  const std::vector<std::uint32_t> offsets{0, 1, 2};
  const std::vector<std::uint32_t> adjacency{1, 0};
  const std::vector<std::uint16_t> labels{0, 0};
  const std::vector<std::uint32_t> rows{0, 1};
  const std::vector<double> y{1.0, 0.0};
  MetaModelConfig c;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed);
    MatrixXd x = random_matrix(rng, 2, 6);
    MatrixXd ch(2, 1);
    ch << 1.0, 0.0;
    const auto in = GraphInput::from_parts(offsets, adjacency, labels, 1, x, ch);
    const auto init = init_params(c, 6, 1, 1, rng);
    const auto out = train(init, c, in, rows, y, rng);
    const auto pred = forward(out.params, in);
    INFO("seed " << seed);
    CHECK(pred(0) > pred(1));
    CHECK(out.loss <= loss_at(init, c, in, rows, y));
  }
}

TEST_CASE("linear head without rank term converges to least squares") {
  Rng rng(5);
  const std::size_t n = 10;
  MatrixXd x = random_matrix(rng, n, 3);
  VectorXd y(n);
  for (std::size_t i = 0; i < n; ++i) y(i) = 0.3 + 0.5 * x(i, 0) - 0.2 * x(i, 2) + 0.1 * rng.normal();
  std::vector<std::uint32_t> offsets(n + 1, 0);
  const auto in = GraphInput::from_parts(offsets, {}, {}, 1, x, MatrixXd());

  MatrixXd design(n, 4);
  design << x, VectorXd::Ones(n);
  const VectorXd beta = design.colPivHouseholderQr().solve(y);
  const VectorXd fitted = design * beta;

  MetaModelConfig c;
  c.mp_layers = 0;
  c.head_hidden_dim = 0;
  c.use_task_channel = false;
  c.rank_weight = 0.0;
  c.optimizer = OptimizerKind::kGradientDescent;
  c.learning_rate = 0.02;
  c.max_train_epochs = 20000;
  c.patience = 20000;
  std::vector<std::uint32_t> rows(n);
  std::iota(rows.begin(), rows.end(), 0u);
  std::vector<double> targets(y.data(), y.data() + n);
  const auto init = init_params(c, 3, 1, 0, rng);
  const auto out = train(init, c, in, rows, targets, rng);
  const auto pred = forward(out.params, in);
  CHECK((pred - fitted).cwiseAbs().maxCoeff() < 1e-3);
  CHECK(out.loss == doctest::Approx((y - fitted).squaredNorm()).epsilon(1e-6));
}

TEST_CASE("zero epochs return the initial parameters") {
  Rng rng(6);
  auto c = small_config();
  c.max_train_epochs = 0;
  const auto in = random_input(rng, 8, 3, 4, 2);
  const auto init = init_params(c, 4, 3, 2, rng);
  const std::vector<std::uint32_t> rows{1, 4};
  const std::vector<double> y{0.2, 0.9};
  const auto out = train(init, c, in, rows, y, rng);
  CHECK(out.epochs == 0);
  const auto a = init.tensors();
  const auto b = out.params.tensors();
  for (std::size_t k = 0; k < a.size(); ++k) CHECK(std::equal(a[k].begin(), a[k].end(), b[k].begin()));
  CHECK_THROWS_AS(train(init, c, in, std::vector<std::uint32_t>{1}, std::vector<double>{0.2}, rng), DomainError);
}

TEST_CASE("training is deterministic given the seed") {
  const auto run = [] {
    Rng rng(44);
    const auto c = small_config();
    const auto in = random_input(rng, 15, 3, 4, 2);
    const auto init = init_params(c, 4, 3, 2, rng);
    const std::vector<std::uint32_t> rows{0, 3, 7, 9};
    const std::vector<double> y{0.0, 1.0, 0.5, 0.25};
    return forward(train(init, c, in, rows, y, rng).params, in);
  };
  CHECK(run() == run());
}

TEST_CASE("divergent training restarts once and then fails") {
  Rng rng(9);
  auto c = small_config();
  c.optimizer = OptimizerKind::kGradientDescent;
  c.learning_rate = 1e150;
  c.patience = 1000;
  c.max_train_epochs = 50;
  const auto in = random_input(rng, 10, 3, 4, 2);
  const auto init = init_params(c, 4, 3, 2, rng);
  const std::vector<std::uint32_t> rows{0, 1, 2};
  const std::vector<double> y{0.0, 1.0, 0.5};
  CHECK_THROWS_AS(train(init, c, in, rows, y, rng), NumericError);

  MetaModelParams bad = init;
  bad.head_out(0, 0) = std::numeric_limits<double>::infinity();
  try {
    forward(bad, in);
    FAIL("expected a numeric error");
  } catch (const NumericError& e) {
    CHECK(e.layer() == c.mp_layers + 1);
  }
}

TEST_CASE("min-max normalization") {
  CHECK(min_max_normalize(std::vector<double>{2, 4, 3}) == std::vector<double>{0, 1, 0.5});
  CHECK(min_max_normalize(std::vector<double>{5, 5}) == std::vector<double>{0, 0});
  CHECK(min_max_normalize(std::vector<double>{}).empty());
}

TEST_CASE("checkpoint round trip") {
  Rng rng(10);
  const auto c = small_config();
  const auto p = init_params(c, 4, 3, 2, rng);
  const auto path = (std::filesystem::temp_directory_path() / "falcon_ckpt_test.json").string();
  save_checkpoint(path, p, c);
  MetaModelConfig back_config;
  const auto back = load_checkpoint(path, &back_config);
  std::filesystem::remove(path);
  CHECK(back_config.hidden_dim == c.hidden_dim);
  const auto a = p.tensors();
  const auto b = back.tensors();
  REQUIRE(a.size() == b.size());
  for (std::size_t k = 0; k < a.size(); ++k) CHECK(std::equal(a[k].begin(), a[k].end(), b[k].begin(), b[k].end()));
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/ckpt.json"), ConfigError);
}

TEST_CASE("from_subgraph encodes designs and edge label means") {
  const auto& s = node_level_space();
  const auto g = DesignGraph::build(s);
  const DesignId v = 77;
  std::vector<DesignId> nbrs;
  for (const auto& nb : g.neighbors(v)) nbrs.push_back(nb.id);
  const auto sub = build_subgraph(g, std::span(&v, 1), nbrs);
  const auto in = GraphInput::from_subgraph(s, sub, MatrixXd::Zero(sub.size(), 1));
  CHECK(in.features.cols() == static_cast<Eigen::Index>(s.encoding_width()));
  const auto center = *sub.index_of(v);
  const auto expect = s.encode(s.design(v));
  for (std::size_t j = 0; j < expect.size(); ++j) CHECK(in.features(center, j) == expect[j]);
  CHECK(in.edge_mean.row(center).sum() == doctest::Approx(1.0));
  for (const auto& nb : g.neighbors(v)) {
    CHECK(in.edge_mean(center, nb.label) > 0.0);
  }
}
