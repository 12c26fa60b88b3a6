#include "falcon/meta_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "falcon/errors.hpp"

namespace falcon {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

MatrixXd glorot(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  MatrixXd m(rows, cols);
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = (2.0 * rng.uniform() - 1.0) * limit;
  }
  return m;
}

MatrixXd relu(const MatrixXd& x) { return x.cwiseMax(0.0); }

MatrixXd relu_mask(const MatrixXd& pre) { return (pre.array() > 0.0).cast<double>().matrix(); }

MatrixXd gather(const MatrixXd& src, const std::vector<std::int32_t>& pos, std::span<const std::uint32_t> nodes) {
  MatrixXd out(static_cast<Eigen::Index>(nodes.size()), src.cols());
  for (std::size_t r = 0; r < nodes.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = src.row(pos[nodes[r]]);
  return out;
}

MatrixXd gather_rows(const MatrixXd& src, std::span<const std::uint32_t> nodes) {
  MatrixXd out(static_cast<Eigen::Index>(nodes.size()), src.cols());
  for (std::size_t r = 0; r < nodes.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = src.row(nodes[r]);
  return out;
}

// Activations of one pass. Layer l reads rows[l - 1] and writes rows[l];
// rows[L] are the nodes whose predictions are requested.
struct Pass {
  std::vector<std::vector<std::uint32_t>> rows;
  std::vector<std::vector<std::int32_t>> pos;
  std::vector<MatrixXd> hidden;
  std::vector<MatrixXd> self_in;
  std::vector<MatrixXd> agg;
  std::vector<MatrixXd> edge_in;
  std::vector<MatrixXd> pre;
  MatrixXd channel_in;
  MatrixXd concat;
  MatrixXd head_pre;
  MatrixXd head_act;
  VectorXd out;
};

std::vector<std::int32_t> positions(std::size_t n, const std::vector<std::uint32_t>& rows) {
  std::vector<std::int32_t> pos(n, -1);
  for (std::size_t r = 0; r < rows.size(); ++r) pos[rows[r]] = static_cast<std::int32_t>(r);
  return pos;
}

std::vector<std::uint32_t> expand(const GraphInput& in, const std::vector<std::uint32_t>& rows) {
  std::vector<char> mark(in.node_count(), 0);
  for (auto v : rows) mark[v] = 1;
  for (auto v : rows) {
    for (auto k = in.offsets[v]; k < in.offsets[v + 1]; ++k) mark[in.adjacency[k]] = 1;
  }
  std::vector<std::uint32_t> out;
  for (std::uint32_t v = 0; v < mark.size(); ++v) {
    if (mark[v]) out.push_back(v);
  }
  return out;
}

void check_finite(const MatrixXd& m, int layer) {
  if (!m.allFinite()) {
    throw NumericError("non-finite activation in layer " + std::to_string(layer), layer);
  }
}

void check_shapes(const MetaModelParams& p, const GraphInput& in) {
  const auto n = static_cast<Eigen::Index>(in.node_count());
  if (in.features.rows() != n || in.edge_mean.rows() != n) {
    throw DomainError("graph input: feature rows do not match the node count");
  }
  Eigen::Index width = in.features.cols();
  for (const auto& layer : p.layers) {
    if (layer.self.cols() != width || layer.edge.cols() != in.edge_mean.cols()) {
      throw DomainError("graph input: feature widths do not match the model");
    }
    width = layer.self.rows();
  }
  if (p.projection.size() > 0) {
    if (in.channel.rows() != n || in.channel.cols() != p.projection.cols()) {
      throw DomainError("graph input: channel width does not match the model");
    }
    width += p.projection.rows();
  }
  const Eigen::Index head_in = p.head_hidden.size() > 0 ? p.head_hidden.cols() : p.head_out.cols();
  if (head_in != width) throw DomainError("graph input: head width does not match the model");
}

Pass run_forward(const MetaModelParams& p, const GraphInput& in, std::vector<std::uint32_t> targets) {
  check_shapes(p, in);
  const std::size_t n = in.node_count();
  const std::size_t depth = p.layers.size();
  Pass pass;
  pass.rows.resize(depth + 1);
  pass.rows[depth] = std::move(targets);
  for (std::size_t l = depth; l > 0; --l) pass.rows[l - 1] = expand(in, pass.rows[l]);
  pass.pos.resize(depth + 1);
  for (std::size_t l = 0; l <= depth; ++l) pass.pos[l] = positions(n, pass.rows[l]);

  pass.hidden.resize(depth + 1);
  pass.self_in.resize(depth + 1);
  pass.agg.resize(depth + 1);
  pass.edge_in.resize(depth + 1);
  pass.pre.resize(depth + 1);
  pass.hidden[0] = gather_rows(in.features, pass.rows[0]);

  for (std::size_t l = 1; l <= depth; ++l) {
    const auto& layer = p.layers[l - 1];
    const auto& rows = pass.rows[l];
    const auto& prev = pass.hidden[l - 1];
    const auto& prev_pos = pass.pos[l - 1];
    pass.self_in[l] = gather(prev, prev_pos, rows);
    MatrixXd agg = MatrixXd::Zero(static_cast<Eigen::Index>(rows.size()), prev.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto v = rows[r];
      const auto begin = in.offsets[v], end = in.offsets[v + 1];
      if (begin == end) continue;
      for (auto k = begin; k < end; ++k) agg.row(static_cast<Eigen::Index>(r)) += prev.row(prev_pos[in.adjacency[k]]);
      agg.row(static_cast<Eigen::Index>(r)) /= static_cast<double>(end - begin);
    }
    pass.agg[l] = std::move(agg);
    pass.edge_in[l] = gather_rows(in.edge_mean, rows);
    MatrixXd pre = pass.self_in[l] * layer.self.transpose() + pass.agg[l] * layer.neighbor.transpose() +
                   pass.edge_in[l] * layer.edge.transpose();
    pre.rowwise() += layer.bias.transpose();
    check_finite(pre, static_cast<int>(l));
    pass.hidden[l] = relu(pre);
    pass.pre[l] = std::move(pre);
  }

  const auto& top = pass.rows[depth];
  const auto m = static_cast<Eigen::Index>(top.size());
  const MatrixXd& embedding = pass.hidden[depth];
  if (p.projection.size() > 0) {
    pass.channel_in = gather_rows(in.channel, top);
    MatrixXd z = pass.channel_in * p.projection.transpose();
    z.rowwise() += p.projection_bias.transpose();
    pass.concat.resize(m, embedding.cols() + z.cols());
    pass.concat << embedding, z;
  } else {
    pass.concat = embedding;
  }
  const int head_layer = static_cast<int>(depth) + 1;
  if (p.head_hidden.size() > 0) {
    pass.head_pre = pass.concat * p.head_hidden.transpose();
    pass.head_pre.rowwise() += p.head_hidden_bias.transpose();
    pass.head_act = relu(pass.head_pre);
    pass.out = pass.head_act * p.head_out.transpose();
  } else {
    pass.out = pass.concat * p.head_out.transpose();
  }
  pass.out.array() += p.head_out_bias(0);
  check_finite(pass.out, head_layer);
  return pass;
}

MetaModelParams run_backward(const MetaModelParams& p, const GraphInput& in, const Pass& pass, const VectorXd& dout) {
  MetaModelParams g = p.zeros_like();
  const std::size_t depth = p.layers.size();
  MatrixXd dconcat;
  g.head_out_bias(0) = dout.sum();
  if (p.head_hidden.size() > 0) {
    g.head_out = dout.transpose() * pass.head_act;
    MatrixXd dact = dout * p.head_out;
    MatrixXd dpre = dact.cwiseProduct(relu_mask(pass.head_pre));
    g.head_hidden = dpre.transpose() * pass.concat;
    g.head_hidden_bias = dpre.colwise().sum().transpose();
    dconcat = dpre * p.head_hidden;
  } else {
    g.head_out = dout.transpose() * pass.concat;
    dconcat = dout * p.head_out;
  }
  const Eigen::Index emb = pass.hidden[depth].cols();
  if (p.projection.size() > 0) {
    MatrixXd dz = dconcat.rightCols(dconcat.cols() - emb);
    g.projection = dz.transpose() * pass.channel_in;
    g.projection_bias = dz.colwise().sum().transpose();
  }
  MatrixXd dh = dconcat.leftCols(emb);
  for (std::size_t l = depth; l > 0; --l) {
    const auto& layer = p.layers[l - 1];
    auto& gl = g.layers[l - 1];
    const auto& rows = pass.rows[l];
    MatrixXd dpre = dh.cwiseProduct(relu_mask(pass.pre[l]));
    gl.self = dpre.transpose() * pass.self_in[l];
    gl.neighbor = dpre.transpose() * pass.agg[l];
    gl.edge = dpre.transpose() * pass.edge_in[l];
    gl.bias = dpre.colwise().sum().transpose();
    if (l == 1) break;
    const auto& prev_pos = pass.pos[l - 1];
    MatrixXd dprev = MatrixXd::Zero(pass.hidden[l - 1].rows(), pass.hidden[l - 1].cols());
    const MatrixXd dself = dpre * layer.self;
    const MatrixXd dagg = dpre * layer.neighbor;
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto v = rows[r];
      const auto ri = static_cast<Eigen::Index>(r);
      dprev.row(prev_pos[v]) += dself.row(ri);
      const auto begin = in.offsets[v], end = in.offsets[v + 1];
      if (begin == end) continue;
      const double inv = 1.0 / static_cast<double>(end - begin);
      for (auto k = begin; k < end; ++k) dprev.row(prev_pos[in.adjacency[k]]) += inv * dagg.row(ri);
    }
    dh = std::move(dprev);
  }
  return g;
}

template <class Params, class Span>
std::vector<Span> tensor_views(Params& p) {
  std::vector<Span> out;
  auto add = [&](auto& t) {
    if (t.size() > 0) out.emplace_back(t.data(), static_cast<std::size_t>(t.size()));
  };
  for (auto& layer : p.layers) {
    add(layer.self);
    add(layer.neighbor);
    add(layer.edge);
    add(layer.bias);
  }
  add(p.projection);
  add(p.projection_bias);
  add(p.head_hidden);
  add(p.head_hidden_bias);
  add(p.head_out);
  add(p.head_out_bias);
  return out;
}

nlohmann::json matrix_json(const MatrixXd& m) {
  std::vector<double> values(m.data(), m.data() + m.size());
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"values", values}};
}

MatrixXd matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto values = j.at("values").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(values.size()) != rows * cols) throw DataError("checkpoint: tensor size mismatch");
  return Eigen::Map<const MatrixXd>(values.data(), rows, cols);
}

}  // namespace

void MetaModelConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& rule) {
    throw ConfigError("meta-model config: " + field + " " + rule);
  };
  if (hidden_dim < 1) fail("hidden_dim", "must be positive");
  if (mp_layers < 0) fail("mp_layers", "must be non-negative");
  if (lp_layers < 0) fail("lp_layers", "must be non-negative");
  if (head_hidden_dim < 0) fail("head_hidden_dim", "must be non-negative");
  if (!(alpha > 0.0 && alpha < 1.0)) fail("alpha", "must lie in (0, 1)");
  if (!(rank_weight >= 0.0)) fail("lambda", "must be non-negative");
  if (!(rank_temperature > 0.0)) fail("tau", "must be positive");
  if (instance_sample_size < 1) fail("instance_sample_size", "must be at least 1");
  if (max_train_epochs < 0) fail("max_train_epochs", "must be non-negative");
  if (patience < 1) fail("patience", "must be at least 1");
  if (!(learning_rate > 0.0)) fail("learning_rate", "must be positive");
}

nlohmann::json MetaModelConfig::to_json() const {
  return {{"hidden_dim", hidden_dim},
          {"mp_layers", mp_layers},
          {"lp_layers", lp_layers},
          {"head_hidden_dim", head_hidden_dim},
          {"alpha", alpha},
          {"lambda", rank_weight},
          {"tau", rank_temperature},
          {"instance_sample_size", instance_sample_size},
          {"use_task_channel", use_task_channel},
          {"max_train_epochs", max_train_epochs},
          {"patience", patience},
          {"learning_rate", learning_rate},
          {"optimizer", optimizer == OptimizerKind::kAdam ? "adam" : "gd"}};
}

MetaModelConfig MetaModelConfig::from_json(const nlohmann::json& j) {
  MetaModelConfig c;
  if (!j.is_object()) throw ConfigError("meta-model config: expected an object");
  try {
    c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
    c.mp_layers = j.value("mp_layers", c.mp_layers);
    c.lp_layers = j.value("lp_layers", c.lp_layers);
    c.head_hidden_dim = j.value("head_hidden_dim", c.head_hidden_dim);
    c.alpha = j.value("alpha", c.alpha);
    c.rank_weight = j.value("lambda", c.rank_weight);
    c.rank_temperature = j.value("tau", c.rank_temperature);
    c.instance_sample_size = j.value("instance_sample_size", c.instance_sample_size);
    c.use_task_channel = j.value("use_task_channel", c.use_task_channel);
    c.max_train_epochs = j.value("max_train_epochs", c.max_train_epochs);
    c.patience = j.value("patience", c.patience);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    const std::string opt = j.value("optimizer", std::string("adam"));
    if (opt == "adam") {
      c.optimizer = OptimizerKind::kAdam;
    } else if (opt == "gd") {
      c.optimizer = OptimizerKind::kGradientDescent;
    } else {
      throw ConfigError("meta-model config: optimizer must be \"adam\" or \"gd\"");
    }
  } catch (const nlohmann::json::type_error& e) {
    throw ConfigError(std::string("meta-model config: ") + e.what());
  }
  c.validate();
  return c;
}

MetaModelParams MetaModelParams::zeros_like() const {
  MetaModelParams z;
  for (const auto& l : layers) {
    z.layers.push_back({MatrixXd::Zero(l.self.rows(), l.self.cols()), MatrixXd::Zero(l.neighbor.rows(), l.neighbor.cols()),
                        MatrixXd::Zero(l.edge.rows(), l.edge.cols()), VectorXd::Zero(l.bias.size())});
  }
  z.projection = MatrixXd::Zero(projection.rows(), projection.cols());
  z.projection_bias = VectorXd::Zero(projection_bias.size());
  z.head_hidden = MatrixXd::Zero(head_hidden.rows(), head_hidden.cols());
  z.head_hidden_bias = VectorXd::Zero(head_hidden_bias.size());
  z.head_out = MatrixXd::Zero(head_out.rows(), head_out.cols());
  z.head_out_bias = VectorXd::Zero(head_out_bias.size());
  return z;
}

std::vector<std::string> MetaModelParams::tensor_names() const {
  std::vector<std::string> names;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto p = "mp" + std::to_string(l + 1) + ".";
    for (const char* t : {"self", "neighbor", "edge", "bias"}) names.push_back(p + t);
  }
  if (projection.size() > 0) {
    names.push_back("projection");
    names.push_back("projection_bias");
  }
  if (head_hidden.size() > 0) {
    names.push_back("head_hidden");
    names.push_back("head_hidden_bias");
  }
  names.push_back("head_out");
  names.push_back("head_out_bias");
  return names;
}

std::vector<std::span<double>> MetaModelParams::tensors() {
  return tensor_views<MetaModelParams, std::span<double>>(*this);
}

std::vector<std::span<const double>> MetaModelParams::tensors() const {
  return tensor_views<const MetaModelParams, std::span<const double>>(*this);
}

std::size_t MetaModelParams::parameter_count() const {
  std::size_t n = 0;
  for (auto t : tensors()) n += t.size();
  return n;
}

bool MetaModelParams::all_finite() const {
  for (auto t : tensors()) {
    for (double x : t) {
      if (!std::isfinite(x)) return false;
    }
  }
  return true;
}

MetaModelParams init_params(const MetaModelConfig& config, std::size_t feature_width, std::size_t label_count,
                            std::size_t channel_width, Rng& rng) {
  config.validate();
  MetaModelParams p;
  const auto h = static_cast<Eigen::Index>(config.hidden_dim);
  auto in = static_cast<Eigen::Index>(feature_width);
  const auto labels = static_cast<Eigen::Index>(label_count);
  for (int l = 0; l < config.mp_layers; ++l) {
    MessageLayer layer;
    layer.self = glorot(h, in, rng);
    layer.neighbor = glorot(h, in, rng);
    layer.edge = glorot(h, labels, rng);
    layer.bias = VectorXd::Zero(h);
    p.layers.push_back(std::move(layer));
    in = h;
  }
  if (config.use_task_channel) {
    if (channel_width == 0) throw ConfigError("meta-model: task channel enabled with zero width");
    p.projection = glorot(h, static_cast<Eigen::Index>(channel_width), rng);
    p.projection_bias = VectorXd::Zero(h);
    in += h;
  }
  if (config.head_hidden_dim > 0) {
    const auto hh = static_cast<Eigen::Index>(config.head_hidden_dim);
    p.head_hidden = glorot(hh, in, rng);
    p.head_hidden_bias = VectorXd::Zero(hh);
    p.head_out = glorot(1, hh, rng);
  } else {
    p.head_out = glorot(1, in, rng);
  }
  p.head_out_bias = VectorXd::Zero(1);
  return p;
}

GraphInput GraphInput::from_parts(std::vector<std::uint32_t> offsets, std::vector<std::uint32_t> adjacency,
                                  std::span<const std::uint16_t> labels, std::size_t label_count,
                                  Eigen::MatrixXd features, Eigen::MatrixXd channel) {
  GraphInput in;
  if (offsets.empty() || offsets.back() != adjacency.size() || labels.size() != adjacency.size()) {
    throw DomainError("graph input: inconsistent adjacency arrays");
  }
  in.offsets = std::move(offsets);
  in.adjacency = std::move(adjacency);
  const auto n = static_cast<Eigen::Index>(in.node_count());
  if (features.rows() != n) throw DomainError("graph input: feature rows do not match the node count");
  if (channel.size() > 0 && channel.rows() != n) throw DomainError("graph input: channel rows do not match");
  in.edge_mean = MatrixXd::Zero(n, static_cast<Eigen::Index>(label_count));
  for (Eigen::Index v = 0; v < n; ++v) {
    const auto begin = in.offsets[v], end = in.offsets[v + 1];
    for (auto k = begin; k < end; ++k) {
      if (labels[k] >= label_count) throw DomainError("graph input: edge label out of range");
      if (in.adjacency[k] >= static_cast<std::uint32_t>(n)) throw DomainError("graph input: neighbor out of range");
      in.edge_mean(v, labels[k]) += 1.0;
    }
    if (end > begin) in.edge_mean.row(v) /= static_cast<double>(end - begin);
  }
  in.features = std::move(features);
  in.channel = std::move(channel);
  return in;
}

GraphInput GraphInput::from_subgraph(const DesignSpace& space, const DesignSubgraph& sub, Eigen::MatrixXd channel) {
  const auto n = static_cast<Eigen::Index>(sub.size());
  const auto width = static_cast<Eigen::Index>(space.encoding_width());
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rows(n, width);
  for (Eigen::Index i = 0; i < n; ++i) {
    space.encode_into(sub.nodes[i], std::span<double>(rows.row(i).data(), static_cast<std::size_t>(width)));
  }
  return from_parts(sub.offsets, sub.adjacency, sub.labels, space.label_count(), MatrixXd(rows), std::move(channel));
}

std::vector<double> encode_edge(const DesignSpace& space, DesignId u, DesignId v) {
  for (const auto& nb : space.neighbors(u)) {
    if (nb.id == v) {
      std::vector<double> out(space.label_count(), 0.0);
      out[nb.label] = 1.0;
      return out;
    }
  }
  throw DomainError("encode_edge: designs " + std::to_string(u) + " and " + std::to_string(v) +
                    " are not at distance 1");
}

void InstanceMatrix::add_row(DesignId anchor, std::span<const std::uint8_t> row) {
  if (anchors.empty() && bits.empty()) instance_count = row.size();
  if (row.size() != instance_count) throw DataError("instance matrix: row length differs from earlier rows");
  anchors.push_back(anchor);
  for (auto b : row) bits.push_back(b ? 1 : 0);
}

std::vector<double> instance_entropy(const InstanceMatrix& m) {
  if (m.rows() == 0) throw DomainError("instance entropy needs at least one anchor");
  std::vector<double> h(m.instance_count, 0.0);
  for (std::size_t j = 0; j < m.instance_count; ++j) {
    std::size_t ones = 0;
    for (std::size_t r = 0; r < m.rows(); ++r) ones += m.at(r, j);
    const double p = static_cast<double>(ones) / static_cast<double>(m.rows());
    if (p > 0.0 && p < 1.0) h[j] = -p * std::log(p) - (1.0 - p) * std::log(1.0 - p);
  }
  return h;
}

std::vector<std::size_t> select_instances(const InstanceMatrix& m, std::size_t count, Rng& rng) {
  const auto h = instance_entropy(m);
  const std::size_t n = h.size();
  std::vector<std::size_t> chosen;
  if (count >= n) {
    chosen.resize(n);
    std::iota(chosen.begin(), chosen.end(), 0);
    return chosen;
  }
  const double top = *std::max_element(h.begin(), h.end());
  std::vector<double> w(n);
  for (std::size_t j = 0; j < n; ++j) w[j] = std::exp(h[j] - top);
  for (std::size_t k = 0; k < count; ++k) {
    double total = 0.0;
    for (double x : w) total += x;
    double u = rng.uniform() * total;
    std::size_t pick = n;
    for (std::size_t j = 0; j < n; ++j) {
      if (w[j] <= 0.0) continue;
      pick = j;
      if (u < w[j]) break;
      u -= w[j];
    }
    chosen.push_back(pick);
    w[pick] = 0.0;
  }
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

Eigen::MatrixXd label_propagate(std::span<const std::uint32_t> offsets, std::span<const std::uint32_t> adjacency,
                                const Eigen::MatrixXd& y0, double alpha, int steps) {
  if (offsets.empty()) throw DomainError("label_propagate: empty offsets");
  const std::size_t n = offsets.size() - 1;
  if (static_cast<std::size_t>(y0.rows()) != n) {
    throw DomainError("label_propagate: " + std::to_string(y0.rows()) + " rows for " + std::to_string(n) + " nodes");
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw DomainError("label_propagate: alpha must lie in [0, 1]");
  if (steps < 0) throw DomainError("label_propagate: negative step count");
  std::vector<double> inv_sqrt(n, 0.0);
  for (std::size_t v = 0; v < n; ++v) {
    const auto deg = offsets[v + 1] - offsets[v];
    if (deg > 0) inv_sqrt[v] = 1.0 / std::sqrt(static_cast<double>(deg));
  }
  MatrixXd y = y0;
  MatrixXd next(y.rows(), y.cols());
  for (int s = 0; s < steps; ++s) {
    for (std::size_t v = 0; v < n; ++v) {
      auto row = next.row(static_cast<Eigen::Index>(v));
      row.setZero();
      for (auto k = offsets[v]; k < offsets[v + 1]; ++k) {
        const auto u = adjacency[k];
        row += (inv_sqrt[v] * inv_sqrt[u]) * y.row(u);
      }
      row = alpha * row + (1.0 - alpha) * y.row(static_cast<Eigen::Index>(v));
    }
    y.swap(next);
  }
  return y;
}

Eigen::MatrixXd label_propagate(const DesignSubgraph& subgraph, const Eigen::MatrixXd& y0, double alpha, int steps) {
  return label_propagate(subgraph.offsets, subgraph.adjacency, y0, alpha, steps);
}

Eigen::VectorXd forward(const MetaModelParams& params, const GraphInput& input) {
  std::vector<std::uint32_t> all(input.node_count());
  std::iota(all.begin(), all.end(), 0u);
  return run_forward(params, input, std::move(all)).out;
}

double ranking_loss(std::span<const double> pred, std::span<const double> target, double lambda, double tau,
                    std::span<double> grad) {
  if (!(tau > 0.0)) throw ConfigError("ranking loss: tau must be positive");
  if (pred.size() != target.size() || pred.empty()) {
    throw DomainError("ranking loss: predictions and targets must be non-empty and equally long");
  }
  const bool want_grad = !grad.empty();
  if (want_grad && grad.size() != pred.size()) throw DomainError("ranking loss: gradient has the wrong size");
  if (want_grad) std::fill(grad.begin(), grad.end(), 0.0);
  const std::size_t n = pred.size();
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = pred[i] - target[i];
    loss += r * r;
    if (want_grad) grad[i] += 2.0 * r;
  }
  if (lambda == 0.0) return loss;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (target[i] == target[j]) continue;
      const double sign = target[i] > target[j] ? -1.0 : 1.0;
      const double s = sigmoid((pred[i] - pred[j]) / tau);
      loss += lambda * sign * s;
      if (want_grad) {
        const double d = lambda * sign * s * (1.0 - s) / tau;
        grad[i] += d;
        grad[j] -= d;
      }
    }
  }
  return loss;
}

LossGradient loss_and_gradient(const MetaModelParams& params, const MetaModelConfig& config, const GraphInput& input,
                               std::span<const std::uint32_t> rows, std::span<const double> targets) {
  if (rows.size() != targets.size() || rows.empty()) {
    throw DomainError("loss_and_gradient: rows and targets must be non-empty and equally long");
  }
  std::vector<std::uint32_t> order(rows.begin(), rows.end());
  std::sort(order.begin(), order.end());
  if (std::adjacent_find(order.begin(), order.end()) != order.end()) {
    throw DomainError("loss_and_gradient: duplicate target row");
  }
  const Pass pass = run_forward(params, input, order);
  // Predictions come back in sorted-row order; map targets onto it.
  std::vector<double> sorted_targets(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto at = std::lower_bound(order.begin(), order.end(), rows[i]) - order.begin();
    sorted_targets[static_cast<std::size_t>(at)] = targets[i];
  }
  std::vector<double> pred(pass.out.data(), pass.out.data() + pass.out.size());
  std::vector<double> dpred(pred.size());
  LossGradient out;
  out.loss = ranking_loss(pred, sorted_targets, config.rank_weight, config.rank_temperature, dpred);
  out.gradient = run_backward(params, input, pass, Eigen::Map<const VectorXd>(dpred.data(), static_cast<Eigen::Index>(dpred.size())));
  return out;
}

TrainOutcome train(const MetaModelParams& init, const MetaModelConfig& config, const GraphInput& input,
                   std::span<const std::uint32_t> rows, std::span<const double> targets, Rng& rng) {
  config.validate();
  if (rows.size() < 2) throw DomainError("train: at least two explored designs are required");
  TrainOutcome outcome;
  outcome.params = init;
  if (config.max_train_epochs == 0) {
    outcome.loss = loss_and_gradient(init, config, input, rows, targets).loss;
    return outcome;
  }

  auto run = [&](MetaModelParams start, TrainOutcome& result) -> bool {
    MetaModelParams current = std::move(start);
    MetaModelParams m1 = current.zeros_like();
    MetaModelParams m2 = current.zeros_like();
    constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
    double best = std::numeric_limits<double>::infinity();
    double reference = best;
    int stale = 0;
    result.params = current;
    for (int epoch = 1; epoch <= config.max_train_epochs; ++epoch) {
      LossGradient lg;
      try {
        lg = loss_and_gradient(current, config, input, rows, targets);
      } catch (const NumericError&) {
        return false;
      }
      if (!std::isfinite(lg.loss)) return false;
      result.epochs = epoch;
      if (lg.loss < best) {
        best = lg.loss;
        result.params = current;
        result.loss = lg.loss;
      }
      if (!std::isfinite(reference) || lg.loss < reference - 1e-4 * std::abs(reference)) {
        reference = lg.loss;
        stale = 0;
      } else if (++stale >= config.patience) {
        break;
      }
      auto w = current.tensors();
      auto g = lg.gradient.tensors();
      if (config.optimizer == OptimizerKind::kGradientDescent) {
        for (std::size_t t = 0; t < w.size(); ++t) {
          for (std::size_t i = 0; i < w[t].size(); ++i) w[t][i] -= config.learning_rate * g[t][i];
        }
      } else {
        auto a = m1.tensors();
        auto b = m2.tensors();
        const double c1 = 1.0 - std::pow(kBeta1, epoch);
        const double c2 = 1.0 - std::pow(kBeta2, epoch);
        for (std::size_t t = 0; t < w.size(); ++t) {
          for (std::size_t i = 0; i < w[t].size(); ++i) {
            a[t][i] = kBeta1 * a[t][i] + (1.0 - kBeta1) * g[t][i];
            b[t][i] = kBeta2 * b[t][i] + (1.0 - kBeta2) * g[t][i] * g[t][i];
            w[t][i] -= config.learning_rate * (a[t][i] / c1) / (std::sqrt(b[t][i] / c2) + kEps);
          }
        }
      }
      if (!current.all_finite()) return false;
    }
    return true;
  };

  if (run(init, outcome)) return outcome;
  const auto feature_width = static_cast<std::size_t>(input.features.cols());
  const auto label_count = static_cast<std::size_t>(input.edge_mean.cols());
  const auto channel_width = static_cast<std::size_t>(init.projection.cols());
  TrainOutcome retry;
  retry.restarted = true;
  MetaModelConfig fresh = config;
  fresh.use_task_channel = init.projection.size() > 0;
  if (run(init_params(fresh, feature_width, label_count, channel_width, rng), retry)) return retry;
  throw NumericError("meta-model training diverged twice", 0);
}

std::vector<double> min_max_normalize(std::span<const double> values) {
  std::vector<double> out(values.size(), 0.0);
  if (values.empty()) return out;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double span = *hi - *lo;
  if (!(span > 0.0)) return out;
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - *lo) / span;
  return out;
}

void save_checkpoint(const std::string& path, const MetaModelParams& params, const MetaModelConfig& config) {
  nlohmann::json j;
  j["config"] = config.to_json();
  auto& tensors = j["tensors"];
  tensors = nlohmann::json::array();
  for (const auto& l : params.layers) {
    tensors.push_back({{"self", matrix_json(l.self)},
                       {"neighbor", matrix_json(l.neighbor)},
                       {"edge", matrix_json(l.edge)},
                       {"bias", matrix_json(l.bias)}});
  }
  j["projection"] = matrix_json(params.projection);
  j["projection_bias"] = matrix_json(params.projection_bias);
  j["head_hidden"] = matrix_json(params.head_hidden);
  j["head_hidden_bias"] = matrix_json(params.head_hidden_bias);
  j["head_out"] = matrix_json(params.head_out);
  j["head_out_bias"] = matrix_json(params.head_out_bias);
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write checkpoint '" + path + "'");
  out << j.dump(1) << '\n';
}

MetaModelParams load_checkpoint(const std::string& path, MetaModelConfig* config) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open checkpoint '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
    MetaModelParams p;
    for (const auto& t : j.at("tensors")) {
      p.layers.push_back({matrix_from_json(t.at("self")), matrix_from_json(t.at("neighbor")),
                          matrix_from_json(t.at("edge")), matrix_from_json(t.at("bias"))});
    }
    p.projection = matrix_from_json(j.at("projection"));
    p.projection_bias = matrix_from_json(j.at("projection_bias"));
    p.head_hidden = matrix_from_json(j.at("head_hidden"));
    p.head_hidden_bias = matrix_from_json(j.at("head_hidden_bias"));
    p.head_out = matrix_from_json(j.at("head_out"));
    p.head_out_bias = matrix_from_json(j.at("head_out_bias"));
    if (config) *config = MetaModelConfig::from_json(j.at("config"));
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("checkpoint '" + path + "': " + e.what());
  }
}

}  // namespace falcon
