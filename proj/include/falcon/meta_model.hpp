#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "falcon/design_graph.hpp"
#include "falcon/design_space.hpp"
#include "falcon/random.hpp"
#include "json.hpp"

namespace falcon {

enum class OptimizerKind { kAdam, kGradientDescent };

struct MetaModelConfig {
  int hidden_dim = 32;
  int mp_layers = 3;
  // Propagation steps of the task-specific channel.
  int lp_layers = 3;
  // Width of the prediction head's hidden layer; 0 gives a linear head.
  int head_hidden_dim = 32;
  double alpha = 0.8;
  double rank_weight = 1.0;
  double rank_temperature = 0.1;
  int instance_sample_size = 32;
  // Off for the graph-blind ablation: the head sees only its node's embedding.
  bool use_task_channel = true;
  int max_train_epochs = 100;
  int patience = 10;
  double learning_rate = 1e-2;
  OptimizerKind optimizer = OptimizerKind::kAdam;

  // ConfigError naming the first out-of-range field.
  void validate() const;
  nlohmann::json to_json() const;
  static MetaModelConfig from_json(const nlohmann::json& j);
};

struct MessageLayer {
  Eigen::MatrixXd self;      // hidden x in
  Eigen::MatrixXd neighbor;  // hidden x in, applied to the neighbor mean
  Eigen::MatrixXd edge;      // hidden x labels, applied to the mean edge one-hot
  Eigen::VectorXd bias;
};

struct MetaModelParams {
  std::vector<MessageLayer> layers;
  Eigen::MatrixXd projection;  // channel_dim x channel width; empty without a task channel
  Eigen::VectorXd projection_bias;
  Eigen::MatrixXd head_hidden;  // empty for a linear head
  Eigen::VectorXd head_hidden_bias;
  Eigen::MatrixXd head_out;  // 1 x head input
  Eigen::VectorXd head_out_bias;

  // Same shapes, all zeros.
  MetaModelParams zeros_like() const;
  std::vector<std::string> tensor_names() const;
  std::vector<std::span<double>> tensors();
  std::vector<std::span<const double>> tensors() const;
  std::size_t parameter_count() const;
  bool all_finite() const;
};

// Glorot-uniform weights, zero biases.
MetaModelParams init_params(const MetaModelConfig& config, std::size_t feature_width, std::size_t label_count,
                            std::size_t channel_width, Rng& rng);

// Node and edge inputs of one subgraph. Edge features enter the model only
// through the per-node mean of incident edge one-hots, which is fixed per subgraph.
struct GraphInput {
  std::vector<std::uint32_t> offsets{0};
  std::vector<std::uint32_t> adjacency;
  Eigen::MatrixXd features;   // nodes x feature width
  Eigen::MatrixXd edge_mean;  // nodes x label count
  Eigen::MatrixXd channel;    // nodes x channel width (propagated performance rows)

  std::size_t node_count() const { return offsets.size() - 1; }

  static GraphInput from_subgraph(const DesignSpace& space, const DesignSubgraph& subgraph,
                                  Eigen::MatrixXd channel);
  static GraphInput from_parts(std::vector<std::uint32_t> offsets, std::vector<std::uint32_t> adjacency,
                               std::span<const std::uint16_t> labels, std::size_t label_count,
                               Eigen::MatrixXd features, Eigen::MatrixXd channel);
};

// One-hot over edge labels for a distance-1 pair; DomainError otherwise.
std::vector<double> encode_edge(const DesignSpace& space, DesignId u, DesignId v);

// Per-anchor instance correctness. Rows are explored designs.
struct InstanceMatrix {
  std::vector<DesignId> anchors;
  std::size_t instance_count = 0;
  std::vector<std::uint8_t> bits;

  void add_row(DesignId anchor, std::span<const std::uint8_t> row);
  std::uint8_t at(std::size_t row, std::size_t instance) const { return bits[row * instance_count + instance]; }
  std::size_t rows() const { return anchors.size(); }
};

// Binary entropy (nats) of each instance's outcome across anchors.
std::vector<double> instance_entropy(const InstanceMatrix& m);
// Draws `count` distinct instances with probability softmax(entropy). Returns
// ascending instance ids; all instances when count exceeds the total.
std::vector<std::size_t> select_instances(const InstanceMatrix& m, std::size_t count, Rng& rng);

// steps x (Y <- alpha * D^-1/2 A D^-1/2 Y + (1 - alpha) * Y). Isolated nodes
// have no propagated term.
Eigen::MatrixXd label_propagate(const DesignSubgraph& subgraph, const Eigen::MatrixXd& y0, double alpha, int steps);
Eigen::MatrixXd label_propagate(std::span<const std::uint32_t> offsets, std::span<const std::uint32_t> adjacency,
                                const Eigen::MatrixXd& y0, double alpha, int steps);

// Predicted score of every node. NumericError carries the failing layer
// (1..mp_layers for message passing, mp_layers + 1 for the head).
Eigen::VectorXd forward(const MetaModelParams& params, const GraphInput& input);

// Squared error plus lambda times the pairwise rank term over pairs i < j
// with distinct targets. Writes d(loss)/d(predictions) when `grad` is non-empty.
double ranking_loss(std::span<const double> predictions, std::span<const double> targets, double lambda,
                    double tau, std::span<double> grad = {});

struct LossGradient {
  double loss = 0.0;
  MetaModelParams gradient;
};

// Loss over the `rows` nodes and its exact gradient. Only the receptive field
// of `rows` is evaluated.
LossGradient loss_and_gradient(const MetaModelParams& params, const MetaModelConfig& config,
                               const GraphInput& input, std::span<const std::uint32_t> rows,
                               std::span<const double> targets);

struct TrainOutcome {
  MetaModelParams params;
  double loss = 0.0;
  int epochs = 0;
  bool restarted = false;
};

// Gradient descent until max_train_epochs or `patience` epochs without a
// relative improvement of 1e-4. Returns the best-loss parameters. A
// non-finite loss restarts once from fresh parameters drawn from `rng`.
TrainOutcome train(const MetaModelParams& init, const MetaModelConfig& config, const GraphInput& input,
                   std::span<const std::uint32_t> rows, std::span<const double> targets, Rng& rng);

// Min-max normalization to [0, 1]; all zeros when the values are constant.
std::vector<double> min_max_normalize(std::span<const double> values);

void save_checkpoint(const std::string& path, const MetaModelParams& params, const MetaModelConfig& config);
MetaModelParams load_checkpoint(const std::string& path, MetaModelConfig* config = nullptr);

}  // namespace falcon
