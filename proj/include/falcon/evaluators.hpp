#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "falcon/design_space.hpp"
#include "json.hpp"

namespace falcon {

enum class BudgetPhase { kWarmup, kFull };

// Units are evaluator-defined (epochs for a real trainer); tabular and
// synthetic evaluators only look at the phase.
struct Budget {
  BudgetPhase phase = BudgetPhase::kWarmup;
  double units = 1.0;
};

const char* to_string(BudgetPhase phase);

struct EvaluationRecord {
  double score = 0.0;
  std::optional<std::vector<std::uint8_t>> instance_correct;
  Budget budget;
  double wall_time = 0.0;
};

class Evaluator {
 public:
  virtual ~Evaluator() = default;
  // Throws EvaluationError when the design cannot be scored.
  virtual EvaluationRecord evaluate(DesignId id, const Budget& budget) = 0;
  virtual bool provides_instances() const = 0;
};

// Design-id keyed benchmark loaded from CSV:
//   design_id,warmup_score,full_score,instance_bits
// instance_bits is hex, four instances per digit, most significant bit first.
class TabularEvaluator : public Evaluator {
 public:
  struct Entry {
    double warmup = 0.0;
    double full = 0.0;
    std::vector<std::uint8_t> instances;
  };

  TabularEvaluator(const DesignSpace& space, std::vector<std::optional<Entry>> table);
  static TabularEvaluator load(const DesignSpace& space, const std::string& path);

  EvaluationRecord evaluate(DesignId id, const Budget& budget) override;
  bool provides_instances() const override { return instance_count_ > 0; }
  std::size_t instance_count() const { return instance_count_; }

 private:
  const DesignSpace* space_;
  std::vector<std::optional<Entry>> table_;
  std::size_t instance_count_ = 0;
};

std::string encode_instance_bits(const std::vector<std::uint8_t>& bits);
std::vector<std::uint8_t> decode_instance_bits(const std::string& hex);

// Writes every design of `space` as scored by `source` in the tabular format.
void write_tabular(const std::string& path, const DesignSpace& space, Evaluator& source);

struct LandscapeOptions {
  std::size_t instance_count = 64;
  // Amplitude of the seeded offset added to full-budget scores, as a fraction of smoothness.
  double full_noise = 0.5;
  double gate_weight = 1.0;
};

// Seeded quadratic bowl over the design encoding with a planted optimum.
// Warm-up scores are shifted to a minimum of 0 and scaled so that the mean
// absolute score gap across design-graph edges equals `smoothness`.
class SyntheticEvaluator : public Evaluator {
 public:
  SyntheticEvaluator(const DesignSpace& space, std::uint64_t seed, double smoothness,
                     const LandscapeOptions& options = {});

  EvaluationRecord evaluate(DesignId id, const Budget& budget) override;
  bool provides_instances() const override { return options_.instance_count > 0; }

  DesignId optimum() const { return optimum_; }
  double warmup_score(DesignId id) const { return warm_.at(id); }
  double full_score(DesignId id) const { return full_.at(id); }
  std::vector<std::uint8_t> instances(DesignId id) const;
  // Mean |score gap| over all edges, measured at construction.
  double edge_smoothness() const { return edge_smoothness_; }

 private:
  const DesignSpace* space_;
  std::uint64_t seed_;
  LandscapeOptions options_;
  DesignId optimum_ = 0;
  std::vector<double> warm_;
  std::vector<double> full_;
  std::vector<double> level_;  // warm score rescaled to [0, 1]
  std::vector<std::vector<double>> directions_;
  std::vector<double> thresholds_;
  double edge_smoothness_ = 0.0;
};

using EvaluationFn = std::function<EvaluationRecord(DesignId, const Budget&)>;

class CallbackEvaluator : public Evaluator {
 public:
  CallbackEvaluator(EvaluationFn fn, bool provides_instances) : fn_(std::move(fn)), instances_(provides_instances) {}
  EvaluationRecord evaluate(DesignId id, const Budget& budget) override { return fn_(id, budget); }
  bool provides_instances() const override { return instances_; }

 private:
  EvaluationFn fn_;
  bool instances_;
};

// Counts calls per phase and forwards to the wrapped evaluator.
class CountingEvaluator : public Evaluator {
 public:
  explicit CountingEvaluator(Evaluator& inner) : inner_(&inner) {}
  EvaluationRecord evaluate(DesignId id, const Budget& budget) override;
  bool provides_instances() const override { return inner_->provides_instances(); }
  std::size_t warmup_calls() const { return warmup_calls_; }
  std::size_t full_calls() const { return full_calls_; }

 private:
  Evaluator* inner_;
  std::size_t warmup_calls_ = 0;
  std::size_t full_calls_ = 0;
};

// External trainer protocol. The child is run as `sh -c "<command> <file>"`
// where <file> holds {"design": {...}, "budget": {"phase", "units"}}. It
// prints {"score": x, "instance_correct": [0, 1, ...]} on stdout.
struct ProtocolResponse {
  double score = 0.0;
  std::optional<std::vector<std::uint8_t>> instance_correct;
  std::optional<Design> design;  // present when the child echoes its input
};

class SubprocessEvaluator : public Evaluator {
 public:
  // A missing timeout reads FALCON_EVAL_TIMEOUT (seconds), default 3600.
  SubprocessEvaluator(const DesignSpace& space, std::string command,
                      std::optional<std::chrono::milliseconds> timeout = std::nullopt,
                      bool provides_instances = true);

  EvaluationRecord evaluate(DesignId id, const Budget& budget) override;
  // One protocol exchange, keeping the echoed design if the child sent one.
  ProtocolResponse call(DesignId id, const Budget& budget);
  bool provides_instances() const override { return instances_; }
  std::chrono::milliseconds timeout() const { return timeout_; }

 private:
  const DesignSpace* space_;
  std::string command_;
  std::chrono::milliseconds timeout_;
  bool instances_;
};

nlohmann::json protocol_request(const DesignSpace& space, DesignId id, const Budget& budget);

// EvaluationError on malformed output.
ProtocolResponse parse_protocol_response(const DesignSpace& space, const std::string& text);

// Builds an evaluator from a CLI spec: tabular:<path>, synthetic:<seed>:<smoothness>
// or exec:<command>. ConfigError on malformed specs.
std::unique_ptr<Evaluator> make_evaluator(const DesignSpace& space, const std::string& spec);

}  // namespace falcon
