#include "falcon/evaluators.hpp"

#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <Eigen/Dense>

#include "falcon/errors.hpp"
#include "falcon/format.hpp"
#include "falcon/random.hpp"

namespace falcon {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, sep)) out.push_back(field);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

template <class T>
bool parse_number(const std::string& text, T& out) {
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, out);
  return ec == std::errc() && ptr == end;
}

double unit_hash(std::uint64_t seed, std::uint64_t id) {
  return static_cast<double>(Rng::mix(seed ^ Rng::mix(id)) >> 11) * 0x1.0p-53;
}

}  // namespace

const char* to_string(BudgetPhase phase) { return phase == BudgetPhase::kWarmup ? "warmup" : "full"; }

// ---- tabular ---------------------------------------------------------------

std::string encode_instance_bits(const std::vector<std::uint8_t>& bits) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string hex;
  for (std::size_t i = 0; i < bits.size(); i += 4) {
    int nibble = 0;
    for (std::size_t b = 0; b < 4; ++b) {
      nibble <<= 1;
      if (i + b < bits.size() && bits[i + b]) nibble |= 1;
    }
    hex.push_back(kDigits[nibble]);
  }
  return hex;
}

std::vector<std::uint8_t> decode_instance_bits(const std::string& hex) {
  std::vector<std::uint8_t> bits;
  bits.reserve(hex.size() * 4);
  for (char c : hex) {
    int nibble;
    if (c >= '0' && c <= '9') {
      nibble = c - '0';
    } else if (c >= 'a' && c <= 'f') {
      nibble = c - 'a' + 10;
    } else if (c >= 'A' && c <= 'F') {
      nibble = c - 'A' + 10;
    } else {
      throw DataError(std::string("instance_bits: invalid hex digit '") + c + "'");
    }
    for (int b = 3; b >= 0; --b) bits.push_back(static_cast<std::uint8_t>((nibble >> b) & 1));
  }
  return bits;
}

TabularEvaluator::TabularEvaluator(const DesignSpace& space, std::vector<std::optional<Entry>> table)
    : space_(&space), table_(std::move(table)) {
  if (table_.size() != space.size()) throw DataError("tabular benchmark: table size differs from the space size");
  bool first = true;
  for (const auto& e : table_) {
    if (!e) continue;
    if (!(e->warmup >= 0.0 && e->warmup <= 1.0 && e->full >= 0.0 && e->full <= 1.0)) {
      throw DataError("tabular benchmark: scores must lie in [0, 1]");
    }
    if (first) {
      instance_count_ = e->instances.size();
      first = false;
    } else if (e->instances.size() != instance_count_) {
      throw DataError("tabular benchmark: instance vectors differ in length");
    }
  }
}

TabularEvaluator TabularEvaluator::load(const DesignSpace& space, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open tabular benchmark '" + path + "'");
  std::string line;
  std::vector<std::optional<Entry>> table(space.size());
  std::size_t line_no = 0;
  auto fail = [&](const std::string& what) {
    throw DataError(path + ": line " + std::to_string(line_no) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1) {
      if (line != "design_id,warmup_score,full_score,instance_bits") {
        fail("expected header design_id,warmup_score,full_score,instance_bits");
      }
      continue;
    }
    if (line.empty()) continue;
    const auto fields = split(line, ',');
    if (fields.size() != 4) fail("expected 4 fields, found " + std::to_string(fields.size()));
    std::uint64_t id;
    Entry e;
    if (!parse_number(fields[0], id)) fail("design_id is not an integer");
    if (id >= space.size()) fail("design_id " + fields[0] + " is outside the space");
    if (!parse_number(fields[1], e.warmup)) fail("warmup_score is not a number");
    if (!parse_number(fields[2], e.full)) fail("full_score is not a number");
    if (!(e.warmup >= 0.0 && e.warmup <= 1.0) || !(e.full >= 0.0 && e.full <= 1.0)) {
      fail("scores must lie in [0, 1]");
    }
    try {
      e.instances = decode_instance_bits(fields[3]);
    } catch (const DataError& err) {
      fail(err.what());
    }
    if (table[id]) fail("duplicate design_id " + fields[0]);
    table[id] = std::move(e);
  }
  if (line_no == 0) throw DataError(path + ": empty file");
  return TabularEvaluator(space, std::move(table));
}

EvaluationRecord TabularEvaluator::evaluate(DesignId id, const Budget& budget) {
  if (id >= table_.size() || !table_[id]) {
    throw DataError("tabular benchmark has no entry for design " + std::to_string(id));
  }
  const auto& e = *table_[id];
  EvaluationRecord r;
  r.score = budget.phase == BudgetPhase::kWarmup ? e.warmup : e.full;
  if (instance_count_ > 0) r.instance_correct = e.instances;
  r.budget = budget;
  return r;
}

void write_tabular(const std::string& path, const DesignSpace& space, Evaluator& source) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write tabular benchmark '" + path + "'");
  out << "design_id,warmup_score,full_score,instance_bits\n";
  for (DesignId id = 0; id < space.size(); ++id) {
    const auto warm = source.evaluate(id, {BudgetPhase::kWarmup, 1.0});
    const auto full = source.evaluate(id, {BudgetPhase::kFull, 1.0});
    out << id << ',' << format_double(warm.score) << ',' << format_double(full.score) << ','
        << (warm.instance_correct ? encode_instance_bits(*warm.instance_correct) : "") << '\n';
  }
}

// ---- synthetic -------------------------------------------------------------

SyntheticEvaluator::SyntheticEvaluator(const DesignSpace& space, std::uint64_t seed, double smoothness,
                                       const LandscapeOptions& options)
    : space_(&space), seed_(seed), options_(options) {
  if (!(smoothness >= 0.0) || !std::isfinite(smoothness)) {
    throw ConfigError("synthetic landscape: smoothness must be a finite non-negative number");
  }
  const std::size_t n = space.size();
  const std::size_t width = space.encoding_width();
  Rng rng(seed);
  optimum_ = static_cast<DesignId>(rng.index(n));

  Eigen::MatrixXd a(width, width);
  for (std::size_t i = 0; i < width; ++i) {
    for (std::size_t j = 0; j < width; ++j) a(i, j) = rng.normal();
  }
  const Eigen::MatrixXd q =
      a.transpose() * a / static_cast<double>(std::max<std::size_t>(width, 1)) + 0.1 * Eigen::MatrixXd::Identity(width, width);

  // Gate ratio dependent/bound for each active gated group, 0 when inactive.
  auto gate_ratios = [&](DesignId id) {
    std::vector<double> r;
    const auto d = space.design(id);
    for (const auto& g : space.groups()) {
      const auto flag = space.dimension_index(g.flag);
      const bool active = d.choices[flag] != kInactive &&
                          space.dimensions()[flag].labels[d.choices[flag]] != g.inactive;
      for (const auto& [dep, bound] : g.gates) {
        const auto di = space.dimension_index(dep);
        const auto bi = space.dimension_index(bound);
        double ratio = 0.0;
        if (active && d.choices[di] != kInactive) {
          ratio = space.dimensions()[di].values[d.choices[di]] / space.dimensions()[bi].values[d.choices[bi]];
        }
        r.push_back(ratio);
      }
    }
    return r;
  };

  Eigen::VectorXd xp(width), x(width);
  space.encode_into(optimum_, std::span<double>(xp.data(), width));
  const auto rp = gate_ratios(optimum_);
  std::vector<double> raw(n);
  for (DesignId id = 0; id < n; ++id) {
    space.encode_into(id, std::span<double>(x.data(), width));
    const Eigen::VectorXd diff = x - xp;
    double value = -diff.dot(q * diff);
    if (!rp.empty()) {
      const auto r = gate_ratios(id);
      for (std::size_t k = 0; k < r.size(); ++k) value -= options_.gate_weight * (r[k] - rp[k]) * (r[k] - rp[k]);
    }
    raw[id] = value;
  }

  double gap_sum = 0.0;
  std::size_t edges = 0;
  for (DesignId id = 0; id < n; ++id) {
    for (const auto& nb : space.neighbors(id)) {
      if (nb.id <= id) continue;
      gap_sum += std::abs(raw[id] - raw[nb.id]);
      ++edges;
    }
  }
  const double mean_gap = edges > 0 ? gap_sum / static_cast<double>(edges) : 0.0;
  const double scale = mean_gap > 0.0 ? smoothness / mean_gap : 0.0;
  const auto [lo, hi] = std::minmax_element(raw.begin(), raw.end());
  const double low = *lo, range = *hi - *lo;

  warm_.resize(n);
  full_.resize(n);
  level_.resize(n);
  for (DesignId id = 0; id < n; ++id) {
    warm_[id] = scale * (raw[id] - low);
    level_[id] = range > 0.0 ? (raw[id] - low) / range : 1.0;
    const double u = 2.0 * unit_hash(seed_, id) - 1.0;
    full_[id] = warm_[id] + options_.full_noise * smoothness * u;
  }
  double measured = 0.0;
  for (DesignId id = 0; id < n; ++id) {
    for (const auto& nb : space.neighbors(id)) {
      if (nb.id > id) measured += std::abs(warm_[id] - warm_[nb.id]);
    }
  }
  edge_smoothness_ = edges > 0 ? measured / static_cast<double>(edges) : 0.0;

  directions_.resize(options_.instance_count, std::vector<double>(width));
  thresholds_.resize(options_.instance_count);
  for (std::size_t j = 0; j < options_.instance_count; ++j) {
    double norm = 0.0;
    for (auto& v : directions_[j]) {
      v = rng.normal();
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (auto& v : directions_[j]) v = norm > 0.0 ? v / norm : 0.0;
    thresholds_[j] = 0.2 + 0.7 * rng.uniform();
  }
}

std::vector<std::uint8_t> SyntheticEvaluator::instances(DesignId id) const {
  const std::size_t width = space_->encoding_width();
  std::vector<double> x(width), xp(width);
  space_->encode_into(id, x);
  space_->encode_into(optimum_, xp);
  std::vector<std::uint8_t> bits(options_.instance_count);
  const double spread = 0.3 / std::sqrt(static_cast<double>(std::max<std::size_t>(width, 1)));
  for (std::size_t j = 0; j < bits.size(); ++j) {
    double proj = 0.0;
    for (std::size_t k = 0; k < width; ++k) proj += directions_[j][k] * (x[k] - xp[k]);
    bits[j] = level_[id] + spread * proj > thresholds_[j] ? 1 : 0;
  }
  return bits;
}

EvaluationRecord SyntheticEvaluator::evaluate(DesignId id, const Budget& budget) {
  if (id >= warm_.size()) throw DomainError("synthetic landscape: design id out of range");
  EvaluationRecord r;
  r.score = budget.phase == BudgetPhase::kWarmup ? warm_[id] : full_[id];
  if (options_.instance_count > 0) r.instance_correct = instances(id);
  r.budget = budget;
  return r;
}

// ---- counting --------------------------------------------------------------

EvaluationRecord CountingEvaluator::evaluate(DesignId id, const Budget& budget) {
  ++(budget.phase == BudgetPhase::kWarmup ? warmup_calls_ : full_calls_);
  return inner_->evaluate(id, budget);
}

// ---- subprocess ------------------------------------------------------------

nlohmann::json protocol_request(const DesignSpace& space, DesignId id, const Budget& budget) {
  return {{"design", space.to_assignment(space.design(id))},
          {"budget", {{"phase", to_string(budget.phase)}, {"units", budget.units}}}};
}

ProtocolResponse parse_protocol_response(const DesignSpace& space, const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw EvaluationError(std::string("evaluator output is not JSON: ") + e.what());
  }
  if (!j.is_object()) throw EvaluationError("evaluator output must be a JSON object");
  ProtocolResponse r;
  if (!j.contains("score") || !j["score"].is_number()) throw EvaluationError("evaluator output lacks a numeric score");
  r.score = j["score"].get<double>();
  if (!std::isfinite(r.score)) throw EvaluationError("evaluator reported a non-finite score");
  if (j.contains("instance_correct") && !j["instance_correct"].is_null()) {
    const auto& arr = j["instance_correct"];
    if (!arr.is_array()) throw EvaluationError("instance_correct must be an array");
    std::vector<std::uint8_t> bits;
    for (const auto& b : arr) {
      if (b.is_boolean()) {
        bits.push_back(b.get<bool>() ? 1 : 0);
      } else if (b.is_number_integer() && (b.get<int>() == 0 || b.get<int>() == 1)) {
        bits.push_back(static_cast<std::uint8_t>(b.get<int>()));
      } else {
        throw EvaluationError("instance_correct entries must be 0 or 1");
      }
    }
    r.instance_correct = std::move(bits);
  }
  if (j.contains("design")) {
    try {
      r.design = space.from_assignment(j["design"]);
    } catch (const Error& e) {
      throw EvaluationError(std::string("evaluator echoed an invalid design: ") + e.what());
    }
  }
  return r;
}

SubprocessEvaluator::SubprocessEvaluator(const DesignSpace& space, std::string command,
                                         std::optional<std::chrono::milliseconds> timeout, bool provides_instances)
    : space_(&space), command_(std::move(command)), instances_(provides_instances) {
  if (command_.empty()) throw ConfigError("exec evaluator: empty command");
  if (timeout) {
    timeout_ = *timeout;
  } else if (const char* env = std::getenv("FALCON_EVAL_TIMEOUT")) {
    double secs;
    if (!parse_number(std::string(env), secs) || !(secs > 0.0)) {
      throw ConfigError("FALCON_EVAL_TIMEOUT must be a positive number of seconds");
    }
    timeout_ = std::chrono::milliseconds(static_cast<std::int64_t>(secs * 1000.0));
  } else {
    timeout_ = std::chrono::hours(1);
  }
}

EvaluationRecord SubprocessEvaluator::evaluate(DesignId id, const Budget& budget) {
  const auto start = Clock::now();
  auto response = call(id, budget);
  EvaluationRecord r;
  r.score = response.score;
  r.instance_correct = std::move(response.instance_correct);
  r.budget = budget;
  r.wall_time = seconds_since(start);
  return r;
}

ProtocolResponse SubprocessEvaluator::call(DesignId id, const Budget& budget) {
  const auto start = Clock::now();
  auto path = (std::filesystem::temp_directory_path() / "falcon_request_XXXXXX").string();
  const int fd = ::mkstemp(path.data());
  if (fd < 0) throw EvaluationError("cannot create request file: " + std::string(std::strerror(errno)));
  const std::string request = protocol_request(*space_, id, budget).dump();
  const bool wrote = ::write(fd, request.data(), request.size()) == static_cast<ssize_t>(request.size());
  ::close(fd);
  struct Cleanup {
    std::string path;
    ~Cleanup() { std::filesystem::remove(path); }
  } cleanup{path};
  if (!wrote) throw EvaluationError("cannot write request file " + path);

  int pipe_fd[2];
  if (::pipe(pipe_fd) != 0) throw EvaluationError("pipe failed: " + std::string(std::strerror(errno)));
  const std::string shell_cmd = command_ + " '" + path + "'";
  const pid_t pid = ::fork();
  if (pid < 0) {
    ::close(pipe_fd[0]);
    ::close(pipe_fd[1]);
    throw EvaluationError("fork failed: " + std::string(std::strerror(errno)));
  }
  if (pid == 0) {
    ::dup2(pipe_fd[1], STDOUT_FILENO);
    ::close(pipe_fd[0]);
    ::close(pipe_fd[1]);
    ::setpgid(0, 0);
    ::execl("/bin/sh", "sh", "-c", shell_cmd.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::close(pipe_fd[1]);
  std::string output;
  char buffer[4096];
  const auto deadline = start + timeout_;
  bool timed_out = false;
  for (;;) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
    if (left <= 0) {
      timed_out = true;
      break;
    }
    pollfd p{pipe_fd[0], POLLIN, 0};
    const int ready = ::poll(&p, 1, static_cast<int>(std::min<std::int64_t>(left, 1000)));
    if (ready < 0 && errno == EINTR) continue;
    if (ready < 0) break;
    if (ready == 0) continue;
    const ssize_t got = ::read(pipe_fd[0], buffer, sizeof buffer);
    if (got > 0) {
      output.append(buffer, static_cast<std::size_t>(got));
    } else if (got == 0 || errno != EINTR) {
      break;
    }
  }
  ::close(pipe_fd[0]);
  if (timed_out) {
    ::kill(-pid, SIGKILL);
    ::kill(pid, SIGKILL);
  }
  int status = 0;
  while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
  }
  if (timed_out) {
    throw EvaluationError("evaluator timed out after " + std::to_string(timeout_.count()) + " ms on design " +
                          std::to_string(id));
  }
  if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
    throw EvaluationError("evaluator exited with status " +
                          std::to_string(WIFEXITED(status) ? WEXITSTATUS(status) : -1) + " on design " +
                          std::to_string(id));
  }
  return parse_protocol_response(*space_, output);
}

// ---- factory ---------------------------------------------------------------

std::unique_ptr<Evaluator> make_evaluator(const DesignSpace& space, const std::string& spec) {
  const auto colon = spec.find(':');
  if (colon == std::string::npos) {
    throw ConfigError("evaluator spec '" + spec + "' must be tabular:<path>, synthetic:<seed>:<smoothness> or exec:<command>");
  }
  const std::string kind = spec.substr(0, colon);
  const std::string rest = spec.substr(colon + 1);
  if (kind == "tabular") {
    if (rest.empty()) throw ConfigError("tabular evaluator needs a path");
    return std::make_unique<TabularEvaluator>(TabularEvaluator::load(space, rest));
  }
  if (kind == "synthetic") {
    const auto parts = split(rest, ':');
    std::uint64_t seed;
    double smoothness;
    if (parts.size() != 2 || !parse_number(parts[0], seed) || !parse_number(parts[1], smoothness)) {
      throw ConfigError("synthetic evaluator spec must be synthetic:<seed>:<smoothness>");
    }
    return std::make_unique<SyntheticEvaluator>(space, seed, smoothness);
  }
  if (kind == "exec") return std::make_unique<SubprocessEvaluator>(space, rest);
  throw ConfigError("unknown evaluator kind '" + kind + "'");
}

}  // namespace falcon
