#include "falcon/design_space.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_set>

#include "falcon/errors.hpp"
#include "falcon/format.hpp"

namespace falcon {
namespace {

constexpr std::uint64_t kMaxRawProduct = 50'000'000;

std::string symbol_from_json(const nlohmann::json& v, const std::string& field) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "True" : "False";
  if (v.is_number()) return format_double(v.get<double>());
  throw ConfigError(field + ": expected a string, boolean or number");
}

const nlohmann::json& require(const nlohmann::json& obj, const char* key, const std::string& path) {
  if (!obj.is_object()) throw ConfigError(path + ": expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw ConfigError(path + "." + key + ": missing field");
  return *it;
}

std::string require_string(const nlohmann::json& obj, const char* key, const std::string& path) {
  const auto& v = require(obj, key, path);
  if (!v.is_string()) throw ConfigError(path + "." + key + ": expected a string");
  return v.get<std::string>();
}

}  // namespace

Dimension Dimension::numerical(std::string name, std::vector<double> values) {
  Dimension d;
  d.name = std::move(name);
  d.kind = DimensionKind::kNumerical;
  for (double v : values) d.labels.push_back(format_double(v));
  d.values = std::move(values);
  return d;
}

Dimension Dimension::categorical(std::string name, std::vector<std::string> symbols) {
  Dimension d;
  d.name = std::move(name);
  d.kind = DimensionKind::kCategorical;
  d.labels = std::move(symbols);
  return d;
}

DesignSpace::DesignSpace(std::vector<Dimension> dimensions, std::vector<DependencyGroup> groups,
                         std::string name)
    : name_(std::move(name)), dimensions_(std::move(dimensions)), groups_(std::move(groups)) {
  resolve();
  build_index();
}

void DesignSpace::resolve() {
  if (dimensions_.empty()) throw ConfigError("design space declares no dimensions");
  std::unordered_set<std::string> names;
  for (const auto& dim : dimensions_) {
    if (dim.name.empty()) throw ConfigError("dimension with empty name");
    if (!names.insert(dim.name).second) throw ConfigError("duplicate dimension name '" + dim.name + "'");
    if (dim.labels.empty()) throw ConfigError("dimension '" + dim.name + "' has no choices");
    if (dim.size() > static_cast<std::size_t>(std::numeric_limits<Choice>::max())) {
      throw ConfigError("dimension '" + dim.name + "' has too many choices");
    }
    if (dim.is_numerical()) {
      if (dim.values.size() != dim.labels.size()) {
        throw ConfigError("dimension '" + dim.name + "': labels and values disagree");
      }
      for (std::size_t i = 0; i < dim.values.size(); ++i) {
        if (!std::isfinite(dim.values[i])) {
          throw ConfigError("dimension '" + dim.name + "': non-finite choice");
        }
        if (i > 0 && !(dim.values[i - 1] < dim.values[i])) {
          throw ConfigError("dimension '" + dim.name + "': numerical choices must be strictly increasing");
        }
      }
    } else {
      std::unordered_set<std::string> seen;
      for (const auto& s : dim.labels) {
        if (!seen.insert(s).second) {
          throw ConfigError("dimension '" + dim.name + "': duplicate choice '" + s + "'");
        }
      }
    }
  }

  const std::size_t n = dimensions_.size();
  group_of_.assign(n, -1);
  flag_of_.assign(n, -1);
  resolved_.clear();
  std::unordered_set<std::string> group_names;
  for (std::size_t g = 0; g < groups_.size(); ++g) {
    const auto& grp = groups_[g];
    const std::string where = "group '" + grp.name + "'";
    if (grp.name.empty()) throw ConfigError("dependency group with empty name");
    if (!group_names.insert(grp.name).second || names.count(grp.name)) {
      throw ConfigError(where + ": name collides with another group or dimension");
    }
    ResolvedGroup r;
    r.flag = dimension_index(grp.flag);
    const auto& flag = dimensions_[r.flag];
    if (flag.is_numerical()) throw ConfigError(where + ": flag '" + flag.name + "' must be categorical");
    if (flag_of_[r.flag] >= 0 || group_of_[r.flag] >= 0) {
      throw ConfigError(where + ": flag '" + flag.name + "' already used by another group");
    }
    auto it = std::find(flag.labels.begin(), flag.labels.end(), grp.inactive);
    if (it == flag.labels.end()) {
      throw ConfigError(where + ": inactive choice '" + grp.inactive + "' is not a choice of '" + flag.name + "'");
    }
    if (flag.size() < 2) throw ConfigError(where + ": flag needs at least one active choice");
    r.inactive = static_cast<Choice>(it - flag.labels.begin());
    flag_of_[r.flag] = static_cast<int>(g);
    if (grp.members.empty()) throw ConfigError(where + ": no dependent dimensions");
    for (const auto& m : grp.members) {
      const std::size_t idx = dimension_index(m);
      if (group_of_[idx] >= 0 || flag_of_[idx] >= 0) {
        throw ConfigError(where + ": dimension '" + m + "' already belongs to a group");
      }
      group_of_[idx] = static_cast<int>(g);
      r.members.push_back(idx);
    }
    resolved_.push_back(std::move(r));
  }
  // Gates are resolved once all memberships are known.
  for (std::size_t g = 0; g < groups_.size(); ++g) {
    const std::string where = "group '" + groups_[g].name + "'";
    for (const auto& [dep_name, bound_name] : groups_[g].gates) {
      const std::size_t dep = dimension_index(dep_name);
      const std::size_t bound = dimension_index(bound_name);
      if (group_of_[dep] != static_cast<int>(g)) {
        throw ConfigError(where + ": gated dimension '" + dep_name + "' is not a member of the group");
      }
      if (!dimensions_[dep].is_numerical() || !dimensions_[bound].is_numerical()) {
        throw ConfigError(where + ": gate '" + dep_name + "' <= '" + bound_name + "' must join numerical dimensions");
      }
      if (group_of_[bound] >= 0 || flag_of_[bound] >= 0) {
        throw ConfigError(where + ": gate bound '" + bound_name + "' must not be a group dimension");
      }
      resolved_[g].gates.emplace_back(dep, bound);
    }
  }

  encoding_offset_.resize(n);
  encoding_width_ = 0;
  for (std::size_t i = 0; i < n; ++i) {
    encoding_offset_[i] = encoding_width_;
    encoding_width_ += dimensions_[i].is_numerical() ? 1 : dimensions_[i].size();
  }
}

void DesignSpace::build_index() {
  const std::size_t n = dimensions_.size();
  radix_stride_.assign(n, 1);
  std::uint64_t product = 1;
  for (std::size_t i = n; i-- > 0;) {
    radix_stride_[i] = product;
    const std::uint64_t radix = dimensions_[i].size() + 1;
    if (product > kMaxRawProduct / radix) {
      throw ConfigError("design space is too large to enumerate");
    }
    product *= radix;
  }

  // Odometer over raw choice tuples in lexicographic order; dependents also
  // take kInactive. Codes come out sorted because dimension 0 is most significant.
  Design d;
  d.choices.resize(n);
  std::vector<Choice> lo(n);
  for (std::size_t i = 0; i < n; ++i) {
    lo[i] = group_of_[i] >= 0 ? kInactive : 0;
    d.choices[i] = lo[i];
  }
  code_of_id_.clear();
  choice_table_.clear();
  while (true) {
    if (is_valid(d)) {
      code_of_id_.push_back(code(d));
      choice_table_.insert(choice_table_.end(), d.choices.begin(), d.choices.end());
    }
    std::size_t i = n;
    while (i > 0) {
      --i;
      if (d.choices[i] + 1 < static_cast<int>(dimensions_[i].size())) {
        ++d.choices[i];
        break;
      }
      d.choices[i] = lo[i];
      if (i == 0) return;
    }
  }
}

std::size_t DesignSpace::dimension_index(std::string_view name) const {
  for (std::size_t i = 0; i < dimensions_.size(); ++i) {
    if (dimensions_[i].name == name) return i;
  }
  throw ConfigError("unknown dimension '" + std::string(name) + "'");
}

std::uint64_t DesignSpace::code(const Design& d) const {
  std::uint64_t c = 0;
  for (std::size_t i = 0; i < d.choices.size(); ++i) {
    c += static_cast<std::uint64_t>(d.choices[i] + 1) * radix_stride_[i];
  }
  return c;
}

Design DesignSpace::design(DesignId id) const {
  if (id >= size()) throw DomainError("design id " + std::to_string(id) + " is not in the space");
  const auto n = dimensions_.size();
  const auto* first = choice_table_.data() + static_cast<std::size_t>(id) * n;
  return Design{std::vector<Choice>(first, first + n)};
}

std::optional<DesignId> DesignSpace::find(const Design& d) const {
  if (d.choices.size() != dimensions_.size()) return std::nullopt;
  for (std::size_t i = 0; i < d.choices.size(); ++i) {
    if (d.choices[i] < kInactive || d.choices[i] >= static_cast<int>(dimensions_[i].size())) {
      return std::nullopt;
    }
  }
  const std::uint64_t c = code(d);
  auto it = std::lower_bound(code_of_id_.begin(), code_of_id_.end(), c);
  if (it == code_of_id_.end() || *it != c) return std::nullopt;
  return static_cast<DesignId>(it - code_of_id_.begin());
}

DesignId DesignSpace::id_of(const Design& d) const {
  auto id = find(d);
  if (!id) throw DomainError("design is not a valid canonical member of the space");
  return *id;
}

bool DesignSpace::group_active(const Design& d, std::size_t g) const {
  return d.choices[resolved_[g].flag] != resolved_[g].inactive;
}

bool DesignSpace::gates_hold(const Design& d) const {
  for (std::size_t g = 0; g < resolved_.size(); ++g) {
    if (!group_active(d, g)) continue;
    for (const auto& [dep, bound] : resolved_[g].gates) {
      if (dimensions_[dep].values[d.choices[dep]] > dimensions_[bound].values[d.choices[bound]]) {
        return false;
      }
    }
  }
  return true;
}

bool DesignSpace::is_valid(const Design& d) const {
  const std::size_t n = dimensions_.size();
  if (d.choices.size() != n) return false;
  for (std::size_t i = 0; i < n; ++i) {
    if (group_of_[i] >= 0) continue;
    if (d.choices[i] < 0 || d.choices[i] >= static_cast<int>(dimensions_[i].size())) return false;
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (group_of_[i] < 0) continue;
    if (group_active(d, static_cast<std::size_t>(group_of_[i]))) {
      if (d.choices[i] < 0 || d.choices[i] >= static_cast<int>(dimensions_[i].size())) return false;
    } else if (d.choices[i] != kInactive) {
      return false;
    }
  }
  return gates_hold(d);
}

Design DesignSpace::from_assignment(const nlohmann::json& assignment) const {
  if (!assignment.is_object()) throw ConfigError("design assignment must be a JSON object");
  Design d;
  d.choices.assign(dimensions_.size(), kInactive);
  for (const auto& [key, value] : assignment.items()) {
    const std::size_t i = dimension_index(key);
    const auto& dim = dimensions_[i];
    Choice found = kInactive;
    if (dim.is_numerical()) {
      if (!value.is_number()) throw ConfigError("design." + key + ": expected a number");
      const double v = value.get<double>();
      for (std::size_t j = 0; j < dim.values.size(); ++j) {
        if (std::abs(v - dim.values[j]) <= 1e-9 * std::max(1.0, std::abs(v))) {
          found = static_cast<Choice>(j);
          break;
        }
      }
    } else {
      const std::string s = symbol_from_json(value, "design." + key);
      auto it = std::find(dim.labels.begin(), dim.labels.end(), s);
      if (it != dim.labels.end()) found = static_cast<Choice>(it - dim.labels.begin());
    }
    if (found == kInactive) {
      throw ConfigError("design." + key + ": '" + value.dump() + "' is not a choice of the dimension");
    }
    d.choices[i] = found;
  }
  return d;
}

bool DesignSpace::is_valid(const nlohmann::json& assignment) const {
  return is_valid(from_assignment(assignment));
}

nlohmann::json DesignSpace::to_assignment(const Design& d) const {
  check_member(d, "to_assignment");
  nlohmann::json out = nlohmann::json::object();
  for (std::size_t i = 0; i < dimensions_.size(); ++i) {
    const Choice c = d.choices[i];
    if (c == kInactive) continue;
    const auto& dim = dimensions_[i];
    if (dim.is_numerical()) {
      out[dim.name] = dim.values[c];
    } else {
      out[dim.name] = dim.labels[c];
    }
  }
  return out;
}

Design DesignSpace::canonicalize(const Design& d) const {
  if (d.choices.size() != dimensions_.size()) throw DomainError("design has the wrong number of dimensions");
  Design out = d;
  for (std::size_t g = 0; g < resolved_.size(); ++g) {
    const Choice flag = out.choices[resolved_[g].flag];
    if (flag < 0 || flag >= static_cast<int>(dimensions_[resolved_[g].flag].size())) continue;
    if (!group_active(out, g)) continue;
    for (const auto& [dep, bound] : resolved_[g].gates) {
      const Choice cb = out.choices[bound];
      const Choice cd = out.choices[dep];
      if (cb < 0 || cb >= static_cast<int>(dimensions_[bound].size())) continue;
      if (cd < 0 || cd >= static_cast<int>(dimensions_[dep].size())) continue;
      const double limit = dimensions_[bound].values[cb];
      const auto& vals = dimensions_[dep].values;
      if (vals[cd] <= limit) continue;
      auto it = std::upper_bound(vals.begin(), vals.end(), limit);
      if (it == vals.begin()) {
        throw DomainError("no choice of '" + dimensions_[dep].name + "' fits within '" +
                          dimensions_[bound].name + "'");
      }
      out.choices[dep] = static_cast<Choice>((it - vals.begin()) - 1);
    }
  }
  if (!is_valid(out)) throw DomainError("design cannot be canonicalized into a valid design");
  return out;
}

std::vector<Design> DesignSpace::enumerate() const {
  std::vector<Design> out;
  out.reserve(size());
  for (DesignId id = 0; id < size(); ++id) out.push_back(design(id));
  return out;
}

void DesignSpace::check_member(const Design& d, const char* what) const {
  if (!is_valid(d)) throw DomainError(std::string(what) + ": design is not in the space");
}

int DesignSpace::distance(const Design& a, const Design& b) const {
  check_member(a, "distance");
  check_member(b, "distance");
  int total = 0;
  for (std::size_t i = 0; i < dimensions_.size(); ++i) {
    if (group_of_[i] >= 0 || flag_of_[i] >= 0) continue;
    if (dimensions_[i].is_numerical()) {
      total += std::abs(a.choices[i] - b.choices[i]);
    } else {
      total += a.choices[i] != b.choices[i];
    }
  }
  for (std::size_t g = 0; g < resolved_.size(); ++g) {
    const auto& r = resolved_[g];
    const bool on_a = group_active(a, g);
    const bool on_b = group_active(b, g);
    if (!on_a && !on_b) continue;
    if (on_a && on_b) {
      total += a.choices[r.flag] != b.choices[r.flag];
      for (std::size_t m : r.members) {
        if (dimensions_[m].is_numerical()) {
          total += std::abs(a.choices[m] - b.choices[m]);
        } else {
          total += a.choices[m] != b.choices[m];
        }
      }
      continue;
    }
    // Boundary: the inactive state sits one step from every active state whose
    // numerical members are at their smallest choice.
    const Design& on = on_a ? a : b;
    total += 1;
    for (std::size_t m : r.members) {
      if (dimensions_[m].is_numerical()) total += on.choices[m];
    }
  }
  return total;
}

int DesignSpace::distance(DesignId a, DesignId b) const { return distance(design(a), design(b)); }

std::vector<double> DesignSpace::encode(const Design& d) const {
  check_member(d, "encode");
  std::vector<double> out(encoding_width_, 0.0);
  for (std::size_t i = 0; i < dimensions_.size(); ++i) {
    const Choice c = d.choices[i];
    if (c == kInactive) continue;
    const auto& dim = dimensions_[i];
    if (dim.is_numerical()) {
      const double lo = dim.values.front();
      const double hi = dim.values.back();
      out[encoding_offset_[i]] = hi > lo ? (dim.values[c] - lo) / (hi - lo) : 0.0;
    } else {
      out[encoding_offset_[i] + static_cast<std::size_t>(c)] = 1.0;
    }
  }
  return out;
}

void DesignSpace::encode_into(DesignId id, std::span<double> out) const {
  if (out.size() != encoding_width_) throw DomainError("encode_into: output has the wrong width");
  if (id >= size()) throw DomainError("design id " + std::to_string(id) + " is not in the space");
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t i = 0; i < dimensions_.size(); ++i) {
    const Choice c = choice_at(id, i);
    if (c == kInactive) continue;
    const auto& dim = dimensions_[i];
    if (dim.is_numerical()) {
      const double lo = dim.values.front();
      const double hi = dim.values.back();
      out[encoding_offset_[i]] = hi > lo ? (dim.values[c] - lo) / (hi - lo) : 0.0;
    } else {
      out[encoding_offset_[i] + static_cast<std::size_t>(c)] = 1.0;
    }
  }
}

std::string DesignSpace::label_name(std::size_t label) const {
  if (label < dimensions_.size()) return dimensions_[label].name;
  if (label < label_count()) return groups_[label - dimensions_.size()].name;
  throw DomainError("edge label out of range");
}

void DesignSpace::push_if_member(const Design& d, std::uint16_t label, std::vector<Neighbor>& out) const {
  if (auto id = find(d); id && is_valid(d)) out.push_back(Neighbor{*id, label});
}

std::vector<Neighbor> DesignSpace::neighbors(DesignId id) const {
  const Design base = design(id);
  const std::size_t n = dimensions_.size();
  std::vector<Neighbor> out;
  Design d = base;

  auto vary = [&](std::size_t i, std::uint16_t label) {
    const auto& dim = dimensions_[i];
    const Choice c = base.choices[i];
    if (dim.is_numerical()) {
      for (int step : {-1, 1}) {
        const int next = c + step;
        if (next < 0 || next >= static_cast<int>(dim.size())) continue;
        d.choices[i] = static_cast<Choice>(next);
        push_if_member(d, label, out);
      }
    } else {
      for (std::size_t j = 0; j < dim.size(); ++j) {
        if (static_cast<Choice>(j) == c) continue;
        d.choices[i] = static_cast<Choice>(j);
        push_if_member(d, label, out);
      }
    }
    d.choices[i] = c;
  };

  for (std::size_t i = 0; i < n; ++i) {
    if (group_of_[i] >= 0 || flag_of_[i] >= 0) continue;
    vary(i, static_cast<std::uint16_t>(i));
  }

  for (std::size_t g = 0; g < resolved_.size(); ++g) {
    const auto& r = resolved_[g];
    const auto boundary = static_cast<std::uint16_t>(n + g);
    const auto& flag = dimensions_[r.flag];
    if (!group_active(base, g)) {
      // Switch on: any active flag, any categorical member choice, numerical
      // members at their smallest choice.
      std::vector<std::size_t> cats;
      for (std::size_t m : r.members) {
        if (dimensions_[m].is_numerical()) {
          d.choices[m] = 0;
        } else {
          cats.push_back(m);
          d.choices[m] = 0;
        }
      }
      for (std::size_t f = 0; f < flag.size(); ++f) {
        if (static_cast<Choice>(f) == r.inactive) continue;
        d.choices[r.flag] = static_cast<Choice>(f);
        for (std::size_t m : cats) d.choices[m] = 0;
        while (true) {
          push_if_member(d, boundary, out);
          std::size_t k = cats.size();
          bool carried = true;
          while (k > 0 && carried) {
            --k;
            if (d.choices[cats[k]] + 1 < static_cast<int>(dimensions_[cats[k]].size())) {
              ++d.choices[cats[k]];
              carried = false;
            } else {
              d.choices[cats[k]] = 0;
            }
          }
          if (carried) break;
        }
      }
      d = base;
      continue;
    }

    for (std::size_t f = 0; f < flag.size(); ++f) {
      const auto c = static_cast<Choice>(f);
      if (c == r.inactive || c == base.choices[r.flag]) continue;
      d.choices[r.flag] = c;
      push_if_member(d, static_cast<std::uint16_t>(r.flag), out);
    }
    d.choices[r.flag] = base.choices[r.flag];

    bool at_entry = true;
    for (std::size_t m : r.members) {
      if (dimensions_[m].is_numerical() && base.choices[m] != 0) at_entry = false;
    }
    if (at_entry) {
      d.choices[r.flag] = r.inactive;
      for (std::size_t m : r.members) d.choices[m] = kInactive;
      push_if_member(d, boundary, out);
      d = base;
    }
    for (std::size_t m : r.members) vary(m, static_cast<std::uint16_t>(m));
  }

  std::sort(out.begin(), out.end(), [](const Neighbor& a, const Neighbor& b) { return a.id < b.id; });
  return out;
}

DesignSpace DesignSpace::from_json(const nlohmann::json& decl) {
  if (!decl.is_object()) throw ConfigError("space: expected a JSON object");
  std::string name;
  if (auto it = decl.find("name"); it != decl.end()) {
    if (!it->is_string()) throw ConfigError("name: expected a string");
    name = it->get<std::string>();
  }
  const auto& dims_json = require(decl, "dimensions", "space");
  if (!dims_json.is_array()) throw ConfigError("dimensions: expected an array");
  std::vector<Dimension> dims;
  for (std::size_t i = 0; i < dims_json.size(); ++i) {
    const std::string path = "dimensions[" + std::to_string(i) + "]";
    const auto& dj = dims_json[i];
    const std::string dim_name = require_string(dj, "name", path);
    const std::string kind = require_string(dj, "kind", path);
    const auto& choices = require(dj, "choices", path);
    if (!choices.is_array()) throw ConfigError(path + ".choices: expected an array");
    if (choices.empty()) throw ConfigError(path + ".choices: must be non-empty");
    if (kind == "numerical") {
      std::vector<double> values;
      for (std::size_t j = 0; j < choices.size(); ++j) {
        if (!choices[j].is_number()) {
          throw ConfigError(path + ".choices[" + std::to_string(j) + "]: expected a number");
        }
        values.push_back(choices[j].get<double>());
      }
      for (std::size_t j = 1; j < values.size(); ++j) {
        if (!(values[j - 1] < values[j])) {
          throw ConfigError(path + ".choices: numerical choices must be strictly increasing");
        }
      }
      dims.push_back(Dimension::numerical(dim_name, std::move(values)));
    } else if (kind == "categorical") {
      std::vector<std::string> symbols;
      for (std::size_t j = 0; j < choices.size(); ++j) {
        symbols.push_back(symbol_from_json(choices[j], path + ".choices[" + std::to_string(j) + "]"));
      }
      dims.push_back(Dimension::categorical(dim_name, std::move(symbols)));
    } else {
      throw ConfigError(path + ".kind: expected \"numerical\" or \"categorical\", got \"" + kind + "\"");
    }
  }

  std::vector<DependencyGroup> groups;
  if (auto it = decl.find("groups"); it != decl.end()) {
    if (!it->is_array()) throw ConfigError("groups: expected an array");
    for (std::size_t i = 0; i < it->size(); ++i) {
      const std::string path = "groups[" + std::to_string(i) + "]";
      const auto& gj = (*it)[i];
      DependencyGroup g;
      g.name = require_string(gj, "name", path);
      g.flag = require_string(gj, "flag", path);
      g.inactive = symbol_from_json(require(gj, "inactive", path), path + ".inactive");
      const auto& members = require(gj, "members", path);
      if (!members.is_array()) throw ConfigError(path + ".members: expected an array");
      for (const auto& m : members) {
        if (!m.is_string()) throw ConfigError(path + ".members: expected strings");
        g.members.push_back(m.get<std::string>());
      }
      if (auto gates = gj.find("gates"); gates != gj.end()) {
        if (!gates->is_array()) throw ConfigError(path + ".gates: expected an array");
        for (std::size_t j = 0; j < gates->size(); ++j) {
          const std::string gpath = path + ".gates[" + std::to_string(j) + "]";
          g.gates.emplace_back(require_string((*gates)[j], "dependent", gpath),
                               require_string((*gates)[j], "bound", gpath));
        }
      }
      groups.push_back(std::move(g));
    }
  }
  return DesignSpace(std::move(dims), std::move(groups), std::move(name));
}

DesignSpace DesignSpace::parse(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::parse_error& e) {
    const std::size_t upto = std::min<std::size_t>(e.byte, text.size());
    const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n');
    throw ConfigError("line " + std::to_string(line) + ": " + e.what());
  }
  return from_json(j);
}

DesignSpace DesignSpace::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open space file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

nlohmann::json DesignSpace::to_json() const {
  nlohmann::json out;
  if (!name_.empty()) out["name"] = name_;
  out["dimensions"] = nlohmann::json::array();
  for (const auto& dim : dimensions_) {
    nlohmann::json dj;
    dj["name"] = dim.name;
    dj["kind"] = dim.is_numerical() ? "numerical" : "categorical";
    if (dim.is_numerical()) {
      dj["choices"] = dim.values;
    } else {
      dj["choices"] = dim.labels;
    }
    out["dimensions"].push_back(std::move(dj));
  }
  if (!groups_.empty()) {
    out["groups"] = nlohmann::json::array();
    for (const auto& g : groups_) {
      nlohmann::json gj;
      gj["name"] = g.name;
      gj["flag"] = g.flag;
      gj["inactive"] = g.inactive;
      gj["members"] = g.members;
      gj["gates"] = nlohmann::json::array();
      for (const auto& [dep, bound] : g.gates) gj["gates"].push_back({{"dependent", dep}, {"bound", bound}});
      out["groups"].push_back(std::move(gj));
    }
  }
  return out;
}

}  // namespace falcon
