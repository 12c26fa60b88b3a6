#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

namespace falcon {

using DesignId = std::uint32_t;
using Choice = std::int16_t;

// Choice index of a dependent dimension whose group flag is inactive.
inline constexpr Choice kInactive = -1;

enum class DimensionKind { kNumerical, kCategorical };

struct Dimension {
  std::string name;
  DimensionKind kind = DimensionKind::kCategorical;
  // Numerical choices, strictly increasing. Empty for categorical dimensions.
  std::vector<double> values;
  // Display label per choice (the symbol for categorical dimensions).
  std::vector<std::string> labels;

  static Dimension numerical(std::string name, std::vector<double> values);
  static Dimension categorical(std::string name, std::vector<std::string> symbols);

  std::size_t size() const { return labels.size(); }
  bool is_numerical() const { return kind == DimensionKind::kNumerical; }
};

// A flag-gated set of dimensions. Members are unassigned whenever the flag
// takes its `inactive` choice. Each gate (dependent, bound) requires
// value(dependent) <= value(bound) in the same design.
struct DependencyGroup {
  std::string name;
  std::string flag;
  std::string inactive;
  std::vector<std::string> members;
  std::vector<std::pair<std::string, std::string>> gates;
};

// One choice index per dimension, kInactive for unassigned dependents.
struct Design {
  std::vector<Choice> choices;

  friend bool operator==(const Design&, const Design&) = default;
};

// A design reached from another by a single distance-1 move. `label` is the
// index of the differing dimension, or dimension_count() + g for the boundary
// move that switches group g on or off.
struct Neighbor {
  DesignId id;
  std::uint16_t label;

  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

// A finite, enumerated space of valid canonical designs. Construction
// validates the declaration and enumerates every design; ids are positions in
// lexicographic order over the declared dimension order (kInactive sorts
// before every choice).
class DesignSpace {
 public:
  DesignSpace(std::vector<Dimension> dimensions, std::vector<DependencyGroup> groups = {},
              std::string name = {});

  static DesignSpace from_json(const nlohmann::json& declaration);
  // Parse errors carry the line number; field errors name the offending field.
  static DesignSpace parse(std::string_view text);
  static DesignSpace load(const std::string& path);
  nlohmann::json to_json() const;

  const std::string& name() const { return name_; }
  const std::vector<Dimension>& dimensions() const { return dimensions_; }
  const std::vector<DependencyGroup>& groups() const { return groups_; }
  std::size_t dimension_count() const { return dimensions_.size(); }
  std::size_t group_count() const { return groups_.size(); }
  std::size_t size() const { return code_of_id_.size(); }

  // Index of a dimension by name; ConfigError for unknown names.
  std::size_t dimension_index(std::string_view name) const;

  Design design(DesignId id) const;
  std::optional<DesignId> find(const Design& d) const;
  // Like find(), but a DomainError when the design is not in the space.
  DesignId id_of(const Design& d) const;

  bool is_valid(const Design& d) const;
  // Assignment object {dimension: value}. Unknown dimension names or values
  // raise ConfigError; a well-formed but invalid assignment returns false.
  bool is_valid(const nlohmann::json& assignment) const;
  Design from_assignment(const nlohmann::json& assignment) const;
  nlohmann::json to_assignment(const Design& d) const;

  // Clamps gated dependents down to the largest choice within their bound.
  // DomainError if the result is still invalid.
  Design canonicalize(const Design& d) const;

  std::vector<Design> enumerate() const;

  // DomainError for designs that are not valid canonical members of the space.
  int distance(const Design& a, const Design& b) const;
  int distance(DesignId a, DesignId b) const;

  std::size_t encoding_width() const { return encoding_width_; }
  std::vector<double> encode(const Design& d) const;
  void encode_into(DesignId id, std::span<double> out) const;

  // Edge labels: one per dimension plus one per group.
  std::size_t label_count() const { return dimensions_.size() + groups_.size(); }
  std::string label_name(std::size_t label) const;

  // All designs at distance exactly 1, sorted by id.
  std::vector<Neighbor> neighbors(DesignId id) const;

 private:
  struct ResolvedGroup {
    std::size_t flag = 0;
    Choice inactive = 0;
    std::vector<std::size_t> members;
    std::vector<std::pair<std::size_t, std::size_t>> gates;
  };

  void resolve();
  void build_index();
  bool group_active(const Design& d, std::size_t g) const;
  bool gates_hold(const Design& d) const;
  std::uint64_t code(const Design& d) const;
  Choice choice_at(DesignId id, std::size_t dim) const {
    return choice_table_[static_cast<std::size_t>(id) * dimensions_.size() + dim];
  }
  void check_member(const Design& d, const char* what) const;
  void push_if_member(const Design& d, std::uint16_t label, std::vector<Neighbor>& out) const;

  std::string name_;
  std::vector<Dimension> dimensions_;
  std::vector<DependencyGroup> groups_;
  std::vector<ResolvedGroup> resolved_;
  // group_of_[dim]: group index for members, -1 otherwise.
  std::vector<int> group_of_;
  // flag_of_[dim]: group index for flag dimensions, -1 otherwise.
  std::vector<int> flag_of_;
  std::vector<std::uint64_t> radix_stride_;
  std::vector<std::uint64_t> code_of_id_;
  std::vector<Choice> choice_table_;
  std::vector<std::size_t> encoding_offset_;
  std::size_t encoding_width_ = 0;
};

}  // namespace falcon
