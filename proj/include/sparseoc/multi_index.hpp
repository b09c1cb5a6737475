#pragma once

/*! \file multi_index.hpp
    \brief Sparse multi-indices, downward-closed index sets and the reduced
           forward neighbor construction used by the adaptive sparse quadrature.

    Dimensions are 1-based. A MultiIndex stores only the dimensions with a
    nonzero level, so indices living in a 1025-dimensional parameter space cost
    only as much as their support.
*/

#include "errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace sparseoc {

using Dim = std::uint32_t;
using Level = std::uint32_t;

/// Finitely supported map dimension -> level. Zero levels are never stored.
class MultiIndex {
 public:
  using Entry = std::pair<Dim, Level>;

  MultiIndex() = default;

  /// Build from (dimension, level) pairs; zero levels are dropped, repeated dimensions add up.
  MultiIndex(std::initializer_list<Entry> entries) {
    for (const auto& [j, l] : entries) set(j, level(j) + l);
  }

  static MultiIndex unit(Dim j, Level l = 1) {
    MultiIndex m;
    m.set(j, l);
    return m;
  }

  Level level(Dim j) const noexcept {
    auto it = find(j);
    return (it != entries_.end() && it->first == j) ? it->second : 0;
  }

  void set(Dim j, Level l) {
    if (j == 0) throw ValidationError("multi-index dimensions are 1-based");
    auto it = find(j);
    const bool present = it != entries_.end() && it->first == j;
    if (l == 0) {
      if (present) entries_.erase(it);
    } else if (present) {
      it->second = l;
    } else {
      entries_.insert(it, Entry{j, l});
    }
  }

  /// this + e_j
  MultiIndex incremented(Dim j) const {
    MultiIndex m = *this;
    m.set(j, level(j) + 1);
    return m;
  }

  /// this - e_j; requires level(j) >= 1
  MultiIndex decremented(Dim j) const {
    const Level l = level(j);
    if (l == 0) throw ValidationError("cannot decrement a zero level");
    MultiIndex m = *this;
    m.set(j, l - 1);
    return m;
  }

  const std::vector<Entry>& entries() const noexcept { return entries_; }
  std::size_t support_size() const noexcept { return entries_.size(); }
  bool is_zero() const noexcept { return entries_.empty(); }

  /// |nu| = sum of levels
  std::uint64_t total() const noexcept {
    std::uint64_t s = 0;
    for (const auto& e : entries_) s += e.second;
    return s;
  }

  /// ||nu||_inf
  Level max_level() const noexcept {
    Level m = 0;
    for (const auto& e : entries_) m = std::max(m, e.second);
    return m;
  }

  /// Largest supported dimension, 0 for the zero index.
  Dim max_dim() const noexcept { return entries_.empty() ? 0 : entries_.back().first; }

  friend bool operator==(const MultiIndex&, const MultiIndex&) = default;

  /// Canonical order: lexicographic over the sorted (dimension, level) entries.
  friend auto operator<=>(const MultiIndex& a, const MultiIndex& b) { return a.entries_ <=> b.entries_; }

  std::string to_string() const {
    if (entries_.empty()) return "0";
    std::string s;
    for (const auto& [j, l] : entries_) {
      if (!s.empty()) s += '+';
      if (l != 1) s += std::to_string(l);
      s += "e" + std::to_string(j);
    }
    return s;
  }

 private:
  std::vector<Entry>::iterator find(Dim j) {
    return std::lower_bound(entries_.begin(), entries_.end(), j,
                            [](const Entry& e, Dim d) { return e.first < d; });
  }
  std::vector<Entry>::const_iterator find(Dim j) const {
    return std::lower_bound(entries_.begin(), entries_.end(), j,
                            [](const Entry& e, Dim d) { return e.first < d; });
  }

  std::vector<Entry> entries_;
};

struct MultiIndexHash {
  std::size_t operator()(const MultiIndex& m) const noexcept {
    std::uint64_t h = 0x9e3779b97f4a7c15ULL;
    for (const auto& [j, l] : m.entries()) {
      h ^= (static_cast<std::uint64_t>(j) << 20 | l) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    }
    return static_cast<std::size_t>(h);
  }
};

/// a <= b componentwise
inline bool leq(const MultiIndex& a, const MultiIndex& b) {
  for (const auto& [j, l] : a.entries()) {
    if (l > b.level(j)) return false;
  }
  return true;
}

inline bool is_downward_closed(const std::vector<MultiIndex>& set) {
  std::unordered_set<MultiIndex, MultiIndexHash> lookup(set.begin(), set.end());
  for (const auto& nu : set) {
    for (const auto& [j, l] : nu.entries()) {
      if (!lookup.contains(nu.decremented(j))) return false;
    }
  }
  return true;
}

/// Downward-closed set of multi-indices in insertion order. Always contains 0.
class IndexSet {
 public:
  IndexSet() { push(MultiIndex{}); }

  /// Build from a downward-closed collection; members keep the given order after 0.
  explicit IndexSet(const std::vector<MultiIndex>& members) : IndexSet() {
    if (!is_downward_closed(members)) throw ValidationError("index set is not downward closed");
    for (const auto& nu : members) {
      if (!contains(nu)) push(nu);
    }
  }

  bool contains(const MultiIndex& nu) const { return lookup_.contains(nu); }

  /// True if nu is not a member and all its backward neighbors are.
  bool is_admissible(const MultiIndex& nu) const {
    if (contains(nu)) return false;
    for (const auto& [j, l] : nu.entries()) {
      if (!contains(nu.decremented(j))) return false;
    }
    return true;
  }

  void insert(const MultiIndex& nu) {
    if (!is_admissible(nu)) {
      throw ValidationError("inserting " + nu.to_string() + " would break downward closedness");
    }
    push(nu);
  }

  const std::vector<MultiIndex>& members() const noexcept { return members_; }
  std::size_t size() const noexcept { return members_.size(); }

  /// j(Lambda): smallest j such that nu_{j+1} = 0 for all members.
  Dim j_max() const noexcept { return j_max_; }

 private:
  void push(const MultiIndex& nu) {
    members_.push_back(nu);
    lookup_.insert(nu);
    j_max_ = std::max(j_max_, nu.max_dim());
  }

  std::vector<MultiIndex> members_;
  std::unordered_set<MultiIndex, MultiIndexHash> lookup_;
  Dim j_max_ = 0;
};

/// Largest dimension that may be activated next: min(j(Lambda) + 1, dim_cap).
inline Dim active_dim_limit(const IndexSet& set, Dim dim_cap) {
  return std::min<Dim>(set.j_max() + 1, dim_cap);
}

/// Reduced forward neighbors of a downward-closed set, sorted in canonical order.
inline std::vector<MultiIndex> reduced_forward_neighbors(const IndexSet& set, Dim dim_cap) {
  if (dim_cap < 1) throw ValidationError("dim_cap must be at least 1");
  if (!is_downward_closed(set.members())) throw ValidationError("index set is not downward closed");
  const Dim limit = active_dim_limit(set, dim_cap);
  std::unordered_set<MultiIndex, MultiIndexHash> seen;
  std::vector<MultiIndex> out;
  for (const auto& nu : set.members()) {
    for (Dim j = 1; j <= limit; ++j) {
      MultiIndex mu = nu.incremented(j);
      if (seen.contains(mu)) continue;
      seen.insert(mu);
      if (set.is_admissible(mu)) out.push_back(std::move(mu));
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// Same, for a plain collection; rejects collections that are not downward closed.
inline std::vector<MultiIndex> reduced_forward_neighbors(const std::vector<MultiIndex>& set, Dim dim_cap) {
  if (!is_downward_closed(set)) throw ValidationError("index set is not downward closed");
  return reduced_forward_neighbors(IndexSet(set), dim_cap);
}

inline constexpr std::size_t kDefaultRectangleLimit = 1u << 20;

/// All mu <= nu, in canonical order.
inline std::vector<MultiIndex> rectangle(const MultiIndex& nu, std::size_t limit = kDefaultRectangleLimit) {
  std::size_t count = 1;
  for (const auto& [j, l] : nu.entries()) {
    if (count > limit / (static_cast<std::size_t>(l) + 1)) {
      throw ValidationError("rectangle of " + nu.to_string() + " exceeds the enumeration limit");
    }
    count *= static_cast<std::size_t>(l) + 1;
  }
  const auto& e = nu.entries();
  std::vector<Level> cursor(e.size(), 0);
  std::vector<MultiIndex> out;
  out.reserve(count);
  for (std::size_t n = 0; n < count; ++n) {
    MultiIndex mu;
    for (std::size_t k = 0; k < e.size(); ++k) mu.set(e[k].first, cursor[k]);
    out.push_back(std::move(mu));
    for (std::size_t k = e.size(); k-- > 0;) {
      if (++cursor[k] <= e[k].second) break;
      cursor[k] = 0;
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

// JSON: {"j": level} with string keys; index sets as arrays in insertion order.

inline nlohmann::json to_json_value(const MultiIndex& nu) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [d, l] : nu.entries()) j[std::to_string(d)] = l;
  return j;
}

inline MultiIndex multi_index_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("multi-index JSON must be an object");
  MultiIndex nu;
  for (const auto& [key, value] : j.items()) {
    const long d = std::stol(key);
    if (d < 1) throw ValidationError("multi-index dimension keys must be positive");
    const auto l = value.get<long>();
    if (l < 0) throw ValidationError("multi-index levels must be nonnegative");
    nu.set(static_cast<Dim>(d), static_cast<Level>(l));
  }
  return nu;
}

inline nlohmann::json to_json_value(const IndexSet& set) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& nu : set.members()) arr.push_back(to_json_value(nu));
  return arr;
}

inline IndexSet index_set_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw ValidationError("index set JSON must be an array");
  std::vector<MultiIndex> members;
  for (const auto& item : j) members.push_back(multi_index_from_json(item));
  return IndexSet(members);
}

}  // namespace sparseoc
