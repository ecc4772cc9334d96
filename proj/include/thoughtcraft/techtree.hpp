#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "thoughtcraft/error.hpp"

namespace thoughtcraft {

enum class UnitKind : std::uint8_t { Worker, Army, Building, Supply, Base };

inline constexpr std::size_t kNumKinds = 5;

constexpr std::string_view kind_name(UnitKind k) {
  switch (k) {
    case UnitKind::Worker: return "worker";
    case UnitKind::Army: return "army";
    case UnitKind::Building: return "building";
    case UnitKind::Supply: return "supply";
    case UnitKind::Base: return "base";
  }
  return "?";
}

inline std::optional<UnitKind> kind_from_name(std::string_view s) {
  for (std::size_t i = 0; i < kNumKinds; ++i) {
    auto k = static_cast<UnitKind>(i);
    if (kind_name(k) == s) return k;
  }
  return std::nullopt;
}

struct UnitSpec {
  std::string id;
  UnitKind kind = UnitKind::Army;
  int mineral_cost = 0;
  int gas_cost = 0;
  int supply_cost = 0;
  int supply_provided = 0;
  int build_time = 1;
  int hp = 1;
  int attack = 0;
  int armor = 0;
  std::array<int, kNumKinds> bonus_vs{};  // indexed by UnitKind
  std::optional<std::string> produced_by;
  std::vector<std::string> requires_;

  int bonus_against(UnitKind k) const { return bonus_vs[static_cast<std::size_t>(k)]; }

  bool operator==(const UnitSpec&) const = default;
};

/// Dense per-catalog-entry counts, indexed by TechTree::index_of().
using Counts = std::vector<int>;

/// Immutable unit catalog plus its prerequisite graph. Entries are stored in
/// lexicographic id order; that position is the dense index used everywhere
/// else in the engine.
class TechTree {
 public:
  TechTree() = default;

  /// Validates the catalog and computes the topological order. Throws Error.
  explicit TechTree(std::vector<UnitSpec> specs) {
    if (specs.empty()) throw Error(Errc::NoBase, "catalog is empty");
    std::sort(specs.begin(), specs.end(),
              [](const UnitSpec& a, const UnitSpec& b) { return a.id < b.id; });
    for (std::size_t i = 0; i < specs.size(); ++i) {
      if (i > 0 && specs[i].id == specs[i - 1].id)
        throw Error(Errc::MalformedRecord, "duplicate id '" + specs[i].id + "'");
      index_.emplace(specs[i].id, static_cast<int>(i));
    }
    specs_ = std::move(specs);

    int bases = 0;
    for (std::size_t i = 0; i < specs_.size(); ++i) {
      if (specs_[i].kind == UnitKind::Base) {
        ++bases;
        base_ = static_cast<int>(i);
      }
    }
    if (bases == 0) throw Error(Errc::NoBase, "catalog has no base entry");
    if (bases > 1) throw Error(Errc::MultipleBases, "catalog has " + std::to_string(bases) + " base entries");

    producer_.assign(specs_.size(), -1);
    requires_.assign(specs_.size(), {});
    for (std::size_t i = 0; i < specs_.size(); ++i) {
      const auto& s = specs_[i];
      if (s.produced_by) {
        auto it = index_.find(*s.produced_by);
        if (it == index_.end())
          throw Error(Errc::DanglingReference, s.id + ".produced_by -> '" + *s.produced_by + "'");
        producer_[i] = it->second;
      }
      for (const auto& r : s.requires_) {
        auto it = index_.find(r);
        if (it == index_.end()) throw Error(Errc::DanglingReference, s.id + ".requires -> '" + r + "'");
        requires_[i].push_back(it->second);
      }
    }
    compute_topo_order();
  }

  std::size_t size() const { return specs_.size(); }
  const std::vector<UnitSpec>& specs() const { return specs_; }
  const UnitSpec& spec(int index) const { return specs_.at(static_cast<std::size_t>(index)); }
  const UnitSpec& spec(std::string_view id) const { return specs_[static_cast<std::size_t>(index_of(id))]; }

  int index_of(std::string_view id) const {
    auto it = index_.find(std::string(id));
    if (it == index_.end()) throw Error(Errc::UnknownId, "'" + std::string(id) + "' is not in the catalog");
    return it->second;
  }
  bool contains(std::string_view id) const { return index_.count(std::string(id)) != 0; }

  int base_index() const { return base_; }
  /// Producer index or -1.
  int producer_of(int index) const { return producer_[static_cast<std::size_t>(index)]; }
  const std::vector<int>& requirements_of(int index) const { return requires_[static_cast<std::size_t>(index)]; }

  const std::vector<std::string>& topo_order() const { return topo_order_; }

  Counts empty_counts() const { return Counts(specs_.size(), 0); }

  Counts counts_from(const std::map<std::string, int>& owned) const {
    Counts c = empty_counts();
    for (const auto& [id, n] : owned) c[static_cast<std::size_t>(index_of(id))] = n;
    return c;
  }

  bool operator==(const TechTree& o) const { return specs_ == o.specs_ && topo_order_ == o.topo_order_; }

 private:
  void compute_topo_order() {
    const std::size_t n = specs_.size();
    std::vector<std::vector<int>> dependents(n);
    std::vector<int> indegree(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
      std::set<int> prereqs(requires_[i].begin(), requires_[i].end());
      if (producer_[i] >= 0) prereqs.insert(producer_[i]);
      for (int p : prereqs) {
        dependents[static_cast<std::size_t>(p)].push_back(static_cast<int>(i));
        ++indegree[i];
      }
    }
    // Dense index order is id order, so a min-heap on index breaks ties lexicographically.
    std::priority_queue<int, std::vector<int>, std::greater<>> ready;
    for (std::size_t i = 0; i < n; ++i)
      if (indegree[i] == 0) ready.push(static_cast<int>(i));
    topo_order_.clear();
    while (!ready.empty()) {
      int v = ready.top();
      ready.pop();
      topo_order_.push_back(specs_[static_cast<std::size_t>(v)].id);
      for (int d : dependents[static_cast<std::size_t>(v)])
        if (--indegree[static_cast<std::size_t>(d)] == 0) ready.push(d);
    }
    if (topo_order_.size() != n) {
      std::string stuck;
      for (std::size_t i = 0; i < n; ++i)
        if (indegree[i] > 0) stuck += (stuck.empty() ? "" : ", ") + specs_[i].id;
      throw Error(Errc::DependencyCycle, "prerequisite cycle among {" + stuck + "}");
    }
  }

  std::vector<UnitSpec> specs_;
  std::unordered_map<std::string, int> index_;
  std::vector<int> producer_;
  std::vector<std::vector<int>> requires_;
  std::vector<std::string> topo_order_;
  int base_ = -1;
};

namespace detail {

inline int catalog_int(const nlohmann::json& rec, const char* field, int lo, const std::string& who) {
  auto it = rec.find(field);
  if (it == rec.end()) throw Error(Errc::MalformedRecord, who + ": missing field '" + field + "'");
  if (!it->is_number_integer())
    throw Error(Errc::MalformedRecord, who + ": field '" + field + "' must be an integer");
  auto v = it->get<std::int64_t>();
  if (v < lo || v > 1'000'000'000)
    throw Error(Errc::MalformedRecord, who + ": field '" + field + "' out of range (" + std::to_string(v) + ")");
  return static_cast<int>(v);
}

inline UnitSpec parse_unit_spec(const nlohmann::json& rec, std::size_t position) {
  static const std::set<std::string> kFields = {
      "id",  "kind",   "mineral_cost", "gas_cost", "supply_cost", "supply_provided", "build_time",
      "hp", "attack", "armor",        "bonus_vs", "produced_by", "requires"};
  std::string who = "record " + std::to_string(position);
  if (!rec.is_object()) throw Error(Errc::MalformedRecord, who + ": not an object");
  for (const auto& [key, _] : rec.items())
    if (!kFields.count(key)) throw Error(Errc::MalformedRecord, who + ": unknown field '" + key + "'");

  UnitSpec s;
  auto id = rec.find("id");
  if (id == rec.end() || !id->is_string() || id->get<std::string>().empty())
    throw Error(Errc::MalformedRecord, who + ": 'id' must be a non-empty string");
  s.id = id->get<std::string>();
  who = "record '" + s.id + "'";

  auto kind = rec.find("kind");
  if (kind == rec.end() || !kind->is_string()) throw Error(Errc::MalformedRecord, who + ": 'kind' must be a string");
  auto k = kind_from_name(kind->get<std::string>());
  if (!k) throw Error(Errc::MalformedRecord, who + ": unknown kind '" + kind->get<std::string>() + "'");
  s.kind = *k;

  s.mineral_cost = catalog_int(rec, "mineral_cost", 0, who);
  s.gas_cost = catalog_int(rec, "gas_cost", 0, who);
  s.supply_cost = catalog_int(rec, "supply_cost", 0, who);
  s.supply_provided = catalog_int(rec, "supply_provided", 0, who);
  s.build_time = catalog_int(rec, "build_time", 1, who);
  s.hp = catalog_int(rec, "hp", 1, who);
  s.attack = catalog_int(rec, "attack", 0, who);
  s.armor = catalog_int(rec, "armor", 0, who);

  auto bonus = rec.find("bonus_vs");
  if (bonus == rec.end() || !bonus->is_object())
    throw Error(Errc::MalformedRecord, who + ": 'bonus_vs' must be an object keyed by kind");
  for (const auto& [key, val] : bonus->items()) {
    auto bk = kind_from_name(key);
    if (!bk) throw Error(Errc::MalformedRecord, who + ": bonus_vs key '" + key + "' is not a kind");
    if (!val.is_number_integer() || val.get<std::int64_t>() < 0 || val.get<std::int64_t>() > 1'000'000)
      throw Error(Errc::MalformedRecord, who + ": bonus_vs['" + key + "'] must be an integer >= 0");
    s.bonus_vs[static_cast<std::size_t>(*bk)] = val.get<int>();
  }

  auto prod = rec.find("produced_by");
  if (prod != rec.end() && !prod->is_null()) {
    if (!prod->is_string()) throw Error(Errc::MalformedRecord, who + ": 'produced_by' must be a string or null");
    s.produced_by = prod->get<std::string>();
  }

  auto req = rec.find("requires");
  if (req == rec.end() || !req->is_array())
    throw Error(Errc::MalformedRecord, who + ": 'requires' must be a list of ids");
  for (const auto& r : *req) {
    if (!r.is_string()) throw Error(Errc::MalformedRecord, who + ": 'requires' entries must be strings");
    s.requires_.push_back(r.get<std::string>());
  }
  return s;
}

}  // namespace detail

inline TechTree parse_specs(const nlohmann::json& doc) {
  if (!doc.is_array()) throw Error(Errc::MalformedRecord, "catalog must be a top-level list of records");
  std::vector<UnitSpec> specs;
  specs.reserve(doc.size());
  for (std::size_t i = 0; i < doc.size(); ++i) specs.push_back(detail::parse_unit_spec(doc[i], i));
  return TechTree(std::move(specs));
}

inline TechTree load_specs(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::FileMissing, "cannot open catalog '" + path.string() + "'");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(Errc::MalformedRecord, "catalog '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return parse_specs(doc);
}

inline nlohmann::json to_json(const UnitSpec& s) {
  nlohmann::json bonus = nlohmann::json::object();
  for (std::size_t i = 0; i < kNumKinds; ++i)
    if (s.bonus_vs[i] != 0) bonus[std::string(kind_name(static_cast<UnitKind>(i)))] = s.bonus_vs[i];
  nlohmann::json j = {{"id", s.id},
                      {"kind", kind_name(s.kind)},
                      {"mineral_cost", s.mineral_cost},
                      {"gas_cost", s.gas_cost},
                      {"supply_cost", s.supply_cost},
                      {"supply_provided", s.supply_provided},
                      {"build_time", s.build_time},
                      {"hp", s.hp},
                      {"attack", s.attack},
                      {"armor", s.armor},
                      {"bonus_vs", bonus},
                      {"requires", s.requires_}};
  j["produced_by"] = s.produced_by ? nlohmann::json(*s.produced_by) : nlohmann::json(nullptr);
  return j;
}

// ---------------------------------------------------------------------------
// Production legality

enum class BlockReason : std::uint8_t { Producer, Tech, Minerals, Gas, Supply };

constexpr std::string_view reason_name(BlockReason r) {
  switch (r) {
    case BlockReason::Producer: return "producer";
    case BlockReason::Tech: return "tech";
    case BlockReason::Minerals: return "minerals";
    case BlockReason::Gas: return "gas";
    case BlockReason::Supply: return "supply";
  }
  return "?";
}

struct Buildability {
  bool ok = true;
  BlockReason reason = BlockReason::Producer;  // meaningful only when !ok

  static constexpr Buildability yes() { return {}; }
  static constexpr Buildability no(BlockReason r) { return {false, r}; }
  explicit operator bool() const { return ok; }
  bool operator==(const Buildability&) const = default;
};

/// Checks run in the fixed order producer, tech, minerals, gas, supply; the
/// first failure is reported.
inline Buildability buildable(const TechTree& tree, const Counts& owned, double minerals, double gas,
                              int supply_free, int target) {
  if (target < 0 || static_cast<std::size_t>(target) >= tree.size())
    throw Error(Errc::UnknownId, "target index " + std::to_string(target) + " out of range");
  if (owned.size() != tree.size()) throw Error(Errc::DimensionMismatch, "owned counts do not match catalog size");
  const UnitSpec& s = tree.spec(target);
  int producer = tree.producer_of(target);
  if (producer >= 0 && owned[static_cast<std::size_t>(producer)] < 1) return Buildability::no(BlockReason::Producer);
  for (int r : tree.requirements_of(target))
    if (owned[static_cast<std::size_t>(r)] < 1) return Buildability::no(BlockReason::Tech);
  if (minerals < s.mineral_cost) return Buildability::no(BlockReason::Minerals);
  if (gas < s.gas_cost) return Buildability::no(BlockReason::Gas);
  if (supply_free < s.supply_cost) return Buildability::no(BlockReason::Supply);
  return Buildability::yes();
}

inline Buildability buildable(const TechTree& tree, const std::map<std::string, int>& owned, double minerals,
                              double gas, int supply_free, std::string_view target) {
  return buildable(tree, tree.counts_from(owned), minerals, gas, supply_free, tree.index_of(target));
}

inline std::set<std::string> buildable_set(const TechTree& tree, const Counts& owned, double minerals, double gas,
                                           int supply_free) {
  std::set<std::string> out;
  for (std::size_t i = 0; i < tree.size(); ++i)
    if (buildable(tree, owned, minerals, gas, supply_free, static_cast<int>(i))) out.insert(tree.spec(static_cast<int>(i)).id);
  return out;
}

inline std::set<std::string> buildable_set(const TechTree& tree, const std::map<std::string, int>& owned,
                                           double minerals, double gas, int supply_free) {
  return buildable_set(tree, tree.counts_from(owned), minerals, gas, supply_free);
}

}  // namespace thoughtcraft
