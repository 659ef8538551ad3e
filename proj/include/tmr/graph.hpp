#pragma once

#include <algorithm>
#include <array>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "tmr/common.hpp"

namespace tmr {

struct Triplet {
  EntityId head;
  RelationId relation;
  EntityId tail;

  auto operator<=>(const Triplet&) const = default;
};

struct SymbolTable {
  std::vector<std::string> names;
  std::unordered_map<std::string, int> ids;

  int intern(const std::string& name) {
    auto it = ids.find(name);
    if (it != ids.end()) return it->second;
    int id = int(names.size());
    names.push_back(name);
    ids.emplace(name, id);
    return id;
  }
  int lookup(const std::string& name) const {
    auto it = ids.find(name);
    if (it == ids.end()) throw LookupError("unknown symbol: " + name);
    return it->second;
  }
  bool contains(const std::string& name) const { return ids.count(name) > 0; }
  const std::string& name(int id) const { return names.at(size_t(id)); }
  int size() const { return int(names.size()); }
};

// Immutable directed multigraph with inverse-relation closure: every relation
// r has a partner r' with inverse_of(inverse_of(r)) == r, and
// (h, r, t) in triplets  <=>  (t, inverse_of(r), h) in triplets.
// Multi-modal per-entity features live in a separate FeatureStore.
class MultiModalKG {
 public:
  SymbolTable entities;
  SymbolTable relations;
  std::vector<Triplet> triplets;                                  // sorted, deduplicated
  std::vector<std::vector<std::pair<RelationId, EntityId>>> out_adj;
  std::vector<std::vector<std::pair<RelationId, EntityId>>> in_adj;
  std::vector<RelationId> inverse;     // relation id -> inverse relation id
  std::vector<bool> inverse_flag;      // true for relations materialized as inverses

  int num_entities() const { return entities.size(); }
  int num_relations() const { return relations.size(); }
  int num_triplets() const { return int(triplets.size()); }

  RelationId inverse_of(RelationId r) const { return inverse.at(size_t(r)); }
  bool is_inverse(RelationId r) const { return inverse_flag.at(size_t(r)); }

  bool has_triplet(const Triplet& t) const {
    return std::binary_search(triplets.begin(), triplets.end(), t);
  }

  const std::vector<std::pair<RelationId, EntityId>>& outgoing(EntityId e) const {
    check_entity(e);
    return out_adj[size_t(e)];
  }
  const std::vector<std::pair<RelationId, EntityId>>& incoming(EntityId e) const {
    check_entity(e);
    return in_adj[size_t(e)];
  }

  // Triplets whose relation is not a materialized inverse, i.e. the canonical
  // half of the closure. Serialization and statistics work on these.
  std::vector<Triplet> base_triplets() const {
    std::vector<Triplet> out;
    for (const auto& t : triplets)
      if (!inverse_flag[size_t(t.relation)]) out.push_back(t);
    return out;
  }

  int num_base_relations() const {
    int n = 0;
    for (bool f : inverse_flag) n += f ? 0 : 1;
    return n;
  }

  uint64_t content_hash() const {
    uint64_t h = 1469598103934665603ull;
    for (const auto& t : base_triplets()) {
      h = fnv1a(entities.name(t.head), h);
      h = fnv1a(relations.name(t.relation), h);
      h = fnv1a(entities.name(t.tail), h);
    }
    return h;
  }

 private:
  void check_entity(EntityId e) const {
    if (e < 0 || e >= num_entities())
      throw LookupError("unknown entity id " + std::to_string(e));
  }

  friend class KgBuilder;
};

// Accumulates named triplets, then closes the graph over inverse relations.
// A relation named "<base>_inv" pairs with "<base>" when both appear in the
// input (processed in sorted order, each name pairing at most once); any
// relation still unpaired gets a fresh "<name>_inv" partner.
class KgBuilder {
 public:
  void add(const std::string& head, const std::string& rel, const std::string& tail) {
    raw_.push_back({head, rel, tail});
  }

  MultiModalKG build() {
    MultiModalKG kg;
    for (const auto& [h, r, t] : raw_) {
      kg.entities.intern(h);
      kg.relations.intern(r);
      kg.entities.intern(t);
    }

    // Pair existing names, then invent partners for the rest.
    int n_named = kg.relations.size();
    kg.inverse.assign(size_t(n_named), -1);
    kg.inverse_flag.assign(size_t(n_named), false);
    std::vector<std::string> sorted_names = kg.relations.names;
    std::sort(sorted_names.begin(), sorted_names.end());
    for (const auto& name : sorted_names) {
      if (name.size() <= 4 || name.substr(name.size() - 4) != "_inv") continue;
      std::string base = name.substr(0, name.size() - 4);
      if (!kg.relations.contains(base)) continue;
      int rid = kg.relations.lookup(name);
      int bid = kg.relations.lookup(base);
      if (kg.inverse[size_t(rid)] != -1 || kg.inverse[size_t(bid)] != -1) continue;
      kg.inverse[size_t(rid)] = bid;
      kg.inverse[size_t(bid)] = rid;
      kg.inverse_flag[size_t(rid)] = true;
    }
    for (int r = 0; r < n_named; ++r) {
      if (kg.inverse[size_t(r)] != -1) continue;
      int inv = kg.relations.intern(kg.relations.name(r) + "_inv");
      kg.inverse.resize(size_t(kg.relations.size()), -1);
      kg.inverse_flag.resize(size_t(kg.relations.size()), false);
      kg.inverse[size_t(r)] = inv;
      kg.inverse[size_t(inv)] = r;
      kg.inverse_flag[size_t(inv)] = true;
    }

    std::set<Triplet> closed;
    for (const auto& [h, r, t] : raw_) {
      Triplet fwd{kg.entities.lookup(h), kg.relations.lookup(r), kg.entities.lookup(t)};
      closed.insert(fwd);
      closed.insert({fwd.tail, kg.inverse_of(fwd.relation), fwd.head});
    }
    kg.triplets.assign(closed.begin(), closed.end());

    kg.out_adj.assign(size_t(kg.num_entities()), {});
    kg.in_adj.assign(size_t(kg.num_entities()), {});
    for (const auto& t : kg.triplets) {
      kg.out_adj[size_t(t.head)].emplace_back(t.relation, t.tail);
      kg.in_adj[size_t(t.tail)].emplace_back(t.relation, t.head);
    }
    for (auto& adj : kg.out_adj) std::sort(adj.begin(), adj.end());
    for (auto& adj : kg.in_adj) std::sort(adj.begin(), adj.end());
    return kg;
  }

 private:
  std::vector<std::array<std::string, 3>> raw_;
};

// One tab-separated triplet per non-empty line: head, relation, tail.
inline MultiModalKG load_triples(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open triples file: " + path);
  KgBuilder builder;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    size_t t1 = line.find('\t');
    size_t t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
    if (t1 == std::string::npos || t2 == std::string::npos || line.find('\t', t2 + 1) != std::string::npos)
      throw ParseError(path + ":" + std::to_string(lineno) +
                       ": expected head<TAB>relation<TAB>tail");
    std::string h = line.substr(0, t1);
    std::string r = line.substr(t1 + 1, t2 - t1 - 1);
    std::string t = line.substr(t2 + 1);
    if (h.empty() || r.empty() || t.empty())
      throw ParseError(path + ":" + std::to_string(lineno) + ": empty field");
    builder.add(h, r, t);
  }
  return builder.build();
}

inline void save_triples(const MultiModalKG& kg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write triples file: " + path);
  for (const auto& t : kg.base_triplets())
    out << kg.entities.name(t.head) << '\t' << kg.relations.name(t.relation) << '\t'
        << kg.entities.name(t.tail) << '\n';
}

inline MultiModalKG build_from_named(
    const std::vector<std::array<std::string, 3>>& triples) {
  KgBuilder b;
  for (const auto& [h, r, t] : triples) b.add(h, r, t);
  return b.build();
}

}  // namespace tmr
