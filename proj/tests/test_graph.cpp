#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "tmr/graph.hpp"
#include "tmr/rng.hpp"

using namespace tmr;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

MultiModalKG random_kg(Rng& rng, int n_ent, int n_rel, int n_edges) {
  KgBuilder b;
  for (int i = 0; i < n_edges; ++i)
    b.add("e" + std::to_string(rng.below(uint64_t(n_ent))),
          "r" + std::to_string(rng.below(uint64_t(n_rel))),
          "e" + std::to_string(rng.below(uint64_t(n_ent))));
  return b.build();
}

}  // namespace

TEST_CASE("single line closes to two relations and two triplets", "[graph]") {
  std::string path = temp_path("tmr_single.tsv");
  {
    std::ofstream f(path);
    f << "a\tr\tb\n";
  }
  auto kg = load_triples(path);
  CHECK(kg.num_entities() == 2);
  CHECK(kg.num_relations() == 2);
  CHECK(kg.num_triplets() == 2);
  RelationId r = kg.relations.lookup("r");
  RelationId rinv = kg.relations.lookup("r_inv");
  CHECK(kg.inverse_of(r) == rinv);
  CHECK(kg.inverse_of(rinv) == r);
  CHECK(kg.is_inverse(rinv));
  CHECK_FALSE(kg.is_inverse(r));
  CHECK(kg.has_triplet({kg.entities.lookup("a"), r, kg.entities.lookup("b")}));
  CHECK(kg.has_triplet({kg.entities.lookup("b"), rinv, kg.entities.lookup("a")}));
}

TEST_CASE("empty file loads to an empty graph", "[graph]") {
  std::string path = temp_path("tmr_empty.tsv");
  std::ofstream(path).close();
  auto kg = load_triples(path);
  CHECK(kg.num_entities() == 0);
  CHECK(kg.num_triplets() == 0);
}

TEST_CASE("malformed lines report the line number", "[graph]") {
  std::string path = temp_path("tmr_bad.tsv");
  {
    std::ofstream f(path);
    f << "a\tr\tb\n";
    f << "only two\tfields\n";
  }
  CHECK_THROWS_WITH(load_triples(path), Catch::Matchers::ContainsSubstring(":2"));
}

TEST_CASE("duplicates deduplicate and round trip preserves the closed graph", "[graph]") {
  std::string path = temp_path("tmr_dup.tsv");
  {
    std::ofstream f(path);
    // 10 distinct triples over 6 entities, one duplicated.
    f << "e0\tr0\te1\ne1\tr0\te2\ne2\tr1\te3\ne3\tr1\te4\ne4\tr0\te5\n"
      << "e5\tr1\te0\ne0\tr1\te2\ne1\tr1\te3\ne2\tr0\te4\ne3\tr0\te5\n"
      << "e0\tr0\te1\n";
  }
  auto kg = load_triples(path);
  CHECK(kg.num_triplets() == 20);  // 10 + 10 inverses
  CHECK(kg.base_triplets().size() == 10);

  std::string out = temp_path("tmr_dup_roundtrip.tsv");
  save_triples(kg, out);
  auto kg2 = load_triples(out);
  REQUIRE(kg2.num_triplets() == kg.num_triplets());
  for (const auto& t : kg.triplets) {
    Triplet named{kg2.entities.lookup(kg.entities.name(t.head)),
                  kg2.relations.lookup(kg.relations.name(t.relation)),
                  kg2.entities.lookup(kg.entities.name(t.tail))};
    CHECK(kg2.has_triplet(named));
  }
}

TEST_CASE("files that already name inverse relations pair up", "[graph]") {
  KgBuilder b;
  b.add("a", "likes", "b");
  b.add("b", "likes_inv", "c");
  auto kg = b.build();
  CHECK(kg.num_relations() == 2);
  CHECK(kg.inverse_of(kg.relations.lookup("likes")) == kg.relations.lookup("likes_inv"));
  // closure materializes both directions of both asserted edges
  CHECK(kg.has_triplet({kg.entities.lookup("c"), kg.relations.lookup("likes"),
                        kg.entities.lookup("b")}));
  CHECK(kg.num_triplets() == 4);
}

TEST_CASE("incoming and outgoing agree with a brute-force scan", "[graph]") {
  Rng rng(404);
  for (int trial = 0; trial < 5; ++trial) {
    auto kg = random_kg(rng, 12, 4, 60);
    for (EntityId e = 0; e < kg.num_entities(); ++e) {
      std::set<std::pair<RelationId, EntityId>> out_scan, in_scan;
      for (const auto& t : kg.triplets) {
        if (t.head == e) out_scan.insert({t.relation, t.tail});
        if (t.tail == e) in_scan.insert({t.relation, t.head});
      }
      auto outs = kg.outgoing(e);
      auto ins = kg.incoming(e);
      CHECK(std::set<std::pair<RelationId, EntityId>>(outs.begin(), outs.end()) == out_scan);
      CHECK(std::set<std::pair<RelationId, EntityId>>(ins.begin(), ins.end()) == in_scan);
      CHECK(std::is_sorted(outs.begin(), outs.end()));
    }
  }
}

TEST_CASE("isolated entity and unknown entity lookups", "[graph]") {
  KgBuilder b;
  b.add("a", "r", "b");
  auto kg = b.build();
  CHECK_THROWS_AS(kg.outgoing(99), LookupError);
  CHECK_THROWS_AS(kg.incoming(-1), LookupError);
}

TEST_CASE("inverse closure and adjacency consistency on random graphs", "[graph]") {
  Rng rng(777);
  for (int trial = 0; trial < 5; ++trial) {
    auto kg = random_kg(rng, 20, 5, 120);
    for (const auto& t : kg.triplets)
      CHECK(kg.has_triplet({t.tail, kg.inverse_of(t.relation), t.head}));
    // union of outgoing pairs reconstructs the triplet set exactly
    std::set<Triplet> rebuilt;
    for (EntityId e = 0; e < kg.num_entities(); ++e)
      for (auto [r, tail] : kg.outgoing(e)) rebuilt.insert({e, r, tail});
    CHECK(rebuilt == std::set<Triplet>(kg.triplets.begin(), kg.triplets.end()));
    for (RelationId r = 0; r < kg.num_relations(); ++r)
      CHECK(kg.inverse_of(kg.inverse_of(r)) == r);
  }
}
