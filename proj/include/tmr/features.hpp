#pragma once

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tmr/graph.hpp"
#include "tmr/rng.hpp"
#include "tmr/tensor.hpp"

namespace tmr {

// Per-entity multi-modal auxiliary vectors, aligned to entity ids. Every
// entity of the owning graph has both an image and a text vector.
struct FeatureStore {
  int d_image = 0;
  int d_text = 0;
  std::vector<std::vector<double>> image;  // [entity][d_image]
  std::vector<std::vector<double>> text;   // [entity][d_text]

  const std::vector<double>& image_of(EntityId e) const { return image.at(size_t(e)); }
  const std::vector<double>& text_of(EntityId e) const { return text.at(size_t(e)); }
};

namespace detail {

inline void write_f32(std::ofstream& out, const std::vector<double>& v) {
  for (double x : v) {
    float f = float(x);
    unsigned char b[4];
    std::memcpy(b, &f, 4);  // little-endian hosts only; asserted at load.
    out.write(reinterpret_cast<char*>(b), 4);
  }
}

inline std::vector<double> read_f32(std::ifstream& in, int n) {
  std::vector<double> v(size_t(n));
  for (int i = 0; i < n; ++i) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw ParseError("feature blob truncated");
    float f;
    std::memcpy(&f, b, 4);
    v[size_t(i)] = double(f);
  }
  return v;
}

}  // namespace detail

// Layout on disk: <prefix>.json sidecar {"d_i","d_t","n","entity_order"} and
// <prefix>.bin with one row per entity (image block then text block) of
// little-endian float32, rows in entity_order.
inline void save_features(const MultiModalKG& kg, const FeatureStore& fs,
                          const std::string& prefix) {
  nlohmann::json side;
  side["d_i"] = fs.d_image;
  side["d_t"] = fs.d_text;
  side["n"] = kg.num_entities();
  std::vector<std::string> order;
  for (int e = 0; e < kg.num_entities(); ++e) order.push_back(kg.entities.name(e));
  side["entity_order"] = order;
  std::ofstream js(prefix + ".json");
  if (!js) throw ParseError("cannot write " + prefix + ".json");
  js << side.dump(2) << "\n";

  std::ofstream bin(prefix + ".bin", std::ios::binary);
  if (!bin) throw ParseError("cannot write " + prefix + ".bin");
  for (int e = 0; e < kg.num_entities(); ++e) {
    detail::write_f32(bin, fs.image_of(e));
    detail::write_f32(bin, fs.text_of(e));
  }
}

inline FeatureStore load_features(const MultiModalKG& kg, const std::string& prefix) {
  static_assert(std::endian::native == std::endian::little, "feature blobs are little-endian");
  std::ifstream js(prefix + ".json");
  if (!js) throw ParseError("cannot open " + prefix + ".json");
  nlohmann::json side = nlohmann::json::parse(js);
  FeatureStore fs;
  fs.d_image = side.at("d_i").get<int>();
  fs.d_text = side.at("d_t").get<int>();
  int n = side.at("n").get<int>();
  auto order = side.at("entity_order").get<std::vector<std::string>>();
  if (int(order.size()) != n) throw ParseError(prefix + ".json: entity_order length != n");
  if (n < kg.num_entities())
    throw ParseError("feature file has " + std::to_string(n) + " rows, graph has " +
                     std::to_string(kg.num_entities()) + " entities");

  fs.image.assign(size_t(kg.num_entities()), {});
  fs.text.assign(size_t(kg.num_entities()), {});
  std::ifstream bin(prefix + ".bin", std::ios::binary);
  if (!bin) throw ParseError("cannot open " + prefix + ".bin");
  std::vector<bool> seen(size_t(kg.num_entities()), false);
  for (const auto& name : order) {
    auto img = detail::read_f32(bin, fs.d_image);
    auto txt = detail::read_f32(bin, fs.d_text);
    if (!kg.entities.contains(name))
      throw ParseError("feature file row for unknown entity: " + name);
    int e = kg.entities.lookup(name);
    fs.image[size_t(e)] = std::move(img);
    fs.text[size_t(e)] = std::move(txt);
    seen[size_t(e)] = true;
  }
  for (int e = 0; e < kg.num_entities(); ++e)
    if (!seen[size_t(e)])
      throw ParseError("feature file missing entity: " + kg.entities.name(e));
  for (const auto& v : fs.image)
    for (double x : v)
      if (!std::isfinite(x)) throw ParseError("non-finite image feature");
  for (const auto& v : fs.text)
    for (double x : v)
      if (!std::isfinite(x)) throw ParseError("non-finite text feature");
  return fs;
}

// Deterministic stand-in for extracted image/text vectors: components are
// uniform in [-1, 1], keyed by (seed, entity name) so the store does not
// depend on id assignment order.
inline FeatureStore synth_features(const MultiModalKG& kg, uint64_t seed, int d_image,
                                   int d_text) {
  if (d_image < 1 || d_text < 1) throw ConfigError("synth_features: dims must be >= 1");
  FeatureStore fs;
  fs.d_image = d_image;
  fs.d_text = d_text;
  fs.image.resize(size_t(kg.num_entities()));
  fs.text.resize(size_t(kg.num_entities()));
  for (int e = 0; e < kg.num_entities(); ++e) {
    Rng rng = named_rng(seed, kg.entities.name(e));
    auto& img = fs.image[size_t(e)];
    img.resize(size_t(d_image));
    for (auto& x : img) x = rng.uniform(-1.0, 1.0);
    auto& txt = fs.text[size_t(e)];
    txt.resize(size_t(d_text));
    for (auto& x : txt) x = rng.uniform(-1.0, 1.0);
  }
  return fs;
}

// Externally trained per-entity embedding table (transductive mode). Same
// bin+sidecar layout with a single block of width d.
struct EntityTable {
  int dim = 0;
  std::vector<std::vector<double>> rows;

  const std::vector<double>& of(EntityId e) const { return rows.at(size_t(e)); }
};

inline void save_entity_table(const MultiModalKG& kg, const EntityTable& tab,
                              const std::string& prefix) {
  nlohmann::json side;
  side["d"] = tab.dim;
  side["n"] = kg.num_entities();
  std::vector<std::string> order;
  for (int e = 0; e < kg.num_entities(); ++e) order.push_back(kg.entities.name(e));
  side["entity_order"] = order;
  std::ofstream js(prefix + ".json");
  js << side.dump(2) << "\n";
  std::ofstream bin(prefix + ".bin", std::ios::binary);
  for (int e = 0; e < kg.num_entities(); ++e) detail::write_f32(bin, tab.of(e));
}

inline EntityTable load_entity_table(const MultiModalKG& kg, const std::string& prefix) {
  std::ifstream js(prefix + ".json");
  if (!js) throw ParseError("cannot open " + prefix + ".json");
  nlohmann::json side = nlohmann::json::parse(js);
  EntityTable tab;
  tab.dim = side.at("d").get<int>();
  auto order = side.at("entity_order").get<std::vector<std::string>>();
  tab.rows.assign(size_t(kg.num_entities()), {});
  std::ifstream bin(prefix + ".bin", std::ios::binary);
  if (!bin) throw ParseError("cannot open " + prefix + ".bin");
  std::vector<bool> seen(size_t(kg.num_entities()), false);
  for (const auto& name : order) {
    auto row = detail::read_f32(bin, tab.dim);
    if (!kg.entities.contains(name)) continue;  // tables may cover a supergraph
    int e = kg.entities.lookup(name);
    tab.rows[size_t(e)] = std::move(row);
    seen[size_t(e)] = true;
  }
  for (int e = 0; e < kg.num_entities(); ++e)
    if (!seen[size_t(e)])
      throw ParseError("entity table missing entity: " + kg.entities.name(e));
  return tab;
}

}  // namespace tmr
