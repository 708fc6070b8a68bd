#pragma once
// Loading and indexing of the user-item interaction graph and the external
// knowledge graph, merged into one unified entity graph.
//
// Unified layout:
//   entities  = [KG entities][fresh item entities][user entities]
//   relations = [KG relations][interact][inverses of all of the former]
// Every triple is materialized together with its inverse so propagation can
// follow edges in both directions.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "kcan/rng.hpp"

namespace kcan {

using EntityId = int32_t;
using RelationId = int32_t;

struct Triple {
  EntityId head;
  RelationId rel;
  EntityId tail;

  friend bool operator==(const Triple&, const Triple&) = default;
  friend auto operator<=>(const Triple&, const Triple&) = default;
};

// Raised for malformed or inconsistent input files. The CLI maps it to the
// data-error exit code.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct InteractionGraph {
  int user_count = 0;
  int item_count = 0;
  std::vector<std::pair<int, int>> edges;  // (user, item), dense ids, unique

  std::vector<std::string> user_names;  // dense id -> raw id
  std::vector<std::string> item_names;
};

// Knowledge graph as loaded: ids are dense within the KG namespace only.
struct RawKg {
  int entity_count = 0;
  int relation_count = 0;
  std::vector<Triple> triples;  // unique

  std::vector<std::string> entity_names;
  std::vector<std::string> relation_names;
  std::unordered_map<std::string, int> entity_index;
};

// item raw id -> KG entity raw id
struct Alignment {
  std::vector<std::pair<std::string, std::string>> pairs;
};

struct UnifiedGraph {
  int entity_count = 0;
  int relation_count = 0;   // including interact + all inverses
  int base_relations = 0;   // KG relations + interact; inverses start here
  RelationId interact_rel = -1;

  // Triples sorted by (head, rel, tail); adjacency is the CSR view over them.
  std::vector<Triple> triples;
  std::vector<size_t> adj_offsets;  // entity_count + 1

  std::vector<EntityId> user_entity;  // user dense id -> entity
  std::vector<EntityId> item_entity;  // item dense id -> entity
  std::vector<char> entity_is_item;

  std::vector<std::string> entity_names;
  std::vector<std::string> relation_names;
  std::vector<std::string> user_names;  // raw ids, parallel to user_entity
  std::vector<std::string> item_names;  // raw ids, parallel to item_entity

  RelationId inverse_of(RelationId r) const {
    return r < base_relations ? r + base_relations : r - base_relations;
  }

  size_t degree(EntityId v) const { return adj_offsets[v + 1] - adj_offsets[v]; }

  // Adjacency row of v: contiguous triples with head v.
  const Triple* adj_begin(EntityId v) const { return triples.data() + adj_offsets[v]; }
  const Triple* adj_end(EntityId v) const { return triples.data() + adj_offsets[v + 1]; }

  bool has_triple(EntityId h, RelationId r, EntityId t) const;
};

struct DataSplit {
  std::vector<std::pair<int, int>> train_edges;
  std::vector<std::pair<int, int>> test_edges;  // at most one per user
  uint64_t rng_seed = 0;
};

InteractionGraph load_interactions(const std::string& path);
RawKg load_triples(const std::string& path);
Alignment load_alignment(const std::string& path);

UnifiedGraph unify(const InteractionGraph& inter, const RawKg& kg, const Alignment& alignment);

DataSplit split_leave_one_out(const InteractionGraph& inter, uint64_t seed);

// Same id space and name tables, edges restricted to the split's train side.
// Feed this to unify so held-out edges never become graph structure.
InteractionGraph train_only(const InteractionGraph& inter, const DataSplit& split);

// Uniform corrupted tail t' with (h, r, t') absent from the graph.
// Rejection-sampled; throws DataError after the attempt cap.
EntityId sample_corrupt_tail(const UnifiedGraph& g, EntityId h, RelationId r, Rng& rng);

// Uniform item entity the user has no interact edge to.
EntityId sample_negative_item(const UnifiedGraph& g, EntityId user_entity, Rng& rng);

// Id-map TSV export/import ("kind \t raw \t dense" rows) and its fingerprint.
std::string export_id_map(const UnifiedGraph& g);
void write_id_map(const UnifiedGraph& g, const std::string& path);

struct IdMap {
  std::unordered_map<std::string, int> users, items, entities, relations;
};
IdMap load_id_map(const std::string& path);

uint64_t id_map_hash(const UnifiedGraph& g);

constexpr int kNegativeSampleCap = 100;
inline const char* kInteractRelationName = "@interact";
inline const char* kInversePrefix = "@inv:";

}  // namespace kcan
