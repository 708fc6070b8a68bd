#include "kcan/graph.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace kcan {

namespace {

// Split a line on tabs. Returns false for blank lines.
bool split_tabs(const std::string& line, std::vector<std::string>& out) {
  out.clear();
  if (line.empty()) return false;
  size_t start = 0;
  while (true) {
    size_t tab = line.find('\t', start);
    if (tab == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  return true;
}

std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

[[noreturn]] void parse_fail(const std::string& path, size_t line_no, const std::string& why) {
  throw DataError(path + ":" + std::to_string(line_no) + ": " + why);
}

int intern(std::unordered_map<std::string, int>& index, std::vector<std::string>& names,
           const std::string& raw) {
  auto [it, inserted] = index.emplace(raw, static_cast<int>(names.size()));
  if (inserted) names.push_back(raw);
  return it->second;
}

}  // namespace

bool UnifiedGraph::has_triple(EntityId h, RelationId r, EntityId t) const {
  const Triple key{h, r, t};
  const Triple* lo = adj_begin(h);
  const Triple* hi = adj_end(h);
  return std::binary_search(lo, hi, key);
}

InteractionGraph load_interactions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);

  InteractionGraph g;
  std::unordered_map<std::string, int> user_index, item_index;
  std::vector<std::pair<int, int>> edges;
  std::string line;
  std::vector<std::string> fields;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (!split_tabs(line, fields)) continue;
    // third field (timestamp) is tolerated and ignored
    if (fields.size() < 2 || fields.size() > 3) parse_fail(path, line_no, "expected 2 fields");
    if (fields[0].empty() || fields[1].empty()) parse_fail(path, line_no, "empty id");
    const int u = intern(user_index, g.user_names, fields[0]);
    const int i = intern(item_index, g.item_names, fields[1]);
    edges.emplace_back(u, i);
  }
  if (edges.empty()) throw DataError(path + ": no interactions");

  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  g.edges = std::move(edges);
  g.user_count = static_cast<int>(g.user_names.size());
  g.item_count = static_cast<int>(g.item_names.size());
  return g;
}

RawKg load_triples(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);

  RawKg kg;
  std::unordered_map<std::string, int> rel_index;
  std::string line;
  std::vector<std::string> fields;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (!split_tabs(line, fields)) continue;
    if (fields.size() != 3) parse_fail(path, line_no, "expected 3 fields");
    if (fields[0].empty() || fields[2].empty()) parse_fail(path, line_no, "empty entity id");
    if (fields[1].empty()) parse_fail(path, line_no, "empty relation");
    const int h = intern(kg.entity_index, kg.entity_names, fields[0]);
    const int r = intern(rel_index, kg.relation_names, fields[1]);
    const int t = intern(kg.entity_index, kg.entity_names, fields[2]);
    kg.triples.push_back({h, r, t});
  }
  std::sort(kg.triples.begin(), kg.triples.end());
  kg.triples.erase(std::unique(kg.triples.begin(), kg.triples.end()), kg.triples.end());
  kg.entity_count = static_cast<int>(kg.entity_names.size());
  kg.relation_count = static_cast<int>(kg.relation_names.size());
  return kg;
}

Alignment load_alignment(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);

  Alignment a;
  std::string line;
  std::vector<std::string> fields;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (!split_tabs(line, fields)) continue;
    if (fields.size() != 2) parse_fail(path, line_no, "expected 2 fields");
    if (fields[0].empty() || fields[1].empty()) parse_fail(path, line_no, "empty id");
    a.pairs.emplace_back(fields[0], fields[1]);
  }
  return a;
}

UnifiedGraph unify(const InteractionGraph& inter, const RawKg& kg, const Alignment& alignment) {
  UnifiedGraph g;

  std::unordered_map<std::string, int> item_index;
  for (int i = 0; i < inter.item_count; ++i) item_index.emplace(inter.item_names[i], i);

  std::unordered_map<int, std::string> aligned;  // item dense id -> entity raw id
  for (const auto& [item_raw, entity_raw] : alignment.pairs) {
    auto it = item_index.find(item_raw);
    if (it == item_index.end())
      throw DataError("alignment references unknown item '" + item_raw + "'");
    auto [at, inserted] = aligned.emplace(it->second, entity_raw);
    if (!inserted && at->second != entity_raw)
      throw DataError("item '" + item_raw + "' aligned to two entities");
  }

  g.entity_names = kg.entity_names;
  std::unordered_map<std::string, int> entity_index = kg.entity_index;

  g.item_entity.resize(inter.item_count);
  for (int i = 0; i < inter.item_count; ++i) {
    auto it = aligned.find(i);
    // Aligned items reuse the KG entity (creating it if the KG never saw the
    // raw id); unaligned items become fresh entities named after the item.
    const std::string& raw = it != aligned.end() ? it->second : inter.item_names[i];
    g.item_entity[i] = intern(entity_index, g.entity_names, raw);
  }
  g.user_entity.resize(inter.user_count);
  for (int u = 0; u < inter.user_count; ++u)
    g.user_entity[u] = intern(entity_index, g.entity_names, "@user:" + inter.user_names[u]);

  g.entity_count = static_cast<int>(g.entity_names.size());
  g.entity_is_item.assign(g.entity_count, 0);
  for (EntityId e : g.item_entity) g.entity_is_item[e] = 1;
  g.user_names = inter.user_names;
  g.item_names = inter.item_names;

  g.relation_names = kg.relation_names;
  g.interact_rel = static_cast<RelationId>(g.relation_names.size());
  g.relation_names.push_back(kInteractRelationName);
  g.base_relations = static_cast<int>(g.relation_names.size());
  for (int r = 0; r < g.base_relations; ++r)
    g.relation_names.push_back(kInversePrefix + g.relation_names[r]);
  g.relation_count = static_cast<int>(g.relation_names.size());

  std::vector<Triple> triples;
  triples.reserve(2 * (kg.triples.size() + inter.edges.size()));
  for (const Triple& t : kg.triples) triples.push_back(t);
  for (const auto& [u, i] : inter.edges)
    triples.push_back({g.user_entity[u], g.interact_rel, g.item_entity[i]});
  const size_t forward_count = triples.size();
  for (size_t k = 0; k < forward_count; ++k) {
    const Triple& t = triples[k];
    triples.push_back({t.tail, g.inverse_of(t.rel), t.head});
  }
  std::sort(triples.begin(), triples.end());
  triples.erase(std::unique(triples.begin(), triples.end()), triples.end());
  g.triples = std::move(triples);

  g.adj_offsets.assign(g.entity_count + 1, 0);
  for (const Triple& t : g.triples) ++g.adj_offsets[t.head + 1];
  for (int v = 0; v < g.entity_count; ++v) g.adj_offsets[v + 1] += g.adj_offsets[v];

  return g;
}

DataSplit split_leave_one_out(const InteractionGraph& inter, uint64_t seed) {
  std::vector<std::vector<int>> per_user(inter.user_count);
  for (const auto& [u, i] : inter.edges) per_user[u].push_back(i);

  DataSplit split;
  split.rng_seed = seed;
  for (int u = 0; u < inter.user_count; ++u) {
    auto& items = per_user[u];
    if (items.size() >= 2) {
      Rng rng = make_stream(seed, StreamTag::kSplit, static_cast<uint64_t>(u));
      const size_t pick = rng() % items.size();
      split.test_edges.emplace_back(u, items[pick]);
      items.erase(items.begin() + pick);
    }
    for (int i : items) split.train_edges.emplace_back(u, i);
  }
  return split;
}

InteractionGraph train_only(const InteractionGraph& inter, const DataSplit& split) {
  InteractionGraph out;
  out.user_count = inter.user_count;
  out.item_count = inter.item_count;
  out.user_names = inter.user_names;
  out.item_names = inter.item_names;
  out.edges = split.train_edges;
  return out;
}

EntityId sample_corrupt_tail(const UnifiedGraph& g, EntityId h, RelationId r, Rng& rng) {
  if (g.entity_count < 2) throw DataError("corrupt-tail sampling needs >= 2 entities");
  for (int attempt = 0; attempt < kNegativeSampleCap; ++attempt) {
    const EntityId t = static_cast<EntityId>(rng() % g.entity_count);
    if (!g.has_triple(h, r, t)) return t;
  }
  throw DataError("no corruptible tail found for head " + std::to_string(h));
}

EntityId sample_negative_item(const UnifiedGraph& g, EntityId user_entity, Rng& rng) {
  const size_t item_count = g.item_entity.size();
  if (item_count == 0) throw DataError("graph has no items");
  for (int attempt = 0; attempt < kNegativeSampleCap; ++attempt) {
    const EntityId cand = g.item_entity[rng() % item_count];
    if (!g.has_triple(user_entity, g.interact_rel, cand)) return cand;
  }
  throw DataError("user entity " + std::to_string(user_entity) + " has no negative item");
}

std::string export_id_map(const UnifiedGraph& g) {
  std::ostringstream out;
  for (size_t e = 0; e < g.entity_names.size(); ++e)
    out << "entity\t" << g.entity_names[e] << '\t' << e << '\n';
  for (size_t r = 0; r < g.relation_names.size(); ++r)
    out << "relation\t" << g.relation_names[r] << '\t' << r << '\n';
  for (size_t u = 0; u < g.user_entity.size(); ++u)
    out << "user\t" << g.user_names[u] << '\t' << g.user_entity[u] << '\n';
  for (size_t i = 0; i < g.item_entity.size(); ++i)
    out << "item\t" << g.item_names[i] << '\t' << g.item_entity[i] << '\n';
  return out.str();
}

void write_id_map(const UnifiedGraph& g, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << export_id_map(g);
}

IdMap load_id_map(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  IdMap map;
  std::string line;
  std::vector<std::string> fields;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (!split_tabs(line, fields)) continue;
    if (fields.size() != 3) parse_fail(path, line_no, "expected 3 fields");
    const int id = std::stoi(fields[2]);
    if (fields[0] == "entity") map.entities[fields[1]] = id;
    else if (fields[0] == "relation") map.relations[fields[1]] = id;
    else if (fields[0] == "user") map.users[fields[1]] = id;
    else if (fields[0] == "item") map.items[fields[1]] = id;
    else parse_fail(path, line_no, "unknown kind '" + fields[0] + "'");
  }
  return map;
}

uint64_t id_map_hash(const UnifiedGraph& g) { return fnv1a(export_id_map(g)); }

}  // namespace kcan
