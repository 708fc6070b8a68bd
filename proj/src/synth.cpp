#include "kcan/synth.hpp"

#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <vector>

#include "kcan/rng.hpp"

namespace kcan {

SynthFiles synth_dataset(const TrainConfig& cfg) {
  const int users = cfg.synth_users;
  const int items = cfg.synth_items;
  const int attrs = cfg.synth_attributes;
  const double noise = cfg.synth_noise;
  if (users <= 0 || items <= 0 || attrs <= 0)
    throw std::invalid_argument("synthetic counts must be positive");
  if (attrs > items) throw std::invalid_argument("more attributes than items");
  if (noise < 0.0 || noise > 1.0) throw std::invalid_argument("noise must be in [0, 1]");

  SynthFiles files;
  const auto item_name = [](int i) { return "item_" + std::to_string(i); };

  std::vector<int> prefs(users);
  std::vector<char> item_hit(items, 0);
  for (int u = 0; u < users; ++u) {
    Rng rng = make_stream(cfg.seed, StreamTag::kSynth, static_cast<uint64_t>(u));
    const int pref = static_cast<int>(uniform01(rng) * attrs);
    prefs[u] = pref;
    const std::string user = "user_" + std::to_string(u);
    bool any = false;
    for (int i = 0; i < items; ++i) {
      const double p = i % attrs == pref ? 1.0 - noise : noise;
      if (uniform01(rng) < p) {
        files.interactions += user + "\t" + item_name(i) + "\n";
        item_hit[i] = 1;
        any = true;
      }
    }
    if (!any) {
      // an emptied user would break the interaction-graph invariant; hand
      // them one preferred-attribute item
      std::vector<int> preferred;
      for (int i = 0; i < items; ++i)
        if (i % attrs == pref) preferred.push_back(i);
      const int pick = preferred[static_cast<size_t>(uniform01(rng) * preferred.size())];
      files.interactions += user + "\t" + item_name(pick) + "\n";
      item_hit[pick] = 1;
    }
  }

  // An item nobody interacted with would be dropped by the loader and its
  // alignment row would then dangle; hand it one matching user (or any user
  // when nobody prefers its attribute).
  for (int i = 0; i < items; ++i) {
    if (item_hit[i]) continue;
    Rng rng = make_stream(cfg.seed, StreamTag::kSynth, static_cast<uint64_t>(users) + i);
    std::vector<int> matching;
    for (int u = 0; u < users; ++u)
      if (prefs[u] == i % attrs) matching.push_back(u);
    const int pick = matching.empty()
                         ? static_cast<int>(uniform01(rng) * users)
                         : matching[static_cast<size_t>(uniform01(rng) * matching.size())];
    files.interactions += "user_" + std::to_string(pick) + "\t" + item_name(i) + "\n";
  }

  for (int i = 0; i < items; ++i) {
    files.triples += item_name(i) + "\thas_attribute\tattr_" + std::to_string(i % attrs) + "\n";
    files.alignment += item_name(i) + "\t" + item_name(i) + "\n";
  }
  return files;
}

void write_synth(const TrainConfig& cfg, const std::string& dir) {
  const SynthFiles files = synth_dataset(cfg);
  std::filesystem::create_directories(dir);
  const auto put = [&dir](const char* name, const std::string& body) {
    std::ofstream out(std::filesystem::path(dir) / name, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + (std::filesystem::path(dir) / name).string());
    out << body;
  };
  put("interactions.tsv", files.interactions);
  put("triples.tsv", files.triples);
  put("alignment.tsv", files.alignment);
}

}  // namespace kcan
