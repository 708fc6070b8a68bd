#pragma once
// Run configuration: "key = value" text files, defaults, validation, and the
// fingerprint embedded in every output.

#include <cstdint>
#include <string>
#include <vector>

namespace kcan {

enum class Norm { kL1Squared, kL2Squared };
enum class Ablation { kFull, kNoLc, kNoGk, kNoBoth };

const char* to_string(Norm n);
const char* to_string(Ablation a);
Norm norm_from_string(const std::string& s);
Ablation ablation_from_string(const std::string& s);

struct TrainConfig {
  int embedding_dim = 16;             // F0
  std::vector<int> tower = {16, 8, 8};  // F1..F(K+1)
  int output_dim = 8;                 // Fo
  int hops = 2;                       // K
  int neighbor_samples = 20;          // M
  double learning_rate = 0.025;
  int epochs = 200;
  double lambda = 1e-3;
  double dropout = 0.1;
  int kg_batch = 1024;
  int target_batch = 256;
  Norm norm = Norm::kL1Squared;
  uint64_t seed = 7;
  Ablation ablation = Ablation::kFull;
  int threads = 0;  // 0 = hardware concurrency

  // synthetic dataset knobs (used by the synth command)
  int synth_users = 200;
  int synth_items = 100;
  int synth_attributes = 2;
  double synth_noise = 0.1;

  // set to a directory to get a parameter dump when training diverges
  std::string dump_dir;

  void validate() const;  // throws std::invalid_argument
  std::string serialize() const;
  uint64_t hash() const;

  int tower_dim(int layer) const { return tower[layer - 1]; }  // F_layer, layer in 1..K+1
  int final_dim() const { return tower.back(); }               // F_{K+1}
};

TrainConfig parse_config_text(const std::string& text);
TrainConfig load_config(const std::string& path);

}  // namespace kcan
