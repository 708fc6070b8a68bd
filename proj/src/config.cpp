#include "kcan/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "kcan/rng.hpp"

namespace kcan {

const char* to_string(Norm n) { return n == Norm::kL1Squared ? "l1_sq" : "l2_sq"; }

const char* to_string(Ablation a) {
  switch (a) {
    case Ablation::kFull: return "full";
    case Ablation::kNoLc: return "no_lc";
    case Ablation::kNoGk: return "no_gk";
    case Ablation::kNoBoth: return "no_both";
  }
  return "full";
}

Norm norm_from_string(const std::string& s) {
  if (s == "l1_sq") return Norm::kL1Squared;
  if (s == "l2_sq") return Norm::kL2Squared;
  throw std::invalid_argument("unknown norm '" + s + "'");
}

Ablation ablation_from_string(const std::string& s) {
  if (s == "full") return Ablation::kFull;
  if (s == "no_lc") return Ablation::kNoLc;
  if (s == "no_gk") return Ablation::kNoGk;
  if (s == "no_both") return Ablation::kNoBoth;
  throw std::invalid_argument("unknown ablation '" + s + "'");
}

void TrainConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(what);
  };
  require(embedding_dim > 0, "embedding_dim must be positive");
  require(output_dim > 0, "output_dim must be positive");
  require(hops >= 1, "hops must be >= 1");
  require(static_cast<int>(tower.size()) == hops + 1, "tower length must be hops + 1");
  for (int d : tower) require(d > 0, "tower dims must be positive");
  require(neighbor_samples >= 0, "neighbor_samples must be >= 0");
  require(learning_rate > 0, "learning_rate must be positive");
  require(epochs >= 0, "epochs must be >= 0");
  require(lambda >= 0, "lambda must be >= 0");
  require(dropout >= 0 && dropout < 1, "dropout must be in [0, 1)");
  require(kg_batch > 0, "kg_batch must be positive");
  require(target_batch > 0, "target_batch must be positive");
  require(synth_users > 0 && synth_items > 0 && synth_attributes > 0,
          "synthetic counts must be positive");
  require(synth_noise >= 0 && synth_noise <= 1, "synth_noise must be in [0, 1]");
  // Ablations that feed raw embeddings into downstream layers need matching widths.
  if (ablation == Ablation::kNoGk || ablation == Ablation::kNoBoth)
    require(tower[0] == embedding_dim,
            "tower[0] must equal embedding_dim for no_gk / no_both ablations");
}

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string TrainConfig::serialize() const {
  std::ostringstream out;
  out << "embedding_dim = " << embedding_dim << '\n';
  out << "tower = ";
  for (size_t i = 0; i < tower.size(); ++i) out << (i ? "," : "") << tower[i];
  out << '\n';
  out << "output_dim = " << output_dim << '\n';
  out << "hops = " << hops << '\n';
  out << "neighbor_samples = " << neighbor_samples << '\n';
  out << "learning_rate = " << fmt_double(learning_rate) << '\n';
  out << "epochs = " << epochs << '\n';
  out << "lambda = " << fmt_double(lambda) << '\n';
  out << "dropout = " << fmt_double(dropout) << '\n';
  out << "kg_batch = " << kg_batch << '\n';
  out << "target_batch = " << target_batch << '\n';
  out << "norm = " << to_string(norm) << '\n';
  out << "seed = " << seed << '\n';
  out << "ablation = " << to_string(ablation) << '\n';
  out << "synth_users = " << synth_users << '\n';
  out << "synth_items = " << synth_items << '\n';
  out << "synth_attributes = " << synth_attributes << '\n';
  out << "synth_noise = " << fmt_double(synth_noise) << '\n';
  return out.str();
}

uint64_t TrainConfig::hash() const { return fnv1a(serialize()); }

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(std::stoi(trim(tok)));
  return out;
}

}  // namespace

TrainConfig parse_config_text(const std::string& text) {
  TrainConfig cfg;
  std::istringstream in(text);
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const size_t hash_pos = line.find('#');
    if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));

    if (key == "embedding_dim") cfg.embedding_dim = std::stoi(val);
    else if (key == "tower") cfg.tower = parse_int_list(val);
    else if (key == "output_dim") cfg.output_dim = std::stoi(val);
    else if (key == "hops") cfg.hops = std::stoi(val);
    else if (key == "neighbor_samples") cfg.neighbor_samples = std::stoi(val);
    else if (key == "learning_rate") cfg.learning_rate = std::stod(val);
    else if (key == "epochs") cfg.epochs = std::stoi(val);
    else if (key == "lambda") cfg.lambda = std::stod(val);
    else if (key == "dropout") cfg.dropout = std::stod(val);
    else if (key == "kg_batch") cfg.kg_batch = std::stoi(val);
    else if (key == "target_batch") cfg.target_batch = std::stoi(val);
    else if (key == "norm") cfg.norm = norm_from_string(val);
    else if (key == "seed") cfg.seed = std::stoull(val);
    else if (key == "ablation") cfg.ablation = ablation_from_string(val);
    else if (key == "threads") cfg.threads = std::stoi(val);
    else if (key == "synth_users") cfg.synth_users = std::stoi(val);
    else if (key == "synth_items") cfg.synth_items = std::stoi(val);
    else if (key == "synth_attributes") cfg.synth_attributes = std::stoi(val);
    else if (key == "synth_noise") cfg.synth_noise = std::stod(val);
    else throw std::invalid_argument("unknown config key '" + key + "'");
  }
  cfg.validate();
  return cfg;
}

TrainConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

}  // namespace kcan
