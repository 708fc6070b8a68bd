#pragma once
// Planted-preference dataset generator. Item n carries attribute n mod A in
// the side knowledge graph; each user prefers one attribute and interacts
// with matching items with probability 1 - noise, non-matching with
// probability noise. A knowledge-aware model can exploit the attribute
// triples; the Bayes-optimal attribute scorer has a closed-form AUC.

#include <string>

#include "kcan/config.hpp"

namespace kcan {

struct SynthFiles {
  std::string interactions;  // "user \t item" lines
  std::string triples;       // "item \t has_attribute \t attr" lines
  std::string alignment;     // "item \t item" lines (item entity reuses the raw id)
};

// Deterministic under (seed, counts, noise); every user and every item ends
// with >= 1 interaction (a preferred-attribute pairing is forced when the
// random draws leave one empty), so the emitted files always load cleanly.
SynthFiles synth_dataset(const TrainConfig& cfg);

// Writes interactions.tsv / triples.tsv / alignment.tsv under dir.
void write_synth(const TrainConfig& cfg, const std::string& dir);

}  // namespace kcan
