#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "osfi/embedding.hpp"

namespace osfi {

struct SyntheticConfig {
  int num_pretrain_ids = 200;
  int pretrain_samples_per_id = 40;
  int num_eval_ids = 100;  // split evenly into known/unknown
  int eval_samples_per_id = 12;
  int input_dim = 64;
  double sigma_within = 1.0;   // per-coordinate spread inside an identity
  double center_scale = 1.0;   // per-coordinate spread of identity centers
  double probe_noise = 1.0;    // multiplier on sigma_within for eval samples
                               // past the first 5 of each identity
  uint64_t seed = 1;
};

// Raw-input samples (dim = input_dim) or encoder embeddings (dim = d),
// depending on provenance.
struct RawDataset {
  int dim = 0;
  bool raw = false;  // true for encoder inputs, false for embeddings
  std::vector<LabeledEmbedding> samples;
};

struct SyntheticData {
  RawDataset pretrain;
  RawDataset eval;
};

// Identity centers from Gaussian(0, center_scale^2 I); samples are center +
// Gaussian(0, sigma^2 I). Pretrain ids are 0..P-1, eval ids P..P+E-1, so the
// two identity sets never overlap. Deterministic per seed.
SyntheticData generate_synthetic(const SyntheticConfig& cfg);

struct OSFISplit {
  std::vector<LabeledEmbedding> gallery;        // m per known identity
  std::vector<LabeledEmbedding> known_probes;   // same identities, other samples
  std::vector<LabeledEmbedding> unknown_probes; // disjoint identities
  int m = 3;
  int num_known_ids = 0;  // known ids are relabeled 0..C-1; unknown C..
};

// Seeded half split of the identities into known/unknown; per known
// identity, m seeded-random samples go to the gallery and the rest become
// known probes. All unknown-identity samples become unknown probes. Known
// identities are relabeled 0..C-1 (ascending original id), unknown ones
// C..2C-1.
OSFISplit make_split(const RawDataset& eval_set, int m, uint64_t seed);

// Text format: optional '# ' comments, 'kind=raw' for raw datasets, a
// 'dim=<d>' header, then one 'label,v1,...,vd' row per sample.
void save_dataset(const RawDataset& data, const std::string& path,
                  const std::vector<std::string>& comments = {});

RawDataset load_dataset(const std::string& path, bool normalize = false);

}  // namespace osfi
