#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "osfi/embedding.hpp"

namespace osfi {

enum class MatcherKind { cosine, nac };

const char* to_string(MatcherKind kind);
MatcherKind matcher_kind_from_string(const std::string& name);

struct MatcherConfig {
  MatcherKind kind = MatcherKind::cosine;
  int k = 16;  // NAC neighborhood size
  std::optional<double> threshold;
};

struct MatchResult {
  int predicted_label = -1;      // always the cosine top-1 identity
  double score = 0.0;            // cosine: [-1,1]; NAC: (0,1]
  std::optional<bool> accepted;  // set once a threshold has been applied
};

// score = max_j cos(p, g_j), label = argmax identity.
MatchResult score_cosine(const Vec& p, const PrototypeSet& protos);

// Softmax of cosine similarities restricted to the k nearest prototypes;
// the reported score is the softmax value at the cosine top-1 (softmax
// preserves the argmax, so that is also the max over the neighborhood).
// k == 1 is a configuration error: use the cosine matcher instead.
// k > C clamps to C.
MatchResult score_nac(const Vec& p, const PrototypeSet& protos, int k);

// Inclusive acceptance: accepted = (score >= tau).
MatchResult decide(MatchResult result, double tau);

struct ScoreRow {
  int probe_index = 0;
  int true_label = 0;
  int pred_label = 0;
  double score = 0.0;
  bool is_known = false;
};

struct ScoreTable {
  std::vector<ScoreRow> rows;
};

// One row per probe, input order preserved. A probe is known when its label
// has a prototype. Per-probe failures are rethrown with the index attached.
ScoreTable score_batch(const std::vector<LabeledEmbedding>& probes,
                       const PrototypeSet& protos, const MatcherConfig& cfg);

// CSV: header probe_index,true_label,pred_label,score,is_known; scores with
// 9 significant digits.
void write_score_csv(const ScoreTable& table, std::ostream& out);

}  // namespace osfi
