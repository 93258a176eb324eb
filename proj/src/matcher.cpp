#include "osfi/matcher.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <set>

#include "osfi/errors.hpp"
#include "osfi/geometry.hpp"

namespace osfi {

const char* to_string(MatcherKind kind) {
  return kind == MatcherKind::cosine ? "cos" : "nac";
}

MatcherKind matcher_kind_from_string(const std::string& name) {
  if (name == "cos" || name == "cosine") return MatcherKind::cosine;
  if (name == "nac") return MatcherKind::nac;
  throw ConfigError("unknown matcher '" + name + "' (expected cos or nac)");
}

namespace {

std::vector<double> all_cosines(const Vec& p, const PrototypeSet& protos) {
  std::vector<double> sims(protos.size());
  for (int j = 0; j < protos.size(); ++j) {
    sims[j] = cosine(p, protos.prototypes[j]);
  }
  return sims;
}

int argmax_index(const std::vector<double>& sims) {
  int best = 0;
  for (int j = 1; j < static_cast<int>(sims.size()); ++j) {
    if (sims[j] > sims[best]) best = j;  // strict: ties keep the lower index
  }
  return best;
}

}  // namespace

MatchResult score_cosine(const Vec& p, const PrototypeSet& protos) {
  if (protos.size() == 0) throw ProtocolError("score_cosine: empty gallery");
  const auto sims = all_cosines(p, protos);
  const int best = argmax_index(sims);
  return {protos.labels[best], sims[best], std::nullopt};
}

MatchResult score_nac(const Vec& p, const PrototypeSet& protos, int k) {
  if (protos.size() == 0) throw ProtocolError("score_nac: empty gallery");
  if (k == 1) {
    throw ConfigError(
        "NAC with k=1 degenerates; use the cosine matcher instead");
  }
  if (k < 1) throw ConfigError("score_nac: k must be >= 2");
  k = std::min(k, protos.size());

  const auto sims = all_cosines(p, protos);

  // Neighborhood in rank order (ties to the lower prototype index).
  std::vector<int> order(sims.size());
  for (size_t j = 0; j < order.size(); ++j) order[j] = static_cast<int>(j);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (sims[a] != sims[b]) return sims[a] > sims[b];
    return a < b;
  });

  double denom = 0.0;
  for (int r = 0; r < k; ++r) denom += std::exp(sims[order[r]]);
  const int best = order[0];
  return {protos.labels[best], std::exp(sims[best]) / denom, std::nullopt};
}

MatchResult decide(MatchResult result, double tau) {
  result.accepted = result.score >= tau;
  return result;
}

ScoreTable score_batch(const std::vector<LabeledEmbedding>& probes,
                       const PrototypeSet& protos, const MatcherConfig& cfg) {
  if (probes.empty()) throw ProtocolError("score_batch: empty probe list");
  const std::set<int> known_ids(protos.labels.begin(), protos.labels.end());

  ScoreTable table;
  table.rows.reserve(probes.size());
  for (size_t i = 0; i < probes.size(); ++i) {
    MatchResult r;
    try {
      r = cfg.kind == MatcherKind::cosine
              ? score_cosine(probes[i].vec, protos)
              : score_nac(probes[i].vec, protos, cfg.k);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::runtime_error& e) {
      throw ProtocolError("probe " + std::to_string(i) + ": " + e.what());
    }
    if (cfg.threshold) r = decide(r, *cfg.threshold);
    table.rows.push_back({static_cast<int>(i), probes[i].label,
                          r.predicted_label, r.score,
                          known_ids.count(probes[i].label) > 0});
  }
  return table;
}

void write_score_csv(const ScoreTable& table, std::ostream& out) {
  out << "probe_index,true_label,pred_label,score,is_known\n";
  char buf[64];
  for (const auto& row : table.rows) {
    std::snprintf(buf, sizeof(buf), "%.9g", row.score);
    out << row.probe_index << ',' << row.true_label << ',' << row.pred_label
        << ',' << buf << ',' << (row.is_known ? 1 : 0) << '\n';
  }
}

}  // namespace osfi
