#include "osfi/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <ostream>

#include "osfi/errors.hpp"
#include "osfi/geometry.hpp"

namespace osfi {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct SplitScores {
  std::vector<double> unknown;                    // sorted ascending
  std::vector<std::pair<double, bool>> known;     // (score, correct), ascending
  std::vector<long> known_correct_suffix;         // correct count in [i, end)
};

SplitScores split_scores(const ScoreTable& table) {
  SplitScores s;
  for (const auto& row : table.rows) {
    if (!std::isfinite(row.score)) {
      throw ProtocolError("score table contains a non-finite score");
    }
    if (row.is_known) {
      s.known.emplace_back(row.score, row.pred_label == row.true_label);
    } else {
      s.unknown.push_back(row.score);
    }
  }
  std::sort(s.unknown.begin(), s.unknown.end());
  std::sort(s.known.begin(), s.known.end());
  s.known_correct_suffix.assign(s.known.size() + 1, 0);
  for (size_t i = s.known.size(); i-- > 0;) {
    s.known_correct_suffix[i] =
        s.known_correct_suffix[i + 1] + (s.known[i].second ? 1 : 0);
  }
  return s;
}

// #unknown with score >= tau
long count_unknown_at(const SplitScores& s, double tau) {
  const auto it = std::lower_bound(s.unknown.begin(), s.unknown.end(), tau);
  return static_cast<long>(s.unknown.end() - it);
}

// #known accepted and correct at tau
long count_known_correct_at(const SplitScores& s, double tau) {
  const auto it = std::lower_bound(
      s.known.begin(), s.known.end(), tau,
      [](const std::pair<double, bool>& a, double t) { return a.first < t; });
  return s.known_correct_suffix[it - s.known.begin()];
}

}  // namespace

double closed_set_accuracy(const ScoreTable& table) {
  long known = 0, correct = 0;
  for (const auto& row : table.rows) {
    if (row.is_known) {
      ++known;
      if (row.pred_label == row.true_label) ++correct;
    }
  }
  if (known == 0) throw ProtocolError("score table has no known probes");
  return static_cast<double>(correct) / known;
}

DIROperatingPoint dir_at_far(const ScoreTable& table, double far_target) {
  const SplitScores s = split_scores(table);
  if (s.known.empty()) throw ProtocolError("dir_at_far: no known probes");
  const double num_known = static_cast<double>(s.known.size());

  if (far_target >= 1.0) {
    return {s.known_correct_suffix[0] / num_known, -kInf};
  }
  if (s.unknown.empty()) {
    throw ProtocolError("dir_at_far: no unknown probes but far_target < 1");
  }
  const double num_unknown = static_cast<double>(s.unknown.size());

  // Candidate thresholds ascending: every distinct score, then +inf.
  std::vector<double> candidates;
  candidates.reserve(s.known.size() + s.unknown.size());
  for (const auto& [score, _] : s.known) candidates.push_back(score);
  candidates.insert(candidates.end(), s.unknown.begin(), s.unknown.end());
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()),
                   candidates.end());

  for (double tau : candidates) {
    const double far = count_unknown_at(s, tau) / num_unknown;
    if (far <= far_target) {
      return {count_known_correct_at(s, tau) / num_known, tau};
    }
  }
  return {0.0, kInf};  // nothing admissible: reject all probes
}

DIRCurve dir_curve(const ScoreTable& table) {
  const SplitScores s = split_scores(table);
  if (s.known.empty()) throw ProtocolError("dir_curve: no known probes");
  if (s.unknown.empty()) throw ProtocolError("dir_curve: no unknown probes");
  const double num_known = static_cast<double>(s.known.size());
  const double num_unknown = static_cast<double>(s.unknown.size());

  std::vector<double> candidates;
  candidates.reserve(s.known.size() + s.unknown.size() + 2);
  candidates.push_back(-kInf);
  for (const auto& [score, _] : s.known) candidates.push_back(score);
  candidates.insert(candidates.end(), s.unknown.begin(), s.unknown.end());
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()),
                   candidates.end());
  candidates.push_back(kInf);

  // Ascending thresholds: the first time a FAR value appears is its
  // smallest threshold, hence its best DIR.
  DIRCurve curve;
  double last_far = -1.0;
  for (double tau : candidates) {
    const double far = count_unknown_at(s, tau) / num_unknown;
    if (far == last_far) continue;
    last_far = far;
    curve.points.push_back(
        {far, count_known_correct_at(s, tau) / num_known, tau});
  }
  std::reverse(curve.points.begin(), curve.points.end());

  double auc = 0.0;
  for (size_t i = 1; i < curve.points.size(); ++i) {
    const auto& a = curve.points[i - 1];
    const auto& b = curve.points[i];
    auc += (b.far - a.far) * (a.dir + b.dir) * 0.5;
  }
  curve.auc = auc;
  return curve;
}

ClusterMetrics cluster_metrics(const std::vector<LabeledEmbedding>& features,
                               const PrototypeSet& protos) {
  const int C = protos.size();
  if (C < 2) {
    throw ProtocolError(
        "cluster_metrics: need >= 2 prototypes for inter-class metrics");
  }
  if (features.empty()) throw ProtocolError("cluster_metrics: no features");

  std::map<int, int> proto_of_label;
  for (int c = 0; c < C; ++c) proto_of_label[protos.labels[c]] = c;

  // Intra: angle between each (normalized) feature and its own prototype.
  // S_c: mean Euclidean distance to the prototype, for DBI.
  std::vector<double> scatter(C, 0.0);
  std::vector<long> counts(C, 0);
  double intra_sum = 0.0;
  for (const auto& e : features) {
    const auto it = proto_of_label.find(e.label);
    if (it == proto_of_label.end()) {
      throw ProtocolError("cluster_metrics: feature label " +
                          std::to_string(e.label) + " has no prototype");
    }
    const int c = it->second;
    const Vec u = l2_normalize(e.vec);
    const double cosv = std::clamp(dot(u, protos.prototypes[c]), -1.0, 1.0);
    intra_sum += angle_deg(cosv);
    double dist2 = 0.0;
    for (size_t i = 0; i < u.size(); ++i) {
      const double diff = u[i] - protos.prototypes[c][i];
      dist2 += diff * diff;
    }
    scatter[c] += std::sqrt(dist2);
    ++counts[c];
  }
  for (int c = 0; c < C; ++c) {
    if (counts[c] > 0) scatter[c] /= counts[c];
  }

  double inter_sum = 0.0;
  long pairs = 0;
  for (int i = 0; i < C; ++i) {
    for (int j = i + 1; j < C; ++j) {
      inter_sum += angle_deg(std::clamp(
          dot(protos.prototypes[i], protos.prototypes[j]), -1.0, 1.0));
      ++pairs;
    }
  }

  double dbi = 0.0;
  for (int i = 0; i < C; ++i) {
    double worst = 0.0;
    for (int j = 0; j < C; ++j) {
      if (i == j) continue;
      double dist2 = 0.0;
      for (int k = 0; k < protos.dim(); ++k) {
        const double diff = protos.prototypes[i][k] - protos.prototypes[j][k];
        dist2 += diff * diff;
      }
      const double separation = std::sqrt(dist2);
      if (separation <= 0.0) {
        throw ProtocolError("cluster_metrics: coincident prototypes");
      }
      worst = std::max(worst, (scatter[i] + scatter[j]) / separation);
    }
    dbi += worst;
  }

  ClusterMetrics m;
  m.intra_deg = intra_sum / static_cast<double>(features.size());
  m.inter_deg = inter_sum / static_cast<double>(pairs);
  m.dbi = dbi / C;
  return m;
}

HistogramPair score_histograms(const ScoreTable& table, int bins,
                               bool minmax) {
  if (bins < 2) throw ConfigError("score_histograms: bins must be >= 2");

  std::vector<double> known, unknown;
  double lo = kInf, hi = -kInf;
  for (const auto& row : table.rows) {
    (row.is_known ? known : unknown).push_back(row.score);
    lo = std::min(lo, row.score);
    hi = std::max(hi, row.score);
  }
  if (known.empty() && unknown.empty()) {
    throw ProtocolError("score_histograms: empty table");
  }

  const double span = hi - lo;
  auto rescale = [&](double s) { return span > 0.0 ? (s - lo) / span : 0.0; };

  HistogramPair h;
  h.lo = minmax ? 0.0 : lo;
  h.hi = minmax ? 1.0 : hi;
  h.known.assign(bins, 0.0);
  h.unknown.assign(bins, 0.0);

  const double width = h.hi - h.lo;
  auto bin_of = [&](double s) {
    if (minmax) s = rescale(s);
    if (width <= 0.0) return 0;  // all scores identical: one full bin
    int b = static_cast<int>((s - h.lo) / width * bins);
    return std::clamp(b, 0, bins - 1);
  };
  for (double s : known) h.known[bin_of(s)] += 1.0;
  for (double s : unknown) h.unknown[bin_of(s)] += 1.0;
  if (!known.empty()) {
    for (auto& v : h.known) v /= static_cast<double>(known.size());
  }
  if (!unknown.empty()) {
    for (auto& v : h.unknown) v /= static_cast<double>(unknown.size());
  }
  return h;
}

double histogram_overlap(const HistogramPair& h) {
  double tv = 0.0;
  for (size_t i = 0; i < h.known.size(); ++i) {
    tv += std::fabs(h.known[i] - h.unknown[i]);
  }
  return 1.0 - 0.5 * tv;
}

void write_dir_curve_csv(const DIRCurve& curve, std::ostream& out) {
  out << "far,dir\n";
  char buf[80];
  for (const auto& p : curve.points) {
    std::snprintf(buf, sizeof(buf), "%.9g,%.9g", p.far, p.dir);
    out << buf << '\n';
  }
}

void write_histogram_csv(const HistogramPair& h, std::ostream& out) {
  out << "bin_left,bin_right,density_known,density_unknown\n";
  const int bins = static_cast<int>(h.known.size());
  const double width = (h.hi - h.lo) / bins;
  char buf[160];
  for (int b = 0; b < bins; ++b) {
    std::snprintf(buf, sizeof(buf), "%.9g,%.9g,%.9g,%.9g", h.lo + b * width,
                  h.lo + (b + 1) * width, h.known[b], h.unknown[b]);
    out << buf << '\n';
  }
}

}  // namespace osfi
