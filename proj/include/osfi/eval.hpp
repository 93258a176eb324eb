#pragma once

#include <iosfwd>
#include <vector>

#include "osfi/embedding.hpp"
#include "osfi/matcher.hpp"

namespace osfi {

struct DIRPoint {
  double far = 0.0;
  double dir = 0.0;
  double tau = 0.0;  // smallest threshold realizing this FAR
};

struct DIRCurve {
  std::vector<DIRPoint> points;  // sorted by FAR ascending, one per FAR value
  double auc = 0.0;              // trapezoid over FAR in [0,1], linear axis
};

struct DIROperatingPoint {
  double dir = 0.0;
  double tau = 0.0;
};

// Threshold selection: tau is the smallest observed score whose empirical
// FAR = #(unknown >= tau)/|U| stays <= far_target (+inf when none does, i.e.
// reject everything). DIR counts known probes with score >= tau AND a
// correct rank-1 prediction. far_target >= 1 accepts everything (tau =
// -inf), making DIR the closed-set rank-1 accuracy.
DIROperatingPoint dir_at_far(const ScoreTable& table, double far_target);

// Sweeps every distinct score plus sentinels; for each achieved FAR keeps
// the best DIR (smallest threshold). The point (1, closed-set accuracy) is
// always present.
DIRCurve dir_curve(const ScoreTable& table);

double closed_set_accuracy(const ScoreTable& table);

struct ClusterMetrics {
  double inter_deg = 0.0;  // mean pairwise prototype angle
  double intra_deg = 0.0;  // mean feature-to-own-prototype angle
  double dbi = 0.0;        // Davies-Bouldin, Euclidean on the unit sphere
};

ClusterMetrics cluster_metrics(const std::vector<LabeledEmbedding>& features,
                               const PrototypeSet& protos);

struct HistogramPair {
  double lo = 0.0;
  double hi = 0.0;
  std::vector<double> known;    // per-bin mass, sums to 1
  std::vector<double> unknown;  // per-bin mass, sums to 1
};

// Per-group score histograms over the joint score range ([0,1] when minmax
// rescaling is on).
HistogramPair score_histograms(const ScoreTable& table, int bins, bool minmax);

// 1 - total-variation distance between the two binned densities.
double histogram_overlap(const HistogramPair& h);

// CSV emitters: "far,dir" and "bin_left,bin_right,density_known,density_unknown".
void write_dir_curve_csv(const DIRCurve& curve, std::ostream& out);
void write_histogram_csv(const HistogramPair& h, std::ostream& out);

}  // namespace osfi
