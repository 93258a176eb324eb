#include "osfi/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "osfi/errors.hpp"

namespace osfi {

namespace {
constexpr double kPi = 3.141592653589793238462643383279502884;
constexpr double kDegenerateNorm = 1e-9;
}  // namespace

double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(const Vec& v) { return std::sqrt(dot(v, v)); }

bool is_unit_norm(const Vec& v, double tol) {
  return std::fabs(norm2(v) - 1.0) <= tol;
}

Vec l2_normalize(const Vec& v) {
  const double n = norm2(v);
  if (!(n > kDegenerateNorm)) {
    throw DegenerateInputError("cannot normalize a zero-norm vector");
  }
  Vec out(v.size());
  for (size_t i = 0; i < v.size(); ++i) out[i] = v[i] / n;
  return out;
}

double cosine(const Vec& p, const Vec& q) {
  if (p.size() != q.size()) {
    throw ProtocolError("cosine: dimension mismatch");
  }
  const double np = norm2(p);
  const double nq = norm2(q);
  if (!(np > kDegenerateNorm) || !(nq > kDegenerateNorm)) {
    throw DegenerateInputError("cosine of a zero-norm vector");
  }
  const double c = dot(p, q) / (np * nq);
  return std::clamp(c, -1.0, 1.0);
}

double angle_deg(double cosine_value) {
  return std::acos(std::clamp(cosine_value, -1.0, 1.0)) * 180.0 / kPi;
}

PrototypeSet build_prototypes(const std::vector<LabeledEmbedding>& gallery) {
  if (gallery.empty()) {
    throw ProtocolError("build_prototypes: empty gallery");
  }
  const size_t d = gallery.front().vec.size();

  // Sum of normalized vectors per identity; map keeps labels sorted.
  std::map<int, std::pair<Vec, int>> sums;
  for (const auto& e : gallery) {
    if (e.vec.size() != d) {
      throw ProtocolError("build_prototypes: inconsistent dimensions");
    }
    const Vec u = l2_normalize(e.vec);
    auto [it, fresh] = sums.try_emplace(e.label, Vec(d, 0.0), 0);
    for (size_t i = 0; i < d; ++i) it->second.first[i] += u[i];
    it->second.second += 1;
  }

  PrototypeSet ps;
  ps.prototypes.reserve(sums.size());
  ps.labels.reserve(sums.size());
  for (auto& [label, entry] : sums) {
    auto& [sum, count] = entry;
    Vec mean(d);
    for (size_t i = 0; i < d; ++i) mean[i] = sum[i] / count;
    if (!(norm2(mean) > kDegenerateNorm)) {
      throw DegenerateInputError("degenerate class mean for identity " +
                                 std::to_string(label));
    }
    ps.prototypes.push_back(l2_normalize(mean));
    ps.labels.push_back(label);
  }
  return ps;
}

std::vector<int> top_k_neighbors(const Vec& p, const PrototypeSet& protos,
                                 int k, bool* clamped) {
  const int c = protos.size();
  if (c == 0) throw ProtocolError("top_k_neighbors: empty prototype set");
  if (k < 1) throw ConfigError("top_k_neighbors: k must be >= 1");
  if (clamped) *clamped = k > c;
  k = std::min(k, c);

  std::vector<std::pair<double, int>> sims(c);
  for (int j = 0; j < c; ++j) sims[j] = {cosine(p, protos.prototypes[j]), j};
  std::sort(sims.begin(), sims.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });

  std::vector<int> idx(k);
  for (int j = 0; j < k; ++j) idx[j] = sims[j].second;
  return idx;
}

NeighborAngleProfile neighbor_angle_profile(
    const std::vector<LabeledEmbedding>& probes, const PrototypeSet& protos) {
  if (probes.empty()) {
    throw ProtocolError("neighbor_angle_profile: empty probe set");
  }
  const int c = protos.size();
  const int deepest = std::min(16, c);

  NeighborAngleProfile prof;
  prof.max_rank = deepest;
  prof.truncated = c < 16;

  double sum1 = 0.0, sum2 = 0.0, sum2to16 = 0.0;
  long count2to16 = 0;
  for (const auto& probe : probes) {
    std::vector<double> sims(c);
    for (int j = 0; j < c; ++j) {
      sims[j] = cosine(probe.vec, protos.prototypes[j]);
    }
    std::sort(sims.begin(), sims.end(), std::greater<double>());
    sum1 += angle_deg(sims[0]);
    if (c >= 2) sum2 += angle_deg(sims[1]);
    for (int r = 1; r < deepest; ++r) {
      sum2to16 += angle_deg(sims[r]);
      ++count2to16;
    }
  }

  const double n = static_cast<double>(probes.size());
  prof.mean_top1_deg = sum1 / n;
  prof.mean_top2_deg = c >= 2 ? sum2 / n : std::nan("");
  prof.mean_top2to16_deg =
      count2to16 > 0 ? sum2to16 / count2to16 : std::nan("");
  return prof;
}

}  // namespace osfi
