#pragma once

#include <vector>

#include "osfi/embedding.hpp"

namespace osfi {

double dot(const Vec& a, const Vec& b);
double norm2(const Vec& v);
bool is_unit_norm(const Vec& v, double tol = 1e-6);

// Scales v to unit length. Throws DegenerateInputError on a ~zero vector.
Vec l2_normalize(const Vec& v);

// Cosine similarity in [-1, 1]; clamped against rounding spill.
double cosine(const Vec& p, const Vec& q);

double angle_deg(double cosine_value);

// One prototype per identity: the re-normalized mean of that identity's
// normalized vectors. Prototypes are ordered by ascending label.
PrototypeSet build_prototypes(const std::vector<LabeledEmbedding>& gallery);

// Indices of the k prototypes with the largest cosine to p, descending.
// Exact ties resolve to the smaller prototype index. k > C clamps to C and
// sets *clamped when provided.
std::vector<int> top_k_neighbors(const Vec& p, const PrototypeSet& protos,
                                 int k, bool* clamped = nullptr);

// Mean probe-to-prototype angles at neighbor ranks 1, 2, and 2..16.
struct NeighborAngleProfile {
  double mean_top1_deg = 0.0;
  double mean_top2_deg = 0.0;
  double mean_top2to16_deg = 0.0;
  int max_rank = 0;         // deepest rank that entered the 2..16 column
  bool truncated = false;   // true when fewer than 16 prototypes exist
};

NeighborAngleProfile neighbor_angle_profile(
    const std::vector<LabeledEmbedding>& probes, const PrototypeSet& protos);

}  // namespace osfi
