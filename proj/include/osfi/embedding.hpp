#pragma once

#include <vector>

namespace osfi {

// A d-dimensional feature vector. All vectors within one dataset share d.
using Vec = std::vector<double>;

struct LabeledEmbedding {
  Vec vec;
  int label = 0;
};

// One unit-norm prototype per enrolled identity. labels are distinct and
// stored in ascending order; prototypes[i] belongs to labels[i].
struct PrototypeSet {
  std::vector<Vec> prototypes;
  std::vector<int> labels;

  int size() const { return static_cast<int>(prototypes.size()); }
  int dim() const {
    return prototypes.empty() ? 0 : static_cast<int>(prototypes[0].size());
  }
};

}  // namespace osfi
