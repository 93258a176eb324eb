#pragma once

#include <optional>
#include <string>

#include "osfi/encoder.hpp"
#include "osfi/head.hpp"

#include "json.hpp"

namespace osfi {

struct Checkpoint {
  MLPEncoder encoder;
  std::optional<ClassifierWeights> head;
};

// Flat binary: magic "OSFI1", little-endian u32 record count, records of
// (kind u8, ndims u8, dims u32[], payload f64[]). Kinds: 1 linear (weights
// then biases), 2 batchnorm (gamma, beta, running mean, running var,
// momentum, eps), 3 adapter, 4 classifier. A JSON manifest is written next
// to the checkpoint at <path>.manifest.json.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt,
                     const nlohmann::json& meta);

Checkpoint load_checkpoint(const std::string& path);

}  // namespace osfi
