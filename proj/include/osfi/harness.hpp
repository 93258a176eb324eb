#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "osfi/encoder.hpp"
#include "osfi/head.hpp"
#include "osfi/matcher.hpp"
#include "osfi/protocol.hpp"
#include "osfi/train.hpp"

namespace osfi {

// Desk-scale encoder shape used by the CLI commands.
struct ArchitectureConfig {
  int hidden_width = 128;
  int num_blocks = 4;
  int embed_dim = 32;
};

// FNV-1a 64 over the file bytes, rendered as "fnv1a:<hex>".
std::string hash_file(const std::string& path);

nlohmann::json run_synth(const SyntheticConfig& cfg,
                         const std::string& out_dir);

struct PretrainOptions {
  std::string data_path;
  std::string out_dir;
  ArchitectureConfig arch;
  TrainConfig train{/*epochs=*/40, /*batch_size=*/128, /*learning_rate=*/1e-3,
                    /*input_jitter=*/0.0, /*seed=*/1};
  CosFaceConfig loss;
  double target_accuracy = 0.99;
};

nlohmann::json run_pretrain(const PretrainOptions& opts);

enum class InitScheme { random, linprobe, wi };
const char* to_string(InitScheme s);
InitScheme init_scheme_from_string(const std::string& name);

// FinetuneMode plus the no-op baseline.
struct ModeArg {
  bool none = false;
  FinetuneMode mode = FinetuneMode::bn_only;
};
ModeArg mode_arg_from_string(const std::string& name);
std::string to_string(const ModeArg& m);

struct FinetuneOptions {
  std::string checkpoint_path;
  std::string data_path;  // raw eval dataset
  std::string out_dir;
  InitScheme init = InitScheme::wi;
  ModeArg mode;
  int m = 3;
  uint64_t split_seed = 7;
  TrainConfig train{/*epochs=*/20, /*batch_size=*/128, /*learning_rate=*/0.0,
                    /*input_jitter=*/0.0, /*seed=*/1};
  CosFaceConfig loss;
};

nlohmann::json run_finetune(const FinetuneOptions& opts);

struct EvalOptions {
  std::string checkpoint_path;  // used with a raw eval dataset
  std::string data_path;        // raw eval dataset, or
  std::string embeddings_path;  // pre-encoded embeddings (no encoder pass)
  std::string out_dir;
  MatcherConfig matcher;
  int m = 3;
  uint64_t split_seed = 7;
  std::vector<double> far_targets{0.001, 0.01, 0.1, 1.0};
  int histogram_bins = 64;
  bool histogram_minmax = false;
};

nlohmann::json run_eval(const EvalOptions& opts);

struct SweepKOptions {
  EvalOptions eval;  // matcher field ignored; grid drives the matcher
  std::vector<int> grid{2, 4, 8, 16, 32, 128, 256, 512, 1024};
};

nlohmann::json run_sweep_k(const SweepKOptions& opts);

struct GallerySweepOptions {
  std::string checkpoint_path;  // pretrained encoder
  std::string data_path;        // raw eval dataset
  std::string out_dir;
  std::vector<int> m_values{1, 2, 3, 4, 5};
  uint64_t split_seed = 7;
  TrainConfig train{/*epochs=*/20, /*batch_size=*/128, /*learning_rate=*/0.0,
                    /*input_jitter=*/0.0, /*seed=*/1};
  CosFaceConfig loss;
  int nac_k = 16;
};

nlohmann::json run_gallery_sweep(const GallerySweepOptions& opts);

}  // namespace osfi
