#include "osfi/harness.hpp"

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "osfi/checkpoint.hpp"
#include "osfi/errors.hpp"
#include "osfi/eval.hpp"
#include "osfi/geometry.hpp"
#include "osfi/rng.hpp"

namespace osfi {

namespace fs = std::filesystem;
using nlohmann::json;

const char* to_string(InitScheme s) {
  switch (s) {
    case InitScheme::random: return "random";
    case InitScheme::linprobe: return "linprobe";
    case InitScheme::wi: return "wi";
  }
  return "?";
}

InitScheme init_scheme_from_string(const std::string& name) {
  if (name == "random") return InitScheme::random;
  if (name == "linprobe" || name == "linear_probing") return InitScheme::linprobe;
  if (name == "wi" || name == "imprint") return InitScheme::wi;
  throw ConfigError("unknown init scheme '" + name +
                    "' (expected random, linprobe, or wi)");
}

ModeArg mode_arg_from_string(const std::string& name) {
  ModeArg m;
  if (name == "none") {
    m.none = true;
    return m;
  }
  m.mode = finetune_mode_from_string(name);
  return m;
}

std::string to_string(const ModeArg& m) {
  return m.none ? "none" : to_string(m.mode);
}

std::string hash_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ProtocolError("cannot hash missing file '" + path + "'");
  uint64_t h = 0xcbf29ce484222325ull;
  char buf[1 << 14];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    const std::streamsize n = in.gcount();
    for (std::streamsize i = 0; i < n; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ull;
    }
    if (!in) break;
  }
  char out[32];
  std::snprintf(out, sizeof(out), "fnv1a:%016llx",
                static_cast<unsigned long long>(h));
  return out;
}

namespace {

void ensure_out_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ProtocolError("cannot create output directory '" + dir + "'");
}

void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ProtocolError("cannot open '" + path + "' for writing");
  out << content;
  if (!out) throw ProtocolError("write failed for '" + path + "'");
}

void write_report(const std::string& path, const json& report) {
  write_text(path, report.dump(2) + "\n");
}

// manifest.json indexes every artifact the command wrote.
void write_manifest(const std::string& out_dir, const std::string& command,
                    const std::vector<std::string>& files) {
  json manifest;
  manifest["command"] = command;
  manifest["files"] = json::object();
  for (const auto& f : files) {
    manifest["files"][f] = hash_file((fs::path(out_dir) / f).string());
  }
  write_report((fs::path(out_dir) / "manifest.json").string(), manifest);
}

std::string far_key(double far) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", far);
  return buf;
}

json train_config_json(const TrainConfig& cfg) {
  return json{{"epochs", cfg.epochs},
              {"batch_size", cfg.batch_size},
              {"learning_rate", cfg.learning_rate},
              {"input_jitter", cfg.input_jitter},
              {"seed", cfg.seed}};
}

json cosface_json(const CosFaceConfig& cfg) {
  return json{{"scale", cfg.scale}, {"margin", cfg.margin}};
}

json param_count_json(const ParamCount& pc) {
  json layers = json::object();
  for (const auto& [name, n] : pc.trainable_by_layer) layers[name] = n;
  return json{{"total", pc.total},
              {"trainable", pc.trainable},
              {"trainable_by_layer", layers}};
}

// Relabels to a contiguous 0..C-1 range (ascending original id) as the
// classifier requires; returns the remapped samples.
std::vector<LabeledEmbedding> contiguous_labels(
    const std::vector<LabeledEmbedding>& samples, int* num_classes) {
  std::vector<int> ids;
  for (const auto& e : samples) ids.push_back(e.label);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  std::vector<LabeledEmbedding> out = samples;
  for (auto& e : out) {
    e.label = static_cast<int>(
        std::lower_bound(ids.begin(), ids.end(), e.label) - ids.begin());
  }
  *num_classes = static_cast<int>(ids.size());
  return out;
}

struct EmbeddedSplit {
  std::vector<LabeledEmbedding> gallery;
  std::vector<LabeledEmbedding> known;
  std::vector<LabeledEmbedding> unknown;
  int num_known_ids = 0;
  int m = 0;
};

EmbeddedSplit embed_split(const MLPEncoder& enc, const OSFISplit& split) {
  EmbeddedSplit es;
  es.gallery = embed_normalized(enc, split.gallery);
  es.known = embed_normalized(enc, split.known_probes);
  es.unknown = embed_normalized(enc, split.unknown_probes);
  es.num_known_ids = split.num_known_ids;
  es.m = split.m;
  return es;
}

// Core of `eval` and both sweeps: score the probes and derive every metric.
struct EvalOutcome {
  ScoreTable table;
  DIRCurve curve;
  ClusterMetrics cluster;
  HistogramPair histogram;
  json results;  // auc, dir_at_far, intra/inter/dbi, angles, overlap
};

EvalOutcome evaluate_split(const EmbeddedSplit& es, const MatcherConfig& cfg,
                           const std::vector<double>& far_targets, int bins,
                           bool minmax) {
  const PrototypeSet protos = build_prototypes(es.gallery);

  std::vector<LabeledEmbedding> probes = es.known;
  probes.insert(probes.end(), es.unknown.begin(), es.unknown.end());

  EvalOutcome out;
  out.table = score_batch(probes, protos, cfg);
  out.curve = dir_curve(out.table);
  out.cluster = cluster_metrics(es.gallery, protos);
  out.histogram = score_histograms(out.table, bins, minmax);

  json dir_map = json::object();
  json tau_map = json::object();
  for (double far : far_targets) {
    const auto op = dir_at_far(out.table, far);
    dir_map[far_key(far)] = op.dir;
    tau_map[far_key(far)] = std::isfinite(op.tau) ? json(op.tau) : json();
  }

  const auto known_profile = neighbor_angle_profile(es.known, protos);
  const auto unknown_profile = neighbor_angle_profile(es.unknown, protos);
  auto profile_json = [](const NeighborAngleProfile& p) {
    return json{{"top1_deg", p.mean_top1_deg},
                {"top2_deg", p.mean_top2_deg},
                {"top2to16_deg", p.mean_top2to16_deg},
                {"max_rank", p.max_rank},
                {"truncated", p.truncated}};
  };

  out.results = json{{"auc", out.curve.auc},
                     {"closed_set_accuracy", closed_set_accuracy(out.table)},
                     {"dir_at_far", dir_map},
                     {"tau_at_far", tau_map},
                     {"intra_deg", out.cluster.intra_deg},
                     {"inter_deg", out.cluster.inter_deg},
                     {"dbi", out.cluster.dbi},
                     {"histogram_overlap", histogram_overlap(out.histogram)},
                     {"num_gallery", es.gallery.size()},
                     {"num_known_probes", es.known.size()},
                     {"num_unknown_probes", es.unknown.size()},
                     {"neighbor_angles",
                      json{{"known", profile_json(known_profile)},
                           {"unknown", profile_json(unknown_profile)}}}};
  return out;
}

json eval_notes() {
  return json{{"angle_average", "arithmetic mean over all probes"},
              {"auc_axis", "trapezoid over linear FAR in [0,1]"},
              {"tau_selection",
               "smallest raw score with empirical FAR <= target"}};
}

json finetune_notes() {
  return json{
      {"running_stats", "BN running statistics update in every regime"},
      {"classifier_rows",
       "re-normalized inside the cosine logit computation each step"}};
}

}  // namespace

json run_synth(const SyntheticConfig& cfg, const std::string& out_dir) {
  ensure_out_dir(out_dir);
  const SyntheticData data = generate_synthetic(cfg);

  char line[160];
  std::snprintf(line, sizeof(line),
                "seed=%llu sigma_within=%g center_scale=%g probe_noise=%g",
                static_cast<unsigned long long>(cfg.seed), cfg.sigma_within,
                cfg.center_scale, cfg.probe_noise);
  const std::vector<std::string> comments = {std::string("osfi synth: ") +
                                             line};
  const std::string pretrain_path = (fs::path(out_dir) / "pretrain.txt").string();
  const std::string eval_path = (fs::path(out_dir) / "eval.txt").string();
  save_dataset(data.pretrain, pretrain_path, comments);
  save_dataset(data.eval, eval_path, comments);

  json report;
  report["command"] = "synth";
  report["config"] = json{{"num_pretrain_ids", cfg.num_pretrain_ids},
                          {"pretrain_samples_per_id", cfg.pretrain_samples_per_id},
                          {"num_eval_ids", cfg.num_eval_ids},
                          {"eval_samples_per_id", cfg.eval_samples_per_id},
                          {"input_dim", cfg.input_dim},
                          {"sigma_within", cfg.sigma_within},
                          {"center_scale", cfg.center_scale},
                          {"probe_noise", cfg.probe_noise},
                          {"seed", cfg.seed}};
  report["pretrain_rows"] = data.pretrain.samples.size();
  report["eval_rows"] = data.eval.samples.size();
  report["files"] = json{{"pretrain", "pretrain.txt"}, {"eval", "eval.txt"}};
  write_report((fs::path(out_dir) / "report.json").string(), report);
  write_manifest(out_dir, "synth", {"pretrain.txt", "eval.txt", "report.json"});
  return report;
}

json run_pretrain(const PretrainOptions& opts) {
  ensure_out_dir(opts.out_dir);
  const RawDataset data = load_dataset(opts.data_path);
  if (!data.raw) {
    throw ProtocolError("pretrain expects a raw dataset (kind=raw header)");
  }
  int num_classes = 0;
  RawDataset relabeled = data;
  relabeled.samples = contiguous_labels(data.samples, &num_classes);

  Rng root(opts.train.seed);
  MLPEncoder enc =
      make_encoder(data.dim, opts.arch.hidden_width, opts.arch.num_blocks,
                   opts.arch.embed_dim, root.fork(100).seed());
  ClassifierWeights head =
      init_random(num_classes, opts.arch.embed_dim, root.fork(101).seed());

  const TrainTrace trace = pretrain(enc, head, relabeled, opts.train,
                                    opts.loss, opts.target_accuracy);

  const std::string ckpt_path =
      (fs::path(opts.out_dir) / "checkpoint.bin").string();
  json meta = {{"command", "pretrain"},
               {"epochs_run", trace.epochs_run},
               {"reached_target", trace.reached_target},
               {"seed", opts.train.seed}};
  save_checkpoint(ckpt_path, Checkpoint{enc, std::nullopt}, meta);

  json report;
  report["command"] = "pretrain";
  report["config"] = json{{"data", opts.data_path},
                          {"arch",
                           json{{"input_dim", data.dim},
                                {"hidden_width", opts.arch.hidden_width},
                                {"num_blocks", opts.arch.num_blocks},
                                {"embed_dim", opts.arch.embed_dim}}},
                          {"train", train_config_json(opts.train)},
                          {"loss", cosface_json(opts.loss)},
                          {"target_accuracy", opts.target_accuracy}};
  report["dataset_hash"] = hash_file(opts.data_path);
  report["num_classes"] = num_classes;
  report["epochs_run"] = trace.epochs_run;
  report["reached_target"] = trace.reached_target;
  report["not_converged"] = !trace.reached_target;
  report["epoch_loss"] = trace.epoch_loss;
  report["epoch_accuracy"] = trace.epoch_accuracy;
  report["final_accuracy"] =
      trace.epoch_accuracy.empty() ? 0.0 : trace.epoch_accuracy.back();
  report["checkpoint"] = "checkpoint.bin";
  report["checkpoint_hash"] = hash_file(ckpt_path);
  write_report((fs::path(opts.out_dir) / "report.json").string(), report);
  write_manifest(opts.out_dir, "pretrain", {"checkpoint.bin", "report.json"});
  return report;
}

json run_finetune(const FinetuneOptions& opts) {
  ensure_out_dir(opts.out_dir);
  Checkpoint ckpt = load_checkpoint(opts.checkpoint_path);
  MLPEncoder& enc = ckpt.encoder;

  const RawDataset data = load_dataset(opts.data_path);
  if (!data.raw) {
    throw ProtocolError("finetune expects a raw dataset (kind=raw header)");
  }
  if (data.dim != enc.input_dim()) {
    throw ProtocolError("checkpoint expects input dim " +
                        std::to_string(enc.input_dim()) + ", dataset has " +
                        std::to_string(data.dim));
  }
  const OSFISplit split = make_split(data, opts.m, opts.split_seed);

  // Classifier initialization on the frozen gallery embeddings.
  const auto gallery_features = embed_normalized(enc, split.gallery);
  Rng root(opts.train.seed);
  ClassifierWeights head;
  json init_info = {{"scheme", to_string(opts.init)}};
  switch (opts.init) {
    case InitScheme::random:
      head = init_random(split.num_known_ids, enc.embed_dim(),
                         root.fork(201).seed());
      break;
    case InitScheme::linprobe: {
      LinearProbeConfig lp;
      lp.seed = root.fork(202).seed();
      const LinearProbeResult lr =
          init_linear_probe(gallery_features, split.num_known_ids, opts.loss, lp);
      head = lr.weights;
      init_info["converged"] = lr.converged;
      init_info["epochs_run"] = lr.epochs_run;
      init_info["final_accuracy"] = lr.final_accuracy;
      break;
    }
    case InitScheme::wi:
      head = init_weight_imprint(gallery_features, split.num_known_ids);
      break;
  }

  json report;
  report["command"] = "finetune";
  report["config"] = json{{"checkpoint", opts.checkpoint_path},
                          {"data", opts.data_path},
                          {"init", to_string(opts.init)},
                          {"mode", to_string(opts.mode)},
                          {"m", opts.m},
                          {"split_seed", opts.split_seed},
                          {"train", train_config_json(opts.train)},
                          {"loss", cosface_json(opts.loss)}};
  report["checkpoint_hash"] = hash_file(opts.checkpoint_path);
  report["dataset_hash"] = hash_file(opts.data_path);
  report["init"] = init_info;
  report["num_known_ids"] = split.num_known_ids;
  report["notes"] = finetune_notes();

  const std::string out_ckpt =
      (fs::path(opts.out_dir) / "checkpoint.bin").string();
  if (opts.mode.none) {
    // Baseline: the encoder passes through untouched.
    json meta = {{"command", "finetune"}, {"mode", "none"}};
    save_checkpoint(out_ckpt, Checkpoint{enc, std::nullopt}, meta);
    report["mode_none"] = true;
    report["param_count"] = param_count_json(count_params(enc));
  } else {
    const ParamCount pc = set_finetune_mode(enc, opts.mode.mode);
    report["param_count"] = param_count_json(pc);
    const TrainTrace trace =
        finetune(enc, head, split.gallery, opts.train, opts.mode.mode, opts.loss);
    report["epoch_loss"] = trace.epoch_loss;
    report["epoch_accuracy"] = trace.epoch_accuracy;
    json meta = {{"command", "finetune"},
                 {"mode", to_string(opts.mode)},
                 {"init", to_string(opts.init)},
                 {"epochs_run", trace.epochs_run}};
    save_checkpoint(out_ckpt, Checkpoint{enc, head}, meta);
  }
  report["out_checkpoint_hash"] = hash_file(out_ckpt);
  write_report((fs::path(opts.out_dir) / "report.json").string(), report);
  write_manifest(opts.out_dir, "finetune", {"checkpoint.bin", "report.json"});
  return report;
}

namespace {

EmbeddedSplit load_embedded_split(const EvalOptions& opts, json& report) {
  if (!opts.embeddings_path.empty()) {
    const RawDataset embeds = load_dataset(opts.embeddings_path);
    if (embeds.raw) {
      throw ProtocolError(
          "eval --embeddings expects encoder outputs, got a raw dataset");
    }
    const OSFISplit split = make_split(embeds, opts.m, opts.split_seed);
    report["embeddings_hash"] = hash_file(opts.embeddings_path);
    EmbeddedSplit es;
    es.gallery = split.gallery;
    es.known = split.known_probes;
    es.unknown = split.unknown_probes;
    es.num_known_ids = split.num_known_ids;
    es.m = split.m;
    return es;
  }
  if (opts.checkpoint_path.empty() || opts.data_path.empty()) {
    throw ConfigError(
        "eval needs either --embeddings or both --checkpoint and --data");
  }
  const Checkpoint ckpt = load_checkpoint(opts.checkpoint_path);
  const RawDataset data = load_dataset(opts.data_path);
  if (!data.raw) {
    throw ProtocolError("eval --data expects a raw dataset (kind=raw header)");
  }
  if (data.dim != ckpt.encoder.input_dim()) {
    throw ProtocolError("checkpoint expects input dim " +
                        std::to_string(ckpt.encoder.input_dim()) +
                        ", dataset has " + std::to_string(data.dim));
  }
  report["checkpoint_hash"] = hash_file(opts.checkpoint_path);
  report["dataset_hash"] = hash_file(opts.data_path);
  const OSFISplit split = make_split(data, opts.m, opts.split_seed);
  return embed_split(ckpt.encoder, split);
}

json matcher_json(const MatcherConfig& cfg) {
  json j = {{"kind", to_string(cfg.kind)}};
  if (cfg.kind == MatcherKind::nac) j["k"] = cfg.k;
  if (cfg.threshold) j["threshold"] = *cfg.threshold;
  return j;
}

}  // namespace

json run_eval(const EvalOptions& opts) {
  ensure_out_dir(opts.out_dir);
  json report;
  report["command"] = "eval";
  const EmbeddedSplit es = load_embedded_split(opts, report);
  const EvalOutcome outcome = evaluate_split(
      es, opts.matcher, opts.far_targets, opts.histogram_bins,
      opts.histogram_minmax);

  report["config"] = json{{"matcher", matcher_json(opts.matcher)},
                          {"m", opts.m},
                          {"split_seed", opts.split_seed},
                          {"far_targets", opts.far_targets},
                          {"histogram_bins", opts.histogram_bins},
                          {"histogram_minmax", opts.histogram_minmax}};
  for (auto it = outcome.results.begin(); it != outcome.results.end(); ++it) {
    report[it.key()] = it.value();
  }
  report["notes"] = eval_notes();

  std::ostringstream scores, curve, hist;
  write_score_csv(outcome.table, scores);
  write_dir_curve_csv(outcome.curve, curve);
  write_histogram_csv(outcome.histogram, hist);
  write_text((fs::path(opts.out_dir) / "scores.csv").string(), scores.str());
  write_text((fs::path(opts.out_dir) / "dir_curve.csv").string(), curve.str());
  write_text((fs::path(opts.out_dir) / "histograms.csv").string(), hist.str());
  write_report((fs::path(opts.out_dir) / "report.json").string(), report);
  write_manifest(opts.out_dir, "eval",
                 {"scores.csv", "dir_curve.csv", "histograms.csv",
                  "report.json"});
  return report;
}

json run_sweep_k(const SweepKOptions& opts) {
  ensure_out_dir(opts.eval.out_dir);
  json report;
  report["command"] = "sweep-k";
  const EmbeddedSplit es = load_embedded_split(opts.eval, report);
  const int C = es.num_known_ids;

  // Clamp the grid to C, dedupe, keep ascending order; k=1 runs as the
  // cosine baseline row.
  std::vector<int> grid;
  for (int k : opts.grid) {
    const int kk = std::min(k, C);
    if (kk >= 2 && (grid.empty() || grid.back() != kk)) grid.push_back(kk);
  }

  struct Row {
    std::string matcher;
    int k;
    double auc;
  };
  std::vector<Row> rows;

  MatcherConfig cos_cfg;
  cos_cfg.kind = MatcherKind::cosine;
  rows.push_back({"cos", 1,
                  evaluate_split(es, cos_cfg, {}, opts.eval.histogram_bins,
                                 opts.eval.histogram_minmax)
                      .curve.auc});
  for (int k : grid) {
    MatcherConfig cfg;
    cfg.kind = MatcherKind::nac;
    cfg.k = k;
    rows.push_back({"nac", k,
                    evaluate_split(es, cfg, {}, opts.eval.histogram_bins,
                                   opts.eval.histogram_minmax)
                        .curve.auc});
  }

  size_t best = 0;
  for (size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].auc > rows[best].auc) best = i;
  }

  std::ostringstream csv;
  csv << "matcher,k,auc,best\n";
  char buf[64];
  json jrows = json::array();
  for (size_t i = 0; i < rows.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.9g", rows[i].auc);
    csv << rows[i].matcher << ',' << rows[i].k << ',' << buf << ','
        << (i == best ? 1 : 0) << '\n';
    jrows.push_back(json{{"matcher", rows[i].matcher},
                         {"k", rows[i].k},
                         {"auc", rows[i].auc},
                         {"best", i == best}});
  }

  report["config"] = json{{"m", opts.eval.m},
                          {"split_seed", opts.eval.split_seed},
                          {"grid", opts.grid},
                          {"num_known_ids", C}};
  report["rows"] = jrows;
  report["best"] = jrows[best];
  report["notes"] = eval_notes();
  write_text((fs::path(opts.eval.out_dir) / "sweep_k.csv").string(), csv.str());
  write_report((fs::path(opts.eval.out_dir) / "report.json").string(), report);
  write_manifest(opts.eval.out_dir, "sweep-k", {"sweep_k.csv", "report.json"});
  return report;
}

json run_gallery_sweep(const GallerySweepOptions& opts) {
  ensure_out_dir(opts.out_dir);
  const Checkpoint pretrained = load_checkpoint(opts.checkpoint_path);
  const RawDataset data = load_dataset(opts.data_path);
  if (!data.raw) {
    throw ProtocolError(
        "gallery-sweep expects a raw dataset (kind=raw header)");
  }

  json report;
  report["command"] = "gallery-sweep";
  report["checkpoint_hash"] = hash_file(opts.checkpoint_path);
  report["dataset_hash"] = hash_file(opts.data_path);

  std::ostringstream csv;
  csv << "m,auc_baseline,auc_proposed\n";
  json jrows = json::array();
  for (int m : opts.m_values) {
    const OSFISplit split = make_split(data, m, opts.split_seed);

    // Baseline: pretrained encoder, cosine matcher.
    MatcherConfig cos_cfg;
    const EmbeddedSplit base = embed_split(pretrained.encoder, split);
    const double auc_base = evaluate_split(base, cos_cfg, {}, 64, false).curve.auc;

    // Proposed: weight imprinting + BN-only fine-tuning + NAC.
    MLPEncoder tuned = pretrained.encoder;
    ClassifierWeights head = init_weight_imprint(
        embed_normalized(tuned, split.gallery), split.num_known_ids);
    finetune(tuned, head, split.gallery, opts.train, FinetuneMode::bn_only,
             opts.loss);
    MatcherConfig nac_cfg;
    nac_cfg.kind = MatcherKind::nac;
    nac_cfg.k = opts.nac_k;
    const EmbeddedSplit prop = embed_split(tuned, split);
    const double auc_prop = evaluate_split(prop, nac_cfg, {}, 64, false).curve.auc;

    char buf[80];
    std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g", m, auc_base, auc_prop);
    csv << buf << '\n';
    jrows.push_back(json{{"m", m},
                         {"auc_baseline", auc_base},
                         {"auc_proposed", auc_prop}});
  }

  report["config"] = json{{"m_values", opts.m_values},
                          {"split_seed", opts.split_seed},
                          {"nac_k", opts.nac_k},
                          {"train", train_config_json(opts.train)}};
  report["rows"] = jrows;
  write_text((fs::path(opts.out_dir) / "gallery_sweep.csv").string(),
             csv.str());
  write_report((fs::path(opts.out_dir) / "report.json").string(), report);
  write_manifest(opts.out_dir, "gallery-sweep",
                 {"gallery_sweep.csv", "report.json"});
  return report;
}

}  // namespace osfi
