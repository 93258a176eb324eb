#include "osfi/protocol.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "osfi/errors.hpp"
#include "osfi/geometry.hpp"
#include "osfi/rng.hpp"

namespace osfi {

namespace {

// Samples past this per-identity index are "probe quality" and receive the
// probe_noise multiplier; the first few stay enrollment quality. Invisible
// at the default multiplier of 1.
constexpr int kEnrollmentQualitySamples = 5;

void generate_identity_block(RawDataset& out, int id, int num_samples,
                             const SyntheticConfig& cfg, Rng& rng,
                             bool eval_quality_gap) {
  Vec center(cfg.input_dim);
  for (auto& c : center) c = rng.normal() * cfg.center_scale;
  for (int s = 0; s < num_samples; ++s) {
    const double sigma =
        (eval_quality_gap && s >= kEnrollmentQualitySamples)
            ? cfg.sigma_within * cfg.probe_noise
            : cfg.sigma_within;
    LabeledEmbedding e;
    e.label = id;
    e.vec.resize(cfg.input_dim);
    for (int i = 0; i < cfg.input_dim; ++i) {
      e.vec[i] = center[i] + rng.normal() * sigma;
    }
    out.samples.push_back(std::move(e));
  }
}

}  // namespace

SyntheticData generate_synthetic(const SyntheticConfig& cfg) {
  if (cfg.num_pretrain_ids < 1 || cfg.num_eval_ids < 2 || cfg.input_dim < 1 ||
      cfg.pretrain_samples_per_id < 1) {
    throw ConfigError("generate_synthetic: invalid sizes");
  }
  if (cfg.num_eval_ids % 2 != 0) {
    throw ProtocolError(
        "generate_synthetic: num_eval_ids must be even for the known/unknown "
        "half split");
  }
  if (cfg.eval_samples_per_id < 10) {
    throw ProtocolError(
        "generate_synthetic: eval identities need >= 10 samples (m=3 gallery "
        "+ at least 7 probes)");
  }

  Rng root(cfg.seed);
  SyntheticData data;
  data.pretrain.dim = cfg.input_dim;
  data.pretrain.raw = true;
  data.eval.dim = cfg.input_dim;
  data.eval.raw = true;

  Rng pre = root.fork(1);
  for (int id = 0; id < cfg.num_pretrain_ids; ++id) {
    generate_identity_block(data.pretrain, id, cfg.pretrain_samples_per_id,
                            cfg, pre, false);
  }
  Rng ev = root.fork(2);
  for (int j = 0; j < cfg.num_eval_ids; ++j) {
    generate_identity_block(data.eval, cfg.num_pretrain_ids + j,
                            cfg.eval_samples_per_id, cfg, ev, true);
  }
  return data;
}

OSFISplit make_split(const RawDataset& eval_set, int m, uint64_t seed) {
  if (m < 1) throw ConfigError("make_split: m must be >= 1");

  // Group sample indices per identity, in file order.
  std::map<int, std::vector<size_t>> by_id;
  for (size_t i = 0; i < eval_set.samples.size(); ++i) {
    by_id[eval_set.samples[i].label].push_back(i);
  }
  if (by_id.size() < 2 || by_id.size() % 2 != 0) {
    throw ProtocolError("make_split: need an even number (>= 2) of identities");
  }

  std::vector<int> ids;
  ids.reserve(by_id.size());
  for (const auto& [id, _] : by_id) ids.push_back(id);

  Rng rng(seed);
  Rng id_rng = rng.fork(1);
  id_rng.shuffle(ids);
  const size_t half = ids.size() / 2;
  std::vector<int> known_ids(ids.begin(), ids.begin() + half);
  std::vector<int> unknown_ids(ids.begin() + half, ids.end());
  std::sort(known_ids.begin(), known_ids.end());
  std::sort(unknown_ids.begin(), unknown_ids.end());

  OSFISplit split;
  split.m = m;
  split.num_known_ids = static_cast<int>(known_ids.size());

  for (size_t c = 0; c < known_ids.size(); ++c) {
    const auto& indices = by_id[known_ids[c]];
    if (static_cast<int>(indices.size()) < m + 1) {
      throw ProtocolError("make_split: identity " +
                          std::to_string(known_ids[c]) + " has " +
                          std::to_string(indices.size()) +
                          " samples, need >= m+1 = " + std::to_string(m + 1));
    }
    std::vector<size_t> order(indices.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng pick = rng.fork(1000 + c);
    pick.shuffle(order);
    std::vector<size_t> chosen(order.begin(), order.begin() + m);
    std::sort(chosen.begin(), chosen.end());
    std::vector<bool> in_gallery(indices.size(), false);
    for (size_t pos : chosen) in_gallery[pos] = true;
    for (size_t i = 0; i < indices.size(); ++i) {
      LabeledEmbedding e = eval_set.samples[indices[i]];
      e.label = static_cast<int>(c);
      (in_gallery[i] ? split.gallery : split.known_probes)
          .push_back(std::move(e));
    }
  }

  for (size_t u = 0; u < unknown_ids.size(); ++u) {
    for (size_t idx : by_id[unknown_ids[u]]) {
      LabeledEmbedding e = eval_set.samples[idx];
      e.label = split.num_known_ids + static_cast<int>(u);
      split.unknown_probes.push_back(std::move(e));
    }
  }
  return split;
}

void save_dataset(const RawDataset& data, const std::string& path,
                  const std::vector<std::string>& comments) {
  std::ofstream out(path);
  if (!out) throw ProtocolError("cannot open '" + path + "' for writing");
  for (const auto& c : comments) out << "# " << c << '\n';
  if (data.raw) out << "kind=raw\n";
  out << "dim=" << data.dim << '\n';
  char buf[32];
  for (const auto& e : data.samples) {
    out << e.label;
    for (double v : e.vec) {
      std::snprintf(buf, sizeof(buf), "%.17g", v);
      out << ',' << buf;
    }
    out << '\n';
  }
  if (!out) throw ProtocolError("write failed for '" + path + "'");
}

RawDataset load_dataset(const std::string& path, bool normalize) {
  std::ifstream in(path);
  if (!in) throw ProtocolError("cannot open '" + path + "'");

  RawDataset data;
  bool have_dim = false;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    if (line.rfind("kind=", 0) == 0) {
      if (have_dim) throw ParseError("kind= must precede dim=", line_no);
      if (line != "kind=raw") throw ParseError("unknown kind header", line_no);
      data.raw = true;
      continue;
    }
    if (line.rfind("dim=", 0) == 0) {
      if (have_dim) throw ParseError("duplicate dim= header", line_no);
      try {
        data.dim = std::stoi(line.substr(4));
      } catch (const std::exception&) {
        throw ParseError("malformed dim= header", line_no);
      }
      if (data.dim < 1) throw ParseError("dim must be positive", line_no);
      have_dim = true;
      continue;
    }
    if (!have_dim) throw ParseError("data row before dim= header", line_no);

    LabeledEmbedding e;
    e.vec.reserve(data.dim);
    std::stringstream ss(line);
    std::string tok;
    int field = 0;
    while (std::getline(ss, tok, ',')) {
      try {
        size_t used = 0;
        if (field == 0) {
          e.label = std::stoi(tok, &used);
        } else {
          e.vec.push_back(std::stod(tok, &used));
        }
        while (used < tok.size() && std::isspace(static_cast<unsigned char>(tok[used]))) ++used;
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw ParseError("non-numeric token '" + tok + "'", line_no);
      }
      ++field;
    }
    if (static_cast<int>(e.vec.size()) != data.dim) {
      throw ParseError("row has " + std::to_string(e.vec.size()) +
                           " components, header says " +
                           std::to_string(data.dim),
                       line_no);
    }
    if (e.label < 0) throw ParseError("negative identity label", line_no);
    if (normalize) e.vec = l2_normalize(e.vec);
    data.samples.push_back(std::move(e));
  }
  if (!have_dim) throw ProtocolError("'" + path + "': missing dim= header");
  if (data.samples.empty()) {
    throw ProtocolError("'" + path + "': dataset body is empty");
  }
  return data;
}

}  // namespace osfi
