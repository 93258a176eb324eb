#include "osfi/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include "osfi/errors.hpp"

namespace osfi {

namespace {

constexpr char kMagic[5] = {'O', 'S', 'F', 'I', '1'};
constexpr uint8_t kLinear = 1;
constexpr uint8_t kBatchNorm = 2;
constexpr uint8_t kAdapter = 3;
constexpr uint8_t kClassifier = 4;

struct Record {
  uint8_t kind = 0;
  std::vector<uint32_t> dims;
  std::vector<double> payload;
};

void write_u32(std::ofstream& out, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32(std::ifstream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) |
         (static_cast<uint32_t>(b[3]) << 24);
}

void write_f64(std::ofstream& out, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

double read_f64(std::ifstream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<uint64_t>(b[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

void write_record(std::ofstream& out, const Record& r) {
  out.put(static_cast<char>(r.kind));
  out.put(static_cast<char>(r.dims.size()));
  for (uint32_t d : r.dims) write_u32(out, d);
  for (double v : r.payload) write_f64(out, v);
}

Record linear_record(const LinearLayer& l) {
  Record r;
  r.kind = kLinear;
  r.dims = {static_cast<uint32_t>(l.out_dim()),
            static_cast<uint32_t>(l.in_dim())};
  r.payload = l.weight.a;
  r.payload.insert(r.payload.end(), l.bias.begin(), l.bias.end());
  return r;
}

Record bn_record(const BatchNormLayer& bn) {
  Record r;
  r.kind = kBatchNorm;
  r.dims = {static_cast<uint32_t>(bn.width())};
  r.payload = bn.gamma;
  r.payload.insert(r.payload.end(), bn.beta.begin(), bn.beta.end());
  r.payload.insert(r.payload.end(), bn.running_mean.begin(),
                   bn.running_mean.end());
  r.payload.insert(r.payload.end(), bn.running_var.begin(),
                   bn.running_var.end());
  r.payload.push_back(bn.momentum);
  r.payload.push_back(bn.eps);
  return r;
}

size_t payload_size(const Record& r) {
  switch (r.kind) {
    case kLinear:
      return static_cast<size_t>(r.dims[0]) * r.dims[1] + r.dims[0];
    case kBatchNorm:
      return static_cast<size_t>(r.dims[0]) * 4 + 2;
    case kAdapter:
    case kClassifier:
      return static_cast<size_t>(r.dims[0]) * r.dims[1];
    default:
      throw ProtocolError("checkpoint: unknown record kind " +
                          std::to_string(r.kind));
  }
}

LinearLayer linear_from(const Record& r) {
  LinearLayer l;
  l.weight = Matrix(static_cast<int>(r.dims[0]), static_cast<int>(r.dims[1]));
  const size_t w = l.weight.size();
  std::copy(r.payload.begin(), r.payload.begin() + w, l.weight.a.begin());
  l.bias.assign(r.payload.begin() + w, r.payload.end());
  return l;
}

BatchNormLayer bn_from(const Record& r) {
  const size_t n = r.dims[0];
  BatchNormLayer bn;
  auto it = r.payload.begin();
  bn.gamma.assign(it, it + n);
  bn.beta.assign(it + n, it + 2 * n);
  bn.running_mean.assign(it + 2 * n, it + 3 * n);
  bn.running_var.assign(it + 3 * n, it + 4 * n);
  bn.momentum = r.payload[4 * n];
  bn.eps = r.payload[4 * n + 1];
  return bn;
}

Matrix matrix_from(const Record& r) {
  Matrix m(static_cast<int>(r.dims[0]), static_cast<int>(r.dims[1]));
  std::copy(r.payload.begin(), r.payload.end(), m.a.begin());
  return m;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt,
                     const nlohmann::json& meta) {
  std::vector<Record> records;
  for (const auto& block : ckpt.encoder.blocks) {
    records.push_back(linear_record(block.linear));
    records.push_back(bn_record(block.bn));
    if (block.adapter.enabled) {
      Record r;
      r.kind = kAdapter;
      r.dims = {static_cast<uint32_t>(block.adapter.weight.rows),
                static_cast<uint32_t>(block.adapter.weight.cols)};
      r.payload = block.adapter.weight.a;
      records.push_back(std::move(r));
    }
  }
  records.push_back(linear_record(ckpt.encoder.output_layer));
  if (ckpt.encoder.output_adapter.enabled) {
    Record r;
    r.kind = kAdapter;
    r.dims = {static_cast<uint32_t>(ckpt.encoder.output_adapter.weight.rows),
              static_cast<uint32_t>(ckpt.encoder.output_adapter.weight.cols)};
    r.payload = ckpt.encoder.output_adapter.weight.a;
    records.push_back(std::move(r));
  }
  if (ckpt.head) {
    Record r;
    r.kind = kClassifier;
    r.dims = {static_cast<uint32_t>(ckpt.head->W.rows),
              static_cast<uint32_t>(ckpt.head->W.cols)};
    r.payload = ckpt.head->W.a;
    records.push_back(std::move(r));
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw ProtocolError("cannot open '" + path + "' for writing");
  out.write(kMagic, sizeof(kMagic));
  write_u32(out, static_cast<uint32_t>(records.size()));
  for (const auto& r : records) write_record(out, r);
  if (!out) throw ProtocolError("write failed for '" + path + "'");
  out.close();

  nlohmann::json manifest;
  manifest["format"] = "OSFI1";
  manifest["records"] = nlohmann::json::array();
  for (const auto& r : records) {
    nlohmann::json jr;
    jr["kind"] = r.kind;
    jr["dims"] = r.dims;
    manifest["records"].push_back(jr);
  }
  manifest["mode"] = to_string(ckpt.encoder.mode);
  manifest["meta"] = meta;
  std::ofstream mout(path + ".manifest.json");
  if (!mout) {
    throw ProtocolError("cannot write manifest for '" + path + "'");
  }
  mout << manifest.dump(2) << '\n';
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ProtocolError("cannot open checkpoint '" + path + "'");
  char magic[5];
  in.read(magic, 5);
  if (!in || std::memcmp(magic, kMagic, 5) != 0) {
    throw ProtocolError("'" + path + "' is not an OSFI1 checkpoint");
  }
  const uint32_t count = read_u32(in);

  std::vector<Record> records(count);
  for (auto& r : records) {
    int kind = in.get();
    int ndims = in.get();
    if (kind == EOF || ndims == EOF) {
      throw ProtocolError("truncated checkpoint '" + path + "'");
    }
    r.kind = static_cast<uint8_t>(kind);
    r.dims.resize(ndims);
    for (auto& d : r.dims) d = read_u32(in);
    r.payload.resize(payload_size(r));
    for (auto& v : r.payload) v = read_f64(in);
    if (!in) throw ProtocolError("truncated checkpoint '" + path + "'");
  }

  // Rebuild structure: (linear, bn[, adapter]) repeats; a trailing linear
  // (without bn) is the output layer; an optional classifier ends the file.
  Checkpoint ckpt;
  size_t i = 0;
  while (i < records.size()) {
    if (records[i].kind == kClassifier) break;
    if (records[i].kind != kLinear) {
      throw ProtocolError("checkpoint: expected a linear record");
    }
    const bool has_bn =
        i + 1 < records.size() && records[i + 1].kind == kBatchNorm;
    if (has_bn) {
      EncoderBlock block;
      block.linear = linear_from(records[i]);
      block.bn = bn_from(records[i + 1]);
      i += 2;
      block.adapter.weight =
          Matrix(block.linear.out_dim(), block.linear.in_dim());
      if (i < records.size() && records[i].kind == kAdapter) {
        block.adapter.weight = matrix_from(records[i]);
        block.adapter.enabled = true;
        ++i;
      }
      ckpt.encoder.blocks.push_back(std::move(block));
    } else {
      ckpt.encoder.output_layer = linear_from(records[i]);
      ++i;
      ckpt.encoder.output_adapter.weight = Matrix(
          ckpt.encoder.output_layer.out_dim(),
          ckpt.encoder.output_layer.in_dim());
      if (i < records.size() && records[i].kind == kAdapter) {
        ckpt.encoder.output_adapter.weight = matrix_from(records[i]);
        ckpt.encoder.output_adapter.enabled = true;
        ++i;
      }
    }
  }
  if (i < records.size()) {
    if (records[i].kind != kClassifier || i + 1 != records.size()) {
      throw ProtocolError("checkpoint: malformed trailing records");
    }
    ClassifierWeights head;
    head.W = matrix_from(records[i]);
    ckpt.head = std::move(head);
  }
  if (ckpt.encoder.output_layer.out_dim() == 0) {
    throw ProtocolError("checkpoint: missing output layer");
  }
  return ckpt;
}

}  // namespace osfi
