#include "osfi/train.hpp"

#include <algorithm>
#include <cmath>

#include "osfi/errors.hpp"
#include "osfi/geometry.hpp"
#include "osfi/optimizer.hpp"
#include "osfi/rng.hpp"

namespace osfi {

double default_learning_rate(FinetuneMode mode) {
  switch (mode) {
    case FinetuneMode::bn_only:
    case FinetuneMode::partial:
      return 1e-3;
    case FinetuneMode::full:
    case FinetuneMode::adapter:
      return 1e-4;
  }
  return 1e-3;
}

namespace {

// Batch boundaries of ceil(n/batch) slices; a trailing single sample is
// rebalanced into the previous slice so BN always sees >= 2.
std::vector<std::pair<size_t, size_t>> batch_slices(size_t n, int batch_size) {
  std::vector<std::pair<size_t, size_t>> slices;
  for (size_t start = 0; start < n; start += batch_size) {
    slices.emplace_back(start, std::min(n, start + batch_size));
  }
  if (slices.size() >= 2 && slices.back().second - slices.back().first == 1) {
    slices[slices.size() - 2].second -= 1;
    slices.back().first -= 1;
  }
  return slices;
}

struct EpochLoop {
  std::vector<LabeledEmbedding> data;
  Rng order_rng;
  Rng jitter_rng;
  double jitter = 0.0;
  std::vector<size_t> order;

  EpochLoop(const std::vector<LabeledEmbedding>& samples, uint64_t seed,
            double jitter_sigma)
      : data(samples),
        order_rng(Rng(seed).fork(11)),
        jitter_rng(Rng(seed).fork(12)),
        jitter(jitter_sigma),
        order(samples.size()) {
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  }

  void fill_batch(size_t start, size_t stop, Matrix& x,
                  std::vector<int>& labels) {
    const int B = static_cast<int>(stop - start);
    const int dim = static_cast<int>(data.front().vec.size());
    x = Matrix(B, dim);
    labels.resize(B);
    for (int b = 0; b < B; ++b) {
      const auto& e = data[order[start + b]];
      std::copy(e.vec.begin(), e.vec.end(), x.row(b));
      labels[b] = e.label;
    }
    if (jitter > 0.0) {
      for (auto& v : x.a) v += jitter_rng.normal() * jitter;
    }
  }
};

double run_training(MLPEncoder& enc, ClassifierWeights& head,
                    const std::vector<LabeledEmbedding>& samples,
                    const TrainConfig& cfg, const CosFaceConfig& loss_cfg,
                    double lr, int epochs, TrainTrace& trace,
                    double target_accuracy) {
  if (samples.empty()) throw ProtocolError("training: empty sample set");
  if (samples.size() < 2) {
    throw ProtocolError("training: need at least 2 samples");
  }

  EpochLoop loop(samples, cfg.seed, cfg.input_jitter);
  const auto slices = batch_slices(samples.size(), cfg.batch_size);
  const long total_steps = static_cast<long>(epochs) *
                           static_cast<long>(slices.size());

  AdamState state;
  AdamConfig adam;
  long step = 0;

  for (int epoch = 0; epoch < epochs; ++epoch) {
    loop.order_rng.shuffle(loop.order);
    double loss_sum = 0.0;
    for (const auto& [start, stop] : slices) {
      Matrix x;
      std::vector<int> labels;
      loop.fill_batch(start, stop, x, labels);

      ForwardCache cache;
      const Matrix features = encoder_forward(enc, x, true, &cache);
      const HeadLossGrads hg =
          cosface_loss(features, labels, head.W, loss_cfg);
      if (!std::isfinite(hg.loss)) {
        throw NumericalError("training: non-finite loss at step " +
                             std::to_string(step));
      }
      EncoderGrads grads = encoder_backward(enc, cache, hg.dfeatures);
      auto params = collect_params(enc, grads, &head.W, &hg.dweights);
      adam_step(params, state, adam,
                cosine_annealed_lr(lr, step, total_steps));
      ++step;
      loss_sum += hg.loss;
    }
    trace.epoch_loss.push_back(loss_sum / static_cast<double>(slices.size()));

    const auto embedded = embed_normalized(enc, samples);
    const double acc = cosine_accuracy(embedded, head.W);
    trace.epoch_accuracy.push_back(acc);
    trace.epochs_run = epoch + 1;
    if (target_accuracy > 0.0 && acc >= target_accuracy) {
      trace.reached_target = true;
      break;
    }
  }
  return trace.epoch_accuracy.empty() ? 0.0 : trace.epoch_accuracy.back();
}

}  // namespace

TrainTrace finetune(MLPEncoder& enc, ClassifierWeights& head,
                    const std::vector<LabeledEmbedding>& gallery,
                    const TrainConfig& cfg, FinetuneMode mode,
                    const CosFaceConfig& loss_cfg) {
  if (gallery.empty()) throw ProtocolError("finetune: empty gallery");
  set_finetune_mode(enc, mode);
  TrainTrace trace;
  if (cfg.epochs == 0) return trace;
  const double lr =
      cfg.learning_rate > 0.0 ? cfg.learning_rate : default_learning_rate(mode);
  run_training(enc, head, gallery, cfg, loss_cfg, lr, cfg.epochs, trace, 0.0);
  return trace;
}

TrainTrace pretrain(MLPEncoder& enc, ClassifierWeights& head,
                    const RawDataset& data, const TrainConfig& cfg,
                    const CosFaceConfig& loss_cfg, double target_accuracy) {
  set_finetune_mode(enc, FinetuneMode::full);
  TrainTrace trace;
  if (cfg.epochs == 0) return trace;
  const double lr = cfg.learning_rate > 0.0 ? cfg.learning_rate : 1e-3;
  run_training(enc, head, data.samples, cfg, loss_cfg, lr, cfg.epochs, trace,
               target_accuracy);
  return trace;
}

std::vector<LabeledEmbedding> embed_normalized(
    const MLPEncoder& enc, const std::vector<LabeledEmbedding>& samples) {
  std::vector<LabeledEmbedding> out;
  out.reserve(samples.size());
  if (samples.empty()) return out;
  const int dim = static_cast<int>(samples.front().vec.size());

  // One eval-mode pass over everything, in chunks to bound peak memory.
  constexpr size_t kChunk = 512;
  for (size_t start = 0; start < samples.size(); start += kChunk) {
    const size_t stop = std::min(samples.size(), start + kChunk);
    Matrix x(static_cast<int>(stop - start), dim);
    for (size_t i = start; i < stop; ++i) {
      std::copy(samples[i].vec.begin(), samples[i].vec.end(),
                x.row(static_cast<int>(i - start)));
    }
    const Matrix feats = encoder_eval(enc, x);
    for (size_t i = start; i < stop; ++i) {
      LabeledEmbedding e;
      e.label = samples[i].label;
      const double* row = feats.row(static_cast<int>(i - start));
      e.vec = l2_normalize(Vec(row, row + feats.cols));
      out.push_back(std::move(e));
    }
  }
  return out;
}

}  // namespace osfi
