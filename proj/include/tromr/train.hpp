#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "tromr/dataset.hpp"
#include "tromr/image.hpp"
#include "tromr/losses.hpp"
#include "tromr/metrics.hpp"
#include "tromr/model.hpp"
#include "tromr/rng.hpp"
#include "tromr/staffdet.hpp"

namespace tromr {

template <class S>
struct Adam {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t t = 0;
  std::vector<Mat<S>> m, v;

  void step(ag::ParamStore<S>& params, const std::vector<Mat<S>>& grads) {
    if (m.empty()) {
      m.resize(params.count());
      v.resize(params.count());
    }
    ++t;
    const S c1 = S(1.0 - std::pow(beta1, static_cast<double>(t)));
    const S c2 = S(1.0 - std::pow(beta2, static_cast<double>(t)));
    for (std::size_t i = 0; i < params.count(); ++i) {
      const Mat<S>& g = grads[i];
      if (g.size() == 0) continue;
      Mat<S>& w = params[static_cast<int>(i)];
      if (m[i].size() == 0) {
        m[i] = Mat<S>::Zero(w.rows(), w.cols());
        v[i] = Mat<S>::Zero(w.rows(), w.cols());
      }
      m[i] = S(beta1) * m[i] + S(1 - beta1) * g;
      v[i] = (S(beta2) * v[i].array() + S(1 - beta2) * g.array().square()).matrix();
      w.array() -=
          S(lr) * (m[i].array() / c1) / ((v[i].array() / c2).sqrt() + S(eps));
    }
  }
};

// Runs fn(i) for i in [0, n) on up to n_threads workers; the work split is a
// fixed stride so any reduction done per worker stays deterministic.
inline void parallel_for(int n, int n_threads, const std::function<void(int, int)>& fn) {
  n_threads = std::max(1, std::min(n_threads, n));
  if (n_threads == 1) {
    for (int i = 0; i < n; ++i) fn(i, 0);
    return;
  }
  std::vector<std::thread> workers;
  workers.reserve(static_cast<std::size_t>(n_threads));
  for (int w = 0; w < n_threads; ++w)
    workers.emplace_back([=, &fn]() {
      for (int i = w; i < n; i += n_threads) fn(i, w);
    });
  for (auto& th : workers) th.join();
}

struct TrainConfig {
  int epochs = 10;
  int batch_size = 32;
  double lr = 0.001;
  LossWeights weights;  // lambda = 0.1, beta = 1.0
  ConsistencyStandard standard = ConsistencyStandard::note_branch;
  std::uint64_t seed = 0;
  int threads = 2;
  int max_steps = -1;  // stop after this many optimizer steps when >= 0
  std::string checkpoint_dir;
  std::string metrics_path;  // JSON-lines history, one record per epoch
  bool validate_each_epoch = true;
  std::function<bool(int step, double loss)> step_callback;  // return false to stop
};

struct EpochRecord {
  int epoch = 0;
  int steps = 0;
  double ce = 0;
  double con = 0;
  double total = 0;
  double val_pitch = -1;
  double val_rhythm = -1;
  double val_merge = -1;
};

namespace detail {

inline void append_history(const std::string& path, const EpochRecord& r) {
  if (path.empty()) return;
  std::ofstream out(path, std::ios::app);
  nlohmann::json j = {{"epoch", r.epoch},   {"steps", r.steps}, {"ce", r.ce},
                      {"con", r.con},       {"total", r.total}};
  if (r.val_merge >= 0) {
    j["val_pitch_ser"] = r.val_pitch;
    j["val_rhythm_ser"] = r.val_rhythm;
    j["val_merge_ser"] = r.val_merge;
  }
  out << j.dump() << '\n';
}

}  // namespace detail

// Greedy decoding over a staff set; returns hypotheses aligned with samples.
template <class S>
std::vector<StaffAnnotation> predict_all(const TrOMRModel<S>& model, const Vocabulary& vocab,
                                         const std::vector<StaffSample>& samples,
                                         int threads = 2) {
  std::vector<StaffAnnotation> hyps(samples.size());
  parallel_for(static_cast<int>(samples.size()), threads, [&](int i, int) {
    const ImageF ink = prepare_staff_ink(samples[static_cast<std::size_t>(i)].image,
                                         model.config().image_height, model.config().image_width);
    hyps[static_cast<std::size_t>(i)] = model.greedy_predict(ink, vocab);
  });
  return hyps;
}

template <class S>
SerReport evaluate_model(const TrOMRModel<S>& model, const Vocabulary& vocab,
                         const std::vector<StaffSample>& samples, int threads = 2) {
  std::vector<StaffAnnotation> refs;
  refs.reserve(samples.size());
  for (const auto& s : samples) refs.push_back(s.annotation);
  return report(refs, predict_all(model, vocab, samples, threads));
}

// Teacher-forced training of the recognizer. Loss per batch is the mean of
// the per-sample losses; gradients accumulate per worker and reduce in a
// fixed order, so runs are reproducible for a given seed and thread count.
template <class S>
std::vector<EpochRecord> train_recognizer(TrOMRModel<S>& model, const Vocabulary& vocab,
                                          const std::vector<StaffSample>& train_set,
                                          const std::vector<StaffSample>& val_set,
                                          const TrainConfig& cfg) {
  if (train_set.empty()) throw ConfigError("training dataset is empty");
  cfg.weights.validate();
  const ModelConfig& mc = model.config();

  struct Prepared {
    ImageF ink;
    TokenTriple encoded;
  };
  std::vector<Prepared> data(train_set.size());
  for (std::size_t i = 0; i < train_set.size(); ++i) {
    data[i].ink = prepare_staff_ink(train_set[i].image, mc.image_height, mc.image_width);
    data[i].encoded = encode(train_set[i].annotation, vocab);
    if (static_cast<int>(data[i].encoded.rhythm.size()) > mc.max_decode_len)
      throw ConfigError("training sequence exceeds max_decode_len");
  }

  const auto rhythm_part = class_partition(vocab, Branch::rhythm);
  const auto pitch_part = class_partition(vocab, Branch::pitch);
  const auto acc_part = class_partition(vocab, Branch::accidental);

  Adam<S> adam;
  adam.lr = cfg.lr;
  Rng shuffle_rng(mix_seed(cfg.seed, 0xba7c4));
  std::vector<EpochRecord> history;
  int global_step = 0;
  bool stop = false;

  for (int epoch = 0; epoch < cfg.epochs && !stop; ++epoch) {
    std::vector<int> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    shuffle_rng.shuffle(order);

    EpochRecord rec;
    rec.epoch = epoch;
    int batches = 0;
    for (std::size_t b0 = 0; b0 < order.size() && !stop; b0 += static_cast<std::size_t>(cfg.batch_size)) {
      const int bsz = static_cast<int>(
          std::min(static_cast<std::size_t>(cfg.batch_size), order.size() - b0));
      int pad_to = 1;
      for (int k = 0; k < bsz; ++k)
        pad_to = std::max(pad_to, static_cast<int>(
                                      data[static_cast<std::size_t>(order[b0 + static_cast<std::size_t>(k)])]
                                          .encoded.rhythm.size()) -
                                      1);

      const int n_workers = std::max(1, std::min(cfg.threads, bsz));
      std::vector<std::vector<Mat<S>>> worker_grads(
          static_cast<std::size_t>(n_workers), model.params().zero_grads());
      std::vector<LossValues> losses(static_cast<std::size_t>(bsz));

      parallel_for(bsz, n_workers, [&](int k, int w) {
        const Prepared& p = data[static_cast<std::size_t>(order[b0 + static_cast<std::size_t>(k)])];
        ag::Tape<S> tape;
        const auto in1 = shifted_inputs(p.encoded.rhythm, pad_to, vocab.rhythm.pad);
        const auto in2 = shifted_inputs(p.encoded.pitch, pad_to, vocab.pitch.pad);
        const auto in3 = shifted_inputs(p.encoded.accidental, pad_to, vocab.accidental.pad);
        const BranchTargets targets = make_targets(p.encoded, pad_to, vocab.rhythm.pad,
                                                   vocab.pitch.pad, vocab.accidental.pad);
        BranchHandles<S> heads = model.teacher_forward(tape, p.ink, in1, in2, in3);
        TotalLossHandles<S> loss = total_loss<S>(tape, heads, targets, rhythm_part, pitch_part,
                                                 acc_part, cfg.weights, cfg.standard);
        tape.backward(loss.total, &worker_grads[static_cast<std::size_t>(w)]);
        losses[static_cast<std::size_t>(k)] = {double(tape.val(loss.total)(0, 0)),
                                               double(tape.val(loss.ce)(0, 0)),
                                               double(tape.val(loss.con)(0, 0))};
      });

      std::vector<Mat<S>> grads = std::move(worker_grads[0]);
      for (int w = 1; w < n_workers; ++w)
        for (std::size_t i = 0; i < grads.size(); ++i) {
          Mat<S>& src = worker_grads[static_cast<std::size_t>(w)][i];
          if (src.size() == 0) continue;
          if (grads[i].size() == 0)
            grads[i] = std::move(src);
          else
            grads[i] += src;
        }
      const S inv_b = S(1) / S(bsz);
      for (auto& g : grads)
        if (g.size() != 0) g *= inv_b;
      adam.step(model.params(), grads);

      double bt = 0, bce = 0, bcon = 0;
      for (const auto& l : losses) {
        bt += l.total;
        bce += l.ce;
        bcon += l.con;
      }
      rec.total += bt / bsz;
      rec.ce += bce / bsz;
      rec.con += bcon / bsz;
      ++batches;
      ++global_step;
      ++rec.steps;
      if (cfg.step_callback && !cfg.step_callback(global_step, bt / bsz)) stop = true;
      if (cfg.max_steps >= 0 && global_step >= cfg.max_steps) stop = true;
    }
    if (batches > 0) {
      rec.total /= batches;
      rec.ce /= batches;
      rec.con /= batches;
    }

    if (cfg.validate_each_epoch && !val_set.empty()) {
      const SerReport val = evaluate_model(model, vocab, val_set, cfg.threads);
      rec.val_pitch = val.pitch_ser;
      rec.val_rhythm = val.rhythm_ser;
      rec.val_merge = val.merge_ser;
    }
    if (!cfg.checkpoint_dir.empty()) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "epoch_%04d.ckpt", epoch);
      model.save(cfg.checkpoint_dir + "/" + buf);
      model.save(cfg.checkpoint_dir + "/latest.ckpt");
    }
    detail::append_history(cfg.metrics_path, rec);
    history.push_back(rec);
  }
  return history;
}

struct DetectorTrainConfig {
  int epochs = 10;
  int batch_size = 4;
  double lr = 0.001;
  std::uint64_t seed = 0;
  int threads = 2;
  int max_steps = -1;
  std::string checkpoint_dir;
  std::string metrics_path;
};

struct DetectorEpochRecord {
  int epoch = 0;
  int steps = 0;
  double loss = 0;
  double mask_bce = 0;
  double page_ce = 0;
};

// Joint mask + page-type training of the staff detector.
template <class S>
std::vector<DetectorEpochRecord> train_detector(SegNet<S>& net,
                                                const std::vector<PageSample>& train_set,
                                                const DetectorTrainConfig& cfg) {
  if (train_set.empty()) throw ConfigError("detector training dataset is empty");
  const SegNetConfig& sc = net.config();

  struct Prepared {
    ImageF ink;
    Mat<S> mask;  // (in_h*in_w) x 1 targets
    int page_class = 0;
  };
  std::vector<Prepared> data(train_set.size());
  for (std::size_t i = 0; i < train_set.size(); ++i) {
    const PageSample& p = train_set[i];
    data[i].ink = prepare_page_ink(p.image, sc.in_h, sc.in_w);
    if (p.mask.size() == 0) throw ConfigError("page sample lacks a mask: " + p.id);
    ImageF m = to_float(p.mask);
    if (m.rows() != sc.in_h || m.cols() != sc.in_w) m = resize_bilinear(m, sc.in_h, sc.in_w);
    data[i].mask.resize(static_cast<Eigen::Index>(sc.in_h) * sc.in_w, 1);
    for (int y = 0; y < sc.in_h; ++y)
      for (int x = 0; x < sc.in_w; ++x)
        data[i].mask(static_cast<Eigen::Index>(y) * sc.in_w + x, 0) =
            m(y, x) < 0.5f ? S(1) : S(0);  // mask PNGs are ink-style (dark = staff)
    data[i].page_class = static_cast<int>(p.page_type);
  }

  Adam<S> adam;
  adam.lr = cfg.lr;
  Rng shuffle_rng(mix_seed(cfg.seed, 0xde7ec7));
  std::vector<DetectorEpochRecord> history;
  int global_step = 0;
  bool stop = false;

  for (int epoch = 0; epoch < cfg.epochs && !stop; ++epoch) {
    std::vector<int> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    shuffle_rng.shuffle(order);

    DetectorEpochRecord rec;
    rec.epoch = epoch;
    int batches = 0;
    for (std::size_t b0 = 0; b0 < order.size() && !stop; b0 += static_cast<std::size_t>(cfg.batch_size)) {
      const int bsz = static_cast<int>(
          std::min(static_cast<std::size_t>(cfg.batch_size), order.size() - b0));
      const int n_workers = std::max(1, std::min(cfg.threads, bsz));
      std::vector<std::vector<Mat<S>>> worker_grads(
          static_cast<std::size_t>(n_workers), net.params().zero_grads());
      std::vector<std::array<double, 2>> losses(static_cast<std::size_t>(bsz));

      parallel_for(bsz, n_workers, [&](int k, int w) {
        const Prepared& p = data[static_cast<std::size_t>(order[b0 + static_cast<std::size_t>(k)])];
        ag::Tape<S> tape;
        auto out = net.forward(tape, p.ink);
        auto bce = tape.bce_with_logits(out.mask_logits, p.mask);
        auto ce = tape.ce_with_logits(out.page_logits, {p.page_class}, Vec<S>::Ones(1));
        auto loss = tape.add(bce, ce);
        tape.backward(loss, &worker_grads[static_cast<std::size_t>(w)]);
        losses[static_cast<std::size_t>(k)] = {double(tape.val(bce)(0, 0)),
                                               double(tape.val(ce)(0, 0))};
      });

      std::vector<Mat<S>> grads = std::move(worker_grads[0]);
      for (int w = 1; w < n_workers; ++w)
        for (std::size_t i = 0; i < grads.size(); ++i) {
          Mat<S>& src = worker_grads[static_cast<std::size_t>(w)][i];
          if (src.size() == 0) continue;
          if (grads[i].size() == 0)
            grads[i] = std::move(src);
          else
            grads[i] += src;
        }
      const S inv_b = S(1) / S(bsz);
      for (auto& g : grads)
        if (g.size() != 0) g *= inv_b;
      adam.step(net.params(), grads);

      for (const auto& l : losses) {
        rec.mask_bce += l[0] / bsz;
        rec.page_ce += l[1] / bsz;
      }
      ++batches;
      ++global_step;
      ++rec.steps;
      if (cfg.max_steps >= 0 && global_step >= cfg.max_steps) stop = true;
    }
    if (batches > 0) {
      rec.mask_bce /= batches;
      rec.page_ce /= batches;
    }
    rec.loss = rec.mask_bce + rec.page_ce;
    if (!cfg.checkpoint_dir.empty()) net.save(cfg.checkpoint_dir + "/detector_latest.ckpt");
    if (!cfg.metrics_path.empty()) {
      std::ofstream out(cfg.metrics_path, std::ios::app);
      out << nlohmann::json({{"epoch", rec.epoch},
                             {"steps", rec.steps},
                             {"mask_bce", rec.mask_bce},
                             {"page_ce", rec.page_ce},
                             {"loss", rec.loss}})
                 .dump()
          << '\n';
    }
    history.push_back(rec);
  }
  return history;
}

}  // namespace tromr
