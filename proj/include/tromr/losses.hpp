#pragma once

#include <array>
#include <vector>

#include "tromr/ag.hpp"
#include "tromr/common.hpp"
#include "tromr/model.hpp"

namespace tromr {

struct LossWeights {
  double lambda = 0.1;  // cross-entropy weight
  double beta = 1.0;    // consistency weight

  void validate() const {
    if (lambda < 0 || beta < 0) throw ConfigError("loss weights must be non-negative");
  }
};

// Which distribution the consistency term compares the branches against. The
// rhythm standard (collapsed rhythm distribution) is experimental and exists
// for ablation runs.
enum class ConsistencyStandard { note_branch, rhythm_branch };

namespace detail {

template <class S>
Mat<S> partition_matrix(const std::vector<bool>& partition) {
  Mat<S> m = Mat<S>::Zero(static_cast<Eigen::Index>(partition.size()), 2);
  for (std::size_t i = 0; i < partition.size(); ++i)
    m(static_cast<Eigen::Index>(i), partition[i] ? 0 : 1) = S(1);
  return m;
}

}  // namespace detail

// Sums each softmax row into (note mass, non-note mass); rows keep summing
// to one.
template <class S>
typename ag::Tape<S>::H collapse(ag::Tape<S>& t, typename ag::Tape<S>::H probs,
                                 const std::vector<bool>& partition) {
  if (t.val(probs).cols() != static_cast<Eigen::Index>(partition.size()))
    throw ShapeError("collapse: partition length does not match alphabet size");
  return t.matmul(probs, t.constant(detail::partition_matrix<S>(partition)));
}

template <class S>
Mat<S> collapse(const Mat<S>& probs, const std::vector<bool>& partition) {
  if (probs.cols() != static_cast<Eigen::Index>(partition.size()))
    throw ShapeError("collapse: partition length does not match alphabet size");
  return probs * detail::partition_matrix<S>(partition);
}

// Mean over valid timesteps of (1/3) * sum_c ||collapse(B_c) - standard||_1.
// All-masked input defines the loss as 0.
template <class S>
typename ag::Tape<S>::H consistency_loss(ag::Tape<S>& t,
                                         const std::array<typename ag::Tape<S>::H, 3>& branch_probs,
                                         const std::array<const std::vector<bool>*, 3>& partitions,
                                         typename ag::Tape<S>::H standard_probs,
                                         const std::vector<bool>& valid) {
  using H = typename ag::Tape<S>::H;
  const Eigen::Index T = t.val(branch_probs[0]).rows();
  if (static_cast<Eigen::Index>(valid.size()) != T)
    throw ShapeError("consistency_loss: mask length mismatch");
  Eigen::Index n_valid = 0;
  Vec<S> w = Vec<S>::Zero(T);
  for (Eigen::Index i = 0; i < T; ++i)
    if (valid[static_cast<std::size_t>(i)]) ++n_valid;
  if (n_valid > 0) {
    const S wv = S(1) / (S(3) * S(n_valid));
    for (Eigen::Index i = 0; i < T; ++i)
      if (valid[static_cast<std::size_t>(i)]) w(i) = wv;
  }
  H total = -1;
  for (int c = 0; c < 3; ++c) {
    H collapsed = collapse<S>(t, branch_probs[static_cast<std::size_t>(c)],
                              *partitions[static_cast<std::size_t>(c)]);
    H diff = t.abs(t.sub(collapsed, standard_probs));
    total = (total < 0) ? diff : t.add(total, diff);
  }
  return t.weighted_rowsum(total, w);
}

struct LossValues {
  double total = 0;
  double ce = 0;
  double con = 0;
};

template <class S>
struct TotalLossHandles {
  typename ag::Tape<S>::H total = -1;
  typename ag::Tape<S>::H ce = -1;
  typename ag::Tape<S>::H con = -1;
};

// Per-staff supervision: target ids for each branch at each decoder step plus
// the PAD mask. Note-branch targets derive from the rhythm targets' class
// partition (0 = note, 1 = non-note).
struct BranchTargets {
  std::vector<int> rhythm, pitch, accidental;
  std::vector<bool> valid;
};

inline BranchTargets make_targets(const TokenTriple& encoded, int pad_to, int rhythm_pad,
                                  int pitch_pad, int accidental_pad) {
  // encoded streams are BOS ... EOS; targets drop BOS, inputs drop EOS.
  BranchTargets t;
  const int body = static_cast<int>(encoded.rhythm.size()) - 1;
  const int T = pad_to < 0 ? body : pad_to;
  if (body > T) throw ShapeError("sequence longer than padded length");
  for (int i = 0; i < T; ++i) {
    const bool in_range = i < body;
    t.rhythm.push_back(in_range ? encoded.rhythm[static_cast<std::size_t>(i + 1)] : rhythm_pad);
    t.pitch.push_back(in_range ? encoded.pitch[static_cast<std::size_t>(i + 1)] : pitch_pad);
    t.accidental.push_back(in_range ? encoded.accidental[static_cast<std::size_t>(i + 1)]
                                    : accidental_pad);
    t.valid.push_back(in_range);
  }
  return t;
}

inline std::vector<int> shifted_inputs(const std::vector<int>& stream, int pad_to, int pad_id) {
  std::vector<int> in;
  const int body = static_cast<int>(stream.size()) - 1;
  const int T = pad_to < 0 ? body : pad_to;
  for (int i = 0; i < T; ++i)
    in.push_back(i < body ? stream[static_cast<std::size_t>(i)] : pad_id);
  return in;
}

// lambda * L_ce + beta * L_con. L_ce averages the four branches' token-level
// cross-entropies over valid timesteps; L_con is the consistency term above.
template <class S>
TotalLossHandles<S> total_loss(ag::Tape<S>& t, const BranchHandles<S>& outputs,
                               const BranchTargets& targets,
                               const std::vector<bool>& rhythm_partition,
                               const std::vector<bool>& pitch_partition,
                               const std::vector<bool>& accidental_partition,
                               const LossWeights& weights,
                               ConsistencyStandard standard = ConsistencyStandard::note_branch) {
  using H = typename ag::Tape<S>::H;
  weights.validate();
  const Eigen::Index T = t.val(outputs.rhythm).rows();
  if (static_cast<Eigen::Index>(targets.valid.size()) != T)
    throw ShapeError("total_loss: target length does not match output timesteps");

  Eigen::Index n_valid = 0;
  for (bool v : targets.valid) n_valid += v ? 1 : 0;
  Vec<S> w = Vec<S>::Zero(T);
  if (n_valid > 0)
    for (Eigen::Index i = 0; i < T; ++i)
      if (targets.valid[static_cast<std::size_t>(i)]) w(i) = S(1) / S(n_valid);

  std::vector<int> note_targets(static_cast<std::size_t>(T), 1);
  for (Eigen::Index i = 0; i < T; ++i) {
    const int rid = targets.rhythm[static_cast<std::size_t>(i)];
    note_targets[static_cast<std::size_t>(i)] =
        rhythm_partition[static_cast<std::size_t>(rid)] ? 0 : 1;
  }

  H ce = t.scale(t.add(t.add(t.ce_with_logits(outputs.rhythm, targets.rhythm, w),
                             t.ce_with_logits(outputs.pitch, targets.pitch, w)),
                       t.add(t.ce_with_logits(outputs.accidental, targets.accidental, w),
                             t.ce_with_logits(outputs.note, note_targets, w))),
                 S(0.25));

  H p1 = t.softmax_rows(outputs.rhythm);
  H p2 = t.softmax_rows(outputs.pitch);
  H p3 = t.softmax_rows(outputs.accidental);
  H p4 = t.softmax_rows(outputs.note);
  H con = -1;
  if (standard == ConsistencyStandard::note_branch) {
    con = consistency_loss<S>(t, {p1, p2, p3},
                              {&rhythm_partition, &pitch_partition, &accidental_partition}, p4,
                              targets.valid);
  } else {
    // Rhythm-standard ablation: pitch, accidental and the note branch are
    // pulled towards the collapsed rhythm distribution.
    const std::vector<bool> identity2 = {true, false};
    con = consistency_loss<S>(t, {p2, p3, p4},
                              {&pitch_partition, &accidental_partition, &identity2},
                              collapse<S>(t, p1, rhythm_partition), targets.valid);
  }

  TotalLossHandles<S> out;
  out.ce = ce;
  out.con = con;
  out.total = t.add(t.scale(ce, S(weights.lambda)), t.scale(con, S(weights.beta)));
  return out;
}

}  // namespace tromr
