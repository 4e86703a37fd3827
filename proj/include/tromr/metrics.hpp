#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "tromr/codec.hpp"
#include "tromr/common.hpp"

namespace tromr {

struct EditCounts {
  std::int64_t ins = 0;
  std::int64_t sub = 0;
  std::int64_t del = 0;
  std::int64_t ref_len = 0;

  std::int64_t edits() const { return ins + sub + del; }
  EditCounts& operator+=(const EditCounts& o) {
    ins += o.ins;
    sub += o.sub;
    del += o.del;
    ref_len += o.ref_len;
    return *this;
  }
};

// Minimum-cost alignment with unit costs. Ties between equal-cost alignments
// are broken in favour of substitutions over insert+delete pairs, so the
// decomposition is deterministic; the total S+D+I is the Levenshtein distance
// either way.
template <class T>
EditCounts edit_counts(const std::vector<T>& ref, const std::vector<T>& hyp) {
  const std::size_t n = ref.size(), m = hyp.size();
  std::vector<std::int32_t> prev(m + 1), cur(m + 1);
  // Backtrace choice per cell: 0 = match/sub (diag), 1 = del (up), 2 = ins (left).
  std::vector<std::uint8_t> choice((n + 1) * (m + 1), 0);
  for (std::size_t j = 0; j <= m; ++j) {
    prev[j] = static_cast<std::int32_t>(j);
    choice[j] = 2;
  }
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = static_cast<std::int32_t>(i);
    choice[i * (m + 1)] = 1;
    for (std::size_t j = 1; j <= m; ++j) {
      const std::int32_t diag = prev[j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      const std::int32_t up = prev[j] + 1;
      const std::int32_t left = cur[j - 1] + 1;
      std::int32_t best = diag;
      std::uint8_t c = 0;
      if (up < best) {
        best = up;
        c = 1;
      }
      if (left < best) {
        best = left;
        c = 2;
      }
      cur[j] = best;
      choice[i * (m + 1) + j] = c;
    }
    std::swap(prev, cur);
  }

  EditCounts counts;
  counts.ref_len = static_cast<std::int64_t>(n);
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    const std::uint8_t c = choice[i * (m + 1) + j];
    if (i > 0 && j > 0 && c == 0) {
      if (!(ref[i - 1] == hyp[j - 1])) ++counts.sub;
      --i;
      --j;
    } else if (i > 0 && c == 1) {
      ++counts.del;
      --i;
    } else {
      ++counts.ins;
      --j;
    }
  }
  return counts;
}

inline double ser(const EditCounts& counts) {
  if (counts.ref_len == 0)
    return counts.edits() == 0 ? 0.0 : std::numeric_limits<double>::infinity();
  return static_cast<double>(counts.edits()) / static_cast<double>(counts.ref_len);
}

struct SerReport {
  double pitch_ser = 0.0;
  double rhythm_ser = 0.0;
  double merge_ser = 0.0;
  EditCounts pitch, rhythm, merge;
};

// Merge rule for model hypotheses whose streams may disagree on length or
// chord arity: shorter streams are padded with the non-note placeholders and
// missing chord members render as empty pieces. Total on any input; agrees
// with merge() on valid annotations.
std::vector<std::string> merge_lenient(const StaffAnnotation& a);

// Corpus pooling: sums edit counts over staves per direction, then divides
// once by the pooled reference length.
SerReport report(const std::vector<StaffAnnotation>& refs,
                 const std::vector<StaffAnnotation>& hyps);

}  // namespace tromr
