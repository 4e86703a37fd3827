#include "tromr/metrics.hpp"

namespace tromr {

namespace {

std::string acc_suffix_lenient(const std::string& acc) {
  if (acc == "none" || acc.empty()) return "";
  if (acc == "sharp") return "#";
  if (acc == "flat") return "b";
  if (acc == "natural") return "n";
  return "?" + acc;
}

}  // namespace

std::vector<std::string> merge_lenient(const StaffAnnotation& a) {
  const std::size_t n = std::max({a.rhythm.size(), a.pitch.size(), a.accidental.size()});
  std::vector<std::string> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::string r = i < a.rhythm.size() ? a.rhythm[i] : std::string();
    const std::string p = i < a.pitch.size() ? a.pitch[i] : std::string(kNoNote);
    const std::string ac = i < a.accidental.size() ? a.accidental[i] : std::string(kNoNoteAcc);
    if (p == kNoNote) {
      out.push_back(r);
      continue;
    }
    const auto rm = split_chord(r);
    const auto pm = split_chord(p);
    const auto am = split_chord(ac == kNoNoteAcc ? std::string() : ac);
    const std::size_t arity = std::max({rm.size(), pm.size(), am.size()});
    std::vector<std::string> members;
    members.reserve(arity);
    for (std::size_t j = 0; j < arity; ++j) {
      const std::string pj = j < pm.size() ? pm[j] : std::string();
      const std::string aj = j < am.size() ? am[j] : std::string();
      const std::string rj = j < rm.size() ? rm[j] : std::string();
      members.push_back(pj + acc_suffix_lenient(aj) + "." + rj);
    }
    out.push_back(join_chord(members));
  }
  return out;
}

SerReport report(const std::vector<StaffAnnotation>& refs,
                 const std::vector<StaffAnnotation>& hyps) {
  if (refs.size() != hyps.size())
    throw EvalError("reference and hypothesis counts differ: " + std::to_string(refs.size()) +
                    " vs " + std::to_string(hyps.size()));
  SerReport rep;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    rep.pitch += edit_counts(refs[i].pitch, hyps[i].pitch);
    rep.rhythm += edit_counts(refs[i].rhythm, hyps[i].rhythm);
    rep.merge += edit_counts(merge(refs[i]), merge_lenient(hyps[i]));
  }
  rep.pitch_ser = ser(rep.pitch);
  rep.rhythm_ser = ser(rep.rhythm);
  rep.merge_ser = ser(rep.merge);
  return rep;
}

}  // namespace tromr
