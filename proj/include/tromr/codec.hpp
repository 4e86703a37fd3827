#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "tromr/common.hpp"

namespace tromr {

enum class Branch { rhythm = 0, pitch = 1, accidental = 2 };

// Placeholder carried by the pitch / accidental streams at non-note positions.
inline constexpr const char* kNoNote = "nonote";
inline constexpr const char* kNoNoteAcc = "nonote_acc";
inline constexpr char kChordJoin = '|';

struct VocabConfig {
  std::vector<std::string> durations = {"whole", "half", "quarter", "eighth", "16th"};
  bool dotted = true;
  std::string pitch_low = "C2";
  std::string pitch_high = "C7";
  std::vector<std::string> accidentals = {"none", "sharp", "flat", "natural"};
  std::vector<std::string> clefs = {"clef-G2", "clef-F4"};
  int keysig_min = -7;
  int keysig_max = 7;
  std::vector<std::string> timesigs = {"timesig-2/4", "timesig-3/4", "timesig-4/4",
                                       "timesig-6/8", "timesig-C"};
  bool rests = true;
  // Chord shapes as diatonic offsets above the base pitch. All members of a
  // chord share one duration, so the rhythm alphabet only grows by one token
  // per (duration, arity) and the pitch alphabet by one token per (shape, base).
  std::vector<std::vector<int>> chord_shapes = {{2}, {4}, {2, 4}};
};

struct Alphabet {
  std::vector<std::string> tokens;  // id -> token, dense from 0
  std::vector<bool> note_mask;      // id -> true iff note-class token
  std::unordered_map<std::string, int> ids;
  int pad = 0, bos = 1, eos = 2;

  int size() const { return static_cast<int>(tokens.size()); }
  int id_of(const std::string& tok) const {
    auto it = ids.find(tok);
    return it == ids.end() ? -1 : it->second;
  }
  bool is_special(int id) const { return id == pad || id == bos || id == eos; }
};

struct Vocabulary {
  Alphabet rhythm, pitch, accidental;

  const Alphabet& alphabet(Branch b) const {
    switch (b) {
      case Branch::rhythm: return rhythm;
      case Branch::pitch: return pitch;
      default: return accidental;
    }
  }
};

// Three aligned label streams describing one staff. Valid annotations satisfy
// the note/non-note agreement invariants (see validate); model hypotheses may
// not, and are carried by the same struct.
struct StaffAnnotation {
  std::vector<std::string> rhythm;
  std::vector<std::string> pitch;
  std::vector<std::string> accidental;

  std::size_t size() const { return rhythm.size(); }
  bool operator==(const StaffAnnotation&) const = default;
};

struct TokenTriple {
  std::vector<int> rhythm;
  std::vector<int> pitch;
  std::vector<int> accidental;
};

// Diatonic index of a natural pitch name ("C4" -> 28). Throws ConfigError on
// anything that is not letter+octave.
int pitch_index(const std::string& name);
std::string pitch_name(int index);

Vocabulary build_vocabulary(const VocabConfig& config);

// True at note-class token ids; totality over the alphabet.
std::vector<bool> class_partition(const Vocabulary& vocab, Branch branch);

void validate(const StaffAnnotation& a, const Vocabulary& vocab);

TokenTriple encode(const StaffAnnotation& a, const Vocabulary& vocab);
StaffAnnotation decode(const TokenTriple& ids, const Vocabulary& vocab);

// One merged symbol per position: "pitch[accidental].rhythm" composites at
// note positions (chord members paired bottom-to-top), rhythm tokens alone at
// non-note positions.
std::vector<std::string> merge(const StaffAnnotation& a);

std::vector<std::string> split_chord(const std::string& token);
std::string join_chord(const std::vector<std::string>& members);

// Annotation text format: three space-separated lines (rhythm, pitch,
// accidental); '#' starts a comment line.
StaffAnnotation read_annotation(const std::string& path);
void write_annotation(const std::string& path, const StaffAnnotation& a);

}  // namespace tromr
