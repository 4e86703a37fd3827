#include "tromr/codec.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace tromr {

namespace {

constexpr const char* kPad = "<pad>";
constexpr const char* kBos = "<bos>";
constexpr const char* kEos = "<eos>";

void add_token(Alphabet& a, const std::string& tok, bool is_note) {
  if (!a.ids.emplace(tok, static_cast<int>(a.tokens.size())).second)
    throw ConfigError("duplicate token in alphabet: " + tok);
  a.tokens.push_back(tok);
  a.note_mask.push_back(is_note);
}

void add_specials(Alphabet& a) {
  add_token(a, kPad, false);
  add_token(a, kBos, false);
  add_token(a, kEos, false);
  a.pad = 0;
  a.bos = 1;
  a.eos = 2;
}

std::string keysig_token(int n) {
  if (n == 0) return "keysig-0";
  return "keysig-" + std::to_string(std::abs(n)) + (n > 0 ? "s" : "f");
}

std::string acc_suffix(const std::string& acc) {
  if (acc == "none") return "";
  if (acc == "sharp") return "#";
  if (acc == "flat") return "b";
  if (acc == "natural") return "n";
  return "?" + acc;  // unknown accidentals stay visible in the composite
}

}  // namespace

int pitch_index(const std::string& name) {
  static const int letter_step[7] = {5, 6, 0, 1, 2, 3, 4};  // A..G -> C-based step
  if (name.size() < 2) throw ConfigError("bad pitch name: " + name);
  const char letter = name[0];
  if (letter < 'A' || letter > 'G') throw ConfigError("bad pitch name: " + name);
  int octave = 0;
  try {
    octave = std::stoi(name.substr(1));
  } catch (const std::exception&) {
    throw ConfigError("bad pitch name: " + name);
  }
  return letter_step[letter - 'A'] + 7 * octave;
}

std::string pitch_name(int index) {
  static const char letters[7] = {'C', 'D', 'E', 'F', 'G', 'A', 'B'};
  const int octave = index / 7;
  const int step = index % 7;
  return std::string(1, letters[step]) + std::to_string(octave);
}

std::vector<std::string> split_chord(const std::string& token) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : token) {
    if (c == kChordJoin) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

std::string join_chord(const std::vector<std::string>& members) {
  std::string out;
  for (std::size_t i = 0; i < members.size(); ++i) {
    if (i) out.push_back(kChordJoin);
    out += members[i];
  }
  return out;
}

Vocabulary build_vocabulary(const VocabConfig& config) {
  if (config.durations.empty()) throw ConfigError("empty duration list");
  if (config.accidentals.empty()) throw ConfigError("empty accidental list");
  const int lo = pitch_index(config.pitch_low);
  const int hi = pitch_index(config.pitch_high);
  if (lo > hi) throw ConfigError("pitch range is empty");

  std::vector<std::string> durations = config.durations;
  if (config.dotted)
    for (const auto& d : config.durations) durations.push_back(d + ".");

  std::vector<int> arities;
  for (const auto& shape : config.chord_shapes) {
    const int arity = static_cast<int>(shape.size()) + 1;
    if (arity < 2) throw ConfigError("chord shape must add at least one member");
    if (std::find(arities.begin(), arities.end(), arity) == arities.end())
      arities.push_back(arity);
  }
  std::sort(arities.begin(), arities.end());

  Vocabulary v;

  // Rhythm: durations, chord durations, then the non-note symbols.
  add_specials(v.rhythm);
  for (const auto& d : durations) add_token(v.rhythm, d, true);
  for (int arity : arities)
    for (const auto& d : durations)
      add_token(v.rhythm, join_chord(std::vector<std::string>(static_cast<std::size_t>(arity), d)),
                true);
  for (const auto& c : config.clefs) add_token(v.rhythm, c, false);
  for (int k = config.keysig_min; k <= config.keysig_max; ++k)
    add_token(v.rhythm, keysig_token(k), false);
  for (const auto& t : config.timesigs) add_token(v.rhythm, t, false);
  add_token(v.rhythm, "barline", false);
  if (config.rests)
    for (const auto& d : durations) add_token(v.rhythm, "rest-" + d, false);

  // Pitch: nonote, naturals low..high, then chord tokens by shape then base.
  add_specials(v.pitch);
  add_token(v.pitch, kNoNote, false);
  for (int p = lo; p <= hi; ++p) add_token(v.pitch, pitch_name(p), true);
  for (const auto& shape : config.chord_shapes) {
    for (int base = lo; base <= hi; ++base) {
      std::vector<std::string> members = {pitch_name(base)};
      bool fits = true;
      for (int off : shape) {
        if (off <= 0) throw ConfigError("chord offsets must be ascending positive steps");
        if (base + off > hi) {
          fits = false;
          break;
        }
        members.push_back(pitch_name(base + off));
      }
      if (fits) add_token(v.pitch, join_chord(members), true);
    }
  }

  // Accidental: nonote_acc, plain accidentals, then all member combinations.
  add_specials(v.accidental);
  add_token(v.accidental, kNoNoteAcc, false);
  for (const auto& a : config.accidentals) add_token(v.accidental, a, true);
  const int n_acc = static_cast<int>(config.accidentals.size());
  for (int arity : arities) {
    std::vector<int> idx(static_cast<std::size_t>(arity), 0);
    while (true) {
      std::vector<std::string> members;
      for (int i : idx) members.push_back(config.accidentals[static_cast<std::size_t>(i)]);
      add_token(v.accidental, join_chord(members), true);
      int pos = arity - 1;
      while (pos >= 0 && ++idx[static_cast<std::size_t>(pos)] == n_acc) {
        idx[static_cast<std::size_t>(pos)] = 0;
        --pos;
      }
      if (pos < 0) break;
    }
  }

  return v;
}

std::vector<bool> class_partition(const Vocabulary& vocab, Branch branch) {
  return vocab.alphabet(branch).note_mask;
}

void validate(const StaffAnnotation& a, const Vocabulary& vocab) {
  if (a.pitch.size() != a.rhythm.size() || a.accidental.size() != a.rhythm.size())
    throw AlignmentError("annotation streams have unequal lengths");
  for (std::size_t i = 0; i < a.rhythm.size(); ++i) {
    const int rid = vocab.rhythm.id_of(a.rhythm[i]);
    const int pid = vocab.pitch.id_of(a.pitch[i]);
    const int aid = vocab.accidental.id_of(a.accidental[i]);
    if (rid < 0) throw EncodeError("unknown rhythm symbol '" + a.rhythm[i] + "' at position " +
                                   std::to_string(i));
    if (pid < 0) throw EncodeError("unknown pitch symbol '" + a.pitch[i] + "' at position " +
                                   std::to_string(i));
    if (aid < 0) throw EncodeError("unknown accidental symbol '" + a.accidental[i] +
                                   "' at position " + std::to_string(i));
    const bool note = vocab.rhythm.note_mask[static_cast<std::size_t>(rid)];
    if (note != vocab.pitch.note_mask[static_cast<std::size_t>(pid)] ||
        note != vocab.accidental.note_mask[static_cast<std::size_t>(aid)])
      throw AlignmentError("note/non-note class disagrees across streams at position " +
                           std::to_string(i));
    if (note) {
      const auto rm = split_chord(a.rhythm[i]);
      const auto pm = split_chord(a.pitch[i]);
      const auto am = split_chord(a.accidental[i]);
      if (rm.size() != pm.size() || am.size() != pm.size())
        throw AlignmentError("chord arity disagrees across streams at position " +
                             std::to_string(i));
      for (std::size_t j = 1; j < pm.size(); ++j)
        if (pitch_index(pm[j - 1]) >= pitch_index(pm[j]))
          throw AlignmentError("chord members not ordered bottom-to-top at position " +
                               std::to_string(i));
    }
  }
}

namespace {

std::vector<int> encode_stream(const std::vector<std::string>& symbols, const Alphabet& a,
                               const char* stream_name) {
  std::vector<int> out;
  out.reserve(symbols.size() + 2);
  out.push_back(a.bos);
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    const int id = a.id_of(symbols[i]);
    if (id < 0 || a.is_special(id))
      throw EncodeError(std::string("unknown ") + stream_name + " symbol '" + symbols[i] +
                        "' at position " + std::to_string(i));
    out.push_back(id);
  }
  out.push_back(a.eos);
  return out;
}

std::vector<std::string> decode_stream(const std::vector<int>& ids, const Alphabet& a,
                                       const char* stream_name) {
  if (ids.empty() || ids.front() != a.bos)
    throw DecodeError(std::string(stream_name) + " stream does not start with BOS");
  std::vector<std::string> out;
  std::size_t i = 1;
  for (; i < ids.size(); ++i) {
    const int id = ids[i];
    if (id < 0 || id >= a.size())
      throw DecodeError(std::string("id out of range in ") + stream_name + " stream: " +
                        std::to_string(id));
    if (id == a.eos) break;
    if (a.is_special(id))
      throw DecodeError(std::string("unexpected special token inside ") + stream_name + " stream");
    out.push_back(a.tokens[static_cast<std::size_t>(id)]);
  }
  if (i == ids.size())
    throw TruncationError(std::string(stream_name) + " stream has no EOS");
  for (++i; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= a.size())
      throw DecodeError(std::string("id out of range in ") + stream_name + " stream: " +
                        std::to_string(ids[i]));
    if (ids[i] != a.pad)
      throw DecodeError(std::string("non-PAD token after EOS in ") + stream_name + " stream");
  }
  return out;
}

}  // namespace

TokenTriple encode(const StaffAnnotation& a, const Vocabulary& vocab) {
  if (a.pitch.size() != a.rhythm.size() || a.accidental.size() != a.rhythm.size())
    throw AlignmentError("annotation streams have unequal lengths");
  TokenTriple t;
  t.rhythm = encode_stream(a.rhythm, vocab.rhythm, "rhythm");
  t.pitch = encode_stream(a.pitch, vocab.pitch, "pitch");
  t.accidental = encode_stream(a.accidental, vocab.accidental, "accidental");
  return t;
}

StaffAnnotation decode(const TokenTriple& ids, const Vocabulary& vocab) {
  StaffAnnotation a;
  a.rhythm = decode_stream(ids.rhythm, vocab.rhythm, "rhythm");
  a.pitch = decode_stream(ids.pitch, vocab.pitch, "pitch");
  a.accidental = decode_stream(ids.accidental, vocab.accidental, "accidental");
  return a;
}

std::vector<std::string> merge(const StaffAnnotation& a) {
  if (a.pitch.size() != a.rhythm.size() || a.accidental.size() != a.rhythm.size())
    throw AlignmentError("annotation streams have unequal lengths");
  std::vector<std::string> out;
  out.reserve(a.rhythm.size());
  for (std::size_t i = 0; i < a.rhythm.size(); ++i) {
    if (a.pitch[i] == kNoNote) {
      out.push_back(a.rhythm[i]);
      continue;
    }
    const auto rm = split_chord(a.rhythm[i]);
    const auto pm = split_chord(a.pitch[i]);
    const auto am = split_chord(a.accidental[i]);
    if (rm.size() != pm.size() || am.size() != pm.size())
      throw MergeError("chord arity mismatch at position " + std::to_string(i));
    std::vector<std::string> members;
    members.reserve(pm.size());
    for (std::size_t j = 0; j < pm.size(); ++j)
      members.push_back(pm[j] + acc_suffix(am[j]) + "." + rm[j]);
    out.push_back(join_chord(members));
  }
  return out;
}

StaffAnnotation read_annotation(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open annotation: " + path);
  std::vector<std::vector<std::string>> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line[0] == '#') continue;
    std::istringstream ss(line);
    std::vector<std::string> toks;
    std::string tok;
    while (ss >> tok) toks.push_back(tok);
    lines.push_back(std::move(toks));
    if (lines.size() == 3) break;
  }
  if (lines.size() != 3)
    throw IoError("annotation file must carry three symbol lines: " + path);
  StaffAnnotation a;
  a.rhythm = std::move(lines[0]);
  a.pitch = std::move(lines[1]);
  a.accidental = std::move(lines[2]);
  return a;
}

void write_annotation(const std::string& path, const StaffAnnotation& a) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write annotation: " + path);
  auto emit = [&out](const std::vector<std::string>& syms) {
    for (std::size_t i = 0; i < syms.size(); ++i) {
      if (i) out << ' ';
      out << syms[i];
    }
    out << '\n';
  };
  emit(a.rhythm);
  emit(a.pitch);
  emit(a.accidental);
}

}  // namespace tromr
