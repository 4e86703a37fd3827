#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "tromr/codec.hpp"
#include "tromr/rng.hpp"
#include "tromr/synth.hpp"

using namespace tromr;

namespace {

Vocabulary default_vocab() { return build_vocabulary(VocabConfig{}); }

StaffAnnotation simple_annotation() {
  StaffAnnotation a;
  a.rhythm = {"clef-G2", "keysig-2s", "timesig-4/4", "quarter", "quarter|quarter", "barline"};
  a.pitch = {"nonote", "nonote", "nonote", "C4", "C4|E4", "nonote"};
  a.accidental = {"nonote_acc", "nonote_acc", "nonote_acc", "sharp", "none|none", "nonote_acc"};
  return a;
}

}  // namespace

TEST_CASE("vocabulary ids are dense and unique per alphabet") {
  const Vocabulary v = default_vocab();
  for (const Alphabet* a : {&v.rhythm, &v.pitch, &v.accidental}) {
    std::set<std::string> seen;
    for (int i = 0; i < a->size(); ++i) {
      const std::string& tok = a->tokens[static_cast<std::size_t>(i)];
      CHECK(seen.insert(tok).second);
      CHECK(a->id_of(tok) == i);
    }
    CHECK(a->note_mask.size() == static_cast<std::size_t>(a->size()));
  }
}

TEST_CASE("default pitch alphabet contains C4..B5 plus nonote") {
  const Vocabulary v = default_vocab();
  for (int idx = pitch_index("C4"); idx <= pitch_index("B5"); ++idx)
    CHECK(v.pitch.id_of(pitch_name(idx)) >= 0);
  const int nn = v.pitch.id_of(kNoNote);
  REQUIRE(nn >= 0);
  CHECK_FALSE(v.pitch.note_mask[static_cast<std::size_t>(nn)]);
  const int acc_nn = v.accidental.id_of(kNoNoteAcc);
  REQUIRE(acc_nn >= 0);
  CHECK_FALSE(v.accidental.note_mask[static_cast<std::size_t>(acc_nn)]);
}

TEST_CASE("rhythm note mask marks durations as notes and the rest as non-notes") {
  const Vocabulary v = default_vocab();
  for (const char* tok : {"whole", "quarter", "16th.", "quarter|quarter", "half|half|half"})
    CHECK(v.rhythm.note_mask[static_cast<std::size_t>(v.rhythm.id_of(tok))]);
  for (const char* tok : {"clef-G2", "clef-F4", "keysig-0", "keysig-7f", "timesig-C", "barline",
                          "rest-quarter", "rest-whole."})
    CHECK_FALSE(v.rhythm.note_mask[static_cast<std::size_t>(v.rhythm.id_of(tok))]);
}

TEST_CASE("specials are disjoint from symbols and non-note") {
  const Vocabulary v = default_vocab();
  for (const Alphabet* a : {&v.rhythm, &v.pitch, &v.accidental}) {
    CHECK(a->pad == 0);
    CHECK(a->bos == 1);
    CHECK(a->eos == 2);
    for (int id : {a->pad, a->bos, a->eos})
      CHECK_FALSE(a->note_mask[static_cast<std::size_t>(id)]);
  }
}

TEST_CASE("empty duration list is a configuration error") {
  VocabConfig c;
  c.durations.clear();
  CHECK_THROWS_AS(build_vocabulary(c), ConfigError);
}

TEST_CASE("duplicate token is a configuration error") {
  VocabConfig c;
  c.durations = {"quarter", "quarter"};
  CHECK_THROWS_AS(build_vocabulary(c), ConfigError);
}

TEST_CASE("vocabulary construction is deterministic") {
  const Vocabulary a = build_vocabulary(VocabConfig{});
  const Vocabulary b = build_vocabulary(VocabConfig{});
  CHECK(a.rhythm.tokens == b.rhythm.tokens);
  CHECK(a.pitch.tokens == b.pitch.tokens);
  CHECK(a.accidental.tokens == b.accidental.tokens);
  CHECK(a.rhythm.note_mask == b.rhythm.note_mask);
}

TEST_CASE("encode wraps streams in BOS/EOS and preserves alignment") {
  const Vocabulary v = default_vocab();
  StaffAnnotation a;
  a.rhythm = {"clef-G2"};
  a.pitch = {"nonote"};
  a.accidental = {"nonote_acc"};
  const TokenTriple t = encode(a, v);
  CHECK(t.rhythm == std::vector<int>{v.rhythm.bos, v.rhythm.id_of("clef-G2"), v.rhythm.eos});
  CHECK(t.pitch == std::vector<int>{v.pitch.bos, v.pitch.id_of("nonote"), v.pitch.eos});
  CHECK(t.accidental ==
        std::vector<int>{v.accidental.bos, v.accidental.id_of("nonote_acc"), v.accidental.eos});
}

TEST_CASE("a chord is one token per stream at its position") {
  const Vocabulary v = default_vocab();
  const StaffAnnotation a = simple_annotation();
  const TokenTriple t = encode(a, v);
  CHECK(t.rhythm.size() == a.size() + 2);
  CHECK(t.pitch.size() == a.size() + 2);
  CHECK(t.rhythm[5] == v.rhythm.id_of("quarter|quarter"));
  CHECK(t.pitch[5] == v.pitch.id_of("C4|E4"));
  CHECK(decode(t, v) == a);
}

TEST_CASE("length mismatch is an alignment error") {
  const Vocabulary v = default_vocab();
  StaffAnnotation a = simple_annotation();
  a.pitch.pop_back();
  CHECK_THROWS_AS(encode(a, v), AlignmentError);
}

TEST_CASE("unknown symbol names the symbol and position") {
  const Vocabulary v = default_vocab();
  StaffAnnotation a = simple_annotation();
  a.rhythm[3] = "512th";
  try {
    encode(a, v);
    FAIL("expected EncodeError");
  } catch (const EncodeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("512th") != std::string::npos);
    CHECK(msg.find("3") != std::string::npos);
  }
}

TEST_CASE("decode of BOS/EOS only is an empty annotation") {
  const Vocabulary v = default_vocab();
  TokenTriple t;
  t.rhythm = {v.rhythm.bos, v.rhythm.eos};
  t.pitch = {v.pitch.bos, v.pitch.eos};
  t.accidental = {v.accidental.bos, v.accidental.eos};
  const StaffAnnotation a = decode(t, v);
  CHECK(a.rhythm.empty());
  CHECK(a.pitch.empty());
  CHECK(a.accidental.empty());
}

TEST_CASE("decode rejects out-of-range ids and missing EOS") {
  const Vocabulary v = default_vocab();
  TokenTriple t = encode(simple_annotation(), v);
  SUBCASE("id == alphabet size") {
    t.rhythm[2] = v.rhythm.size();
    CHECK_THROWS_AS(decode(t, v), DecodeError);
  }
  SUBCASE("missing EOS is a truncation error") {
    t.pitch.pop_back();
    CHECK_THROWS_AS(decode(t, v), TruncationError);
  }
  SUBCASE("trailing PAD after EOS is ignored") {
    t.rhythm.push_back(v.rhythm.pad);
    t.rhythm.push_back(v.rhythm.pad);
    CHECK(decode(t, v) == simple_annotation());
  }
  SUBCASE("non-PAD after EOS is an error") {
    t.rhythm.push_back(v.rhythm.id_of("barline"));
    CHECK_THROWS_AS(decode(t, v), DecodeError);
  }
}

TEST_CASE("round-trip holds over randomly generated annotations") {
  const Vocabulary v = default_vocab();
  GenConfig cfg;
  for (int i = 0; i < 300; ++i) {
    Rng rng(mix_seed(41, static_cast<std::uint64_t>(i)));
    const StaffAnnotation a = sample_annotation(rng, cfg);
    validate(a, v);  // generator output satisfies all invariants
    const TokenTriple t = encode(a, v);
    CHECK(t.rhythm.size() == t.pitch.size());
    CHECK(t.rhythm.size() == t.accidental.size());
    CHECK(decode(t, v) == a);
  }
}

TEST_CASE("merge passes non-notes through and composes note symbols") {
  SUBCASE("barline alone") {
    StaffAnnotation a;
    a.rhythm = {"barline"};
    a.pitch = {"nonote"};
    a.accidental = {"nonote_acc"};
    CHECK(merge(a) == std::vector<std::string>{"barline"});
  }
  SUBCASE("sharp quarter") {
    StaffAnnotation a;
    a.rhythm = {"quarter"};
    a.pitch = {"C4"};
    a.accidental = {"sharp"};
    CHECK(merge(a) == std::vector<std::string>{"C4#.quarter"});
  }
  SUBCASE("chord composes one symbol") {
    StaffAnnotation a;
    a.rhythm = {"quarter|quarter"};
    a.pitch = {"C4|E4"};
    a.accidental = {"none|flat"};
    CHECK(merge(a) == std::vector<std::string>{"C4.quarter|E4b.quarter"});
  }
  SUBCASE("chord arity mismatch") {
    StaffAnnotation a;
    a.rhythm = {"quarter|quarter"};
    a.pitch = {"C4"};
    a.accidental = {"none"};
    CHECK_THROWS_AS(merge(a), MergeError);
  }
}

TEST_CASE("merge preserves annotation length") {
  GenConfig cfg;
  for (int i = 0; i < 50; ++i) {
    Rng rng(mix_seed(99, static_cast<std::uint64_t>(i)));
    const StaffAnnotation a = sample_annotation(rng, cfg);
    CHECK(merge(a).size() == a.rhythm.size());
  }
}

TEST_CASE("class partition matches the note masks and covers every id") {
  const Vocabulary v = default_vocab();
  const auto pp = class_partition(v, Branch::pitch);
  CHECK(pp.size() == static_cast<std::size_t>(v.pitch.size()));
  for (int i = 0; i < v.pitch.size(); ++i) {
    const bool is_note = pp[static_cast<std::size_t>(i)];
    const bool expected = !(i == v.pitch.pad || i == v.pitch.bos || i == v.pitch.eos ||
                            v.pitch.tokens[static_cast<std::size_t>(i)] == kNoNote);
    CHECK(is_note == expected);
  }
  const auto rp = class_partition(v, Branch::rhythm);
  for (const char* tok : {"barline", "clef-G2", "keysig-3f", "timesig-2/4", "rest-half"})
    CHECK_FALSE(rp[static_cast<std::size_t>(v.rhythm.id_of(tok))]);
  for (int id : {v.rhythm.pad, v.rhythm.bos, v.rhythm.eos})
    CHECK_FALSE(rp[static_cast<std::size_t>(id)]);
}

TEST_CASE("annotation text files round-trip and skip comments") {
  const auto path = std::filesystem::temp_directory_path() / "tromr_codec_test.txt";
  const StaffAnnotation a = simple_annotation();
  write_annotation(path.string(), a);

  // prepend a comment line
  std::string contents = "# synthetic staff\n";
  {
    std::ifstream in(path);
    contents += std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  }
  {
    std::ofstream out(path);
    out << contents;
  }
  CHECK(read_annotation(path.string()) == a);
  std::filesystem::remove(path);
}

TEST_CASE("validate rejects class disagreement and unordered chords") {
  const Vocabulary v = default_vocab();
  StaffAnnotation a = simple_annotation();
  SUBCASE("note/non-note disagreement") {
    a.pitch[3] = "nonote";
    CHECK_THROWS_AS(validate(a, v), AlignmentError);
  }
  SUBCASE("chord members must ascend bottom-to-top") {
    a.rhythm[4] = "quarter|quarter";
    a.pitch[4] = "E4|C4";  // not in the pitch alphabet either, but order fails first
    CHECK_THROWS_AS(validate(a, v), Error);
  }
}
