#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "tromr/ag.hpp"
#include "tromr/checkpoint.hpp"
#include "tromr/codec.hpp"
#include "tromr/common.hpp"
#include "tromr/rng.hpp"

namespace tromr {

struct ModelConfig {
  int image_height = 128;
  int image_width = 1280;
  int patch_size = 16;
  int embed_dim = 256;
  int encoder_layers = 4;
  int decoder_layers = 4;
  int heads = 8;
  int max_decode_len = 256;
  int rhythm_vocab = 0;
  int pitch_vocab = 0;
  int accidental_vocab = 0;

  int patches() const { return image_height * image_width / (patch_size * patch_size); }
  int conv_c1() const { return std::max(8, embed_dim / 8); }
  int conv_c2() const { return std::max(16, embed_dim / 4); }
  int ffn_dim() const { return 4 * embed_dim; }

  void validate() const {
    if (image_height <= 0 || image_width <= 0 || patch_size <= 0)
      throw ConfigError("image/patch dimensions must be positive");
    if (image_height % patch_size != 0 || image_width % patch_size != 0)
      throw ShapeError("image dimensions must be divisible by the patch size");
    if (embed_dim <= 0 || heads <= 0 || embed_dim % heads != 0)
      throw ConfigError("attention heads must divide the embedding dimension");
    if (encoder_layers <= 0 || decoder_layers <= 0) throw ConfigError("layer counts must be positive");
    if (max_decode_len < 1) throw ConfigError("max_decode_len must be at least 1");
    if (rhythm_vocab < 4 || pitch_vocab < 4 || accidental_vocab < 4)
      throw ConfigError("vocabulary sizes missing from model config");
  }

  nlohmann::json to_json() const {
    return {{"image_height", image_height},   {"image_width", image_width},
            {"patch_size", patch_size},       {"embed_dim", embed_dim},
            {"encoder_layers", encoder_layers}, {"decoder_layers", decoder_layers},
            {"heads", heads},                 {"max_decode_len", max_decode_len},
            {"rhythm_vocab", rhythm_vocab},   {"pitch_vocab", pitch_vocab},
            {"accidental_vocab", accidental_vocab}};
  }
  static ModelConfig from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.image_height = j.at("image_height");
    c.image_width = j.at("image_width");
    c.patch_size = j.at("patch_size");
    c.embed_dim = j.at("embed_dim");
    c.encoder_layers = j.at("encoder_layers");
    c.decoder_layers = j.at("decoder_layers");
    c.heads = j.at("heads");
    c.max_decode_len = j.at("max_decode_len");
    c.rhythm_vocab = j.at("rhythm_vocab");
    c.pitch_vocab = j.at("pitch_vocab");
    c.accidental_vocab = j.at("accidental_vocab");
    return c;
  }
};

template <class S>
struct BranchHandles {
  typename ag::Tape<S>::H rhythm = -1;
  typename ag::Tape<S>::H pitch = -1;
  typename ag::Tape<S>::H accidental = -1;
  typename ag::Tape<S>::H note = -1;
};

// Raw greedy decoder output before symbol conversion.
struct GreedyIds {
  std::vector<int> rhythm, pitch, accidental;
};

namespace detail {

inline void stride_split(int p, int& s1, int& s2) {
  s1 = static_cast<int>(std::floor(std::sqrt(static_cast<double>(p))));
  while (s1 > 1 && p % s1 != 0) --s1;
  s2 = p / s1;
}

}  // namespace detail

template <class S>
class TrOMRModel {
 public:
  using Tape = ag::Tape<S>;
  using H = typename Tape::H;

  TrOMRModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    build_params();
    init_params(seed);
  }

  const ModelConfig& config() const { return cfg_; }
  ag::ParamStore<S>& params() { return store_; }
  const ag::ParamStore<S>& params() const { return store_; }
  std::int64_t parameter_count() const { return store_.scalar_count(); }

  const Mat<S>& param(const std::string& name) const {
    const int id = store_.find(name);
    if (id < 0) throw ConfigError("unknown parameter: " + name);
    return store_[id];
  }
  Mat<S>& param(const std::string& name) {
    const int id = store_.find(name);
    if (id < 0) throw ConfigError("unknown parameter: " + name);
    return store_[id];
  }

  // image: H x W grayscale, ink-normalized to [0,1]. Returns the N x D patch
  // sequence with the learnable 1-D positional embedding added.
  H patch_embed(Tape& t, const ImageF& image) const {
    if (image.rows() != cfg_.image_height || image.cols() != cfg_.image_width)
      throw ShapeError("patch_embed: expected " + std::to_string(cfg_.image_height) + "x" +
                       std::to_string(cfg_.image_width) + " image, got " +
                       std::to_string(image.rows()) + "x" + std::to_string(image.cols()));
    Mat<S> flat(static_cast<Eigen::Index>(image.size()), 1);
    for (int y = 0; y < image.rows(); ++y)
      for (int x = 0; x < image.cols(); ++x)
        flat(static_cast<Eigen::Index>(y) * image.cols() + x, 0) = S(image(y, x));

    int s1 = 0, s2 = 0;
    detail::stride_split(cfg_.patch_size, s1, s2);
    const int h1 = cfg_.image_height / s1, w1 = cfg_.image_width / s1;
    const int h2 = h1 / s2, w2 = w1 / s2;

    H x = t.constant(std::move(flat));
    x = res_block(t, x, cfg_.image_height, cfg_.image_width, 1, cfg_.conv_c1(), s1, "conv1");
    x = res_block(t, x, h1, w1, cfg_.conv_c1(), cfg_.conv_c2(), s2, "conv2");
    (void)h2;
    (void)w2;
    H proj = t.add_rowvec(t.matmul(x, leaf(t, "proj.w")), leaf(t, "proj.b"));
    return t.add(proj, leaf(t, "enc_pos"));
  }

  // ViT-style pre-LN encoder over an N x D sequence; N need not equal the
  // configured patch count (positional information is patch_embed's job).
  H encode(Tape& t, H x) const {
    if (t.val(x).cols() != cfg_.embed_dim) throw ShapeError("encode: embedding width mismatch");
    for (int l = 0; l < cfg_.encoder_layers; ++l) {
      const std::string p = "enc" + std::to_string(l);
      H normed = layernorm(t, x, p + ".ln1");
      x = t.add(x, attention(t, normed, normed, p + ".attn", false));
      H normed2 = layernorm(t, x, p + ".ln2");
      x = t.add(x, ffn(t, normed2, p + ".ffn"));
    }
    return layernorm(t, x, "enc.ln");
  }

  // Eq-style summed decoder input: z_i = Emb1(t1_i)+Emb2(t2_i)+Emb3(t3_i)+PE_i.
  H compose_decoder_input(Tape& t, const std::vector<int>& t1, const std::vector<int>& t2,
                          const std::vector<int>& t3) const {
    if (t1.size() != t2.size() || t1.size() != t3.size())
      throw AlignmentError("decoder token streams have unequal lengths");
    const int T = static_cast<int>(t1.size());
    if (T == 0) throw ShapeError("decoder input is empty");
    if (T > cfg_.max_decode_len) throw ShapeError("decoder input exceeds max_decode_len");
    std::vector<int> pos(static_cast<std::size_t>(T));
    for (int i = 0; i < T; ++i) pos[static_cast<std::size_t>(i)] = i;
    H e1 = t.rows_gather(leaf(t, "emb.rhythm"), t1);
    H e2 = t.rows_gather(leaf(t, "emb.pitch"), t2);
    H e3 = t.rows_gather(leaf(t, "emb.accidental"), t3);
    H pe = t.rows_gather(leaf(t, "dec_pos"), pos);
    return t.add(t.add(e1, e2), t.add(e3, pe));
  }

  // Original post-LN Transformer decoder with causal self-attention.
  H decode(Tape& t, H memory, H z) const {
    const int T = static_cast<int>(t.val(z).rows());
    Mat<S> mask = Mat<S>::Zero(T, T);
    for (int i = 0; i < T; ++i)
      for (int j = i + 1; j < T; ++j) mask(i, j) = S(-1e9);
    H x = z;
    for (int l = 0; l < cfg_.decoder_layers; ++l) {
      const std::string p = "dec" + std::to_string(l);
      x = layernorm(t, t.add(x, attention(t, x, x, p + ".self", true, &mask)), p + ".ln1");
      x = layernorm(t, t.add(x, attention(t, x, memory, p + ".cross", false)), p + ".ln2");
      x = layernorm(t, t.add(x, ffn(t, x, p + ".ffn")), p + ".ln3");
    }
    return x;
  }

  // Four linear heads over the final decoder hidden states; the note branch
  // reads the same last hidden layer.
  BranchHandles<S> branch_heads(Tape& t, H hidden) const {
    BranchHandles<S> b;
    b.rhythm = t.add_rowvec(t.matmul(hidden, leaf(t, "head.rhythm.w")), leaf(t, "head.rhythm.b"));
    b.pitch = t.add_rowvec(t.matmul(hidden, leaf(t, "head.pitch.w")), leaf(t, "head.pitch.b"));
    b.accidental = t.add_rowvec(t.matmul(hidden, leaf(t, "head.accidental.w")),
                                leaf(t, "head.accidental.b"));
    b.note = t.add_rowvec(t.matmul(hidden, leaf(t, "head.note.w")), leaf(t, "head.note.b"));
    return b;
  }

  BranchHandles<S> teacher_forward(Tape& t, const ImageF& image, const std::vector<int>& in1,
                                   const std::vector<int>& in2, const std::vector<int>& in3) const {
    H memory = encode(t, patch_embed(t, image));
    H z = compose_decoder_input(t, in1, in2, in3);
    return branch_heads(t, decode(t, memory, z));
  }

  Mat<S> encode_memory(const ImageF& image) const {
    Tape t;
    return t.val(encode(t, patch_embed(t, image)));
  }

  GreedyIds greedy_ids(const ImageF& image, const Vocabulary& vocab) const {
    check_vocab(vocab);
    const Mat<S> memory = encode_memory(image);
    GreedyIds out;
    out.rhythm.push_back(vocab.rhythm.bos);
    out.pitch.push_back(vocab.pitch.bos);
    out.accidental.push_back(vocab.accidental.bos);
    while (static_cast<int>(out.rhythm.size()) < cfg_.max_decode_len) {
      Tape t;
      H mem = t.constant(memory);
      H z = compose_decoder_input(t, out.rhythm, out.pitch, out.accidental);
      BranchHandles<S> heads = branch_heads(t, decode(t, mem, z));
      const Eigen::Index last = t.val(heads.rhythm).rows() - 1;
      int r = 0, p = 0, a = 0;
      t.val(heads.rhythm).row(last).maxCoeff(&r);
      t.val(heads.pitch).row(last).maxCoeff(&p);
      t.val(heads.accidental).row(last).maxCoeff(&a);
      out.rhythm.push_back(r);
      out.pitch.push_back(p);
      out.accidental.push_back(a);
      if (r == vocab.rhythm.eos) break;
    }
    return out;
  }

  // Autoregressive argmax decoding; the rhythm branch's EOS terminates all
  // three streams. Streams that emitted EOS early are padded back to the
  // rhythm length with the non-note placeholders.
  StaffAnnotation greedy_predict(const ImageF& image, const Vocabulary& vocab) const {
    const GreedyIds ids = greedy_ids(image, vocab);
    auto strip = [](const std::vector<int>& stream, const Alphabet& a) {
      std::vector<std::string> out;
      for (std::size_t i = 1; i < stream.size(); ++i) {
        const int id = stream[i];
        if (id == a.eos) break;
        if (a.is_special(id)) continue;
        out.push_back(a.tokens[static_cast<std::size_t>(id)]);
      }
      return out;
    };
    StaffAnnotation hyp;
    hyp.rhythm = strip(ids.rhythm, vocab.rhythm);
    hyp.pitch = strip(ids.pitch, vocab.pitch);
    hyp.accidental = strip(ids.accidental, vocab.accidental);
    hyp.pitch.resize(hyp.rhythm.size(), kNoNote);
    hyp.accidental.resize(hyp.rhythm.size(), kNoNoteAcc);
    return hyp;
  }

  void save(const std::string& path) const {
    CheckpointMeta meta;
    meta.kind = "recognizer";
    meta.config = cfg_.to_json();
    std::vector<NamedTensor> tensors;
    for (const auto& e : store_.entries)
      tensors.emplace_back(e.name, e.w.template cast<float>());
    save_checkpoint(path, meta, tensors);
  }

  static TrOMRModel load(const std::string& path) {
    auto [meta, tensors] = load_checkpoint(path, "recognizer");
    TrOMRModel m(ModelConfig::from_json(meta.config), 0);
    m.fill_from(tensors, path);
    return m;
  }

  void fill_from(const std::vector<NamedTensor>& tensors, const std::string& origin) {
    if (tensors.size() != store_.count())
      throw LoadError("checkpoint tensor count mismatch in " + origin);
    for (const auto& [name, w] : tensors) {
      const int id = store_.find(name);
      if (id < 0) throw LoadError("unexpected tensor '" + name + "' in " + origin);
      if (store_[id].rows() != w.rows() || store_[id].cols() != w.cols())
        throw LoadError("tensor shape mismatch for '" + name + "' in " + origin);
      store_[id] = w.template cast<S>();
    }
  }

 private:
  enum class Init { Zero, One, Xavier, Kaiming, Normal02 };

  struct Spec {
    Init init;
    double fan_in = 0;
    double fan_out = 0;
  };

  H leaf(Tape& t, const std::string& name) const {
    const int id = store_.find(name);
    if (id < 0) throw ConfigError("unknown parameter: " + name);
    return t.leaf(store_[id], id);
  }

  void add_param(const std::string& name, int rows, int cols, Init init) {
    Spec s;
    s.init = init;
    s.fan_in = rows;
    s.fan_out = cols;
    store_.add(name, Mat<S>::Zero(rows, cols));
    specs_.push_back(s);
  }

  void add_linear(const std::string& name, int in, int out) {
    add_param(name + ".w", in, out, Init::Xavier);
    add_param(name + ".b", 1, out, Init::Zero);
  }

  void add_layernorm(const std::string& name, int dim) {
    add_param(name + ".g", 1, dim, Init::One);
    add_param(name + ".b", 1, dim, Init::Zero);
  }

  void add_attention(const std::string& name, int dim) {
    add_linear(name + ".q", dim, dim);
    add_linear(name + ".k", dim, dim);
    add_linear(name + ".v", dim, dim);
    add_linear(name + ".o", dim, dim);
  }

  void add_conv(const std::string& name, int k, int cin, int cout) {
    add_param(name + ".k", k * k * cin, cout, Init::Kaiming);
    add_param(name + ".b", 1, cout, Init::Zero);
  }

  void build_params() {
    const int d = cfg_.embed_dim;
    add_conv("conv1a", 3, 1, cfg_.conv_c1());
    add_conv("conv1b", 3, cfg_.conv_c1(), cfg_.conv_c1());
    add_conv("conv1s", 1, 1, cfg_.conv_c1());
    add_conv("conv2a", 3, cfg_.conv_c1(), cfg_.conv_c2());
    add_conv("conv2b", 3, cfg_.conv_c2(), cfg_.conv_c2());
    add_conv("conv2s", 1, cfg_.conv_c1(), cfg_.conv_c2());
    add_linear("proj", cfg_.conv_c2(), d);
    add_param("enc_pos", cfg_.patches(), d, Init::Normal02);
    for (int l = 0; l < cfg_.encoder_layers; ++l) {
      const std::string p = "enc" + std::to_string(l);
      add_layernorm(p + ".ln1", d);
      add_attention(p + ".attn", d);
      add_layernorm(p + ".ln2", d);
      add_linear(p + ".ffn.1", d, cfg_.ffn_dim());
      add_linear(p + ".ffn.2", cfg_.ffn_dim(), d);
    }
    add_layernorm("enc.ln", d);
    add_param("emb.rhythm", cfg_.rhythm_vocab, d, Init::Normal02);
    add_param("emb.pitch", cfg_.pitch_vocab, d, Init::Normal02);
    add_param("emb.accidental", cfg_.accidental_vocab, d, Init::Normal02);
    add_param("dec_pos", cfg_.max_decode_len, d, Init::Normal02);
    for (int l = 0; l < cfg_.decoder_layers; ++l) {
      const std::string p = "dec" + std::to_string(l);
      add_attention(p + ".self", d);
      add_layernorm(p + ".ln1", d);
      add_attention(p + ".cross", d);
      add_layernorm(p + ".ln2", d);
      add_linear(p + ".ffn.1", d, cfg_.ffn_dim());
      add_linear(p + ".ffn.2", cfg_.ffn_dim(), d);
      add_layernorm(p + ".ln3", d);
    }
    add_linear("head.rhythm", d, cfg_.rhythm_vocab);
    add_linear("head.pitch", d, cfg_.pitch_vocab);
    add_linear("head.accidental", d, cfg_.accidental_vocab);
    add_linear("head.note", d, 2);
  }

  void init_params(std::uint64_t seed) {
    Rng rng(mix_seed(seed, 0x7061726d));
    for (std::size_t i = 0; i < store_.count(); ++i) {
      Mat<S>& w = store_[static_cast<int>(i)];
      const Spec& s = specs_[i];
      switch (s.init) {
        case Init::Zero: w.setZero(); break;
        case Init::One: w.setOnes(); break;
        case Init::Xavier: {
          const double lim = std::sqrt(6.0 / (s.fan_in + s.fan_out));
          for (Eigen::Index j = 0; j < w.size(); ++j)
            w.data()[j] = S(rng.uniform(-lim, lim));
          break;
        }
        case Init::Kaiming: {
          const double std = std::sqrt(2.0 / s.fan_in);
          for (Eigen::Index j = 0; j < w.size(); ++j) w.data()[j] = S(rng.normal() * std);
          break;
        }
        case Init::Normal02:
          for (Eigen::Index j = 0; j < w.size(); ++j) w.data()[j] = S(rng.normal() * 0.02);
          break;
      }
    }
  }

  H linear(Tape& t, H x, const std::string& name) const {
    return t.add_rowvec(t.matmul(x, leaf(t, name + ".w")), leaf(t, name + ".b"));
  }

  H layernorm(Tape& t, H x, const std::string& name) const {
    return t.layernorm_rows(x, leaf(t, name + ".g"), leaf(t, name + ".b"));
  }

  H ffn(Tape& t, H x, const std::string& name) const {
    return linear(t, t.gelu(linear(t, x, name + ".1")), name + ".2");
  }

  H attention(Tape& t, H q_in, H kv_in, const std::string& name, bool causal,
              const Mat<S>* mask = nullptr) const {
    const int d = cfg_.embed_dim;
    const int dk = d / cfg_.heads;
    H q = linear(t, q_in, name + ".q");
    H k = linear(t, kv_in, name + ".k");
    H v = linear(t, kv_in, name + ".v");
    std::vector<H> ctx;
    ctx.reserve(static_cast<std::size_t>(cfg_.heads));
    for (int h = 0; h < cfg_.heads; ++h) {
      H qh = t.slice_cols(q, h * dk, dk);
      H kh = t.slice_cols(k, h * dk, dk);
      H vh = t.slice_cols(v, h * dk, dk);
      H scores = t.scale(t.matmul(qh, t.transpose(kh)), S(1.0 / std::sqrt(double(dk))));
      if (causal && mask) scores = t.add_const(scores, *mask);
      ctx.push_back(t.matmul(t.softmax_rows(scores), vh));
    }
    return linear(t, t.concat_cols(ctx), name + ".o");
  }

  H res_block(Tape& t, H x, int height, int width, int cin, int cout, int stride,
              const std::string& name) const {
    H a = t.relu(t.conv2d(x, height, width, cin, leaf(t, name + "a.k"), leaf(t, name + "a.b"), 3,
                          stride));
    H b = t.conv2d(a, height / stride, width / stride, cout, leaf(t, name + "b.k"),
                   leaf(t, name + "b.b"), 3, 1);
    H s = t.conv2d(x, height, width, cin, leaf(t, name + "s.k"), leaf(t, name + "s.b"), 1, stride);
    return t.relu(t.add(b, s));
  }

  void check_vocab(const Vocabulary& vocab) const {
    if (vocab.rhythm.size() != cfg_.rhythm_vocab || vocab.pitch.size() != cfg_.pitch_vocab ||
        vocab.accidental.size() != cfg_.accidental_vocab)
      throw ConfigError("vocabulary sizes do not match the model config");
  }

  ModelConfig cfg_;
  ag::ParamStore<S> store_;
  std::vector<Spec> specs_;
};

}  // namespace tromr
