#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "tromr/ag.hpp"
#include "tromr/checkpoint.hpp"
#include "tromr/common.hpp"
#include "tromr/rng.hpp"

namespace tromr {

enum class PageType { one_staff_system = 0, two_staves_system = 1, other = 2 };

const char* to_string(PageType t);
PageType page_type_from_string(const std::string& s);

struct Box {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // half-open ranges

  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  double area() const { return std::max(0.0, width()) * std::max(0.0, height()); }
};

double iou(const Box& a, const Box& b);

struct PageLayout {
  PageType page_type = PageType::other;
  std::vector<Box> boxes;
  std::vector<std::vector<int>> systems;
  bool grouping_warning = false;
};

struct ProjectionParams {
  double threshold_frac = 0.02;  // of page width, in foreground pixels per row
  int min_gap = 8;               // bands closer than this merge
  int band_pad = 4;              // vertical padding, clipped to keep boxes disjoint
};

// Horizontal projection: rows whose foreground count reaches the threshold
// form bands; each band becomes a box spanning the min/max foreground column
// inside it. Boxes come back top-to-bottom and pairwise vertically disjoint.
std::vector<Box> project_boxes(const ImageF& mask, const ProjectionParams& params = {});

// C = one_staff: singletons; two_staves: consecutive pairs (odd remainder
// left as a flagged trailing singleton); other: flagged singletons.
std::vector<std::vector<int>> group_systems(int n_boxes, PageType c, bool* warning = nullptr);

struct DetectionPR {
  double precision = 1.0;
  double recall = 1.0;
  int true_positives = 0;
};

// Greedy one-to-one matching by descending IoU at the given threshold.
DetectionPR evaluate_detection(const std::vector<Box>& predicted,
                               const std::vector<Box>& ground_truth,
                               double iou_threshold = 0.4);

struct SegNetConfig {
  int in_h = 256;
  int in_w = 1024;
  int c1 = 6;
  int c2 = 12;
  int c3 = 24;

  int feat_h() const { return in_h / 8; }
  int feat_w() const { return in_w / 8; }

  void validate() const {
    if (in_h % 8 != 0 || in_w % 8 != 0) throw ConfigError("segmentation input must be /8-aligned");
    if (c1 < 1 || c2 < 1 || c3 < 1) throw ConfigError("channel counts must be positive");
  }
  nlohmann::json to_json() const {
    return {{"in_h", in_h}, {"in_w", in_w}, {"c1", c1}, {"c2", c2}, {"c3", c3}};
  }
  static SegNetConfig from_json(const nlohmann::json& j) {
    SegNetConfig c;
    c.in_h = j.at("in_h");
    c.in_w = j.at("in_w");
    c.c1 = j.at("c1");
    c.c2 = j.at("c2");
    c.c3 = j.at("c3");
    return c;
  }
};

// Encoder-decoder staff segmenter with a page-type head over the left
// quarter of the deepest encoder feature map.
template <class S>
class SegNet {
 public:
  using Tape = ag::Tape<S>;
  using H = typename Tape::H;

  struct GraphOut {
    H mask_logits = -1;  // (in_h*in_w) x 1
    H features = -1;     // (feat_h*feat_w) x c3
    H page_logits = -1;  // 1 x 3
  };

  struct Segmentation {
    ImageF prob;  // sigmoid probabilities in [0,1]
    ImageF mask;  // binarized at 0.5
    Mat<S> features;
    PageType page_type = PageType::other;
  };

  SegNet(const SegNetConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    build_params();
    init_params(seed);
  }

  const SegNetConfig& config() const { return cfg_; }
  ag::ParamStore<S>& params() { return store_; }
  const ag::ParamStore<S>& params() const { return store_; }
  std::int64_t parameter_count() const { return store_.scalar_count(); }

  // page: ink-normalized in_h x in_w image in [0,1].
  GraphOut forward(Tape& t, const ImageF& page) const {
    if (page.rows() != cfg_.in_h || page.cols() != cfg_.in_w)
      throw ShapeError("segment: expected " + std::to_string(cfg_.in_h) + "x" +
                       std::to_string(cfg_.in_w) + " page, got " + std::to_string(page.rows()) +
                       "x" + std::to_string(page.cols()));
    Mat<S> flat(static_cast<Eigen::Index>(page.size()), 1);
    for (int y = 0; y < page.rows(); ++y)
      for (int x = 0; x < page.cols(); ++x)
        flat(static_cast<Eigen::Index>(y) * page.cols() + x, 0) = S(page(y, x));

    const int h = cfg_.in_h, w = cfg_.in_w;
    H x0 = t.constant(std::move(flat));
    H e1 = t.relu(t.conv2d(x0, h, w, 1, leaf(t, "enc1.k"), leaf(t, "enc1.b"), 5, 2));
    H e2 = t.relu(t.conv2d(e1, h / 2, w / 2, cfg_.c1, leaf(t, "enc2.k"), leaf(t, "enc2.b"), 3, 2));
    H e3 = t.relu(t.conv2d(e2, h / 4, w / 4, cfg_.c2, leaf(t, "enc3.k"), leaf(t, "enc3.b"), 3, 2));

    // Decoder with additive skip connections.
    H u2 = t.upsample2x(e3, h / 8, w / 8);
    H d2 = t.relu(t.add(
        t.conv2d(u2, h / 4, w / 4, cfg_.c3, leaf(t, "dec2.k"), leaf(t, "dec2.b"), 3, 1), e2));
    H u1 = t.upsample2x(d2, h / 4, w / 4);
    H d1 = t.relu(t.add(
        t.conv2d(u1, h / 2, w / 2, cfg_.c2, leaf(t, "dec1.k"), leaf(t, "dec1.b"), 3, 1), e1));
    H logits_half = t.conv2d(d1, h / 2, w / 2, cfg_.c1, leaf(t, "mask.k"), leaf(t, "mask.b"), 3, 1);
    H logits = t.upsample2x(logits_half, h / 2, w / 2);

    GraphOut out;
    out.mask_logits = logits;
    out.features = e3;
    out.page_logits = page_head(t, e3);
    return out;
  }

  // Page head over the left quarter of the encoder feature map only.
  H page_head(Tape& t, H features) const {
    const int fh = cfg_.feat_h(), fw = cfg_.feat_w();
    const int crop_w = fw / 4;
    std::vector<int> rows;
    rows.reserve(static_cast<std::size_t>(fh) * crop_w);
    for (int y = 0; y < fh; ++y)
      for (int x = 0; x < crop_w; ++x) rows.push_back(y * fw + x);
    H crop = t.rows_gather(features, rows);
    H c1 = t.relu(t.conv2d(crop, fh, crop_w, cfg_.c3, leaf(t, "page1.k"), leaf(t, "page1.b"), 3, 2));
    H c2 = t.relu(t.conv2d(c1, fh / 2, crop_w / 2, cfg_.c3, leaf(t, "page2.k"), leaf(t, "page2.b"),
                           3, 2));
    H pooled = t.colwise_mean(c2);
    return t.add_rowvec(t.matmul(pooled, leaf(t, "page.w")), leaf(t, "page.b"));
  }

  Segmentation segment(const ImageF& page) const {
    Tape t;
    GraphOut g = forward(t, page);
    Segmentation out;
    out.prob.resize(cfg_.in_h, cfg_.in_w);
    const Mat<S>& logits = t.val(g.mask_logits);
    for (int y = 0; y < cfg_.in_h; ++y)
      for (int x = 0; x < cfg_.in_w; ++x)
        out.prob(y, x) = static_cast<float>(
            1.0 / (1.0 + std::exp(-double(logits(static_cast<Eigen::Index>(y) * cfg_.in_w + x, 0)))));
    out.mask = (out.prob.array() > 0.5f).cast<float>();
    out.features = t.val(g.features);
    int c = 0;
    t.val(g.page_logits).row(0).maxCoeff(&c);
    out.page_type = static_cast<PageType>(c);
    return out;
  }

  PageType classify_page(const Mat<S>& features) const {
    Tape t;
    H f = t.constant(features);
    H logits = page_head(t, f);
    int c = 0;
    t.val(logits).row(0).maxCoeff(&c);
    return static_cast<PageType>(c);
  }

  void save(const std::string& path) const {
    CheckpointMeta meta;
    meta.kind = "detector";
    meta.config = cfg_.to_json();
    std::vector<NamedTensor> tensors;
    for (const auto& e : store_.entries) tensors.emplace_back(e.name, e.w.template cast<float>());
    save_checkpoint(path, meta, tensors);
  }

  static SegNet load(const std::string& path) {
    auto [meta, tensors] = load_checkpoint(path, "detector");
    SegNet n(SegNetConfig::from_json(meta.config), 0);
    if (tensors.size() != n.store_.count())
      throw LoadError("checkpoint tensor count mismatch in " + path);
    for (const auto& [name, w] : tensors) {
      const int id = n.store_.find(name);
      if (id < 0) throw LoadError("unexpected tensor '" + name + "' in " + path);
      if (n.store_[id].rows() != w.rows() || n.store_[id].cols() != w.cols())
        throw LoadError("tensor shape mismatch for '" + name + "' in " + path);
      n.store_[id] = w.template cast<S>();
    }
    return n;
  }

 private:
  H leaf(Tape& t, const std::string& name) const {
    const int id = store_.find(name);
    if (id < 0) throw ConfigError("unknown parameter: " + name);
    return t.leaf(store_[id], id);
  }

  void add_conv(const std::string& name, int k, int cin, int cout) {
    store_.add(name + ".k", Mat<S>::Zero(k * k * cin, cout));
    kaiming_.push_back(true);
    store_.add(name + ".b", Mat<S>::Zero(1, cout));
    kaiming_.push_back(false);
  }

  void build_params() {
    add_conv("enc1", 5, 1, cfg_.c1);
    add_conv("enc2", 3, cfg_.c1, cfg_.c2);
    add_conv("enc3", 3, cfg_.c2, cfg_.c3);
    add_conv("dec2", 3, cfg_.c3, cfg_.c2);
    add_conv("dec1", 3, cfg_.c2, cfg_.c1);
    add_conv("mask", 3, cfg_.c1, 1);
    add_conv("page1", 3, cfg_.c3, cfg_.c3);
    add_conv("page2", 3, cfg_.c3, cfg_.c3);
    store_.add("page.w", Mat<S>::Zero(cfg_.c3, 3));
    kaiming_.push_back(true);
    store_.add("page.b", Mat<S>::Zero(1, 3));
    kaiming_.push_back(false);
  }

  void init_params(std::uint64_t seed) {
    Rng rng(mix_seed(seed, 0x5e6));
    for (std::size_t i = 0; i < store_.count(); ++i) {
      Mat<S>& w = store_[static_cast<int>(i)];
      if (!kaiming_[i]) {
        w.setZero();
        continue;
      }
      const double std = std::sqrt(2.0 / static_cast<double>(w.rows()));
      for (Eigen::Index j = 0; j < w.size(); ++j) w.data()[j] = S(rng.normal() * std);
    }
  }

  SegNetConfig cfg_;
  ag::ParamStore<S> store_;
  std::vector<bool> kaiming_;
};

}  // namespace tromr
