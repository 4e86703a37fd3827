#include "tromr/staffdet.hpp"

#include <algorithm>

namespace tromr {

const char* to_string(PageType t) {
  switch (t) {
    case PageType::one_staff_system: return "one_staff_system";
    case PageType::two_staves_system: return "two_staves_system";
    default: return "other";
  }
}

PageType page_type_from_string(const std::string& s) {
  if (s == "one_staff_system") return PageType::one_staff_system;
  if (s == "two_staves_system") return PageType::two_staves_system;
  if (s == "other") return PageType::other;
  throw ConfigError("unknown page type: " + s);
}

double iou(const Box& a, const Box& b) {
  const double ix = std::max(0.0, std::min(a.x1, b.x1) - std::max(a.x0, b.x0));
  const double iy = std::max(0.0, std::min(a.y1, b.y1) - std::max(a.y0, b.y0));
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

std::vector<Box> project_boxes(const ImageF& mask, const ProjectionParams& params) {
  const int h = static_cast<int>(mask.rows());
  const int w = static_cast<int>(mask.cols());
  if (h == 0 || w == 0) return {};
  const double threshold = std::max(1.0, params.threshold_frac * w);

  std::vector<int> profile(static_cast<std::size_t>(h), 0);
  for (int y = 0; y < h; ++y) {
    int count = 0;
    for (int x = 0; x < w; ++x)
      if (mask(y, x) > 0.5f) ++count;
    profile[static_cast<std::size_t>(y)] = count;
  }

  struct Band {
    int start, end;  // inclusive rows
  };
  std::vector<Band> bands;
  int y = 0;
  while (y < h) {
    if (profile[static_cast<std::size_t>(y)] >= threshold) {
      int start = y;
      while (y + 1 < h && profile[static_cast<std::size_t>(y + 1)] >= threshold) ++y;
      bands.push_back({start, y});
    }
    ++y;
  }
  if (bands.empty()) return {};

  std::vector<Band> merged;
  merged.push_back(bands[0]);
  for (std::size_t i = 1; i < bands.size(); ++i) {
    if (bands[i].start - merged.back().end - 1 < params.min_gap)
      merged.back().end = bands[i].end;
    else
      merged.push_back(bands[i]);
  }

  std::vector<Box> boxes;
  boxes.reserve(merged.size());
  for (std::size_t i = 0; i < merged.size(); ++i) {
    const Band& b = merged[i];
    int x0 = w, x1 = -1;
    for (int yy = b.start; yy <= b.end; ++yy)
      for (int x = 0; x < w; ++x)
        if (mask(yy, x) > 0.5f) {
          x0 = std::min(x0, x);
          x1 = std::max(x1, x);
        }
    // Vertical padding shares the gap with neighbours so boxes stay disjoint.
    int top_pad = params.band_pad;
    if (i > 0) top_pad = std::min(top_pad, (b.start - merged[i - 1].end - 1 + 1) / 2);
    int bottom_pad = params.band_pad;
    if (i + 1 < merged.size()) bottom_pad = std::min(bottom_pad, (merged[i + 1].start - b.end - 1) / 2);
    Box box;
    box.x0 = x0;
    box.x1 = x1 + 1;
    box.y0 = std::max(0, b.start - top_pad);
    box.y1 = std::min(h, b.end + 1 + bottom_pad);
    boxes.push_back(box);
  }
  return boxes;
}

std::vector<std::vector<int>> group_systems(int n_boxes, PageType c, bool* warning) {
  if (warning) *warning = false;
  std::vector<std::vector<int>> systems;
  if (c == PageType::two_staves_system) {
    int i = 0;
    for (; i + 1 < n_boxes; i += 2) systems.push_back({i, i + 1});
    if (i < n_boxes) {
      systems.push_back({i});
      if (warning) *warning = true;
    }
  } else {
    for (int i = 0; i < n_boxes; ++i) systems.push_back({i});
    if (c == PageType::other && warning && n_boxes > 0) *warning = true;
  }
  return systems;
}

DetectionPR evaluate_detection(const std::vector<Box>& predicted,
                               const std::vector<Box>& ground_truth, double iou_threshold) {
  struct Pair {
    double iou;
    int p, g;
  };
  std::vector<Pair> pairs;
  for (int p = 0; p < static_cast<int>(predicted.size()); ++p)
    for (int g = 0; g < static_cast<int>(ground_truth.size()); ++g) {
      const double v = iou(predicted[static_cast<std::size_t>(p)],
                           ground_truth[static_cast<std::size_t>(g)]);
      if (v >= iou_threshold) pairs.push_back({v, p, g});
    }
  std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
    if (a.iou != b.iou) return a.iou > b.iou;
    if (a.p != b.p) return a.p < b.p;
    return a.g < b.g;
  });

  std::vector<bool> used_p(predicted.size(), false), used_g(ground_truth.size(), false);
  int tp = 0;
  for (const Pair& pr : pairs) {
    if (used_p[static_cast<std::size_t>(pr.p)] || used_g[static_cast<std::size_t>(pr.g)]) continue;
    used_p[static_cast<std::size_t>(pr.p)] = true;
    used_g[static_cast<std::size_t>(pr.g)] = true;
    ++tp;
  }

  DetectionPR out;
  out.true_positives = tp;
  out.precision = predicted.empty() ? 1.0 : static_cast<double>(tp) / predicted.size();
  out.recall = ground_truth.empty() ? 1.0 : static_cast<double>(tp) / ground_truth.size();
  return out;
}

}  // namespace tromr
