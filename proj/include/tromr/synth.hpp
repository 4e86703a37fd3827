#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tromr/codec.hpp"
#include "tromr/common.hpp"
#include "tromr/rng.hpp"
#include "tromr/staffdet.hpp"

namespace tromr {

struct RenderStyle {
  int image_height = 128;
  int staff_space = 8;
  int line_thickness = 1;
  int margin_left = 12;
  int margin_right = 10;
  int min_width = 0;  // staff lines extend at least this far when > 0

  int staff_center() const { return image_height / 2; }
};

struct SymbolBox {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // half-open pixel ranges
  std::string token;
};

struct RenderedStaff {
  ImageF image;  // intensity, 1 = paper
  std::vector<SymbolBox> symbol_boxes;
  int staff_top = 0;     // y of the top staff line
  int staff_bottom = 0;  // y of the bottom staff line
};

struct AugmentProfile {
  double blur_sigma = 0.0;   // upper bound for the sampled blur sigma
  double brightness = 0.0;   // max absolute additive shift
  double contrast = 0.0;     // max relative contrast change
  double warp = 0.0;         // max corner displacement in pixels
  double noise = 0.0;        // gaussian noise sigma

  bool identity() const {
    return blur_sigma == 0 && brightness == 0 && contrast == 0 && warp == 0 && noise == 0;
  }
  static AugmentProfile camera() {
    AugmentProfile p;
    p.blur_sigma = 1.0;
    p.brightness = 0.12;
    p.contrast = 0.25;
    p.warp = 3.0;
    p.noise = 0.03;
    return p;
  }
};

struct GenConfig {
  std::uint64_t rng_seed = 0;
  double polyphonic_ratio = 0.4;
  int symbols_min = 6;
  int symbols_max = 14;
  int staves_min = 2;
  int staves_max = 5;
  double p_one_staff = 0.4;
  double p_two_staves = 0.4;
  double p_other = 0.2;
  int page_width = 1280;
  int page_height = 1024;
  RenderStyle style;
  AugmentProfile augment;  // identity() means clean output

  void validate() const {
    if (polyphonic_ratio < 0 || polyphonic_ratio > 1)
      throw ConfigError("polyphonic_ratio must lie in [0,1]");
    if (symbols_min > symbols_max || staves_min > staves_max)
      throw ConfigError("min must not exceed max in generator ranges");
    if (symbols_min < 1 || staves_min < 1) throw ConfigError("generator minima must be positive");
  }
};

struct RenderedPage {
  ImageF image;
  ImageF mask;  // 1 = staff/symbol foreground, clean geometry
  PageType page_type = PageType::one_staff_system;
  std::vector<Box> boxes;
  std::vector<std::vector<int>> systems;
  std::vector<StaffAnnotation> staves;
};

// Header (clef, key, time), body of notes/chords/rests with occasional
// barlines, final barline. Polyphonic staves carry at least one chord.
StaffAnnotation sample_annotation(Rng& rng, const GenConfig& config);

RenderedStaff render_staff(const StaffAnnotation& annotation, const RenderStyle& style = {});

RenderedPage render_page(Rng& rng, const GenConfig& config);

ImageF augment(const ImageF& image, Rng& rng, const AugmentProfile& profile);

}  // namespace tromr
