#include "tromr/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "tromr/image.hpp"

namespace tromr {

namespace {

// ---------------------------------------------------------------- canvas ---

struct Canvas {
  ImageF& img;
  int bx0 = 0, by0 = 0, bx1 = 0, by1 = 0;
  bool tracking = false;

  explicit Canvas(ImageF& i) : img(i) {}

  void begin() {
    tracking = true;
    bx0 = std::numeric_limits<int>::max();
    by0 = std::numeric_limits<int>::max();
    bx1 = std::numeric_limits<int>::min();
    by1 = std::numeric_limits<int>::min();
  }

  SymbolBox end(const std::string& token) {
    tracking = false;
    SymbolBox b;
    b.token = token;
    if (bx1 >= bx0) {
      b.x0 = bx0;
      b.y0 = by0;
      b.x1 = bx1 + 1;
      b.y1 = by1 + 1;
    }
    return b;
  }

  void plot(int x, int y) {
    if (x < 0 || y < 0 || x >= img.cols() || y >= img.rows()) return;
    img(y, x) = 0.0f;
    if (tracking) {
      bx0 = std::min(bx0, x);
      by0 = std::min(by0, y);
      bx1 = std::max(bx1, x);
      by1 = std::max(by1, y);
    }
  }

  void block(int x, int y, int t) {
    for (int dy = 0; dy < t; ++dy)
      for (int dx = 0; dx < t; ++dx) plot(x + dx, y + dy);
  }

  void hline(int xa, int xb, int y, int t = 1) {
    if (xb < xa) std::swap(xa, xb);
    for (int x = xa; x <= xb; ++x)
      for (int d = 0; d < t; ++d) plot(x, y + d);
  }

  void vline(int x, int ya, int yb, int t = 1) {
    if (yb < ya) std::swap(ya, yb);
    for (int y = ya; y <= yb; ++y)
      for (int d = 0; d < t; ++d) plot(x + d, y);
  }

  void line(int xa, int ya, int xb, int yb, int t = 1) {
    const int steps = std::max({std::abs(xb - xa), std::abs(yb - ya), 1});
    for (int i = 0; i <= steps; ++i) {
      const int x = xa + (xb - xa) * i / steps;
      const int y = ya + (yb - ya) * i / steps;
      block(x, y, t);
    }
  }

  void ellipse(int cx, int cy, int rx, int ry, bool filled, int t = 1) {
    rx = std::max(rx, 1);
    ry = std::max(ry, 1);
    if (filled) {
      for (int dy = -ry; dy <= ry; ++dy) {
        const double f = 1.0 - static_cast<double>(dy) * dy / (static_cast<double>(ry) * ry);
        const int half = static_cast<int>(std::floor(rx * std::sqrt(std::max(0.0, f))));
        hline(cx - half, cx + half, cy + dy);
      }
    } else {
      const int steps = std::max(16, 4 * (rx + ry));
      for (int i = 0; i < steps; ++i) {
        const double a = 2.0 * M_PI * i / steps;
        block(cx + static_cast<int>(std::lround(rx * std::cos(a))),
              cy + static_cast<int>(std::lround(ry * std::sin(a))), t);
      }
    }
  }

  void disc(int cx, int cy, int r) { ellipse(cx, cy, r, r, true); }

  // Left half of an ellipse outline; the building block for braces.
  void half_ellipse_left(int cx, int cy, int rx, int ry, int t = 1) {
    const int steps = std::max(16, 4 * (rx + ry));
    for (int i = 0; i <= steps; ++i) {
      const double a = M_PI / 2.0 + M_PI * i / steps;
      block(cx + static_cast<int>(std::lround(rx * std::cos(a))),
            cy + static_cast<int>(std::lround(ry * std::sin(a))), t);
    }
  }
};

// --------------------------------------------------------------- bitfont ---

// 3x5 glyphs for time signatures.
const char* font_rows(char c) {
  switch (c) {
    case '2': return "111001111100111";
    case '3': return "111001111001111";
    case '4': return "101101111001001";
    case '6': return "111100111101111";
    case '8': return "111101111101111";
    case 'C': return "111100100100111";
    default: return nullptr;
  }
}

void draw_char(Canvas& c, char ch, int x, int y, int cell) {
  const char* rows = font_rows(ch);
  if (!rows) return;
  for (int r = 0; r < 5; ++r)
    for (int k = 0; k < 3; ++k)
      if (rows[r * 3 + k] == '1')
        for (int dy = 0; dy < cell; ++dy)
          for (int dx = 0; dx < cell; ++dx) c.plot(x + k * cell + dx, y + r * cell + dy);
}

// ------------------------------------------------------------- token info ---

struct Duration {
  std::string base;
  bool dotted = false;
  bool filled = false;
  bool stem = false;
  int flags = 0;
};

Duration parse_duration(const std::string& tok) {
  Duration d;
  d.base = tok;
  if (!d.base.empty() && d.base.back() == '.') {
    d.dotted = true;
    d.base.pop_back();
  }
  if (d.base == "whole") {
    d.stem = false;
  } else if (d.base == "half") {
    d.stem = true;
  } else if (d.base == "quarter") {
    d.stem = true;
    d.filled = true;
  } else if (d.base == "eighth") {
    d.stem = true;
    d.filled = true;
    d.flags = 1;
  } else if (d.base == "16th") {
    d.stem = true;
    d.filled = true;
    d.flags = 2;
  } else {
    throw RenderError("unsupported duration token: " + tok);
  }
  return d;
}

enum class Clef { treble, bass };

int clef_base_index(Clef c) { return c == Clef::treble ? pitch_index("E4") : pitch_index("G2"); }

// ---------------------------------------------------------------- layout ---

struct Geometry {
  const RenderStyle& style;
  int bottom_line;  // y of the bottom staff line

  explicit Geometry(const RenderStyle& st)
      : style(st), bottom_line(st.staff_center() + 2 * st.staff_space) {}

  int s() const { return style.staff_space; }
  int y_of_step(int step) const { return bottom_line - step * s() / 2; }
  int top_line() const { return y_of_step(8); }
};

int advance_of(const std::string& rhythm_token, int s) {
  if (rhythm_token.rfind("clef-", 0) == 0) return 4 * s;
  if (rhythm_token.rfind("keysig-", 0) == 0) {
    int n = 0;
    const std::string body = rhythm_token.substr(7);
    if (body != "0") n = std::stoi(body.substr(0, body.size() - 1));
    return s + static_cast<int>(1.1 * s) * std::max(1, n);
  }
  if (rhythm_token.rfind("timesig-", 0) == 0) return 3 * s;
  if (rhythm_token == "barline") return 2 * s;
  if (rhythm_token.rfind("rest-", 0) == 0) return 3 * s;
  return 4 * s;  // notes and chords
}

void draw_clef(Canvas& c, const Geometry& g, Clef clef, int x) {
  const int s = g.s();
  if (clef == Clef::treble) {
    c.vline(x, g.y_of_step(13), g.y_of_step(-3), std::max(1, s / 8));
    c.ellipse(x, g.y_of_step(2), static_cast<int>(0.8 * s), static_cast<int>(0.9 * s), false,
              std::max(1, s / 8));
    c.disc(x, g.y_of_step(-3), std::max(1, s / 4));
    c.line(x, g.y_of_step(13), x + s / 2, g.y_of_step(11), std::max(1, s / 8));
  } else {
    c.ellipse(x, g.y_of_step(6), static_cast<int>(0.9 * s), static_cast<int>(0.9 * s), false,
              std::max(1, s / 6));
    c.disc(x, g.y_of_step(6), std::max(1, s / 3));
    c.disc(x + static_cast<int>(1.5 * s), g.y_of_step(7), std::max(1, s / 5));
    c.disc(x + static_cast<int>(1.5 * s), g.y_of_step(5), std::max(1, s / 5));
  }
}

void draw_sharp(Canvas& c, const Geometry& g, int x, int y) {
  const int s = g.s();
  const int h = static_cast<int>(0.8 * s);
  c.vline(x - s / 5, y - h, y + h);
  c.vline(x + s / 5, y - h, y + h);
  c.line(x - s / 2, y - s / 4 + s / 8, x + s / 2, y - s / 4 - s / 8);
  c.line(x - s / 2, y + s / 4 + s / 8, x + s / 2, y + s / 4 - s / 8);
}

void draw_flat(Canvas& c, const Geometry& g, int x, int y) {
  const int s = g.s();
  c.vline(x - s / 4, y - static_cast<int>(1.2 * s), y + s / 3);
  c.ellipse(x - s / 4 + s / 4, y + s / 8, s / 4, s / 4, false);
}

void draw_natural(Canvas& c, const Geometry& g, int x, int y) {
  const int s = g.s();
  const int h = static_cast<int>(0.8 * s);
  c.vline(x - s / 5, y - h, y + s / 4);
  c.vline(x + s / 5, y - s / 4, y + h);
  c.hline(x - s / 5, x + s / 5, y - s / 4);
  c.hline(x - s / 5, x + s / 5, y + s / 4);
}

void draw_accidental(Canvas& c, const Geometry& g, const std::string& acc, int x, int y) {
  if (acc == "none") return;
  if (acc == "sharp")
    draw_sharp(c, g, x, y);
  else if (acc == "flat")
    draw_flat(c, g, x, y);
  else if (acc == "natural")
    draw_natural(c, g, x, y);
  else
    throw RenderError("unsupported accidental token: " + acc);
}

void draw_rest(Canvas& c, const Geometry& g, const Duration& d, int x) {
  const int s = g.s();
  if (d.base == "whole") {
    for (int dy = 0; dy < std::max(2, s / 2); ++dy)
      c.hline(x - static_cast<int>(0.6 * s), x + static_cast<int>(0.6 * s), g.y_of_step(6) + dy);
  } else if (d.base == "half") {
    for (int dy = 0; dy < std::max(2, s / 2); ++dy)
      c.hline(x - static_cast<int>(0.6 * s), x + static_cast<int>(0.6 * s), g.y_of_step(4) - dy);
  } else if (d.base == "quarter") {
    const int t = std::max(1, s / 5);
    c.line(x - s / 4, g.y_of_step(7), x + s / 3, g.y_of_step(6), t);
    c.line(x + s / 3, g.y_of_step(6), x - s / 4, g.y_of_step(4), t);
    c.line(x - s / 4, g.y_of_step(4), x + s / 3, g.y_of_step(2), t);
  } else {
    const int t = std::max(1, s / 6);
    c.line(x + s / 3, g.y_of_step(6), x - s / 4, g.y_of_step(2), t);
    c.disc(x - s / 8, g.y_of_step(5), std::max(1, s / 5));
    if (d.flags >= 2) c.disc(x + s / 8, g.y_of_step(6), std::max(1, s / 5));
  }
  if (d.dotted) c.disc(x + s, g.y_of_step(5), std::max(1, s / 5));
}

void draw_note(Canvas& c, const Geometry& g, const Duration& d, const std::vector<int>& steps,
               const std::vector<std::string>& accidentals, int x) {
  const int s = g.s();
  const int rx = std::max(2, static_cast<int>(0.62 * s));
  const int ry = std::max(1, static_cast<int>(0.48 * s));

  // Ledger lines cover every even step between the staff and the heads.
  const int lo = *std::min_element(steps.begin(), steps.end());
  const int hi = *std::max_element(steps.begin(), steps.end());
  const int lowest_ledger = (lo % 2 == 0) ? lo : lo + 1;
  const int highest_ledger = (hi % 2 == 0) ? hi : hi - 1;
  for (int step = -2; step >= lowest_ledger; step -= 2)
    c.hline(x - static_cast<int>(1.1 * s), x + static_cast<int>(1.1 * s), g.y_of_step(step),
            g.style.line_thickness);
  for (int step = 10; step <= highest_ledger; step += 2)
    c.hline(x - static_cast<int>(1.1 * s), x + static_cast<int>(1.1 * s), g.y_of_step(step),
            g.style.line_thickness);

  for (std::size_t m = 0; m < steps.size(); ++m) {
    const int y = g.y_of_step(steps[m]);
    c.ellipse(x, y, rx, ry, d.filled, std::max(1, s / 6));
    draw_accidental(c, g, accidentals[m], x - static_cast<int>(1.5 * s), y);
    if (d.dotted) c.disc(x + rx + std::max(2, s / 3), y - s / 4, std::max(1, s / 5));
  }

  if (d.stem) {
    const double mean = static_cast<double>(lo + hi) / 2.0;
    const int t = std::max(1, s / 8);
    int tip_y;
    int sx;
    if (mean < 4.0) {  // stem up
      sx = x + rx - t;
      tip_y = g.y_of_step(hi) - static_cast<int>(3.2 * s);
      c.vline(sx, tip_y, g.y_of_step(lo), t);
    } else {  // stem down
      sx = x - rx;
      tip_y = g.y_of_step(lo) + static_cast<int>(3.2 * s);
      c.vline(sx, g.y_of_step(hi), tip_y, t);
    }
    for (int f = 0; f < d.flags; ++f) {
      const int dir = mean < 4.0 ? 1 : -1;
      const int fy = tip_y + dir * f * std::max(2, s / 2);
      c.line(sx, fy, sx + static_cast<int>(0.9 * s), fy + dir * static_cast<int>(0.7 * s),
             std::max(1, s / 6));
    }
  }
}

void draw_keysig(Canvas& c, const Geometry& g, const std::string& token, int x) {
  static const int sharp_steps[7] = {8, 5, 9, 6, 3, 7, 4};
  static const int flat_steps[7] = {4, 7, 3, 6, 2, 5, 1};
  const std::string body = token.substr(7);
  if (body == "0") return;  // no accidentals drawn, advance still consumed
  const int n = std::stoi(body.substr(0, body.size() - 1));
  const bool sharps = body.back() == 's';
  const int s = g.s();
  for (int i = 0; i < n && i < 7; ++i) {
    const int step = sharps ? sharp_steps[i] : flat_steps[i];
    const int gx = x + static_cast<int>(1.1 * s) * i;
    if (sharps)
      draw_sharp(c, g, gx, g.y_of_step(step));
    else
      draw_flat(c, g, gx, g.y_of_step(step));
  }
}

void draw_timesig(Canvas& c, const Geometry& g, const std::string& token, int x) {
  const std::string body = token.substr(8);
  const int s = g.s();
  const int cell = std::max(1, static_cast<int>(std::lround(0.36 * s)));
  if (body == "C") {
    draw_char(c, 'C', x - cell, g.y_of_step(6) - 2 * cell, cell * 2);
    return;
  }
  const auto slash = body.find('/');
  if (slash == std::string::npos || body.size() < 3)
    throw RenderError("unsupported time signature token: " + token);
  draw_char(c, body[0], x - cell, g.top_line(), cell);
  draw_char(c, body[slash + 1], x - cell, g.y_of_step(4), cell);
}

// ------------------------------------------------------------ annotations ---

struct ClefWindow {
  int lo, hi;  // inclusive diatonic indices for generated base pitches
};

ClefWindow window_of(Clef c) {
  if (c == Clef::treble) return {pitch_index("F3"), pitch_index("E6")};
  return {pitch_index("C2"), pitch_index("G4")};
}

std::string sample_duration(Rng& rng) {
  static const std::vector<std::string> bases = {"whole", "half", "quarter", "eighth", "16th"};
  std::string d = rng.pick(bases);
  if (rng.bernoulli(0.2)) d += ".";
  return d;
}

std::string sample_accidental(Rng& rng) {
  const double r = rng.uniform();
  if (r < 0.76) return "none";
  if (r < 0.84) return "sharp";
  if (r < 0.92) return "flat";
  return "natural";
}

struct BodySymbol {
  std::string rhythm, pitch, accidental;
  bool is_chord = false;
  bool is_note = false;
};

BodySymbol sample_chord(Rng& rng, const ClefWindow& win, const GenConfig& config) {
  static const std::vector<std::vector<int>> default_shapes = {{2}, {4}, {2, 4}};
  (void)config;
  const auto& shape = rng.pick(default_shapes);
  const int max_off = *std::max_element(shape.begin(), shape.end());
  const int base = rng.uniform_int(win.lo, win.hi - max_off);
  std::vector<std::string> pitches = {pitch_name(base)};
  std::vector<std::string> accs = {sample_accidental(rng)};
  for (int off : shape) {
    pitches.push_back(pitch_name(base + off));
    accs.push_back(sample_accidental(rng));
  }
  const std::string dur = sample_duration(rng);
  BodySymbol sym;
  sym.rhythm = join_chord(std::vector<std::string>(pitches.size(), dur));
  sym.pitch = join_chord(pitches);
  sym.accidental = join_chord(accs);
  sym.is_chord = true;
  sym.is_note = true;
  return sym;
}

BodySymbol sample_single(Rng& rng, const ClefWindow& win) {
  BodySymbol sym;
  if (rng.bernoulli(0.15)) {
    sym.rhythm = "rest-" + sample_duration(rng);
    sym.pitch = kNoNote;
    sym.accidental = kNoNoteAcc;
    return sym;
  }
  sym.rhythm = sample_duration(rng);
  sym.pitch = pitch_name(rng.uniform_int(win.lo, win.hi));
  sym.accidental = sample_accidental(rng);
  sym.is_note = true;
  return sym;
}

}  // namespace

StaffAnnotation sample_annotation(Rng& rng, const GenConfig& config) {
  config.validate();
  const Clef clef = rng.bernoulli(0.5) ? Clef::treble : Clef::bass;
  const ClefWindow win = window_of(clef);
  const bool polyphonic = rng.bernoulli(config.polyphonic_ratio);

  StaffAnnotation a;
  auto push = [&a](const std::string& r, const std::string& p, const std::string& ac) {
    a.rhythm.push_back(r);
    a.pitch.push_back(p);
    a.accidental.push_back(ac);
  };
  push(clef == Clef::treble ? "clef-G2" : "clef-F4", kNoNote, kNoNoteAcc);
  const int k = rng.uniform_int(-7, 7);
  push(k == 0 ? "keysig-0" : ("keysig-" + std::to_string(std::abs(k)) + (k > 0 ? "s" : "f")),
       kNoNote, kNoNoteAcc);
  static const std::vector<std::string> timesigs = {"timesig-2/4", "timesig-3/4", "timesig-4/4",
                                                    "timesig-6/8", "timesig-C"};
  push(rng.pick(timesigs), kNoNote, kNoNoteAcc);

  const int n_body = rng.uniform_int(config.symbols_min, config.symbols_max);
  int since_barline = 0;
  std::vector<std::size_t> note_positions;
  bool has_chord = false;
  for (int i = 0; i < n_body; ++i) {
    if (since_barline >= 4 && i + 1 < n_body && rng.bernoulli(0.5)) {
      push("barline", kNoNote, kNoNoteAcc);
      since_barline = 0;
    }
    BodySymbol sym = (polyphonic && rng.bernoulli(0.35)) ? sample_chord(rng, win, config)
                                                         : sample_single(rng, win);
    if (sym.is_note) note_positions.push_back(a.rhythm.size());
    has_chord = has_chord || sym.is_chord;
    push(sym.rhythm, sym.pitch, sym.accidental);
    ++since_barline;
  }

  if (polyphonic && !has_chord) {
    BodySymbol sym = sample_chord(rng, win, config);
    if (note_positions.empty()) {
      push(sym.rhythm, sym.pitch, sym.accidental);
    } else {
      const std::size_t at =
          note_positions[static_cast<std::size_t>(rng.uniform_int(
              0, static_cast<int>(note_positions.size()) - 1))];
      a.rhythm[at] = sym.rhythm;
      a.pitch[at] = sym.pitch;
      a.accidental[at] = sym.accidental;
    }
  }

  push("barline", kNoNote, kNoNoteAcc);
  return a;
}

RenderedStaff render_staff(const StaffAnnotation& annotation, const RenderStyle& style) {
  if (annotation.pitch.size() != annotation.rhythm.size() ||
      annotation.accidental.size() != annotation.rhythm.size())
    throw AlignmentError("annotation streams have unequal lengths");

  const int s = style.staff_space;
  Clef clef = Clef::treble;
  for (const auto& tok : annotation.rhythm) {
    if (tok == "clef-G2") {
      clef = Clef::treble;
      break;
    }
    if (tok == "clef-F4") {
      clef = Clef::bass;
      break;
    }
  }

  int width = style.margin_left + style.margin_right;
  for (const auto& tok : annotation.rhythm) width += advance_of(tok, s);
  width = std::max(width, style.min_width);

  RenderedStaff out;
  out.image = ImageF::Ones(style.image_height, width);
  Canvas canvas(out.image);
  Geometry geo(style);
  out.staff_top = geo.top_line();
  out.staff_bottom = geo.bottom_line;

  for (int line = 0; line < 5; ++line)
    canvas.hline(0, width - 1, geo.y_of_step(2 * line), style.line_thickness);

  const int base = clef_base_index(clef);
  int x = style.margin_left;
  for (std::size_t i = 0; i < annotation.rhythm.size(); ++i) {
    const std::string& tok = annotation.rhythm[i];
    const int adv = advance_of(tok, s);
    const int cx = x + adv / 2;
    canvas.begin();
    if (tok.rfind("clef-", 0) == 0) {
      if (tok != "clef-G2" && tok != "clef-F4") throw RenderError("unsupported clef token: " + tok);
      draw_clef(canvas, geo, tok == "clef-G2" ? Clef::treble : Clef::bass, cx);
    } else if (tok.rfind("keysig-", 0) == 0) {
      draw_keysig(canvas, geo, tok, x + s);
    } else if (tok.rfind("timesig-", 0) == 0) {
      draw_timesig(canvas, geo, tok, cx);
    } else if (tok == "barline") {
      canvas.vline(cx, geo.y_of_step(8), geo.y_of_step(0), std::max(1, s / 6));
    } else if (tok.rfind("rest-", 0) == 0) {
      draw_rest(canvas, geo, parse_duration(tok.substr(5)), cx);
    } else {
      const Duration d = parse_duration(split_chord(tok)[0]);
      const auto pitches = split_chord(annotation.pitch[i]);
      auto accs = split_chord(annotation.accidental[i]);
      if (annotation.pitch[i] == kNoNote)
        throw RenderError("note rhythm token with nonote pitch at position " + std::to_string(i));
      if (accs.size() != pitches.size())
        accs.assign(pitches.size(), accs.empty() ? "none" : accs[0]);
      std::vector<int> steps;
      steps.reserve(pitches.size());
      for (const auto& p : pitches) steps.push_back(pitch_index(p) - base);
      draw_note(canvas, geo, d, steps, accs, cx);
    }
    out.symbol_boxes.push_back(canvas.end(tok));
    x += adv;
  }
  return out;
}

RenderedPage render_page(Rng& rng, const GenConfig& config) {
  config.validate();

  const double r = rng.uniform();
  PageType type;
  if (r < config.p_one_staff)
    type = PageType::one_staff_system;
  else if (r < config.p_one_staff + config.p_two_staves)
    type = PageType::two_staves_system;
  else
    type = PageType::other;

  int group = 1;
  if (type == PageType::two_staves_system) group = 2;
  if (type == PageType::other) group = 3;
  const int max_staves = std::max(group, config.staves_max);
  const int n_groups = std::max(1, rng.uniform_int(config.staves_min, max_staves) / group);
  const int n_staves = n_groups * group;

  const int margin_x = 48;
  const int margin_top = 24;
  RenderStyle style = config.style;
  style.min_width = config.page_width - 2 * margin_x;

  RenderedPage page;
  page.page_type = type;
  page.image = ImageF::Ones(config.page_height, config.page_width);
  page.mask = ImageF::Zero(config.page_height, config.page_width);

  GenConfig staff_cfg = config;
  staff_cfg.symbols_max = std::min(config.symbols_max,
                                   std::max(config.symbols_min, style.min_width / (5 * style.staff_space) - 6));

  int y = margin_top;
  int staff_index = 0;
  for (int gi = 0; gi < n_groups; ++gi) {
    std::vector<int> members;
    std::vector<std::pair<int, int>> staff_extent;  // staff_top/bottom in page coords
    for (int si = 0; si < group; ++si) {
      StaffAnnotation ann = sample_annotation(rng, staff_cfg);
      RenderedStaff staff = render_staff(ann, style);
      if (staff.image.cols() > style.min_width) {
        // too dense for the page width; retry with fewer symbols
        GenConfig narrow = staff_cfg;
        narrow.symbols_max = std::max(narrow.symbols_min, narrow.symbols_max / 2);
        ann = sample_annotation(rng, narrow);
        staff = render_staff(ann, style);
        if (staff.image.cols() > style.min_width)
          throw LayoutError("staff too wide for the page");
      }
      const int sh = static_cast<int>(staff.image.rows());
      const int sw = static_cast<int>(staff.image.cols());
      if (y + sh > config.page_height - margin_top) throw LayoutError("page overflow: too many staves");

      int ink_y0 = sh, ink_y1 = -1, ink_x0 = sw, ink_x1 = -1;
      for (int yy = 0; yy < sh; ++yy)
        for (int xx = 0; xx < sw; ++xx)
          if (staff.image(yy, xx) < 0.5f) {
            page.image(y + yy, margin_x + xx) =
                std::min(page.image(y + yy, margin_x + xx), staff.image(yy, xx));
            page.mask(y + yy, margin_x + xx) = 1.0f;
            ink_y0 = std::min(ink_y0, yy);
            ink_y1 = std::max(ink_y1, yy);
            ink_x0 = std::min(ink_x0, xx);
            ink_x1 = std::max(ink_x1, xx);
          }
      Box box;
      box.x0 = margin_x + ink_x0;
      box.x1 = margin_x + ink_x1 + 1;
      box.y0 = y + ink_y0;
      box.y1 = y + ink_y1 + 1;
      page.boxes.push_back(box);
      page.staves.push_back(std::move(ann));
      staff_extent.emplace_back(y + staff.staff_top, y + staff.staff_bottom);
      members.push_back(staff_index++);
      y += sh + (si + 1 < group ? rng.uniform_int(2, 8) : 0);
    }
    page.systems.push_back(members);

    // Accolade connectors live in the left margin and belong to the mask.
    Canvas canvas(page.image);
    ImageF before = page.image;
    if (type == PageType::two_staves_system) {
      const int y0 = staff_extent.front().first;
      const int y1 = staff_extent.back().second;
      const int cx = margin_x - 14;
      const int mid = (y0 + y1) / 2;
      canvas.half_ellipse_left(cx, (y0 + mid) / 2, 10, (mid - y0) / 2, 2);
      canvas.half_ellipse_left(cx, (mid + y1) / 2, 10, (y1 - mid) / 2, 2);
    } else if (type == PageType::other) {
      const int y0 = staff_extent.front().first;
      const int y1 = staff_extent.back().second;
      const int cx = margin_x - 18;
      canvas.vline(cx, y0, y1, 3);
      canvas.hline(cx, cx + 10, y0, 2);
      canvas.hline(cx, cx + 10, y1 - 1, 2);
    }
    for (int yy = 0; yy < config.page_height; ++yy)
      for (int xx = 0; xx < config.page_width; ++xx)
        if (page.image(yy, xx) < 0.5f && before(yy, xx) >= 0.5f) page.mask(yy, xx) = 1.0f;

    y += rng.uniform_int(14, 36);
  }

  return page;
}

ImageF augment(const ImageF& image, Rng& rng, const AugmentProfile& profile) {
  if (profile.identity()) return image;
  const int h = static_cast<int>(image.rows());
  const int w = static_cast<int>(image.cols());
  if (profile.warp > std::min(h, w) / 8.0)
    throw ConfigError("warp magnitude exceeds the safety bound");

  ImageF out = image;

  if (profile.warp > 0) {
    // Displaced corners define a dst->src homography; sample bilinearly.
    double sx[4] = {0, double(w), 0, double(w)};
    double sy[4] = {0, 0, double(h), double(h)};
    double dx[4], dy[4];
    for (int i = 0; i < 4; ++i) {
      dx[i] = sx[i] + rng.uniform(-profile.warp, profile.warp);
      dy[i] = sy[i] + rng.uniform(-profile.warp, profile.warp);
    }
    Eigen::Matrix<double, 8, 8> A = Eigen::Matrix<double, 8, 8>::Zero();
    Eigen::Matrix<double, 8, 1> rhs;
    for (int i = 0; i < 4; ++i) {
      A(2 * i, 0) = dx[i];
      A(2 * i, 1) = dy[i];
      A(2 * i, 2) = 1;
      A(2 * i, 6) = -sx[i] * dx[i];
      A(2 * i, 7) = -sx[i] * dy[i];
      rhs(2 * i) = sx[i];
      A(2 * i + 1, 3) = dx[i];
      A(2 * i + 1, 4) = dy[i];
      A(2 * i + 1, 5) = 1;
      A(2 * i + 1, 6) = -sy[i] * dx[i];
      A(2 * i + 1, 7) = -sy[i] * dy[i];
      rhs(2 * i + 1) = sy[i];
    }
    const Eigen::Matrix<double, 8, 1> p = A.fullPivLu().solve(rhs);
    ImageF warped(h, w);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double den = p(6) * x + p(7) * y + 1.0;
        const double u = (p(0) * x + p(1) * y + p(2)) / den;
        const double v = (p(3) * x + p(4) * y + p(5)) / den;
        if (u < 0 || v < 0 || u > w - 1 || v > h - 1) {
          warped(y, x) = 1.0f;
          continue;
        }
        const int x0 = static_cast<int>(u), y0 = static_cast<int>(v);
        const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
        const float fx = static_cast<float>(u - x0), fy = static_cast<float>(v - y0);
        warped(y, x) = out(y0, x0) * (1 - fx) * (1 - fy) + out(y0, x1) * fx * (1 - fy) +
                       out(y1, x0) * (1 - fx) * fy + out(y1, x1) * fx * fy;
      }
    out = std::move(warped);
  }

  if (profile.blur_sigma > 0) {
    const double sigma = rng.uniform(0.0, profile.blur_sigma);
    if (sigma > 0.05) out = gaussian_blur(out, sigma);
  }

  if (profile.contrast > 0) {
    const float c = static_cast<float>(rng.uniform(1.0 - profile.contrast, 1.0 + profile.contrast));
    out = ((out.array() - 0.5f) * c + 0.5f).matrix();
  }
  if (profile.brightness > 0) {
    const float b = static_cast<float>(rng.uniform(-profile.brightness, profile.brightness));
    out = (out.array() + b).matrix();
  }
  if (profile.noise > 0) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        out(y, x) += static_cast<float>(rng.normal() * profile.noise);
  }
  out = out.array().min(1.0f).max(0.0f).matrix();
  return out;
}

}  // namespace tromr
