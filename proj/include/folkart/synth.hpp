#pragma once

#include <array>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include "folkart/dataset.hpp"
#include "folkart/image.hpp"
#include "folkart/rng.hpp"
#include "folkart/tag_vocab.hpp"

namespace folkart {

enum class Pattern { dots, stripes, checker, rings, waves, hatch, triangles, spokes, squares, scales, zigzag, grid };

struct SynthStyle {
  std::string name;
  std::array<int, 3> background;
  std::array<int, 3> foreground;
  Pattern pattern;
  double period;      // pixels at 224
  double angle_deg;
  std::vector<std::vector<std::string>> tags;  // each inner list holds surface variants of one tag
};

/// Twelve procedurally distinct texture classes named after the folk-art schools.
inline const std::vector<SynthStyle>& synth_styles() {
  static const std::vector<SynthStyle> styles = {
      {"Bhil", {236, 214, 160}, {196, 52, 38}, Pattern::dots, 14, 0, {{"dots", "dotted", "polka_dots"}, {"animals"}}},
      {"Gond", {32, 40, 72}, {240, 200, 60}, Pattern::stripes, 9, 60, {{"lines"}, {"trees", "tree"}}},
      {"Mata Ni Pachedi", {120, 20, 24}, {245, 235, 220}, Pattern::spokes, 18, 0, {{"goddess"}, {"celebration", "festivity", "feast"}}},
      {"Kalighat", {240, 236, 226}, {40, 40, 40}, Pattern::waves, 28, 0, {{"portrait"}, {"cow", "cows", "cattle"}}},
      {"Kalamkari", {210, 170, 110}, {70, 40, 30}, Pattern::scales, 22, 0, {{"lotus", "lotuses"}, {"floral"}}},
      {"Madhubani", {250, 240, 190}, {30, 110, 60}, Pattern::hatch, 10, 45, {{"fish"}, {"lotus", "lotus_flower"}}},
      {"Pattachitra", {180, 30, 30}, {240, 190, 40}, Pattern::squares, 26, 0, {{"deity"}, {"celebration", "celebrated"}}},
      {"Phad", {230, 120, 40}, {40, 30, 120}, Pattern::checker, 20, 0, {{"horse"}, {"warrior"}}},
      {"Pichwai", {20, 60, 50}, {240, 240, 230}, Pattern::rings, 24, 0, {{"cow", "cattle"}, {"lotus"}}},
      {"Tanjore", {150, 20, 60}, {230, 190, 70}, Pattern::grid, 16, 0, {{"deity"}, {"gold"}}},
      {"Rogan", {30, 30, 30}, {230, 80, 160}, Pattern::zigzag, 18, 0, {{"tree_of_life"}, {"floral"}}},
      {"Warli", {140, 70, 40}, {250, 250, 250}, Pattern::triangles, 30, 0, {{"dance", "dancing", "dancers"}, {"celebration", "celebrating"}}},
  };
  return styles;
}

/// Shared motifs sprinkled across classes so tags are not a pure function of class.
inline const std::vector<std::string>& synth_extra_tags() {
  static const std::vector<std::string> extras = {"sun", "stars", "star", "lizard", "peacock", "elephant", "birds", "moon"};
  return extras;
}

namespace detail {

inline double pattern_value(Pattern p, double u, double v, double x, double y, double period) {
  constexpr double tau = 2.0 * std::numbers::pi;
  const double fu = u / period, fv = v / period;
  switch (p) {
    case Pattern::dots: {
      double du = fu - std::floor(fu) - 0.5, dv = fv - std::floor(fv) - 0.5;
      return du * du + dv * dv < 0.09 ? 1.0 : 0.0;
    }
    case Pattern::stripes: return std::sin(tau * fu) > 0.0 ? 1.0 : 0.0;
    case Pattern::checker: return (static_cast<long>(std::floor(fu)) + static_cast<long>(std::floor(fv))) % 2 == 0 ? 1.0 : 0.0;
    case Pattern::rings: return std::sin(tau * std::hypot(x, y) / period) > 0.3 ? 1.0 : 0.0;
    case Pattern::waves: return std::abs(std::sin(tau * (fv + 0.25 * std::sin(tau * fu * 0.5)))) > 0.85 ? 1.0 : 0.0;
    case Pattern::hatch: return (std::sin(tau * fu) > 0.6 || std::sin(tau * fv) > 0.6) ? 1.0 : 0.0;
    case Pattern::triangles: {
      double a = fu - std::floor(fu), b = fv - std::floor(fv);
      return b > 0.15 && b < 0.85 && std::abs(a - 0.5) < 0.5 * (1.0 - b) ? 1.0 : 0.0;
    }
    case Pattern::spokes: return std::sin(16.0 * std::atan2(y, x) + tau * std::hypot(x, y) / (4.0 * period)) > 0.0 ? 1.0 : 0.0;
    case Pattern::squares: {
      double m = std::max(std::abs(x), std::abs(y)) / period;
      return m - std::floor(m) < 0.35 ? 1.0 : 0.0;
    }
    case Pattern::scales: {
      double a = fu - std::floor(fu) - 0.5, b = fv - std::floor(fv);
      double r = std::sqrt(a * a + b * b);
      return r > 0.35 && r < 0.5 ? 1.0 : 0.0;
    }
    case Pattern::zigzag: {
      double tri = std::abs(2.0 * (fu - std::floor(fu)) - 1.0);
      return std::abs(fv * 2.0 - std::floor(fv * 2.0) - tri) < 0.25 ? 1.0 : 0.0;
    }
    case Pattern::grid: {
      double a = fu - std::floor(fu), b = fv - std::floor(fv);
      return (a < 0.18 || b < 0.18) ? 1.0 : 0.0;
    }
  }
  return 0.0;
}

inline std::uint8_t clamp_u8(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

}  // namespace detail

struct SynthImageOptions {
  int side = 224;
  double color_jitter = 14.0;
  double noise_sigma = 7.0;
};

/// Renders one painting of the given style; all randomness comes from `rng`.
inline RasterImage render_synth_image(const SynthStyle& style, Rng& rng, const SynthImageOptions& opt = {}) {
  const int side = opt.side;
  const double scale = side / 224.0;
  const double period = style.period * scale * rng.uniform(0.88, 1.12);
  const double angle = (style.angle_deg + rng.uniform(-6.0, 6.0)) * std::numbers::pi / 180.0;
  const double ox = rng.uniform(0.0, period), oy = rng.uniform(0.0, period);
  const double cx = side / 2.0 + rng.uniform(-0.1, 0.1) * side, cy = side / 2.0 + rng.uniform(-0.1, 0.1) * side;
  std::array<double, 3> bg, fg;
  for (int c = 0; c < 3; ++c) {
    bg[static_cast<std::size_t>(c)] = style.background[static_cast<std::size_t>(c)] + rng.uniform(-opt.color_jitter, opt.color_jitter);
    fg[static_cast<std::size_t>(c)] = style.foreground[static_cast<std::size_t>(c)] + rng.uniform(-opt.color_jitter, opt.color_jitter);
  }
  const double ca = std::cos(angle), sa = std::sin(angle);
  RasterImage img(side, side);
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      const double px = x - cx, py = y - cy;
      const double u = ca * px + sa * py + ox, v = -sa * px + ca * py + oy;
      const double t = detail::pattern_value(style.pattern, u, v, px, py, period);
      for (int c = 0; c < 3; ++c) {
        const double base = bg[static_cast<std::size_t>(c)] + t * (fg[static_cast<std::size_t>(c)] - bg[static_cast<std::size_t>(c)]);
        img.at(x, y, c) = detail::clamp_u8(base + rng.normal() * opt.noise_sigma);
      }
    }
  }
  return img;
}

/// Flat pad on each side (digitizer background); detectable by the heuristic trimmer.
inline RasterImage add_flat_margin(const RasterImage& img, int margin, std::array<std::uint8_t, 3> color) {
  RasterImage out(img.width(), img.height());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      const bool pad = x < margin || y < margin || x >= img.width() - margin || y >= img.height() - margin;
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = pad ? color[static_cast<std::size_t>(c)] : img.at(x, y, c);
    }
  return out;
}

/// Painted (textured) frame; only a manifest crop box can remove it.
inline RasterImage add_painted_border(const RasterImage& img, int width) {
  RasterImage out = img;
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      if (x >= width && y >= width && x < img.width() - width && y < img.height() - width) continue;
      const bool band = ((x + y) / 4) % 2 == 0;
      out.set_rgb(x, y, band ? 200 : 90, band ? 160 : 40, band ? 60 : 20);
    }
  return out;
}

struct SynthOptions {
  int images_per_class = 30;
  int side = 224;
  std::uint64_t seed = 0;
  int flat_margin_every = 6;     // every k-th image of a class gets a flat pad; 0 disables
  int painted_border_every = 7;  // every k-th image gets a painted frame plus a crop box; 0 disables
};

struct SynthResult {
  DatasetManifest manifest;
  std::filesystem::path manifest_path;
  std::filesystem::path synonyms_path;
};

inline std::string synth_slug(const std::string& name) {
  std::string s;
  for (char c : name) s += c == ' ' ? '_' : static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

/// Writes images/<class>/<id>.png, manifest.csv (unassigned splits) and synonyms.txt under `dir`.
inline SynthResult generate_synth_dataset(const std::filesystem::path& dir, const SynthOptions& opt = {}) {
  if (opt.images_per_class < 3) throw std::invalid_argument("synth-data needs at least 3 images per class");
  if (opt.side != 224 && opt.side != 299) throw std::invalid_argument("synth-data side must be 224 or 299");
  const auto& styles = synth_styles();
  const auto& extras = synth_extra_tags();
  SynthResult res;
  std::vector<std::string> names;
  for (const auto& s : styles) names.push_back(s.name);
  res.manifest.registry = ClassRegistry(names);
  const int margin = std::max(4, opt.side / 20);
  const int frame = std::max(4, opt.side / 16);

  for (std::size_t k = 0; k < styles.size(); ++k) {
    const auto& style = styles[k];
    for (int i = 0; i < opt.images_per_class; ++i) {
      Rng rng(Rng::derive(opt.seed, k * 100000 + static_cast<std::uint64_t>(i)));
      RasterImage img = render_synth_image(style, rng, {opt.side, 14.0, 7.0});
      ImageRecord rec;
      rec.id = synth_slug(style.name) + "_" + std::to_string(i);
      rec.class_label = style.name;
      for (const auto& variants : style.tags) rec.raw_tags.push_back(variants[rng.uniform_index(variants.size())]);
      if (rng.uniform01() < 0.5) rec.raw_tags.push_back(extras[rng.uniform_index(extras.size())]);
      if (opt.painted_border_every > 0 && i % opt.painted_border_every == opt.painted_border_every - 1) {
        img = add_painted_border(img, frame);
        rec.crop = CropBox{frame, frame, opt.side - 2 * frame, opt.side - 2 * frame};
      } else if (opt.flat_margin_every > 0 && i % opt.flat_margin_every == opt.flat_margin_every - 1) {
        img = add_flat_margin(img, margin, {250, 250, 250});
      }
      const auto rel = std::filesystem::path("images") / synth_slug(style.name) / (rec.id + ".png");
      write_png(img, dir / rel);
      rec.path = rel;
      res.manifest.records.push_back(std::move(rec));
    }
  }
  res.manifest_path = dir / "manifest.csv";
  io::write_file(res.manifest_path, manifest_to_csv(res.manifest));
  res.synonyms_path = dir / "synonyms.txt";
  io::write_file(res.synonyms_path, seed_synonyms().serialize());
  for (auto& r : res.manifest.records) r.path = dir / r.path;
  return res;
}

}  // namespace folkart
