#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "folkart/dataset.hpp"
#include "folkart/image.hpp"
#include "folkart/rng.hpp"

namespace folkart {

/// Input geometry and normalization statistics expected by one backbone.
struct BackboneProfile {
  std::string name;
  int input_side = 224;
  std::array<float, 3> channel_mean = {0.485f, 0.456f, 0.406f};
  std::array<float, 3> channel_std = {0.229f, 0.224f, 0.225f};
  int gap_dim = 1;

  void validate() const {
    if (input_side != 224 && input_side != 299)
      throw std::invalid_argument("backbone input side must be 224 or 299, got " + std::to_string(input_side));
    for (float s : channel_std)
      if (!(s > 0.0f)) throw std::invalid_argument("channel std must be positive");
    if (gap_dim < 1) throw std::invalid_argument("gap_dim must be >= 1");
  }

  bool operator==(const BackboneProfile&) const = default;
};

namespace profiles {

// GAP widths are those of the real architectures.
inline BackboneProfile vgg16() { return {"vgg16", 224, {0.485f, 0.456f, 0.406f}, {0.229f, 0.224f, 0.225f}, 512}; }
inline BackboneProfile resnet50() { return {"resnet50", 224, {0.485f, 0.456f, 0.406f}, {0.229f, 0.224f, 0.225f}, 2048}; }
inline BackboneProfile efficientnet_b0() {
  return {"efficientnet_b0", 224, {0.485f, 0.456f, 0.406f}, {0.229f, 0.224f, 0.225f}, 1280};
}
inline BackboneProfile inception_v3() {
  return {"inception_v3", 299, {0.485f, 0.456f, 0.406f}, {0.229f, 0.224f, 0.225f}, 2048};
}

}  // namespace profiles

/// HWC float tensor of shape (side, side, 3).
struct NormalizedTensor {
  int side = 0;
  std::vector<float> values;

  float at(int x, int y, int c) const { return values[(static_cast<std::size_t>(y) * side + x) * 3 + c]; }
  std::size_t size() const { return values.size(); }
};

// --- border trimming -------------------------------------------------------

struct ManifestBoxTrim {
  CropBox box;
};

/// Strips digitally flat margins. A line is flat when every channel's variance along it
/// is below `tolerance` (8-bit units).
struct HeuristicTrim {
  double tolerance = 4.0;
  double max_fraction = 0.25;
};

struct NoTrim {};

using TrimPolicy = std::variant<ManifestBoxTrim, HeuristicTrim, NoTrim>;

inline RasterImage crop(const RasterImage& image, const CropBox& box) {
  if (box.width <= 0 || box.height <= 0) throw std::invalid_argument("crop has zero area");
  if (box.x < 0 || box.y < 0 || box.x + box.width > image.width() || box.y + box.height > image.height())
    throw std::invalid_argument("crop box " + format_crop(box) + " outside " + std::to_string(image.width()) + "x" +
                                std::to_string(image.height()) + " image");
  RasterImage out(box.width, box.height);
  for (int y = 0; y < box.height; ++y)
    for (int x = 0; x < box.width; ++x)
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = image.at(box.x + x, box.y + y, c);
  return out;
}

namespace detail {

// Variance of each channel along a horizontal (row) or vertical (column) segment.
inline bool line_is_flat(const RasterImage& img, bool row, int fixed, int from, int to, double tolerance) {
  const int n = to - from;
  if (n <= 0) return false;
  for (int c = 0; c < 3; ++c) {
    double sum = 0.0, sum_sq = 0.0;
    for (int k = from; k < to; ++k) {
      double v = row ? img.at(k, fixed, c) : img.at(fixed, k, c);
      sum += v;
      sum_sq += v * v;
    }
    double mean = sum / n;
    double var = sum_sq / n - mean * mean;
    if (var >= tolerance) return false;
  }
  return true;
}

}  // namespace detail

/// Finds the crop the heuristic would take, or nullopt when it abstains.
///
/// Sides are peeled to a fixpoint. If the result would remove more than max_fraction of
/// either dimension the heuristic abstains entirely, so painted borders and flat
/// paintings are left alone and repeated application is a no-op.
inline std::optional<CropBox> detect_flat_margins(const RasterImage& img, const HeuristicTrim& p) {
  int top = 0, bottom = img.height(), left = 0, right = img.width();
  bool changed = true;
  while (changed) {
    changed = false;
    if (bottom - top > 1 && detail::line_is_flat(img, true, top, left, right, p.tolerance)) {
      ++top;
      changed = true;
    }
    if (bottom - top > 1 && detail::line_is_flat(img, true, bottom - 1, left, right, p.tolerance)) {
      --bottom;
      changed = true;
    }
    if (right - left > 1 && detail::line_is_flat(img, false, left, top, bottom, p.tolerance)) {
      ++left;
      changed = true;
    }
    if (right - left > 1 && detail::line_is_flat(img, false, right - 1, top, bottom, p.tolerance)) {
      --right;
      changed = true;
    }
  }
  const int removed_h = img.height() - (bottom - top);
  const int removed_w = img.width() - (right - left);
  if (removed_h > p.max_fraction * img.height() || removed_w > p.max_fraction * img.width()) return std::nullopt;
  if (removed_h == 0 && removed_w == 0) return std::nullopt;
  return CropBox{left, top, right - left, bottom - top};
}

/// Removes the frame/background around a painting.
///
/// A manifest box is applied exactly and must lie inside the image. A zero-area box is an
/// error unless `permissive`, in which case the original image is returned.
inline RasterImage trim_border(const RasterImage& image, const TrimPolicy& policy, bool permissive = false) {
  if (const auto* box = std::get_if<ManifestBoxTrim>(&policy)) {
    if (box->box.width <= 0 || box->box.height <= 0) {
      if (permissive) return image;
      throw std::invalid_argument("trim produced zero area");
    }
    return crop(image, box->box);
  }
  if (const auto* h = std::get_if<HeuristicTrim>(&policy)) {
    auto found = detect_flat_margins(image, *h);
    return found ? crop(image, *found) : image;
  }
  return image;
}

inline TrimPolicy trim_policy_for(const ImageRecord& record, bool heuristic_fallback = true) {
  if (record.crop) return ManifestBoxTrim{*record.crop};
  if (heuristic_fallback) return HeuristicTrim{};
  return NoTrim{};
}

// --- geometry ----------------------------------------------------------------

namespace detail {

// Half-pixel-centre bilinear sampling with edge clamping. Calls sink(x, y, c, value).
template <class Sink>
void bilinear_sample(const RasterImage& src, int out_w, int out_h, Sink&& sink) {
  const double sx = static_cast<double>(src.width()) / out_w;
  const double sy = static_cast<double>(src.height()) / out_h;
  std::vector<int> x0(out_w), x1(out_w);
  std::vector<double> wx(out_w);
  for (int x = 0; x < out_w; ++x) {
    double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(src.width() - 1));
    x0[x] = static_cast<int>(fx);
    x1[x] = std::min(x0[x] + 1, src.width() - 1);
    wx[x] = fx - x0[x];
  }
  for (int y = 0; y < out_h; ++y) {
    double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(src.height() - 1));
    int y0 = static_cast<int>(fy);
    int y1 = std::min(y0 + 1, src.height() - 1);
    double wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      for (int c = 0; c < 3; ++c) {
        double top = src.at(x0[x], y0, c) * (1.0 - wx[x]) + src.at(x1[x], y0, c) * wx[x];
        double bot = src.at(x0[x], y1, c) * (1.0 - wx[x]) + src.at(x1[x], y1, c) * wx[x];
        sink(x, y, c, top * (1.0 - wy) + bot * wy);
      }
    }
  }
}

}  // namespace detail

inline RasterImage resize_bilinear(const RasterImage& src, int width, int height) {
  RasterImage out(width, height);
  detail::bilinear_sample(src, width, height, [&](int x, int y, int c, double v) {
    out.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
  });
  return out;
}

/// Bilinear resize to the profile's square input, scale to [0,1], then (x - mean) / std.
inline NormalizedTensor resize_normalize(const RasterImage& image, const BackboneProfile& profile) {
  profile.validate();
  if (image.empty()) throw std::invalid_argument("empty image");
  NormalizedTensor t;
  t.side = profile.input_side;
  t.values.resize(static_cast<std::size_t>(t.side) * t.side * 3);
  std::array<float, 3> inv_std{};
  for (int c = 0; c < 3; ++c) inv_std[c] = 1.0f / profile.channel_std[c];
  detail::bilinear_sample(image, t.side, t.side, [&](int x, int y, int c, double v) {
    float scaled = static_cast<float>(v / 255.0);
    t.values[(static_cast<std::size_t>(y) * t.side + x) * 3 + c] = (scaled - profile.channel_mean[c]) * inv_std[c];
  });
  return t;
}

inline RasterImage flip_horizontal(const RasterImage& img) {
  RasterImage out(img.width(), img.height());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < 3; ++c) out.at(img.width() - 1 - x, y, c) = img.at(x, y, c);
  return out;
}

inline RasterImage flip_vertical(const RasterImage& img) {
  RasterImage out(img.width(), img.height());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < 3; ++c) out.at(x, img.height() - 1 - y, c) = img.at(x, y, c);
  return out;
}

/// Rescales by `factor`, then center-crops (factor > 1) or edge-pads (factor < 1) back to
/// the original geometry.
inline RasterImage scale_center(const RasterImage& img, double factor) {
  if (!(factor > 0.0)) throw std::invalid_argument("scale factor must be positive");
  const int sw = std::max(1, static_cast<int>(std::lround(img.width() * factor)));
  const int sh = std::max(1, static_cast<int>(std::lround(img.height() * factor)));
  RasterImage scaled = resize_bilinear(img, sw, sh);
  RasterImage out(img.width(), img.height());
  const int off_x = (sw - img.width()) / 2;
  const int off_y = (sh - img.height()) / 2;
  for (int y = 0; y < img.height(); ++y) {
    int sy = std::clamp(y + off_y, 0, sh - 1);
    for (int x = 0; x < img.width(); ++x) {
      int sx = std::clamp(x + off_x, 0, sw - 1);
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = scaled.at(sx, sy, c);
    }
  }
  return out;
}

struct AugmentOptions {
  double min_scale = 0.8;
  double max_scale = 1.2;
};

/// Geometry-only variants: horizontal flip, vertical flip, random rescale. No color ops.
inline std::vector<RasterImage> augment(const RasterImage& image, std::uint64_t seed,
                                        const AugmentOptions& options = {}) {
  Rng rng(seed);
  std::vector<RasterImage> variants;
  variants.reserve(3);
  variants.push_back(flip_horizontal(image));
  variants.push_back(flip_vertical(image));
  variants.push_back(scale_center(image, rng.uniform(options.min_scale, options.max_scale)));
  return variants;
}

}  // namespace folkart
