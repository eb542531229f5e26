#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

namespace folkart {

/// 8-bit interleaved RGB raster.
class RasterImage {
 public:
  static constexpr int kChannels = 3;

  RasterImage() = default;

  RasterImage(int width, int height, std::uint8_t fill = 0)
      : width_(width), height_(height) {
    if (width < 1 || height < 1) throw std::invalid_argument("image dimensions must be >= 1");
    pixels_.assign(static_cast<std::size_t>(width) * height * kChannels, fill);
  }

  RasterImage(int width, int height, std::vector<std::uint8_t> pixels)
      : width_(width), height_(height), pixels_(std::move(pixels)) {
    if (width < 1 || height < 1) throw std::invalid_argument("image dimensions must be >= 1");
    if (pixels_.size() != static_cast<std::size_t>(width) * height * kChannels)
      throw std::invalid_argument("pixel buffer does not match width * height * 3");
  }

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return pixels_.empty(); }

  std::uint8_t& at(int x, int y, int c) { return pixels_[index(x, y, c)]; }
  std::uint8_t at(int x, int y, int c) const { return pixels_[index(x, y, c)]; }

  void set_rgb(int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    auto i = index(x, y, 0);
    pixels_[i] = r;
    pixels_[i + 1] = g;
    pixels_[i + 2] = b;
  }

  const std::vector<std::uint8_t>& pixels() const { return pixels_; }
  std::vector<std::uint8_t>& pixels() { return pixels_; }

  bool operator==(const RasterImage&) const = default;

 private:
  std::size_t index(int x, int y, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * kChannels + c;
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> pixels_;
};

/// Decodes PNG/JPEG (anything imgcodecs reads) into RGB.
inline RasterImage read_image(const std::filesystem::path& path) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw std::runtime_error("cannot decode image " + path.string());
  RasterImage img(bgr.cols, bgr.rows);
  for (int y = 0; y < bgr.rows; ++y) {
    const auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < bgr.cols; ++x) img.set_rgb(x, y, row[x][2], row[x][1], row[x][0]);
  }
  return img;
}

inline cv::Mat to_bgr_mat(const RasterImage& img) {
  cv::Mat bgr(img.height(), img.width(), CV_8UC3);
  for (int y = 0; y < img.height(); ++y) {
    auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < img.width(); ++x) row[x] = cv::Vec3b(img.at(x, y, 2), img.at(x, y, 1), img.at(x, y, 0));
  }
  return bgr;
}

inline void write_png(const RasterImage& img, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), to_bgr_mat(img), {cv::IMWRITE_PNG_COMPRESSION, 6}))
    throw std::runtime_error("cannot write " + path.string());
}

}  // namespace folkart
