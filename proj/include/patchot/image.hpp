#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace patchot {

struct Dims {
  std::size_t height = 0;
  std::size_t width = 0;

  std::size_t pixels() const { return height * width; }
  friend bool operator==(const Dims&, const Dims&) = default;
};

inline std::string to_string(const Dims& d) {
  return std::to_string(d.height) + "x" + std::to_string(d.width);
}

/// H x W x C grid of real pixels, channel-interleaved and row-major.
template <class Real>
class Image {
 public:
  using value_type = Real;

  Image() = default;

  Image(std::size_t height, std::size_t width, std::size_t channels, Real fill = Real(0))
      : height_(height), width_(width), channels_(channels) {
    check_shape();
    data_.assign(height * width * channels, fill);
  }

  Image(Dims dims, std::size_t channels, Real fill = Real(0))
      : Image(dims.height, dims.width, channels, fill) {}

  Image(std::size_t height, std::size_t width, std::size_t channels, std::vector<Real> data)
      : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
    check_shape();
    if (data_.size() != height * width * channels) {
      throw std::invalid_argument("Image: data length " + std::to_string(data_.size()) +
                                  " does not match " + std::to_string(height) + "x" +
                                  std::to_string(width) + "x" + std::to_string(channels));
    }
  }

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t channels() const { return channels_; }
  Dims dims() const { return {height_, width_}; }
  std::size_t pixel_count() const { return height_ * width_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<Real> data() { return data_; }
  std::span<const Real> data() const { return data_; }
  std::vector<Real>& values() { return data_; }
  const std::vector<Real>& values() const { return data_; }

  Real& operator()(std::size_t y, std::size_t x, std::size_t c = 0) {
    return data_[(y * width_ + x) * channels_ + c];
  }
  const Real& operator()(std::size_t y, std::size_t x, std::size_t c = 0) const {
    return data_[(y * width_ + x) * channels_ + c];
  }

  bool same_shape(const Image& other) const {
    return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
  }

  template <class Other>
  Image<Other> cast() const {
    std::vector<Other> out(data_.begin(), data_.end());
    return Image<Other>(height_, width_, channels_, std::move(out));
  }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  void check_shape() const {
    if (height_ == 0 || width_ == 0 || channels_ == 0) {
      throw std::invalid_argument("Image: height, width and channels must be >= 1");
    }
  }

  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::size_t channels_ = 0;
  std::vector<Real> data_;
};

/// Toroidal shift: out(y, x) = in(y - dy, x - dx).
template <class Real>
Image<Real> circular_shift(const Image<Real>& in, std::ptrdiff_t dy, std::ptrdiff_t dx) {
  const auto h = static_cast<std::ptrdiff_t>(in.height());
  const auto w = static_cast<std::ptrdiff_t>(in.width());
  Image<Real> out(in.dims(), in.channels());
  for (std::ptrdiff_t y = 0; y < h; ++y) {
    const std::ptrdiff_t sy = ((y - dy) % h + h) % h;
    for (std::ptrdiff_t x = 0; x < w; ++x) {
      const std::ptrdiff_t sx = ((x - dx) % w + w) % w;
      for (std::size_t c = 0; c < in.channels(); ++c) {
        out(y, x, c) = in(sy, sx, c);
      }
    }
  }
  return out;
}

template <class Real>
double inner_product(const Image<Real>& a, const Image<Real>& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("inner_product: shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    acc += static_cast<double>(a.values()[i]) * static_cast<double>(b.values()[i]);
  }
  return acc;
}

template <class Real>
double max_abs_difference(const Image<Real>& a, const Image<Real>& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("max_abs_difference: shape mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(static_cast<double>(a.values()[i]) -
                                     static_cast<double>(b.values()[i])));
  }
  return worst;
}

struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> stddev;
};

/// Per-channel mean and (population) standard deviation. When `include` is
/// non-empty only pixels with include[pixel] set are counted.
template <class Real>
ChannelStats channel_stats(const Image<Real>& img, const std::vector<bool>& include = {}) {
  const std::size_t c = img.channels();
  ChannelStats stats{std::vector<double>(c, 0.0), std::vector<double>(c, 0.0)};
  std::size_t count = 0;
  for (std::size_t p = 0; p < img.pixel_count(); ++p) {
    if (!include.empty() && !include[p]) continue;
    ++count;
    for (std::size_t k = 0; k < c; ++k) stats.mean[k] += img.values()[p * c + k];
  }
  if (count == 0) throw std::invalid_argument("channel_stats: no pixels selected");
  for (auto& m : stats.mean) m /= static_cast<double>(count);
  for (std::size_t p = 0; p < img.pixel_count(); ++p) {
    if (!include.empty() && !include[p]) continue;
    for (std::size_t k = 0; k < c; ++k) {
      const double d = img.values()[p * c + k] - stats.mean[k];
      stats.stddev[k] += d * d;
    }
  }
  for (auto& s : stats.stddev) s = std::sqrt(s / static_cast<double>(count));
  return stats;
}

}  // namespace patchot
