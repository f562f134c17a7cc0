#pragma once

// Gaussian pyramid operators S_l and their exact transposes.
//
// One pyramid step is a periodic separable blur with the binomial kernel
// [1 4 6 4 1] / 16 followed by keeping even-indexed rows and columns, so a
// d-pixel axis becomes ceil(d / 2). S_1 is the identity and S_l applies the
// step l - 1 times.

#include <array>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "patchot/image.hpp"
#include "patchot/parallel.hpp"

namespace patchot {

inline constexpr std::array<double, 5> kBinomialKernel{1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16,
                                                       1.0 / 16};
inline constexpr std::ptrdiff_t kKernelRadius = 2;

namespace detail {

inline std::size_t wrap(std::ptrdiff_t i, std::size_t n) {
  const auto m = static_cast<std::ptrdiff_t>(n);
  return static_cast<std::size_t>(((i % m) + m) % m);
}

template <class Real>
Image<Real> blur_rows(const Image<Real>& in) {
  Image<Real> out(in.dims(), in.channels());
  const std::size_t w = in.width();
  const std::size_t c = in.channels();
  parallel_for(0, in.height(), 16, [&](std::size_t y0, std::size_t y1) {
    for (std::size_t y = y0; y < y1; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        for (std::size_t k = 0; k < c; ++k) {
          double acc = 0.0;
          for (std::ptrdiff_t t = -kKernelRadius; t <= kKernelRadius; ++t) {
            acc += kBinomialKernel[t + kKernelRadius] *
                   in(y, wrap(static_cast<std::ptrdiff_t>(x) + t, w), k);
          }
          out(y, x, k) = static_cast<Real>(acc);
        }
      }
    }
  });
  return out;
}

template <class Real>
Image<Real> blur_cols(const Image<Real>& in) {
  Image<Real> out(in.dims(), in.channels());
  const std::size_t h = in.height();
  const std::size_t w = in.width();
  const std::size_t c = in.channels();
  parallel_for(0, h, 16, [&](std::size_t y0, std::size_t y1) {
    for (std::size_t y = y0; y < y1; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        for (std::size_t k = 0; k < c; ++k) {
          double acc = 0.0;
          for (std::ptrdiff_t t = -kKernelRadius; t <= kKernelRadius; ++t) {
            acc += kBinomialKernel[t + kKernelRadius] *
                   in(wrap(static_cast<std::ptrdiff_t>(y) + t, h), x, k);
          }
          out(y, x, k) = static_cast<Real>(acc);
        }
      }
    }
  });
  return out;
}

}  // namespace detail

/// Periodic binomial blur. The kernel is symmetric, so this operator is its
/// own transpose on the torus.
template <class Real>
Image<Real> blur(const Image<Real>& in) {
  return detail::blur_cols(detail::blur_rows(in));
}

inline Dims downsampled_dims(Dims d) { return {(d.height + 1) / 2, (d.width + 1) / 2}; }

/// Keeps pixels with even row and column index.
template <class Real>
Image<Real> decimate(const Image<Real>& in) {
  const Dims od = downsampled_dims(in.dims());
  Image<Real> out(od, in.channels());
  for (std::size_t y = 0; y < od.height; ++y) {
    for (std::size_t x = 0; x < od.width; ++x) {
      for (std::size_t k = 0; k < in.channels(); ++k) out(y, x, k) = in(2 * y, 2 * x, k);
    }
  }
  return out;
}

/// Transpose of decimate: places coarse pixels at even positions of a zero image.
template <class Real>
Image<Real> zero_upsample(const Image<Real>& coarse, Dims fine) {
  if (downsampled_dims(fine) != coarse.dims()) {
    throw std::invalid_argument("zero_upsample: " + to_string(coarse.dims()) +
                                " is not the decimation of " + to_string(fine));
  }
  Image<Real> out(fine, coarse.channels());
  for (std::size_t y = 0; y < coarse.height(); ++y) {
    for (std::size_t x = 0; x < coarse.width(); ++x) {
      for (std::size_t k = 0; k < coarse.channels(); ++k) out(2 * y, 2 * x, k) = coarse(y, x, k);
    }
  }
  return out;
}

template <class Real>
Image<Real> downsample(const Image<Real>& in) {
  return decimate(blur(in));
}

/// Transpose of downsample: blur^T(decimate^T(.)) with blur^T = blur.
template <class Real>
Image<Real> downsample_adjoint(const Image<Real>& coarse, Dims fine) {
  return blur(zero_upsample(coarse, fine));
}

/// Dimensions of levels 1..L for an image of the given size.
inline std::vector<Dims> pyramid_dims(Dims base, std::size_t num_levels) {
  if (num_levels == 0) throw std::invalid_argument("pyramid: need at least one level");
  if (base.height == 0 || base.width == 0) throw std::invalid_argument("pyramid: empty image");
  std::vector<Dims> dims{base};
  for (std::size_t l = 1; l < num_levels; ++l) {
    const Dims prev = dims.back();
    if (prev.height == 1 && prev.width == 1) {
      throw std::invalid_argument("pyramid: " + std::to_string(num_levels) +
                                  " levels shrink " + to_string(base) + " below 1x1");
    }
    dims.push_back(downsampled_dims(prev));
  }
  return dims;
}

template <class Real>
struct Pyramid {
  std::vector<Image<Real>> levels;

  std::size_t size() const { return levels.size(); }
  const Image<Real>& operator[](std::size_t l) const { return levels[l]; }
};

template <class Real>
Pyramid<Real> build_pyramid(const Image<Real>& image, std::size_t num_levels) {
  pyramid_dims(image.dims(), num_levels);
  Pyramid<Real> p;
  p.levels.reserve(num_levels);
  p.levels.push_back(image);
  for (std::size_t l = 1; l < num_levels; ++l) p.levels.push_back(downsample(p.levels.back()));
  return p;
}

/// Applies S_l^T to a gradient living on level `level` (1-based) and returns
/// an image of size `original`.
template <class Real>
Image<Real> pyramid_adjoint(const Image<Real>& level_grad, std::size_t level, Dims original) {
  const auto dims = pyramid_dims(original, level);
  if (level_grad.dims() != dims.back()) {
    throw std::invalid_argument("pyramid_adjoint: level " + std::to_string(level) +
                                " expects " + to_string(dims.back()) + ", got " +
                                to_string(level_grad.dims()));
  }
  Image<Real> g = level_grad;
  for (std::size_t l = level; l-- > 1;) g = downsample_adjoint(g, dims[l - 1]);
  return g;
}

/// Coarse pixel is set iff any fine pixel inside its blur footprint is set.
inline std::vector<bool> downsample_mask(const std::vector<bool>& mask, Dims fine) {
  if (mask.size() != fine.pixels()) throw std::invalid_argument("downsample_mask: size mismatch");
  const Dims coarse = downsampled_dims(fine);
  std::vector<bool> out(coarse.pixels(), false);
  for (std::size_t y = 0; y < coarse.height; ++y) {
    for (std::size_t x = 0; x < coarse.width; ++x) {
      bool any = false;
      for (std::ptrdiff_t ty = -kKernelRadius; ty <= kKernelRadius && !any; ++ty) {
        const std::size_t fy = detail::wrap(static_cast<std::ptrdiff_t>(2 * y) + ty, fine.height);
        for (std::ptrdiff_t tx = -kKernelRadius; tx <= kKernelRadius; ++tx) {
          const std::size_t fx = detail::wrap(static_cast<std::ptrdiff_t>(2 * x) + tx, fine.width);
          if (mask[fy * fine.width + fx]) {
            any = true;
            break;
          }
        }
      }
      out[y * coarse.width + x] = any;
    }
  }
  return out;
}

}  // namespace patchot
