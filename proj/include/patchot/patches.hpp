#pragma once

// Patch extraction P_i and its adjoint P_i^T.
//
// A patch row at top-left location (py, px) stores, for dy, dx in [0, s) and
// every channel c, the pixel (py + dy, px + dx, c) at offset (dy * s + dx) * C + c.
// Periodic mode wraps coordinates on the torus (one patch per pixel); valid
// mode only keeps windows fully inside the image.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "patchot/image.hpp"
#include "patchot/parallel.hpp"

namespace patchot {

enum class BoundaryMode { periodic, valid };

inline const char* to_string(BoundaryMode m) {
  return m == BoundaryMode::periodic ? "periodic" : "valid";
}

/// Grid of admissible top-left corners for a mode.
inline Dims patch_location_grid(Dims image, std::size_t s, BoundaryMode mode) {
  if (s == 0 || s > image.height || s > image.width) {
    throw std::invalid_argument("patch size " + std::to_string(s) + " does not fit image " +
                                to_string(image));
  }
  if (mode == BoundaryMode::periodic) return image;
  return {image.height - s + 1, image.width - s + 1};
}

/// Rows of flattened patches with cached half squared norms.
///
/// `locations()[i]` is the raster index of row i's top-left corner inside the
/// location grid; a full extraction lists every location in raster order, a
/// subset (see select_rows) lists only some of them.
template <class Real>
class PatchMatrix {
 public:
  PatchMatrix() = default;

  PatchMatrix(std::size_t patch_size, std::size_t channels, Dims source_dims, BoundaryMode mode,
              std::vector<std::size_t> locations, std::vector<Real> rows)
      : patch_size_(patch_size),
        channels_(channels),
        source_dims_(source_dims),
        mode_(mode),
        locations_(std::move(locations)),
        rows_(std::move(rows)) {
    const Dims grid = patch_location_grid(source_dims_, patch_size_, mode_);
    if (channels_ == 0) throw std::invalid_argument("PatchMatrix: channels must be >= 1");
    if (rows_.size() != locations_.size() * dim()) {
      throw std::invalid_argument("PatchMatrix: row data does not match count x dim");
    }
    for (auto loc : locations_) {
      if (loc >= grid.pixels()) throw std::invalid_argument("PatchMatrix: location out of range");
    }
    refresh_norms();
  }

  std::size_t patch_size() const { return patch_size_; }
  std::size_t channels() const { return channels_; }
  std::size_t count() const { return locations_.size(); }
  /// Row length s * s * C.
  std::size_t dim() const { return patch_size_ * patch_size_ * channels_; }
  /// Pixels per patch, s * s.
  std::size_t pixels_per_patch() const { return patch_size_ * patch_size_; }
  Dims source_dims() const { return source_dims_; }
  BoundaryMode mode() const { return mode_; }
  Dims location_grid() const { return patch_location_grid(source_dims_, patch_size_, mode_); }
  bool is_full() const { return count() == location_grid().pixels(); }

  std::span<const Real> row(std::size_t i) const { return {rows_.data() + i * dim(), dim()}; }
  std::span<const Real> data() const { return rows_; }
  std::span<const Real> sq_norms() const { return sq_norms_; }
  std::span<const std::size_t> locations() const { return locations_; }

 private:
  void refresh_norms() {
    sq_norms_.assign(count(), Real(0));
    const std::size_t d = dim();
    for (std::size_t i = 0; i < count(); ++i) {
      const Real* r = rows_.data() + i * d;
      double acc = 0.0;
      for (std::size_t k = 0; k < d; ++k) acc += static_cast<double>(r[k]) * r[k];
      sq_norms_[i] = static_cast<Real>(0.5 * acc);
    }
  }

  std::size_t patch_size_ = 0;
  std::size_t channels_ = 0;
  Dims source_dims_{};
  BoundaryMode mode_ = BoundaryMode::periodic;
  std::vector<std::size_t> locations_;
  std::vector<Real> rows_;
  std::vector<Real> sq_norms_;
};

template <class Real>
PatchMatrix<Real> extract_patches(const Image<Real>& image, std::size_t s, BoundaryMode mode) {
  const Dims grid = patch_location_grid(image.dims(), s, mode);
  const std::size_t c = image.channels();
  const std::size_t d = s * s * c;
  const std::size_t h = image.height();
  const std::size_t w = image.width();
  std::vector<Real> rows(grid.pixels() * d);
  parallel_for(0, grid.height, 8, [&](std::size_t y0, std::size_t y1) {
    for (std::size_t py = y0; py < y1; ++py) {
      for (std::size_t px = 0; px < grid.width; ++px) {
        Real* out = rows.data() + (py * grid.width + px) * d;
        for (std::size_t dy = 0; dy < s; ++dy) {
          const std::size_t y = (py + dy) % h;
          for (std::size_t dx = 0; dx < s; ++dx) {
            const std::size_t x = (px + dx) % w;
            for (std::size_t k = 0; k < c; ++k) *out++ = image(y, x, k);
          }
        }
      }
    }
  });
  std::vector<std::size_t> locations(grid.pixels());
  std::iota(locations.begin(), locations.end(), std::size_t{0});
  return PatchMatrix<Real>(s, c, image.dims(), mode, std::move(locations), std::move(rows));
}

/// Keeps the listed rows, in the given order.
template <class Real>
PatchMatrix<Real> select_rows(const PatchMatrix<Real>& patches, std::span<const std::size_t> rows) {
  std::vector<std::size_t> locations;
  std::vector<Real> data;
  locations.reserve(rows.size());
  data.reserve(rows.size() * patches.dim());
  for (auto r : rows) {
    if (r >= patches.count()) throw std::invalid_argument("select_rows: row index out of range");
    locations.push_back(patches.locations()[r]);
    auto src = patches.row(r);
    data.insert(data.end(), src.begin(), src.end());
  }
  return PatchMatrix<Real>(patches.patch_size(), patches.channels(), patches.source_dims(),
                           patches.mode(), std::move(locations), std::move(data));
}

/// Lookup from location raster index to row index (-1 when absent).
inline std::vector<std::int64_t> location_to_row(std::span<const std::size_t> locations,
                                                 std::size_t grid_size) {
  std::vector<std::int64_t> lut(grid_size, -1);
  for (std::size_t i = 0; i < locations.size(); ++i) {
    lut[locations[i]] = static_cast<std::int64_t>(i);
  }
  return lut;
}

namespace detail {

// Accumulator for overlap sums. With a 64-bit mantissa, sums of up to 2^11
// equal doubles are exact, so averaging identical copies returns the input.
template <class Real>
using wide_t = std::conditional_t<std::is_same_v<Real, float>, double, long double>;

// Sum (or, with `average`, mean) of every patch entry covering each pixel,
// as a gather over (dy, dx) in fixed order so each pixel is a deterministic
// sum regardless of threading.
template <class Real>
Image<Real> overlap_reduce(std::span<const Real> rows, std::span<const std::size_t> locations,
                           Dims dims, std::size_t channels, std::size_t s, BoundaryMode mode,
                           bool average, std::vector<std::uint32_t>* coverage) {
  using Acc = wide_t<Real>;
  const Dims grid = patch_location_grid(dims, s, mode);
  const std::size_t d = s * s * channels;
  if (rows.size() != locations.size() * d) {
    throw std::invalid_argument("scatter_patches: row data does not match location count");
  }
  const auto lut = location_to_row(locations, grid.pixels());
  Image<Real> out(dims, channels);
  if (coverage) coverage->assign(dims.pixels(), 0);
  const std::size_t h = dims.height;
  const std::size_t w = dims.width;
  parallel_for(0, h, 8, [&](std::size_t y0, std::size_t y1) {
    std::vector<Acc> acc(channels);
    for (std::size_t y = y0; y < y1; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        std::fill(acc.begin(), acc.end(), Acc(0));
        std::uint32_t covered = 0;
        for (std::size_t dy = 0; dy < s; ++dy) {
          std::size_t py;
          if (mode == BoundaryMode::periodic) {
            py = (y + h - dy) % h;
          } else {
            if (y < dy || y - dy >= grid.height) continue;
            py = y - dy;
          }
          for (std::size_t dx = 0; dx < s; ++dx) {
            std::size_t px;
            if (mode == BoundaryMode::periodic) {
              px = (x + w - dx) % w;
            } else {
              if (x < dx || x - dx >= grid.width) continue;
              px = x - dx;
            }
            const std::int64_t r = lut[py * grid.width + px];
            if (r < 0) continue;
            ++covered;
            const Real* q = rows.data() + static_cast<std::size_t>(r) * d + (dy * s + dx) * channels;
            for (std::size_t k = 0; k < channels; ++k) acc[k] += q[k];
          }
        }
        for (std::size_t k = 0; k < channels; ++k) {
          const Acc v = average && covered > 0 ? acc[k] / static_cast<Acc>(covered) : acc[k];
          out(y, x, k) = static_cast<Real>(v);
        }
        if (coverage) (*coverage)[y * w + x] = covered;
      }
    }
  });
  return out;
}

}  // namespace detail

/// Adjoint of patch extraction restricted to `locations`: every row is added
/// back at its location. `coverage`, when given, receives the number of
/// patch entries summed into each pixel.
template <class Real>
Image<Real> scatter_patches(std::span<const Real> rows, std::span<const std::size_t> locations,
                            Dims dims, std::size_t channels, std::size_t s, BoundaryMode mode,
                            std::vector<std::uint32_t>* coverage = nullptr) {
  return detail::overlap_reduce(rows, locations, dims, channels, s, mode, false, coverage);
}

namespace detail {

template <class Real>
Image<Real> aggregate_at(std::span<const Real> rows, std::span<const std::size_t> locations,
                         Dims dims, std::size_t channels, std::size_t s, BoundaryMode mode) {
  return overlap_reduce(rows, locations, dims, channels, s, mode, true, nullptr);
}

}  // namespace detail

/// Overlap-averaging of a full set of patches (raster order) back into an
/// image. Each pixel is the mean of every patch entry covering it, so the
/// divisor is s * s everywhere in periodic mode.
template <class Real>
Image<Real> aggregate_patches(std::span<const Real> rows, Dims dims, std::size_t channels,
                              std::size_t s, BoundaryMode mode) {
  const Dims grid = patch_location_grid(dims, s, mode);
  const std::size_t d = s * s * channels;
  if (channels == 0 || rows.size() != grid.pixels() * d) {
    throw std::invalid_argument("aggregate_patches: expected " + std::to_string(grid.pixels()) +
                                " patches for " + to_string(dims) + " in " + to_string(mode) +
                                " mode, got " + std::to_string(d ? rows.size() / d : 0));
  }
  std::vector<std::size_t> locations(grid.pixels());
  std::iota(locations.begin(), locations.end(), std::size_t{0});
  return detail::aggregate_at(rows, std::span<const std::size_t>(locations), dims, channels, s,
                              mode);
}

template <class Real>
Image<Real> aggregate_patches(const PatchMatrix<Real>& patches) {
  if (!patches.is_full()) {
    throw std::invalid_argument("aggregate_patches: patch matrix does not cover every location");
  }
  return detail::aggregate_at(patches.data(), patches.locations(), patches.source_dims(),
                              patches.channels(), patches.patch_size(), patches.mode());
}

}  // namespace patchot
