#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "patchot/image.hpp"

namespace patchot::io {

/// A file that could not be read or decoded.
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A file that could not be written.
struct OutputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// 8-bit pixels, channel-interleaved, 1 (gray) or 3 (RGB) channels.
struct Raster {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::vector<std::uint8_t> bytes;
};

/// Reads an 8-bit PNG. Gray stays single-channel, anything with color becomes
/// RGB; alpha is dropped without compositing.
Raster read_png(const std::string& path);

void write_png(const std::string& path, const Raster& raster);

template <class Real>
Image<Real> to_image(const Raster& r) {
  std::vector<Real> values(r.bytes.size());
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = static_cast<Real>(r.bytes[i]) / Real(255);
  return Image<Real>(r.height, r.width, r.channels, std::move(values));
}

/// Clamps to [0, 1] and quantizes with round(255 x).
template <class Real>
Raster to_raster(const Image<Real>& img) {
  Raster r{img.height(), img.width(), img.channels(), std::vector<std::uint8_t>(img.size())};
  for (std::size_t i = 0; i < img.size(); ++i) {
    const double v = std::clamp(static_cast<double>(img.values()[i]), 0.0, 1.0);
    r.bytes[i] = static_cast<std::uint8_t>(std::lround(255.0 * v));
  }
  return r;
}

/// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const std::string& path);

}  // namespace patchot::io
