#pragma once

// Texture inpainting: the same multiscale objective as synthesis, with the
// fully-known patches of the image as targets and only the unknown pixels
// as free variables. Patches never wrap around the borders here.

#include <cstddef>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "patchot/image.hpp"
#include "patchot/patches.hpp"
#include "patchot/pyramid.hpp"
#include "patchot/synthesis.hpp"

namespace patchot {

/// H x W flags; true marks a pixel to be synthesized.
struct Mask {
  Dims dims;
  std::vector<bool> unknown;

  Mask() = default;
  Mask(Dims d, std::vector<bool> bits) : dims(d), unknown(std::move(bits)) {
    if (unknown.size() != dims.pixels()) throw std::invalid_argument("Mask: size mismatch");
  }

  bool operator()(std::size_t y, std::size_t x) const { return unknown[y * dims.width + x]; }
  std::size_t count_unknown() const {
    std::size_t n = 0;
    for (bool b : unknown) n += b ? 1 : 0;
    return n;
  }
};

/// Row indices of valid-mode patches, split by whether they touch the mask.
inline void classify_valid_patches(const std::vector<bool>& unknown, Dims dims, std::size_t s,
                                   std::vector<std::size_t>& fully_known,
                                   std::vector<std::size_t>& touching) {
  const Dims grid = patch_location_grid(dims, s, BoundaryMode::valid);
  fully_known.clear();
  touching.clear();
  for (std::size_t py = 0; py < grid.height; ++py) {
    for (std::size_t px = 0; px < grid.width; ++px) {
      bool hit = false;
      for (std::size_t dy = 0; dy < s && !hit; ++dy) {
        for (std::size_t dx = 0; dx < s; ++dx) {
          if (unknown[(py + dy) * dims.width + px + dx]) {
            hit = true;
            break;
          }
        }
      }
      (hit ? touching : fully_known).push_back(py * grid.width + px);
    }
  }
}

template <class Real>
SynthesisResult<Real> inpaint(const Image<Real>& image, const Mask& mask, const SynthesisConfig& cfg,
                              const IterationCallback& on_iteration = {}) {
  if (mask.dims != image.dims()) {
    throw std::invalid_argument("inpaint: mask " + to_string(mask.dims) + " does not match image " +
                                to_string(image.dims()));
  }
  const std::size_t unknown_count = mask.count_unknown();
  if (unknown_count == 0) throw std::invalid_argument("inpaint: mask selects no pixels");
  if (unknown_count == mask.unknown.size()) {
    throw std::invalid_argument("inpaint: mask covers the whole image");
  }
  const std::size_t levels = resolve_num_scales(cfg, image.dims(), image.dims());
  const std::size_t s = cfg.patch_size;

  std::vector<std::vector<bool>> level_masks{mask.unknown};
  const auto dims = pyramid_dims(image.dims(), levels);
  for (std::size_t l = 1; l < levels; ++l) {
    level_masks.push_back(downsample_mask(level_masks.back(), dims[l - 1]));
  }

  std::mt19937_64 rng(cfg.seed);
  const Pyramid<Real> reference = build_pyramid(image, levels);
  detail::MultiscaleProblem<Real> problem;
  std::vector<std::vector<std::size_t>> source_rows(levels);
  for (std::size_t l = 0; l < levels; ++l) {
    std::vector<std::size_t> known;
    classify_valid_patches(level_masks[l], dims[l], s, known, source_rows[l]);
    if (known.empty()) {
      throw std::invalid_argument("inpaint: no fully known " + std::to_string(s) + "x" +
                                  std::to_string(s) + " patch at scale " + std::to_string(l + 1));
    }
    if (source_rows[l].empty()) {
      throw std::invalid_argument("inpaint: no patch touches the mask at scale " +
                                  std::to_string(l + 1));
    }
    const auto all = extract_patches(reference[l], s, BoundaryMode::valid);
    problem.targets.push_back(detail::subsample_rows(
        select_rows(all, std::span<const std::size_t>(known)), cfg.max_target_patches, rng));
  }
  problem.sources = [&](std::size_t l, const Image<Real>& level) {
    return select_rows(extract_patches(level, s, BoundaryMode::valid),
                       std::span<const std::size_t>(source_rows[l]));
  };
  const std::size_t channels = image.channels();
  problem.project = [&](Image<Real>& grad) {
    for (std::size_t p = 0; p < mask.unknown.size(); ++p) {
      if (mask.unknown[p]) continue;
      for (std::size_t c = 0; c < channels; ++c) grad.values()[p * channels + c] = Real(0);
    }
  };
  problem.after_step = [&](Image<Real>& u) {
    for (std::size_t p = 0; p < mask.unknown.size(); ++p) {
      if (mask.unknown[p]) continue;
      for (std::size_t c = 0; c < channels; ++c) {
        u.values()[p * channels + c] = image.values()[p * channels + c];
      }
    }
  };

  std::vector<bool> known_pixels(mask.unknown.size());
  for (std::size_t p = 0; p < known_pixels.size(); ++p) known_pixels[p] = !mask.unknown[p];
  const ChannelStats stats = channel_stats(image, known_pixels);

  Image<Real> u = image;
  std::mt19937_64 noise_rng(rng());
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t p = 0; p < mask.unknown.size(); ++p) {
    if (!mask.unknown[p]) continue;
    for (std::size_t c = 0; c < channels; ++c) {
      u.values()[p * channels + c] = static_cast<Real>(stats.mean[c] + stats.stddev[c] * normal(noise_rng));
    }
  }

  SynthesisResult<Real> result;
  result.trace = detail::run_outer_loop(u, problem, cfg, on_iteration);
  result.image = std::move(u);
  result.num_scales = levels;
  return result;
}

}  // namespace patchot
