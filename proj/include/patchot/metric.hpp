#pragma once

// Multiscale OT distance between the patch distributions of two images.
//
// At every pyramid level the semi-dual objective is maximized by
// supergradient ascent, transporting candidate patches (source) onto
// reference patches (target). The metric is directional.

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "patchot/image.hpp"
#include "patchot/patches.hpp"
#include "patchot/pyramid.hpp"
#include "patchot/semidual.hpp"
#include "patchot/synthesis.hpp"

namespace patchot {

inline constexpr std::size_t kMetricDualIters = 300;
inline constexpr const char* kMetricDirection = "candidate\u2192reference";

struct MetricReport {
  std::vector<double> per_scale;
  /// Arithmetic mean of per_scale.
  double total = 0.0;
  std::size_t patch_size = 0;
  std::size_t num_scales = 0;
  std::size_t dual_iters = 0;
  double dual_step0 = 0.0;
  std::string direction = kMetricDirection;
};

template <class Real>
MetricReport ot_metric(const Image<Real>& candidate, const Image<Real>& reference, std::size_t s,
                       std::size_t num_scales, std::size_t dual_iters = kMetricDualIters,
                       double step0 = 0.8) {
  if (candidate.channels() != reference.channels()) {
    throw std::invalid_argument("ot_metric: candidate has " + std::to_string(candidate.channels()) +
                                " channels, reference " + std::to_string(reference.channels()));
  }
  if (num_scales == 0 || dual_iters == 0) {
    throw std::invalid_argument("ot_metric: scales and dual iterations must be >= 1");
  }
  for (const Dims& d : {candidate.dims(), reference.dims()}) {
    if (!levels_fit(d, num_scales, s)) {
      throw std::invalid_argument("ot_metric: " + std::to_string(num_scales) + " scales of a " +
                                  to_string(d) + " image leave no room for a " +
                                  std::to_string(s) + "x" + std::to_string(s) + " patch");
    }
  }
  const Pyramid<Real> cand = build_pyramid(candidate, num_scales);
  const Pyramid<Real> ref = build_pyramid(reference, num_scales);
  MetricReport report;
  report.patch_size = s;
  report.num_scales = num_scales;
  report.dual_iters = dual_iters;
  report.dual_step0 = step0;
  for (std::size_t l = 0; l < num_scales; ++l) {
    const auto x = extract_patches(cand[l], s, BoundaryMode::periodic);
    const auto y = extract_patches(ref[l], s, BoundaryMode::periodic);
    DualAscent<Real> ascent(x, y, step0);
    ascent.run(dual_iters);
    report.per_scale.push_back(ascent.value());
  }
  double sum = 0.0;
  for (double v : report.per_scale) sum += v;
  report.total = sum / static_cast<double>(num_scales);
  return report;
}

}  // namespace patchot
