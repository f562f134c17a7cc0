#pragma once

// Multiscale texture synthesis by minimizing, over the pixels of u,
//
//   L(u) = sum_l max_phi f_l(phi, S_l u),
//
// where f_l is the semi-dual OT objective between the patches of the l-th
// pyramid level of u and those of the exemplar. Each outer iteration runs a
// few supergradient steps on every phi_l, then pulls the per-level image
// gradients back through S_l^T and takes one Adam step on u.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "patchot/adam.hpp"
#include "patchot/image.hpp"
#include "patchot/parallel.hpp"
#include "patchot/patches.hpp"
#include "patchot/pyramid.hpp"
#include "patchot/semidual.hpp"

namespace patchot {

enum class InitMode { gaussian_noise, provided };

struct SynthesisConfig {
  std::size_t patch_size = 4;
  /// 0 selects the default for the output size (see default_num_scales).
  std::size_t num_scales = 0;
  std::size_t outer_iters = 200;
  std::size_t dual_iters = 100;
  double dual_step0 = 0.8;
  double adam_lr = 0.05;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  bool warm_start_dual = true;
  InitMode init = InitMode::gaussian_noise;
  /// Keep at most this many target patches per scale, drawn uniformly at
  /// random; 0 keeps all of them.
  std::size_t max_target_patches = 0;
  std::size_t score_cache_bytes = kDefaultScoreCacheBytes;

  AdamParams adam() const { return {adam_lr, adam_beta1, adam_beta2, adam_eps}; }

  void validate() const {
    if (patch_size < 1) throw std::invalid_argument("config: patch size must be >= 1");
    if (outer_iters < 1) throw std::invalid_argument("config: outer iterations must be >= 1");
    if (dual_iters < 1) throw std::invalid_argument("config: dual iterations must be >= 1");
    if (!(dual_step0 > 0)) throw std::invalid_argument("config: dual step must be > 0");
    if (!(adam_lr > 0)) throw std::invalid_argument("config: learning rate must be > 0");
    if (!(adam_beta1 >= 0 && adam_beta1 < 1) || !(adam_beta2 >= 0 && adam_beta2 < 1)) {
      throw std::invalid_argument("config: Adam betas must lie in [0, 1)");
    }
    if (!(adam_eps > 0)) throw std::invalid_argument("config: Adam epsilon must be > 0");
  }
};

/// Single-scale preset: Adam with learning rate 0.01 and L = 1.
inline SynthesisConfig single_scale_config() {
  SynthesisConfig cfg;
  cfg.num_scales = 1;
  cfg.adam_lr = 0.01;
  return cfg;
}

struct LossRecord {
  std::size_t iteration = 0;
  double total = 0.0;
  std::vector<double> per_scale;
  double elapsed_ms = 0.0;
};

struct LossTrace {
  std::vector<LossRecord> records;

  std::size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }
  const LossRecord& front() const { return records.front(); }
  const LossRecord& back() const { return records.back(); }
};

using IterationCallback = std::function<void(const LossRecord&)>;

/// True when the coarsest of `num_levels` levels still holds an s x s patch.
inline bool levels_fit(Dims dims, std::size_t num_levels, std::size_t s) {
  try {
    const Dims coarse = pyramid_dims(dims, num_levels).back();
    return coarse.height >= s && coarse.width >= s;
  } catch (const std::invalid_argument&) {
    return false;
  }
}

/// L = max(1, floor(log2(min side)) - 3), lowered until every image's coarsest
/// level holds a patch.
inline std::size_t default_num_scales(std::initializer_list<Dims> images, std::size_t s) {
  std::size_t min_side = SIZE_MAX;
  for (const Dims& d : images) min_side = std::min({min_side, d.height, d.width});
  std::size_t log2 = 0;
  while ((std::size_t{2} << log2) <= min_side) ++log2;
  std::size_t levels = log2 > 4 ? log2 - 3 : 1;
  auto fits = [&](std::size_t l) {
    for (const Dims& d : images) {
      if (!levels_fit(d, l, s)) return false;
    }
    return true;
  };
  while (levels > 1 && !fits(levels)) --levels;
  return levels;
}

/// Gradient in u of f(phi, u) at a fixed assignment:
///   (1/n) sum_i P_i^T (P_i u - y_j*(i)),
/// with n the number of source patches. In periodic mode with every location
/// present this equals (s*s/n) (u - aggregate of matched targets).
template <class Real>
Image<Real> image_gradient(const PatchMatrix<Real>& u_patches, const Assignment& assign,
                           const PatchMatrix<Real>& target) {
  const std::size_t n = u_patches.count();
  if (assign.size() != n) throw std::invalid_argument("image_gradient: assignment size mismatch");
  if (u_patches.dim() != target.dim()) throw std::invalid_argument("image_gradient: dimension mismatch");
  const std::size_t d = u_patches.dim();
  std::vector<Real> residual(n * d);
  parallel_for(0, n, 256, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      const std::size_t j = assign.indices[i];
      if (j >= target.count()) throw std::invalid_argument("image_gradient: index out of range");
      const auto x = u_patches.row(i);
      const auto y = target.row(j);
      for (std::size_t k = 0; k < d; ++k) residual[i * d + k] = x[k] - y[k];
    }
  });
  Image<Real> g = scatter_patches(std::span<const Real>(residual), u_patches.locations(),
                                  u_patches.source_dims(), u_patches.channels(),
                                  u_patches.patch_size(), u_patches.mode());
  const Real inv_n = Real(1) / static_cast<Real>(n);
  for (auto& v : g.values()) v *= inv_n;
  return g;
}

template <class Real>
struct MultiscaleEvaluation {
  double loss = 0.0;
  Image<Real> grad;
  std::vector<double> per_scale;
};

/// Loss and gradient of sum_l f_l(phi_l, S_l u) at fixed potentials, with
/// periodic patches at every level.
template <class Real>
MultiscaleEvaluation<Real> multiscale_loss_and_grad(const Image<Real>& u,
                                                   const std::vector<PatchMatrix<Real>>& exemplar_patches,
                                                   const std::vector<DualPotential<Real>>& duals,
                                                   const SynthesisConfig& cfg) {
  const std::size_t levels = exemplar_patches.size();
  if (levels == 0 || duals.size() != levels) {
    throw std::invalid_argument("multiscale_loss_and_grad: need one potential per scale");
  }
  if (!levels_fit(u.dims(), levels, cfg.patch_size)) {
    throw std::invalid_argument("multiscale_loss_and_grad: image " + to_string(u.dims()) +
                                " too small for " + std::to_string(levels) + " scales");
  }
  const Pyramid<Real> pyr = build_pyramid(u, levels);
  MultiscaleEvaluation<Real> out{0.0, Image<Real>(u.dims(), u.channels()), {}};
  for (std::size_t l = 0; l < levels; ++l) {
    if (duals[l].size() != exemplar_patches[l].count()) {
      throw std::invalid_argument("multiscale_loss_and_grad: potential does not match scale");
    }
    const auto x = extract_patches(pyr[l], cfg.patch_size, BoundaryMode::periodic);
    BiasedNearestSearch<Real> search(x, exemplar_patches[l], 0);
    const Assignment a = search(duals[l].values());
    const double value = semidual_value<Real>(a, duals[l].values());
    out.per_scale.push_back(value);
    out.loss += value;
    const Image<Real> g = pyramid_adjoint(image_gradient(x, a, exemplar_patches[l]), l + 1, u.dims());
    for (std::size_t k = 0; k < g.size(); ++k) out.grad.values()[k] += g.values()[k];
  }
  return out;
}

namespace detail {

template <class Real>
PatchMatrix<Real> subsample_rows(PatchMatrix<Real> patches, std::size_t max_rows,
                                 std::mt19937_64& rng) {
  if (max_rows == 0 || patches.count() <= max_rows) return patches;
  std::vector<std::size_t> idx(patches.count());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(max_rows);
  std::sort(idx.begin(), idx.end());
  return select_rows(patches, std::span<const std::size_t>(idx));
}

/// Per-scale inputs of the outer loop. `sources(l, level_image)` returns the
/// patch set of u at level l; `project(grad)` restricts the full-resolution
/// gradient before the Adam step.
template <class Real>
struct MultiscaleProblem {
  std::vector<PatchMatrix<Real>> targets;
  std::function<PatchMatrix<Real>(std::size_t, const Image<Real>&)> sources;
  std::function<void(Image<Real>&)> project;
  std::function<void(Image<Real>&)> after_step;
};

template <class Real>
LossTrace run_outer_loop(Image<Real>& u, const MultiscaleProblem<Real>& problem,
                         const SynthesisConfig& cfg, const IterationCallback& on_iteration) {
  const std::size_t levels = problem.targets.size();
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<std::vector<Real>> phi(levels);
  std::vector<std::size_t> next_step(levels, 1);
  for (std::size_t l = 0; l < levels; ++l) phi[l].assign(problem.targets[l].count(), Real(0));
  AdamState<Real> adam(u.size());
  const AdamParams adam_params = cfg.adam();
  LossTrace trace;
  trace.records.reserve(cfg.outer_iters);

  for (std::size_t k = 1; k <= cfg.outer_iters; ++k) {
    const Pyramid<Real> pyr = build_pyramid(u, levels);
    Image<Real> grad(u.dims(), u.channels());
    LossRecord rec;
    rec.iteration = k;
    for (std::size_t l = 0; l < levels; ++l) {
      const PatchMatrix<Real> x = problem.sources(l, pyr[l]);
      DualAscent<Real> ascent(x, problem.targets[l], cfg.dual_step0, cfg.score_cache_bytes);
      if (cfg.warm_start_dual) {
        ascent.reset(std::move(phi[l]), next_step[l]);
      }
      ascent.run(cfg.dual_iters);
      const Assignment a = ascent.assignment();
      const double value = semidual_value<Real>(a, ascent.phi());
      rec.per_scale.push_back(value);
      rec.total += value;
      const Image<Real> g =
          pyramid_adjoint(image_gradient(x, a, problem.targets[l]), l + 1, u.dims());
      for (std::size_t i = 0; i < g.size(); ++i) grad.values()[i] += g.values()[i];
      phi[l] = ascent.phi();
      next_step[l] = ascent.next_step();
    }
    if (problem.project) problem.project(grad);
    adam_step(u, grad, adam, adam_params);
    if (problem.after_step) problem.after_step(u);
    rec.elapsed_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    if (on_iteration) on_iteration(rec);
    trace.records.push_back(std::move(rec));
  }
  return trace;
}

}  // namespace detail

template <class Real>
struct SynthesisResult {
  Image<Real> image;
  LossTrace trace;
  std::size_t num_scales = 0;
};

/// Seeded Gaussian noise with the exemplar's per-channel mean and std.
template <class Real>
Image<Real> noise_like(const Image<Real>& exemplar, Dims dims, std::uint64_t seed) {
  const ChannelStats stats = channel_stats(exemplar);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Image<Real> out(dims, exemplar.channels());
  auto& v = out.values();
  for (std::size_t i = 0; i < v.size(); ++i) {
    const std::size_t c = i % exemplar.channels();
    v[i] = static_cast<Real>(stats.mean[c] + stats.stddev[c] * normal(rng));
  }
  return out;
}

/// Resolves the scale count and checks that every level of both images holds
/// a patch. Throws std::invalid_argument otherwise.
inline std::size_t resolve_num_scales(const SynthesisConfig& cfg, Dims exemplar, Dims output) {
  cfg.validate();
  const std::size_t levels =
      cfg.num_scales ? cfg.num_scales : default_num_scales({exemplar, output}, cfg.patch_size);
  for (const Dims& d : {exemplar, output}) {
    if (!levels_fit(d, levels, cfg.patch_size)) {
      throw std::invalid_argument("config: " + std::to_string(levels) + " scales of a " +
                                  to_string(d) + " image leave no room for a " +
                                  std::to_string(cfg.patch_size) + "x" +
                                  std::to_string(cfg.patch_size) + " patch");
    }
  }
  return levels;
}

template <class Real>
SynthesisResult<Real> synthesize(const Image<Real>& exemplar, Dims out_dims, const SynthesisConfig& cfg,
                                 const std::optional<std::type_identity_t<Image<Real>>>& initial = std::nullopt,
                                 const IterationCallback& on_iteration = {}) {
  const std::size_t levels = resolve_num_scales(cfg, exemplar.dims(), out_dims);
  std::mt19937_64 rng(cfg.seed);

  Image<Real> u;
  if (cfg.init == InitMode::provided) {
    if (!initial) throw std::invalid_argument("synthesize: init=provided needs an initial image");
    if (initial->dims() != out_dims || initial->channels() != exemplar.channels()) {
      throw std::invalid_argument("synthesize: initial image does not match output shape");
    }
    u = *initial;
  } else {
    u = noise_like(exemplar, out_dims, rng());
  }

  detail::MultiscaleProblem<Real> problem;
  const Pyramid<Real> ex = build_pyramid(exemplar, levels);
  for (std::size_t l = 0; l < levels; ++l) {
    problem.targets.push_back(detail::subsample_rows(
        extract_patches(ex[l], cfg.patch_size, BoundaryMode::periodic), cfg.max_target_patches, rng));
  }
  problem.sources = [&cfg](std::size_t, const Image<Real>& level) {
    return extract_patches(level, cfg.patch_size, BoundaryMode::periodic);
  };

  SynthesisResult<Real> result;
  result.trace = detail::run_outer_loop(u, problem, cfg, on_iteration);
  result.image = std::move(u);
  result.num_scales = levels;
  return result;
}

}  // namespace patchot
