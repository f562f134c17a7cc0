#pragma once

// Semi-dual discrete optimal transport between uniform patch distributions
// with the quadratic cost c(x, y) = 1/2 |x - y|^2.
//
// For a potential phi on the target points y_1..y_m, the c-transform of a
// source point x is min_j c(x, y_j) - phi_j and the semi-dual objective is
//
//   f(phi) = 1/n sum_i phi^c(x_i) + 1/m sum_j phi_j,
//
// which is concave in phi and bounded above by the optimal transport cost.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "patchot/parallel.hpp"
#include "patchot/patches.hpp"

namespace patchot {

/// Semi-dual variable phi attached to a target patch set. Holds a
/// non-owning reference; the target must outlive the potential.
template <class Real>
class DualPotential {
 public:
  explicit DualPotential(const PatchMatrix<Real>& target)
      : target_(&target), phi_(target.count(), Real(0)) {}

  DualPotential(const PatchMatrix<Real>& target, std::vector<Real> phi)
      : target_(&target), phi_(std::move(phi)) {
    if (phi_.size() != target.count()) {
      throw std::invalid_argument("DualPotential: length " + std::to_string(phi_.size()) +
                                  " does not match target count " +
                                  std::to_string(target.count()));
    }
    for (Real v : phi_) {
      if (!std::isfinite(v)) throw std::invalid_argument("DualPotential: non-finite entry");
    }
  }

  const PatchMatrix<Real>& target() const { return *target_; }
  std::span<const Real> values() const { return phi_; }
  std::size_t size() const { return phi_.size(); }
  Real operator[](std::size_t j) const { return phi_[j]; }

 private:
  const PatchMatrix<Real>* target_;
  std::vector<Real> phi_;
};

/// Result of a c-transform: the minimizing target j*(i) of each source row
/// and the minimized value c(x_i, y_j*) - phi_j*.
struct Assignment {
  std::vector<std::size_t> indices;
  std::vector<double> costs;

  std::size_t size() const { return indices.size(); }
};

inline constexpr std::size_t kDefaultScoreCacheBytes = std::size_t{512} << 20;

/// Biased nearest-target search for a fixed (source, target) pair.
///
/// Uses 1/2|x - y|^2 - phi = 1/2|x|^2 - (<x, y> + phi - 1/2|y|^2): the argmin
/// becomes a row-wise argmax of a matrix product plus a per-target bias. The
/// product is cached when it fits the byte budget, which makes repeated
/// searches with different potentials cheap. Ties go to the smallest index;
/// the returned cost is re-evaluated directly on the winning pair.
template <class Real>
class BiasedNearestSearch {
 public:
  static constexpr std::size_t kRowChunk = 64;
  static constexpr std::size_t kShortlist = 32;

  BiasedNearestSearch(const PatchMatrix<Real>& source, const PatchMatrix<Real>& target,
                      std::size_t cache_bytes = kDefaultScoreCacheBytes)
      : source_(&source), target_(&target) {
    if (source.dim() != target.dim()) {
      throw std::invalid_argument("c-transform: source rows have length " +
                                  std::to_string(source.dim()) + ", target rows " +
                                  std::to_string(target.dim()));
    }
    if (target.count() == 0) throw std::invalid_argument("c-transform: empty target set");
    if (target.count() > static_cast<std::size_t>(std::numeric_limits<std::int32_t>::max())) {
      throw std::invalid_argument("c-transform: too many target patches");
    }
    const std::size_t entries = source.count() * target.count();
    if (entries <= cache_bytes / sizeof(Real)) {
      scores_.resize(static_cast<Eigen::Index>(source.count()),
                     static_cast<Eigen::Index>(target.count()));
      parallel_for(0, source.count(), kRowChunk, [&](std::size_t lo, std::size_t hi) {
        const auto len = static_cast<Eigen::Index>(hi - lo);
        scores_.middleRows(static_cast<Eigen::Index>(lo), len).noalias() =
            source_rows().middleRows(static_cast<Eigen::Index>(lo), len) *
            target_rows().transpose();
      });
      cached_ = true;
      if (target.count() >= 4 * kShortlist) build_shortlists();
    }
  }

  const PatchMatrix<Real>& source() const { return *source_; }
  const PatchMatrix<Real>& target() const { return *target_; }
  bool cached() const { return cached_; }

  Assignment operator()(std::span<const Real> phi) const {
    const std::size_t n = source_->count();
    const std::size_t m = target_->count();
    if (phi.size() != m) throw std::invalid_argument("c-transform: potential length mismatch");
    std::vector<Real> bias(m);
    for (std::size_t j = 0; j < m; ++j) bias[j] = phi[j] - target_->sq_norms()[j];

    // A shortlist answer is exact when it beats every target left off the
    // list: those score at most tail + max(phi), plus rounding slack.
    const bool use_shortlists = !shortlists_.empty();
    Real max_phi = -std::numeric_limits<Real>::infinity();
    double phi_abs = 0.0;
    for (Real v : phi) {
      max_phi = std::max(max_phi, v);
      phi_abs = std::max(phi_abs, std::abs(static_cast<double>(v)));
    }
    const double slack = 16.0 * std::numeric_limits<Real>::epsilon() * (norm_scale_ + phi_abs);

    Assignment out;
    out.indices.resize(n);
    out.costs.resize(n);
    parallel_for(0, n, kRowChunk, [&](std::size_t lo, std::size_t hi) {
      const auto len = static_cast<Eigen::Index>(hi - lo);
      RowMatrix block;
      if (!cached_) {
        block.noalias() =
            source_rows().middleRows(static_cast<Eigen::Index>(lo), len) * target_rows().transpose();
      }
      for (std::size_t i = lo; i < hi; ++i) {
        const Real* s = cached_ ? scores_.row(static_cast<Eigen::Index>(i)).data()
                                : block.row(static_cast<Eigen::Index>(i - lo)).data();
        std::size_t j = m;
        if (use_shortlists) {
          j = shortlist_argmax(s, bias.data(), i,
                               static_cast<double>(tails_[i]) + static_cast<double>(max_phi) + slack);
        }
        if (j == m) j = biased_argmax(s, bias.data(), m);
        out.indices[i] = j;
        out.costs[i] = half_sq_distance(source_->row(i), target_->row(j)) - static_cast<double>(phi[j]);
      }
    });
    return out;
  }

 private:
  using RowMatrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using ConstRowMap = Eigen::Map<const RowMatrix>;
  using Lane = std::conditional_t<sizeof(Real) == 4, std::int32_t, std::int64_t>;

  ConstRowMap source_rows() const {
    return ConstRowMap(source_->data().data(), static_cast<Eigen::Index>(source_->count()),
                       static_cast<Eigen::Index>(source_->dim()));
  }
  ConstRowMap target_rows() const {
    return ConstRowMap(target_->data().data(), static_cast<Eigen::Index>(target_->count()),
                       static_cast<Eigen::Index>(target_->dim()));
  }

  // Per source row, the kShortlist targets with the largest unbiased score
  // s_ij - |y_j|^2 / 2 and the next largest score (the tail).
  void build_shortlists() {
    const std::size_t n = source_->count(), m = target_->count();
    const auto& sq = target_->sq_norms();
    shortlists_.resize(n * kShortlist);
    tails_.resize(n);
    double max_src = 0.0, max_tgt = 0.0;
    for (double v : source_->sq_norms()) max_src = std::max(max_src, v);
    for (double v : sq) max_tgt = std::max(max_tgt, v);
    // |s_ij| <= |x_i| |y_j| <= (|x_i|^2 + |y_j|^2) / 2.
    norm_scale_ = 2.0 * (max_src + max_tgt);
    parallel_for(0, n, kRowChunk, [&](std::size_t lo, std::size_t hi) {
      using Entry = std::pair<Real, std::int32_t>;
      std::vector<Entry> heap;
      heap.reserve(kShortlist + 1);
      const auto worse = [](const Entry& a, const Entry& b) { return a.first > b.first; };
      for (std::size_t i = lo; i < hi; ++i) {
        const Real* s = scores_.row(static_cast<Eigen::Index>(i)).data();
        heap.clear();
        for (std::size_t j = 0; j < m; ++j) {
          const Real t = s[j] - static_cast<Real>(sq[j]);
          if (heap.size() <= kShortlist) {
            heap.emplace_back(t, static_cast<std::int32_t>(j));
            std::push_heap(heap.begin(), heap.end(), worse);
          } else if (t > heap.front().first) {
            std::pop_heap(heap.begin(), heap.end(), worse);
            heap.back() = {t, static_cast<std::int32_t>(j)};
            std::push_heap(heap.begin(), heap.end(), worse);
          }
        }
        std::pop_heap(heap.begin(), heap.end(), worse);
        tails_[i] = heap.back().first;
        for (std::size_t k = 0; k < kShortlist; ++k) shortlists_[i * kShortlist + k] = heap[k].second;
      }
    });
  }

  // Biased argmax over row i's shortlist, or m when it cannot be certified
  // to exceed `bound`.
  std::size_t shortlist_argmax(const Real* s, const Real* b, std::size_t i, double bound) const {
    const std::int32_t* list = shortlists_.data() + i * kShortlist;
    Real best_v = -std::numeric_limits<Real>::infinity();
    std::size_t best_j = target_->count();
    for (std::size_t k = 0; k < kShortlist; ++k) {
      const auto j = static_cast<std::size_t>(list[k]);
      const Real v = s[j] + b[j];
      if (v > best_v || (v == best_v && j < best_j)) {
        best_v = v;
        best_j = j;
      }
    }
    return static_cast<double>(best_v) > bound ? best_j : target_->count();
  }

  // First index of max(s[j] + b[j]). Lane-wise strict comparison keeps the
  // earliest index per lane; lanes are merged by value then index.
  static std::size_t biased_argmax(const Real* s, const Real* b, std::size_t m) {
    constexpr std::size_t kLanes = 16;
    Real best[kLanes];
    Lane where[kLanes];
    for (std::size_t l = 0; l < kLanes; ++l) {
      best[l] = -std::numeric_limits<Real>::infinity();
      where[l] = static_cast<Lane>(l);
    }
    std::size_t j = 0;
    for (; j + kLanes <= m; j += kLanes) {
      for (std::size_t l = 0; l < kLanes; ++l) {
        const Real v = s[j + l] + b[j + l];
        const bool better = v > best[l];
        best[l] = better ? v : best[l];
        where[l] = better ? static_cast<Lane>(j + l) : where[l];
      }
    }
    Real best_v = -std::numeric_limits<Real>::infinity();
    std::size_t best_j = m;
    if (j > 0) {
      for (std::size_t l = 0; l < kLanes; ++l) {
        const auto w = static_cast<std::size_t>(where[l]);
        if (best[l] > best_v || (best[l] == best_v && w < best_j)) {
          best_v = best[l];
          best_j = w;
        }
      }
    }
    for (; j < m; ++j) {
      const Real v = s[j] + b[j];
      if (v > best_v) {
        best_v = v;
        best_j = j;
      }
    }
    // Only reachable with NaN scores.
    return best_j < m ? best_j : 0;
  }

  static double half_sq_distance(std::span<const Real> x, std::span<const Real> y) {
    double acc = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
      const double d = static_cast<double>(x[k]) - static_cast<double>(y[k]);
      acc += d * d;
    }
    return 0.5 * acc;
  }

  const PatchMatrix<Real>* source_;
  const PatchMatrix<Real>* target_;
  RowMatrix scores_;
  bool cached_ = false;
  std::vector<std::int32_t> shortlists_;
  std::vector<Real> tails_;
  double norm_scale_ = 0.0;
};

template <class Real>
Assignment c_transform(const PatchMatrix<Real>& source, const DualPotential<Real>& pot) {
  BiasedNearestSearch<Real> search(source, pot.target(), 0);
  return search(pot.values());
}

/// Supergradient of f in phi: g_j = 1/m - #{i : j*(i) = j} / n.
inline std::vector<double> dual_supergradient(const Assignment& assign, std::size_t m) {
  const std::size_t n = assign.size();
  if (n == 0 || m == 0) throw std::invalid_argument("dual_supergradient: empty assignment");
  std::vector<std::size_t> counts(m, 0);
  for (auto j : assign.indices) {
    if (j >= m) throw std::invalid_argument("dual_supergradient: index out of range");
    ++counts[j];
  }
  std::vector<double> g(m);
  const double inv_m = 1.0 / static_cast<double>(m);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t j = 0; j < m; ++j) g[j] = inv_m - static_cast<double>(counts[j]) * inv_n;
  return g;
}

/// f(phi) from an assignment already computed at phi.
template <class Real>
double semidual_value(const Assignment& assign, std::span<const Real> phi) {
  if (assign.size() == 0 || phi.empty()) throw std::invalid_argument("semidual_value: empty input");
  double cost_sum = 0.0;
  for (double c : assign.costs) cost_sum += c;
  double phi_sum = 0.0;
  for (Real p : phi) phi_sum += static_cast<double>(p);
  return cost_sum / static_cast<double>(assign.size()) + phi_sum / static_cast<double>(phi.size());
}

template <class Real>
double semidual_value(const PatchMatrix<Real>& source, const DualPotential<Real>& pot) {
  return semidual_value<Real>(c_transform(source, pot), pot.values());
}

/// Supergradient ascent on phi with step step0 / sqrt(k).
///
/// The step counter k keeps running across calls to run(), so a warm-started
/// potential continues the same decreasing schedule.
template <class Real>
class DualAscent {
 public:
  DualAscent(const PatchMatrix<Real>& source, const PatchMatrix<Real>& target, double step0,
             std::size_t cache_bytes = kDefaultScoreCacheBytes)
      : search_(source, target, cache_bytes), step0_(step0), phi_(target.count(), Real(0)) {
    if (!(step0 > 0)) throw std::invalid_argument("dual ascent: step0 must be > 0");
  }

  /// Restarts from `phi` with the next step numbered `next_step` (>= 1).
  void reset(std::vector<Real> phi, std::size_t next_step = 1) {
    if (phi.size() != search_.target().count()) {
      throw std::invalid_argument("dual ascent: warm start length mismatch");
    }
    phi_ = std::move(phi);
    next_step_ = std::max<std::size_t>(1, next_step);
  }

  void step() {
    const Assignment a = search_(phi_);
    const std::vector<double> g = dual_supergradient(a, phi_.size());
    const double eta = step0_ / std::sqrt(static_cast<double>(next_step_));
    for (std::size_t j = 0; j < phi_.size(); ++j) {
      phi_[j] = static_cast<Real>(static_cast<double>(phi_[j]) + eta * g[j]);
    }
    ++next_step_;
  }

  void run(std::size_t iterations) {
    for (std::size_t t = 0; t < iterations; ++t) step();
  }

  Assignment assignment() const { return search_(phi_); }
  double value() const { return semidual_value<Real>(assignment(), phi_); }

  const std::vector<Real>& phi() const { return phi_; }
  std::size_t next_step() const { return next_step_; }
  const BiasedNearestSearch<Real>& search() const { return search_; }

 private:
  BiasedNearestSearch<Real> search_;
  double step0_;
  std::vector<Real> phi_;
  std::size_t next_step_ = 1;
};

/// Runs `iterations` ascent steps from `warm_start` (or zero) and returns the
/// final iterate.
template <class Real>
DualPotential<Real> ascend_dual(const PatchMatrix<Real>& source, const PatchMatrix<Real>& target,
                                std::size_t iterations, double step0,
                                const std::optional<DualPotential<Real>>& warm_start = std::nullopt) {
  if (iterations == 0) throw std::invalid_argument("ascend_dual: need at least one iteration");
  DualAscent<Real> ascent(source, target, step0);
  if (warm_start) {
    if (warm_start->size() != target.count()) {
      throw std::invalid_argument("ascend_dual: warm start does not match target");
    }
    ascent.reset(std::vector<Real>(warm_start->values().begin(), warm_start->values().end()));
  }
  ascent.run(iterations);
  return DualPotential<Real>(target, ascent.phi());
}

}  // namespace patchot
