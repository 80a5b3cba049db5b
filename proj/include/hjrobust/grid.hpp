#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "hjrobust/errors.hpp"
#include "hjrobust/linalg.hpp"

namespace hjrobust {

/// Axis-aligned box for the SDF coefficients.
struct ThetaBox {
  VectorXd lo;
  VectorXd hi;

  Index dim() const { return lo.size(); }

  void validate() const {
    require(lo.size() == hi.size() && lo.size() > 0, ErrorCode::InvalidArgument,
            "grid bounds need one [lo, hi] pair per coordinate");
    for (Index i = 0; i < lo.size(); ++i) {
      require(std::isfinite(lo(i)) && std::isfinite(hi(i)) && lo(i) < hi(i), ErrorCode::InvalidArgument,
              "grid bound " + std::to_string(i) + " must satisfy lo < hi");
    }
  }

  bool contains(const VectorXd& x) const {
    return ((x.array() >= lo.array()) && (x.array() <= hi.array())).all();
  }
};

inline constexpr double kGridPointCap = 2e6;

inline int default_points_per_dim(Index dim) { return dim <= 2 ? 41 : 21; }

/// Regular product grid over a ThetaBox, enumerated lazily in mixed radix
/// (coordinate 0 varies fastest).
class ThetaGrid {
 public:
  ThetaGrid() = default;
  ThetaGrid(ThetaBox box, int points_per_dim) : box_(std::move(box)), ppd_(points_per_dim) {
    box_.validate();
    require(ppd_ >= 2, ErrorCode::InvalidArgument, "grid needs at least 2 points per dimension");
    total_ = std::pow(static_cast<double>(ppd_), static_cast<double>(box_.dim()));
  }

  const ThetaBox& box() const { return box_; }
  int points_per_dim() const { return ppd_; }
  Index dim() const { return box_.dim(); }
  double total() const { return total_; }
  bool within_cap() const { return total_ <= kGridPointCap; }
  std::size_t size() const { return static_cast<std::size_t>(total_); }

  VectorXd spacing() const { return (box_.hi - box_.lo) / static_cast<double>(ppd_ - 1); }

  VectorXd point(std::size_t i) const {
    VectorXd x(dim());
    const VectorXd h = spacing();
    for (Index d = 0; d < dim(); ++d) {
      const auto k = static_cast<double>(i % static_cast<std::size_t>(ppd_));
      i /= static_cast<std::size_t>(ppd_);
      x(d) = box_.lo(d) + k * h(d);
    }
    return x;
  }

  bool on_boundary(std::size_t i) const {
    for (Index d = 0; d < dim(); ++d) {
      const auto k = i % static_cast<std::size_t>(ppd_);
      i /= static_cast<std::size_t>(ppd_);
      if (k == 0 || k + 1 == static_cast<std::size_t>(ppd_)) return true;
    }
    return false;
  }

 private:
  ThetaBox box_;
  int ppd_ = 0;
  double total_ = 0.0;
};

/// A candidate point with its shell flag.
struct GridPoint {
  VectorXd theta;
  bool boundary = false;
};

/// 3^dim stencil at the given half-spacing around `center`, clipped to the box.
inline std::vector<GridPoint> local_stencil(const ThetaBox& box, const VectorXd& center, const VectorXd& step) {
  const Index d = center.size();
  std::size_t count = 1;
  for (Index i = 0; i < d; ++i) count *= 3;
  std::vector<GridPoint> out;
  out.reserve(count);
  for (std::size_t idx = 0; idx < count; ++idx) {
    std::size_t rem = idx;
    VectorXd x(d);
    bool inside = true;
    bool boundary = false;
    for (Index i = 0; i < d; ++i) {
      const int k = static_cast<int>(rem % 3) - 1;
      rem /= 3;
      x(i) = center(i) + k * step(i);
      const double tol = 1e-12 * (box.hi(i) - box.lo(i));
      if (x(i) < box.lo(i) - tol || x(i) > box.hi(i) + tol) inside = false;
      if (std::fabs(x(i) - box.lo(i)) <= tol || std::fabs(x(i) - box.hi(i)) <= tol) boundary = true;
    }
    if (inside) out.push_back({x, boundary});
  }
  return out;
}

}  // namespace hjrobust
