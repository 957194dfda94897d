#pragma once

#include "symdiff/matrix.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace symdiff {

struct Point2 {
  double i = 0.0;  // in-phase
  double q = 0.0;  // quadrature
};

struct GridCell {
  int row = 0;
  int col = 0;
};

/// Square M-QAM constellation on a sqrt(M) x sqrt(M) lattice.
///
/// Index layout: symbol j sits in lattice row r = j / L (L = sqrt(M)), and
/// walks the row boustrophedon-style: even rows left to right, odd rows right
/// to left. Consecutive indices are therefore always lattice neighbours. Row
/// r carries quadrature level r, column c carries in-phase level c, with
/// levels (2c - (L - 1)) * delta.
class Constellation {
 public:
  /// Throws ValidationError if M is not a perfect square >= 4 or P <= 0.
  static Constellation square_qam(int order, double avg_power = 1.0);

  int order() const noexcept { return order_; }
  int side() const noexcept { return side_; }
  double avg_power() const noexcept { return avg_power_; }
  /// Half the spacing between adjacent levels on one axis.
  double delta() const noexcept { return delta_; }

  const std::vector<Point2>& points() const noexcept { return points_; }
  const Point2& point(Index j) const;
  /// Per-axis amplitude levels in increasing order.
  const std::vector<double>& levels() const noexcept { return levels_; }

  GridCell cell(Index j) const;
  Index index_at(GridCell cell) const;

  /// Minimum-distance decision. Exact ties resolve to the lowest index.
  Index detect(Point2 y) const;

  /// Up/down/left/right lattice neighbours, in increasing index order.
  std::vector<Index> grid_neighbors(Index j) const;

  /// Decision-region bounds of a level index along one axis
  /// (lower, upper), with +-infinity on the outer cells.
  std::array<double, 2> axis_region(int level) const;

  /// Canonical JSON document (order, power, points, grid).
  std::string to_json() const;
  static Constellation from_json(const std::string& text);

  /// FNV-1a digest of to_json(); used to check artifact compatibility.
  std::uint64_t hash() const;

 private:
  Constellation() = default;

  int axis_level(double x, int* tie_other) const;

  int order_ = 0;
  int side_ = 0;
  double avg_power_ = 0.0;
  double delta_ = 0.0;
  std::vector<double> levels_;
  std::vector<double> boundaries_;  // midpoints between adjacent levels
  std::vector<Point2> points_;
  std::vector<GridCell> cells_;
  std::vector<Index> index_of_cell_;
};

}  // namespace symdiff
