#include "symdiff/constellation.hpp"

#include "symdiff/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

namespace symdiff {

Constellation Constellation::square_qam(int order, double avg_power) {
  if (order < 4) {
    throw ValidationError("invalid QAM order " + std::to_string(order) + ": must be >= 4");
  }
  const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(order))));
  if (side * side != order) {
    throw ValidationError("invalid QAM order " + std::to_string(order) +
                          ": not a perfect square");
  }
  if (!(avg_power > 0.0) || !std::isfinite(avg_power)) {
    throw ValidationError("average power must be positive and finite");
  }

  Constellation c;
  c.order_ = order;
  c.side_ = side;
  c.avg_power_ = avg_power;
  // Mean per-axis power of levels (2c - (L-1)) * delta is delta^2 (L^2 - 1) / 3.
  c.delta_ = std::sqrt(3.0 * avg_power / (2.0 * (order - 1)));
  c.levels_.resize(side);
  for (int l = 0; l < side; ++l) c.levels_[l] = (2 * l - (side - 1)) * c.delta_;
  c.boundaries_.resize(side - 1);
  for (int b = 0; b + 1 < side; ++b) c.boundaries_[b] = 0.5 * (c.levels_[b] + c.levels_[b + 1]);

  c.points_.resize(order);
  c.cells_.resize(order);
  c.index_of_cell_.assign(order, -1);
  for (Index j = 0; j < order; ++j) {
    const int row = j / side;
    const int pos = j % side;
    const int col = (row % 2 == 0) ? pos : side - 1 - pos;
    c.cells_[j] = {row, col};
    c.index_of_cell_[row * side + col] = j;
    c.points_[j] = {c.levels_[col], c.levels_[row]};
  }
  return c;
}

const Point2& Constellation::point(Index j) const {
  if (j < 0 || j >= order_) throw ValidationError("symbol index out of range");
  return points_[j];
}

GridCell Constellation::cell(Index j) const {
  if (j < 0 || j >= order_) throw ValidationError("symbol index out of range");
  return cells_[j];
}

Index Constellation::index_at(GridCell cell) const {
  if (cell.row < 0 || cell.row >= side_ || cell.col < 0 || cell.col >= side_) {
    throw ValidationError("grid cell out of range");
  }
  return index_of_cell_[cell.row * side_ + cell.col];
}

int Constellation::axis_level(double x, int* tie_other) const {
  const auto it = std::upper_bound(boundaries_.begin(), boundaries_.end(), x);
  const int level = static_cast<int>(it - boundaries_.begin());
  *tie_other = (level > 0 && boundaries_[level - 1] == x) ? level - 1 : -1;
  return level;
}

Index Constellation::detect(Point2 y) const {
  int col_tie = -1;
  int row_tie = -1;
  const int col = axis_level(y.i, &col_tie);
  const int row = axis_level(y.q, &row_tie);
  if (col_tie < 0 && row_tie < 0) return index_of_cell_[row * side_ + col];

  // Exactly on a boundary the candidate cells are equidistant; take the lowest index.
  Index best = order_;
  for (int r : {row, row_tie}) {
    if (r < 0) continue;
    for (int c : {col, col_tie}) {
      if (c >= 0) best = std::min(best, index_of_cell_[r * side_ + c]);
    }
  }
  return best;
}

std::vector<Index> Constellation::grid_neighbors(Index j) const {
  const GridCell c = cell(j);
  std::vector<Index> out;
  out.reserve(4);
  if (c.row > 0) out.push_back(index_at({c.row - 1, c.col}));
  if (c.row + 1 < side_) out.push_back(index_at({c.row + 1, c.col}));
  if (c.col > 0) out.push_back(index_at({c.row, c.col - 1}));
  if (c.col + 1 < side_) out.push_back(index_at({c.row, c.col + 1}));
  std::sort(out.begin(), out.end());
  return out;
}

std::array<double, 2> Constellation::axis_region(int level) const {
  if (level < 0 || level >= side_) throw ValidationError("axis level out of range");
  constexpr double inf = std::numeric_limits<double>::infinity();
  const double lo = level == 0 ? -inf : boundaries_[level - 1];
  const double hi = level == side_ - 1 ? inf : boundaries_[level];
  return {lo, hi};
}

std::string Constellation::to_json() const {
  nlohmann::ordered_json j;
  j["order"] = order_;
  j["power"] = avg_power_;
  auto pts = nlohmann::ordered_json::array();
  auto grid = nlohmann::ordered_json::array();
  for (Index k = 0; k < order_; ++k) {
    pts.push_back({points_[k].i, points_[k].q});
    grid.push_back({cells_[k].row, cells_[k].col});
  }
  j["points"] = std::move(pts);
  j["grid"] = std::move(grid);
  return j.dump();
}

Constellation Constellation::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("constellation JSON: ") + e.what());
  }
  if (!j.contains("order") || !j.contains("power")) {
    throw ValidationError("constellation JSON: missing 'order' or 'power'");
  }
  Constellation c = square_qam(j["order"].get<int>(), j["power"].get<double>());
  if (j.contains("points")) {
    const auto& pts = j["points"];
    if (pts.size() != static_cast<std::size_t>(c.order_)) {
      throw ValidationError("constellation JSON: point count does not match order");
    }
    for (Index k = 0; k < c.order_; ++k) {
      if (std::abs(pts[k][0].get<double>() - c.points_[k].i) > 1e-12 ||
          std::abs(pts[k][1].get<double>() - c.points_[k].q) > 1e-12) {
        throw ValidationError("constellation JSON: points differ from the canonical layout");
      }
    }
  }
  return c;
}

std::uint64_t Constellation::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : to_json()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace symdiff
