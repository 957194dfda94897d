#include "symdiff/constellation.hpp"
#include "symdiff/error.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

using namespace symdiff;

TEST_SUITE("constellation") {
  TEST_CASE("16-QAM levels and unit average power") {
    const auto c = Constellation::square_qam(16);
    CHECK(c.side() == 4);
    const double a = 1.0 / std::sqrt(10.0);
    REQUIRE(c.levels().size() == 4);
    CHECK(c.levels()[0] == doctest::Approx(-3 * a).epsilon(1e-14));
    CHECK(c.levels()[1] == doctest::Approx(-a).epsilon(1e-14));
    CHECK(c.levels()[2] == doctest::Approx(a).epsilon(1e-14));
    CHECK(c.levels()[3] == doctest::Approx(3 * a).epsilon(1e-14));
    double p = 0.0;
    for (const auto& s : c.points()) p += s.i * s.i + s.q * s.q;
    CHECK(p / 16.0 == doctest::Approx(1.0).epsilon(1e-14));
  }

  TEST_CASE("power scales the points") {
    const auto c = Constellation::square_qam(64, 4.0);
    double p = 0.0;
    for (const auto& s : c.points()) p += s.i * s.i + s.q * s.q;
    CHECK(p / 64.0 == doctest::Approx(4.0).epsilon(1e-13));
  }

  TEST_CASE("QPSK points") {
    const auto c = Constellation::square_qam(4);
    for (const auto& s : c.points()) {
      CHECK(std::abs(s.i) == doctest::Approx(1 / std::sqrt(2.0)));
      CHECK(std::abs(s.q) == doctest::Approx(1 / std::sqrt(2.0)));
    }
  }

  TEST_CASE("invalid orders") {
    CHECK_THROWS_AS(Constellation::square_qam(8), ValidationError);
    CHECK_THROWS_AS(Constellation::square_qam(2), ValidationError);
    CHECK_THROWS_AS(Constellation::square_qam(0), ValidationError);
    CHECK_THROWS_AS(Constellation::square_qam(16, 0.0), ValidationError);
    CHECK_THROWS_AS(Constellation::square_qam(16, -1.0), ValidationError);
  }

  TEST_CASE("points are distinct and each detects to itself") {
    for (int m : {4, 16, 64}) {
      const auto c = Constellation::square_qam(m);
      std::set<std::pair<double, double>> seen;
      for (Index j = 0; j < m; ++j) {
        seen.insert({c.point(j).i, c.point(j).q});
        CHECK(c.detect(c.point(j)) == j);
        CHECK(c.index_at(c.cell(j)) == j);
      }
      CHECK(seen.size() == static_cast<std::size_t>(m));
    }
  }

  TEST_CASE("consecutive indices are lattice neighbours") {
    const auto c = Constellation::square_qam(16);
    for (Index j = 0; j + 1 < 16; ++j) {
      const auto n = c.grid_neighbors(j);
      CHECK(std::find(n.begin(), n.end(), j + 1) != n.end());
    }
  }

  TEST_CASE("neighbourhood is symmetric with 2 to 4 members") {
    const auto c = Constellation::square_qam(16);
    for (Index i = 0; i < 16; ++i) {
      const auto ni = c.grid_neighbors(i);
      CHECK(ni.size() >= 2);
      CHECK(ni.size() <= 4);
      CHECK(std::is_sorted(ni.begin(), ni.end()));
      for (Index j : ni) {
        const auto nj = c.grid_neighbors(j);
        CHECK(std::find(nj.begin(), nj.end(), i) != nj.end());
        // Neighbours sit one lattice spacing apart.
        const double d = std::hypot(c.point(i).i - c.point(j).i, c.point(i).q - c.point(j).q);
        CHECK(d == doctest::Approx(2 * c.delta()));
      }
    }
  }

  TEST_CASE("detection matches explicit rectangular regions") {
    const auto c = Constellation::square_qam(16);
    // Oracle: region bounds from midpoints between distinct sorted coordinates.
    std::vector<double> xs;
    for (const auto& s : c.points()) xs.push_back(s.i);
    std::sort(xs.begin(), xs.end());
    xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
    std::vector<double> cuts;
    for (std::size_t k = 0; k + 1 < xs.size(); ++k) cuts.push_back(0.5 * (xs[k] + xs[k + 1]));
    auto level_of = [&](double v) {
      return static_cast<int>(std::upper_bound(cuts.begin(), cuts.end(), v) - cuts.begin());
    };
    std::mt19937_64 rng(99);
    std::normal_distribution<double> n(0.0, 0.8);
    int agree = 0, total = 0;
    for (int t = 0; t < 100000; ++t) {
      const Point2 y{n(rng), n(rng)};
      const double li = xs[level_of(y.i)], lq = xs[level_of(y.q)];
      Index oracle = -1;
      for (Index j = 0; j < 16; ++j)
        if (c.point(j).i == li && c.point(j).q == lq) oracle = j;
      ++total;
      agree += c.detect(y) == oracle;
    }
    CHECK(agree == total);
  }

  TEST_CASE("boundary ties go to the lowest index") {
    const auto c = Constellation::square_qam(16);
    for (Index i = 0; i < 16; ++i) {
      for (Index j : c.grid_neighbors(i)) {
        const Point2 mid{0.5 * (c.point(i).i + c.point(j).i), 0.5 * (c.point(i).q + c.point(j).q)};
        CHECK(c.detect(mid) == std::min(i, j));
      }
    }
    // The origin is equidistant from the four inner points.
    Index lowest = 16;
    for (Index j = 0; j < 16; ++j)
      if (std::abs(c.point(j).i) < c.delta() * 1.5 && std::abs(c.point(j).q) < c.delta() * 1.5)
        lowest = std::min(lowest, j);
    CHECK(c.detect({0.0, 0.0}) == lowest);
  }

  TEST_CASE("axis regions tile the line") {
    const auto c = Constellation::square_qam(16);
    CHECK(std::isinf(c.axis_region(0)[0]));
    CHECK(std::isinf(c.axis_region(3)[1]));
    for (int l = 0; l + 1 < 4; ++l) CHECK(c.axis_region(l)[1] == c.axis_region(l + 1)[0]);
  }

  TEST_CASE("json round trip and hash") {
    const auto c = Constellation::square_qam(16);
    const auto d = Constellation::from_json(c.to_json());
    CHECK(d.hash() == c.hash());
    CHECK(Constellation::square_qam(64).hash() != c.hash());
    CHECK_THROWS_AS(Constellation::from_json("{"), ValidationError);
    CHECK_THROWS_AS(Constellation::from_json("{\"order\": 16}"), ValidationError);
  }
}
