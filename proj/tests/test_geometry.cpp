#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "udfit/errors.hpp"
#include "udfit/geometry.hpp"

using namespace udfit;

namespace {
const StudyRegion kSquare{0.0, 100.0, 0.0, 100.0};
}

TEST_CASE("build_grid partitions the region") {
  const Grid g = build_grid(kSquare, 100, 100);
  CHECK(g.size() == 10000);
  CHECK(g.cell_area() == doctest::Approx(1.0));

  const Grid one = build_grid({0, 1, 0, 1}, 1, 1);
  CHECK(one.size() == 1);
  CHECK(one.cell_area() == doctest::Approx(1.0));

  const Grid two = build_grid({0, 2, 0, 1}, 2, 1);
  CHECK(two.size() == 2);
  CHECK(two.cell_area() == doctest::Approx(1.0));
}

TEST_CASE("build_grid rejects bad counts and regions") {
  CHECK_THROWS_AS(build_grid(kSquare, 0, 10), InvalidArgument);
  CHECK_THROWS_AS(build_grid(kSquare, 10, -1), InvalidArgument);
  CHECK_THROWS_AS(build_grid({0, 0, 0, 1}, 1, 1), InvalidArgument);
  CHECK_THROWS_AS(build_grid({0, 1, 2, 1}, 1, 1), InvalidArgument);
}

TEST_CASE("cell areas sum to the region area") {
  const StudyRegion r{-3.3, 17.1, 2.5, 9.75};
  const Grid g = build_grid(r, 37, 23);
  double total = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) total += g.cell_area();
  CHECK(std::abs(total - r.area()) / r.area() < 1e-12);
}

TEST_CASE("cell_of corner cells") {
  const Grid g = build_grid(kSquare, 100, 100);
  CHECK(g.cell(g.cell_of({0.5, 0.5})) == CellIndex{0, 0});
  CHECK(g.cell(g.cell_of({99.9, 99.9})) == CellIndex{99, 99});
  CHECK(g.cell(g.cell_of({0.0, 0.0})) == CellIndex{0, 0});
  CHECK(g.cell(g.cell_of({100.0, 100.0})) == CellIndex{99, 99});
}

TEST_CASE("cell_of boundary goes to the lower-index cell") {
  const Grid g = build_grid(kSquare, 2, 2);
  CHECK(g.cell(g.cell_of({50.0, 50.0})) == CellIndex{0, 0});
  CHECK(g.cell(g.cell_of({50.0, 75.0})) == CellIndex{0, 1});
  CHECK(g.cell(g.cell_of({75.0, 50.0})) == CellIndex{1, 0});
}

TEST_CASE("cell_of outside the region") {
  const Grid g = build_grid(kSquare, 10, 10);
  CHECK_THROWS_AS(g.cell_of({-0.001, 5.0}), OutOfDomain);
  CHECK_THROWS_AS(g.cell_of({5.0, 100.001}), OutOfDomain);
  CHECK_THROWS_AS(g.cell_of({std::nan(""), 5.0}), OutOfDomain);
}

TEST_CASE("partition property on random points") {
  const Grid g = build_grid({-20, 80, 10, 60}, 40, 25);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> ux(-20, 80), uy(10, 60);
  const double half_diag = 0.5 * std::hypot(g.dx(), g.dy());
  for (int k = 0; k < 10000; ++k) {
    const Point p{ux(rng), uy(rng)};
    const std::size_t i = g.cell_of(p);
    REQUIRE(i < g.size());
    CHECK(distance(g.center(i), p) <= half_diag + 1e-12);
  }
}

TEST_CASE("centers map back to their own cell") {
  const Grid g = build_grid({0, 7, 0, 3}, 7, 5);
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(g.cell_of(g.center(i)) == i);
}

TEST_CASE("raster_lookup") {
  const Grid g = build_grid(kSquare, 100, 100);
  const Raster c(g, 3.0);
  CHECK(raster_lookup(c, {12.3, 77.7}) == 3.0);
  CHECK(raster_lookup(c, {100.0, 0.0}) == 3.0);

  const Raster xi = raster_from_function(g, [](const Point& p) { return std::floor(p.x); });
  CHECK(raster_lookup(xi, {0.5, 0.5}) == 0.0);
  CHECK(raster_lookup(xi, {99.5, 0.5}) == 99.0);

  Raster holes(g, 1.0);
  holes[g.cell_of({5.5, 5.5})] = std::nan("");
  CHECK_THROWS_AS(raster_lookup(holes, {5.5, 5.5}), MissingData);
  CHECK(holes.has_missing());
  CHECK(holes.integral() == doctest::Approx(9999.0));
}

TEST_CASE("raster construction checks size") {
  const Grid g = build_grid({0, 1, 0, 1}, 2, 2);
  CHECK_THROWS_AS(Raster(g, std::vector<double>{1, 2, 3}), InvalidArgument);
  const Raster r(g, std::vector<double>{1, 2, 3, 4});
  CHECK(r.sum() == 10.0);
  CHECK(r.integral() == doctest::Approx(2.5));
}
