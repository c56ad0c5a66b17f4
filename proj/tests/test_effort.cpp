#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "udfit/effort.hpp"
#include "udfit/errors.hpp"

using namespace udfit;

namespace {

const StudyRegion kSquare{0.0, 100.0, 0.0, 100.0};

Trajectory stay(Point p, std::size_t n, double dt = 1.0) {
  Trajectory t;
  t.positions.assign(n, p);
  t.dt = dt;
  return t;
}

// Independent recount: loop steps outermost, cells innermost.
Raster brute_force(const std::vector<Trajectory>& tracks, const Grid& g, double range, bool weighted) {
  Raster r(g);
  for (const auto& t : tracks)
    for (const auto& p : t.positions)
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double d = std::hypot(g.center(i).x - p.x, g.center(i).y - p.y);
        if (weighted)
          r[i] += (d < range ? 1.0 - d / range : 0.0) * t.dt;
        else
          r[i] += (d <= range ? 1.0 : 0.0) * t.dt;
      }
  return r;
}

}  // namespace

TEST_CASE("single static observer, tiny range") {
  const Grid g = build_grid(kSquare, 100, 100);
  const Point c = g.center(g.index(30, 40));
  const EffortField f = path_integral_effort({stay(c, 10)}, g, 0.4, FieldOfView::kIndicator);
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(f.raster[i] == (i == g.index(30, 40) ? 10.0 : 0.0));
  CHECK(f.meta.detection_range == 0.4);
}

TEST_CASE("effort is additive over disjoint observers") {
  const Grid g = build_grid(kSquare, 50, 50);
  const auto a = stay({20, 20}, 10), b = stay({80, 70}, 10);
  for (auto mode : {FieldOfView::kIndicator, FieldOfView::kDetectionWeighted}) {
    const auto fa = path_integral_effort({a}, g, 10, mode);
    const auto fb = path_integral_effort({b}, g, 10, mode);
    const auto fab = path_integral_effort({a, b}, g, 10, mode);
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(fab.raster[i] == doctest::Approx(fa.raster[i] + fb.raster[i]));
  }
}

TEST_CASE("mobile observer matches a per-step recount") {
  const Grid g = build_grid(kSquare, 100, 100);
  Rng rng(5);
  const MovementSpec obs{PotentialSpec::half_normal_y(100, 200), 2.0, 1.0};
  const Trajectory t = simulate_trajectory(obs, {50, 90}, 499, kSquare, rng);
  for (bool weighted : {false, true}) {
    const auto mode = weighted ? FieldOfView::kDetectionWeighted : FieldOfView::kIndicator;
    const EffortField f = path_integral_effort({t}, g, 10, mode);
    const Raster oracle = brute_force({t}, g, 10, weighted);
    double total = 0, otot = 0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      CHECK(f.raster[i] == doctest::Approx(oracle[i]).epsilon(1e-12));
      total += f.raster[i];
      otot += oracle[i];
    }
    CHECK(total == doctest::Approx(otot));
  }
}

TEST_CASE("empty tracks give a zero field") {
  const Grid g = build_grid(kSquare, 10, 10);
  const EffortField f = path_integral_effort(std::vector<Trajectory>{}, g, 10, FieldOfView::kIndicator);
  CHECK(f.raster.sum() == 0.0);
  const EffortField h = path_integral_effort({Trajectory{}}, g, 10, FieldOfView::kIndicator);
  CHECK(h.raster.sum() == 0.0);
  CHECK_THROWS_AS(path_integral_effort({stay({1, 1}, 1)}, g, 0.0, FieldOfView::kIndicator), InvalidArgument);
}

TEST_CASE("overlap correction, co-located observers") {
  const Grid g = build_grid(kSquare, 100, 100);
  const std::size_t cell = g.index(10, 10);
  const Point c = g.center(cell);
  // A cell center 5 units away has p = 0.5 at range 10.
  const Point obs{c.x - 5.0, c.y};
  const auto f = overlap_corrected_effort({stay(obs, 1), stay(obs, 1)}, g, 10.0);
  CHECK(f.raster[cell] == doctest::Approx(0.75).epsilon(1e-12));

  // p = 0.1: the cell center is 9 units away.
  const Point o9{c.x, c.y - 9.0};
  std::vector<Trajectory> twenty(20, stay(o9, 1));
  const auto f20 = overlap_corrected_effort(twenty, g, 10.0);
  double miss = 1.0;
  for (int k = 0; k < 20; ++k) miss *= 0.9;
  CHECK(f20.raster[cell] == doctest::Approx(1.0 - miss).epsilon(1e-12));
  CHECK(f20.raster[cell] == doctest::Approx(0.8784).epsilon(1e-4));
}

TEST_CASE("overlap correction, single observer equals path integral") {
  const Grid g = build_grid(kSquare, 60, 60);
  Rng rng(2);
  const MovementSpec obs{PotentialSpec::half_normal_y(100, 200), 8.0, 1.0};
  const Trajectory t = simulate_trajectory(obs, {20, 80}, 300, kSquare, rng);
  const auto a = overlap_corrected_effort({t}, g, 10.0);
  const auto b = path_integral_effort({t}, g, 10.0, FieldOfView::kDetectionWeighted);
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(a.raster[i] == doctest::Approx(b.raster[i]).epsilon(1e-12));
}

TEST_CASE("overlap correction never exceeds the plain sum") {
  const Grid g = build_grid(kSquare, 50, 50);
  Rng rng(3);
  const MovementSpec obs{PotentialSpec::half_normal_y(100, 200), 8.0, 1.0};
  std::vector<Trajectory> ts;
  for (int k = 0; k < 5; ++k) ts.push_back(simulate_trajectory(obs, {20.0 + 10 * k, 90}, 200, kSquare, rng));
  const auto ov = overlap_corrected_effort(ts, g, 10.0);
  const auto pi = path_integral_effort(ts, g, 10.0, FieldOfView::kDetectionWeighted);
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(ov.raster[i] <= pi.raster[i] + 1e-12);

  // Far-apart static observers never share a cell-step: equality.
  const std::vector<Trajectory> apart{stay({10, 10}, 4), stay({90, 90}, 4)};
  const auto ova = overlap_corrected_effort(apart, g, 10.0);
  const auto pia = path_integral_effort(apart, g, 10.0, FieldOfView::kDetectionWeighted);
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(ova.raster[i] == doctest::Approx(pia.raster[i]).epsilon(1e-12));
}

TEST_CASE("dataset effort adds trips") {
  const Grid g = build_grid(kSquare, 40, 40);
  const MovementSpec animal{PotentialSpec::bivariate_normal({50, 50}, 100), 2.0, 1.0};
  const ObserverSpec o{ObserverKind::kMobile, {PotentialSpec::half_normal_y(100, 200), 2.0, 1.0}};
  const EncounterDataset ds = run_study(animal, {o, o}, 6, 100, kSquare, 4);
  const auto whole = path_integral_effort(ds, g, 10, FieldOfView::kIndicator);
  std::vector<EffortField> parts;
  for (const auto& trip : ds.trips) parts.push_back(path_integral_effort(trip.tracks, g, 10, FieldOfView::kIndicator));
  const auto summed = combine_effort(parts);
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(whole.raster[i] == doctest::Approx(summed.raster[i]));

  const auto ov = overlap_corrected_effort(ds, g, 10);
  parts.clear();
  for (const auto& trip : ds.trips) parts.push_back(overlap_corrected_effort(trip.tracks, g, 10));
  const auto ovs = combine_effort(parts);
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(ov.raster[i] == doctest::Approx(ovs.raster[i]));
}

TEST_CASE("regularize_track") {
  const Trajectory t = regularize_track({{0, {0, 0}}, {60, {60, 0}}}, 30);
  REQUIRE(t.size() == 3);
  CHECK(t.positions[0] == Point{0, 0});
  CHECK(t.positions[1] == Point{30, 0});
  CHECK(t.positions[2] == Point{60, 0});
  CHECK(t.dt == 30);

  CHECK_THROWS_AS(regularize_track({{0, {0, 0}}}, 30), InvalidArgument);
  CHECK_THROWS_AS(regularize_track({{0, {0, 0}}, {0, {1, 1}}}, 30), InvalidArgument);

  // irregular fixes, ~15 s apart, over 600 s
  std::vector<TimedFix> fixes;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> jitter(-3, 3);
  for (int k = 0; k <= 40; ++k) {
    const double time = k == 0 ? 0.0 : (k == 40 ? 600.0 : 15.0 * k + jitter(rng));
    fixes.push_back({time, {time / 10.0, 2.0 * time}});
  }
  const Trajectory r = regularize_track(fixes, 30);
  CHECK(r.size() == 21);
  CHECK(r.positions.front() == fixes.front().position);
  CHECK(r.positions.back().x == doctest::Approx(60.0));
  CHECK(r.positions.back().y == doctest::Approx(1200.0));
  for (std::size_t k = 0; k < r.size(); ++k) CHECK(r.positions[k].x == doctest::Approx(3.0 * static_cast<double>(k)));
}

TEST_CASE("bin_track_effort") {
  const Grid g = build_grid(kSquare, 100, 100);
  const Trajectory t = stay({12.3, 45.6}, 10, 1.0 / 120.0);
  const EffortField f = bin_track_effort(t, g);
  CHECK(f.raster[g.cell_of({12.3, 45.6})] == doctest::Approx(1.0 / 12.0));
  CHECK(f.raster.sum() == doctest::Approx(1.0 / 12.0));
  CHECK(bin_track_effort(Trajectory{}, g).raster.sum() == 0.0);
}

TEST_CASE("bin_track_effort on a uniform scatter") {
  const Grid g = build_grid(kSquare, 10, 10);
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0, 100);
  Trajectory t;
  for (int k = 0; k < 10000; ++k) t.positions.push_back({u(rng), u(rng)});
  const EffortField f = bin_track_effort(t, g);
  // Each cell count is Binomial(10^4, 1/100): mean 100, sd ~ 9.95.
  const double sd = std::sqrt(10000 * 0.01 * 0.99);
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(std::abs(f.raster[i] - 100.0) < 5.0 * sd);
  CHECK(f.raster.sum() == doctest::Approx(10000));
}

TEST_CASE("daily effort CDF") {
  const auto u = DailyEffortCDF::uniform(9.0);
  CHECK(daily_fraction(u, 0.0) == 0.0);
  CHECK(daily_fraction(u, 9.0) == 1.0);
  CHECK(daily_fraction(u, 3.0) == doctest::Approx(1.0 / 3.0));
  CHECK_THROWS_AS(daily_fraction(u, 9.5), InvalidArgument);
  CHECK_THROWS_AS(daily_fraction(u, -0.1), InvalidArgument);

  const DailyEffortCDF c({{0, 0}, {2, 0.1}, {5, 0.7}, {9, 1.0}});
  double last = 0;
  for (double tau = 0; tau <= 9.0; tau += 0.01) {
    const double v = daily_fraction(c, tau);
    CHECK(v >= last);
    last = v;
  }
  CHECK(daily_fraction(c, 3.5) == doctest::Approx(0.4));
  CHECK(fraction_sum(c, {2, 5, 9}) == doctest::Approx(1.8));
  CHECK(mean_daily_fraction(c, {2, 5, 9}) == doctest::Approx(0.6));

  CHECK_THROWS_AS(DailyEffortCDF({{0, 0.1}, {9, 1}}), InvalidArgument);
  CHECK_THROWS_AS(DailyEffortCDF({{0, 0}, {4, 0.6}, {3, 0.7}, {9, 1}}), InvalidArgument);
  CHECK_THROWS_AS(DailyEffortCDF({{0, 0}, {4, 0.6}, {5, 0.5}, {9, 1}}), InvalidArgument);
  CHECK_THROWS_AS(DailyEffortCDF({{0, 0}, {9, 0.9}}), InvalidArgument);

  std::stringstream ss;
  write_daily_cdf_json(ss, c);
  const auto back = read_daily_cdf_json(ss);
  CHECK(back.knots() == c.knots());
}

TEST_CASE("scale and combine") {
  const Grid g = build_grid(kSquare, 10, 10);
  EffortField base{Raster(g, 0.01), {}};  // cells of area 100: integral 100
  CHECK(scale_effort(base, 0.0).raster.sum() == 0.0);
  const auto same = scale_effort(base, 1.0);
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(same.raster[i] == base.raster[i]);
  CHECK(scale_effort(base, 15.5).total() == doctest::Approx(1550.0));
  CHECK_THROWS_AS(scale_effort(base, -1.0), InvalidArgument);

  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0, 5);
  EffortField ww{Raster(g), {}}, dfo{Raster(g), {}};
  for (std::size_t i = 0; i < g.size(); ++i) ww.raster[i] = u(rng), dfo.raster[i] = i % 3 ? u(rng) : 0.0;
  const auto both = combine_effort({ww, dfo});
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(both.raster[i] == ww.raster[i] + dfo.raster[i]);
  const auto twice = combine_effort({ww, ww});
  const auto with_zero = combine_effort({ww, EffortField{Raster(g), {}}});
  for (std::size_t i = 0; i < g.size(); ++i) {
    CHECK(twice.raster[i] == 2.0 * ww.raster[i]);
    CHECK(with_zero.raster[i] == ww.raster[i]);
  }
  const EffortField other{Raster(build_grid(kSquare, 5, 5)), {}};
  CHECK_THROWS_AS(combine_effort({ww, other}), InvalidArgument);
  CHECK_THROWS_AS(combine_effort({}), InvalidArgument);
}

TEST_CASE("Monte Carlo effort ensembles") {
  const Grid g = build_grid(kSquare, 5, 5);
  const EffortSampler noisy = [&](Rng& rng) {
    std::uniform_real_distribution<double> u(0, 1);
    EffortField f{Raster(g), {}};
    for (std::size_t i = 0; i < g.size(); ++i) f.raster[i] = u(rng);
    return f;
  };
  CHECK(mc_effort_ensemble(noisy, 1, 3).members.size() == 1);
  const auto e = mc_effort_ensemble(noisy, 1000, 3);
  CHECK(e.members.size() == 1000);
  const auto again = mc_effort_ensemble(noisy, 1000, 3);
  for (std::size_t k = 0; k < 1000; k += 97)
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(e.members[k].raster[i] == again.members[k].raster[i]);
  CHECK(e.members[0].raster[0] != e.members[1].raster[0]);

  const EffortSampler fixed = [&](Rng&) { return EffortField{Raster(g, 2.0), {}}; };
  const auto f = mc_effort_ensemble(fixed, 10, 1);
  for (const auto& m : f.members) CHECK(m.raster.sum() == 50.0);
  CHECK_THROWS_AS(mc_effort_ensemble(fixed, 0, 1), InvalidArgument);
}

TEST_CASE("log effort offset") {
  const Grid g = build_grid(kSquare, 2, 1);
  const EffortField f{Raster(g, std::vector<double>{0.0, 3.0}), {}};
  const Raster off = log_effort_offset(f);
  CHECK(std::isinf(off[0]));
  CHECK(off[0] < 0);
  CHECK(off[1] == doctest::Approx(std::log(3.0)));
}

TEST_CASE("GPS ingestion") {
  CHECK(parse_iso8601_hours("1970-01-01T00:00:00Z") == 0.0);
  CHECK(parse_iso8601_hours("1970-01-02T06:30:00Z") == doctest::Approx(30.5));
  CHECK(parse_iso8601_hours("1970-01-01T02:00:00+02:00") == doctest::Approx(0.0));
  CHECK_THROWS(parse_iso8601_hours("yesterday"));

  std::stringstream in(
      "observer,timestamp_iso8601,x,y\n"
      "b,2021-07-01T10:00:30Z,5,5\n"
      "a,2021-07-01T10:01:00Z,1,0\n"
      "a,2021-07-01T10:00:00Z,0,0\n");
  const auto tracks = read_gps_csv(in);
  REQUIRE(tracks.size() == 2);
  const auto& a = tracks.at("a");
  REQUIRE(a.size() == 2);
  CHECK(a[0].position == Point{0, 0});
  CHECK(a[1].time - a[0].time == doctest::Approx(1.0 / 60.0));
  const Trajectory r = regularize_track(a, 1.0 / 120.0);
  CHECK(r.size() == 3);
  CHECK(r.positions[1].x == doctest::Approx(0.5));
}
