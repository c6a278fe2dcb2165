#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "opse/rational.hpp"
#include "opse/speaker_field.hpp"

using namespace opse;
using Catch::Approx;

namespace {

std::vector<double> grid() { return log_frequency_grid(96); }

std::vector<Complex> sample_filter(const RationalFilter& f, const std::vector<double>& g) {
  std::vector<Complex> s;
  s.reserve(g.size());
  for (double nu : g) s.push_back(f.response(nu));
  return s;
}

// random conjugate-pair roots, radius in (rmin, rmax)
std::vector<Complex> random_pairs(std::mt19937_64& rng, int pairs, double rmin, double rmax) {
  std::uniform_real_distribution<double> ur(rmin, rmax), ua(0.1, pi - 0.1);
  std::vector<Complex> roots;
  for (int i = 0; i < pairs; ++i) {
    const Complex r = std::polar(ur(rng), ua(rng));
    roots.push_back(r);
    roots.push_back(std::conj(r));
  }
  return roots;
}

}  // namespace

TEST_CASE("fit_rational recovers a known 2-pole/2-zero filter") {
  RationalFilter truth;
  truth.gain = 0.8;
  truth.zeros = {std::polar(0.6, 1.0), std::polar(0.6, -1.0)};
  truth.poles = {std::polar(0.85, 0.4), std::polar(0.85, -0.4)};
  const auto g = grid();
  auto fit = fit_rational(g, sample_filter(truth, g), 2, 2);
  CHECK(fit.relative_error < 1e-9);

  auto match = [](std::vector<Complex> got, std::vector<Complex> want) {
    REQUIRE(got.size() == want.size());
    for (const auto& wv : want) {
      auto it = std::min_element(got.begin(), got.end(), [&](const Complex& a, const Complex& b) {
        return std::abs(a - wv) < std::abs(b - wv);
      });
      CHECK(std::abs(*it - wv) < 1e-6);
      got.erase(it);
    }
  };
  match(fit.filter.zeros, truth.zeros);
  match(fit.filter.poles, truth.poles);
  CHECK(fit.filter.gain == Approx(0.8).epsilon(1e-6));
}

TEST_CASE("fit_rational constant samples with order zero") {
  const auto g = grid();
  std::vector<Complex> s(g.size(), Complex(2.5, 0.0));
  auto fit = fit_rational(g, s, 0, 0);
  CHECK(fit.filter.gain == Approx(2.5));
  CHECK(fit.filter.zeros.empty());
  CHECK(fit.filter.poles.empty());
  CHECK(fit.relative_error < 1e-12);
}

TEST_CASE("fit_rational flags pure delay as a poor low-order fit") {
  const auto g = grid();
  std::vector<Complex> s;
  const double delay = 1.5e-3;  // 1.5 ms, ~72 samples at 48 kHz
  for (double nu : g) s.push_back(std::polar(1.0, -two_pi * nu * delay));
  auto fit = fit_rational(g, s, 2, 2);
  CHECK(fit.relative_error > 0.05);
}

TEST_CASE("fit_rational is deterministic") {
  std::mt19937_64 rng(3);
  RationalFilter truth;
  truth.gain = 1.2;
  truth.zeros = random_pairs(rng, 2, 0.3, 0.9);
  truth.poles = random_pairs(rng, 2, 0.3, 0.9);
  const auto g = grid();
  const auto s = sample_filter(truth, g);
  auto f1 = fit_rational(g, s, 4, 4);
  auto f2 = fit_rational(g, s, 4, 4);
  CHECK(f1.filter.gain == f2.filter.gain);
  for (std::size_t i = 0; i < f1.filter.poles.size(); ++i)
    CHECK(f1.filter.poles[i] == f2.filter.poles[i]);
}

TEST_CASE("fit_rational input validation") {
  const auto g = grid();
  std::vector<Complex> s(g.size(), Complex(1.0, 0.0));
  CHECK_THROWS_AS(fit_rational(g, s, 40, 2), std::invalid_argument);
  CHECK_THROWS_AS(fit_rational({1.0, 2.0}, {Complex(1, 0), Complex(1, 0)}, 8, 8), FitError);
}

TEST_CASE("factorize of an already minimum-phase filter is trivial") {
  RationalFilter f;
  f.gain = 2.0;
  f.zeros = {std::polar(0.5, 0.7), std::polar(0.5, -0.7)};
  f.poles = {std::polar(0.9, 0.2), std::polar(0.9, -0.2)};
  auto fac = factorize(f);
  CHECK(fac.stable_allpass.zeros.empty());
  CHECK(fac.unstable_allpass.empty());
  CHECK(fac.min_phase.gain == Approx(2.0));
  for (double nu : grid())
    CHECK(std::abs(fac.response(nu) - f.response(nu)) < 1e-12 * std::abs(f.response(nu)));
}

TEST_CASE("factorize reflects a real zero outside the circle") {
  RationalFilter f;
  f.gain = 1.0;
  f.zeros = {Complex(2.0, 0.0)};
  auto fac = factorize(f);
  REQUIRE(fac.min_phase.zeros.size() == 1);
  CHECK(std::abs(fac.min_phase.zeros[0] - Complex(0.5, 0.0)) < 1e-15);
  // the max-phase zero moves into a first-order all-pass with its pole at the
  // reflected location inside the circle; no pole lies outside
  REQUIRE(fac.stable_allpass.poles.size() == 1);
  CHECK(std::abs(fac.stable_allpass.poles[0] - Complex(0.5, 0.0)) < 1e-15);
  CHECK(fac.unstable_allpass.empty());
  for (double nu : {100.0, 1000.0, 9000.0}) {
    CHECK(std::abs(fac.stable_allpass.response(nu)) == Approx(1.0).margin(1e-12));
    CHECK(std::abs(fac.response(nu) - f.response(nu)) < 1e-12);
  }
}

TEST_CASE("factorize sends outside poles to the unstable all-pass") {
  RationalFilter f;
  f.gain = 1.0;
  f.poles = {std::polar(1.6, 0.9), std::polar(1.6, -0.9)};
  auto fac = factorize(f);
  REQUIRE(fac.unstable_allpass.factors.size() == 2);
  for (const auto& fc : fac.unstable_allpass.factors) CHECK(std::abs(fc.pole) > 1.0);
  for (const auto& p : fac.min_phase.poles) CHECK(std::abs(p) < 1.0);
  for (double nu : grid()) {
    CHECK(std::abs(fac.unstable_allpass.response(nu, 48000.0)) == Approx(1.0).margin(1e-9));
    const Complex want = f.response(nu);
    CHECK(std::abs(fac.response(nu) - want) < 1e-9 * std::abs(want));
  }
}

TEST_CASE("factorize reconstruction of random 6th-order filters") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    RationalFilter f;
    f.gain = 1.5;
    f.zeros = random_pairs(rng, 3, 0.4, 1.8);
    f.poles = random_pairs(rng, 3, 0.4, 1.7);
    auto fac = factorize(f);
    for (const auto& z : fac.min_phase.zeros) CHECK(std::abs(z) < 1.0);
    for (const auto& p : fac.min_phase.poles) CHECK(std::abs(p) < 1.0);
    double max_rel = 0.0;
    for (int i = 0; i < 512; ++i) {
      const double nu = 20.0 * std::pow(1000.0, i / 511.0);
      const Complex want = f.response(nu);
      max_rel = std::max(max_rel, std::abs(fac.response(nu) - want) / std::abs(want));
      CHECK(std::abs(fac.stable_allpass.response(nu)) == Approx(1.0).margin(1e-9));
      CHECK(std::abs(fac.unstable_allpass.response(nu, f.sample_rate)) == Approx(1.0).margin(1e-9));
    }
    CHECK(max_rel < 1e-8);
  }
}

TEST_CASE("factorize rejects roots on the unit circle") {
  RationalFilter f;
  f.zeros = {std::polar(1.0 + 1e-8, 0.3), std::polar(1.0 + 1e-8, -0.3)};
  CHECK_THROWS_AS(factorize(f), AmbiguousRootError);
}

TEST_CASE("lcm_allpass set algebra") {
  AllPassFactorSet s1{{{Complex(1.5, 0.2), 1}}};
  AllPassFactorSet s2{{{Complex(-1.3, 0.8), 1}}};
  auto lcm = lcm_allpass({s1, s2});
  REQUIRE(lcm.factors.size() == 2);

  AllPassFactorSet t1{{{Complex(1.5, 0.2), 2}}};
  AllPassFactorSet t2{{{Complex(1.5, 0.2), 1}}};
  auto lcm2 = lcm_allpass({t1, t2});
  REQUIRE(lcm2.factors.size() == 1);
  CHECK(lcm2.factors[0].multiplicity == 2);

  // two poles of one set within a single cluster is ambiguous
  AllPassFactorSet bad{{{Complex(1.5, 0.2), 1}, {Complex(1.50001, 0.2), 1}}};
  CHECK_THROWS_AS(lcm_allpass({bad}, 1e-3), ClusteringError);
}

TEST_CASE("dividing by the LCM leaves a stable remainder") {
  std::mt19937_64 rng(29);
  std::uniform_real_distribution<double> ur(1.2, 2.0), ua(0.2, 2.8);
  std::vector<AllPassFactorSet> sets(3);
  for (auto& s : sets)
    for (int i = 0; i < 2; ++i) s.factors.push_back({std::polar(ur(rng), ua(rng)), 1 + (i % 2)});
  auto lcm = lcm_allpass(sets);
  for (const auto& s : sets) {
    // remainder multiplicity of every lcm pole must cover the set's own
    for (const auto& own : s.factors) {
      int covered = 0;
      for (const auto& l : lcm.factors)
        if (std::abs(l.pole - own.pole) < 1e-4) covered = l.multiplicity;
      CHECK(covered >= own.multiplicity);
    }
    // and the quotient response is exactly unit magnitude (both all-pass)
    for (double nu : {100.0, 3000.0, 15000.0}) {
      const Complex q = s.response(nu, 48000.0) / lcm.response_at_w(std::polar(1.0, -two_pi * nu / 48000.0));
      CHECK(std::abs(q) == Approx(1.0).margin(1e-9));
    }
  }
}
