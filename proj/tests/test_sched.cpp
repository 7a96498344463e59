#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"
#include "fsr/sched.hpp"

using fsr::Rng;
using fsr::Scheduler;
using fsr::TimePair;

TEST_CASE("uniform_grid values") {
  const Scheduler g4 = fsr::uniform_grid(4);
  REQUIRE(g4.grid.size() == 4);
  CHECK(g4.grid[0] == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(g4.grid[1] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(g4.grid[2] == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(g4.grid[3] == 1.0);

  const Scheduler g1 = fsr::uniform_grid(1);
  REQUIRE(g1.grid.size() == 1);
  CHECK(g1.grid[0] == 1.0);

  const Scheduler g1000 = fsr::uniform_grid(1000);
  REQUIRE(g1000.grid.size() == 1000);
  CHECK(g1000.grid.back() == 1.0);
  for (size_t i = 1; i < g1000.grid.size(); ++i)
    CHECK(g1000.grid[i] - g1000.grid[i - 1] == doctest::Approx(0.001).epsilon(1e-9));

  CHECK_THROWS_AS(fsr::uniform_grid(0), std::invalid_argument);
}

TEST_CASE("shift_grid formula and properties") {
  CHECK(fsr::shift_time(0.5, 3.0) == doctest::Approx(0.75).epsilon(1e-15));  // s*t/(1+(s-1)t)
  CHECK(fsr::shift_time(0.0, 7.0) == 0.0);
  CHECK(fsr::shift_time(1.0, 7.0) == 1.0);

  // s=1 is the identity
  const Scheduler g = fsr::uniform_grid(8);
  const Scheduler id = fsr::shift_grid(g, 1.0);
  for (size_t i = 0; i < g.grid.size(); ++i) CHECK(id.grid[i] == doctest::Approx(g.grid[i]).epsilon(1e-15));

  CHECK_THROWS_AS(fsr::shift_grid(g, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(fsr::shift_grid(g, -1.0), std::invalid_argument);

  // monotone with fixed endpoints for fuzzed grids and s in (0.1, 10)
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 1 + static_cast<int>(rng.uniform_int(30));
    const double s = 0.1 + 9.8 * rng.uniform();
    const Scheduler shifted = fsr::shift_grid(fsr::uniform_grid(n), s);
    CHECK(shifted.grid.back() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(shifted.grid.front() > 0.0);
    for (size_t i = 1; i < shifted.grid.size(); ++i) CHECK(shifted.grid[i] > shifted.grid[i - 1]);
  }
}

TEST_CASE("sample_lognorm distribution") {
  CHECK_THROWS_AS([] { Rng r(0); fsr::sample_lognorm(0.0, 0.0, r); }(), std::invalid_argument);

  Rng rng(2);
  std::vector<double> a;
  a.reserve(100000);
  for (int i = 0; i < 100000; ++i) {
    const double t = fsr::sample_lognorm(0.0, 1.0, rng);
    CHECK(t > 0.0);
    CHECK(t < 1.0);
    a.push_back(t);
  }
  std::nth_element(a.begin(), a.begin() + 50000, a.end());
  CHECK(std::abs(a[50000] - 0.5) < 0.01);  // median of logistic(N(0,1)) is 0.5

  Rng rng2(3);
  int below = 0;
  for (int i = 0; i < 100000; ++i) below += fsr::sample_lognorm(-2.0, 2.0, rng2) < 0.5;
  CHECK(below > 60000);  // mu=-2 biases toward small t
}

TEST_CASE("n_interval_pair") {
  Rng rng(4);
  for (int i = 0; i < 100; ++i) {
    const TimePair p = fsr::n_interval_pair(1, rng);
    CHECK(p.t == 0.0);
    CHECK(p.t_prime == 1.0);
  }
  std::array<int, 4> counts{};
  for (int i = 0; i < 100000; ++i) {
    const TimePair p = fsr::n_interval_pair(4, rng);
    CHECK(p.delta_t == doctest::Approx(0.25).epsilon(1e-12));
    counts[static_cast<size_t>(std::lround(p.t * 4))]++;
  }
  for (int c : counts) CHECK(std::abs(c / 100000.0 - 0.25) <= 0.01);
}

TEST_CASE("fast_slow_pair: one-step fast grid forces t_prime = 1") {
  Rng rng(5);
  const Scheduler fast = fsr::uniform_grid(1);
  const Scheduler slow = fsr::uniform_grid(1000);
  for (int i = 0; i < 10000; ++i) {
    const TimePair p = fsr::fast_slow_pair(fast, slow, rng);
    CHECK(p.t_prime == 1.0);
    CHECK(p.t < 1.0);
    CHECK(p.t >= 0.0);
  }
}

TEST_CASE("fast_slow_pair: coverage and delta bound with 4/1000") {
  Rng rng(6);
  const Scheduler fast = fsr::uniform_grid(4);
  const Scheduler slow = fsr::uniform_grid(1000);
  std::set<double> tprime_fast_hits;
  double max_delta = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const TimePair p = fsr::fast_slow_pair(fast, slow, rng);
    CHECK(p.t >= 0.0);
    CHECK(p.t < p.t_prime);
    CHECK(p.t_prime <= 1.0);
    max_delta = std::max(max_delta, p.delta_t);
    for (double f : fast.grid)
      if (p.t_prime == f) tprime_fast_hits.insert(f);
  }
  CHECK(tprime_fast_hits.size() == 4);  // all fast-grid points appear as t'
  CHECK(max_delta <= 0.25 + 1e-12);
}

TEST_CASE("pairing invariant holds over 10^6 fuzzed draws") {
  Rng rng(7);
  int fails = 0;
  for (int i = 0; i < 500000; ++i) {
    const int nf = 1 + static_cast<int>(rng.uniform_int(8));
    const int ns = nf + 1 + static_cast<int>(rng.uniform_int(1000));
    const double s = 0.5 + 5.0 * rng.uniform();
    const Scheduler fast = fsr::shift_grid(fsr::uniform_grid(nf), s);
    const Scheduler slow = fsr::shift_grid(fsr::uniform_grid(ns), s);
    const TimePair p = fsr::fast_slow_pair(fast, slow, rng);
    fails += !(0.0 <= p.t && p.t < p.t_prime && p.t_prime <= 1.0 && p.delta_t > 0.0);
  }
  for (int i = 0; i < 500000; ++i) {
    const TimePair p = fsr::n_interval_pair(1 + static_cast<int>(rng.uniform_int(1000)), rng);
    fails += !(0.0 <= p.t && p.t < p.t_prime && p.t_prime <= 1.0 && p.delta_t > 0.0);
  }
  CHECK(fails == 0);
}

TEST_CASE("seeded reproducibility of pair sequences") {
  const Scheduler fast = fsr::uniform_grid(4);
  const Scheduler slow = fsr::uniform_grid(1000);
  auto seq = [&](uint64_t seed) {
    Rng rng(seed);
    std::vector<double> out;
    for (int i = 0; i < 200; ++i) {
      const TimePair p = fsr::fast_slow_pair(fast, slow, rng);
      out.push_back(p.t);
      out.push_back(p.t_prime);
    }
    return out;
  };
  CHECK(seq(42) == seq(42));
  CHECK(seq(42) != seq(43));
}

TEST_CASE("sample_train_time respects the configured law") {
  fsr::SchedConfig cfg;
  Rng rng(8);
  for (int i = 0; i < 1000; ++i) {
    const double t = fsr::sample_train_time(cfg, rng);
    CHECK(t > 0.0);
    CHECK(t <= 1.0);
  }
  cfg.time_sampling = fsr::TimeSampling::lognorm;
  int below = 0;
  for (int i = 0; i < 10000; ++i) below += fsr::sample_train_time(cfg, rng) < 0.5;
  CHECK(below > 6000);  // default lognorm(-2, 2) bias
}
