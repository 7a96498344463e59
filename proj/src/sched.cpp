#include "fsr/sched.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fsr {

Scheduler uniform_grid(int n) {
  if (n < 1) throw std::invalid_argument("uniform_grid: n must be >= 1");
  Scheduler s;
  s.label = "uniform";
  s.grid.reserve(static_cast<size_t>(n));
  for (int k = 1; k <= n; ++k) s.grid.push_back(static_cast<double>(k) / static_cast<double>(n));
  s.grid.back() = 1.0;
  return s;
}

double shift_time(double t, double s) {
  if (s <= 0.0) throw std::invalid_argument("shift_time: s must be positive");
  return s * t / (1.0 + (s - 1.0) * t);
}

Scheduler shift_grid(const Scheduler& g, double s) {
  Scheduler out = g;
  for (double& t : out.grid) t = shift_time(t, s);
  if (!out.grid.empty()) out.grid.back() = 1.0;
  return out;
}

double sample_lognorm(double mu, double sigma, Rng& rng) {
  if (sigma <= 0.0) throw std::invalid_argument("sample_lognorm: sigma must be positive");
  const double z = mu + sigma * rng.normal();
  return 1.0 / (1.0 + std::exp(-z));
}

TimePair n_interval_pair(int n, Rng& rng) {
  if (n < 1) throw std::invalid_argument("n_interval_pair: n must be >= 1");
  const int64_t k = rng.uniform_int(n);
  TimePair p;
  p.t = static_cast<double>(k) / n;
  p.t_prime = static_cast<double>(k + 1) / n;
  if (k + 1 == n) p.t_prime = 1.0;
  p.delta_t = p.t_prime - p.t;
  return p;
}

TimePair grid_adjacent_pair(const Scheduler& g, Rng& rng) {
  if (g.grid.empty()) throw std::invalid_argument("grid_adjacent_pair: empty grid");
  const int64_t k = rng.uniform_int(static_cast<int64_t>(g.grid.size()));
  TimePair p;
  p.t_prime = g.grid[static_cast<size_t>(k)];
  p.t = (k == 0) ? 0.0 : g.grid[static_cast<size_t>(k - 1)];
  p.delta_t = p.t_prime - p.t;
  return p;
}

namespace {

// largest grid value strictly below t', or 0 when none
double predecessor(const std::vector<double>& grid, double t_prime) {
  auto it = std::lower_bound(grid.begin(), grid.end(), t_prime);
  return (it == grid.begin()) ? 0.0 : *(it - 1);
}

}  // namespace

TimePair fast_slow_pair(const Scheduler& fast, const Scheduler& slow, Rng& rng) {
  if (fast.grid.empty() || slow.grid.empty())
    throw std::invalid_argument("fast_slow_pair: empty grid");
  if (fast.grid.size() >= slow.grid.size())
    throw std::invalid_argument("fast_slow_pair: fast grid must be shorter than slow grid");
  constexpr int kMaxRetries = 64;
  for (int attempt = 0; attempt < kMaxRetries; ++attempt) {
    TimePair p;
    if (fast.grid.size() == 1 || rng.uniform() < 0.5) {
      // fast first: t' from the fast grid (forced to 1 when it has one step),
      // t uniformly from slow points in [pred_fast(t'), t')
      p.t_prime = fast.grid[static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(fast.grid.size())))];
      const double lo = predecessor(fast.grid, p.t_prime);
      auto first = std::lower_bound(slow.grid.begin(), slow.grid.end(), lo);
      auto last = std::lower_bound(slow.grid.begin(), slow.grid.end(), p.t_prime);
      const int64_t count = last - first;
      if (count > 0) {
        p.t = *(first + rng.uniform_int(count));
      } else if (lo == 0.0) {
        p.t = 0.0;
      } else {
        continue;
      }
    } else {
      // slow first: t' from the slow grid, t = greatest fast point < t',
      // falling back to t''s slow predecessor (0 if none)
      p.t_prime = slow.grid[static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(slow.grid.size())))];
      const double fast_pred = predecessor(fast.grid, p.t_prime);
      if (fast_pred > 0.0) {
        p.t = fast_pred;
      } else {
        p.t = predecessor(slow.grid, p.t_prime);
      }
    }
    if (p.t >= 0.0 && p.t < p.t_prime && p.t_prime <= 1.0) {
      p.delta_t = p.t_prime - p.t;
      return p;
    }
  }
  throw std::runtime_error("fast_slow_pair: degenerate grids, no valid pair found");
}

double sample_train_time(const SchedConfig& cfg, Rng& rng) {
  if (cfg.time_sampling == TimeSampling::lognorm)
    return sample_lognorm(cfg.lognorm_mu, cfg.lognorm_sigma, rng);
  return rng.uniform_open0();
}

}  // namespace fsr
