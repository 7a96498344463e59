#pragma once

#include <string>
#include <vector>

#include "fsr/rng.hpp"

namespace fsr {

/// Strictly increasing timestep grid in (0, 1] ending at 1.0.
struct Scheduler {
  std::vector<double> grid;
  std::string label;
};

struct TimePair {
  double t = 0.0;
  double t_prime = 1.0;
  double delta_t = 1.0;
};

enum class TimeSampling { uniform, lognorm };

struct SchedConfig {
  int fast_steps = 4;
  int slow_steps = 1000;
  double shift_s = 3.0;
  TimeSampling time_sampling = TimeSampling::uniform;
  double lognorm_mu = -2.0;
  double lognorm_sigma = 2.0;
};

/// grid = {1/n, 2/n, ..., 1}
Scheduler uniform_grid(int n);

/// SD3-style shift, t -> s*t / (1 + (s-1)*t); monotone, fixes 0 and 1
Scheduler shift_grid(const Scheduler& g, double s);
double shift_time(double t, double s);

/// logit-normal draw: logistic(z), z ~ Normal(mu, sigma^2); always in (0,1)
double sample_lognorm(double mu, double sigma, Rng& rng);

/// adjacent boundaries of a uniform n-partition: (k/n, (k+1)/n)
TimePair n_interval_pair(int n, Rng& rng);

/// adjacent pair from a single grid: t' = grid[k], t = grid[k-1] (0 if none)
TimePair grid_adjacent_pair(const Scheduler& g, Rng& rng);

/// fast-slow pairing: pick one scheduler for t', then t from the other in the
/// adjacent region below t'. A one-step fast grid forces t' = 1.
TimePair fast_slow_pair(const Scheduler& fast, const Scheduler& slow, Rng& rng);

/// time draw for flow training per config
double sample_train_time(const SchedConfig& cfg, Rng& rng);

}  // namespace fsr
