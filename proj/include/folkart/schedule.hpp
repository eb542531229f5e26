#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>

namespace folkart {

/// Reduce-on-plateau state. Improvement means strictly greater than the best seen.
struct SchedulerState {
  double current_lr = 0.001;
  double best_metric = -std::numeric_limits<double>::infinity();
  int epochs_since_improvement = 0;
  int reductions = 0;
};

inline SchedulerState make_scheduler(double initial_lr) {
  if (!(initial_lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
  SchedulerState s;
  s.current_lr = initial_lr;
  return s;
}

/// After `patience` non-improving epochs the rate is multiplied by `factor` and the counter restarts.
inline SchedulerState scheduler_step(SchedulerState state, double metric, int patience = 8, double factor = 0.5) {
  if (!std::isfinite(metric)) throw std::invalid_argument("scheduler_step: metric must be finite");
  if (patience < 1) throw std::invalid_argument("scheduler_step: patience must be >= 1");
  if (!(factor > 0.0 && factor < 1.0)) throw std::invalid_argument("scheduler_step: factor must be in (0, 1)");
  if (metric > state.best_metric) {
    state.best_metric = metric;
    state.epochs_since_improvement = 0;
    return state;
  }
  if (++state.epochs_since_improvement >= patience) {
    state.current_lr *= factor;
    state.epochs_since_improvement = 0;
    state.reductions++;
  }
  return state;
}

struct EarlyStopState {
  double best_metric = -std::numeric_limits<double>::infinity();
  int epochs_since_improvement = 0;
  bool stopped = false;
};

inline EarlyStopState early_stop_step(EarlyStopState state, double metric, int patience = 15) {
  if (!std::isfinite(metric)) throw std::invalid_argument("early_stop_step: metric must be finite");
  if (patience < 1) throw std::invalid_argument("early_stop_step: patience must be >= 1");
  if (metric > state.best_metric) {
    state.best_metric = metric;
    state.epochs_since_improvement = 0;
  } else {
    state.epochs_since_improvement++;
  }
  state.stopped = state.epochs_since_improvement >= patience;
  return state;
}

}  // namespace folkart
