#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "chaoslab/nn/autograd.hpp"

namespace chaoslab::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Rescale the gradients when their global L2 norm exceeds this; 0 disables clipping.
  double clip_norm = 0.0;
};

/// Bias-corrected Adam over a fixed parameter list. Moments live in each Parameter.
class Adam {
 public:
  Adam(std::vector<Parameter*> params, AdamConfig config = {});

  /// Applies one update from the current gradients. A non-finite gradient throws TrainingError
  /// naming the parameter, before anything is modified.
  void step();
  /// Global gradient norm seen by the last step, before clipping.
  double last_grad_norm() const noexcept { return last_norm_; }

  double lr() const noexcept { return config_.lr; }
  void set_lr(double lr) { config_.lr = lr; }
  std::size_t steps() const noexcept { return t_; }
  void zero_grad();

 private:
  std::vector<Parameter*> params_;
  AdamConfig config_;
  std::size_t t_ = 0;
  double last_norm_ = 0.0;
};

/// Reduce-on-plateau: after `patience` epochs without a relative improvement of 1e-4,
/// multiply the rate by `factor`, never going below `floor`.
class PlateauSchedule {
 public:
  PlateauSchedule(double initial_lr = 1e-3, double factor = 0.5, std::size_t patience = 10, double floor = 1e-4);

  /// Feeds one epoch's loss; returns the rate to use next.
  double observe(double loss);
  double lr() const noexcept { return lr_; }
  double floor() const noexcept { return floor_; }

 private:
  double lr_;
  double factor_;
  std::size_t patience_;
  double floor_;
  double best_;
  std::size_t bad_epochs_ = 0;
};

/// Builds the loss on a fresh tape; returns the 1 x 1 loss node.
using LossBuilder = std::function<Var(Tape&)>;

/// Max over checked entries of |analytic - central difference| / max(|analytic|, |cd|, 1e-12).
/// Checks every entry when the total is at most `max_entries`, else an even stride through them.
double gradient_check(const std::vector<Parameter*>& params, const LossBuilder& loss, double eps = 1e-5,
                      std::size_t max_entries = 1000);

}  // namespace chaoslab::nn
