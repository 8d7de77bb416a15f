#include "chaoslab/nn/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "chaoslab/error.hpp"
#include "chaoslab/nn/kernels.hpp"

namespace chaoslab::nn {

Adam::Adam(std::vector<Parameter*> params, AdamConfig config) : params_(std::move(params)), config_(config) {
  if (!(config_.lr > 0.0)) throw DomainError("Adam: learning rate must be positive");
  if (!(config_.clip_norm >= 0.0)) throw DomainError("Adam: clip norm must be non-negative");
  for (Parameter* p : params_) {
    if (!p->grad.same_shape(p->value)) p->grad = Tensor(p->value.rows(), p->value.cols());
    if (!p->m.same_shape(p->value)) p->m = Tensor(p->value.rows(), p->value.cols());
    if (!p->v.same_shape(p->value)) p->v = Tensor(p->value.rows(), p->value.cols());
  }
}

void Adam::zero_grad() {
  for (Parameter* p : params_) p->zero_grad();
}

void Adam::step() {
  for (const Parameter* p : params_) {
    if (!p->grad.same_shape(p->value)) {
      throw TrainingError("gradient of parameter '" + p->name + "' has shape " + p->grad.shape_string());
    }
    if (!p->grad.all_finite()) throw TrainingError("non-finite gradient in parameter '" + p->name + "'");
  }
  const KernelTable& kt = kernels();
  double sq = 0.0;
  for (const Parameter* p : params_) sq += kt.dot(p->size(), p->grad.data(), p->grad.data());
  last_norm_ = std::sqrt(sq);
  if (config_.clip_norm > 0.0 && last_norm_ > config_.clip_norm) {
    const double scale = config_.clip_norm / last_norm_;
    for (Parameter* p : params_)
      for (std::size_t i = 0; i < p->size(); ++i) p->grad[i] *= scale;
  }
  ++t_;
  const double t = static_cast<double>(t_);
  const AdamCoefficients k{config_.lr, config_.beta1, config_.beta2, config_.eps,
                           1.0 - std::pow(config_.beta1, t), 1.0 - std::pow(config_.beta2, t)};
  for (Parameter* p : params_) kt.adam_update(p->size(), k, p->grad.data(), p->m.data(), p->v.data(), p->value.data());
}

PlateauSchedule::PlateauSchedule(double initial_lr, double factor, std::size_t patience, double floor)
    : lr_(std::max(initial_lr, floor)),
      factor_(factor),
      patience_(patience),
      floor_(floor),
      best_(std::numeric_limits<double>::infinity()) {
  if (!(factor > 0.0 && factor < 1.0)) throw DomainError("plateau factor must be in (0, 1)");
  if (!(floor > 0.0)) throw DomainError("learning-rate floor must be positive");
}

double PlateauSchedule::observe(double loss) {
  if (loss < best_ * (1.0 - 1e-4)) {
    best_ = loss;
    bad_epochs_ = 0;
  } else if (++bad_epochs_ > patience_) {
    lr_ = std::max(floor_, lr_ * factor_);
    bad_epochs_ = 0;
  }
  return lr_;
}

double gradient_check(const std::vector<Parameter*>& params, const LossBuilder& loss, double eps,
                      std::size_t max_entries) {
  std::size_t total = 0;
  for (const Parameter* p : params) total += p->size();
  if (total == 0) return 0.0;

  std::vector<Tensor> analytic;
  {
    Tape tape;
    const Var l = loss(tape);
    for (Parameter* p : params) p->grad = Tensor(p->value.rows(), p->value.cols());
    tape.backward(l);
    for (const Parameter* p : params) analytic.push_back(p->grad);
  }
  auto evaluate = [&]() {
    Tape tape;
    return tape.value(loss(tape))[0];
  };

  const std::size_t stride = total <= max_entries ? 1 : (total + max_entries - 1) / max_entries;
  double worst = 0.0;
  std::size_t flat = 0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Parameter& p = *params[pi];
    for (std::size_t i = 0; i < p.size(); ++i, ++flat) {
      if (flat % stride != 0) continue;
      const double saved = p.value[i];
      p.value[i] = saved + eps;
      const double up = evaluate();
      p.value[i] = saved - eps;
      const double down = evaluate();
      p.value[i] = saved;
      const double cd = (up - down) / (2.0 * eps);
      const double a = analytic[pi][i];
      const double rel = std::abs(a - cd) / std::max({std::abs(a), std::abs(cd), 1e-12});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

}  // namespace chaoslab::nn
