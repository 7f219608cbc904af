#include "dfetrack/adamax.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

#include "dfetrack/error.hpp"

namespace dfetrack::cae {

void AdamaxParams::validate() const {
  if (!(learning_rate > 0.0)) throw InvalidInput("learning rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw InvalidInput("moment decay rates must lie in [0, 1)");
  }
  if (!(epsilon > 0.0)) throw InvalidInput("epsilon must be positive");
}

OptimizerState OptimizerState::for_model(const CaeModel& model, const AdamaxParams& hyper) {
  hyper.validate();
  OptimizerState s;
  s.hyper = hyper;
  for (const auto& p : model.params()) {
    s.m.emplace_back(p.size(), 0.0);
    s.u.emplace_back(p.size(), 0.0);
  }
  return s;
}

void adamax_update(std::span<double> params, std::span<const double> grads, std::span<double> m,
                   std::span<double> u, std::int64_t t, const AdamaxParams& hyper) {
  if (grads.size() != params.size() || m.size() != params.size() || u.size() != params.size()) {
    throw ShapeError("adamax: parameter, gradient, and state sizes differ");
  }
  if (t < 1) throw InvalidInput("adamax: step count starts at 1");
  const double rate = hyper.learning_rate / (1.0 - std::pow(hyper.beta1, static_cast<double>(t)));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * grads[i];
    u[i] = std::max(hyper.beta2 * u[i], std::abs(grads[i]));
    params[i] -= rate * m[i] / (u[i] + hyper.epsilon);
  }
}

void adamax_step(CaeModel& model, const Gradients& grads, OptimizerState& state) {
  auto& params = model.params();
  if (grads.values.size() != params.size() || state.m.size() != params.size() ||
      state.u.size() != params.size()) {
    throw ShapeError("adamax: gradient or optimizer state does not match the model");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads.values[i].size() != params[i].size() || state.m[i].size() != params[i].size() ||
        state.u[i].size() != params[i].size()) {
      throw ShapeError("adamax: size mismatch at " + params[i].name);
    }
    for (std::size_t k = 0; k < grads.values[i].size(); ++k) {
      if (!std::isfinite(grads.values[i][k])) {
        throw NumericError(fmt::format("non-finite gradient in {} at index {} (step {}, loss {})",
                                       params[i].name, k, state.step + 1, grads.loss));
      }
    }
  }
  ++state.step;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].trainable) continue;
    adamax_update(params[i].values, grads.values[i], state.m[i], state.u[i], state.step, state.hyper);
  }
  model.round_to_storage();
}

}  // namespace dfetrack::cae
