#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dfetrack/cae.hpp"

namespace dfetrack::cae {

struct AdamaxParams {
  double learning_rate = 0.002;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

// First-moment and infinity-norm accumulators, one vector per model
// parameter tensor.
struct OptimizerState {
  AdamaxParams hyper;
  std::int64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> u;

  static OptimizerState for_model(const CaeModel& model, const AdamaxParams& hyper = {});
};

// One update of a flat parameter block at (1-based) step t:
//   m <- b1*m + (1-b1)*g
//   u <- max(b2*u, |g|)
//   p <- p - lr / (1 - b1^t) * m / (u + eps)
void adamax_update(std::span<double> params, std::span<const double> grads, std::span<double> m,
                   std::span<double> u, std::int64_t t, const AdamaxParams& hyper);

// Advances state.step and updates every trainable parameter, then rounds the
// model to storage precision. Throws NumericError naming the first tensor
// holding a non-finite gradient; the model is left untouched in that case.
void adamax_step(CaeModel& model, const Gradients& grads, OptimizerState& state);

}  // namespace dfetrack::cae
