#include "tilenet/adam.hpp"

#include <cmath>

namespace tilenet {

bool AdamState::operator==(const AdamState& other) const {
  return config.learning_rate == other.config.learning_rate &&
         config.beta1 == other.config.beta1 && config.beta2 == other.config.beta2 &&
         config.epsilon == other.config.epsilon && step == other.step &&
         first_moment == other.first_moment && second_moment == other.second_moment;
}

void adam_step(const ParameterList& params, AdamState& state) {
  if (state.first_moment.empty() && state.step == 0) {
    for (const Parameter* p : params) {
      state.first_moment.emplace_back(p->value.shape());
      state.second_moment.emplace_back(p->value.shape());
    }
  }
  if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size()) {
    throw ShapeError("adam_step: optimizer state tracks " +
                     std::to_string(state.first_moment.size()) + " tensors but " +
                     std::to_string(params.size()) + " parameters were given");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Parameter& p = *params[i];
    if (!p.grad.same_shape(p.value)) {
      throw ShapeError("adam_step: gradient of '" + p.name + "' has shape " +
                       shape_string(p.grad.shape()) + ", expected " + shape_string(p.value.shape()));
    }
    if (!state.first_moment[i].same_shape(p.value) || !state.second_moment[i].same_shape(p.value)) {
      throw ShapeError("adam_step: moment shape mismatch for '" + p.name + "'");
    }
    if (!p.grad.all_finite()) {
      throw NumericError("adam_step: non-finite gradient in '" + p.name + "'");
    }
  }

  const AdamConfig& c = state.config;
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(c.beta1, t);
  const double bias2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    Tensor& m = state.first_moment[i];
    Tensor& v = state.second_moment[i];
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      const double g = p.grad[j];
      m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g;
      v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g * g;
      const double m_hat = m[j] / bias1;
      const double v_hat = v[j] / bias2;
      p.value[j] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
  }
}

}  // namespace tilenet
