#include "tilenet/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "tilenet/rng.hpp"

namespace tilenet {

namespace {

double evaluate(const std::function<Var(Tape&)>& f) {
  Tape tape(false);
  const double v = f(tape).item();
  if (!std::isfinite(v)) throw NumericError("grad_check: function is non-finite at a probe point");
  return v;
}

}  // namespace

GradCheckResult grad_check(const std::function<Var(Tape&)>& f, const ParameterList& params,
                           const GradCheckOptions& options) {
  if (!(options.eps > 0.0)) throw std::invalid_argument("grad_check: eps must be positive");
  zero_grads(params);
  {
    Tape tape;
    Var out = f(tape);
    if (!std::isfinite(out.item())) throw NumericError("grad_check: function is non-finite");
    tape.backward(out);
  }
  std::vector<Tensor> analytic;
  for (const Parameter* p : params) analytic.push_back(p->grad);

  SeededRng rng(options.seed, hash_string("grad_check"));
  GradCheckResult result;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Parameter& p = *params[pi];
    std::vector<std::size_t> coords(p.value.size());
    std::iota(coords.begin(), coords.end(), 0);
    if (coords.size() > options.coords_per_param) {
      for (std::size_t i = 0; i < options.coords_per_param; ++i) {
        const std::size_t j = i + rng.below(coords.size() - i);
        std::swap(coords[i], coords[j]);
      }
      coords.resize(options.coords_per_param);
    }
    for (std::size_t idx : coords) {
      const double saved = p.value[idx];
      p.value[idx] = saved + options.eps;
      const double up = evaluate(f);
      p.value[idx] = saved - options.eps;
      const double down = evaluate(f);
      p.value[idx] = saved;
      const double numeric = (up - down) / (2.0 * options.eps);
      const double a = analytic[pi][idx];
      const double err =
          std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      if (err > result.max_rel_error || result.worst_param.empty()) {
        if (err >= result.max_rel_error) {
          result.max_rel_error = err;
          result.worst_param = p.name;
        }
      }
      ++result.coords_checked;
    }
  }
  return result;
}

}  // namespace tilenet
