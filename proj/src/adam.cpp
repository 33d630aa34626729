#include "bblv/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace bblv {

AdamState AdamState::init(const std::vector<Tensor*>& params, AdamConfig cfg) {
  AdamState st;
  st.cfg = cfg;
  st.m.reserve(params.size());
  st.v.reserve(params.size());
  for (const Tensor* p : params) {
    st.m.push_back(Tensor::zeros(p->shape));
    st.v.push_back(Tensor::zeros(p->shape));
  }
  return st;
}

void adam_step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads,
               AdamState& state, const std::vector<std::string>& names) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw std::invalid_argument("adam_step: parameter/gradient/state count mismatch");
  state.t += 1;
  const AdamConfig& c = state.cfg;
  const double bc1 = 1.0 - std::pow(static_cast<double>(c.beta1), static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(static_cast<double>(c.beta2), static_cast<double>(state.t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k];
    const Tensor& g = *grads[k];
    if (!p.same_shape(g) || !p.same_shape(state.m[k]))
      throw std::invalid_argument("adam_step: shape mismatch on parameter " +
                                  (k < names.size() ? names[k] : std::to_string(k)));
    if (!g.all_finite())
      throw std::runtime_error("adam_step: non-finite gradient for parameter " +
                               (k < names.size() ? names[k] : std::to_string(k)));
    auto& m = state.m[k].data;
    auto& v = state.v[k].data;
    for (std::size_t i = 0; i < p.data.size(); ++i) {
      float gi = g.data[i];
      m[i] = c.beta1 * m[i] + (1.0f - c.beta1) * gi;
      v[i] = c.beta2 * v[i] + (1.0f - c.beta2) * gi * gi;
      float mhat = static_cast<float>(m[i] / bc1);
      float vhat = static_cast<float>(v[i] / bc2);
      p.data[i] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
    }
  }
}

}  // namespace bblv
