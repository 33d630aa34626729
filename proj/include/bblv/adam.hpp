#pragma once

#include <string>
#include <vector>

#include "bblv/tensor.hpp"

namespace bblv {

struct AdamConfig {
  float lr = 3e-4f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

// First/second moment accumulators, one pair per parameter tensor.
struct AdamState {
  AdamConfig cfg;
  long t = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;

  static AdamState init(const std::vector<Tensor*>& params, AdamConfig cfg);
};

// Standard bias-corrected Adam update, in place. `names` (optional, may be
// empty) labels parameters in error messages when a gradient is non-finite.
void adam_step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads,
               AdamState& state, const std::vector<std::string>& names = {});

}  // namespace bblv
