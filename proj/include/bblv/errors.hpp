#pragma once

#include <stdexcept>

namespace bblv {

// Compressed-stream corruption, model/arithmetic mismatch, or failed
// round-trip verification. CLI maps this to its own exit code.
struct StreamError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace bblv
