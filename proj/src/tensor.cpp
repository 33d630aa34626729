#include "bblv/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace bblv {

std::size_t shape_numel(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("tensor dimension must be positive, got " + shape_str(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << "]";
  return os.str();
}

Tensor::Tensor(std::vector<int> s, std::vector<float> d) : shape(std::move(s)), data(std::move(d)) {
  if (shape_numel(shape) != data.size())
    throw std::invalid_argument("tensor data length " + std::to_string(data.size()) +
                                " does not match shape " + shape_str(shape));
}

Tensor Tensor::zeros(std::vector<int> shape) {
  std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<float>(n, 0.0f));
}

Tensor Tensor::full(std::vector<int> shape, float v) {
  std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<float>(n, v));
}

Tensor Tensor::scalar(float v) { return Tensor({1}, {v}); }

Tensor Tensor::vec(std::vector<float> v) {
  int n = static_cast<int>(v.size());
  return Tensor({n}, std::move(v));
}

Tensor Tensor::matrix(int rows, int cols, std::vector<float> v) { return Tensor({rows, cols}, std::move(v)); }

int Tensor::rows() const {
  if (rank() != 2) throw std::invalid_argument("rows() on tensor of shape " + shape_str(shape));
  return shape[0];
}

int Tensor::cols() const {
  if (rank() != 2) throw std::invalid_argument("cols() on tensor of shape " + shape_str(shape));
  return shape[1];
}

float& Tensor::at(int r, int c) { return data[static_cast<std::size_t>(r) * cols() + c]; }
float Tensor::at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols() + c]; }

bool Tensor::all_finite() const {
  for (float v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

float Tensor::item() const {
  if (size() != 1) throw std::invalid_argument("item() on tensor of shape " + shape_str(shape));
  return data[0];
}

}  // namespace bblv
