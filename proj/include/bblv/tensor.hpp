#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace bblv {

// Dense row-major float tensor. Rank is shape.size(); scalars have shape {1}.
struct Tensor {
  std::vector<int> shape;
  std::vector<float> data;

  Tensor() = default;
  Tensor(std::vector<int> s, std::vector<float> d);

  static Tensor zeros(std::vector<int> shape);
  static Tensor full(std::vector<int> shape, float v);
  static Tensor scalar(float v);
  static Tensor vec(std::vector<float> v);
  static Tensor matrix(int rows, int cols, std::vector<float> v);

  std::size_t size() const { return data.size(); }
  int rank() const { return static_cast<int>(shape.size()); }
  int rows() const;
  int cols() const;
  float& at(int r, int c);
  float at(int r, int c) const;

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
  bool all_finite() const;
  float item() const;  // requires size()==1
};

std::string shape_str(const std::vector<int>& shape);
std::size_t shape_numel(const std::vector<int>& shape);

}  // namespace bblv
