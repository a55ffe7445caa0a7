#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace cpd::nn {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVec = Eigen::Matrix<double, 1, Eigen::Dynamic>;

// Dense fp64 tensor in row-major order. Used for parameters and serialization;
// the tape works on 2-D matrices viewed through matrix().
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::vector<std::size_t> shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(std::vector<std::size_t> shape, bool requires_grad = false);
  // 1xN matrices become 1-D tensors when as_vector is set.
  static Tensor from_matrix(const Mat& m, bool as_vector = false, bool requires_grad = false);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t size() const { return values_.size(); }
  const std::vector<double>& values() const { return values_; }
  std::vector<double>& values() { return values_; }
  bool requires_grad() const { return requires_grad_; }
  void set_requires_grad(bool v) { requires_grad_ = v; }

  // Rows = first dimension (1 for vectors and scalars), cols = product of the rest.
  std::size_t rows() const;
  std::size_t cols() const;
  Mat matrix() const;
  void assign(const Mat& m);

  bool all_finite() const;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> values_;
  bool requires_grad_ = false;
};

std::size_t shape_product(const std::vector<std::size_t>& shape);
std::string shape_string(const std::vector<std::size_t>& shape);

using GradMap = std::map<std::string, Mat>;

// Named parameters plus Adam state. Names are unique; iteration order is lexicographic
// so every traversal is deterministic.
class ParamStore {
 public:
  struct Moments {
    Mat m;
    Mat v;
  };

  void add(const std::string& name, Tensor t);
  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  const Tensor& at(const std::string& name) const;
  Tensor& at(const std::string& name);
  const std::map<std::string, Tensor>& params() const { return params_; }
  std::vector<std::string> names() const;
  std::size_t scalar_count() const;

  std::map<std::string, Moments>& moments() { return moments_; }
  const std::map<std::string, Moments>& moments() const { return moments_; }
  std::int64_t step() const { return step_; }
  void set_step(std::int64_t s) { step_ = s; }

 private:
  std::map<std::string, Tensor> params_;
  std::map<std::string, Moments> moments_;
  std::int64_t step_ = 0;
};

}  // namespace cpd::nn
