#include "cpd/nn/tensor.hpp"

#include "cpd/error.hpp"

#include <cmath>
#include <sstream>

namespace cpd::nn {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values, bool requires_grad)
    : shape_(std::move(shape)), values_(std::move(values)), requires_grad_(requires_grad) {
  require(shape_product(shape_) == values_.size(), ErrorKind::ShapeMismatch,
          "tensor value count " + std::to_string(values_.size()) + " does not match shape " +
              shape_string(shape_));
}

Tensor Tensor::zeros(std::vector<std::size_t> shape, bool requires_grad) {
  const auto n = shape_product(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::from_matrix(const Mat& m, bool as_vector, bool requires_grad) {
  std::vector<double> v(m.data(), m.data() + m.size());
  if (as_vector && m.rows() == 1) {
    return Tensor({static_cast<std::size_t>(m.cols())}, std::move(v), requires_grad);
  }
  return Tensor({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())},
                std::move(v), requires_grad);
}

std::size_t Tensor::rows() const { return shape_.size() < 2 ? 1 : shape_[0]; }

std::size_t Tensor::cols() const {
  if (shape_.empty()) return 1;
  if (shape_.size() == 1) return shape_[0];
  return values_.size() / shape_[0];
}

Mat Tensor::matrix() const {
  Mat m(rows(), cols());
  std::copy(values_.begin(), values_.end(), m.data());
  return m;
}

void Tensor::assign(const Mat& m) {
  require(static_cast<std::size_t>(m.rows()) == rows() && static_cast<std::size_t>(m.cols()) == cols(),
          ErrorKind::ShapeMismatch, "assign: matrix does not match tensor shape " + shape_string(shape_));
  std::copy(m.data(), m.data() + m.size(), values_.begin());
}

bool Tensor::all_finite() const {
  for (double x : values_)
    if (!std::isfinite(x)) return false;
  return true;
}

void ParamStore::add(const std::string& name, Tensor t) {
  require(!contains(name), ErrorKind::InvalidArgument, "duplicate parameter name '" + name + "'");
  t.set_requires_grad(true);
  params_.emplace(name, std::move(t));
}

const Tensor& ParamStore::at(const std::string& name) const {
  auto it = params_.find(name);
  require(it != params_.end(), ErrorKind::InvalidArgument, "unknown parameter '" + name + "'");
  return it->second;
}

Tensor& ParamStore::at(const std::string& name) {
  auto it = params_.find(name);
  require(it != params_.end(), ErrorKind::InvalidArgument, "unknown parameter '" + name + "'");
  return it->second;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(params_.size());
  for (const auto& [k, _] : params_) out.push_back(k);
  return out;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : params_) n += t.size();
  return n;
}

}  // namespace cpd::nn
