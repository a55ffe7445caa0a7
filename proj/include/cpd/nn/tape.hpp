#pragma once

#include "cpd/nn/tensor.hpp"

#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace cpd::nn {

class Tape;

// Handle to a node on a Tape. Cheap to copy; valid for the lifetime of its tape.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Mat& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
};

// Eager evaluation with a recorded tape for reverse-mode gradients. A tape built
// with record_grads = false evaluates the same graph without storing closures.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Mat& out_grad)>;

  explicit Tape(bool record_grads = true) : record_(record_grads) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }

  Var constant(Mat value);
  // Leaf that receives a gradient but is not a named parameter.
  Var leaf(Mat value);
  // Leaf bound to a parameter; repeated calls with the same name return the same node.
  Var param(const ParamStore& store, const std::string& name);

  // Pushes an op result. The closure is kept only when recording and some input needs a gradient.
  Var push(Mat value, std::initializer_list<Var> inputs, BackwardFn fn);
  Var push(Mat value, const std::vector<Var>& inputs, BackwardFn fn);

  const Mat& value(int id) const { return nodes_[id].value; }
  bool needs_grad(int id) const { return nodes_[id].needs_grad; }
  void accumulate(int id, const Mat& delta);
  void accumulate(int id, Mat&& delta);
  // Adds delta into the block of node id's gradient starting at (row, col).
  void accumulate_block(int id, Eigen::Index row, Eigen::Index col, const Mat& delta);

  // Reverse sweep from a 1x1 loss node.
  void backward(Var loss);
  // Gradient of a node after backward(); zeros when the node was not reached.
  Mat grad(Var v) const;
  GradMap param_grads() const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    Mat grad;
    BackwardFn backward;
    bool needs_grad = false;
  };
  std::vector<Node> nodes_;
  std::unordered_map<std::string, int> params_;
  bool record_;
};

inline const Mat& Var::value() const { return tape->value(id); }

// Differentiable operations. Shapes are checked; mismatches raise ErrorKind::ShapeMismatch.
namespace ops {

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
// Broadcast a 1xC row over every row of a.
Var add_row(Var a, Var row);
Var mul_row(Var a, Var row);
Var gelu(Var a);
Var sin(Var a);
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);

// Multi-head scaled dot-product attention over `batch` independent sequences stacked
// row-wise: q is (batch*Tq)xD, k and v are (batch*Tk)xD. key_lengths, when given,
// holds the number of valid keys per sequence; the rest receive an additive -inf mask.
Var attention(Var q, Var k, Var v, int heads, int batch,
              const std::vector<int>* key_lengths = nullptr);

Var concat_rows(const std::vector<Var>& parts);
Var slice_rows(Var a, Eigen::Index start, Eigen::Index count);
Var gather_rows(Var a, const std::vector<int>& rows);
Var reshape(Var a, Eigen::Index rows, Eigen::Index cols);

Var sum(Var a);
Var mean(Var a);
// Mean absolute difference (l1) and mean squared difference.
Var l1(Var a, Var b);
Var mse(Var a, Var b);
// Masked mean squared difference; mask entries are 0 or 1 per row.
Var masked_mse(Var a, Var b, const std::vector<double>& row_mask);

// Periodic reparameterization: params is 4xQ with rows (F, A, B, S); time is NxQ.
// out[t,q] = A_q * sin(F_q * (time[t,q] - S_q)) + B_q.
Var periodic_signal(Var params, const Mat& time);

}  // namespace ops

// Plain softmax rows; exposed for tests of the attention kernel.
Mat softmax_rows(const Mat& scores);
// Plain layer norm without gain/bias.
Mat layer_norm_rows(const Mat& x, double eps = 1e-5);

}  // namespace cpd::nn
