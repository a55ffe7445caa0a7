#include "cpd/nn/tape.hpp"

#include "cpd/error.hpp"

#include <cmath>
#include <limits>
#include <memory>
#include <numbers>

namespace cpd::nn {

namespace {

void check_same_tape(Var a, Var b) {
  require(a.tape != nullptr && a.tape == b.tape, ErrorKind::InvalidArgument,
          "operands belong to different tapes");
}

void check_same_shape(const Mat& a, const Mat& b, const char* op) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), ErrorKind::ShapeMismatch,
          std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
              std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
              std::to_string(b.cols()));
}

}  // namespace

Var Tape::constant(Mat value) {
  nodes_.push_back(Node{std::move(value), {}, {}, false});
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::leaf(Mat value) {
  nodes_.push_back(Node{std::move(value), {}, {}, record_});
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::param(const ParamStore& store, const std::string& name) {
  if (auto it = params_.find(name); it != params_.end()) return Var{this, it->second};
  Var v = leaf(store.at(name).matrix());
  params_.emplace(name, v.id);
  return v;
}

Var Tape::push(Mat value, std::initializer_list<Var> inputs, BackwardFn fn) {
  bool needs = false;
  if (record_) {
    for (const Var& in : inputs) needs = needs || nodes_[in.id].needs_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, needs ? std::move(fn) : BackwardFn{}, needs});
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::push(Mat value, const std::vector<Var>& inputs, BackwardFn fn) {
  bool needs = false;
  if (record_) {
    for (const Var& in : inputs) needs = needs || nodes_[in.id].needs_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, needs ? std::move(fn) : BackwardFn{}, needs});
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

void Tape::accumulate(int id, const Mat& delta) {
  Node& n = nodes_[id];
  if (!n.needs_grad) return;
  if (n.grad.size() == 0) {
    n.grad = delta;
  } else {
    n.grad += delta;
  }
}

void Tape::accumulate(int id, Mat&& delta) {
  Node& n = nodes_[id];
  if (!n.needs_grad) return;
  if (n.grad.size() == 0) {
    n.grad = std::move(delta);
  } else {
    n.grad += delta;
  }
}

void Tape::accumulate_block(int id, Eigen::Index row, Eigen::Index col, const Mat& delta) {
  Node& n = nodes_[id];
  if (!n.needs_grad) return;
  if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
  n.grad.block(row, col, delta.rows(), delta.cols()) += delta;
}

void Tape::backward(Var loss) {
  require(loss.tape == this, ErrorKind::InvalidArgument, "backward: loss from another tape");
  require(record_, ErrorKind::InvalidArgument, "backward: tape was built without gradient recording");
  const Mat& lv = nodes_[loss.id].value;
  require(lv.rows() == 1 && lv.cols() == 1, ErrorKind::ShapeMismatch,
          "backward: loss must be scalar (1x1), got " + std::to_string(lv.rows()) + "x" +
              std::to_string(lv.cols()));
  for (auto& n : nodes_) n.grad.resize(0, 0);
  nodes_[loss.id].grad = Mat::Ones(1, 1);
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.backward && n.grad.size() != 0) n.backward(*this, n.grad);
  }
}

Mat Tape::grad(Var v) const {
  const Node& n = nodes_[v.id];
  if (n.grad.size() == 0) return Mat::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

GradMap Tape::param_grads() const {
  GradMap out;
  for (const auto& [name, id] : params_) out.emplace(name, grad(Var{const_cast<Tape*>(this), id}));
  return out;
}

Mat softmax_rows(const Mat& scores) {
  Mat p(scores.rows(), scores.cols());
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    const double m = scores.row(i).maxCoeff();
    p.row(i) = (scores.row(i).array() - m).exp();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

Mat layer_norm_rows(const Mat& x, double eps) {
  Mat out(x.rows(), x.cols());
  const double inv_c = 1.0 / static_cast<double>(x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double mu = x.row(i).sum() * inv_c;
    const double var = (x.row(i).array() - mu).square().sum() * inv_c;
    out.row(i) = (x.row(i).array() - mu) / std::sqrt(var + eps);
  }
  return out;
}

namespace ops {

Var matmul(Var a, Var b) {
  check_same_tape(a, b);
  require(a.cols() == b.rows(), ErrorKind::ShapeMismatch,
          "matmul: inner dimensions " + std::to_string(a.cols()) + " and " + std::to_string(b.rows()));
  Mat out = a.value() * b.value();
  return a.tape->push(std::move(out), {a, b}, [a, b](Tape& t, const Mat& g) {
    if (t.needs_grad(a.id)) t.accumulate(a.id, Mat(g * t.value(b.id).transpose()));
    if (t.needs_grad(b.id)) t.accumulate(b.id, Mat(t.value(a.id).transpose() * g));
  });
}

Var add(Var a, Var b) {
  check_same_tape(a, b);
  check_same_shape(a.value(), b.value(), "add");
  Mat out = a.value() + b.value();
  return a.tape->push(std::move(out), {a, b}, [a, b](Tape& t, const Mat& g) {
    t.accumulate(a.id, g);
    t.accumulate(b.id, g);
  });
}

Var sub(Var a, Var b) {
  check_same_tape(a, b);
  check_same_shape(a.value(), b.value(), "sub");
  Mat out = a.value() - b.value();
  return a.tape->push(std::move(out), {a, b}, [a, b](Tape& t, const Mat& g) {
    t.accumulate(a.id, g);
    if (t.needs_grad(b.id)) t.accumulate(b.id, -g);
  });
}

Var mul(Var a, Var b) {
  check_same_tape(a, b);
  check_same_shape(a.value(), b.value(), "mul");
  Mat out = a.value().cwiseProduct(b.value());
  return a.tape->push(std::move(out), {a, b}, [a, b](Tape& t, const Mat& g) {
    if (t.needs_grad(a.id)) t.accumulate(a.id, g.cwiseProduct(t.value(b.id)));
    if (t.needs_grad(b.id)) t.accumulate(b.id, g.cwiseProduct(t.value(a.id)));
  });
}

Var scale(Var a, double s) {
  Mat out = a.value() * s;
  return a.tape->push(std::move(out), {a}, [a, s](Tape& t, const Mat& g) { t.accumulate(a.id, g * s); });
}

Var add_row(Var a, Var row) {
  check_same_tape(a, row);
  require(row.rows() == 1 && row.cols() == a.cols(), ErrorKind::ShapeMismatch,
          "add_row: row must be 1x" + std::to_string(a.cols()));
  Mat out = a.value().rowwise() + row.value().row(0);
  return a.tape->push(std::move(out), {a, row}, [a, row](Tape& t, const Mat& g) {
    t.accumulate(a.id, g);
    if (t.needs_grad(row.id)) t.accumulate(row.id, g.colwise().sum());
  });
}

Var mul_row(Var a, Var row) {
  check_same_tape(a, row);
  require(row.rows() == 1 && row.cols() == a.cols(), ErrorKind::ShapeMismatch,
          "mul_row: row must be 1x" + std::to_string(a.cols()));
  Mat out = a.value().array().rowwise() * row.value().row(0).array();
  return a.tape->push(std::move(out), {a, row}, [a, row](Tape& t, const Mat& g) {
    if (t.needs_grad(a.id)) {
      Mat da = g.array().rowwise() * t.value(row.id).row(0).array();
      t.accumulate(a.id, da);
    }
    if (t.needs_grad(row.id)) t.accumulate(row.id, g.cwiseProduct(t.value(a.id)).colwise().sum());
  });
}

Var gelu(Var a) {
  const Mat& x = a.value();
  Mat out(x.rows(), x.cols());
  const double inv_sqrt2 = 1.0 / std::numbers::sqrt2;
  const double inv_sqrt2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  // Derivative is filled in the same pass so the backward sweep avoids a second erf.
  std::shared_ptr<Mat> slope;
  if (a.tape->recording() && a.tape->needs_grad(a.id)) slope = std::make_shared<Mat>(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double v = x.data()[i];
    const double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
    out.data()[i] = v * cdf;
    if (slope) slope->data()[i] = cdf;
  }
  if (slope) {
    auto xa = x.array();
    slope->array() += xa * (-0.5 * xa.square()).exp() * inv_sqrt2pi;
  }
  return a.tape->push(std::move(out), {a}, [a, slope](Tape& t, const Mat& g) {
    t.accumulate(a.id, Mat(g.cwiseProduct(*slope)));
  });
}

Var sin(Var a) {
  Mat out = a.value().array().sin();
  return a.tape->push(std::move(out), {a}, [a](Tape& t, const Mat& g) {
    Mat d = g.array() * t.value(a.id).array().cos();
    t.accumulate(a.id, d);
  });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  check_same_tape(x, gain);
  check_same_tape(x, bias);
  const Eigen::Index c = x.cols();
  require(gain.rows() == 1 && gain.cols() == c && bias.rows() == 1 && bias.cols() == c,
          ErrorKind::ShapeMismatch, "layer_norm: gain/bias must be 1x" + std::to_string(c));
  const Mat& xv = x.value();
  auto xhat = std::make_shared<Mat>(xv.rows(), c);
  auto inv_std = std::make_shared<std::vector<double>>(xv.rows());
  const double inv_c = 1.0 / static_cast<double>(c);
  for (Eigen::Index i = 0; i < xv.rows(); ++i) {
    const double mu = xv.row(i).sum() * inv_c;
    const double var = (xv.row(i).array() - mu).square().sum() * inv_c;
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[i] = is;
    xhat->row(i) = (xv.row(i).array() - mu) * is;
  }
  Mat out = (xhat->array().rowwise() * gain.value().row(0).array()).rowwise() + bias.value().row(0).array();
  return x.tape->push(std::move(out), {x, gain, bias}, [x, gain, bias, xhat, inv_std, inv_c](Tape& t, const Mat& g) {
    if (t.needs_grad(gain.id)) t.accumulate(gain.id, g.cwiseProduct(*xhat).colwise().sum());
    if (t.needs_grad(bias.id)) t.accumulate(bias.id, g.colwise().sum());
    if (t.needs_grad(x.id)) {
      Mat dxhat = g.array().rowwise() * t.value(gain.id).row(0).array();
      Mat dx(g.rows(), g.cols());
      for (Eigen::Index i = 0; i < g.rows(); ++i) {
        const double m1 = dxhat.row(i).sum() * inv_c;
        const double m2 = dxhat.row(i).dot(xhat->row(i)) * inv_c;
        dx.row(i) = (dxhat.row(i).array() - m1 - xhat->row(i).array() * m2) * (*inv_std)[i];
      }
      t.accumulate(x.id, dx);
    }
  });
}

Var attention(Var q, Var k, Var v, int heads, int batch, const std::vector<int>* key_lengths) {
  check_same_tape(q, k);
  check_same_tape(q, v);
  const Eigen::Index d = q.cols();
  require(k.cols() == d && v.cols() == d, ErrorKind::ShapeMismatch, "attention: feature widths differ");
  require(heads > 0 && d % heads == 0, ErrorKind::ShapeMismatch, "attention: width not divisible by heads");
  require(batch > 0 && q.rows() % batch == 0 && k.rows() % batch == 0 && k.rows() == v.rows(),
          ErrorKind::ShapeMismatch, "attention: rows not divisible by batch");
  const Eigen::Index tq = q.rows() / batch;
  const Eigen::Index tk = k.rows() / batch;
  const Eigen::Index dh = d / heads;
  const double scl = 1.0 / std::sqrt(static_cast<double>(dh));
  if (key_lengths) {
    require(static_cast<int>(key_lengths->size()) == batch, ErrorKind::ShapeMismatch,
            "attention: one key length per sequence required");
    for (int len : *key_lengths)
      require(len >= 1 && len <= tk, ErrorKind::ShapeMismatch, "attention: key length out of range");
  }

  const Mat& qv = q.value();
  const Mat& kv = k.value();
  const Mat& vv = v.value();
  auto probs = std::make_shared<std::vector<Mat>>(static_cast<std::size_t>(batch * heads));
  auto lens = std::make_shared<std::vector<Eigen::Index>>(static_cast<std::size_t>(batch), tk);
  if (key_lengths)
    for (int b = 0; b < batch; ++b) (*lens)[b] = (*key_lengths)[b];
  Mat out(q.rows(), d);
  for (int b = 0; b < batch; ++b) {
    const Eigen::Index len = (*lens)[b];
    for (int h = 0; h < heads; ++h) {
      Mat s = (qv.block(b * tq, h * dh, tq, dh) * kv.block(b * tk, h * dh, len, dh).transpose()) * scl;
      Mat p = softmax_rows(s);
      out.block(b * tq, h * dh, tq, dh).noalias() = p * vv.block(b * tk, h * dh, len, dh);
      (*probs)[b * heads + h] = std::move(p);
    }
  }
  return q.tape->push(std::move(out), {q, k, v}, [q, k, v, heads, batch, tq, dh, scl, probs, lens](Tape& t, const Mat& g) {
    const Mat& qv = t.value(q.id);
    const Mat& kv = t.value(k.id);
    const Mat& vv = t.value(v.id);
    const Eigen::Index tk = kv.rows() / batch;
    Mat dq(qv.rows(), qv.cols());
    Mat dk = Mat::Zero(kv.rows(), kv.cols());
    Mat dv = Mat::Zero(vv.rows(), vv.cols());
    Mat dp, ds;
    for (int b = 0; b < batch; ++b) {
      const Eigen::Index len = (*lens)[b];
      for (int h = 0; h < heads; ++h) {
        const Mat& p = (*probs)[b * heads + h];
        auto gb = g.block(b * tq, h * dh, tq, dh);
        auto qb = qv.block(b * tq, h * dh, tq, dh);
        auto kb = kv.block(b * tk, h * dh, len, dh);
        auto vb = vv.block(b * tk, h * dh, len, dh);
        dv.block(b * tk, h * dh, len, dh).noalias() = p.transpose() * gb;
        dp.noalias() = gb * vb.transpose();
        ds = p.cwiseProduct(dp);
        const Eigen::VectorXd row_dot = ds.rowwise().sum();
        ds -= p.cwiseProduct(row_dot.replicate(1, len));
        ds *= scl;
        dq.block(b * tq, h * dh, tq, dh).noalias() = ds * kb;
        dk.block(b * tk, h * dh, len, dh).noalias() = ds.transpose() * qb;
      }
    }
    t.accumulate(q.id, std::move(dq));
    t.accumulate(k.id, std::move(dk));
    t.accumulate(v.id, std::move(dv));
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  require(!parts.empty(), ErrorKind::InvalidArgument, "concat_rows: no parts");
  const Eigen::Index c = parts.front().cols();
  Eigen::Index r = 0;
  for (const Var& p : parts) {
    check_same_tape(parts.front(), p);
    require(p.cols() == c, ErrorKind::ShapeMismatch, "concat_rows: column counts differ");
    r += p.rows();
  }
  Mat out(r, c);
  std::vector<Eigen::Index> offsets;
  offsets.reserve(parts.size());
  Eigen::Index off = 0;
  for (const Var& p : parts) {
    offsets.push_back(off);
    out.middleRows(off, p.rows()) = p.value();
    off += p.rows();
  }
  return parts.front().tape->push(std::move(out), parts, [parts, offsets](Tape& t, const Mat& g) {
    for (std::size_t i = 0; i < parts.size(); ++i) {
      if (t.needs_grad(parts[i].id)) t.accumulate(parts[i].id, g.middleRows(offsets[i], parts[i].rows()));
    }
  });
}

Var slice_rows(Var a, Eigen::Index start, Eigen::Index count) {
  require(start >= 0 && count >= 0 && start + count <= a.rows(), ErrorKind::ShapeMismatch,
          "slice_rows: range out of bounds");
  Mat out = a.value().middleRows(start, count);
  return a.tape->push(std::move(out), {a}, [a, start](Tape& t, const Mat& g) {
    t.accumulate_block(a.id, start, 0, g);
  });
}

Var gather_rows(Var a, const std::vector<int>& rows) {
  Mat out(static_cast<Eigen::Index>(rows.size()), a.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i] >= 0 && rows[i] < a.rows(), ErrorKind::ShapeMismatch, "gather_rows: index out of range");
    out.row(static_cast<Eigen::Index>(i)) = a.value().row(rows[i]);
  }
  return a.tape->push(std::move(out), {a}, [a, rows](Tape& t, const Mat& g) {
    Mat d = Mat::Zero(t.value(a.id).rows(), t.value(a.id).cols());
    for (std::size_t i = 0; i < rows.size(); ++i) d.row(rows[i]) += g.row(static_cast<Eigen::Index>(i));
    t.accumulate(a.id, d);
  });
}

Var reshape(Var a, Eigen::Index rows, Eigen::Index cols) {
  require(rows * cols == a.value().size(), ErrorKind::ShapeMismatch, "reshape: element count differs");
  Mat out = Eigen::Map<const Mat>(a.value().data(), rows, cols);
  const Eigen::Index r0 = a.rows();
  const Eigen::Index c0 = a.cols();
  return a.tape->push(std::move(out), {a}, [a, r0, c0](Tape& t, const Mat& g) {
    t.accumulate(a.id, Eigen::Map<const Mat>(g.data(), r0, c0));
  });
}

Var sum(Var a) {
  Mat out(1, 1);
  out(0, 0) = a.value().sum();
  return a.tape->push(std::move(out), {a}, [a](Tape& t, const Mat& g) {
    t.accumulate(a.id, Mat::Constant(t.value(a.id).rows(), t.value(a.id).cols(), g(0, 0)));
  });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  return scale(sum(a), 1.0 / n);
}

Var l1(Var a, Var b) {
  check_same_tape(a, b);
  check_same_shape(a.value(), b.value(), "l1");
  const double n = static_cast<double>(a.value().size());
  Mat out(1, 1);
  out(0, 0) = (a.value() - b.value()).cwiseAbs().sum() / n;
  return a.tape->push(std::move(out), {a, b}, [a, b, n](Tape& t, const Mat& g) {
    Mat d = (t.value(a.id) - t.value(b.id)).unaryExpr([](double x) {
      return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
    });
    d *= g(0, 0) / n;
    if (t.needs_grad(a.id)) t.accumulate(a.id, d);
    if (t.needs_grad(b.id)) t.accumulate(b.id, -d);
  });
}

Var mse(Var a, Var b) {
  check_same_tape(a, b);
  check_same_shape(a.value(), b.value(), "mse");
  const double n = static_cast<double>(a.value().size());
  Mat out(1, 1);
  out(0, 0) = (a.value() - b.value()).squaredNorm() / n;
  return a.tape->push(std::move(out), {a, b}, [a, b, n](Tape& t, const Mat& g) {
    Mat d = (t.value(a.id) - t.value(b.id)) * (2.0 * g(0, 0) / n);
    if (t.needs_grad(a.id)) t.accumulate(a.id, d);
    if (t.needs_grad(b.id)) t.accumulate(b.id, -d);
  });
}

Var masked_mse(Var a, Var b, const std::vector<double>& row_mask) {
  check_same_tape(a, b);
  check_same_shape(a.value(), b.value(), "masked_mse");
  require(static_cast<Eigen::Index>(row_mask.size()) == a.rows(), ErrorKind::ShapeMismatch,
          "masked_mse: mask length must equal row count");
  double active = 0.0;
  for (double m : row_mask) active += m;
  require(active > 0.0, ErrorKind::InvalidArgument, "masked_mse: empty mask");
  const Eigen::Map<const Eigen::VectorXd> mask(row_mask.data(), static_cast<Eigen::Index>(row_mask.size()));
  const double n = active * static_cast<double>(a.cols());
  Mat diff = a.value() - b.value();
  Mat out(1, 1);
  out(0, 0) = (diff.rowwise().squaredNorm().cwiseProduct(mask)).sum() / n;
  auto mask_copy = std::make_shared<Eigen::VectorXd>(mask);
  return a.tape->push(std::move(out), {a, b}, [a, b, n, mask_copy](Tape& t, const Mat& g) {
    Mat d = (t.value(a.id) - t.value(b.id));
    d = d.array().colwise() * mask_copy->array();
    d *= 2.0 * g(0, 0) / n;
    if (t.needs_grad(a.id)) t.accumulate(a.id, d);
    if (t.needs_grad(b.id)) t.accumulate(b.id, -d);
  });
}

Var periodic_signal(Var params, const Mat& time) {
  const Mat& p = params.value();
  require(p.rows() == 4, ErrorKind::ShapeMismatch, "periodic_signal: params must have 4 rows (F, A, B, S)");
  require(time.cols() == p.cols(), ErrorKind::ShapeMismatch,
          "periodic_signal: time window has " + std::to_string(time.cols()) + " columns, latent has " +
              std::to_string(p.cols()));
  const Eigen::Index n = time.rows();
  const Eigen::Index qd = p.cols();
  Mat out(n, qd);
  for (Eigen::Index t = 0; t < n; ++t)
    for (Eigen::Index q = 0; q < qd; ++q)
      out(t, q) = p(1, q) * std::sin(p(0, q) * (time(t, q) - p(3, q))) + p(2, q);
  auto tcopy = std::make_shared<Mat>(time);
  return params.tape->push(std::move(out), {params}, [params, tcopy](Tape& t, const Mat& g) {
    const Mat& p = t.value(params.id);
    const Mat& tm = *tcopy;
    Mat d = Mat::Zero(4, p.cols());
    for (Eigen::Index r = 0; r < tm.rows(); ++r) {
      for (Eigen::Index q = 0; q < p.cols(); ++q) {
        const double dt = tm(r, q) - p(3, q);
        const double u = p(0, q) * dt;
        const double gc = g(r, q) * p(1, q) * std::cos(u);
        d(0, q) += gc * dt;
        d(1, q) += g(r, q) * std::sin(u);
        d(2, q) += g(r, q);
        d(3, q) -= gc * p(0, q);
      }
    }
    t.accumulate(params.id, d);
  });
}

}  // namespace ops
}  // namespace cpd::nn
