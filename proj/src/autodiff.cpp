#include "a3t/autodiff.hpp"

#include "a3t/random.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace a3t::ad {

namespace {

using NodePtr = std::shared_ptr<Node>;

void check_finite(const Matrix& m, const char* op) {
  if (!m.allFinite()) throw NumericError(std::string("non-finite result in ") + op);
}

std::string shape_str(const Tensor& t) { return std::to_string(t.rows()) + "x" + std::to_string(t.cols()); }

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw DataError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

void accumulate(Node& target, const Matrix& g) {
  if (!target.requires_grad) return;
  if (target.grad.size() == 0)
    target.grad = g;
  else
    target.grad += g;
}

// Records an op result. The backward closure receives the output node and
// pushes its grad into the parents.
Tensor record(Matrix value, const char* op, std::vector<Tensor> inputs, std::function<void(Node&)> fn) {
  check_finite(value, op);
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->leaf = false;
  for (const auto& in : inputs) node->requires_grad = node->requires_grad || in.requires_grad();
  if (node->requires_grad) {
    for (auto& in : inputs) node->parents.push_back(in.shared());
    node->backward_fn = std::move(fn);
  }
  return Tensor(std::move(node));
}

Node& parent(Node& out, std::size_t i) { return *out.parents[i]; }

std::vector<int> checked_rows(const std::vector<int>& rows, Eigen::Index limit, const char* op) {
  for (int r : rows)
    if (r < 0 || r >= limit) throw DataError(std::string(op) + ": row index out of range");
  return rows;
}

}  // namespace

Tensor Tensor::constant(Matrix value) {
  check_finite(value, "constant");
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Tensor(std::move(node));
}

Tensor Tensor::parameter(Matrix value) {
  Tensor t = constant(std::move(value));
  t.node_->requires_grad = true;
  return t;
}

double Tensor::item() const {
  if (rows() != 1 || cols() != 1) throw DataError("item() on non-scalar tensor " + shape_str(*this));
  return value()(0, 0);
}

void Tensor::zero_grad() { node_->grad = Matrix::Zero(rows(), cols()); }

void backward(const Tensor& loss) {
  if (!loss.defined()) throw DataError("backward on undefined tensor");
  if (loss.rows() != 1 || loss.cols() != 1) throw DataError("backward requires a scalar loss, got " + shape_str(loss));
  Node* root = loss.node();
  if (root->consumed) throw DataError("backward called twice on the same graph; re-run forward first");
  if (!root->requires_grad) throw DataError("loss does not depend on any parameter");

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{root, 0}};
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && !p->leaf && visited.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->grad = Matrix::Ones(1, 1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && n->grad.size() > 0) n->backward_fn(*n);
  }
  for (Node* n : order) {
    n->backward_fn = nullptr;
    n->parents.clear();
    if (n != root) n->grad.resize(0, 0);
  }
  root->consumed = true;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) shape_error("matmul", a, b);
  Matrix out = a.value() * b.value();
  return record(std::move(out), "matmul", {a, b}, [](Node& o) {
    Node& pa = parent(o, 0);
    Node& pb = parent(o, 1);
    if (pa.requires_grad) accumulate(pa, o.grad * pb.value.transpose());
    if (pb.requires_grad) accumulate(pb, pa.value.transpose() * o.grad);
  });
}

Tensor transpose(const Tensor& a) {
  return record(a.value().transpose(), "transpose", {a},
                [](Node& o) { accumulate(parent(o, 0), o.grad.transpose()); });
}

Tensor add(const Tensor& a, const Tensor& b) {
  const bool broadcast = b.rows() == 1 && a.rows() != 1 && a.cols() == b.cols();
  if (!broadcast && (a.rows() != b.rows() || a.cols() != b.cols())) shape_error("add", a, b);
  Matrix out = a.value();
  if (broadcast)
    out.rowwise() += b.value().row(0);
  else
    out += b.value();
  return record(std::move(out), "add", {a, b}, [broadcast](Node& o) {
    accumulate(parent(o, 0), o.grad);
    if (broadcast)
      accumulate(parent(o, 1), o.grad.colwise().sum());
    else
      accumulate(parent(o, 1), o.grad);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error("sub", a, b);
  return record(a.value() - b.value(), "sub", {a, b}, [](Node& o) {
    accumulate(parent(o, 0), o.grad);
    accumulate(parent(o, 1), -o.grad);
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error("mul", a, b);
  return record(a.value().cwiseProduct(b.value()), "mul", {a, b}, [](Node& o) {
    Node& pa = parent(o, 0);
    Node& pb = parent(o, 1);
    if (pa.requires_grad) accumulate(pa, o.grad.cwiseProduct(pb.value));
    if (pb.requires_grad) accumulate(pb, o.grad.cwiseProduct(pa.value));
  });
}

Tensor scale(const Tensor& a, double factor) {
  return record(a.value() * factor, "scale", {a}, [factor](Node& o) { accumulate(parent(o, 0), o.grad * factor); });
}

Tensor relu(const Tensor& a) {
  return record(a.value().cwiseMax(0.0), "relu", {a}, [](Node& o) {
    Node& p = parent(o, 0);
    accumulate(p, (p.value.array() > 0.0).select(o.grad, 0.0));
  });
}

namespace {
Matrix logistic(const Matrix& x) { return (1.0 + (-x.array()).exp()).inverse().matrix(); }
}  // namespace

Tensor sigmoid(const Tensor& a) {
  Matrix y = logistic(a.value());
  return record(y, "sigmoid", {a}, [](Node& o) {
    accumulate(parent(o, 0), (o.grad.array() * o.value.array() * (1.0 - o.value.array())).matrix());
  });
}

Tensor swish(const Tensor& a) {
  Matrix s = logistic(a.value());
  Matrix y = a.value().cwiseProduct(s);
  return record(std::move(y), "swish", {a}, [s = std::move(s)](Node& o) {
    const auto x = parent(o, 0).value.array();
    accumulate(parent(o, 0), (o.grad.array() * (s.array() + x * s.array() * (1.0 - s.array()))).matrix());
  });
}

Tensor tanh(const Tensor& a) {
  Matrix y = a.value().array().tanh().matrix();
  return record(std::move(y), "tanh", {a}, [](Node& o) {
    accumulate(parent(o, 0), (o.grad.array() * (1.0 - o.value.array().square())).matrix());
  });
}

Tensor softmax(const Tensor& a) {
  Matrix y(a.rows(), a.cols());
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    const double m = a.value().row(r).maxCoeff();
    y.row(r) = (a.value().row(r).array() - m).exp().matrix();
    y.row(r) /= y.row(r).sum();
  }
  return record(std::move(y), "softmax", {a}, [](Node& o) {
    const Vector dot = o.grad.cwiseProduct(o.value).rowwise().sum();
    Matrix g = o.grad;
    g.colwise() -= dot;
    accumulate(parent(o, 0), g.cwiseProduct(o.value));
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const Eigen::Index n = x.cols();
  if (gain.rows() != 1 || gain.cols() != n) shape_error("layer_norm gain", x, gain);
  if (bias.rows() != 1 || bias.cols() != n) shape_error("layer_norm bias", x, bias);
  Matrix xhat(x.rows(), n);
  Vector inv_std(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mu = x.value().row(r).mean();
    const RowVector centered = x.value().row(r).array() - mu;
    const double var = centered.squaredNorm() / static_cast<double>(n);
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = centered * inv_std(r);
  }
  Matrix y = xhat.array().rowwise() * gain.value().row(0).array();
  y.rowwise() += bias.value().row(0);
  return record(std::move(y), "layer_norm", {x, gain, bias},
                [xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& o) {
                  Node& px = parent(o, 0);
                  Node& pg = parent(o, 1);
                  Node& pb = parent(o, 2);
                  if (pg.requires_grad) accumulate(pg, o.grad.cwiseProduct(xhat).colwise().sum());
                  if (pb.requires_grad) accumulate(pb, o.grad.colwise().sum());
                  if (px.requires_grad) {
                    const double n = static_cast<double>(xhat.cols());
                    Matrix dxhat = o.grad.array().rowwise() * pg.value.row(0).array();
                    const Vector sum_d = dxhat.rowwise().sum();
                    const Vector sum_dx = dxhat.cwiseProduct(xhat).rowwise().sum();
                    Matrix dx(xhat.rows(), xhat.cols());
                    for (Eigen::Index r = 0; r < xhat.rows(); ++r)
                      dx.row(r) = (inv_std(r) / n) *
                                  (n * dxhat.row(r).array() - sum_d(r) - xhat.row(r).array() * sum_dx(r)).matrix();
                    accumulate(px, dx);
                  }
                });
}

Tensor glu(const Tensor& a) {
  if (a.cols() % 2 != 0) throw DataError("glu requires an even number of columns, got " + shape_str(a));
  const Eigen::Index c = a.cols() / 2;
  Matrix gate = logistic(a.value().rightCols(c));
  Matrix y = a.value().leftCols(c).cwiseProduct(gate);
  return record(std::move(y), "glu", {a}, [gate = std::move(gate), c](Node& o) {
    Node& p = parent(o, 0);
    Matrix g(p.value.rows(), 2 * c);
    g.leftCols(c) = o.grad.cwiseProduct(gate);
    g.rightCols(c) =
        (o.grad.array() * p.value.leftCols(c).array() * gate.array() * (1.0 - gate.array())).matrix();
    accumulate(p, g);
  });
}

Tensor embedding(const Tensor& table, const std::vector<int>& ids) {
  Matrix out(static_cast<Eigen::Index>(ids.size()), table.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= table.rows())
      throw DataError("embedding index " + std::to_string(ids[i]) + " out of range for table of " +
                      std::to_string(table.rows()) + " rows");
    out.row(static_cast<Eigen::Index>(i)) = table.value().row(ids[i]);
  }
  return record(std::move(out), "embedding", {table}, [ids](Node& o) {
    Node& p = parent(o, 0);
    Matrix g = Matrix::Zero(p.value.rows(), p.value.cols());
    for (std::size_t i = 0; i < ids.size(); ++i) g.row(ids[i]) += o.grad.row(static_cast<Eigen::Index>(i));
    accumulate(p, g);
  });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DataError("concat_rows of nothing");
  Eigen::Index rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != parts[0].cols()) shape_error("concat_rows", parts[0], p);
    rows += p.rows();
  }
  Matrix out(rows, parts[0].cols());
  std::vector<Eigen::Index> offsets;
  Eigen::Index r = 0;
  for (const auto& p : parts) {
    offsets.push_back(r);
    out.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  return record(std::move(out), "concat_rows", parts, [offsets](Node& o) {
    for (std::size_t i = 0; i < o.parents.size(); ++i) {
      Node& p = *o.parents[i];
      if (p.requires_grad) accumulate(p, o.grad.middleRows(offsets[i], p.value.rows()));
    }
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DataError("concat_cols of nothing");
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != parts[0].rows()) shape_error("concat_cols", parts[0], p);
    cols += p.cols();
  }
  Matrix out(parts[0].rows(), cols);
  std::vector<Eigen::Index> offsets;
  Eigen::Index c = 0;
  for (const auto& p : parts) {
    offsets.push_back(c);
    out.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  return record(std::move(out), "concat_cols", parts, [offsets](Node& o) {
    for (std::size_t i = 0; i < o.parents.size(); ++i) {
      Node& p = *o.parents[i];
      if (p.requires_grad) accumulate(p, o.grad.middleCols(offsets[i], p.value.cols()));
    }
  });
}

Tensor slice_rows(const Tensor& a, Eigen::Index begin, Eigen::Index end) {
  if (begin < 0 || end > a.rows() || begin >= end) throw DataError("slice_rows: bad range for " + shape_str(a));
  return record(a.value().middleRows(begin, end - begin), "slice_rows", {a}, [begin](Node& o) {
    Node& p = parent(o, 0);
    Matrix g = Matrix::Zero(p.value.rows(), p.value.cols());
    g.middleRows(begin, o.grad.rows()) = o.grad;
    accumulate(p, g);
  });
}

Tensor slice_cols(const Tensor& a, Eigen::Index begin, Eigen::Index end) {
  if (begin < 0 || end > a.cols() || begin >= end) throw DataError("slice_cols: bad range for " + shape_str(a));
  return record(a.value().middleCols(begin, end - begin), "slice_cols", {a}, [begin](Node& o) {
    Node& p = parent(o, 0);
    Matrix g = Matrix::Zero(p.value.rows(), p.value.cols());
    g.middleCols(begin, o.grad.cols()) = o.grad;
    accumulate(p, g);
  });
}

Tensor dropout(const Tensor& a, double p, std::uint64_t seed) {
  if (!(p >= 0.0 && p < 1.0)) throw UsageError("dropout probability must lie in [0, 1)");
  if (p == 0.0) return a;
  Rng rng(seed);
  Matrix keep(a.rows(), a.cols());
  const double factor = 1.0 / (1.0 - p);
  for (Eigen::Index i = 0; i < keep.size(); ++i) keep.data()[i] = rng.uniform01() >= p ? factor : 0.0;
  Matrix y = a.value().cwiseProduct(keep);
  return record(std::move(y), "dropout", {a},
                [keep = std::move(keep)](Node& o) { accumulate(parent(o, 0), o.grad.cwiseProduct(keep)); });
}

namespace {

// Row t of the result holds the kernel window centred on input row t.
Matrix im2col(const Matrix& x, int kernel) {
  const Eigen::Index L = x.rows(), C = x.cols();
  const int pad = kernel / 2;
  Matrix col = Matrix::Zero(L, kernel * C);
  for (Eigen::Index t = 0; t < L; ++t)
    for (int j = 0; j < kernel; ++j) {
      const Eigen::Index src = t + j - pad;
      if (src >= 0 && src < L) col.block(t, j * C, 1, C) = x.row(src);
    }
  return col;
}

Matrix col2im(const Matrix& col, Eigen::Index L, Eigen::Index C, int kernel) {
  const int pad = kernel / 2;
  Matrix x = Matrix::Zero(L, C);
  for (Eigen::Index t = 0; t < L; ++t)
    for (int j = 0; j < kernel; ++j) {
      const Eigen::Index src = t + j - pad;
      if (src >= 0 && src < L) x.row(src) += col.block(t, j * C, 1, C);
    }
  return x;
}

void check_kernel(int kernel) {
  if (kernel < 1 || kernel % 2 == 0) throw DataError("convolution kernel must be odd and positive");
}

}  // namespace

Tensor conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias, int kernel) {
  check_kernel(kernel);
  if (weight.rows() != kernel * x.cols()) shape_error("conv1d weight", x, weight);
  if (bias.rows() != 1 || bias.cols() != weight.cols()) shape_error("conv1d bias", weight, bias);
  Matrix col = im2col(x.value(), kernel);
  Matrix y = col * weight.value();
  y.rowwise() += bias.value().row(0);
  return record(std::move(y), "conv1d", {x, weight, bias}, [col = std::move(col), kernel](Node& o) {
    Node& px = parent(o, 0);
    Node& pw = parent(o, 1);
    Node& pb = parent(o, 2);
    if (pw.requires_grad) accumulate(pw, col.transpose() * o.grad);
    if (pb.requires_grad) accumulate(pb, o.grad.colwise().sum());
    if (px.requires_grad)
      accumulate(px, col2im(o.grad * pw.value.transpose(), px.value.rows(), px.value.cols(), kernel));
  });
}

Tensor depthwise_conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  const int kernel = static_cast<int>(weight.rows());
  check_kernel(kernel);
  if (weight.cols() != x.cols()) shape_error("depthwise_conv1d weight", x, weight);
  if (bias.rows() != 1 || bias.cols() != x.cols()) shape_error("depthwise_conv1d bias", x, bias);
  const Eigen::Index L = x.rows();
  const int pad = kernel / 2;
  Matrix y(L, x.cols());
  y.rowwise() = bias.value().row(0);
  for (Eigen::Index t = 0; t < L; ++t)
    for (int j = 0; j < kernel; ++j) {
      const Eigen::Index src = t + j - pad;
      if (src >= 0 && src < L) y.row(t) += x.value().row(src).cwiseProduct(weight.value().row(j));
    }
  return record(std::move(y), "depthwise_conv1d", {x, weight, bias}, [kernel, pad](Node& o) {
    Node& px = parent(o, 0);
    Node& pw = parent(o, 1);
    Node& pb = parent(o, 2);
    const Eigen::Index L = px.value.rows();
    Matrix dx = Matrix::Zero(L, px.value.cols());
    Matrix dw = Matrix::Zero(kernel, px.value.cols());
    for (Eigen::Index t = 0; t < L; ++t)
      for (int j = 0; j < kernel; ++j) {
        const Eigen::Index src = t + j - pad;
        if (src < 0 || src >= L) continue;
        dx.row(src) += o.grad.row(t).cwiseProduct(pw.value.row(j));
        dw.row(j) += o.grad.row(t).cwiseProduct(px.value.row(src));
      }
    accumulate(px, dx);
    accumulate(pw, dw);
    if (pb.requires_grad) accumulate(pb, o.grad.colwise().sum());
  });
}

Tensor replace_rows(const Tensor& x, const std::vector<int>& rows, const Tensor& vector) {
  if (vector.rows() != 1 || vector.cols() != x.cols()) shape_error("replace_rows", x, vector);
  auto idx = checked_rows(rows, x.rows(), "replace_rows");
  Matrix y = x.value();
  for (int r : idx) y.row(r) = vector.value().row(0);
  return record(std::move(y), "replace_rows", {x, vector}, [idx](Node& o) {
    Node& px = parent(o, 0);
    Node& pv = parent(o, 1);
    if (px.requires_grad) {
      Matrix g = o.grad;
      for (int r : idx) g.row(r).setZero();
      accumulate(px, g);
    }
    if (pv.requires_grad) {
      RowVector g = RowVector::Zero(o.grad.cols());
      for (int r : idx) g += o.grad.row(r);
      accumulate(pv, g);
    }
  });
}

Tensor sum(const Tensor& a) {
  return record(Matrix::Constant(1, 1, a.value().sum()), "sum", {a}, [](Node& o) {
    Node& p = parent(o, 0);
    accumulate(p, Matrix::Constant(p.value.rows(), p.value.cols(), o.grad(0, 0)));
  });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

namespace {

template <typename Elementwise, typename Derivative>
Tensor masked_loss(const Tensor& pred, const Tensor& target, const std::vector<int>& rows, const char* op,
                   Elementwise f, Derivative df) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) shape_error(op, pred, target);
  if (rows.empty()) throw DataError(std::string(op) + ": empty mask");
  auto idx = checked_rows(rows, pred.rows(), op);
  const double n = static_cast<double>(idx.size() * pred.cols());
  double total = 0.0;
  for (int r : idx) total += (pred.value().row(r) - target.value().row(r)).unaryExpr(f).sum();
  return record(Matrix::Constant(1, 1, total / n), op, {pred, target}, [idx, n, df](Node& o) {
    Node& pp = parent(o, 0);
    Node& pt = parent(o, 1);
    Matrix g = Matrix::Zero(pp.value.rows(), pp.value.cols());
    const double scale = o.grad(0, 0) / n;
    for (int r : idx) g.row(r) = (pp.value.row(r) - pt.value.row(r)).unaryExpr(df) * scale;
    if (pp.requires_grad) accumulate(pp, g);
    if (pt.requires_grad) accumulate(pt, -g);
  });
}

}  // namespace

Tensor l1_loss(const Tensor& pred, const Tensor& target, const std::vector<int>& rows) {
  return masked_loss(
      pred, target, rows, "l1_loss", [](double d) { return std::abs(d); },
      [](double d) { return d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0); });
}

Tensor l2_loss(const Tensor& pred, const Tensor& target, const std::vector<int>& rows) {
  return masked_loss(
      pred, target, rows, "l2_loss", [](double d) { return d * d; }, [](double d) { return 2.0 * d; });
}

AttentionResult scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& out_weight,
                                     const Tensor& out_bias, int heads) {
  const Eigen::Index d = q.cols();
  if (heads < 1 || d % heads != 0)
    throw DataError("attention dim " + std::to_string(d) + " not divisible by " + std::to_string(heads) + " heads");
  if (k.cols() != d || v.cols() != d) shape_error("attention", q, k);
  if (k.rows() != v.rows()) shape_error("attention", k, v);
  const Eigen::Index dh = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  AttentionResult result;
  std::vector<Tensor> per_head;
  for (int h = 0; h < heads; ++h) {
    const Tensor qh = slice_cols(q, h * dh, (h + 1) * dh);
    const Tensor kh = slice_cols(k, h * dh, (h + 1) * dh);
    const Tensor vh = slice_cols(v, h * dh, (h + 1) * dh);
    const Tensor w = softmax(scale(matmul(qh, transpose(kh)), inv_sqrt));
    result.weights.push_back(w.value());
    per_head.push_back(matmul(w, vh));
  }
  result.output = add(matmul(concat_cols(per_head), out_weight), out_bias);
  return result;
}

Tensor ParameterStore::add(const std::string& name, Matrix value) {
  if (contains(name)) throw DataError("duplicate parameter name: " + name);
  index_.emplace(name, entries_.size());
  entries_.emplace_back(name, Tensor::parameter(std::move(value)));
  return entries_.back().second;
}

Tensor& ParameterStore::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw DataError("unknown parameter: " + name);
  return entries_[it->second].second;
}

const Tensor& ParameterStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw DataError("unknown parameter: " + name);
  return entries_[it->second].second;
}

void ParameterStore::zero_grad() {
  for (auto& [name, t] : entries_) t.zero_grad();
}

std::size_t ParameterStore::num_scalars() const {
  std::size_t n = 0;
  for (const auto& [name, t] : entries_) n += static_cast<std::size_t>(t.value().size());
  return n;
}

}  // namespace a3t::ad
