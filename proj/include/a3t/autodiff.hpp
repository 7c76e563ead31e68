#pragma once

// Dense reverse-mode differentiation over row-major matrices. Every
// activation in the model is a (positions x features) matrix, so tensors are
// two-dimensional; a scalar is 1 x 1.

#include "a3t/types.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace a3t::ad {

struct Node {
  Matrix value;
  Matrix grad;  // empty until a gradient reaches this node
  bool requires_grad = false;
  bool leaf = true;
  bool consumed = false;  // set on the loss node by backward()
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor constant(Matrix value);
  static Tensor parameter(Matrix value);
  static Tensor scalar(double value) { return constant(Matrix::Constant(1, 1, value)); }

  bool defined() const { return static_cast<bool>(node_); }
  const Matrix& value() const { return node_->value; }
  Matrix& mutable_value() { return node_->value; }
  const Matrix& grad() const { return node_->grad; }
  Matrix& mutable_grad() { return node_->grad; }
  bool has_grad() const { return node_->grad.size() > 0; }
  bool requires_grad() const { return node_->requires_grad; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  double item() const;

  /// Sets grad to zeros of the value's shape.
  void zero_grad();

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& shared() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Fills every reachable grad buffer with d(loss)/d(node), then releases the
/// recorded graph. Parameter gradients accumulate into existing buffers.
void backward(const Tensor& loss);

// Primitives. Each validates shapes (DataError) and rejects non-finite
// results (NumericError).
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
/// Elementwise sum; b may be a 1 x C row broadcast over the rows of a.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor swish(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor softmax(const Tensor& a);  // along each row
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);
Tensor glu(const Tensor& a);  // first half of the columns gated by sigmoid of the second
Tensor embedding(const Tensor& table, const std::vector<int>& ids);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& a, Eigen::Index begin, Eigen::Index end);
Tensor slice_cols(const Tensor& a, Eigen::Index begin, Eigen::Index end);
Tensor dropout(const Tensor& a, double p, std::uint64_t seed);
/// "Same"-padded 1-D convolution over rows. weight is (kernel * C_in) x C_out
/// with row j * C_in + c holding tap j of input channel c.
Tensor conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias, int kernel);
/// Depthwise variant: weight is kernel x C.
Tensor depthwise_conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias);
/// Rows `rows` of x replaced by the 1 x C vector.
Tensor replace_rows(const Tensor& x, const std::vector<int>& rows, const Tensor& vector);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// Mean of |pred - target| over the listed rows and every column.
Tensor l1_loss(const Tensor& pred, const Tensor& target, const std::vector<int>& rows);
/// Mean of (pred - target)^2 over the listed rows and every column.
Tensor l2_loss(const Tensor& pred, const Tensor& target, const std::vector<int>& rows);

struct AttentionResult {
  Tensor output;
  std::vector<Matrix> weights;  // one L_q x L_k matrix per head
};

/// Multi-head scaled dot-product attention over already projected q, k, v,
/// followed by the output projection. No causal mask.
AttentionResult scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& out_weight,
                                     const Tensor& out_bias, int heads);

/// Named parameters in insertion order.
class ParameterStore {
 public:
  Tensor add(const std::string& name, Matrix value);
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  void zero_grad();
  std::size_t size() const { return entries_.size(); }
  std::size_t num_scalars() const;

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace a3t::ad
