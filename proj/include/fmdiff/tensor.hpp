#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fmdiff {

using Index = Eigen::Index;
using Shape = std::vector<Index>;
using RowMatrixXd = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class Tape;

/// Raised when operand shapes do not conform. The message names both shapes.
class ShapeError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

std::string to_string(const Shape& shape);
Index numel_of(const Shape& shape);

/// Dense row-major array of doubles, optionally recorded on a Tape.
///
/// The payload is shared and immutable, so copying a Tensor is cheap and
/// tapeless tensors may be shared freely between threads. A Tensor that
/// carries a tape handle must not outlive its Tape.
class Tensor {
public:
  Tensor();
  Tensor(Shape shape, Eigen::ArrayXd data);

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);
  static Tensor vector(std::initializer_list<double> values);
  static Tensor vector(const Eigen::VectorXd& values);
  static Tensor matrix(const Eigen::Ref<const Eigen::MatrixXd>& m);

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  Index dim(int axis) const;
  Index numel() const { return data_->size(); }

  const Eigen::ArrayXd& data() const { return *data_; }
  double operator[](Index i) const { return (*data_)[i]; }
  double item() const;

  /// Row-major matrix view; rank must be 2.
  Eigen::Map<const RowMatrixXd> as_matrix() const;
  RowMatrixXd to_matrix() const { return as_matrix(); }

  bool on_tape() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  std::size_t node() const { return node_; }

  /// Same values, no tape handle.
  Tensor detach() const;

private:
  friend class Tape;
  Shape shape_;
  std::shared_ptr<const Eigen::ArrayXd> data_;
  Tape* tape_ = nullptr;
  std::size_t node_ = 0;
};

/// Gradient of a scalar loss with respect to the leaves of one tape.
class Gradients {
public:
  Gradients() = default;
  Gradients(std::vector<Eigen::ArrayXd> grads, std::vector<Shape> shapes, std::vector<std::size_t> leaves);

  /// Gradient for a leaf; zeros when the leaf did not influence the loss.
  Tensor operator[](const Tensor& leaf) const;
  const std::vector<std::size_t>& leaves() const { return leaves_; }

private:
  std::vector<Eigen::ArrayXd> grads_;
  std::vector<Shape> shapes_;
  std::vector<std::size_t> leaves_;
};

/// Append-only record of primitive operations for reverse-mode differentiation.
///
/// Nodes are stored in recording order, which is a topological order.
/// One tape serves one training step; it is not copyable and must stay at a
/// fixed address while tensors refer to it.
class Tape {
public:
  /// Receives the output gradient and one slot per input; slots of inputs
  /// that are not on the tape are null.
  using Backward = std::function<void(const Eigen::ArrayXd& grad_out, std::span<Eigen::ArrayXd*> grad_in)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor leaf(const Tensor& value);
  std::size_t size() const { return nodes_.size(); }

  Gradients backward(const Tensor& loss);

  /// Used by op implementations. Returns a tapeless tensor if no input is taped.
  static Tensor record(Shape shape, Eigen::ArrayXd value, std::initializer_list<const Tensor*> inputs, Backward backward);
  static Tensor record(Shape shape, Eigen::ArrayXd value, std::span<const Tensor> inputs, Backward backward);

private:
  struct Node {
    Shape shape;
    std::vector<std::ptrdiff_t> parents; // -1 for inputs without a tape handle
    Backward backward;
    bool leaf = false;
  };
  static Tensor record_impl(Shape shape, Eigen::ArrayXd value, std::span<const Tensor* const> inputs, Backward backward);
  std::vector<Node> nodes_;
};

// Elementwise binary ops. Operands either share a shape, or one operand's
// shape (ignoring its leading unit axes) is a suffix of the other's.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& x, double factor);
Tensor shift(const Tensor& x, double offset);
Tensor neg(const Tensor& x);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);
Tensor concat(std::span<const Tensor> parts, int axis);
Tensor concat(std::initializer_list<Tensor> parts, int axis);
Tensor slice(const Tensor& x, int axis, Index begin, Index end);

Tensor sum(const Tensor& x);
Tensor sum(const Tensor& x, int axis);
Tensor mean(const Tensor& x);
/// Inclusive prefix sum along the last axis.
Tensor cumsum(const Tensor& x);

Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor sqrt(const Tensor& x);
Tensor square(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor tanh(const Tensor& x);

/// Rows of `src` (axis 0) selected by `index`.
Tensor gather(const Tensor& src, std::span<const Index> index);
/// `target` plus `values` accumulated into rows `index` (axis 0); duplicates add.
Tensor scatter_add(const Tensor& target, std::span<const Index> index, const Tensor& values);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& x) { return neg(x); }
inline Tensor operator*(double s, const Tensor& x) { return scale(x, s); }
inline Tensor operator*(const Tensor& x, double s) { return scale(x, s); }
inline Tensor operator+(const Tensor& x, double s) { return shift(x, s); }
inline Tensor operator-(const Tensor& x, double s) { return shift(x, -s); }

} // namespace fmdiff
