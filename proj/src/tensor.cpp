#include "fmdiff/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace fmdiff {

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Index numel_of(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

namespace {

int normalize_axis(int axis, int rank) {
  int a = axis < 0 ? axis + rank : axis;
  if (a < 0 || a >= rank) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for rank " + std::to_string(rank));
  }
  return a;
}

[[noreturn]] void mismatch(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a) + " vs " + to_string(b));
}

Shape strip_leading_ones(const Shape& s) {
  auto it = std::find_if(s.begin(), s.end(), [](Index d) { return d != 1; });
  return Shape(it, s.end());
}

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.begin(), small.end(), big.end() - static_cast<std::ptrdiff_t>(small.size()));
}

struct BroadcastPlan {
  Shape out;
  Index n = 0;
};

BroadcastPlan plan_broadcast(const char* op, const Shape& a, const Shape& b) {
  if (a == b) return {a, numel_of(a)};
  const Index na = numel_of(a);
  const Index nb = numel_of(b);
  if (na <= nb && is_suffix(strip_leading_ones(a), b)) return {b, nb};
  if (nb <= na && is_suffix(strip_leading_ones(b), a)) return {a, na};
  mismatch(op, a, b);
}

Eigen::ArrayXd expand(const Eigen::ArrayXd& v, Index n) {
  if (v.size() == n) return v;
  return v.replicate(n / v.size(), 1);
}

// Sums a full-size gradient back down to a (possibly broadcast) operand.
Eigen::ArrayXd reduce_to(const Eigen::ArrayXd& g, Index s) {
  if (g.size() == s) return g;
  return Eigen::Map<const Eigen::ArrayXXd>(g.data(), s, g.size() / s).rowwise().sum().transpose();
}

struct AxisSplit {
  Index outer = 1;
  Index len = 1;
  Index inner = 1;
};

AxisSplit split_at(const Shape& s, int axis) {
  AxisSplit r;
  for (int i = 0; i < axis; ++i) r.outer *= s[i];
  r.len = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

template <typename F, typename D>
Tensor unary(const Tensor& x, F&& f, D&& dfdx) {
  Eigen::ArrayXd y = f(x.data());
  Tensor out_value(x.shape(), y);
  return Tape::record(x.shape(), std::move(y), {&x},
                      [x, out_value, dfdx](const Eigen::ArrayXd& g, std::span<Eigen::ArrayXd*> gi) {
                        *gi[0] += g * dfdx(x.data(), out_value.data());
                      });
}

} // namespace

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor() : shape_{0}, data_(std::make_shared<const Eigen::ArrayXd>()) {}

Tensor::Tensor(Shape shape, Eigen::ArrayXd data) : shape_(std::move(shape)) {
  for (Index d : shape_) {
    if (d < 0) throw ShapeError("negative extent in shape " + to_string(shape_));
  }
  if (numel_of(shape_) != data.size()) {
    throw ShapeError("shape " + to_string(shape_) + " does not hold " + std::to_string(data.size()) + " values");
  }
  data_ = std::make_shared<const Eigen::ArrayXd>(std::move(data));
}

Tensor Tensor::zeros(Shape shape) {
  const Index n = numel_of(shape);
  return Tensor(std::move(shape), Eigen::ArrayXd::Zero(n));
}

Tensor Tensor::full(Shape shape, double value) {
  const Index n = numel_of(shape);
  return Tensor(std::move(shape), Eigen::ArrayXd::Constant(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor({}, Eigen::ArrayXd::Constant(1, value)); }

Tensor Tensor::vector(std::initializer_list<double> values) {
  const auto n = static_cast<Index>(values.size());
  Eigen::ArrayXd d(n);
  std::copy(values.begin(), values.end(), d.data());
  return Tensor({n}, std::move(d));
}

Tensor Tensor::vector(const Eigen::VectorXd& values) { return Tensor({values.size()}, values.array()); }

Tensor Tensor::matrix(const Eigen::Ref<const Eigen::MatrixXd>& m) {
  Eigen::ArrayXd d(m.size());
  Eigen::Map<RowMatrixXd>(d.data(), m.rows(), m.cols()) = m;
  return Tensor({m.rows(), m.cols()}, std::move(d));
}

Index Tensor::dim(int axis) const { return shape_[normalize_axis(axis, rank())]; }

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape_));
  return (*data_)[0];
}

Eigen::Map<const RowMatrixXd> Tensor::as_matrix() const {
  if (rank() != 2) throw ShapeError("as_matrix() needs rank 2, got " + to_string(shape_));
  return Eigen::Map<const RowMatrixXd>(data_->data(), shape_[0], shape_[1]);
}

Tensor Tensor::detach() const {
  Tensor t = *this;
  t.tape_ = nullptr;
  t.node_ = 0;
  return t;
}

// ---------------------------------------------------------------------------
// Gradients / Tape

Gradients::Gradients(std::vector<Eigen::ArrayXd> grads, std::vector<Shape> shapes, std::vector<std::size_t> leaves)
    : grads_(std::move(grads)), shapes_(std::move(shapes)), leaves_(std::move(leaves)) {}

Tensor Gradients::operator[](const Tensor& leaf) const {
  if (!leaf.on_tape() || leaf.node() >= grads_.size() ||
      std::find(leaves_.begin(), leaves_.end(), leaf.node()) == leaves_.end()) {
    throw std::invalid_argument("gradient requested for a tensor that is not a leaf of this tape");
  }
  const auto& g = grads_[leaf.node()];
  if (g.size() == 0) return Tensor::zeros(shapes_[leaf.node()]);
  return Tensor(shapes_[leaf.node()], g);
}

Tensor Tape::leaf(const Tensor& value) {
  Node n;
  n.shape = value.shape();
  n.leaf = true;
  nodes_.push_back(std::move(n));
  Tensor t = value.detach();
  t.tape_ = this;
  t.node_ = nodes_.size() - 1;
  return t;
}

Tensor Tape::record(Shape shape, Eigen::ArrayXd value, std::initializer_list<const Tensor*> inputs, Backward backward) {
  return record_impl(std::move(shape), std::move(value), std::span<const Tensor* const>(inputs.begin(), inputs.size()),
                     std::move(backward));
}

Tensor Tape::record(Shape shape, Eigen::ArrayXd value, std::span<const Tensor> inputs, Backward backward) {
  std::vector<const Tensor*> ptrs;
  ptrs.reserve(inputs.size());
  for (const auto& t : inputs) ptrs.push_back(&t);
  return record_impl(std::move(shape), std::move(value), ptrs, std::move(backward));
}

Tensor Tape::record_impl(Shape shape, Eigen::ArrayXd value, std::span<const Tensor* const> inputs, Backward backward) {
  Tape* tape = nullptr;
  for (const Tensor* in : inputs) {
    if (!in->on_tape()) continue;
    if (tape && tape != in->tape()) throw std::logic_error("operands recorded on different tapes");
    tape = in->tape();
  }
  Tensor out(shape, std::move(value));
  if (!tape) return out;

  Node n;
  n.shape = std::move(shape);
  n.backward = std::move(backward);
  n.parents.reserve(inputs.size());
  for (const Tensor* in : inputs) {
    n.parents.push_back(in->on_tape() ? static_cast<std::ptrdiff_t>(in->node()) : -1);
  }
  tape->nodes_.push_back(std::move(n));
  out.tape_ = tape;
  out.node_ = tape->nodes_.size() - 1;
  return out;
}

Gradients Tape::backward(const Tensor& loss) {
  if (loss.tape() != this) throw std::invalid_argument("backward: loss is not recorded on this tape");
  if (loss.numel() != 1) throw ShapeError("backward: loss must be scalar, got shape " + to_string(loss.shape()));

  std::vector<Eigen::ArrayXd> grads(nodes_.size());
  grads[loss.node()] = Eigen::ArrayXd::Ones(1);
  std::vector<Eigen::ArrayXd*> slots;
  for (std::size_t i = loss.node() + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (node.leaf || grads[i].size() == 0 || !node.backward) continue;
    slots.assign(node.parents.size(), nullptr);
    for (std::size_t k = 0; k < node.parents.size(); ++k) {
      const auto p = node.parents[k];
      if (p < 0) continue;
      auto& gp = grads[static_cast<std::size_t>(p)];
      if (gp.size() == 0) gp = Eigen::ArrayXd::Zero(numel_of(nodes_[p].shape));
      slots[k] = &gp;
    }
    node.backward(grads[i], slots);
    grads[i] = Eigen::ArrayXd(); // interior gradients are not kept
  }

  std::vector<std::size_t> leaves;
  std::vector<Shape> shapes(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].leaf) {
      leaves.push_back(i);
      shapes[i] = nodes_[i].shape;
    }
  }
  return Gradients(std::move(grads), std::move(shapes), std::move(leaves));
}

// ---------------------------------------------------------------------------
// Elementwise binary

Tensor add(const Tensor& a, const Tensor& b) {
  auto p = plan_broadcast("add", a.shape(), b.shape());
  Eigen::ArrayXd y = expand(a.data(), p.n) + expand(b.data(), p.n);
  const Index sa = a.numel(), sb = b.numel();
  return Tape::record(p.out, std::move(y), {&a, &b}, [sa, sb](const Eigen::ArrayXd& g, std::span<Eigen::ArrayXd*> gi) {
    if (gi[0]) *gi[0] += reduce_to(g, sa);
    if (gi[1]) *gi[1] += reduce_to(g, sb);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  auto p = plan_broadcast("sub", a.shape(), b.shape());
  Eigen::ArrayXd y = expand(a.data(), p.n) - expand(b.data(), p.n);
  const Index sa = a.numel(), sb = b.numel();
  return Tape::record(p.out, std::move(y), {&a, &b}, [sa, sb](const Eigen::ArrayXd& g, std::span<Eigen::ArrayXd*> gi) {
    if (gi[0]) *gi[0] += reduce_to(g, sa);
    if (gi[1]) *gi[1] -= reduce_to(g, sb);
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  auto p = plan_broadcast("mul", a.shape(), b.shape());
  Eigen::ArrayXd y = expand(a.data(), p.n) * expand(b.data(), p.n);
  const Index n = p.n;
  return Tape::record(p.out, std::move(y), {&a, &b}, [a, b, n](const Eigen::ArrayXd& g, std::span<Eigen::ArrayXd*> gi) {
    if (gi[0]) *gi[0] += reduce_to(g * expand(b.data(), n), a.numel());
    if (gi[1]) *gi[1] += reduce_to(g * expand(a.data(), n), b.numel());
  });
}

Tensor div(const Tensor& a, const Tensor& b) {
  auto p = plan_broadcast("div", a.shape(), b.shape());
  Eigen::ArrayXd y = expand(a.data(), p.n) / expand(b.data(), p.n);
  const Index n = p.n;
  return Tape::record(p.out, std::move(y), {&a, &b}, [a, b, n](const Eigen::ArrayXd& g, std::span<Eigen::ArrayXd*> gi) {
    const Eigen::ArrayXd bb = expand(b.data(), n);
    if (gi[0]) *gi[0] += reduce_to(g / bb, a.numel());
    if (gi[1]) *gi[1] -= reduce_to(g * expand(a.data(), n) / bb.square(), b.numel());
  });
}

Tensor scale(const Tensor& x, double factor) {
  Eigen::ArrayXd y = x.data() * factor;
  return Tape::record(x.shape(), std::move(y), {&x},
                      [factor](const Eigen::ArrayXd& g, std::span<Eigen::ArrayXd*> gi) { *gi[0] += g * factor; });
}

Tensor shift(const Tensor& x, double offset) {
  Eigen::ArrayXd y = x.data() + offset;
  return Tape::record(x.shape(), std::move(y), {&x},
                      [](const Eigen::ArrayXd& g, std::span<Eigen::ArrayXd*> gi) { *gi[0] += g; });
}

Tensor neg(const Tensor& x) { return scale(x, -1.0); }

// ---------------------------------------------------------------------------
// Linear algebra and layout

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) mismatch("matmul", a.shape(), b.shape());
  const Index m = a.dim(0), n = b.dim(1);
  Eigen::ArrayXd y(m * n);
  Eigen::Map<RowMatrixXd>(y.data(), m, n).noalias() = a.as_matrix() * b.as_matrix();
  return Tape::record({m, n}, std::move(y), {&a, &b}, [a, b, m, n](const Eigen::ArrayXd& g, std::span<Eigen::ArrayXd*> gi) {
    Eigen::Map<const RowMatrixXd> G(g.data(), m, n);
    if (gi[0]) Eigen::Map<RowMatrixXd>(gi[0]->data(), m, a.dim(1)).noalias() += G * b.as_matrix().transpose();
    if (gi[1]) Eigen::Map<RowMatrixXd>(gi[1]->data(), b.dim(0), n).noalias() += a.as_matrix().transpose() * G;
  });
}

Tensor transpose(const Tensor& x) {
  if (x.rank() != 2) throw ShapeError("transpose needs rank 2, got " + to_string(x.shape()));
  const Index r = x.dim(0), c = x.dim(1);
  Eigen::ArrayXd y(x.numel());
  Eigen::Map<RowMatrixXd>(y.data(), c, r) = x.as_matrix().transpose();
  return Tape::record({c, r}, std::move(y), {&x}, [r, c](const Eigen::ArrayXd& g, std::span<Eigen::ArrayXd*> gi) {
    Eigen::Map<RowMatrixXd>(gi[0]->data(), r, c) += Eigen::Map<const RowMatrixXd>(g.data(), c, r).transpose();
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel_of(shape) != x.numel()) mismatch("reshape", x.shape(), shape);
  return Tape::record(std::move(shape), x.data(), {&x},
                      [](const Eigen::ArrayXd& g, std::span<Eigen::ArrayXd*> gi) { *gi[0] += g; });
}

Tensor concat(std::span<const Tensor> parts, int axis) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  const Shape& first = parts[0].shape();
  const int ax = normalize_axis(axis, static_cast<int>(first.size()));
  Shape out = first;
  out[ax] = 0;
  std::vector<Index> lens;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != first.size()) mismatch("concat", first, s);
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (static_cast<int>(i) != ax && s[i] != first[i]) mismatch("concat", first, s);
    }
    out[ax] += s[ax];
    lens.push_back(s[ax]);
  }
  const AxisSplit sp = split_at(out, ax);
  Eigen::ArrayXd y(numel_of(out));
  Index offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Index block = lens[k] * sp.inner;
    const auto& src = parts[k].data();
    for (Index o = 0; o < sp.outer; ++o) {
      y.segment(o * sp.len * sp.inner + offset, block) = src.segment(o * block, block);
    }
    offset += block;
  }
  return Tape::record(out, std::move(y), parts, [sp, lens](const Eigen::ArrayXd& g, std::span<Eigen::ArrayXd*> gi) {
    Index offset = 0;
    for (std::size_t k = 0; k < lens.size(); ++k) {
      const Index block = lens[k] * sp.inner;
      if (gi[k]) {
        for (Index o = 0; o < sp.outer; ++o) {
          gi[k]->segment(o * block, block) += g.segment(o * sp.len * sp.inner + offset, block);
        }
      }
      offset += block;
    }
  });
}

Tensor concat(std::initializer_list<Tensor> parts, int axis) {
  return concat(std::span<const Tensor>(parts.begin(), parts.size()), axis);
}

Tensor slice(const Tensor& x, int axis, Index begin, Index end) {
  const int ax = normalize_axis(axis, x.rank());
  if (begin < 0 || end < begin || end > x.shape()[ax]) {
    throw ShapeError("slice [" + std::to_string(begin) + ", " + std::to_string(end) + ") out of range for axis " +
                     std::to_string(ax) + " of " + to_string(x.shape()));
  }
  const AxisSplit sp = split_at(x.shape(), ax);
  Shape out = x.shape();
  out[ax] = end - begin;
  const Index block = (end - begin) * sp.inner;
  Eigen::ArrayXd y(sp.outer * block);
  for (Index o = 0; o < sp.outer; ++o) {
    y.segment(o * block, block) = x.data().segment(o * sp.len * sp.inner + begin * sp.inner, block);
  }
  return Tape::record(out, std::move(y), {&x}, [sp, begin, block](const Eigen::ArrayXd& g, std::span<Eigen::ArrayXd*> gi) {
    for (Index o = 0; o < sp.outer; ++o) {
      gi[0]->segment(o * sp.len * sp.inner + begin * sp.inner, block) += g.segment(o * block, block);
    }
  });
}

// ---------------------------------------------------------------------------
// Reductions

Tensor sum(const Tensor& x) {
  Eigen::ArrayXd y = Eigen::ArrayXd::Constant(1, x.data().sum());
  return Tape::record({}, std::move(y), {&x},
                      [](const Eigen::ArrayXd& g, std::span<Eigen::ArrayXd*> gi) { *gi[0] += g[0]; });
}

Tensor sum(const Tensor& x, int axis) {
  const int ax = normalize_axis(axis, x.rank());
  const AxisSplit sp = split_at(x.shape(), ax);
  Shape out = x.shape();
  out.erase(out.begin() + ax);
  Eigen::ArrayXd y = Eigen::ArrayXd::Zero(sp.outer * sp.inner);
  for (Index o = 0; o < sp.outer; ++o) {
    for (Index l = 0; l < sp.len; ++l) {
      y.segment(o * sp.inner, sp.inner) += x.data().segment((o * sp.len + l) * sp.inner, sp.inner);
    }
  }
  return Tape::record(out, std::move(y), {&x}, [sp](const Eigen::ArrayXd& g, std::span<Eigen::ArrayXd*> gi) {
    for (Index o = 0; o < sp.outer; ++o) {
      for (Index l = 0; l < sp.len; ++l) {
        gi[0]->segment((o * sp.len + l) * sp.inner, sp.inner) += g.segment(o * sp.inner, sp.inner);
      }
    }
  });
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw ShapeError("mean of empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor cumsum(const Tensor& x) {
  if (x.rank() == 0) return reshape(x, {});
  const Index len = x.shape().back();
  const Index rows = len ? x.numel() / len : 0;
  Eigen::ArrayXd y(x.numel());
  for (Index r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (Index j = 0; j < len; ++j) {
      acc += x[r * len + j];
      y[r * len + j] = acc;
    }
  }
  return Tape::record(x.shape(), std::move(y), {&x}, [rows, len](const Eigen::ArrayXd& g, std::span<Eigen::ArrayXd*> gi) {
    for (Index r = 0; r < rows; ++r) {
      double acc = 0.0;
      for (Index j = len; j-- > 0;) {
        acc += g[r * len + j];
        (*gi[0])[r * len + j] += acc;
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Elementwise unary

Tensor exp(const Tensor& x) {
  return unary(
      x, [](const Eigen::ArrayXd& v) -> Eigen::ArrayXd { return v.exp(); },
      [](const Eigen::ArrayXd&, const Eigen::ArrayXd& y) -> Eigen::ArrayXd { return y; });
}

Tensor log(const Tensor& x) {
  return unary(
      x, [](const Eigen::ArrayXd& v) -> Eigen::ArrayXd { return v.log(); },
      [](const Eigen::ArrayXd& v, const Eigen::ArrayXd&) -> Eigen::ArrayXd { return v.inverse(); });
}

Tensor sqrt(const Tensor& x) {
  return unary(
      x, [](const Eigen::ArrayXd& v) -> Eigen::ArrayXd { return v.sqrt(); },
      [](const Eigen::ArrayXd&, const Eigen::ArrayXd& y) -> Eigen::ArrayXd { return 0.5 / y; });
}

Tensor square(const Tensor& x) {
  return unary(
      x, [](const Eigen::ArrayXd& v) -> Eigen::ArrayXd { return v.square(); },
      [](const Eigen::ArrayXd& v, const Eigen::ArrayXd&) -> Eigen::ArrayXd { return 2.0 * v; });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, [](const Eigen::ArrayXd& v) -> Eigen::ArrayXd { return v.max(0.0); },
      [](const Eigen::ArrayXd& v, const Eigen::ArrayXd&) -> Eigen::ArrayXd { return (v > 0.0).cast<double>(); });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x, [](const Eigen::ArrayXd& v) -> Eigen::ArrayXd { return 1.0 / (1.0 + (-v).exp()); },
      [](const Eigen::ArrayXd&, const Eigen::ArrayXd& y) -> Eigen::ArrayXd { return y * (1.0 - y); });
}

Tensor softplus(const Tensor& x) {
  return unary(
      x, [](const Eigen::ArrayXd& v) -> Eigen::ArrayXd { return v.max(0.0) + (-v.abs()).exp().log1p(); },
      [](const Eigen::ArrayXd& v, const Eigen::ArrayXd&) -> Eigen::ArrayXd { return 1.0 / (1.0 + (-v).exp()); });
}

Tensor tanh(const Tensor& x) {
  return unary(
      x, [](const Eigen::ArrayXd& v) -> Eigen::ArrayXd { return v.tanh(); },
      [](const Eigen::ArrayXd&, const Eigen::ArrayXd& y) -> Eigen::ArrayXd { return 1.0 - y.square(); });
}

// ---------------------------------------------------------------------------
// Indexing

Tensor gather(const Tensor& src, std::span<const Index> index) {
  if (src.rank() < 1) throw ShapeError("gather needs rank >= 1, got " + to_string(src.shape()));
  const Index rows = src.dim(0);
  const Index row = rows ? src.numel() / rows : 0;
  Shape out = src.shape();
  out[0] = static_cast<Index>(index.size());
  Eigen::ArrayXd y(out[0] * row);
  for (std::size_t k = 0; k < index.size(); ++k) {
    const Index i = index[k];
    if (i < 0 || i >= rows) throw std::out_of_range("gather index " + std::to_string(i) + " outside [0, " + std::to_string(rows) + ")");
    y.segment(static_cast<Index>(k) * row, row) = src.data().segment(i * row, row);
  }
  std::vector<Index> idx(index.begin(), index.end());
  return Tape::record(out, std::move(y), {&src}, [idx, row](const Eigen::ArrayXd& g, std::span<Eigen::ArrayXd*> gi) {
    for (std::size_t k = 0; k < idx.size(); ++k) {
      gi[0]->segment(idx[k] * row, row) += g.segment(static_cast<Index>(k) * row, row);
    }
  });
}

Tensor scatter_add(const Tensor& target, std::span<const Index> index, const Tensor& values) {
  if (target.rank() < 1) throw ShapeError("scatter_add needs rank >= 1, got " + to_string(target.shape()));
  Shape expect = target.shape();
  expect[0] = static_cast<Index>(index.size());
  if (values.shape() != expect) mismatch("scatter_add", target.shape(), values.shape());
  const Index rows = target.dim(0);
  const Index row = rows ? target.numel() / rows : 0;
  Eigen::ArrayXd y = target.data();
  for (std::size_t k = 0; k < index.size(); ++k) {
    const Index i = index[k];
    if (i < 0 || i >= rows) throw std::out_of_range("scatter_add index " + std::to_string(i) + " outside [0, " + std::to_string(rows) + ")");
    y.segment(i * row, row) += values.data().segment(static_cast<Index>(k) * row, row);
  }
  std::vector<Index> idx(index.begin(), index.end());
  return Tape::record(target.shape(), std::move(y), {&target, &values},
                      [idx, row](const Eigen::ArrayXd& g, std::span<Eigen::ArrayXd*> gi) {
                        if (gi[0]) *gi[0] += g;
                        if (gi[1]) {
                          for (std::size_t k = 0; k < idx.size(); ++k) {
                            gi[1]->segment(static_cast<Index>(k) * row, row) += g.segment(idx[k] * row, row);
                          }
                        }
                      });
}

} // namespace fmdiff
