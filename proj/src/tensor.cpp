#include "gradleak/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace gradleak {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

namespace {

void check_positive_extents(const Shape& shape) {
  for (std::size_t e : shape) {
    if (e == 0) throw std::invalid_argument("tensor extents must be positive, got " + shape_str(shape));
  }
}

}  // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  check_positive_extents(shape_);
  data_ = std::make_shared<std::vector<double>>(shape_numel(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)) {
  check_positive_extents(shape_);
  if (values.size() != shape_numel(shape_)) {
    throw std::invalid_argument("element count " + std::to_string(values.size()) +
                                " does not match shape " + shape_str(shape_));
  }
  data_ = std::make_shared<std::vector<double>>(std::move(values));
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{1}, std::vector<double>{value}); }

std::size_t Tensor::rows() const {
  if (rank() == 1) return 1;
  if (rank() == 2) return shape_[0];
  throw std::invalid_argument("rows(): tensor of rank " + std::to_string(rank()) + " has no 2-D view");
}

std::size_t Tensor::cols() const {
  if (rank() == 1) return shape_[0];
  if (rank() == 2) return shape_[1];
  throw std::invalid_argument("cols(): tensor of rank " + std::to_string(rank()) + " has no 2-D view");
}

const std::vector<double>& Tensor::values() const {
  if (!data_) throw std::logic_error("reading an undefined tensor");
  return *data_;
}

std::vector<double>& Tensor::mutable_values() {
  if (!data_) throw std::logic_error("writing an undefined tensor");
  if (tracked()) throw std::logic_error("in-place mutation of a graph-tracked tensor");
  return *data_;
}

double Tensor::item() const {
  if (numel() != 1) throw std::invalid_argument("item(): tensor has " + std::to_string(numel()) + " elements");
  return (*data_)[0];
}

double Tensor::at(std::size_t i) const { return values().at(i); }

double Tensor::at(std::size_t i, std::size_t j) const {
  return values().at(i * cols() + j);
}

Tensor Tensor::detached() const {
  Tensor t;
  t.shape_ = shape_;
  t.data_ = data_;
  return t;
}

bool Tensor::all_finite() const {
  for (double v : values()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void Tensor::ensure_finite(const std::string& context) const {
  if (!all_finite()) throw std::runtime_error(context + ": tensor contains non-finite values");
}

// --- graph ----------------------------------------------------------------

Tensor Graph::variable(const Tensor& values, bool requires_grad) {
  if (!values.defined()) throw std::invalid_argument("variable(): undefined tensor");
  Tensor t = values.detached();
  Node node;
  node.kind = OpKind::Leaf;
  nodes_.push_back(std::move(node));
  t.graph_ = this;
  t.node_ = static_cast<int>(nodes_.size()) - 1;
  t.requires_grad_ = requires_grad;
  return t;
}

Tensor Graph::emit(Node node, Shape out_shape, std::vector<double> out_values, bool save_output) {
  Tensor t(std::move(out_shape), std::move(out_values));
  nodes_.push_back(std::move(node));
  t.graph_ = this;
  t.node_ = static_cast<int>(nodes_.size()) - 1;
  t.requires_grad_ = true;
  if (save_output) nodes_.back().out = t;
  return t;
}

void Graph::reset() {
  nodes_.clear();
  pause_depth_ = 0;
}

std::vector<Tensor> Graph::backward(const Tensor& output, const std::vector<Tensor>& wrt,
                                    bool create_graph) {
  if (output.numel() != 1) {
    throw std::invalid_argument("backward(): output has " + std::to_string(output.numel()) +
                                " elements, expected a scalar");
  }
  for (const Tensor& w : wrt) {
    if (!w.tracked() || w.graph() != this) {
      throw std::invalid_argument("backward(): a wrt tensor is detached from this graph");
    }
  }

  // A constant output has zero gradient with respect to everything.
  if (!output.tracked()) {
    std::vector<Tensor> zeros;
    zeros.reserve(wrt.size());
    for (const Tensor& w : wrt) zeros.emplace_back(w.shape(), 0.0);
    return zeros;
  }
  if (output.graph() != this) throw std::invalid_argument("backward(): output belongs to another graph");

  std::vector<Tensor> adjoint(static_cast<std::size_t>(output.node()) + 1);
  adjoint[output.node()] = Tensor(output.shape(), 1.0);
  std::vector<bool> wanted(adjoint.size(), false);
  for (const Tensor& w : wrt) {
    if (w.node() >= 0 && static_cast<std::size_t>(w.node()) < wanted.size()) wanted[w.node()] = true;
  }

  {
    PauseRecording pause(create_graph ? nullptr : this);
    for (int i = output.node(); i >= 0; --i) {
      if (!adjoint[i].defined()) continue;
      // Copy the node: VJP evaluation may append nodes and reallocate nodes_.
      Node node = nodes_[static_cast<std::size_t>(i)];
      if (node.kind == OpKind::Leaf) continue;
      if (node.freed) {
        throw std::runtime_error(
            "backward(): graph state was already freed by a previous backward "
            "(use create_graph to keep it)");
      }
      Tensor g = adjoint[i];
      Tensor da, db;
      apply_vjp(node, g, node.in0 >= 0 ? &da : nullptr, node.in1 >= 0 ? &db : nullptr);
      auto route = [&](int target, Tensor grad) {
        if (target < 0 || !grad.defined()) return;
        Tensor& slot = adjoint[target];
        slot = slot.defined() ? add(slot, grad) : std::move(grad);
      };
      route(node.in0, std::move(da));
      route(node.in1, std::move(db));
      if (!create_graph) {
        Node& stored = nodes_[static_cast<std::size_t>(i)];
        stored.a = Tensor();
        stored.b = Tensor();
        stored.out = Tensor();
        stored.freed = true;
      }
      if (!wanted[i]) adjoint[i] = Tensor();  // adjoint no longer needed
    }
  }

  std::vector<Tensor> result;
  result.reserve(wrt.size());
  for (const Tensor& w : wrt) {
    const int id = w.node();
    if (id <= output.node() && adjoint[id].defined()) {
      result.push_back(adjoint[id]);
    } else {
      result.emplace_back(w.shape(), 0.0);
    }
  }
  return result;
}

// Backward rules, written with the public primitives so that gradients stay
// differentiable when recording is active.
void Graph::apply_vjp(const Node& node, const Tensor& g, Tensor* da, Tensor* db) const {
  switch (node.kind) {
    case OpKind::Leaf:
      break;
    case OpKind::Add:
      if (da) *da = g;
      if (db) *db = g;
      break;
    case OpKind::Sub:
      if (da) *da = g;
      if (db) *db = neg(g);
      break;
    case OpKind::Mul:
      if (da) *da = mul(g, node.b);
      if (db) *db = mul(g, node.a);
      break;
    case OpKind::Div:
      if (da) *da = div(g, node.b);
      if (db) *db = neg(div(mul(g, node.a), mul(node.b, node.b)));
      break;
    case OpKind::Neg:
      if (da) *da = neg(g);
      break;
    case OpKind::Exp:
      if (da) *da = mul(g, node.out);
      break;
    case OpKind::Log:
      if (da) *da = div(g, node.a);
      break;
    case OpKind::Sqrt:
      if (da) *da = div(mul_scalar(g, 0.5), node.out);
      break;
    case OpKind::Erf:
      // d/dx erf(x) = 2/sqrt(pi) * exp(-x^2)
      if (da) {
        const double two_over_sqrt_pi = 1.1283791670955126;
        *da = mul(g, mul_scalar(exp(neg(mul(node.a, node.a))), two_over_sqrt_pi));
      }
      break;
    case OpKind::Abs:
      // subgradient 0 at the kink; sign is constant almost everywhere
      if (da) *da = mul(g, sign_values(node.a));
      break;
    case OpKind::AddScalar:
      if (da) *da = g;
      break;
    case OpKind::MulScalar:
      if (da) *da = mul_scalar(g, node.scalar);
      break;
    case OpKind::MatMul:
      if (da) *da = matmul(g, transpose(node.b));
      if (db) *db = matmul(transpose(node.a), g);
      break;
    case OpKind::Transpose:
      if (da) *da = transpose(g);
      break;
    case OpKind::RowSum:
      if (da) *da = bcast_rows(g, node.i0);
      break;
    case OpKind::ColSum:
      if (da) *da = bcast_cols(g, node.i0);
      break;
    case OpKind::BcastRows:
      if (da) *da = row_sum(g);
      break;
    case OpKind::BcastCols:
      if (da) *da = col_sum(g);
      break;
    case OpKind::SumAll:
      if (da) *da = bcast_to(g, node.in_shape);
      break;
    case OpKind::BcastTo:
      if (da) *da = sum_all(g);
      break;
    case OpKind::Reshape:
      if (da) *da = reshape(g, node.in_shape);
      break;
    case OpKind::SliceRows:
      if (da) *da = embed_rows(g, node.i0, node.i1);
      break;
    case OpKind::SliceCols:
      if (da) *da = embed_cols(g, node.i0, node.i1);
      break;
    case OpKind::EmbedRows:
      if (da) *da = slice_rows(g, node.i0, node.i1);
      break;
    case OpKind::EmbedCols:
      if (da) *da = slice_cols(g, node.i0, node.i1);
      break;
    case OpKind::GatherRows:
      if (da) *da = scatter_rows(g, *node.ids, node.i0);
      break;
    case OpKind::ScatterRows:
      if (da) *da = gather_rows(g, *node.ids);
      break;
  }
}

// --- op plumbing ------------------------------------------------------------

namespace {

Graph* tracking_graph(const Tensor& a) {
  return (a.tracked() && a.graph()->recording()) ? a.graph() : nullptr;
}

Graph* tracking_graph(const Tensor& a, const Tensor& b) {
  Graph* ga = tracking_graph(a);
  Graph* gb = tracking_graph(b);
  if (ga && gb && ga != gb) throw std::invalid_argument("operands belong to different graphs");
  return ga ? ga : gb;
}

int node_of(const Tensor& t, Graph* g) { return (g && t.graph() == g) ? t.node() : -1; }

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  }
}

void check_rank2(const Tensor& x, const char* op) {
  if (x.rank() != 2) throw std::invalid_argument(std::string(op) + ": expected a rank-2 tensor, got " + shape_str(x.shape()));
}

template <typename Fwd>
Tensor elementwise_binary(OpKind kind, const Tensor& a, const Tensor& b, const char* name, Fwd fwd) {
  check_same_shape(a, b, name);
  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i], bv[i]);
  Graph* g = tracking_graph(a, b);
  if (!g) return Tensor(a.shape(), std::move(out));
  Graph::Node node;
  node.kind = kind;
  node.in0 = node_of(a, g);
  node.in1 = node_of(b, g);
  if (kind == OpKind::Mul || kind == OpKind::Div) {
    node.a = a;
    node.b = b;
  }
  return g->emit(std::move(node), a.shape(), std::move(out));
}

template <typename Fwd>
Tensor elementwise_unary(OpKind kind, const Tensor& x, Fwd fwd, bool save_input,
                         bool save_output = false, double scalar = 0.0) {
  const auto& xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
  Graph* g = tracking_graph(x);
  if (!g) return Tensor(x.shape(), std::move(out));
  Graph::Node node;
  node.kind = kind;
  node.in0 = x.node();
  node.scalar = scalar;
  if (save_input) node.a = x;
  return g->emit(std::move(node), x.shape(), std::move(out), save_output);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return elementwise_binary(OpKind::Add, a, b, "add", [](double x, double y) { return x + y; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return elementwise_binary(OpKind::Sub, a, b, "sub", [](double x, double y) { return x - y; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return elementwise_binary(OpKind::Mul, a, b, "mul", [](double x, double y) { return x * y; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return elementwise_binary(OpKind::Div, a, b, "div", [](double x, double y) { return x / y; });
}

Tensor neg(const Tensor& x) {
  return elementwise_unary(OpKind::Neg, x, [](double v) { return -v; }, false, false);
}

Tensor log(const Tensor& x) {
  return elementwise_unary(OpKind::Log, x, [](double v) { return std::log(v); }, true, false);
}

Tensor abs(const Tensor& x) {
  return elementwise_unary(OpKind::Abs, x, [](double v) { return std::abs(v); }, true, false);
}

Tensor exp(const Tensor& x) {
  return elementwise_unary(OpKind::Exp, x, [](double v) { return std::exp(v); }, false, true);
}

Tensor sqrt(const Tensor& x) {
  return elementwise_unary(OpKind::Sqrt, x, [](double v) { return std::sqrt(v); }, false, true);
}

Tensor erf(const Tensor& x) {
  return elementwise_unary(OpKind::Erf, x, [](double v) { return std::erf(v); }, true, false);
}

Tensor add_scalar(const Tensor& x, double c) {
  return elementwise_unary(OpKind::AddScalar, x, [c](double v) { return v + c; }, false, false, c);
}

Tensor mul_scalar(const Tensor& x, double c) {
  return elementwise_unary(OpKind::MulScalar, x, [c](double v) { return v * c; }, false, false, c);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_rank2(a, "matmul");
  check_rank2(b, "matmul");
  const std::size_t n = a.shape()[0], k = a.shape()[1];
  const std::size_t k2 = b.shape()[0], m = b.shape()[1];
  if (k != k2) {
    throw std::invalid_argument("matmul: inner dimensions disagree, " + shape_str(a.shape()) +
                                " x " + shape_str(b.shape()));
  }
  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<double> out(n * m, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double* arow = av.data() + i * k;
    double* orow = out.data() + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = arow[p];
      if (aip == 0.0) continue;
      const double* brow = bv.data() + p * m;
      for (std::size_t j = 0; j < m; ++j) orow[j] += aip * brow[j];
    }
  }
  Graph* g = tracking_graph(a, b);
  if (!g) return Tensor(Shape{n, m}, std::move(out));
  Graph::Node node;
  node.kind = OpKind::MatMul;
  node.in0 = node_of(a, g);
  node.in1 = node_of(b, g);
  node.a = a;
  node.b = b;
  return g->emit(std::move(node), Shape{n, m}, std::move(out));
}

Tensor transpose(const Tensor& x) {
  check_rank2(x, "transpose");
  const std::size_t n = x.shape()[0], m = x.shape()[1];
  const auto& xv = x.values();
  std::vector<double> out(n * m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[j * n + i] = xv[i * m + j];
  Graph* g = tracking_graph(x);
  if (!g) return Tensor(Shape{m, n}, std::move(out));
  Graph::Node node;
  node.kind = OpKind::Transpose;
  node.in0 = x.node();
  return g->emit(std::move(node), Shape{m, n}, std::move(out));
}

Tensor row_sum(const Tensor& x) {
  check_rank2(x, "row_sum");
  const std::size_t n = x.shape()[0], m = x.shape()[1];
  const auto& xv = x.values();
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < m; ++j) s += xv[i * m + j];
    out[i] = s;
  }
  Graph* g = tracking_graph(x);
  if (!g) return Tensor(Shape{n, 1}, std::move(out));
  Graph::Node node;
  node.kind = OpKind::RowSum;
  node.in0 = x.node();
  node.i0 = m;
  return g->emit(std::move(node), Shape{n, 1}, std::move(out));
}

Tensor col_sum(const Tensor& x) {
  check_rank2(x, "col_sum");
  const std::size_t n = x.shape()[0], m = x.shape()[1];
  const auto& xv = x.values();
  std::vector<double> out(m, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[j] += xv[i * m + j];
  Graph* g = tracking_graph(x);
  if (!g) return Tensor(Shape{1, m}, std::move(out));
  Graph::Node node;
  node.kind = OpKind::ColSum;
  node.in0 = x.node();
  node.i0 = n;
  return g->emit(std::move(node), Shape{1, m}, std::move(out));
}

Tensor bcast_rows(const Tensor& x, std::size_t m) {
  check_rank2(x, "bcast_rows");
  if (x.shape()[1] != 1) throw std::invalid_argument("bcast_rows: expected shape (n,1), got " + shape_str(x.shape()));
  const std::size_t n = x.shape()[0];
  const auto& xv = x.values();
  std::vector<double> out(n * m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] = xv[i];
  Graph* g = tracking_graph(x);
  if (!g) return Tensor(Shape{n, m}, std::move(out));
  Graph::Node node;
  node.kind = OpKind::BcastRows;
  node.in0 = x.node();
  return g->emit(std::move(node), Shape{n, m}, std::move(out));
}

Tensor bcast_cols(const Tensor& x, std::size_t n) {
  check_rank2(x, "bcast_cols");
  if (x.shape()[0] != 1) throw std::invalid_argument("bcast_cols: expected shape (1,m), got " + shape_str(x.shape()));
  const std::size_t m = x.shape()[1];
  const auto& xv = x.values();
  std::vector<double> out(n * m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] = xv[j];
  Graph* g = tracking_graph(x);
  if (!g) return Tensor(Shape{n, m}, std::move(out));
  Graph::Node node;
  node.kind = OpKind::BcastCols;
  node.in0 = x.node();
  return g->emit(std::move(node), Shape{n, m}, std::move(out));
}

Tensor sum_all(const Tensor& x) {
  const auto& xv = x.values();
  double s = 0.0;
  for (double v : xv) s += v;
  Graph* g = tracking_graph(x);
  if (!g) return Tensor::scalar(s);
  Graph::Node node;
  node.kind = OpKind::SumAll;
  node.in0 = x.node();
  node.in_shape = x.shape();
  return g->emit(std::move(node), Shape{1}, std::vector<double>{s});
}

Tensor bcast_to(const Tensor& x, Shape shape) {
  if (x.numel() != 1) throw std::invalid_argument("bcast_to: source must be a scalar");
  std::vector<double> out(shape_numel(shape), x.values()[0]);
  Graph* g = tracking_graph(x);
  if (!g) return Tensor(std::move(shape), std::move(out));
  Graph::Node node;
  node.kind = OpKind::BcastTo;
  node.in0 = x.node();
  Shape out_shape = shape;
  return g->emit(std::move(node), std::move(out_shape), std::move(out));
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw std::invalid_argument("reshape: element count mismatch, " + shape_str(x.shape()) +
                                " -> " + shape_str(shape));
  }
  std::vector<double> out = x.values();
  Graph* g = tracking_graph(x);
  if (!g) return Tensor(std::move(shape), std::move(out));
  Graph::Node node;
  node.kind = OpKind::Reshape;
  node.in0 = x.node();
  node.in_shape = x.shape();
  return g->emit(std::move(node), std::move(shape), std::move(out));
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count) {
  check_rank2(x, "slice_rows");
  const std::size_t n = x.shape()[0], m = x.shape()[1];
  if (begin + count > n) throw std::invalid_argument("slice_rows: range out of bounds");
  const auto& xv = x.values();
  std::vector<double> out(count * m);
  std::copy(xv.begin() + begin * m, xv.begin() + (begin + count) * m, out.begin());
  Graph* g = tracking_graph(x);
  if (!g) return Tensor(Shape{count, m}, std::move(out));
  Graph::Node node;
  node.kind = OpKind::SliceRows;
  node.in0 = x.node();
  node.i0 = begin;
  node.i1 = n;
  return g->emit(std::move(node), Shape{count, m}, std::move(out));
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count) {
  check_rank2(x, "slice_cols");
  const std::size_t n = x.shape()[0], m = x.shape()[1];
  if (begin + count > m) throw std::invalid_argument("slice_cols: range out of bounds");
  const auto& xv = x.values();
  std::vector<double> out(n * count);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < count; ++j) out[i * count + j] = xv[i * m + begin + j];
  Graph* g = tracking_graph(x);
  if (!g) return Tensor(Shape{n, count}, std::move(out));
  Graph::Node node;
  node.kind = OpKind::SliceCols;
  node.in0 = x.node();
  node.i0 = begin;
  node.i1 = m;
  return g->emit(std::move(node), Shape{n, count}, std::move(out));
}

Tensor embed_rows(const Tensor& x, std::size_t begin, std::size_t total) {
  check_rank2(x, "embed_rows");
  const std::size_t n = x.shape()[0], m = x.shape()[1];
  if (begin + n > total) throw std::invalid_argument("embed_rows: range out of bounds");
  const auto& xv = x.values();
  std::vector<double> out(total * m, 0.0);
  std::copy(xv.begin(), xv.end(), out.begin() + begin * m);
  Graph* g = tracking_graph(x);
  if (!g) return Tensor(Shape{total, m}, std::move(out));
  Graph::Node node;
  node.kind = OpKind::EmbedRows;
  node.in0 = x.node();
  node.i0 = begin;
  node.i1 = n;
  return g->emit(std::move(node), Shape{total, m}, std::move(out));
}

Tensor embed_cols(const Tensor& x, std::size_t begin, std::size_t total) {
  check_rank2(x, "embed_cols");
  const std::size_t n = x.shape()[0], m = x.shape()[1];
  if (begin + m > total) throw std::invalid_argument("embed_cols: range out of bounds");
  const auto& xv = x.values();
  std::vector<double> out(n * total, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[i * total + begin + j] = xv[i * m + j];
  Graph* g = tracking_graph(x);
  if (!g) return Tensor(Shape{n, total}, std::move(out));
  Graph::Node node;
  node.kind = OpKind::EmbedCols;
  node.in0 = x.node();
  node.i0 = begin;
  node.i1 = m;
  return g->emit(std::move(node), Shape{n, total}, std::move(out));
}

Tensor gather_rows(const Tensor& table, const std::vector<int>& ids) {
  check_rank2(table, "gather_rows");
  const std::size_t v = table.shape()[0], m = table.shape()[1];
  if (ids.empty()) throw std::invalid_argument("gather_rows: empty id list");
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= v) {
      throw std::out_of_range("gather_rows: id " + std::to_string(id) + " out of range for " +
                              std::to_string(v) + " rows");
    }
  }
  const auto& tv = table.values();
  std::vector<double> out(ids.size() * m);
  for (std::size_t t = 0; t < ids.size(); ++t) {
    std::copy(tv.begin() + static_cast<std::size_t>(ids[t]) * m,
              tv.begin() + (static_cast<std::size_t>(ids[t]) + 1) * m, out.begin() + t * m);
  }
  Graph* g = tracking_graph(table);
  if (!g) return Tensor(Shape{ids.size(), m}, std::move(out));
  Graph::Node node;
  node.kind = OpKind::GatherRows;
  node.in0 = table.node();
  node.i0 = v;
  node.ids = std::make_shared<const std::vector<int>>(ids);
  return g->emit(std::move(node), Shape{ids.size(), m}, std::move(out));
}

Tensor scatter_rows(const Tensor& x, const std::vector<int>& ids, std::size_t total_rows) {
  check_rank2(x, "scatter_rows");
  const std::size_t n = x.shape()[0], m = x.shape()[1];
  if (ids.size() != n) throw std::invalid_argument("scatter_rows: id count does not match row count");
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= total_rows) {
      throw std::out_of_range("scatter_rows: id out of range");
    }
  }
  const auto& xv = x.values();
  std::vector<double> out(total_rows * m, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    double* dst = out.data() + static_cast<std::size_t>(ids[t]) * m;
    for (std::size_t j = 0; j < m; ++j) dst[j] += xv[t * m + j];
  }
  Graph* g = tracking_graph(x);
  if (!g) return Tensor(Shape{total_rows, m}, std::move(out));
  Graph::Node node;
  node.kind = OpKind::ScatterRows;
  node.in0 = x.node();
  node.ids = std::make_shared<const std::vector<int>>(ids);
  return g->emit(std::move(node), Shape{total_rows, m}, std::move(out));
}

Tensor row_max_values(const Tensor& x) {
  check_rank2(x, "row_max_values");
  const std::size_t n = x.shape()[0], m = x.shape()[1];
  const auto& xv = x.values();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double best = xv[i * m];
    for (std::size_t j = 1; j < m; ++j) best = std::max(best, xv[i * m + j]);
    out[i] = best;
  }
  return Tensor(Shape{n, 1}, std::move(out));
}

Tensor sign_values(const Tensor& x) {
  const auto& xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = (xv[i] > 0.0) - (xv[i] < 0.0);
  return Tensor(x.shape(), std::move(out));
}

}  // namespace gradleak
