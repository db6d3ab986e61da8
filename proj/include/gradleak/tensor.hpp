#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace gradleak {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Graph;

// Dense row-major tensor of 64-bit reals. Value type: copies share the
// underlying buffer; mutation is only allowed on untracked tensors.
// A tensor may carry a handle (graph + node id) into the computation
// graph that produced it.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);
  static Tensor scalar(double value);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t numel() const { return data_ ? data_->size() : 0; }
  bool defined() const { return static_cast<bool>(data_); }

  // 2-D view helpers; a rank-1 tensor reads as a single row.
  std::size_t rows() const;
  std::size_t cols() const;

  const std::vector<double>& values() const;
  std::vector<double>& mutable_values();  // untracked tensors only
  double item() const;                    // numel() == 1
  double at(std::size_t i) const;
  double at(std::size_t i, std::size_t j) const;

  bool tracked() const { return graph_ != nullptr && node_ >= 0; }
  int node() const { return node_; }
  Graph* graph() const { return graph_; }
  bool requires_grad() const { return requires_grad_; }
  Tensor detached() const;

  bool all_finite() const;
  void ensure_finite(const std::string& context) const;

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

 private:
  friend class Graph;

  Shape shape_;
  std::shared_ptr<std::vector<double>> data_;
  Graph* graph_ = nullptr;
  int node_ = -1;
  bool requires_grad_ = false;
};

enum class OpKind : std::uint8_t {
  Leaf,
  Add,
  Sub,
  Mul,
  Div,
  Neg,
  Exp,
  Log,
  Sqrt,
  Erf,
  Abs,
  AddScalar,
  MulScalar,
  MatMul,
  Transpose,
  RowSum,
  ColSum,
  BcastRows,
  BcastCols,
  SumAll,
  BcastTo,
  Reshape,
  SliceRows,
  SliceCols,
  EmbedRows,
  EmbedCols,
  GatherRows,
  ScatterRows,
};

// Reverse-mode tape. One graph per attack instance; never shared across
// threads. Backward rules are written in terms of the public primitives,
// so a backward pass with create_graph=true appends new nodes and the
// returned gradients are themselves differentiable.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Registers a leaf. Returns a tracked handle sharing the input buffer.
  Tensor variable(const Tensor& values, bool requires_grad = true);

  // Gradients of `output` (a one-element tensor) with respect to each
  // tensor in `wrt`, in order. With create_graph the results stay
  // graph-connected so they can be differentiated again; without it the
  // visited nodes release their saved operands and a later backward
  // through them is an error.
  std::vector<Tensor> backward(const Tensor& output, const std::vector<Tensor>& wrt,
                               bool create_graph = false);

  void reset();
  std::size_t size() const { return nodes_.size(); }
  bool recording() const { return pause_depth_ == 0; }

  struct Node {
    OpKind kind = OpKind::Leaf;
    int in0 = -1;
    int in1 = -1;
    Tensor a;    // saved operands / outputs as the rule requires
    Tensor b;
    Tensor out;
    double scalar = 0.0;
    std::size_t i0 = 0;  // slice/embed/broadcast extents
    std::size_t i1 = 0;
    std::shared_ptr<const std::vector<int>> ids;  // gather/scatter indices
    Shape in_shape;                               // reshape/bcast-to source shape
    bool freed = false;
  };

  // Used by the op implementations; not part of the public surface.
  Tensor emit(Node node, Shape out_shape, std::vector<double> out_values,
              bool save_output = false);

  class PauseRecording {
   public:
    explicit PauseRecording(Graph* g) : graph_(g) {
      if (graph_) ++graph_->pause_depth_;
    }
    ~PauseRecording() {
      if (graph_) --graph_->pause_depth_;
    }
    PauseRecording(const PauseRecording&) = delete;
    PauseRecording& operator=(const PauseRecording&) = delete;

   private:
    Graph* graph_;
  };

 private:
  void apply_vjp(const Node& node, const Tensor& grad, Tensor* da, Tensor* db) const;

  std::vector<Node> nodes_;
  int pause_depth_ = 0;
};

// --- primitive operations ------------------------------------------------
// Element-wise ops require identical shapes; matrix ops are rank-2.
// Outputs are tracked when any input is tracked and its graph is recording.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor sqrt(const Tensor& x);
Tensor erf(const Tensor& x);
Tensor abs(const Tensor& x);
Tensor add_scalar(const Tensor& x, double c);
Tensor mul_scalar(const Tensor& x, double c);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);

Tensor row_sum(const Tensor& x);                    // (n,m) -> (n,1)
Tensor col_sum(const Tensor& x);                    // (n,m) -> (1,m)
Tensor bcast_rows(const Tensor& x, std::size_t m);  // (n,1) -> (n,m)
Tensor bcast_cols(const Tensor& x, std::size_t n);  // (1,m) -> (n,m)
Tensor sum_all(const Tensor& x);                    // -> {1}
Tensor bcast_to(const Tensor& x, Shape shape);      // {1} -> shape

Tensor reshape(const Tensor& x, Shape shape);
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count);
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count);
Tensor embed_rows(const Tensor& x, std::size_t begin, std::size_t total);
Tensor embed_cols(const Tensor& x, std::size_t begin, std::size_t total);

// Row gather/scatter against an id list; duplicate ids accumulate on scatter.
Tensor gather_rows(const Tensor& table, const std::vector<int>& ids);
Tensor scatter_rows(const Tensor& x, const std::vector<int>& ids, std::size_t total_rows);

// Detached helpers (no graph participation).
Tensor row_max_values(const Tensor& x);  // (n,m) -> (n,1), untracked
Tensor sign_values(const Tensor& x);     // elementwise sign in {-1,0,1}, untracked

}  // namespace gradleak
