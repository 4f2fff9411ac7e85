#pragma once

#include <functional>
#include <string>
#include <vector>

#include "densetrf/tensor.h"

namespace dtrf::ad {

struct Value {
    int id = -1;
    bool valid() const { return id >= 0; }
};

// Tape-based reverse-mode autodiff over 2D tensors. A Graph is built per
// forward pass; nodes are created in evaluation order, so a reverse sweep of
// the tape is a valid topological order for backpropagation. Parameters are
// bound by name so a trainer can collect gradients after backward().
class Graph {
  public:
    Graph();

    // Leaves -----------------------------------------------------------------
    Value constant(Tensor t);
    Value param(const std::string& name, const Tensor& t);

    // Elementwise ------------------------------------------------------------
    Value add(Value a, Value b);
    Value sub(Value a, Value b);
    Value mul(Value a, Value b);
    Value scale(Value a, double s);
    Value add_scalar(Value a, double s);
    Value sigmoid(Value a);
    Value tanh(Value a);
    Value gelu(Value a);
    Value exp(Value a);

    // Linear algebra ----------------------------------------------------------
    Value matmul(Value a, Value b);            // [n,k] x [k,m] -> [n,m]
    Value transpose(Value a);                  // [n,m] -> [m,n]
    Value add_row_broadcast(Value m, Value row);   // [n,d] + [1,d]
    Value mul_col_broadcast(Value m, Value col);   // [n,d] * [n,1]
    Value div_col_broadcast(Value m, Value col);   // [n,d] / [n,1]
    Value row_sum(Value m);                    // [n,d] -> [n,1]
    Value mean_all(Value m);                   // [n,d] -> [1,1]

    // Shape ------------------------------------------------------------------
    Value reshape(Value a, std::vector<int> shape);
    Value slice_cols(Value a, int c0, int c1); // half-open column range
    Value concat_cols(const std::vector<Value>& parts);
    Value repeat_rows(Value a, int times);     // row i of input -> rows [i*times, (i+1)*times)

    // Normalization / attention ----------------------------------------------
    Value layer_norm(Value x, Value gain, Value bias, double eps = 1e-5); // per row
    Value softmax_axis0(Value m);              // softmax over rows, per column

    // Fused domain ops ---------------------------------------------------------
    // decoded: [(K*N), C] grouped per slot; weights: [K, N]. Output [N, C] with
    // out[j] = sum_k weights[k,j] * decoded[k*N + j].
    Value rows_weighted_sum(Value decoded, Value weights, int num_slots);
    // grid: [(H*W), C] -> [(H*fh)*(W*fw), C], bilinear, align_corners=false.
    Value bilinear_upsample(Value grid, int h, int w, int fh, int fw);

    // Losses -------------------------------------------------------------------
    Value mean_sq_diff(Value a, Value b);             // scalar [1,1]
    Value bce_with_logits(Value logits, Value targets); // scalar [1,1], mean reduction

    // Execution ----------------------------------------------------------------
    const Tensor& value(Value v) const;
    double scalar(Value v) const;
    void backward(Value loss);                 // loss must be [1,1]
    const Tensor& grad(Value v) const;
    // Gradient of a bound parameter, or nullptr when the name never appeared
    // in the graph. Repeated param() calls with one name share a node.
    const Tensor* param_grad(const std::string& name) const;

    // Throws NonFiniteError naming `what` if the node holds NaN/Inf.
    void check_finite(Value v, const std::string& what) const;

    size_t num_nodes() const { return nodes_.size(); }

  private:
    struct Node {
        Tensor val;
        Tensor grd;
        bool needs_grad = false;
        std::function<void(Graph&, Node&)> bwd; // empty for leaves
    };

    std::vector<Node> nodes_;
    std::vector<std::pair<std::string, int>> params_;

    Node& node(Value v) { return nodes_[size_t(v.id)]; }
    const Node& node(Value v) const { return nodes_[size_t(v.id)]; }
    Value make(Tensor val, bool needs_grad, std::function<void(Graph&, Node&)> bwd);
    Tensor& grad_buf(Value v);
};

} // namespace dtrf::ad
