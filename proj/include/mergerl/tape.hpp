#pragma once

#include <unordered_map>
#include <vector>

#include "mergerl/tensor.hpp"

namespace mergerl {

struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct TapeError : std::logic_error {
    using std::logic_error::logic_error;
};

// Handle to a value recorded on a Tape.
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

// Reverse-mode tape over 2-D tensors. Operations are recorded in execution
// order; backward() walks them in exact reverse order and accumulates
// gradients into every Parameter that participated in the forward pass.
//
// Batching convention: several ops treat the row axis as a stack of
// fixed-height blocks (one block per sample) and loop over blocks
// explicitly; everything else is row-local and needs no block awareness.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // --- leaves -----------------------------------------------------------
    Var constant(Tensor value);
    Var param(Parameter& p);  // memoized: one leaf per Parameter per tape

    // --- core ops ---------------------------------------------------------
    Var matmul(Var a, Var b);                          // (m×k)·(k×n)
    Var affine(Var x, Parameter& W, Parameter& b);     // x·Wᵀ + 1·bᵀ, W:(d×n), b:(1×d)
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var hadamard(Var a, Var b);
    Var scale(Var a, double c);
    Var relu(Var a);
    Var elu(Var a);
    Var absval(Var a);
    Var row_softmax(Var a);
    Var row_layer_norm(Var x, Parameter& gain, Parameter& bias, double rho);
    Var concat_cols(const std::vector<Var>& parts);
    Var concat_rows(const std::vector<Var>& parts);
    Var reshape(Var a, int rows, int cols);  // same element count, row-major

    // --- block ops (row axis = nblocks stacked blocks of block_rows) -------
    Var block_scores(Var q, Var k, int block_rows, double scale);  // per block: s·Q_b·K_bᵀ
    Var block_apply(Var attn, Var v, int block_rows);              // per block: A_b·V_b
    Var block_pool(Var z, const Tensor& alpha, int block_rows);    // per block: Z_bᵀ·α → 1 row

    // --- per-row ops used by the mixing network ----------------------------
    // out[b,i] = Σ_j wflat[b, i*in_dim+j] · q[b,j]
    Var batched_matvec(Var wflat, Var q, int out_dim, int in_dim);
    Var row_dot(Var a, Var b);                          // (R×C)·(R×C) → (R×1)
    Var gather_per_row(Var x, std::vector<int> col_idx);  // (R×C) → (R×1)

    // --- reductions ---------------------------------------------------------
    Var sum_all(Var a);
    Var mean_all(Var a);

    // --- access -------------------------------------------------------------
    const Tensor& value(Var v) const { return node_value(v); }
    const Tensor& grad(Var v) const;  // valid after backward()

    // Accumulates d(loss)/d(param) into every participating Parameter's grad.
    // loss must be a 1×1 value on this tape. Repeat calls keep accumulating.
    void backward(Var loss);

    // Smallest |input| seen by any kinked activation (relu/abs) on this tape;
    // +inf when none. Used to keep finite-difference checks off the kinks.
    double min_abs_kink_input() const;

    // Largest inverse standard deviation over all layer-norm rows on this
    // tape; 0 when none. Large values mean near-constant rows, where the
    // third derivative blows up and central differences lose accuracy.
    double max_layer_norm_inv_std() const;

    size_t size() const { return nodes_.size(); }

private:
    struct Node {
        int op = 0;
        Tensor value;
        Tensor grad;
        int a = -1, b = -1, c = -1;
        std::vector<int> many;
        double scalar = 0.0;
        int block = 0;
        int i0 = 0, i1 = 0;
        std::vector<int> idx;
        Tensor aux;   // op-specific saved activation
        Tensor aux2;  // second saved buffer (layer norm inv-std)
        Parameter* parameter = nullptr;
    };

    std::vector<Node> nodes_;
    std::unordered_map<const Parameter*, int> param_ids_;
    bool ran_backward_ = false;

    int push(Node n);
    const Tensor& node_value(Var v) const;
    void check(Var v) const;
    void backward_node(int id);
};

}  // namespace mergerl
