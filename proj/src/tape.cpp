#include "mergerl/tape.hpp"

#include <cmath>
#include <cstring>
#include <limits>

namespace mergerl {

namespace {

enum OpKind {
    kConstant,
    kParam,
    kMatMul,
    kAffine,
    kAdd,
    kSub,
    kHadamard,
    kScale,
    kRelu,
    kElu,
    kAbs,
    kRowSoftmax,
    kRowLayerNorm,
    kConcatCols,
    kConcatRows,
    kReshape,
    kBlockScores,
    kBlockApply,
    kBlockPool,
    kBatchedMatVec,
    kRowDot,
    kGatherPerRow,
    kSumAll,
    kMeanAll,
};

// C (m×n) += or = A (m×k) · B (k×n), i-k-j order
void matmul_nn(const double* A, const double* B, double* C, int m, int k, int n, bool acc) {
    if (!acc) std::memset(C, 0, sizeof(double) * static_cast<size_t>(m) * n);
    for (int i = 0; i < m; ++i) {
        const double* a = A + static_cast<size_t>(i) * k;
        double* c = C + static_cast<size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const double av = a[p];
            if (av == 0.0) continue;
            const double* b = B + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) c[j] += av * b[j];
        }
    }
}

// C (m×n) += A (m×k) · B (n×k)ᵀ
void matmul_nt(const double* A, const double* B, double* C, int m, int k, int n, bool acc) {
    if (!acc) std::memset(C, 0, sizeof(double) * static_cast<size_t>(m) * n);
    for (int i = 0; i < m; ++i) {
        const double* a = A + static_cast<size_t>(i) * k;
        double* c = C + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const double* b = B + static_cast<size_t>(j) * k;
            double s = 0.0;
            for (int p = 0; p < k; ++p) s += a[p] * b[p];
            c[j] += s;
        }
    }
}

// C (k×n) += A (m×k)ᵀ · B (m×n)
void matmul_tn(const double* A, const double* B, double* C, int m, int k, int n, bool acc) {
    if (!acc) std::memset(C, 0, sizeof(double) * static_cast<size_t>(k) * n);
    for (int i = 0; i < m; ++i) {
        const double* a = A + static_cast<size_t>(i) * k;
        const double* b = B + static_cast<size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const double av = a[p];
            if (av == 0.0) continue;
            double* c = C + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) c[j] += av * b[j];
        }
    }
}

}  // namespace

int Tape::push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

void Tape::check(Var v) const {
    if (!v.valid() || v.id >= static_cast<int>(nodes_.size()))
        throw TapeError("Tape: variable does not belong to this tape");
}

const Tensor& Tape::node_value(Var v) const {
    check(v);
    return nodes_[v.id].value;
}

const Tensor& Tape::grad(Var v) const {
    check(v);
    if (!ran_backward_) throw TapeError("Tape::grad: backward has not run");
    return nodes_[v.id].grad;
}

Var Tape::constant(Tensor value) {
    Node n;
    n.op = kConstant;
    n.value = std::move(value);
    return {push(std::move(n))};
}

Var Tape::param(Parameter& p) {
    auto it = param_ids_.find(&p);
    if (it != param_ids_.end()) return {it->second};
    Node n;
    n.op = kParam;
    n.value = p.value;
    n.parameter = &p;
    int id = push(std::move(n));
    param_ids_.emplace(&p, id);
    return {id};
}

Var Tape::matmul(Var a, Var b) {
    check(a);
    check(b);
    const Tensor& A = nodes_[a.id].value;
    const Tensor& B = nodes_[b.id].value;
    if (A.cols != B.rows) throw ShapeError("matmul: inner dimensions disagree");
    Node n;
    n.op = kMatMul;
    n.a = a.id;
    n.b = b.id;
    n.value = Tensor(A.rows, B.cols);
    matmul_nn(A.data.data(), B.data.data(), n.value.data.data(), A.rows, A.cols, B.cols, false);
    return {push(std::move(n))};
}

Var Tape::affine(Var x, Parameter& W, Parameter& b) {
    Var w = param(W);
    Var bb = param(b);
    check(x);
    const Tensor& X = nodes_[x.id].value;
    const Tensor& Wv = W.value;
    const Tensor& Bv = b.value;
    if (X.cols != Wv.cols) throw ShapeError("affine: input width does not match weight");
    if (Bv.rows != 1 || Bv.cols != Wv.rows) throw ShapeError("affine: bias shape mismatch");
    Node n;
    n.op = kAffine;
    n.a = x.id;
    n.b = w.id;
    n.c = bb.id;
    n.value = Tensor(X.rows, Wv.rows);
    matmul_nt(X.data.data(), Wv.data.data(), n.value.data.data(), X.rows, X.cols, Wv.rows, false);
    for (int i = 0; i < n.value.rows; ++i)
        for (int j = 0; j < n.value.cols; ++j) n.value.at(i, j) += Bv.at(0, j);
    return {push(std::move(n))};
}

Var Tape::add(Var a, Var b) {
    check(a);
    check(b);
    const Tensor& A = nodes_[a.id].value;
    const Tensor& B = nodes_[b.id].value;
    if (!A.same_shape(B)) throw ShapeError("add: shape mismatch");
    Node n;
    n.op = kAdd;
    n.a = a.id;
    n.b = b.id;
    n.value = A;
    for (int i = 0; i < n.value.numel(); ++i) n.value.data[i] += B.data[i];
    return {push(std::move(n))};
}

Var Tape::sub(Var a, Var b) {
    check(a);
    check(b);
    const Tensor& A = nodes_[a.id].value;
    const Tensor& B = nodes_[b.id].value;
    if (!A.same_shape(B)) throw ShapeError("sub: shape mismatch");
    Node n;
    n.op = kSub;
    n.a = a.id;
    n.b = b.id;
    n.value = A;
    for (int i = 0; i < n.value.numel(); ++i) n.value.data[i] -= B.data[i];
    return {push(std::move(n))};
}

Var Tape::hadamard(Var a, Var b) {
    check(a);
    check(b);
    const Tensor& A = nodes_[a.id].value;
    const Tensor& B = nodes_[b.id].value;
    if (!A.same_shape(B)) throw ShapeError("hadamard: shape mismatch");
    Node n;
    n.op = kHadamard;
    n.a = a.id;
    n.b = b.id;
    n.value = A;
    for (int i = 0; i < n.value.numel(); ++i) n.value.data[i] *= B.data[i];
    return {push(std::move(n))};
}

Var Tape::scale(Var a, double c) {
    check(a);
    Node n;
    n.op = kScale;
    n.a = a.id;
    n.scalar = c;
    n.value = nodes_[a.id].value;
    for (auto& x : n.value.data) x *= c;
    return {push(std::move(n))};
}

Var Tape::relu(Var a) {
    check(a);
    Node n;
    n.op = kRelu;
    n.a = a.id;
    n.value = nodes_[a.id].value;
    for (auto& x : n.value.data) x = x > 0.0 ? x : 0.0;
    return {push(std::move(n))};
}

Var Tape::elu(Var a) {
    check(a);
    Node n;
    n.op = kElu;
    n.a = a.id;
    n.value = nodes_[a.id].value;
    for (auto& x : n.value.data) x = x > 0.0 ? x : std::expm1(x);
    return {push(std::move(n))};
}

Var Tape::absval(Var a) {
    check(a);
    Node n;
    n.op = kAbs;
    n.a = a.id;
    n.value = nodes_[a.id].value;
    for (auto& x : n.value.data) x = std::fabs(x);
    return {push(std::move(n))};
}

Var Tape::row_softmax(Var a) {
    check(a);
    const Tensor& A = nodes_[a.id].value;
    if (A.cols == 0) throw ShapeError("row_softmax: empty rows");
    Node n;
    n.op = kRowSoftmax;
    n.a = a.id;
    n.value = Tensor(A.rows, A.cols);
    for (int i = 0; i < A.rows; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < A.cols; ++j) mx = std::max(mx, A.at(i, j));
        double sum = 0.0;
        for (int j = 0; j < A.cols; ++j) {
            double e = std::exp(A.at(i, j) - mx);
            n.value.at(i, j) = e;
            sum += e;
        }
        for (int j = 0; j < A.cols; ++j) n.value.at(i, j) /= sum;
    }
    return {push(std::move(n))};
}

Var Tape::row_layer_norm(Var x, Parameter& gain, Parameter& bias, double rho) {
    Var g = param(gain);
    Var bvar = param(bias);
    check(x);
    const Tensor& X = nodes_[x.id].value;
    if (X.cols == 0) throw ShapeError("row_layer_norm: empty rows");
    if (gain.value.rows != 1 || gain.value.cols != X.cols || !gain.value.same_shape(bias.value))
        throw ShapeError("row_layer_norm: affine parameter shape mismatch");
    Node n;
    n.op = kRowLayerNorm;
    n.a = x.id;
    n.b = g.id;
    n.c = bvar.id;
    n.scalar = rho;
    n.value = Tensor(X.rows, X.cols);
    n.aux = Tensor(X.rows, X.cols);  // normalized input
    n.aux2 = Tensor(X.rows, 1);      // inverse std
    const int c = X.cols;
    for (int i = 0; i < X.rows; ++i) {
        double mean = 0.0;
        for (int j = 0; j < c; ++j) mean += X.at(i, j);
        mean /= c;
        double var = 0.0;
        for (int j = 0; j < c; ++j) {
            double d = X.at(i, j) - mean;
            var += d * d;
        }
        var /= c;  // population variance
        double inv = 1.0 / std::sqrt(var + rho);
        n.aux2.at(i, 0) = inv;
        for (int j = 0; j < c; ++j) {
            double xh = (X.at(i, j) - mean) * inv;
            n.aux.at(i, j) = xh;
            n.value.at(i, j) = xh * gain.value.at(0, j) + bias.value.at(0, j);
        }
    }
    return {push(std::move(n))};
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no parts");
    int rows = -1, cols = 0;
    for (Var p : parts) {
        check(p);
        const Tensor& t = nodes_[p.id].value;
        if (rows < 0) rows = t.rows;
        if (t.rows != rows) throw ShapeError("concat_cols: row count mismatch");
        cols += t.cols;
    }
    Node n;
    n.op = kConcatCols;
    for (Var p : parts) n.many.push_back(p.id);
    n.value = Tensor(rows, cols);
    int off = 0;
    for (Var p : parts) {
        const Tensor& t = nodes_[p.id].value;
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < t.cols; ++j) n.value.at(i, off + j) = t.at(i, j);
        off += t.cols;
    }
    return {push(std::move(n))};
}

Var Tape::concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows: no parts");
    int cols = -1, rows = 0;
    for (Var p : parts) {
        check(p);
        const Tensor& t = nodes_[p.id].value;
        if (cols < 0) cols = t.cols;
        if (t.cols != cols) throw ShapeError("concat_rows: column count mismatch");
        rows += t.rows;
    }
    Node n;
    n.op = kConcatRows;
    for (Var p : parts) n.many.push_back(p.id);
    n.value = Tensor(rows, cols);
    int off = 0;
    for (Var p : parts) {
        const Tensor& t = nodes_[p.id].value;
        std::memcpy(n.value.data.data() + static_cast<size_t>(off) * cols, t.data.data(),
                    sizeof(double) * t.data.size());
        off += t.rows;
    }
    return {push(std::move(n))};
}

Var Tape::reshape(Var a, int rows, int cols) {
    check(a);
    const Tensor& A = nodes_[a.id].value;
    if (rows * cols != A.numel()) throw ShapeError("reshape: element count mismatch");
    Node n;
    n.op = kReshape;
    n.a = a.id;
    n.value = A;
    n.value.rows = rows;
    n.value.cols = cols;
    return {push(std::move(n))};
}

Var Tape::block_scores(Var q, Var k, int block_rows, double scale) {
    check(q);
    check(k);
    const Tensor& Q = nodes_[q.id].value;
    const Tensor& K = nodes_[k.id].value;
    if (!Q.same_shape(K)) throw ShapeError("block_scores: Q/K shape mismatch");
    if (block_rows <= 0 || Q.rows % block_rows != 0)
        throw ShapeError("block_scores: rows not divisible by block height");
    const int nb = Q.rows / block_rows;
    const int d = Q.cols;
    Node n;
    n.op = kBlockScores;
    n.a = q.id;
    n.b = k.id;
    n.block = block_rows;
    n.scalar = scale;
    n.value = Tensor(Q.rows, block_rows);
    for (int b = 0; b < nb; ++b) {
        const double* qb = Q.data.data() + static_cast<size_t>(b) * block_rows * d;
        const double* kb = K.data.data() + static_cast<size_t>(b) * block_rows * d;
        double* out = n.value.data.data() + static_cast<size_t>(b) * block_rows * block_rows;
        matmul_nt(qb, kb, out, block_rows, d, block_rows, false);
    }
    for (auto& x : n.value.data) x *= scale;
    return {push(std::move(n))};
}

Var Tape::block_apply(Var attn, Var v, int block_rows) {
    check(attn);
    check(v);
    const Tensor& A = nodes_[attn.id].value;
    const Tensor& V = nodes_[v.id].value;
    if (block_rows <= 0 || A.rows % block_rows != 0 || V.rows != A.rows || A.cols != block_rows)
        throw ShapeError("block_apply: inconsistent block shapes");
    const int nb = A.rows / block_rows;
    const int d = V.cols;
    Node n;
    n.op = kBlockApply;
    n.a = attn.id;
    n.b = v.id;
    n.block = block_rows;
    n.value = Tensor(A.rows, d);
    for (int b = 0; b < nb; ++b) {
        const double* ab = A.data.data() + static_cast<size_t>(b) * block_rows * block_rows;
        const double* vb = V.data.data() + static_cast<size_t>(b) * block_rows * d;
        double* out = n.value.data.data() + static_cast<size_t>(b) * block_rows * d;
        matmul_nn(ab, vb, out, block_rows, block_rows, d, false);
    }
    return {push(std::move(n))};
}

Var Tape::block_pool(Var z, const Tensor& alpha, int block_rows) {
    check(z);
    const Tensor& Z = nodes_[z.id].value;
    if (block_rows <= 0 || Z.rows % block_rows != 0)
        throw ShapeError("block_pool: rows not divisible by block height");
    if (alpha.numel() != block_rows) throw ShapeError("block_pool: weight length mismatch");
    const int nb = Z.rows / block_rows;
    const int d = Z.cols;
    Node n;
    n.op = kBlockPool;
    n.a = z.id;
    n.block = block_rows;
    n.aux = alpha;
    n.value = Tensor(nb, d);
    for (int b = 0; b < nb; ++b) {
        double* out = n.value.data.data() + static_cast<size_t>(b) * d;
        for (int t = 0; t < block_rows; ++t) {
            const double w = alpha.data[t];
            const double* zr = Z.data.data() + (static_cast<size_t>(b) * block_rows + t) * d;
            for (int j = 0; j < d; ++j) out[j] += w * zr[j];
        }
    }
    return {push(std::move(n))};
}

Var Tape::batched_matvec(Var wflat, Var q, int out_dim, int in_dim) {
    check(wflat);
    check(q);
    const Tensor& W = nodes_[wflat.id].value;
    const Tensor& Q = nodes_[q.id].value;
    if (W.cols != out_dim * in_dim || Q.cols != in_dim || Q.rows != W.rows)
        throw ShapeError("batched_matvec: shape mismatch");
    Node n;
    n.op = kBatchedMatVec;
    n.a = wflat.id;
    n.b = q.id;
    n.i0 = out_dim;
    n.i1 = in_dim;
    n.value = Tensor(W.rows, out_dim);
    for (int r = 0; r < W.rows; ++r) {
        const double* w = W.data.data() + static_cast<size_t>(r) * W.cols;
        const double* qq = Q.data.data() + static_cast<size_t>(r) * in_dim;
        double* out = n.value.data.data() + static_cast<size_t>(r) * out_dim;
        for (int i = 0; i < out_dim; ++i) {
            double s = 0.0;
            const double* wi = w + static_cast<size_t>(i) * in_dim;
            for (int j = 0; j < in_dim; ++j) s += wi[j] * qq[j];
            out[i] = s;
        }
    }
    return {push(std::move(n))};
}

Var Tape::row_dot(Var a, Var b) {
    check(a);
    check(b);
    const Tensor& A = nodes_[a.id].value;
    const Tensor& B = nodes_[b.id].value;
    if (!A.same_shape(B)) throw ShapeError("row_dot: shape mismatch");
    Node n;
    n.op = kRowDot;
    n.a = a.id;
    n.b = b.id;
    n.value = Tensor(A.rows, 1);
    for (int i = 0; i < A.rows; ++i) {
        double s = 0.0;
        for (int j = 0; j < A.cols; ++j) s += A.at(i, j) * B.at(i, j);
        n.value.at(i, 0) = s;
    }
    return {push(std::move(n))};
}

Var Tape::gather_per_row(Var x, std::vector<int> col_idx) {
    check(x);
    const Tensor& X = nodes_[x.id].value;
    if (static_cast<int>(col_idx.size()) != X.rows)
        throw ShapeError("gather_per_row: index count != rows");
    for (int i : col_idx)
        if (i < 0 || i >= X.cols) throw ShapeError("gather_per_row: column index out of range");
    Node n;
    n.op = kGatherPerRow;
    n.a = x.id;
    n.idx = std::move(col_idx);
    n.value = Tensor(X.rows, 1);
    for (int i = 0; i < X.rows; ++i) n.value.at(i, 0) = X.at(i, n.idx[i]);
    return {push(std::move(n))};
}

Var Tape::sum_all(Var a) {
    check(a);
    Node n;
    n.op = kSumAll;
    n.a = a.id;
    n.value = Tensor(1, 1);
    for (double x : nodes_[a.id].value.data) n.value.data[0] += x;
    return {push(std::move(n))};
}

Var Tape::mean_all(Var a) {
    check(a);
    const Tensor& A = nodes_[a.id].value;
    if (A.numel() == 0) throw ShapeError("mean_all: empty tensor");
    Node n;
    n.op = kMeanAll;
    n.a = a.id;
    n.value = Tensor(1, 1);
    for (double x : A.data) n.value.data[0] += x;
    n.value.data[0] /= A.numel();
    return {push(std::move(n))};
}

void Tape::backward(Var loss) {
    check(loss);
    if (nodes_[loss.id].value.rows != 1 || nodes_[loss.id].value.cols != 1)
        throw TapeError("backward: loss must be a scalar");
    for (auto& n : nodes_) {
        n.grad = Tensor(n.value.rows, n.value.cols);
    }
    nodes_[loss.id].grad.data[0] = 1.0;
    for (int id = loss.id; id >= 0; --id) backward_node(id);
    for (auto& [p, id] : param_ids_) {
        Parameter* pp = nodes_[id].parameter;
        const Tensor& g = nodes_[id].grad;
        for (int i = 0; i < g.numel(); ++i) pp->grad.data[i] += g.data[i];
    }
    ran_backward_ = true;
}

void Tape::backward_node(int id) {
    Node& n = nodes_[id];
    const Tensor& g = n.grad;
    bool any = false;
    for (double x : g.data)
        if (x != 0.0) {
            any = true;
            break;
        }
    if (!any) return;

    switch (n.op) {
        case kConstant:
        case kParam:
            break;
        case kMatMul: {
            const Tensor& A = nodes_[n.a].value;
            const Tensor& B = nodes_[n.b].value;
            matmul_nt(g.data.data(), B.data.data(), nodes_[n.a].grad.data.data(), A.rows, B.cols,
                      A.cols, true);
            matmul_tn(A.data.data(), g.data.data(), nodes_[n.b].grad.data.data(), A.rows, A.cols,
                      B.cols, true);
            break;
        }
        case kAffine: {
            const Tensor& X = nodes_[n.a].value;
            const Tensor& W = nodes_[n.b].value;
            // dX += g·W ; dW += gᵀ·X ; db += column sums of g
            matmul_nn(g.data.data(), W.data.data(), nodes_[n.a].grad.data.data(), X.rows, W.rows,
                      X.cols, true);
            matmul_tn(g.data.data(), X.data.data(), nodes_[n.b].grad.data.data(), X.rows, W.rows,
                      X.cols, true);
            Tensor& db = nodes_[n.c].grad;
            for (int i = 0; i < g.rows; ++i)
                for (int j = 0; j < g.cols; ++j) db.at(0, j) += g.at(i, j);
            break;
        }
        case kAdd: {
            Tensor& ga = nodes_[n.a].grad;
            Tensor& gb = nodes_[n.b].grad;
            for (int i = 0; i < g.numel(); ++i) {
                ga.data[i] += g.data[i];
                gb.data[i] += g.data[i];
            }
            break;
        }
        case kSub: {
            Tensor& ga = nodes_[n.a].grad;
            Tensor& gb = nodes_[n.b].grad;
            for (int i = 0; i < g.numel(); ++i) {
                ga.data[i] += g.data[i];
                gb.data[i] -= g.data[i];
            }
            break;
        }
        case kHadamard: {
            const Tensor& A = nodes_[n.a].value;
            const Tensor& B = nodes_[n.b].value;
            for (int i = 0; i < g.numel(); ++i) nodes_[n.a].grad.data[i] += g.data[i] * B.data[i];
            for (int i = 0; i < g.numel(); ++i) nodes_[n.b].grad.data[i] += g.data[i] * A.data[i];
            break;
        }
        case kScale: {
            Tensor& ga = nodes_[n.a].grad;
            for (int i = 0; i < g.numel(); ++i) ga.data[i] += n.scalar * g.data[i];
            break;
        }
        case kRelu: {
            const Tensor& X = nodes_[n.a].value;
            Tensor& ga = nodes_[n.a].grad;
            for (int i = 0; i < g.numel(); ++i)
                if (X.data[i] > 0.0) ga.data[i] += g.data[i];
            break;
        }
        case kElu: {
            const Tensor& X = nodes_[n.a].value;
            Tensor& ga = nodes_[n.a].grad;
            for (int i = 0; i < g.numel(); ++i) {
                double d = X.data[i] > 0.0 ? 1.0 : n.value.data[i] + 1.0;
                ga.data[i] += g.data[i] * d;
            }
            break;
        }
        case kAbs: {
            const Tensor& X = nodes_[n.a].value;
            Tensor& ga = nodes_[n.a].grad;
            for (int i = 0; i < g.numel(); ++i) {
                double s = X.data[i] > 0.0 ? 1.0 : (X.data[i] < 0.0 ? -1.0 : 0.0);
                ga.data[i] += g.data[i] * s;
            }
            break;
        }
        case kRowSoftmax: {
            const Tensor& Y = n.value;
            Tensor& ga = nodes_[n.a].grad;
            for (int i = 0; i < Y.rows; ++i) {
                double dot = 0.0;
                for (int j = 0; j < Y.cols; ++j) dot += g.at(i, j) * Y.at(i, j);
                for (int j = 0; j < Y.cols; ++j)
                    ga.at(i, j) += Y.at(i, j) * (g.at(i, j) - dot);
            }
            break;
        }
        case kRowLayerNorm: {
            const Tensor& gain = nodes_[n.b].value;
            Tensor& gx = nodes_[n.a].grad;
            Tensor& ggain = nodes_[n.b].grad;
            Tensor& gbias = nodes_[n.c].grad;
            const int c = n.value.cols;
            for (int i = 0; i < n.value.rows; ++i) {
                double m1 = 0.0, m2 = 0.0;
                for (int j = 0; j < c; ++j) {
                    double dxh = g.at(i, j) * gain.at(0, j);
                    m1 += dxh;
                    m2 += dxh * n.aux.at(i, j);
                }
                m1 /= c;
                m2 /= c;
                const double inv = n.aux2.at(i, 0);
                for (int j = 0; j < c; ++j) {
                    double dxh = g.at(i, j) * gain.at(0, j);
                    gx.at(i, j) += inv * (dxh - m1 - n.aux.at(i, j) * m2);
                    ggain.at(0, j) += g.at(i, j) * n.aux.at(i, j);
                    gbias.at(0, j) += g.at(i, j);
                }
            }
            break;
        }
        case kConcatCols: {
            int off = 0;
            for (int pid : n.many) {
                Tensor& gp = nodes_[pid].grad;
                for (int i = 0; i < gp.rows; ++i)
                    for (int j = 0; j < gp.cols; ++j) gp.at(i, j) += g.at(i, off + j);
                off += gp.cols;
            }
            break;
        }
        case kConcatRows: {
            int off = 0;
            for (int pid : n.many) {
                Tensor& gp = nodes_[pid].grad;
                for (int i = 0; i < gp.rows; ++i)
                    for (int j = 0; j < gp.cols; ++j) gp.at(i, j) += g.at(off + i, j);
                off += gp.rows;
            }
            break;
        }
        case kReshape: {
            Tensor& ga = nodes_[n.a].grad;
            for (int i = 0; i < g.numel(); ++i) ga.data[i] += g.data[i];
            break;
        }
        case kBlockScores: {
            const Tensor& Q = nodes_[n.a].value;
            const Tensor& K = nodes_[n.b].value;
            Tensor& gq = nodes_[n.a].grad;
            Tensor& gk = nodes_[n.b].grad;
            const int r = n.block;
            const int d = Q.cols;
            const int nb = Q.rows / r;
            Tensor gs(r, r);
            for (int b = 0; b < nb; ++b) {
                const size_t so = static_cast<size_t>(b) * r * r;
                for (int i = 0; i < r * r; ++i) gs.data[i] = g.data[so + i] * n.scalar;
                const size_t vo = static_cast<size_t>(b) * r * d;
                matmul_nn(gs.data.data(), K.data.data() + vo, gq.data.data() + vo, r, r, d, true);
                matmul_tn(gs.data.data(), Q.data.data() + vo, gk.data.data() + vo, r, r, d, true);
            }
            break;
        }
        case kBlockApply: {
            const Tensor& A = nodes_[n.a].value;
            const Tensor& V = nodes_[n.b].value;
            Tensor& ga = nodes_[n.a].grad;
            Tensor& gv = nodes_[n.b].grad;
            const int r = n.block;
            const int d = V.cols;
            const int nb = A.rows / r;
            for (int b = 0; b < nb; ++b) {
                const size_t ao = static_cast<size_t>(b) * r * r;
                const size_t vo = static_cast<size_t>(b) * r * d;
                matmul_nt(g.data.data() + vo, V.data.data() + vo, ga.data.data() + ao, r, d, r,
                          true);
                matmul_tn(A.data.data() + ao, g.data.data() + vo, gv.data.data() + vo, r, r, d,
                          true);
            }
            break;
        }
        case kBlockPool: {
            Tensor& gz = nodes_[n.a].grad;
            const int r = n.block;
            const int d = n.value.cols;
            const int nb = n.value.rows;
            for (int b = 0; b < nb; ++b) {
                const double* gb = g.data.data() + static_cast<size_t>(b) * d;
                for (int t = 0; t < r; ++t) {
                    const double w = n.aux.data[t];
                    double* dst = gz.data.data() + (static_cast<size_t>(b) * r + t) * d;
                    for (int j = 0; j < d; ++j) dst[j] += w * gb[j];
                }
            }
            break;
        }
        case kBatchedMatVec: {
            const Tensor& W = nodes_[n.a].value;
            const Tensor& Q = nodes_[n.b].value;
            Tensor& gw = nodes_[n.a].grad;
            Tensor& gq = nodes_[n.b].grad;
            const int odim = n.i0, idim = n.i1;
            for (int robs = 0; robs < W.rows; ++robs) {
                const double* gr = g.data.data() + static_cast<size_t>(robs) * odim;
                const double* qq = Q.data.data() + static_cast<size_t>(robs) * idim;
                const double* w = W.data.data() + static_cast<size_t>(robs) * W.cols;
                double* gwr = gw.data.data() + static_cast<size_t>(robs) * W.cols;
                double* gqr = gq.data.data() + static_cast<size_t>(robs) * idim;
                for (int i = 0; i < odim; ++i) {
                    const double gi = gr[i];
                    if (gi == 0.0) continue;
                    for (int j = 0; j < idim; ++j) {
                        gwr[static_cast<size_t>(i) * idim + j] += gi * qq[j];
                        gqr[j] += gi * w[static_cast<size_t>(i) * idim + j];
                    }
                }
            }
            break;
        }
        case kRowDot: {
            const Tensor& A = nodes_[n.a].value;
            const Tensor& B = nodes_[n.b].value;
            Tensor& ga = nodes_[n.a].grad;
            Tensor& gb = nodes_[n.b].grad;
            for (int i = 0; i < A.rows; ++i) {
                const double gi = g.at(i, 0);
                if (gi == 0.0) continue;
                for (int j = 0; j < A.cols; ++j) {
                    ga.at(i, j) += gi * B.at(i, j);
                    gb.at(i, j) += gi * A.at(i, j);
                }
            }
            break;
        }
        case kGatherPerRow: {
            Tensor& gx = nodes_[n.a].grad;
            for (int i = 0; i < n.value.rows; ++i) gx.at(i, n.idx[i]) += g.at(i, 0);
            break;
        }
        case kSumAll: {
            Tensor& ga = nodes_[n.a].grad;
            const double gv = g.data[0];
            for (auto& x : ga.data) x += gv;
            break;
        }
        case kMeanAll: {
            Tensor& ga = nodes_[n.a].grad;
            const double gv = g.data[0] / nodes_[n.a].value.numel();
            for (auto& x : ga.data) x += gv;
            break;
        }
        default:
            throw TapeError("backward: unknown op");
    }
}

double Tape::min_abs_kink_input() const {
    double m = std::numeric_limits<double>::infinity();
    for (const auto& n : nodes_) {
        if (n.op != kRelu && n.op != kAbs) continue;
        for (double x : nodes_[n.a].value.data) m = std::min(m, std::fabs(x));
    }
    return m;
}

double Tape::max_layer_norm_inv_std() const {
    double m = 0.0;
    for (const auto& n : nodes_) {
        if (n.op != kRowLayerNorm) continue;
        for (double inv : n.aux2.data) m = std::max(m, inv);
    }
    return m;
}

Tensor uniform_tensor(Rng& rng, int rows, int cols, double lo, double hi) {
    Tensor t(rows, cols);
    for (auto& x : t.data) x = rng.uniform(lo, hi);
    return t;
}

}  // namespace mergerl
