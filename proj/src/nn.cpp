#include "mergerl/nn.hpp"

#include <cmath>

namespace mergerl {

Var attention_head(Tape& tape, Var S, AttentionHeadParams& head, int seq_len) {
    const int dj = head.Wq.value.cols;
    if (head.Wk.value.cols != dj || head.Wv.value.cols != dj)
        throw ShapeError("attention_head: head dimensions disagree");
    Var q = tape.matmul(S, tape.param(head.Wq));
    Var k = tape.matmul(S, tape.param(head.Wk));
    Var v = tape.matmul(S, tape.param(head.Wv));
    Var scores = tape.block_scores(q, k, seq_len, 1.0 / std::sqrt(static_cast<double>(dj)));
    Var attn = tape.row_softmax(scores);
    return tape.block_apply(attn, v, seq_len);
}

Var multi_head_attention(Tape& tape, Var S, std::vector<AttentionHeadParams>& heads, Parameter& Wo,
                         int seq_len) {
    if (heads.empty()) throw ShapeError("multi_head_attention: no heads");
    int d = 0;
    for (auto& h : heads) d += h.Wq.value.cols;
    if (Wo.value.rows != d) throw ShapeError("multi_head_attention: Wo input side mismatch");
    std::vector<Var> outs;
    outs.reserve(heads.size());
    for (auto& h : heads) outs.push_back(attention_head(tape, S, h, seq_len));
    Var cat = outs.size() == 1 ? outs[0] : tape.concat_cols(outs);
    return tape.matmul(cat, tape.param(Wo));
}

Var ffn_residual(Tape& tape, Var x, FfnParams& ffn, Parameter& ln_gain, Parameter& ln_bias,
                 double rho) {
    const int d = tape.value(x).cols;
    if (ffn.W1.value.cols != d || ffn.W2.value.rows != d)
        throw ShapeError("ffn_residual: FFN width does not match input");
    Var h = tape.relu(tape.affine(x, ffn.W1, ffn.b1));
    Var y = tape.affine(h, ffn.W2, ffn.b2);
    return tape.row_layer_norm(tape.add(x, y), ln_gain, ln_bias, rho);
}

Tensor affine_forward(const Tensor& x, const Tensor& W, const Tensor& b) {
    Tape tape;
    Parameter pw("W", W), pb("b", b);
    Var out = tape.affine(tape.constant(x), pw, pb);
    return tape.value(out);
}

std::vector<double> layer_norm(const std::vector<double>& x, const std::vector<double>& gain,
                               const std::vector<double>& bias, double rho) {
    Tape tape;
    Parameter pg("gain", Tensor::row(gain)), pb("bias", Tensor::row(bias));
    Var out = tape.row_layer_norm(tape.constant(Tensor::row(x)), pg, pb, rho);
    return tape.value(out).data;
}

std::vector<double> softmax(const std::vector<double>& x) {
    Tape tape;
    Var out = tape.row_softmax(tape.constant(Tensor::row(x)));
    return tape.value(out).data;
}

Parameter make_affine_weight(const std::string& name, int out_dim, int in_dim, Rng& rng) {
    const double bound = std::sqrt(1.0 / in_dim);
    return Parameter(name, uniform_tensor(rng, out_dim, in_dim, -bound, bound));
}

Parameter make_bias(const std::string& name, int dim) {
    return Parameter(name, Tensor(1, dim));
}

}  // namespace mergerl
