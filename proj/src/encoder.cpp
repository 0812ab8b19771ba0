#include "mergerl/encoder.hpp"

#include <cmath>

namespace mergerl {

Tensor temporal_weights(int w) {
    if (w < 0) throw ShapeError("temporal_weights: w must be non-negative");
    const int n = w + 1;
    std::vector<double> grid(n);
    for (int i = 0; i < n; ++i) grid[i] = n == 1 ? 0.5 : 0.5 + 0.5 * i / w;
    return Tensor::col(softmax(grid));
}

std::vector<double> scale_kinematics(const KinematicState& k, const ScaleConstants& sc) {
    return {k.x / sc.x, k.y / sc.y, k.v / sc.v, k.a / sc.a};
}

namespace {

Tensor scale_history(const Tensor& h, const ScaleConstants& sc) {
    Tensor out = h;
    for (int i = 0; i < out.rows; ++i) {
        out.at(i, 0) /= sc.x;
        out.at(i, 1) /= sc.y;
        out.at(i, 2) /= sc.v;
        out.at(i, 3) /= sc.a;
    }
    return out;
}

}  // namespace

InformationState scale_information_state(const InformationState& raw, const ScaleConstants& sc) {
    InformationState s;
    s.own = {raw.own[0] / sc.x, raw.own[1] / sc.y, raw.own[2] / sc.v, raw.own[3] / sc.a};
    s.front_hist = scale_history(raw.front_hist, sc);
    s.opp_hist = scale_history(raw.opp_hist, sc);
    return s;
}

void StreamParams::collect(std::vector<Parameter*>& out) {
    out.push_back(&ln_in_gain);
    out.push_back(&ln_in_bias);
    out.push_back(&proj_W);
    out.push_back(&proj_b);
    for (auto& h : heads) {
        out.push_back(&h.Wq);
        out.push_back(&h.Wk);
        out.push_back(&h.Wv);
    }
    out.push_back(&Wo);
    out.push_back(&ffn.W1);
    out.push_back(&ffn.b1);
    out.push_back(&ffn.W2);
    out.push_back(&ffn.b2);
    out.push_back(&ln_out_gain);
    out.push_back(&ln_out_bias);
}

namespace {

StreamParams init_stream(const std::string& prefix, int d_model, int n_heads, int ffn_hidden,
                         Rng& rng) {
    if (d_model % n_heads != 0)
        throw ShapeError("EncoderParams: d_model must be divisible by the head count");
    const int dj = d_model / n_heads;
    StreamParams s{
        .ln_in_gain = Parameter(prefix + ".ln_in.gain", Tensor::full(1, 4, 1.0)),
        .ln_in_bias = Parameter(prefix + ".ln_in.bias", Tensor(1, 4)),
        .proj_W = make_affine_weight(prefix + ".proj.W", d_model, 4, rng),
        .proj_b = make_bias(prefix + ".proj.b", d_model),
        .heads = {},
        .Wo = Parameter(prefix + ".mha.Wo",
                        uniform_tensor(rng, d_model, d_model, -std::sqrt(1.0 / d_model),
                                       std::sqrt(1.0 / d_model))),
        .ffn = {make_affine_weight(prefix + ".ffn.W1", ffn_hidden, d_model, rng),
                make_bias(prefix + ".ffn.b1", ffn_hidden),
                make_affine_weight(prefix + ".ffn.W2", d_model, ffn_hidden, rng),
                make_bias(prefix + ".ffn.b2", d_model)},
        .ln_out_gain = Parameter(prefix + ".ln_out.gain", Tensor::full(1, d_model, 1.0)),
        .ln_out_bias = Parameter(prefix + ".ln_out.bias", Tensor(1, d_model)),
    };
    const double bound = std::sqrt(1.0 / d_model);
    for (int h = 0; h < n_heads; ++h) {
        const std::string hp = prefix + ".mha.h" + std::to_string(h);
        s.heads.push_back({Parameter(hp + ".Wq", uniform_tensor(rng, d_model, dj, -bound, bound)),
                           Parameter(hp + ".Wk", uniform_tensor(rng, d_model, dj, -bound, bound)),
                           Parameter(hp + ".Wv", uniform_tensor(rng, d_model, dj, -bound, bound))});
    }
    return s;
}

}  // namespace

EncoderParams EncoderParams::init(int w, int d_model, int n_heads, int ffn_hidden, Rng& rng) {
    EncoderParams p;
    p.w = w;
    p.d_model = d_model;
    p.n_heads = n_heads;
    p.ffn_hidden = ffn_hidden;
    p.front = init_stream("enc.front", d_model, n_heads, ffn_hidden, rng);
    p.opp = init_stream("enc.opp", d_model, n_heads, ffn_hidden, rng);
    p.alpha = temporal_weights(w);
    return p;
}

std::vector<Parameter*> EncoderParams::params() {
    std::vector<Parameter*> out;
    front.collect(out);
    opp.collect(out);
    return out;
}

namespace {

Var encode_stream(Tape& tape, Var hist, StreamParams& s, const Tensor& alpha, int seq_len,
                  bool ablate) {
    Var normed = tape.row_layer_norm(hist, s.ln_in_gain, s.ln_in_bias, kLayerNormEps);
    Var tokens = tape.affine(normed, s.proj_W, s.proj_b);
    Var z = ablate ? tokens : multi_head_attention(tape, tokens, s.heads, s.Wo, seq_len);
    Var pooled = tape.block_pool(z, alpha, seq_len);
    return ffn_residual(tape, pooled, s.ffn, s.ln_out_gain, s.ln_out_bias);
}

}  // namespace

Var encode_batch(Tape& tape, Var own, Var front_hist, Var opp_hist, EncoderParams& p,
                 bool ablate_attention) {
    const int seq_len = p.w + 1;
    const int n = tape.value(own).rows;
    if (tape.value(own).cols != 4 || tape.value(front_hist).rows != n * seq_len ||
        tape.value(front_hist).cols != 4 || tape.value(opp_hist).rows != n * seq_len ||
        tape.value(opp_hist).cols != 4)
        throw ShapeError("encode_batch: input shapes inconsistent with encoder config");
    Var ef = encode_stream(tape, front_hist, p.front, p.alpha, seq_len, ablate_attention);
    Var eo = encode_stream(tape, opp_hist, p.opp, p.alpha, seq_len, ablate_attention);
    return tape.concat_cols({own, ef, eo});
}

std::vector<double> encode(const InformationState& scaled, EncoderParams& p,
                           bool ablate_attention) {
    Tape tape;
    Var own = tape.constant(Tensor::row(scaled.own));
    Var f = tape.constant(scaled.front_hist);
    Var o = tape.constant(scaled.opp_hist);
    Var out = encode_batch(tape, own, f, o, p, ablate_attention);
    return tape.value(out).data;
}

std::vector<double> pooled_embedding(const Tensor& Z, const Tensor& alpha) {
    if (alpha.numel() != Z.rows) throw ShapeError("pooled_embedding: weight length mismatch");
    Tape tape;
    Var out = tape.block_pool(tape.constant(Z), alpha, Z.rows);
    return tape.value(out).data;
}

}  // namespace mergerl
