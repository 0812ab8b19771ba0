#pragma once

#include <vector>

#include "mergerl/tape.hpp"

namespace mergerl {

constexpr double kLayerNormEps = 1e-5;

struct AttentionHeadParams {
    Parameter Wq;  // (n×d_j)
    Parameter Wk;
    Parameter Wv;
};

// Scaled dot-product attention for one head over a stack of equally sized
// sequences: S is (nblocks·seq_len)×n, output (nblocks·seq_len)×d_j.
Var attention_head(Tape& tape, Var S, AttentionHeadParams& head, int seq_len);

// Multi-head attention: concatenated head outputs projected by Wo (d×d_o).
Var multi_head_attention(Tape& tape, Var S, std::vector<AttentionHeadParams>& heads, Parameter& Wo,
                         int seq_len);

struct FfnParams {
    Parameter W1;  // (hidden×d)
    Parameter b1;
    Parameter W2;  // (d×hidden)
    Parameter b2;
};

// LN(x + FFN(x)), rows treated independently. FFN is affine→relu→affine.
Var ffn_residual(Tape& tape, Var x, FfnParams& ffn, Parameter& ln_gain, Parameter& ln_bias,
                 double rho = kLayerNormEps);

// --- plain-value forms (single input, fresh throwaway tape) ----------------
Tensor affine_forward(const Tensor& x, const Tensor& W, const Tensor& b);
std::vector<double> layer_norm(const std::vector<double>& x, const std::vector<double>& gain,
                               const std::vector<double>& bias, double rho = kLayerNormEps);
std::vector<double> softmax(const std::vector<double>& x);

// fan-in uniform init: entries ~ U(−√(1/fan_in), +√(1/fan_in))
Parameter make_affine_weight(const std::string& name, int out_dim, int in_dim, Rng& rng);
Parameter make_bias(const std::string& name, int dim);

}  // namespace mergerl
