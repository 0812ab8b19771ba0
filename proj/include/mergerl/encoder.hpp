#pragma once

#include <vector>

#include "mergerl/nn.hpp"
#include "mergerl/sim.hpp"

namespace mergerl {

// Fixed softmax pooling weights over the temporal axis: softmax of the evenly
// spaced ramp 0.5 … 1.0 over w+1 points. Strictly increasing, sums to 1.
Tensor temporal_weights(int w);  // (w+1)×1

// Fixed scaling applied to every raw kinematic 4-vector before the networks.
struct ScaleConstants {
    double x = 400.0;
    double y = 10.0;
    double v = 15.0;
    double a = 6.0;
};

InformationState scale_information_state(const InformationState& raw,
                                         const ScaleConstants& sc = {});
std::vector<double> scale_kinematics(const KinematicState& k, const ScaleConstants& sc = {});

// One attention stream: input layer norm, token projection, multi-head
// attention, temporal pooling, and a residual FFN with output layer norm.
struct StreamParams {
    Parameter ln_in_gain, ln_in_bias;   // (1×4)
    Parameter proj_W, proj_b;           // (d_model×4), (1×d_model)
    std::vector<AttentionHeadParams> heads;
    Parameter Wo;                       // (d_model×d_model)
    FfnParams ffn;
    Parameter ln_out_gain, ln_out_bias;  // (1×d_model)

    void collect(std::vector<Parameter*>& out);
};

struct EncoderParams {
    int w = 9;
    int d_model = 32;
    int n_heads = 4;
    int ffn_hidden = 64;
    StreamParams front;
    StreamParams opp;
    Tensor alpha;  // (w+1)×1, fixed, never trained

    static EncoderParams init(int w, int d_model, int n_heads, int ffn_hidden, Rng& rng);
    std::vector<Parameter*> params();
    int output_dim() const { return 4 + 2 * d_model; }
};

// Tape builder over a stack of n samples. own is (n×4); each history is
// (n·(w+1))×4 with samples stacked along the row axis. Output n×(4+2·d_model).
// With ablate_attention the multi-head attention stage is skipped and the
// projected tokens are pooled directly; shapes are unchanged.
Var encode_batch(Tape& tape, Var own, Var front_hist, Var opp_hist, EncoderParams& p,
                 bool ablate_attention);

// Single-sample convenience over an already scaled information state.
std::vector<double> encode(const InformationState& scaled, EncoderParams& p,
                           bool ablate_attention);

// Weighted column sum Zᵀα for one (w+1)×d block.
std::vector<double> pooled_embedding(const Tensor& Z, const Tensor& alpha);

}  // namespace mergerl
