#pragma once

#include <array>
#include <span>
#include <vector>

#include "mergerl/encoder.hpp"

namespace mergerl {

// Ordered discrete action set (m/s²).
constexpr std::array<double, 9> kActionSet = {-6, -3, -2, -1, 0, 1, 2, 3, 6};
constexpr int kNumActions = 9;
constexpr int kZeroActionIndex = 4;

struct QNetConfig {
    int n_agents = 16;
    int w = 9;
    int d_model = 32;
    int n_heads = 4;
    int ffn_hidden = 64;
    int q_hidden = 64;
    int mix_hidden = 32;
    int mix_b2_hidden = 32;
    bool ablate_attention = false;

    int n_actions() const { return kNumActions; }
    int global_state_dim() const { return 5 * n_agents; }
    int encoded_dim() const { return 4 + 2 * d_model; }
};

// Shared per-agent utility network: encoder plus a two-layer action-value head.
struct AgentNet {
    EncoderParams enc;
    Parameter head_W1, head_b1;  // (q_hidden×encoded), (1×q_hidden)
    Parameter head_W2, head_b2;  // (9×q_hidden), (1×9)

    static AgentNet init(const QNetConfig& cfg, Rng& rng);
    std::vector<Parameter*> params();
};

// Hypernetwork-conditioned monotone mixer:
//   Q_tot = |w2(gs)|ᵀ · elu(|W1(gs)|·q + b1(gs)) + b2(gs)
struct MixerNet {
    int n_agents = 0;
    int gs_dim = 0;
    int hidden = 0;
    Parameter w1_W, w1_b;      // gs → hidden·n_agents
    Parameter b1_W, b1_b;      // gs → hidden
    Parameter w2_W, w2_b;      // gs → hidden
    Parameter b2_W1, b2_b1;    // gs → b2_hidden
    Parameter b2_W2, b2_b2;    // b2_hidden → 1

    static MixerNet init(int n_agents, int gs_dim, int hidden, int b2_hidden, Rng& rng);
    std::vector<Parameter*> params();
};

struct Nets {
    QNetConfig cfg;
    AgentNet agent;
    MixerNet mixer;

    static Nets init(const QNetConfig& cfg, uint64_t seed);
    std::vector<Parameter*> params();
    void copy_from(const Nets& other);  // hard target sync
};

// --- tape builders (batched over stacked samples) ---------------------------
// own (n×4), hists ((n·(w+1))×4) → action values (n×9)
Var agent_q_batch(Tape& tape, Var own, Var front_hist, Var opp_hist, AgentNet& net,
                  const QNetConfig& cfg);
// q (B×N), gs (B×gs_dim) → Q_tot (B×1)
Var mix_batch(Tape& tape, Var q, Var gs, MixerNet& net);

// --- single-sample forms -----------------------------------------------------
std::vector<double> agent_q(const InformationState& scaled_obs, AgentNet& net,
                            const QNetConfig& cfg);
double mix(const std::vector<double>& q_values, const std::vector<double>& global_state,
           MixerNet& net);

// Greedy argmax over the 9-action set; ties prefer the smaller |acceleration|,
// then the negative one.
int greedy_action(std::span<const double> q_values);

std::vector<int> greedy_joint_action(const std::vector<InformationState>& scaled_obs,
                                     AgentNet& net, const QNetConfig& cfg);
std::vector<int> epsilon_greedy(const std::vector<InformationState>& scaled_obs, AgentNet& net,
                                const QNetConfig& cfg, double epsilon, Rng& rng);

// Fixed-width mixer conditioning input: every agent's scaled kinematics
// (zeros when not active) followed by the activity flags. Length 5N.
std::vector<double> build_global_state(const WorldState& world, int n_agents,
                                       const ScaleConstants& sc = {});

// --- returns -----------------------------------------------------------------
double discounted_return(std::span<const double> rewards, double gamma);

}  // namespace mergerl
