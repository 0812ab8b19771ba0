#include "mergerl/qmix.hpp"

#include <cmath>

namespace mergerl {

AgentNet AgentNet::init(const QNetConfig& cfg, Rng& rng) {
    AgentNet n{
        .enc = EncoderParams::init(cfg.w, cfg.d_model, cfg.n_heads, cfg.ffn_hidden, rng),
        .head_W1 = make_affine_weight("qnet.W1", cfg.q_hidden, cfg.encoded_dim(), rng),
        .head_b1 = make_bias("qnet.b1", cfg.q_hidden),
        .head_W2 = make_affine_weight("qnet.W2", cfg.n_actions(), cfg.q_hidden, rng),
        .head_b2 = make_bias("qnet.b2", cfg.n_actions()),
    };
    return n;
}

std::vector<Parameter*> AgentNet::params() {
    std::vector<Parameter*> out = enc.params();
    out.push_back(&head_W1);
    out.push_back(&head_b1);
    out.push_back(&head_W2);
    out.push_back(&head_b2);
    return out;
}

MixerNet MixerNet::init(int n_agents, int gs_dim, int hidden, int b2_hidden, Rng& rng) {
    MixerNet m{
        .n_agents = n_agents,
        .gs_dim = gs_dim,
        .hidden = hidden,
        .w1_W = make_affine_weight("mixer.w1.W", hidden * n_agents, gs_dim, rng),
        .w1_b = make_bias("mixer.w1.b", hidden * n_agents),
        .b1_W = make_affine_weight("mixer.b1.W", hidden, gs_dim, rng),
        .b1_b = make_bias("mixer.b1.b", hidden),
        .w2_W = make_affine_weight("mixer.w2.W", hidden, gs_dim, rng),
        .w2_b = make_bias("mixer.w2.b", hidden),
        .b2_W1 = make_affine_weight("mixer.b2.W1", b2_hidden, gs_dim, rng),
        .b2_b1 = make_bias("mixer.b2.b1", b2_hidden),
        .b2_W2 = make_affine_weight("mixer.b2.W2", 1, b2_hidden, rng),
        .b2_b2 = make_bias("mixer.b2.b2", 1),
    };
    return m;
}

std::vector<Parameter*> MixerNet::params() {
    return {&w1_W, &w1_b, &b1_W, &b1_b, &w2_W, &w2_b, &b2_W1, &b2_b1, &b2_W2, &b2_b2};
}

Nets Nets::init(const QNetConfig& cfg, uint64_t seed) {
    Rng rng(seed);
    Nets n{.cfg = cfg,
           .agent = AgentNet::init(cfg, rng),
           .mixer = MixerNet::init(cfg.n_agents, cfg.global_state_dim(), cfg.mix_hidden,
                                   cfg.mix_b2_hidden, rng)};
    return n;
}

std::vector<Parameter*> Nets::params() {
    auto out = agent.params();
    auto mp = mixer.params();
    out.insert(out.end(), mp.begin(), mp.end());
    return out;
}

void Nets::copy_from(const Nets& other) {
    auto dst = params();
    auto src = const_cast<Nets&>(other).params();
    if (dst.size() != src.size()) throw ShapeError("Nets::copy_from: parameter count mismatch");
    for (size_t i = 0; i < dst.size(); ++i) {
        if (!dst[i]->value.same_shape(src[i]->value))
            throw ShapeError("Nets::copy_from: shape mismatch at " + src[i]->name);
        dst[i]->value = src[i]->value;
    }
}

Var agent_q_batch(Tape& tape, Var own, Var front_hist, Var opp_hist, AgentNet& net,
                  const QNetConfig& cfg) {
    Var encoded = encode_batch(tape, own, front_hist, opp_hist, net.enc, cfg.ablate_attention);
    Var h = tape.relu(tape.affine(encoded, net.head_W1, net.head_b1));
    return tape.affine(h, net.head_W2, net.head_b2);
}

Var mix_batch(Tape& tape, Var q, Var gs, MixerNet& net) {
    const int n = tape.value(q).cols;
    if (n != net.n_agents || tape.value(gs).cols != net.gs_dim)
        throw ShapeError("mix_batch: shapes inconsistent with mixer");
    Var w1 = tape.absval(tape.affine(gs, net.w1_W, net.w1_b));  // (B × hidden·N)
    Var b1 = tape.affine(gs, net.b1_W, net.b1_b);               // (B × hidden)
    Var hidden = tape.elu(tape.add(tape.batched_matvec(w1, q, net.hidden, n), b1));
    Var w2 = tape.absval(tape.affine(gs, net.w2_W, net.w2_b));  // (B × hidden)
    Var b2h = tape.relu(tape.affine(gs, net.b2_W1, net.b2_b1));
    Var b2 = tape.affine(b2h, net.b2_W2, net.b2_b2);            // (B × 1)
    return tape.add(tape.row_dot(w2, hidden), b2);
}

std::vector<double> agent_q(const InformationState& scaled_obs, AgentNet& net,
                            const QNetConfig& cfg) {
    Tape tape;
    Var own = tape.constant(Tensor::row(scaled_obs.own));
    Var f = tape.constant(scaled_obs.front_hist);
    Var o = tape.constant(scaled_obs.opp_hist);
    return tape.value(agent_q_batch(tape, own, f, o, net, cfg)).data;
}

double mix(const std::vector<double>& q_values, const std::vector<double>& global_state,
           MixerNet& net) {
    Tape tape;
    Var q = tape.constant(Tensor::row(q_values));
    Var gs = tape.constant(Tensor::row(global_state));
    return tape.value(mix_batch(tape, q, gs, net)).data[0];
}

int greedy_action(std::span<const double> q_values) {
    if (q_values.size() != kNumActions)
        throw ShapeError("greedy_action: expected one value per action");
    // scan in tie-break preference order: |a| ascending, negative before positive
    static constexpr std::array<int, 9> preference = {4, 3, 5, 2, 6, 1, 7, 0, 8};
    int best = preference[0];
    for (int idx : preference)
        if (q_values[idx] > q_values[best]) best = idx;
    return best;
}

std::vector<int> greedy_joint_action(const std::vector<InformationState>& scaled_obs,
                                     AgentNet& net, const QNetConfig& cfg) {
    std::vector<int> actions;
    actions.reserve(scaled_obs.size());
    for (const auto& obs : scaled_obs) {
        auto q = agent_q(obs, net, cfg);
        actions.push_back(greedy_action(q));
    }
    return actions;
}

std::vector<int> epsilon_greedy(const std::vector<InformationState>& scaled_obs, AgentNet& net,
                                const QNetConfig& cfg, double epsilon, Rng& rng) {
    if (epsilon < 0.0 || epsilon > 1.0)
        throw ContractViolation("epsilon_greedy: epsilon outside [0, 1]");
    std::vector<int> actions;
    actions.reserve(scaled_obs.size());
    for (const auto& obs : scaled_obs) {
        if (epsilon > 0.0 && rng.unit() < epsilon) {
            actions.push_back(rng.uniform_int(kNumActions));
        } else {
            auto q = agent_q(obs, net, cfg);
            actions.push_back(greedy_action(q));
        }
    }
    return actions;
}

std::vector<double> build_global_state(const WorldState& world, int n_agents,
                                       const ScaleConstants& sc) {
    std::vector<double> gs(5 * static_cast<size_t>(n_agents), 0.0);
    for (int i = 0; i < n_agents; ++i) {
        const auto& v = world.vehicles.at(i);
        if (v.status != VehicleStatus::active) continue;
        auto k = scale_kinematics(v.kinematics, sc);
        for (int j = 0; j < 4; ++j) gs[4 * i + j] = k[j];
        gs[4 * n_agents + i] = 1.0;
    }
    return gs;
}

double discounted_return(std::span<const double> rewards, double gamma) {
    double g = 0.0;
    for (auto it = rewards.rbegin(); it != rewards.rend(); ++it) g = *it + gamma * g;
    return g;
}

}  // namespace mergerl
