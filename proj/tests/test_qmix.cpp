#include <doctest.h>

#include <cmath>

#include "mergerl/qmix.hpp"

using namespace mergerl;

namespace {

QNetConfig tiny_cfg(int n_agents = 2) {
    QNetConfig cfg;
    cfg.n_agents = n_agents;
    cfg.w = 2;
    cfg.d_model = 8;
    cfg.n_heads = 2;
    cfg.ffn_hidden = 8;
    cfg.q_hidden = 8;
    cfg.mix_hidden = 4;
    cfg.mix_b2_hidden = 4;
    return cfg;
}

InformationState random_obs(Rng& rng, int w) {
    InformationState s;
    s.own = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    s.front_hist = uniform_tensor(rng, w + 1, 4, -1.0, 1.0);
    s.opp_hist = uniform_tensor(rng, w + 1, 4, -1.0, 1.0);
    return s;
}

void zero_mixer(MixerNet& m) {
    for (Parameter* p : m.params()) p->value.fill(0.0);
}

}  // namespace

TEST_CASE("agent_q: zero-weight head makes every action value the output bias") {
    Rng rng(61);
    auto cfg = tiny_cfg();
    AgentNet net = AgentNet::init(cfg, rng);
    net.head_W2.value.fill(0.0);
    for (int k = 0; k < kNumActions; ++k) net.head_b2.value.at(0, k) = 0.5 - 0.1 * k;
    auto q = agent_q(random_obs(rng, cfg.w), net, cfg);
    REQUIRE(q.size() == kNumActions);
    for (int k = 0; k < kNumActions; ++k) CHECK(q[k] == doctest::Approx(0.5 - 0.1 * k));
}

TEST_CASE("agent_q: identical observations give identical values (shared parameters)") {
    Rng rng(62);
    auto cfg = tiny_cfg();
    AgentNet net = AgentNet::init(cfg, rng);
    auto obs = random_obs(rng, cfg.w);
    auto q1 = agent_q(obs, net, cfg);
    auto q2 = agent_q(obs, net, cfg);
    for (int k = 0; k < kNumActions; ++k) CHECK(q1[k] == q2[k]);
}

TEST_CASE("mix: all-zero hypernetworks except the final bias give a constant mixer") {
    Rng rng(63);
    MixerNet m = MixerNet::init(3, 15, 4, 4, rng);
    zero_mixer(m);
    m.b2_b2.value.at(0, 0) = 2.75;
    Rng qr(64);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> q = {qr.uniform(-5, 5), qr.uniform(-5, 5), qr.uniform(-5, 5)};
        std::vector<double> gs(15);
        for (auto& g : gs) g = qr.uniform(-1, 1);
        CHECK(mix(q, gs, m) == doctest::Approx(2.75).epsilon(1e-12));
    }
}

TEST_CASE("mix: monotone non-decreasing in every agent value (perturbation sweep)") {
    Rng rng(65);
    const int N = 4;
    for (int inst = 0; inst < 10; ++inst) {
        MixerNet m = MixerNet::init(N, 5 * N, 8, 8, rng);
        for (int draw = 0; draw < 100; ++draw) {
            std::vector<double> q(N), gs(5 * N);
            for (auto& v : q) v = rng.uniform(-3.0, 3.0);
            for (auto& v : gs) v = rng.uniform(-1.0, 1.0);
            const double base = mix(q, gs, m);
            for (int i = 0; i < N; ++i) {
                auto bumped = q;
                bumped[i] += 0.1;
                CHECK(mix(bumped, gs, m) - base >= -1e-9);
            }
        }
    }
}

TEST_CASE("mix: N=1 identity regime is strictly increasing") {
    Rng rng(66);
    MixerNet m = MixerNet::init(1, 5, 1, 2, rng);
    zero_mixer(m);
    m.w1_b.value.fill(1.0);  // |W1| = 1
    m.w2_b.value.fill(1.0);  // |w2| = 1
    std::vector<double> gs(5, 0.3);
    double prev = -1e18;
    for (double q = -3.0; q <= 3.0; q += 0.25) {
        const double v = mix({q}, gs, m);
        CHECK(v > prev);
        prev = v;
    }
}

TEST_CASE("greedy_action: all-equal values pick the 0 m/s2 action") {
    std::vector<double> q(kNumActions, 1.0);
    CHECK(greedy_action(q) == kZeroActionIndex);
    CHECK(kActionSet[greedy_action(q)] == 0.0);
}

TEST_CASE("greedy_action: ties prefer smaller magnitude, then negative") {
    std::vector<double> q(kNumActions, 0.0);
    q[1] = 5.0;  // -3
    q[7] = 5.0;  // +3
    CHECK(greedy_action(q) == 1);
    std::vector<double> q2(kNumActions, 0.0);
    q2[0] = 2.0;  // -6
    q2[8] = 2.0;  // +6
    CHECK(greedy_action(q2) == 0);
}

TEST_CASE("greedy_joint_action: single agent reduces to plain argmax") {
    Rng rng(67);
    auto cfg = tiny_cfg(1);
    AgentNet net = AgentNet::init(cfg, rng);
    auto obs = random_obs(rng, cfg.w);
    auto joint = greedy_joint_action({obs}, net, cfg);
    auto q = agent_q(obs, net, cfg);
    REQUIRE(joint.size() == 1);
    CHECK(joint[0] == greedy_action(q));
    double best = q[joint[0]];
    for (double v : q) CHECK(v <= best);
}

TEST_CASE("IGM: exhaustive joint maximization equals stacked per-agent argmaxes") {
    Rng rng(68);
    int passes = 0;
    for (int inst = 0; inst < 100; ++inst) {
        const int N = 1 + rng.uniform_int(3);
        const int A = 2 + rng.uniform_int(3);  // up to 4 actions
        MixerNet m = MixerNet::init(N, 5 * N, 6, 4, rng);
        std::vector<std::vector<double>> qtab(N, std::vector<double>(A));
        for (auto& row : qtab)
            for (auto& v : row) v = rng.uniform(-2.0, 2.0);
        std::vector<double> gs(5 * N);
        for (auto& v : gs) v = rng.uniform(-1.0, 1.0);

        // per-agent argmax (first maximum)
        std::vector<int> local(N, 0);
        for (int i = 0; i < N; ++i)
            for (int a = 1; a < A; ++a)
                if (qtab[i][a] > qtab[i][local[i]]) local[i] = a;

        // exhaustive joint maximization of Q_tot
        std::vector<int> joint(N, 0), best_joint(N, 0);
        double best = -1e18;
        const int total = static_cast<int>(std::pow(A, N));
        for (int code = 0; code < total; ++code) {
            int c = code;
            std::vector<double> q(N);
            for (int i = 0; i < N; ++i) {
                joint[i] = c % A;
                c /= A;
                q[i] = qtab[i][joint[i]];
            }
            const double v = mix(q, gs, m);
            if (v > best) {
                best = v;
                best_joint = joint;
            }
        }
        if (best_joint == local) ++passes;
    }
    CHECK(passes == 100);
}

TEST_CASE("epsilon_greedy: zero epsilon reproduces the greedy policy") {
    Rng rng(69);
    auto cfg = tiny_cfg(3);
    AgentNet net = AgentNet::init(cfg, rng);
    std::vector<InformationState> obs;
    for (int i = 0; i < 3; ++i) obs.push_back(random_obs(rng, cfg.w));
    Rng r1(7), r2(7);
    CHECK(epsilon_greedy(obs, net, cfg, 0.0, r1) == greedy_joint_action(obs, net, cfg));
    // the epsilon=0 path must not consume randomness
    CHECK(r1.next() == r2.next());
}

TEST_CASE("epsilon_greedy: epsilon=1 action frequencies are uniform within 3 sigma") {
    Rng rng(70);
    auto cfg = tiny_cfg(1);
    AgentNet net = AgentNet::init(cfg, rng);
    std::vector<InformationState> obs = {random_obs(rng, cfg.w)};
    Rng action_rng(321);
    std::vector<int> counts(kNumActions, 0);
    const int draws = 100000;
    for (int k = 0; k < draws; ++k) ++counts[epsilon_greedy(obs, net, cfg, 1.0, action_rng)[0]];
    const double p = 1.0 / kNumActions;
    const double sigma = std::sqrt(p * (1 - p) / draws);
    for (int a = 0; a < kNumActions; ++a) {
        const double freq = static_cast<double>(counts[a]) / draws;
        CHECK(std::fabs(freq - p) < 3.0 * sigma);
    }
}

TEST_CASE("epsilon_greedy: fixed seed reproduces the action sequence") {
    Rng rng(71);
    auto cfg = tiny_cfg(2);
    AgentNet net = AgentNet::init(cfg, rng);
    std::vector<InformationState> obs = {random_obs(rng, cfg.w), random_obs(rng, cfg.w)};
    Rng a(99), b(99);
    for (int k = 0; k < 20; ++k)
        CHECK(epsilon_greedy(obs, net, cfg, 0.4, a) == epsilon_greedy(obs, net, cfg, 0.4, b));
}

TEST_CASE("discounted_return: myopic limit, closed form, and recursion") {
    CHECK(discounted_return(std::vector<double>{3.0, 5.0, 7.0}, 0.0) == 3.0);
    CHECK(discounted_return(std::vector<double>{1.0, 1.0, 1.0}, 0.99) ==
          doctest::Approx(2.9701).epsilon(1e-12));

    Rng rng(72);
    for (int trial = 0; trial < 100; ++trial) {
        const int T = 1 + rng.uniform_int(30);
        std::vector<double> rewards(T);
        for (auto& r : rewards) r = rng.uniform(-5.0, 5.0);
        const double gamma = rng.unit();
        // recursive oracle: G_t = r(t+1) + γ G_{t+1}, G_T = 0
        double g = 0.0;
        for (int t = T - 1; t >= 0; --t) g = rewards[t] + gamma * g;
        CHECK(std::fabs(discounted_return(rewards, gamma) - g) < 1e-12);
        // direct-sum oracle
        double direct = 0.0, scale = 1.0;
        for (int t = 0; t < T; ++t) {
            direct += scale * rewards[t];
            scale *= gamma;
        }
        CHECK(std::fabs(discounted_return(rewards, gamma) - direct) < 1e-9);
    }
}

TEST_CASE("build_global_state: scaled kinematics plus activity flags, fixed length") {
    WorldState w;
    VehicleRecord a;
    a.id = 0;
    a.status = VehicleStatus::active;
    a.kinematics = {200.0, 3.5, 7.5, -3.0};
    VehicleRecord b;
    b.id = 1;
    b.status = VehicleStatus::pending;
    b.kinematics = {100.0, 0.0, 5.0, 1.0};
    w.vehicles = {a, b};
    auto gs = build_global_state(w, 2);
    REQUIRE(gs.size() == 10);
    CHECK(gs[0] == doctest::Approx(0.5));    // x/400
    CHECK(gs[1] == doctest::Approx(0.35));   // y/10
    CHECK(gs[2] == doctest::Approx(0.5));    // v/15
    CHECK(gs[3] == doctest::Approx(-0.5));   // a/6
    for (int j = 4; j < 8; ++j) CHECK(gs[j] == 0.0);  // pending slot zeroed
    CHECK(gs[8] == 1.0);
    CHECK(gs[9] == 0.0);
}
