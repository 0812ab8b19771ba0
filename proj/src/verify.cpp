#include "mergerl/verify.hpp"

#include <cmath>
#include <memory>

#include "mergerl/trainer.hpp"

namespace mergerl {

double GradCheck::max_rel_error(const std::function<Var(Tape&)>& build,
                                const std::vector<Parameter*>& params) const {
    for (Parameter* p : params) p->zero_grad();
    {
        Tape tape;
        Var loss = build(tape);
        tape.backward(loss);
    }
    std::vector<Tensor> analytic;
    analytic.reserve(params.size());
    for (Parameter* p : params) analytic.push_back(p->grad);

    auto eval = [&](void) {
        Tape tape;
        return tape.value(build(tape)).data[0];
    };

    double worst = 0.0;
    for (size_t k = 0; k < params.size(); ++k) {
        Parameter* p = params[k];
        for (int i = 0; i < p->value.numel(); ++i) {
            const double saved = p->value.data[i];
            p->value.data[i] = saved + h;
            const double fp = eval();
            p->value.data[i] = saved - h;
            const double fm = eval();
            p->value.data[i] = saved;
            const double numeric = (fp - fm) / (2.0 * h);
            const double a = analytic[k].data[i];
            // the floor keeps h²-truncation noise on near-zero entries from
            // reading as relative error; real defects are far above it
            const double rel =
                std::fabs(a - numeric) / std::max({std::fabs(a), std::fabs(numeric), 1e-2});
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

bool GradCheck::margin_ok(const std::function<Var(Tape&)>& build) const {
    Tape tape;
    build(tape);
    return tape.min_abs_kink_input() > kink_margin &&
           tape.max_layer_norm_inv_std() < ln_inv_std_bound;
}

namespace {

// scalar readout with fixed random weights, keeps loss magnitudes O(1)
Var readout(Tape& tape, Var out, Rng& rng) {
    const Tensor& v = tape.value(out);
    Tensor w(v.rows, v.cols);
    for (auto& x : w.data) x = rng.uniform(-1.0, 1.0) / v.numel();
    return tape.sum_all(tape.hadamard(out, tape.constant(std::move(w))));
}

struct Suite {
    Rng rng;
    GradCheck checker;
    int configs;
    double tolerance;
    std::vector<GradCheckResult> results;

    // retries the builder factory until the kink margin holds, then checks
    void run(const std::string& name,
             const std::function<std::pair<std::function<Var(Tape&)>, std::vector<Parameter*>>(
                 Rng&)>& make_config) {
        GradCheckResult res{name, configs, 0.0, true};
        for (int c = 0; c < configs; ++c) {
            for (int attempt = 0;; ++attempt) {
                auto [build, params] = make_config(rng);
                if (!checker.margin_ok(build)) {
                    if (attempt > 200)
                        throw TapeError("gradcheck: cannot find a well-conditioned config");
                    continue;
                }
                res.max_rel_error = std::max(res.max_rel_error,
                                             checker.max_rel_error(build, params));
                break;
            }
        }
        res.passed = res.max_rel_error < tolerance;
        results.push_back(res);
    }
};

std::shared_ptr<Parameter> rand_param(Rng& rng, const std::string& name, int r, int c,
                                      double scale = 1.0) {
    return std::make_shared<Parameter>(name, uniform_tensor(rng, r, c, -scale, scale));
}

}  // namespace

std::vector<GradCheckResult> run_gradcheck_suites(uint64_t seed, int configs_per_layer,
                                                  double tolerance) {
    Suite suite{Rng(seed), GradCheck{}, configs_per_layer, tolerance, {}};

    suite.run("layer_norm", [](Rng& rng) {
        const int rows = 1 + rng.uniform_int(4);
        const int cols = 2 + rng.uniform_int(5);
        auto x = rand_param(rng, "x", rows, cols, 2.0);
        auto gain = rand_param(rng, "gain", 1, cols);
        auto bias = rand_param(rng, "bias", 1, cols);
        Rng ro = rng.fork(17);
        std::function<Var(Tape&)> build = [=](Tape& tape) mutable {
            Rng r = ro;
            Var y = tape.row_layer_norm(tape.param(*x), *gain, *bias, kLayerNormEps);
            return readout(tape, y, r);
        };
        return std::make_pair(build, std::vector<Parameter*>{x.get(), gain.get(), bias.get()});
    });

    suite.run("attention_head", [](Rng& rng) {
        const int seq = 2 + rng.uniform_int(4);
        const int n = 2 + rng.uniform_int(4);
        const int dj = 1 + rng.uniform_int(3);
        auto S = rand_param(rng, "S", seq, n);
        auto head = std::make_shared<AttentionHeadParams>(AttentionHeadParams{
            *rand_param(rng, "Wq", n, dj), *rand_param(rng, "Wk", n, dj),
            *rand_param(rng, "Wv", n, dj)});
        Rng ro = rng.fork(18);
        std::function<Var(Tape&)> build = [=](Tape& tape) mutable {
            Rng r = ro;
            Var z = attention_head(tape, tape.param(*S), *head, tape.value(tape.param(*S)).rows);
            return readout(tape, z, r);
        };
        return std::make_pair(build,
                              std::vector<Parameter*>{S.get(), &head->Wq, &head->Wk, &head->Wv});
    });

    suite.run("multi_head_attention", [](Rng& rng) {
        const int seq = 2 + rng.uniform_int(3);
        const int n = 2 + rng.uniform_int(3);
        const int n_heads = 1 + rng.uniform_int(3);
        const int dj = 1 + rng.uniform_int(2);
        auto S = rand_param(rng, "S", seq, n);
        auto heads = std::make_shared<std::vector<AttentionHeadParams>>();
        std::vector<Parameter*> params{S.get()};
        for (int h = 0; h < n_heads; ++h)
            heads->push_back({*rand_param(rng, "Wq", n, dj), *rand_param(rng, "Wk", n, dj),
                              *rand_param(rng, "Wv", n, dj)});
        auto Wo = rand_param(rng, "Wo", n_heads * dj, 2 + rng.uniform_int(3));
        for (auto& h : *heads) {
            params.push_back(&h.Wq);
            params.push_back(&h.Wk);
            params.push_back(&h.Wv);
        }
        params.push_back(Wo.get());
        Rng ro = rng.fork(19);
        std::function<Var(Tape&)> build = [=](Tape& tape) mutable {
            Rng r = ro;
            Var z = multi_head_attention(tape, tape.param(*S), *heads, *Wo,
                                         tape.value(tape.param(*S)).rows);
            return readout(tape, z, r);
        };
        return std::make_pair(build, params);
    });

    suite.run("ffn_residual", [](Rng& rng) {
        const int rows = 1 + rng.uniform_int(3);
        const int d = 2 + rng.uniform_int(4);
        const int hidden = 2 + rng.uniform_int(5);
        auto x = rand_param(rng, "x", rows, d);
        auto ffn = std::make_shared<FfnParams>(
            FfnParams{*rand_param(rng, "W1", hidden, d), *rand_param(rng, "b1", 1, hidden),
                      *rand_param(rng, "W2", d, hidden), *rand_param(rng, "b2", 1, d)});
        auto gain = rand_param(rng, "gain", 1, d);
        auto bias = rand_param(rng, "bias", 1, d);
        Rng ro = rng.fork(20);
        std::function<Var(Tape&)> build = [=](Tape& tape) mutable {
            Rng r = ro;
            Var y = ffn_residual(tape, tape.param(*x), *ffn, *gain, *bias);
            return readout(tape, y, r);
        };
        return std::make_pair(build,
                              std::vector<Parameter*>{x.get(), &ffn->W1, &ffn->b1, &ffn->W2,
                                                      &ffn->b2, gain.get(), bias.get()});
    });

    suite.run("encoder", [](Rng& rng) {
        const int w = 1 + rng.uniform_int(3);
        const int d_model = 4;
        const int n_samples = 1 + rng.uniform_int(2);
        auto enc = std::make_shared<EncoderParams>(EncoderParams::init(w, d_model, 2, 6, rng));
        auto own = rand_param(rng, "own", n_samples, 4);
        auto f = rand_param(rng, "front", n_samples * (w + 1), 4);
        auto o = rand_param(rng, "opp", n_samples * (w + 1), 4);
        std::vector<Parameter*> params = enc->params();
        params.push_back(own.get());
        params.push_back(f.get());
        params.push_back(o.get());
        Rng ro = rng.fork(21);
        std::function<Var(Tape&)> build = [=](Tape& tape) mutable {
            Rng r = ro;
            Var out = encode_batch(tape, tape.param(*own), tape.param(*f), tape.param(*o), *enc,
                                   false);
            return readout(tape, out, r);
        };
        return std::make_pair(build, params);
    });

    suite.run("agent_q", [](Rng& rng) {
        QNetConfig cfg;
        cfg.n_agents = 1;
        cfg.w = 1 + rng.uniform_int(2);
        cfg.d_model = 4;
        cfg.n_heads = 2;
        cfg.ffn_hidden = 6;
        cfg.q_hidden = 5;
        auto net = std::make_shared<AgentNet>(AgentNet::init(cfg, rng));
        auto own = rand_param(rng, "own", 1, 4);
        auto f = rand_param(rng, "front", cfg.w + 1, 4);
        auto o = rand_param(rng, "opp", cfg.w + 1, 4);
        std::vector<Parameter*> params = net->params();
        params.push_back(own.get());
        params.push_back(f.get());
        params.push_back(o.get());
        Rng ro = rng.fork(22);
        std::function<Var(Tape&)> build = [=](Tape& tape) mutable {
            Rng r = ro;
            Var q = agent_q_batch(tape, tape.param(*own), tape.param(*f), tape.param(*o),
                                  *net, cfg);
            return readout(tape, q, r);
        };
        return std::make_pair(build, params);
    });

    suite.run("mix", [](Rng& rng) {
        const int n = 1 + rng.uniform_int(3);
        const int gs_dim = 5 * n;
        auto mixer = std::make_shared<MixerNet>(MixerNet::init(n, gs_dim, 4, 4, rng));
        auto q = rand_param(rng, "q", 1 + rng.uniform_int(2), n);
        auto gs = rand_param(rng, "gs", q->value.rows, gs_dim);
        std::vector<Parameter*> params = mixer->params();
        params.push_back(q.get());
        params.push_back(gs.get());
        Rng ro = rng.fork(23);
        std::function<Var(Tape&)> build = [=](Tape& tape) mutable {
            Rng r = ro;
            Var out = mix_batch(tape, tape.param(*q), tape.param(*gs), *mixer);
            return readout(tape, out, r);
        };
        return std::make_pair(build, params);
    });

    suite.run("qmix_loss", [](Rng& rng) {
        QNetConfig cfg;
        cfg.n_agents = 2;
        cfg.w = 1;
        cfg.d_model = 4;
        cfg.n_heads = 2;
        cfg.ffn_hidden = 4;
        cfg.q_hidden = 4;
        cfg.mix_hidden = 3;
        cfg.mix_b2_hidden = 3;
        auto nets = std::make_shared<Nets>(Nets::init(cfg, rng.next()));
        const int B = 2;
        const int obs_dim = cfg.n_agents * (4 + 8 * (cfg.w + 1));
        auto batch = std::make_shared<std::vector<Transition>>();
        auto y = std::make_shared<std::vector<double>>();
        for (int m = 0; m < B; ++m) {
            Transition t;
            t.obs = uniform_tensor(rng, 1, obs_dim, -1.0, 1.0).data;
            t.next_obs = t.obs;
            t.gs = uniform_tensor(rng, 1, cfg.global_state_dim(), -1.0, 1.0).data;
            for (int i = 0; i < cfg.n_agents; ++i) t.gs[4 * cfg.n_agents + i] = 1.0;
            t.next_gs = t.gs;
            for (int i = 0; i < cfg.n_agents; ++i)
                t.actions.push_back(rng.uniform_int(kNumActions));
            t.reward = rng.uniform(-1.0, 1.0);
            batch->push_back(std::move(t));
            y->push_back(rng.uniform(-1.0, 1.0));
        }
        std::function<Var(Tape&)> build = [=](Tape& tape) {
            std::vector<const Transition*> view;
            for (const auto& t : *batch) view.push_back(&t);
            return qmix_loss_on_tape(tape, view, *y, *nets);
        };
        return std::make_pair(build, nets->params());
    });

    return suite.results;
}

bool all_passed(const std::vector<GradCheckResult>& results) {
    for (const auto& r : results)
        if (!r.passed) return false;
    return !results.empty();
}

}  // namespace mergerl
