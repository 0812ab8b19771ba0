#include "mergerl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "mergerl/checkpoint.hpp"

namespace mergerl {

namespace {

std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

int action_index_of(double accel) {
    for (int i = 0; i < kNumActions; ++i)
        if (kActionSet[i] == accel) return i;
    return -1;
}

}  // namespace

void TrainConfig::validate() const {
    scenario.validate();
    if (episodes <= 0 || batch_size <= 0 || update_every <= 0 || target_update_interval <= 0)
        throw ConfigError("config: counts must be positive");
    if (gamma < 0.0 || gamma > 1.0) throw ConfigError("config: gamma outside [0, 1]");
    if (lr <= 0.0) throw ConfigError("config: learning rate must be positive");
    if (epsilon_min > epsilon_start || epsilon_start > 1.0 || epsilon_min < 0.0)
        throw ConfigError("config: epsilon schedule out of order");
    if (epsilon_decay <= 0.0 || epsilon_decay > 1.0)
        throw ConfigError("config: epsilon decay outside (0, 1]");
    if (buffer_capacity == 0) throw ConfigError("config: buffer capacity must be positive");
    if (net.n_agents != scenario.n_agents)
        throw ConfigError("config: network and scenario agent counts disagree");
    if (net.d_model % net.n_heads != 0)
        throw ConfigError("config: d_model must be divisible by the head count");
}

TrainConfig default_config() {
    TrainConfig cfg;
    cfg.net.n_agents = cfg.scenario.n_agents;
    return cfg;
}

TrainConfig small_preset() {
    TrainConfig cfg;
    cfg.episodes = 200;
    cfg.batch_size = 64;
    cfg.lr = 5e-4;
    cfg.update_every = 2;
    cfg.scenario.n_agents = 4;
    cfg.scenario.depart_min = 0.0;
    cfg.scenario.depart_max = 5.0;
    cfg.scenario.max_steps = 250;
    cfg.net.n_agents = 4;
    cfg.net.d_model = 16;
    cfg.net.n_heads = 2;
    cfg.net.ffn_hidden = 32;
    cfg.net.q_hidden = 32;
    cfg.net.mix_hidden = 32;
    return cfg;
}

double epsilon_at(int episode, const TrainConfig& cfg) {
    if (episode < 0) throw ConfigError("epsilon_at: negative episode");
    return std::max(cfg.epsilon_min,
                    cfg.epsilon_start * std::pow(cfg.epsilon_decay, static_cast<double>(episode)));
}

// ---------------------------------------------------------------------------

Env::Env(const ScenarioConfig& cfg, int window) : cfg_(cfg), window_(window) {
    cfg_.validate();
    if (window < 0) throw ConfigError("Env: negative history window");
}

uint64_t Env::reset(uint64_t seed) {
    constexpr int kSeedBumps = 32;
    for (int bump = 0; bump < kSeedBumps; ++bump) {
        try {
            reset_with(generate_scenario(cfg_, seed + bump));
            return seed + bump;
        } catch (const ScenarioError&) {
            continue;
        }
    }
    throw ScenarioError("Env::reset: no feasible scenario near seed");
}

void Env::reset_with(std::vector<VehicleRecord> vehicles) {
    world_ = make_world(cfg_, std::move(vehicles));
    hist_ = HistorySet::create(static_cast<int>(world_.vehicles.size()), window_);
    hist_.record(world_);
}

StepEvents Env::advance(const std::vector<AgentAction>& actions) {
    auto [next, events] = step(world_, actions, cfg_);
    world_ = std::move(next);
    hist_.record(world_);
    return events;
}

std::vector<InformationState> Env::observe_all_scaled() const {
    std::vector<InformationState> out;
    out.reserve(world_.vehicles.size());
    for (const auto& v : world_.vehicles) {
        if (v.status == VehicleStatus::active) {
            out.push_back(scale_information_state(observe(world_, v.id, hist_, cfg_)));
        } else {
            InformationState zero;
            zero.own = {0, 0, 0, 0};
            zero.front_hist = Tensor(window_ + 1, 4);
            zero.opp_hist = Tensor(window_ + 1, 4);
            out.push_back(std::move(zero));
        }
    }
    return out;
}

std::vector<double> Env::flat_obs() const {
    std::vector<double> flat;
    const int dim = 4 + 8 * (window_ + 1);
    flat.reserve(static_cast<size_t>(dim) * world_.vehicles.size());
    for (const auto& s : observe_all_scaled()) {
        auto f = s.flatten();
        flat.insert(flat.end(), f.begin(), f.end());
    }
    return flat;
}

std::vector<double> Env::global_state() const {
    return build_global_state(world_, static_cast<int>(world_.vehicles.size()));
}

// ---------------------------------------------------------------------------

PolicyFn make_qmix_policy(Nets& nets, double epsilon, Rng& rng) {
    return [&nets, epsilon, &rng](const WorldState& world,
                                  const std::vector<InformationState>& obs) {
        PolicyDecision d;
        d.action_indices.assign(obs.size(), kZeroActionIndex);
        std::vector<InformationState> active_obs;
        std::vector<int> active_ids;
        for (const auto& v : world.vehicles) {
            if (v.status != VehicleStatus::active) continue;
            active_ids.push_back(v.id);
            active_obs.push_back(obs[v.id]);
        }
        auto idx = epsilon_greedy(active_obs, nets.agent, nets.cfg, epsilon, rng);
        for (size_t k = 0; k < active_ids.size(); ++k) {
            d.action_indices[active_ids[k]] = idx[k];
            d.actions.push_back({active_ids[k], kActionSet[idx[k]]});
        }
        return d;
    };
}

PolicyFn make_random_policy(Rng& rng) {
    return [&rng](const WorldState& world, const std::vector<InformationState>& obs) {
        PolicyDecision d;
        d.action_indices.assign(obs.size(), kZeroActionIndex);
        for (const auto& v : world.vehicles) {
            if (v.status != VehicleStatus::active) continue;
            const int idx = rng.uniform_int(kNumActions);
            d.action_indices[v.id] = idx;
            d.actions.push_back({v.id, kActionSet[idx]});
        }
        return d;
    };
}

PolicyFn make_idm_policy(const ScenarioConfig& cfg, IdmParams params) {
    return [cfg, params](const WorldState& world, const std::vector<InformationState>&) {
        PolicyDecision d;
        d.actions = idm_joint_action(world, cfg, params);
        return d;
    };
}

EpisodeStats run_episode(Env& env, const PolicyFn& policy, const RewardCoeffs& rc, double gamma,
                         const std::function<void(Transition&&)>& sink,
                         const std::function<void()>& per_step) {
    EpisodeStats stats;
    double velocity_sum = 0.0;
    int velocity_steps = 0;

    std::vector<double> obs_flat = sink ? env.flat_obs() : std::vector<double>{};
    std::vector<double> gs = sink ? env.global_state() : std::vector<double>{};

    while (!env.world().done) {
        auto scaled = env.observe_all_scaled();
        PolicyDecision decision = policy(env.world(), scaled);
        if (sink && decision.action_indices.empty())
            throw ContractViolation("run_episode: policy cannot feed the replay buffer");

        StepEvents events = env.advance(decision.actions);
        StepMetrics metrics = collect_metrics(env.world(), events, env.config());
        const double r = total_reward(metrics, rc);

        ++stats.steps;
        stats.rewards.push_back(r);
        stats.collisions += metrics.n_collisions;
        stats.arrivals += metrics.n_goal;
        if (!metrics.agents.empty()) {
            double vsum = 0.0;
            for (const auto& a : metrics.agents) {
                vsum += a.v;
                stats.fuel_total += a.fuel;
            }
            velocity_sum += vsum / metrics.agents.size();
            ++velocity_steps;
        }

        if (sink) {
            Transition t;
            t.obs = std::move(obs_flat);
            t.gs = std::move(gs);
            t.actions = decision.action_indices;
            t.reward = r;
            t.next_obs = env.flat_obs();
            t.next_gs = env.global_state();
            t.terminal = env.world().done;
            obs_flat = t.next_obs;
            gs = t.next_gs;
            sink(std::move(t));
        }
        if (per_step) per_step();
    }

    stats.total_reward = std::accumulate(stats.rewards.begin(), stats.rewards.end(), 0.0);
    stats.discounted_return = discounted_return(stats.rewards, gamma);
    stats.mean_velocity = velocity_steps > 0 ? velocity_sum / velocity_steps : 0.0;
    return stats;
}

// ---------------------------------------------------------------------------

namespace {

struct ObsBatch {
    Tensor own;    // (B·N × 4)
    Tensor front;  // (B·N·(w+1) × 4)
    Tensor opp;
    std::vector<double> mask;  // B·N activity flags
};

ObsBatch assemble_batch(const std::vector<const Transition*>& batch, bool use_next, int n_agents,
                        int window) {
    const int B = static_cast<int>(batch.size());
    const int seq = window + 1;
    const int per_agent = 4 + 8 * seq;
    ObsBatch ob{Tensor(B * n_agents, 4), Tensor(B * n_agents * seq, 4),
                Tensor(B * n_agents * seq, 4), {}};
    ob.mask.resize(static_cast<size_t>(B) * n_agents);
    for (int m = 0; m < B; ++m) {
        const auto& t = *batch[m];
        const std::vector<double>& obs = use_next ? t.next_obs : t.obs;
        const std::vector<double>& gs = use_next ? t.next_gs : t.gs;
        for (int i = 0; i < n_agents; ++i) {
            const double* src = obs.data() + static_cast<size_t>(i) * per_agent;
            const int row = m * n_agents + i;
            for (int j = 0; j < 4; ++j) ob.own.at(row, j) = src[j];
            std::copy(src + 4, src + 4 + 4 * seq,
                      ob.front.data.begin() + static_cast<size_t>(row) * seq * 4);
            std::copy(src + 4 + 4 * seq, src + per_agent,
                      ob.opp.data.begin() + static_cast<size_t>(row) * seq * 4);
            ob.mask[row] = gs[static_cast<size_t>(4) * n_agents + i];
        }
    }
    return ob;
}

Tensor gs_tensor(const std::vector<const Transition*>& batch, bool use_next) {
    const int B = static_cast<int>(batch.size());
    const int dim = static_cast<int>(batch[0]->gs.size());
    Tensor gs(B, dim);
    for (int m = 0; m < B; ++m) {
        const auto& src = use_next ? batch[m]->next_gs : batch[m]->gs;
        std::copy(src.begin(), src.end(), gs.data.begin() + static_cast<size_t>(m) * dim);
    }
    return gs;
}

// Q_tot(o, a) for the stored joint actions, as a tape value (B×1).
Var qtot_batch(Tape& tape, const std::vector<const Transition*>& batch, Nets& nets,
               bool use_next, const std::vector<int>* override_actions) {
    const int B = static_cast<int>(batch.size());
    const int N = nets.cfg.n_agents;
    ObsBatch ob = assemble_batch(batch, use_next, N, nets.cfg.w);
    Var own = tape.constant(std::move(ob.own));
    Var front = tape.constant(std::move(ob.front));
    Var opp = tape.constant(std::move(ob.opp));
    Var qall = agent_q_batch(tape, own, front, opp, nets.agent, nets.cfg);

    std::vector<int> chosen(static_cast<size_t>(B) * N, kZeroActionIndex);
    if (override_actions) {
        chosen = *override_actions;
    } else {
        for (int m = 0; m < B; ++m)
            for (int i = 0; i < N; ++i) chosen[m * N + i] = batch[m]->actions[i];
    }
    Var picked = tape.gather_per_row(qall, chosen);
    Tensor mask(B * N, 1);
    mask.data = ob.mask;
    Var masked = tape.hadamard(picked, tape.constant(std::move(mask)));
    Var q = tape.reshape(masked, B, N);
    Var gs = tape.constant(gs_tensor(batch, use_next));
    return mix_batch(tape, q, gs, nets.mixer);
}

}  // namespace

std::vector<double> td_targets(const std::vector<const Transition*>& batch, Nets& targets,
                               double gamma) {
    const int B = static_cast<int>(batch.size());
    const int N = targets.cfg.n_agents;
    Tape tape;
    // greedy next actions under the target agent net (valid joint maximizer
    // because the mixer is monotone in every agent value)
    ObsBatch ob = assemble_batch(batch, true, N, targets.cfg.w);
    Var own = tape.constant(std::move(ob.own));
    Var front = tape.constant(std::move(ob.front));
    Var opp = tape.constant(std::move(ob.opp));
    Var qall = agent_q_batch(tape, own, front, opp, targets.agent, targets.cfg);
    const Tensor& qv = tape.value(qall);
    std::vector<int> greedy(static_cast<size_t>(B) * N, kZeroActionIndex);
    for (int r = 0; r < qv.rows; ++r) {
        if (ob.mask[r] == 0.0) continue;
        greedy[r] = greedy_action(
            std::span<const double>(qv.data.data() + static_cast<size_t>(r) * kNumActions,
                                    kNumActions));
    }
    Var picked = tape.gather_per_row(qall, greedy);
    Tensor mask(B * N, 1);
    mask.data = ob.mask;
    Var masked = tape.hadamard(picked, tape.constant(std::move(mask)));
    Var q = tape.reshape(masked, B, N);
    Var gs = tape.constant(gs_tensor(batch, true));
    Var qtot = mix_batch(tape, q, gs, targets.mixer);
    const Tensor& qt = tape.value(qtot);

    std::vector<double> y(B);
    for (int m = 0; m < B; ++m)
        y[m] = batch[m]->reward + (batch[m]->terminal ? 0.0 : gamma * qt.at(m, 0));
    return y;
}

Var qtot_on_tape(Tape& tape, const std::vector<const Transition*>& batch, Nets& nets) {
    return qtot_batch(tape, batch, nets, false, nullptr);
}

Var qmix_loss_on_tape(Tape& tape, const std::vector<const Transition*>& batch,
                      const std::vector<double>& y, Nets& nets) {
    if (batch.empty() || y.size() != batch.size())
        throw ShapeError("qmix_loss: batch and target sizes disagree");
    Var qtot = qtot_batch(tape, batch, nets, false, nullptr);
    Var target = tape.constant(Tensor::col(y));
    Var resid = tape.sub(target, qtot);
    return tape.mean_all(tape.hadamard(resid, resid));
}

double qmix_loss(const std::vector<const Transition*>& batch, const std::vector<double>& y,
                 Nets& nets) {
    Tape tape;
    return tape.value(qmix_loss_on_tape(tape, batch, y, nets)).data[0];
}

std::optional<double> train_step(ReplayBuffer& buffer, Nets& nets, Nets& targets, AdamW& opt,
                                 const TrainConfig& cfg) {
    if (!buffer.ready(static_cast<size_t>(cfg.batch_size))) return std::nullopt;
    auto batch = buffer.sample(static_cast<size_t>(cfg.batch_size));
    auto y = td_targets(batch, targets, cfg.gamma);

    Tape tape;
    Var loss = qmix_loss_on_tape(tape, batch, y, nets);

    auto params = nets.params();
    opt.zero_grad(params);
    tape.backward(loss);
    opt.step(params);
    return tape.value(loss).data[0];
}

void sync_targets(const Nets& nets, Nets& targets, int completed_episodes,
                  const TrainConfig& cfg) {
    if (completed_episodes > 0 && completed_episodes % cfg.target_update_interval == 0)
        targets.copy_from(nets);
}

// ---------------------------------------------------------------------------

std::string metrics_csv_header() {
    return "episode,steps,return,mean_velocity,collisions,fuel_total,arrivals,epsilon,mean_loss";
}

std::string metrics_csv_row(const EpisodeRow& r) {
    std::string out = std::to_string(r.episode);
    out += "," + std::to_string(r.steps);
    out += "," + fmt_double(r.ret);
    out += "," + fmt_double(r.mean_velocity);
    out += "," + std::to_string(r.collisions);
    out += "," + fmt_double(r.fuel_total);
    out += "," + std::to_string(r.arrivals);
    out += "," + fmt_double(r.epsilon);
    out += "," + fmt_double(r.mean_loss);
    return out;
}

TrainResult train_run(const TrainConfig& cfg, const std::string& out_dir, std::ostream* log) {
    cfg.validate();
    TrainResult result;

    Nets nets = Nets::init(cfg.net, cfg.seed);
    Nets targets = Nets::init(cfg.net, cfg.seed);
    targets.copy_from(nets);
    AdamW opt(cfg.lr);

    Rng master(cfg.seed);
    Rng action_rng = master.fork(1);
    ReplayBuffer buffer(cfg.buffer_capacity, master.fork(2).next());
    Env env(cfg.scenario, cfg.net.w);

    std::ofstream csv;
    const bool write_files = !out_dir.empty();
    if (write_files) {
        std::filesystem::create_directories(out_dir);
        result.metrics_path = out_dir + "/metrics.csv";
        csv.open(result.metrics_path, std::ios::trunc);
        if (!csv) throw ConfigError("train_run: cannot write metrics CSV in " + out_dir);
        csv << metrics_csv_header() << "\n";
    }

    double best_return = -std::numeric_limits<double>::infinity();
    int steps_since_update = 0;

    for (int ep = 0; ep < cfg.episodes; ++ep) {
        const double eps = epsilon_at(ep, cfg);
        env.reset(cfg.seed + 1000003ULL * static_cast<uint64_t>(ep + 1));

        double loss_sum = 0.0;
        int loss_count = 0;
        auto policy = make_qmix_policy(nets, eps, action_rng);
        auto stats = run_episode(
            env, policy, cfg.reward, cfg.gamma,
            [&buffer](Transition&& t) { buffer.push(std::move(t)); },
            [&]() {
                if (++steps_since_update < cfg.update_every) return;
                steps_since_update = 0;
                if (auto loss = train_step(buffer, nets, targets, opt, cfg)) {
                    loss_sum += *loss;
                    ++loss_count;
                }
            });

        sync_targets(nets, targets, ep + 1, cfg);

        EpisodeRow row{ep,
                       stats.steps,
                       stats.discounted_return,
                       stats.mean_velocity,
                       stats.collisions,
                       stats.fuel_total,
                       stats.arrivals,
                       eps,
                       loss_count > 0 ? loss_sum / loss_count : 0.0};
        result.rows.push_back(row);
        if (write_files) csv << metrics_csv_row(row) << "\n";
        if (log && ((ep + 1) % 10 == 0 || ep == 0))
            *log << "episode " << ep << " return=" << row.ret << " collisions=" << row.collisions
                 << " eps=" << eps << "\n";

        if (write_files) {
            if ((ep + 1) % cfg.checkpoint_interval == 0) {
                char name[64];
                std::snprintf(name, sizeof(name), "/ckpt_ep%04d.bin", ep + 1);
                save_checkpoint(out_dir + name, nets);
            }
            if (stats.discounted_return > best_return) {
                best_return = stats.discounted_return;
                result.best_checkpoint = out_dir + "/best.bin";
                save_checkpoint(result.best_checkpoint, nets);
            }
        }
    }

    if (write_files) {
        result.final_checkpoint = out_dir + "/final.bin";
        save_checkpoint(result.final_checkpoint, nets);
        csv.close();
    }
    return result;
}

// ---------------------------------------------------------------------------

double EvalReport::mean_reward() const {
    double s = 0.0;
    for (const auto& e : episodes) s += e.total_reward;
    return episodes.empty() ? 0.0 : s / episodes.size();
}

double EvalReport::std_reward() const {
    if (episodes.size() < 2) return 0.0;
    const double m = mean_reward();
    double s = 0.0;
    for (const auto& e : episodes) s += (e.total_reward - m) * (e.total_reward - m);
    return std::sqrt(s / episodes.size());
}

double EvalReport::mean_velocity() const {
    double s = 0.0;
    for (const auto& e : episodes) s += e.mean_velocity;
    return episodes.empty() ? 0.0 : s / episodes.size();
}

double EvalReport::mean_collisions() const {
    double s = 0.0;
    for (const auto& e : episodes) s += e.collisions;
    return episodes.empty() ? 0.0 : s / episodes.size();
}

double EvalReport::mean_fuel() const {
    double s = 0.0;
    for (const auto& e : episodes) s += e.fuel_total;
    return episodes.empty() ? 0.0 : s / episodes.size();
}

EvalReport evaluate_policy(const PolicyFn& policy, const std::string& name,
                           const ScenarioConfig& scenario, int window, const RewardCoeffs& rc,
                           double gamma, const std::vector<uint64_t>& seeds) {
    EvalReport report;
    report.policy = name;
    Env env(scenario, window);
    for (uint64_t seed : seeds) {
        env.reset(seed);
        auto stats = run_episode(env, policy, rc, gamma);
        report.episodes.push_back({seed, stats.steps, stats.total_reward,
                                   stats.discounted_return, stats.mean_velocity, stats.fuel_total,
                                   stats.collisions, stats.arrivals});
    }
    return report;
}

std::vector<uint64_t> eval_seeds(uint64_t base, int n) {
    std::vector<uint64_t> seeds(n);
    for (int i = 0; i < n; ++i) seeds[i] = base + 7919ULL * static_cast<uint64_t>(i);
    return seeds;
}

std::vector<std::string> format_event_log(double time, const StepEvents& events) {
    std::vector<std::string> lines;
    char buf[64];
    auto stamp = [&](const char* kind, const std::string& ids) {
        std::snprintf(buf, sizeof(buf), "t=%.1f event=%s ids=", time, kind);
        lines.push_back(std::string(buf) + ids);
    };
    for (int id : events.departures) stamp("depart", std::to_string(id));
    for (int id : events.arrivals) stamp("arrival", std::to_string(id));
    for (const auto& [a, b] : events.collisions)
        stamp("collision", std::to_string(a) + "," + std::to_string(b));
    return lines;
}

}  // namespace mergerl
