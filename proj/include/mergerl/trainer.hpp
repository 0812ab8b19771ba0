#pragma once

#include <functional>
#include <optional>
#include <ostream>
#include <string>

#include "mergerl/optim.hpp"
#include "mergerl/qmix.hpp"
#include "mergerl/replay.hpp"
#include "mergerl/reward.hpp"

namespace mergerl {

struct TrainConfig {
    int episodes = 1000;
    int batch_size = 256;
    double gamma = 0.99;
    double lr = 1e-4;
    double epsilon_start = 1.0;
    double epsilon_min = 0.05;
    double epsilon_decay = 0.99;
    int target_update_interval = 4;  // episodes
    size_t buffer_capacity = 1000000;
    int update_every = 1;  // env steps between gradient updates
    int checkpoint_interval = 50;
    uint64_t seed = 1;
    QNetConfig net;
    ScenarioConfig scenario;
    RewardCoeffs reward;

    void validate() const;
};

// Paper-scale defaults (16 agents, 1000 episodes).
TrainConfig default_config();
// CI-scale preset: 4 agents, 200 episodes, thin networks, short episodes.
TrainConfig small_preset();

double epsilon_at(int episode, const TrainConfig& cfg);

// ---------------------------------------------------------------------------
// Environment wrapper: owns the world, keeps histories current, and builds
// network-ready (scaled) observations for all N agent slots.
class Env {
public:
    Env(const ScenarioConfig& cfg, int window);

    // Generates a scenario from `seed`; on infeasible packing retries with
    // seed+1, seed+2, … (bounded). Returns the seed actually used.
    uint64_t reset(uint64_t seed);
    void reset_with(std::vector<VehicleRecord> vehicles);

    StepEvents advance(const std::vector<AgentAction>& actions);

    const WorldState& world() const { return world_; }
    const HistorySet& histories() const { return hist_; }
    const ScenarioConfig& config() const { return cfg_; }
    int window() const { return window_; }

    // one entry per agent slot; inactive slots are all-zero states
    std::vector<InformationState> observe_all_scaled() const;
    std::vector<double> flat_obs() const;      // N·(4+8(w+1))
    std::vector<double> global_state() const;  // 5N

private:
    ScenarioConfig cfg_;
    int window_;
    WorldState world_;
    HistorySet hist_;
};

// ---------------------------------------------------------------------------
struct PolicyDecision {
    std::vector<AgentAction> actions;  // one per active vehicle
    std::vector<int> action_indices;   // size N when actions come from the action set, else empty
};

using PolicyFn =
    std::function<PolicyDecision(const WorldState&, const std::vector<InformationState>&)>;

PolicyFn make_qmix_policy(Nets& nets, double epsilon, Rng& rng);
PolicyFn make_random_policy(Rng& rng);
PolicyFn make_idm_policy(const ScenarioConfig& cfg, IdmParams params = {});

struct EpisodeStats {
    int steps = 0;
    double discounted_return = 0.0;
    double total_reward = 0.0;
    double mean_velocity = 0.0;
    double fuel_total = 0.0;
    int collisions = 0;
    int arrivals = 0;
    std::vector<double> rewards;  // per-step team rewards, in order
};

// Steps the environment under `policy` until done. When `sink` is set, a
// Transition is pushed per step (the policy must report action indices).
// `per_step` runs after each transition (training hook).
EpisodeStats run_episode(Env& env, const PolicyFn& policy, const RewardCoeffs& rc, double gamma,
                         const std::function<void(Transition&&)>& sink = {},
                         const std::function<void()>& per_step = {});

// One gradient update from a uniform replay mini-batch. Returns the loss, or
// nullopt when the buffer does not hold batch_size transitions yet.
std::optional<double> train_step(ReplayBuffer& buffer, Nets& nets, Nets& targets, AdamW& opt,
                                 const TrainConfig& cfg);

// Hard copy θ⁻ ← θ when `completed_episodes` is a positive multiple of the
// update interval.
void sync_targets(const Nets& nets, Nets& targets, int completed_episodes,
                  const TrainConfig& cfg);

// Batched one-step targets y(m) = r + γ·Q_tot(o′, a′*; θ⁻), terminal → r.
std::vector<double> td_targets(const std::vector<const Transition*>& batch, Nets& targets,
                               double gamma);

// Mini-batch regression loss (1/B)·Σ (y − Q_tot)² for the stored (o, a).
double qmix_loss(const std::vector<const Transition*>& batch, const std::vector<double>& y,
                 Nets& nets);

// Tape builders behind train_step, exposed for the gradient-verification
// suites: Q_tot of the stored joint actions (B×1) and the batch loss (1×1).
Var qtot_on_tape(Tape& tape, const std::vector<const Transition*>& batch, Nets& nets);
Var qmix_loss_on_tape(Tape& tape, const std::vector<const Transition*>& batch,
                      const std::vector<double>& y, Nets& nets);

// ---------------------------------------------------------------------------
struct EpisodeRow {
    int episode = 0;
    int steps = 0;
    double ret = 0.0;
    double mean_velocity = 0.0;
    int collisions = 0;
    double fuel_total = 0.0;
    int arrivals = 0;
    double epsilon = 0.0;
    double mean_loss = 0.0;
};

struct TrainResult {
    std::vector<EpisodeRow> rows;
    std::string metrics_path;
    std::string final_checkpoint;
    std::string best_checkpoint;
};

// Full training loop: per-episode scenario regeneration, ε schedule, replay,
// target syncs, periodic checkpoints, and a metrics CSV under out_dir.
// `out_dir` may be empty to keep everything in memory (no files written).
TrainResult train_run(const TrainConfig& cfg, const std::string& out_dir,
                      std::ostream* log = nullptr);

std::string metrics_csv_header();
std::string metrics_csv_row(const EpisodeRow& row);

// ---------------------------------------------------------------------------
struct EvalEpisode {
    uint64_t seed = 0;
    int steps = 0;
    double total_reward = 0.0;
    double discounted_return = 0.0;
    double mean_velocity = 0.0;
    double fuel_total = 0.0;
    int collisions = 0;
    int arrivals = 0;
};

struct EvalReport {
    std::string policy;
    std::vector<EvalEpisode> episodes;

    double mean_reward() const;
    double std_reward() const;
    double mean_velocity() const;
    double mean_collisions() const;
    double mean_fuel() const;
};

EvalReport evaluate_policy(const PolicyFn& policy, const std::string& name,
                           const ScenarioConfig& scenario, int window, const RewardCoeffs& rc,
                           double gamma, const std::vector<uint64_t>& seeds);

std::vector<uint64_t> eval_seeds(uint64_t base, int n);

// Event log lines: `t=<s> event=<collision|arrival|depart> ids=<...>`
std::vector<std::string> format_event_log(double time, const StepEvents& events);

}  // namespace mergerl
