#include <cstdio>
#include <iostream>

#include <CLI11.hpp>

#include "mergerl/checkpoint.hpp"
#include "mergerl/config.hpp"
#include "mergerl/verify.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;
constexpr int kExitVerification = 4;

struct CommonOpts {
    std::string config_path;
    std::string out_dir = "out";
    uint64_t seed = 1;
    bool seed_set = false;
    bool ablate = false;
    std::string preset;
};

mergerl::TrainConfig resolve_config(const CommonOpts& opts) {
    mergerl::TrainConfig cfg =
        opts.preset == "small" ? mergerl::small_preset() : mergerl::default_config();
    if (!opts.config_path.empty()) cfg = mergerl::parse_config_file(opts.config_path, cfg);
    if (opts.seed_set) cfg.seed = opts.seed;
    if (opts.ablate) cfg.net.ablate_attention = true;
    cfg.validate();
    return cfg;
}

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path, "key = value config file");
    cmd->add_option("--seed", opts.seed, "master seed")->each([&](const std::string&) {
        opts.seed_set = true;
    });
    cmd->add_option("--out", opts.out_dir, "output directory");
    cmd->add_flag("--ablate-attention", opts.ablate,
                  "drop the temporal attention stage (VQMIX)");
    cmd->add_option("--preset", opts.preset, "configuration preset")
        ->check(CLI::IsMember({"small"}));
}

void print_report(const mergerl::EvalReport& r) {
    std::printf("policy=%s episodes=%zu\n", r.policy.c_str(), r.episodes.size());
    std::printf("  reward        %10.3f ± %.3f\n", r.mean_reward(), r.std_reward());
    std::printf("  mean velocity %10.3f m/s\n", r.mean_velocity());
    std::printf("  collisions    %10.3f per episode\n", r.mean_collisions());
    std::printf("  fuel          %10.1f mg per episode\n", r.mean_fuel());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"QMIX highway-merging trainer"};
    app.require_subcommand(1);

    CommonOpts train_opts, eval_opts, baseline_opts, demo_opts;
    int eval_episodes = 50;
    uint64_t eval_seed_base = 9000;
    std::string checkpoint_path;
    bool eval_random = false;
    int gradcheck_configs = 20;
    uint64_t gradcheck_seed = 12345;

    auto* train_cmd = app.add_subcommand("train", "run the full training loop");
    add_common(train_cmd, train_opts);

    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint (greedy policy)");
    add_common(eval_cmd, eval_opts);
    eval_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint file to load");
    eval_cmd->add_flag("--random", eval_random, "evaluate the uniform-random policy instead");
    eval_cmd->add_option("--episodes", eval_episodes, "number of evaluation episodes");
    eval_cmd->add_option("--eval-seed", eval_seed_base, "base seed for evaluation scenarios");

    auto* baseline_cmd = app.add_subcommand("baseline", "evaluate the IDM car-following baseline");
    add_common(baseline_cmd, baseline_opts);
    baseline_cmd->add_option("--episodes", eval_episodes, "number of evaluation episodes");
    baseline_cmd->add_option("--eval-seed", eval_seed_base, "base seed for evaluation scenarios");

    auto* gradcheck_cmd =
        app.add_subcommand("gradcheck", "finite-difference verification of every layer");
    gradcheck_cmd->add_option("--configs", gradcheck_configs, "random configurations per layer");
    gradcheck_cmd->add_option("--seed", gradcheck_seed, "suite seed");

    auto* demo_cmd = app.add_subcommand("demo", "single verbose episode with the event log");
    add_common(demo_cmd, demo_opts);
    demo_cmd->add_option("--checkpoint", checkpoint_path, "drive with a trained policy");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (train_cmd->parsed()) {
            auto cfg = resolve_config(train_opts);
            auto result = mergerl::train_run(cfg, train_opts.out_dir, &std::cout);
            std::printf("wrote %s (%zu episodes), final checkpoint %s\n",
                        result.metrics_path.c_str(), result.rows.size(),
                        result.final_checkpoint.c_str());
            return kExitOk;
        }

        if (eval_cmd->parsed()) {
            auto cfg = resolve_config(eval_opts);
            auto seeds = mergerl::eval_seeds(eval_seed_base, eval_episodes);
            if (eval_random) {
                mergerl::Rng rng(cfg.seed);
                auto report = mergerl::evaluate_policy(
                    mergerl::make_random_policy(rng), "random", cfg.scenario, cfg.net.w,
                    cfg.reward, cfg.gamma, seeds);
                print_report(report);
                return kExitOk;
            }
            if (checkpoint_path.empty()) {
                std::cerr << "eval: --checkpoint (or --random) is required\n";
                return kExitUsage;
            }
            mergerl::Nets nets = mergerl::load_checkpoint(checkpoint_path);
            if (nets.cfg.n_agents != cfg.scenario.n_agents) {
                std::cerr << "eval: checkpoint was trained for " << nets.cfg.n_agents
                          << " agents, scenario has " << cfg.scenario.n_agents << "\n";
                return kExitConfig;
            }
            mergerl::Rng rng(cfg.seed);
            auto policy = mergerl::make_qmix_policy(nets, 0.0, rng);
            auto report = mergerl::evaluate_policy(policy, "qmix", cfg.scenario, nets.cfg.w,
                                                   cfg.reward, cfg.gamma, seeds);
            print_report(report);
            return kExitOk;
        }

        if (baseline_cmd->parsed()) {
            auto cfg = resolve_config(baseline_opts);
            auto seeds = mergerl::eval_seeds(eval_seed_base, eval_episodes);
            auto report = mergerl::evaluate_policy(mergerl::make_idm_policy(cfg.scenario), "idm",
                                                   cfg.scenario, cfg.net.w, cfg.reward, cfg.gamma,
                                                   seeds);
            print_report(report);
            return kExitOk;
        }

        if (gradcheck_cmd->parsed()) {
            auto results = mergerl::run_gradcheck_suites(gradcheck_seed, gradcheck_configs);
            for (const auto& r : results)
                std::printf("%-22s configs=%d max_rel_error=%.3e %s\n", r.name.c_str(), r.configs,
                            r.max_rel_error, r.passed ? "ok" : "FAILED");
            return mergerl::all_passed(results) ? kExitOk : kExitVerification;
        }

        if (demo_cmd->parsed()) {
            auto cfg = resolve_config(demo_opts);
            mergerl::Env env(cfg.scenario, cfg.net.w);
            const uint64_t used = env.reset(cfg.seed);
            std::printf("# scenario seed %llu, %d vehicles\n",
                        static_cast<unsigned long long>(used), cfg.scenario.n_agents);

            mergerl::PolicyFn policy;
            mergerl::Rng rng(cfg.seed);
            std::optional<mergerl::Nets> nets;
            if (!checkpoint_path.empty()) {
                nets = mergerl::load_checkpoint(checkpoint_path);
                policy = mergerl::make_qmix_policy(*nets, 0.0, rng);
            } else {
                policy = mergerl::make_idm_policy(cfg.scenario);
            }

            double total = 0.0;
            while (!env.world().done) {
                auto obs = env.observe_all_scaled();
                auto decision = policy(env.world(), obs);
                auto events = env.advance(decision.actions);
                auto metrics = mergerl::collect_metrics(env.world(), events, cfg.scenario);
                total += mergerl::total_reward(metrics, cfg.reward);
                for (const auto& line : mergerl::format_event_log(env.world().time, events))
                    std::puts(line.c_str());
            }
            std::printf("# steps=%d total_reward=%.3f\n", env.world().step, total);
            return kExitOk;
        }
    } catch (const mergerl::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const mergerl::CheckpointError& e) {
        std::cerr << "checkpoint error: " << e.what() << "\n";
        return kExitRuntime;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}
