#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "mergerl/checkpoint.hpp"
#include "mergerl/config.hpp"
#include "mergerl/verify.hpp"

namespace py = pybind11;
using namespace mergerl;

namespace {

std::vector<std::vector<double>> tensor_rows(const Tensor& t) {
    std::vector<std::vector<double>> rows(t.rows, std::vector<double>(t.cols));
    for (int i = 0; i < t.rows; ++i)
        for (int j = 0; j < t.cols; ++j) rows[i][j] = t.at(i, j);
    return rows;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "QMIX highway-merging core (simulator, encoder, mixer, trainer)";

    py::register_exception<ScenarioError>(m, "ScenarioError");
    py::register_exception<ContractViolation>(m, "ContractViolation");
    py::register_exception<ConfigError>(m, "ConfigError");
    py::register_exception<CheckpointError>(m, "CheckpointError");

    py::enum_<Route>(m, "Route").value("HW", Route::HW).value("M", Route::M);
    py::enum_<VehicleStatus>(m, "VehicleStatus")
        .value("pending", VehicleStatus::pending)
        .value("active", VehicleStatus::active)
        .value("arrived", VehicleStatus::arrived)
        .value("crashed", VehicleStatus::crashed);

    py::class_<KinematicState>(m, "KinematicState")
        .def(py::init<>())
        .def_readwrite("x", &KinematicState::x)
        .def_readwrite("y", &KinematicState::y)
        .def_readwrite("v", &KinematicState::v)
        .def_readwrite("a", &KinematicState::a);

    py::class_<VehicleRecord>(m, "VehicleRecord")
        .def(py::init<>())
        .def_readwrite("id", &VehicleRecord::id)
        .def_readwrite("route", &VehicleRecord::route)
        .def_readwrite("lane", &VehicleRecord::lane)
        .def_readwrite("length", &VehicleRecord::length)
        .def_readwrite("depart_time", &VehicleRecord::depart_time)
        .def_readwrite("desired_velocity", &VehicleRecord::desired_velocity)
        .def_readwrite("status", &VehicleRecord::status)
        .def_readwrite("kinematics", &VehicleRecord::kinematics);

    py::class_<ScenarioConfig>(m, "ScenarioConfig")
        .def(py::init<>())
        .def_readwrite("n_agents", &ScenarioConfig::n_agents)
        .def_readwrite("dt", &ScenarioConfig::dt)
        .def_readwrite("max_steps", &ScenarioConfig::max_steps)
        .def_readwrite("highway_length", &ScenarioConfig::highway_length)
        .def_readwrite("ramp_length", &ScenarioConfig::ramp_length)
        .def_readwrite("junction_x", &ScenarioConfig::junction_x)
        .def_readwrite("depart_min", &ScenarioConfig::depart_min)
        .def_readwrite("depart_max", &ScenarioConfig::depart_max)
        .def_readwrite("v_max", &ScenarioConfig::v_max);

    py::class_<WorldState>(m, "WorldState")
        .def_readonly("step", &WorldState::step)
        .def_readonly("time", &WorldState::time)
        .def_readonly("vehicles", &WorldState::vehicles)
        .def_readonly("collision_count_step", &WorldState::collision_count_step)
        .def_readonly("done", &WorldState::done);

    py::class_<StepEvents>(m, "StepEvents")
        .def_readonly("collisions", &StepEvents::collisions)
        .def_readonly("arrivals", &StepEvents::arrivals)
        .def_readonly("departures", &StepEvents::departures);

    m.def("generate_scenario", &generate_scenario, py::arg("config"), py::arg("seed"));
    m.def("temporal_weights",
          [](int w) { return temporal_weights(w).data; }, py::arg("w"));
    m.def("discounted_return",
          [](const std::vector<double>& rewards, double gamma) {
              return discounted_return(rewards, gamma);
          },
          py::arg("rewards"), py::arg("gamma"));
    m.def("softmax", &softmax, py::arg("x"));
    m.def("layer_norm", &layer_norm, py::arg("x"), py::arg("gain"), py::arg("bias"),
          py::arg("rho") = kLayerNormEps);

    py::class_<RewardCoeffs>(m, "RewardCoeffs")
        .def(py::init<>())
        .def_readwrite("c1", &RewardCoeffs::c1)
        .def_readwrite("c2", &RewardCoeffs::c2)
        .def_readwrite("c3", &RewardCoeffs::c3)
        .def_readwrite("c4", &RewardCoeffs::c4)
        .def_readwrite("c5", &RewardCoeffs::c5)
        .def_readwrite("c6", &RewardCoeffs::c6)
        .def_readwrite("c7", &RewardCoeffs::c7)
        .def_readwrite("c8", &RewardCoeffs::c8);

    py::class_<StepMetrics>(m, "StepMetrics")
        .def(py::init<>())
        .def_readwrite("n_collisions", &StepMetrics::n_collisions)
        .def_readwrite("v_highway", &StepMetrics::v_highway)
        .def_readwrite("v_merging", &StepMetrics::v_merging)
        .def_readwrite("waiting_time", &StepMetrics::waiting_time)
        .def_readwrite("n_goal", &StepMetrics::n_goal);

    m.def("total_reward", &total_reward, py::arg("metrics"), py::arg("coeffs"));

    py::class_<Env>(m, "Env")
        .def(py::init<const ScenarioConfig&, int>(), py::arg("config"), py::arg("window") = 9)
        .def("reset", &Env::reset, py::arg("seed"))
        .def("world", &Env::world, py::return_value_policy::copy)
        .def("global_state", &Env::global_state)
        .def("flat_obs", &Env::flat_obs)
        .def("step",
             [](Env& env, const std::vector<std::pair<int, double>>& actions,
                const RewardCoeffs& rc) {
                 std::vector<AgentAction> acts;
                 for (const auto& [id, a] : actions) acts.push_back({id, a});
                 StepEvents ev = env.advance(acts);
                 StepMetrics metrics = collect_metrics(env.world(), ev, env.config());
                 return py::make_tuple(total_reward(metrics, rc), env.world().done, ev);
             },
             py::arg("actions"), py::arg("reward_coeffs") = RewardCoeffs{})
        .def("active_ids", [](const Env& env) { return active_vehicle_ids(env.world()); })
        .def("observe",
             [](const Env& env, int i) {
                 auto s = observe(env.world(), i, env.histories(), env.config());
                 return s.flatten();
             },
             py::arg("vehicle_id"))
        .def("idm_actions", [](const Env& env) {
            std::vector<std::pair<int, double>> out;
            for (const auto& a : idm_joint_action(env.world(), env.config(), IdmParams{}))
                out.emplace_back(a.id, a.accel);
            return out;
        });

    py::class_<TrainConfig>(m, "TrainConfig")
        .def(py::init<>())
        .def_readwrite("episodes", &TrainConfig::episodes)
        .def_readwrite("batch_size", &TrainConfig::batch_size)
        .def_readwrite("gamma", &TrainConfig::gamma)
        .def_readwrite("lr", &TrainConfig::lr)
        .def_readwrite("seed", &TrainConfig::seed)
        .def_readwrite("update_every", &TrainConfig::update_every)
        .def_readwrite("scenario", &TrainConfig::scenario)
        .def_readwrite("reward", &TrainConfig::reward)
        .def("__repr__", [](const TrainConfig& cfg) {
            std::ostringstream ss;
            write_config(ss, cfg);
            return ss.str();
        });

    m.def("default_config", &default_config);
    m.def("small_preset", &small_preset);
    m.def("epsilon_at", &epsilon_at, py::arg("episode"), py::arg("config"));
    m.def("parse_config_file", &parse_config_file, py::arg("path"), py::arg("base"));

    py::class_<EpisodeRow>(m, "EpisodeRow")
        .def_readonly("episode", &EpisodeRow::episode)
        .def_readonly("steps", &EpisodeRow::steps)
        .def_readonly("ret", &EpisodeRow::ret)
        .def_readonly("mean_velocity", &EpisodeRow::mean_velocity)
        .def_readonly("collisions", &EpisodeRow::collisions)
        .def_readonly("arrivals", &EpisodeRow::arrivals)
        .def_readonly("epsilon", &EpisodeRow::epsilon)
        .def_readonly("mean_loss", &EpisodeRow::mean_loss);

    py::class_<TrainResult>(m, "TrainResult")
        .def_readonly("rows", &TrainResult::rows)
        .def_readonly("metrics_path", &TrainResult::metrics_path)
        .def_readonly("final_checkpoint", &TrainResult::final_checkpoint)
        .def_readonly("best_checkpoint", &TrainResult::best_checkpoint);

    m.def("train", [](const TrainConfig& cfg, const std::string& out_dir) {
        return train_run(cfg, out_dir, nullptr);
    }, py::arg("config"), py::arg("out_dir") = std::string());

    py::class_<EvalEpisode>(m, "EvalEpisode")
        .def_readonly("seed", &EvalEpisode::seed)
        .def_readonly("steps", &EvalEpisode::steps)
        .def_readonly("total_reward", &EvalEpisode::total_reward)
        .def_readonly("mean_velocity", &EvalEpisode::mean_velocity)
        .def_readonly("collisions", &EvalEpisode::collisions)
        .def_readonly("arrivals", &EvalEpisode::arrivals);

    py::class_<EvalReport>(m, "EvalReport")
        .def_readonly("policy", &EvalReport::policy)
        .def_readonly("episodes", &EvalReport::episodes)
        .def("mean_reward", &EvalReport::mean_reward)
        .def("std_reward", &EvalReport::std_reward)
        .def("mean_velocity", &EvalReport::mean_velocity)
        .def("mean_collisions", &EvalReport::mean_collisions)
        .def("mean_fuel", &EvalReport::mean_fuel);

    m.def("evaluate_checkpoint",
          [](const std::string& path, const TrainConfig& cfg, uint64_t seed_base, int episodes) {
              Nets nets = load_checkpoint(path);
              Rng rng(cfg.seed);
              auto policy = make_qmix_policy(nets, 0.0, rng);
              return evaluate_policy(policy, "qmix", cfg.scenario, nets.cfg.w, cfg.reward,
                                     cfg.gamma, eval_seeds(seed_base, episodes));
          },
          py::arg("checkpoint"), py::arg("config"), py::arg("seed_base") = 9000,
          py::arg("episodes") = 50);
    m.def("evaluate_idm",
          [](const TrainConfig& cfg, uint64_t seed_base, int episodes) {
              return evaluate_policy(make_idm_policy(cfg.scenario), "idm", cfg.scenario,
                                     cfg.net.w, cfg.reward, cfg.gamma,
                                     eval_seeds(seed_base, episodes));
          },
          py::arg("config"), py::arg("seed_base") = 9000, py::arg("episodes") = 50);

    m.def("gradcheck",
          [](uint64_t seed, int configs) {
              auto results = run_gradcheck_suites(seed, configs);
              std::vector<py::dict> out;
              for (const auto& r : results) {
                  py::dict d;
                  d["name"] = r.name;
                  d["configs"] = r.configs;
                  d["max_rel_error"] = r.max_rel_error;
                  d["passed"] = r.passed;
                  out.push_back(std::move(d));
              }
              return out;
          },
          py::arg("seed") = 12345, py::arg("configs") = 5);

    m.def("encode_dim", [](int d_model) { return 4 + 2 * d_model; });
    m.def("tensor_rows", &tensor_rows);
}
