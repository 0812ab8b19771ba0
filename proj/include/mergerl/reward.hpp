#pragma once

#include <vector>

#include "mergerl/sim.hpp"

namespace mergerl {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct RewardCoeffs {
    double c1 = 40.0;      // collision penalty
    double c2 = 0.5;       // highway flow
    double c3 = 0.9;       // merging flow
    double c4 = 1.0;       // waiting penalty
    double c5 = 1.0;       // goal bonus
    double c6 = 3.0;       // velocity tracking penalty
    double c7 = 0.00001;   // fuel penalty
    double c8 = 0.01;      // comfort penalty
};

struct AgentStepMetrics {
    int id = -1;
    double v = 0.0;
    double v_desired = 1.0;
    double fuel = 0.0;  // mg consumed this step
    double a = 0.0;
};

struct StepMetrics {
    int n_collisions = 0;
    double v_highway = 0.0;   // mean speed over active highway vehicles, 0 if none
    double v_merging = 0.0;   // mean speed over active ramp vehicles, 0 if none
    double waiting_time = 0.0;
    int n_goal = 0;
    std::vector<AgentStepMetrics> agents;  // active vehicles only
};

// Surrogate per-step fuel burn in mg: idle base plus speed, drag, and
// throttle terms. Absolute scale is arbitrary; c7 sets the weight.
double fuel_consumption(double v, double a, double dt);

StepMetrics collect_metrics(const WorldState& after, const StepEvents& events,
                            const ScenarioConfig& cfg);

double r_collision(const StepMetrics& m, const RewardCoeffs& c);
double r_flow(const StepMetrics& m, const RewardCoeffs& c);
double r_waiting(const StepMetrics& m, const RewardCoeffs& c);
double r_goal(const StepMetrics& m, const RewardCoeffs& c);
double r_velocity_i(double v, double v_desired, const RewardCoeffs& c);
double r_efficiency_i(double fuel, const RewardCoeffs& c);
double r_comfort_i(double a, const RewardCoeffs& c);

// Team reward: global terms plus every active agent's individual terms.
double total_reward(const StepMetrics& m, const RewardCoeffs& c);

}  // namespace mergerl
