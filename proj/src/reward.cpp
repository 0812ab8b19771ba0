#include "mergerl/reward.hpp"

#include <cmath>

namespace mergerl {

namespace {
constexpr double kFuelIdle = 200.0;    // mg/s
constexpr double kFuelSpeed = 20.0;    // mg per m
constexpr double kFuelDrag = 1.5;      // mg·s/m²
constexpr double kFuelThrottle = 80.0;  // mg·s²/m² per m/s of speed
}  // namespace

double fuel_consumption(double v, double a, double dt) {
    return dt * (kFuelIdle + kFuelSpeed * v + kFuelDrag * v * v +
                 kFuelThrottle * v * std::max(a, 0.0));
}

StepMetrics collect_metrics(const WorldState& after, const StepEvents& events,
                            const ScenarioConfig& cfg) {
    StepMetrics m;
    m.n_collisions = static_cast<int>(events.collisions.size());
    m.n_goal = static_cast<int>(events.arrivals.size());
    for (const auto& [id, dt] : events.waiting) m.waiting_time += dt;

    double hw_sum = 0.0, merge_sum = 0.0;
    int hw_n = 0, merge_n = 0;
    for (const auto& v : after.vehicles) {
        if (v.status != VehicleStatus::active) continue;
        if (v.lane == kLaneRamp) {
            merge_sum += v.kinematics.v;
            ++merge_n;
        } else {
            hw_sum += v.kinematics.v;
            ++hw_n;
        }
        AgentStepMetrics am;
        am.id = v.id;
        am.v = v.kinematics.v;
        am.v_desired = v.desired_velocity;
        am.a = v.kinematics.a;
        am.fuel = fuel_consumption(v.kinematics.v, v.kinematics.a, cfg.dt);
        m.agents.push_back(am);
    }
    m.v_highway = hw_n > 0 ? hw_sum / hw_n : 0.0;
    m.v_merging = merge_n > 0 ? merge_sum / merge_n : 0.0;
    return m;
}

double r_collision(const StepMetrics& m, const RewardCoeffs& c) {
    return -c.c1 * m.n_collisions;
}

double r_flow(const StepMetrics& m, const RewardCoeffs& c) {
    return c.c2 * m.v_highway + c.c3 * m.v_merging;
}

double r_waiting(const StepMetrics& m, const RewardCoeffs& c) {
    return -c.c4 * m.waiting_time;
}

double r_goal(const StepMetrics& m, const RewardCoeffs& c) {
    return c.c5 * m.n_goal;
}

double r_velocity_i(double v, double v_desired, const RewardCoeffs& c) {
    if (v_desired <= 0.0) throw ConfigError("r_velocity_i: desired velocity must be positive");
    return -c.c6 * std::fabs(v - v_desired) / v_desired;
}

double r_efficiency_i(double fuel, const RewardCoeffs& c) {
    return -c.c7 * fuel;
}

double r_comfort_i(double a, const RewardCoeffs& c) {
    return -c.c8 * std::fabs(a);
}

double total_reward(const StepMetrics& m, const RewardCoeffs& c) {
    double r = r_collision(m, c) + r_flow(m, c) + r_waiting(m, c) + r_goal(m, c);
    for (const auto& ag : m.agents)
        r += r_velocity_i(ag.v, ag.v_desired, c) + r_efficiency_i(ag.fuel, c) +
             r_comfort_i(ag.a, c);
    return r;
}

}  // namespace mergerl
