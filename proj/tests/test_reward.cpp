#include <doctest.h>

#include <cmath>

#include "mergerl/reward.hpp"

using namespace mergerl;

namespace {

StepMetrics random_metrics(Rng& rng) {
    StepMetrics m;
    m.n_collisions = rng.uniform_int(3);
    m.v_highway = rng.uniform(0.0, 15.0);
    m.v_merging = rng.uniform(0.0, 15.0);
    m.waiting_time = rng.uniform(0.0, 2.0);
    m.n_goal = rng.uniform_int(4);
    const int n = rng.uniform_int(6);
    for (int i = 0; i < n; ++i)
        m.agents.push_back({i, rng.uniform(0.0, 15.0), rng.uniform(5.0, 14.0),
                            rng.uniform(0.0, 5000.0), rng.uniform(-6.0, 6.0)});
    return m;
}

}  // namespace

TEST_CASE("r_collision: Table III scaling") {
    RewardCoeffs c;
    StepMetrics m;
    m.n_collisions = 1;
    CHECK(r_collision(m, c) == -40.0);
    m.n_collisions = 0;
    CHECK(r_collision(m, c) == 0.0);
    m.n_collisions = 2;
    CHECK(r_collision(m, c) == -80.0);
}

TEST_CASE("r_flow: weighted class averages") {
    RewardCoeffs c;
    StepMetrics m;
    m.v_highway = 10.0;
    m.v_merging = 5.0;
    CHECK(r_flow(m, c) == doctest::Approx(9.5).epsilon(1e-12));
    m.v_merging = 0.0;  // empty merging road contributes nothing
    CHECK(r_flow(m, c) == doctest::Approx(5.0));
    m.v_highway = 0.0;
    CHECK(r_flow(m, c) == 0.0);
}

TEST_CASE("r_waiting: counts accumulated sub-threshold time") {
    RewardCoeffs c;
    StepMetrics m;
    CHECK(r_waiting(m, c) == 0.0);
    m.waiting_time = 0.3;  // three vehicles for one 0.1 s step
    CHECK(r_waiting(m, c) == doctest::Approx(-0.3));
}

TEST_CASE("waiting threshold: exactly 0.1 m/s is not waiting") {
    ScenarioConfig cfg;
    cfg.n_agents = 2;
    WorldState w;
    VehicleRecord a, b;
    a.id = 0;
    a.status = VehicleStatus::active;
    a.kinematics.v = 0.1;  // exact threshold after the update
    a.kinematics.x = 50.0;
    b.id = 1;
    b.status = VehicleStatus::active;
    b.kinematics.v = 0.05;
    b.kinematics.x = 100.0;
    w.vehicles = {a, b};
    auto [next, events] = step(w, {{0, 0.0}, {1, 0.0}}, cfg);
    REQUIRE(events.waiting.size() == 1);
    CHECK(events.waiting[0].first == 1);
    CHECK(next.waiting_time_step == doctest::Approx(0.1));
}

TEST_CASE("r_goal: linear in arrivals") {
    RewardCoeffs c;
    StepMetrics m;
    CHECK(r_goal(m, c) == 0.0);
    m.n_goal = 1;
    CHECK(r_goal(m, c) == 1.0);
    m.n_goal = 4;
    CHECK(r_goal(m, c) == 4.0);
}

TEST_CASE("r_velocity_i: normalized tracking error") {
    RewardCoeffs c;
    CHECK(r_velocity_i(12.0, 12.0, c) == 0.0);
    CHECK(r_velocity_i(6.0, 12.0, c) == doctest::Approx(-1.5));
    CHECK(r_velocity_i(0.0, 12.0, c) == doctest::Approx(-3.0));
    CHECK_THROWS_AS(r_velocity_i(5.0, 0.0, c), ConfigError);
}

TEST_CASE("r_efficiency_i: fuel scaling, including the idle floor") {
    RewardCoeffs c;
    CHECK(r_efficiency_i(0.0, c) == 0.0);
    CHECK(r_efficiency_i(1000.0, c) == doctest::Approx(-0.01));
    // stationary idle vehicle burns the base rate only
    const double idle = fuel_consumption(0.0, 0.0, 0.1);
    CHECK(idle == doctest::Approx(0.1 * 200.0));
    CHECK(r_efficiency_i(idle, c) == doctest::Approx(-1e-5 * 0.1 * 200.0));
}

TEST_CASE("r_comfort_i: absolute acceleration penalty") {
    RewardCoeffs c;
    CHECK(r_comfort_i(0.0, c) == 0.0);
    CHECK(r_comfort_i(-6.0, c) == doctest::Approx(-0.06));
    CHECK(r_comfort_i(3.0, c) == doctest::Approx(-0.03));
}

TEST_CASE("total_reward: collision plus flow composite") {
    RewardCoeffs c;
    StepMetrics m;
    m.n_collisions = 1;
    m.v_highway = 10.0;
    m.v_merging = 5.0;
    CHECK(total_reward(m, c) == doctest::Approx(-30.5).epsilon(1e-12));
}

TEST_CASE("total_reward: all-zero metrics give zero") {
    CHECK(total_reward(StepMetrics{}, RewardCoeffs{}) == 0.0);
}

TEST_CASE("total_reward equals the sum of its seven terms on random draws") {
    Rng rng(909);
    RewardCoeffs c;
    for (int trial = 0; trial < 1000; ++trial) {
        StepMetrics m = random_metrics(rng);
        double expected = r_collision(m, c) + r_flow(m, c) + r_waiting(m, c) + r_goal(m, c);
        for (const auto& a : m.agents)
            expected +=
                r_velocity_i(a.v, a.v_desired, c) + r_efficiency_i(a.fuel, c) + r_comfort_i(a.a, c);
        CHECK(std::fabs(total_reward(m, c) - expected) < 1e-12);
    }
}

TEST_CASE("term signs: penalties never positive, bonuses never negative") {
    Rng rng(910);
    RewardCoeffs c;
    for (int trial = 0; trial < 200; ++trial) {
        StepMetrics m = random_metrics(rng);
        CHECK(r_collision(m, c) <= 0.0);
        CHECK(r_waiting(m, c) <= 0.0);
        CHECK(r_flow(m, c) >= 0.0);
        CHECK(r_goal(m, c) >= 0.0);
        for (const auto& a : m.agents) {
            CHECK(r_velocity_i(a.v, a.v_desired, c) <= 0.0);
            CHECK(r_efficiency_i(a.fuel, c) <= 0.0);
            CHECK(r_comfort_i(a.a, c) <= 0.0);
        }
    }
}

TEST_CASE("rewards are pure functions of the metrics") {
    Rng rng(911);
    RewardCoeffs c;
    StepMetrics m = random_metrics(rng);
    const double first = total_reward(m, c);
    for (int i = 0; i < 10; ++i) CHECK(total_reward(m, c) == first);
}
