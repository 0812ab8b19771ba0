#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mergerl/tensor.hpp"

namespace mergerl {

struct ContractViolation : std::logic_error {
    using std::logic_error::logic_error;
};

struct ScenarioError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Route { HW, M };
enum class VehicleStatus { pending, active, arrived, crashed };

// Lane codes: 0 = highway right lane, 1 = highway left lane, 2 = on-ramp.
constexpr int kLaneHighwayRight = 0;
constexpr int kLaneHighwayLeft = 1;
constexpr int kLaneRamp = 2;

struct KinematicState {
    double x = 0.0;  // longitudinal position of the front bumper (m)
    double y = 0.0;  // lateral position (m)
    double v = 0.0;  // speed (m/s)
    double a = 0.0;  // applied acceleration (m/s²)
};

struct VehicleRecord {
    int id = -1;
    Route route = Route::HW;
    int lane = kLaneHighwayRight;
    double length = 5.0;
    double depart_time = 0.0;
    double desired_velocity = 12.0;
    VehicleStatus status = VehicleStatus::pending;
    KinematicState kinematics;
};

struct ScenarioConfig {
    int n_agents = 16;
    double hw_speed_min = 7.0, hw_speed_max = 10.0;
    double merge_speed_min = 4.0, merge_speed_max = 8.0;
    double depart_min = 0.0, depart_max = 100.0;
    double highway_length = 400.0;
    double ramp_length = 100.0;
    double dt = 0.1;
    int max_steps = 1000;
    uint64_t seed = 0;

    // geometry and limit decisions not fixed by the vehicle tables
    double v_max = 15.0;
    double junction_x = 200.0;        // ramp joins highway lane 0 here
    double conflict_half_width = 10.0;
    double lane_width = 3.5;
    double vehicle_length = 5.0;
    double hw_desired_velocity = 12.0;
    double merge_desired_velocity = 10.0;
    double waiting_speed_threshold = 0.1;

    double ramp_start() const { return junction_x - ramp_length; }
    void validate() const;
};

struct WorldState {
    int step = 0;
    double time = 0.0;
    std::vector<VehicleRecord> vehicles;
    int collision_count_step = 0;
    int arrivals_step = 0;
    double waiting_time_step = 0.0;
    bool done = false;
};

struct AgentAction {
    int id = -1;
    double accel = 0.0;
};

struct StepEvents {
    std::vector<std::pair<int, int>> collisions;  // id pairs, ordered (lo, hi)
    std::vector<int> arrivals;
    std::vector<int> departures;
    std::vector<std::pair<int, double>> waiting;  // (id, accrued seconds)
};

// Ring of the last w+1 kinematic states of one vehicle, oldest→newest.
// Slots never written stay all-zero, which doubles as pre-departure padding.
class HistoryBuffer {
public:
    HistoryBuffer() = default;
    explicit HistoryBuffer(int window) : cap_(window + 1), ring_(cap_) {}

    void push(const KinematicState& k) {
        ring_[head_] = k;
        head_ = (head_ + 1) % cap_;
    }

    // j in [0, w]: 0 = oldest retained slot, w = most recent
    const KinematicState& row(int j) const { return ring_[(head_ + j) % cap_]; }
    int capacity() const { return cap_; }

private:
    int cap_ = 1;
    std::vector<KinematicState> ring_{1};
    int head_ = 0;
};

// All vehicles' histories, stamped with the world step they were recorded at.
struct HistorySet {
    int window = 9;
    int recorded_step = -1;
    double recorded_time = 0.0;
    std::vector<HistoryBuffer> buffers;

    static HistorySet create(int n_vehicles, int window);
    void record(const WorldState& world);
};

// Flat agent observation: own kinematics plus the front and opposite
// neighbors' (w+1)-step histories. Dimension 4 + 8(w+1).
struct InformationState {
    std::vector<double> own;  // 4
    Tensor front_hist;        // (w+1)×4, oldest→newest
    Tensor opp_hist;          // (w+1)×4

    std::vector<double> flatten() const;
    int dimension() const { return 4 + 2 * front_hist.rows * 4; }
};

// --- scenario generation ----------------------------------------------------
std::vector<VehicleRecord> generate_scenario(const ScenarioConfig& config, uint64_t seed);
WorldState make_world(const ScenarioConfig& config, std::vector<VehicleRecord> vehicles);

// Pinned scenarios for tests: one line per vehicle,
//   `vehicle <HW|M> <depart_time> <speed> [lane] [x]`
std::vector<VehicleRecord> parse_scenario_file(const std::string& path, const ScenarioConfig& cfg);

// --- dynamics ----------------------------------------------------------------
std::pair<WorldState, StepEvents> step(const WorldState& world,
                                       const std::vector<AgentAction>& joint_action,
                                       const ScenarioConfig& cfg);

std::vector<std::pair<int, int>> detect_collisions(const WorldState& world,
                                                   const ScenarioConfig& cfg);

std::optional<int> front_vehicle(const WorldState& world, int i);
std::optional<int> opposite_vehicle(const WorldState& world, int i, const ScenarioConfig& cfg);

InformationState observe(const WorldState& world, int i, const HistorySet& histories,
                          const ScenarioConfig& cfg);

// --- IDM car-following law ---------------------------------------------------
struct IdmParams {
    double a_max = 2.0;
    double b_comfort = 3.0;
    double v0 = 12.0;  // callers override with the vehicle's desired velocity
    double delta = 4.0;
    double s0 = 2.0;
    double headway = 1.5;
    double a_min = -6.0;
    double a_cap = 6.0;
};

struct LeaderInfo {
    double gap = 0.0;       // clear distance to leader's rear bumper (m)
    double speed = 0.0;
};

double idm_accel(const KinematicState& ego, const std::optional<LeaderInfo>& leader,
                 const IdmParams& params, bool* emergency = nullptr);

// Baseline controller: IDM toward the same-lane front vehicle; ramp vehicles
// approaching the junction also yield to the conflicting lane-0 vehicle when
// it is physically ahead of them.
std::vector<AgentAction> idm_joint_action(const WorldState& world, const ScenarioConfig& cfg,
                                          const IdmParams& params);

// --- helpers -----------------------------------------------------------------
std::vector<int> active_vehicle_ids(const WorldState& world);
bool all_arrived(const WorldState& world);
bool in_conflict_window(const VehicleRecord& v, const ScenarioConfig& cfg);

}  // namespace mergerl
