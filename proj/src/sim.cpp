#include "mergerl/sim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace mergerl {

namespace {

constexpr int kMaxPackingAttempts = 100;

bool on_highway(const VehicleRecord& v) {
    return v.lane == kLaneHighwayRight || v.lane == kLaneHighwayLeft;
}

bool intervals_overlap(const VehicleRecord& a, const VehicleRecord& b) {
    const double alo = a.kinematics.x - a.length, ahi = a.kinematics.x;
    const double blo = b.kinematics.x - b.length, bhi = b.kinematics.x;
    return alo < bhi && blo < ahi;
}

bool share_collision_domain(const VehicleRecord& a, const VehicleRecord& b,
                            const ScenarioConfig& cfg) {
    if (a.lane == b.lane) return true;
    const bool ramp_vs_lane0 = (a.lane == kLaneRamp && b.lane == kLaneHighwayRight) ||
                               (b.lane == kLaneRamp && a.lane == kLaneHighwayRight);
    return ramp_vs_lane0 && in_conflict_window(a, cfg) && in_conflict_window(b, cfg);
}

// Sample k positions in [lo, hi] with pairwise spacing ≥ gap: draw k uniforms
// in the shrunken interval, sort, and re-add the spacing. This is the uniform
// law conditioned on the gap constraint (what rejection sampling converges to)
// without the rejection loop.
std::vector<double> spaced_positions(Rng& rng, int k, double lo, double hi, double gap) {
    const double span = hi - lo - gap * (k - 1);
    if (span < 0.0) throw ScenarioError("spaced_positions: lane cannot fit requested vehicles");
    std::vector<double> xs(k);
    for (auto& x : xs) x = rng.uniform(0.0, span);
    std::sort(xs.begin(), xs.end());
    for (int i = 0; i < k; ++i) xs[i] += lo + gap * i;
    return xs;
}

double lane_y(int lane, const ScenarioConfig& cfg) {
    switch (lane) {
        case kLaneHighwayRight: return 0.0;
        case kLaneHighwayLeft: return cfg.lane_width;
        default: return -cfg.lane_width;
    }
}

bool spawn_blocked(const WorldState& world, const VehicleRecord& candidate,
                   const ScenarioConfig& cfg) {
    for (const auto& other : world.vehicles) {
        if (other.id == candidate.id || other.status != VehicleStatus::active) continue;
        if (share_collision_domain(candidate, other, cfg) && intervals_overlap(candidate, other))
            return true;
    }
    return false;
}

void activate_due_vehicles(WorldState& world, StepEvents& events, const ScenarioConfig& cfg) {
    // deterministic order: by depart time, then id
    std::vector<int> due;
    for (const auto& v : world.vehicles)
        if (v.status == VehicleStatus::pending && v.depart_time <= world.time + 1e-12)
            due.push_back(v.id);
    std::sort(due.begin(), due.end(), [&](int a, int b) {
        const auto& va = world.vehicles[a];
        const auto& vb = world.vehicles[b];
        if (va.depart_time != vb.depart_time) return va.depart_time < vb.depart_time;
        return a < b;
    });
    for (int id : due) {
        VehicleRecord& v = world.vehicles[id];
        if (spawn_blocked(world, v, cfg)) continue;  // retry on a later step
        v.status = VehicleStatus::active;
        events.departures.push_back(id);
    }
}

}  // namespace

void ScenarioConfig::validate() const {
    if (n_agents <= 0) throw ScenarioError("config: n_agents must be positive");
    if (hw_speed_min > hw_speed_max || merge_speed_min > merge_speed_max ||
        depart_min > depart_max)
        throw ScenarioError("config: empty sampling range");
    if (dt <= 0.0) throw ScenarioError("config: dt must be positive");
    if (max_steps <= 0) throw ScenarioError("config: max_steps must be positive");
    if (highway_length <= 0.0 || ramp_length <= 0.0) throw ScenarioError("config: bad road length");
    if (junction_x <= ramp_length || junction_x >= highway_length)
        throw ScenarioError("config: junction must lie inside the highway");
}

bool in_conflict_window(const VehicleRecord& v, const ScenarioConfig& cfg) {
    return v.kinematics.x >= cfg.junction_x - cfg.conflict_half_width &&
           v.kinematics.x <= cfg.junction_x + cfg.conflict_half_width;
}

std::vector<VehicleRecord> generate_scenario(const ScenarioConfig& config, uint64_t seed) {
    config.validate();
    Rng rng(seed);
    const double min_spacing = 2.0 * config.vehicle_length;

    for (int attempt = 0; attempt < kMaxPackingAttempts; ++attempt) {
        std::vector<VehicleRecord> vehicles(config.n_agents);
        std::vector<std::vector<int>> by_lane(3);
        for (int i = 0; i < config.n_agents; ++i) {
            VehicleRecord& v = vehicles[i];
            v.id = i;
            v.length = config.vehicle_length;
            v.route = rng.unit() < 0.5 ? Route::HW : Route::M;
            v.depart_time = rng.uniform(config.depart_min, config.depart_max);
            if (v.route == Route::HW) {
                v.lane = rng.unit() < 0.5 ? kLaneHighwayRight : kLaneHighwayLeft;
                v.kinematics.v = rng.uniform(config.hw_speed_min, config.hw_speed_max);
                v.desired_velocity = config.hw_desired_velocity;
            } else {
                v.lane = kLaneRamp;
                v.kinematics.v = rng.uniform(config.merge_speed_min, config.merge_speed_max);
                v.desired_velocity = config.merge_desired_velocity;
            }
            v.kinematics.y = lane_y(v.lane, config);
            by_lane[v.lane].push_back(i);
        }

        // spawn zones: highway lanes ahead of the conflict window, ramp from its
        // start up to just short of the junction
        const double hw_lo = config.vehicle_length;
        const double hw_hi = config.junction_x - config.conflict_half_width - config.vehicle_length;
        const double ramp_lo = config.ramp_start() + config.vehicle_length;
        const double ramp_hi = config.junction_x - 1.0;

        bool ok = true;
        for (int lane = 0; lane < 3 && ok; ++lane) {
            const auto& ids = by_lane[lane];
            if (ids.empty()) continue;
            const double lo = lane == kLaneRamp ? ramp_lo : hw_lo;
            const double hi = lane == kLaneRamp ? ramp_hi : hw_hi;
            const int k = static_cast<int>(ids.size());
            if (hi - lo - min_spacing * (k - 1) < 0.0) {
                ok = false;  // this route draw cannot pack; redraw everything
                break;
            }
            auto xs = spaced_positions(rng, k, lo, hi, min_spacing);
            for (int j = 0; j < k; ++j) vehicles[ids[j]].kinematics.x = xs[j];
        }
        if (ok) return vehicles;
    }
    throw ScenarioError("generate_scenario: infeasible packing after bounded resampling attempts");
}

WorldState make_world(const ScenarioConfig& config, std::vector<VehicleRecord> vehicles) {
    WorldState w;
    w.vehicles = std::move(vehicles);
    StepEvents ignored;
    activate_due_vehicles(w, ignored, config);
    return w;
}

std::vector<VehicleRecord> parse_scenario_file(const std::string& path,
                                               const ScenarioConfig& cfg) {
    std::ifstream in(path);
    if (!in) throw ScenarioError("scenario file not readable: " + path);
    std::vector<VehicleRecord> vehicles;
    std::string line;
    int lineno = 0;
    // fallback positions when the file omits them: march back from the zone end
    double next_hw[2] = {cfg.junction_x - cfg.conflict_half_width - cfg.vehicle_length,
                         cfg.junction_x - cfg.conflict_half_width - cfg.vehicle_length};
    double next_ramp = cfg.junction_x - 1.0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ss(line);
        std::string tag;
        if (!(ss >> tag)) continue;
        if (tag != "vehicle")
            throw ScenarioError("scenario file line " + std::to_string(lineno) +
                                ": expected 'vehicle'");
        std::string route;
        VehicleRecord v;
        v.id = static_cast<int>(vehicles.size());
        v.length = cfg.vehicle_length;
        if (!(ss >> route >> v.depart_time >> v.kinematics.v))
            throw ScenarioError("scenario file line " + std::to_string(lineno) + ": bad fields");
        if (route == "HW") {
            v.route = Route::HW;
            v.desired_velocity = cfg.hw_desired_velocity;
            v.lane = kLaneHighwayRight;
        } else if (route == "M") {
            v.route = Route::M;
            v.desired_velocity = cfg.merge_desired_velocity;
            v.lane = kLaneRamp;
        } else {
            throw ScenarioError("scenario file line " + std::to_string(lineno) +
                                ": route must be HW or M");
        }
        int lane;
        if (ss >> lane) {
            if (lane < 0 || lane > 2 || (v.route == Route::M) != (lane == kLaneRamp))
                throw ScenarioError("scenario file line " + std::to_string(lineno) +
                                    ": lane inconsistent with route");
            v.lane = lane;
        }
        double x;
        if (ss >> x) {
            v.kinematics.x = x;
        } else if (v.route == Route::M) {
            v.kinematics.x = next_ramp;
            next_ramp -= 2.0 * cfg.vehicle_length;
        } else {
            v.kinematics.x = next_hw[v.lane];
            next_hw[v.lane] -= 2.0 * cfg.vehicle_length;
        }
        v.kinematics.y = lane_y(v.lane, cfg);
        vehicles.push_back(v);
    }
    if (vehicles.empty()) throw ScenarioError("scenario file lists no vehicles");
    return vehicles;
}

std::vector<std::pair<int, int>> detect_collisions(const WorldState& world,
                                                   const ScenarioConfig& cfg) {
    std::vector<std::pair<int, int>> out;
    const auto& vs = world.vehicles;
    for (size_t i = 0; i < vs.size(); ++i) {
        if (vs[i].status != VehicleStatus::active) continue;
        for (size_t j = i + 1; j < vs.size(); ++j) {
            if (vs[j].status != VehicleStatus::active) continue;
            if (!share_collision_domain(vs[i], vs[j], cfg)) continue;
            if (intervals_overlap(vs[i], vs[j]))
                out.emplace_back(std::min(vs[i].id, vs[j].id), std::max(vs[i].id, vs[j].id));
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::optional<int> front_vehicle(const WorldState& world, int i) {
    const auto& ego = world.vehicles.at(i);
    if (ego.status != VehicleStatus::active)
        throw ContractViolation("front_vehicle: vehicle not active");
    std::optional<int> best;
    double best_dx = std::numeric_limits<double>::infinity();
    for (const auto& other : world.vehicles) {
        if (other.id == i || other.status != VehicleStatus::active || other.lane != ego.lane)
            continue;
        const double dx = other.kinematics.x - ego.kinematics.x;
        if (dx > 0.0 && dx < best_dx) {
            best_dx = dx;
            best = other.id;
        }
    }
    return best;
}

std::optional<int> opposite_vehicle(const WorldState& world, int i, const ScenarioConfig& cfg) {
    const auto& ego = world.vehicles.at(i);
    if (ego.status != VehicleStatus::active)
        throw ContractViolation("opposite_vehicle: vehicle not active");
    if (ego.lane == kLaneHighwayLeft) return std::nullopt;
    if (ego.kinematics.x > cfg.junction_x) return std::nullopt;  // past the merge point
    const int opposing_lane = ego.lane == kLaneRamp ? kLaneHighwayRight : kLaneRamp;
    const double ego_dist = cfg.junction_x - ego.kinematics.x;
    std::optional<int> best;
    double best_diff = std::numeric_limits<double>::infinity();
    for (const auto& other : world.vehicles) {
        if (other.status != VehicleStatus::active || other.lane != opposing_lane) continue;
        if (other.kinematics.x > cfg.junction_x) continue;  // already passed the junction
        const double diff = std::fabs(ego_dist - (cfg.junction_x - other.kinematics.x));
        if (diff < best_diff) {
            best_diff = diff;
            best = other.id;
        }
    }
    return best;
}

std::pair<WorldState, StepEvents> step(const WorldState& world,
                                       const std::vector<AgentAction>& joint_action,
                                       const ScenarioConfig& cfg) {
    if (world.done) throw ContractViolation("step: episode already done");
    WorldState next = world;
    StepEvents events;
    next.collision_count_step = 0;
    next.arrivals_step = 0;
    next.waiting_time_step = 0.0;

    // exactly one action per active vehicle, none for anything else
    std::vector<double> accel(next.vehicles.size(), 0.0);
    std::vector<char> seen(next.vehicles.size(), 0);
    for (const auto& act : joint_action) {
        if (act.id < 0 || act.id >= static_cast<int>(next.vehicles.size()))
            throw ContractViolation("step: action for unknown vehicle id");
        if (next.vehicles[act.id].status != VehicleStatus::active)
            throw ContractViolation("step: action for non-active vehicle");
        if (seen[act.id]) throw ContractViolation("step: duplicate action for vehicle");
        if (act.accel < -6.0 - 1e-12 || act.accel > 6.0 + 1e-12)
            throw ContractViolation("step: acceleration outside [-6, 6]");
        seen[act.id] = 1;
        accel[act.id] = act.accel;
    }
    for (const auto& v : next.vehicles)
        if (v.status == VehicleStatus::active && !seen[v.id])
            throw ContractViolation("step: missing action for active vehicle");

    next.step = world.step + 1;
    next.time = world.time + cfg.dt;

    // semi-implicit update: velocity first, then position
    for (auto& v : next.vehicles) {
        if (v.status != VehicleStatus::active) continue;
        const double a = accel[v.id];
        v.kinematics.a = a;
        v.kinematics.v = std::clamp(v.kinematics.v + a * cfg.dt, 0.0, cfg.v_max);
        v.kinematics.x += v.kinematics.v * cfg.dt;
    }

    // ramp vehicles reaching the junction join highway lane 0, keeping x
    for (auto& v : next.vehicles) {
        if (v.status == VehicleStatus::active && v.lane == kLaneRamp &&
            v.kinematics.x >= cfg.junction_x) {
            v.lane = kLaneHighwayRight;
            v.kinematics.y = lane_y(v.lane, cfg);
        }
    }

    // arrivals: front bumper past the highway exit
    for (auto& v : next.vehicles) {
        if (v.status == VehicleStatus::active && on_highway(v) &&
            v.kinematics.x > cfg.highway_length) {
            v.status = VehicleStatus::arrived;
            events.arrivals.push_back(v.id);
        }
    }

    activate_due_vehicles(next, events, cfg);

    auto collisions = detect_collisions(next, cfg);
    for (const auto& [a, b] : collisions) {
        next.vehicles[a].status = VehicleStatus::crashed;
        next.vehicles[b].status = VehicleStatus::crashed;
    }
    events.collisions = std::move(collisions);
    next.collision_count_step = static_cast<int>(events.collisions.size());
    next.arrivals_step = static_cast<int>(events.arrivals.size());

    for (const auto& v : next.vehicles) {
        if (v.status == VehicleStatus::active && v.kinematics.v < cfg.waiting_speed_threshold) {
            next.waiting_time_step += cfg.dt;
            events.waiting.emplace_back(v.id, cfg.dt);
        }
    }

    next.done = next.collision_count_step > 0 || next.step >= cfg.max_steps || all_arrived(next);
    return {std::move(next), std::move(events)};
}

HistorySet HistorySet::create(int n_vehicles, int window) {
    HistorySet h;
    h.window = window;
    h.buffers.assign(n_vehicles, HistoryBuffer(window));
    return h;
}

void HistorySet::record(const WorldState& world) {
    if (static_cast<int>(buffers.size()) != static_cast<int>(world.vehicles.size()))
        throw ContractViolation("HistorySet: vehicle count mismatch");
    for (const auto& v : world.vehicles)
        if (v.status == VehicleStatus::active) buffers[v.id].push(v.kinematics);
    recorded_step = world.step;
    recorded_time = world.time;
}

std::vector<double> InformationState::flatten() const {
    std::vector<double> out;
    out.reserve(dimension());
    out.insert(out.end(), own.begin(), own.end());
    out.insert(out.end(), front_hist.data.begin(), front_hist.data.end());
    out.insert(out.end(), opp_hist.data.begin(), opp_hist.data.end());
    return out;
}

namespace {

Tensor history_matrix(const HistorySet& histories, std::optional<int> id, int window) {
    Tensor m(window + 1, 4);
    if (!id) return m;
    const HistoryBuffer& buf = histories.buffers[*id];
    for (int j = 0; j <= window; ++j) {
        const KinematicState& k = buf.row(j);
        m.at(j, 0) = k.x;
        m.at(j, 1) = k.y;
        m.at(j, 2) = k.v;
        m.at(j, 3) = k.a;
    }
    return m;
}

}  // namespace

InformationState observe(const WorldState& world, int i, const HistorySet& histories,
                          const ScenarioConfig& cfg) {
    const auto& ego = world.vehicles.at(i);
    if (ego.status != VehicleStatus::active)
        throw ContractViolation("observe: vehicle not active");
    if (histories.recorded_step != world.step)
        throw ContractViolation("observe: history buffer is stale");
    InformationState s;
    s.own = {ego.kinematics.x, ego.kinematics.y, ego.kinematics.v, ego.kinematics.a};
    s.front_hist = history_matrix(histories, front_vehicle(world, i), histories.window);
    s.opp_hist = history_matrix(histories, opposite_vehicle(world, i, cfg), histories.window);
    return s;
}

double idm_accel(const KinematicState& ego, const std::optional<LeaderInfo>& leader,
                 const IdmParams& p, bool* emergency) {
    if (emergency) *emergency = false;
    if (ego.v < 0.0) throw ContractViolation("idm_accel: negative ego speed");
    double a = p.a_max * (1.0 - std::pow(ego.v / p.v0, p.delta));
    if (leader) {
        if (leader->gap <= 0.0) {
            if (emergency) *emergency = true;
            return p.a_min;
        }
        const double dv = ego.v - leader->speed;
        const double s_star =
            p.s0 + ego.v * p.headway + ego.v * dv / (2.0 * std::sqrt(p.a_max * p.b_comfort));
        const double ratio = s_star / leader->gap;
        a -= p.a_max * ratio * ratio;
    }
    return std::clamp(a, p.a_min, p.a_cap);
}

std::vector<AgentAction> idm_joint_action(const WorldState& world, const ScenarioConfig& cfg,
                                          const IdmParams& params) {
    std::vector<AgentAction> actions;
    for (const auto& v : world.vehicles) {
        if (v.status != VehicleStatus::active) continue;
        IdmParams p = params;
        p.v0 = v.desired_velocity;
        std::optional<LeaderInfo> leader;
        if (auto f = front_vehicle(world, v.id)) {
            const auto& lv = world.vehicles[*f];
            leader = LeaderInfo{lv.kinematics.x - lv.length - v.kinematics.x, lv.kinematics.v};
        }
        if (v.lane == kLaneRamp && cfg.junction_x - v.kinematics.x <= 50.0) {
            if (auto o = opposite_vehicle(world, v.id, cfg)) {
                const auto& ov = world.vehicles[*o];
                const double gap = ov.kinematics.x - ov.length - v.kinematics.x;
                if (gap < (leader ? leader->gap : std::numeric_limits<double>::infinity()) &&
                    ov.kinematics.x > v.kinematics.x)
                    leader = LeaderInfo{gap, ov.kinematics.v};
            }
        }
        actions.push_back({v.id, idm_accel(v.kinematics, leader, p)});
    }
    return actions;
}

std::vector<int> active_vehicle_ids(const WorldState& world) {
    std::vector<int> ids;
    for (const auto& v : world.vehicles)
        if (v.status == VehicleStatus::active) ids.push_back(v.id);
    return ids;
}

bool all_arrived(const WorldState& world) {
    for (const auto& v : world.vehicles)
        if (v.status != VehicleStatus::arrived) return false;
    return true;
}

}  // namespace mergerl
