#include "mergerl/config.hpp"

#include <cstdlib>
#include <fstream>
#include <ostream>
#include <sstream>

namespace mergerl {

namespace {

double to_double(const std::string& key, const std::string& value) {
    char* end = nullptr;
    const double v = std::strtod(value.c_str(), &end);
    if (end == value.c_str() || *end != '\0')
        throw ConfigError("config: bad numeric value for " + key + ": '" + value + "'");
    return v;
}

long long to_int(const std::string& key, const std::string& value) {
    char* end = nullptr;
    const long long v = std::strtoll(value.c_str(), &end, 10);
    if (end == value.c_str() || *end != '\0')
        throw ConfigError("config: bad integer value for " + key + ": '" + value + "'");
    return v;
}

bool to_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1" || value == "yes") return true;
    if (value == "false" || value == "0" || value == "no") return false;
    throw ConfigError("config: bad boolean value for " + key + ": '" + value + "'");
}

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

}  // namespace

void apply_config_entry(TrainConfig& cfg, const std::string& key, const std::string& value) {
    // training
    if (key == "episodes") cfg.episodes = static_cast<int>(to_int(key, value));
    else if (key == "batch_size") cfg.batch_size = static_cast<int>(to_int(key, value));
    else if (key == "gamma") cfg.gamma = to_double(key, value);
    else if (key == "lr") cfg.lr = to_double(key, value);
    else if (key == "epsilon_start") cfg.epsilon_start = to_double(key, value);
    else if (key == "epsilon_min") cfg.epsilon_min = to_double(key, value);
    else if (key == "epsilon_decay") cfg.epsilon_decay = to_double(key, value);
    else if (key == "target_update_interval")
        cfg.target_update_interval = static_cast<int>(to_int(key, value));
    else if (key == "buffer_capacity") cfg.buffer_capacity = static_cast<size_t>(to_int(key, value));
    else if (key == "update_every") cfg.update_every = static_cast<int>(to_int(key, value));
    else if (key == "checkpoint_interval")
        cfg.checkpoint_interval = static_cast<int>(to_int(key, value));
    else if (key == "seed") cfg.seed = static_cast<uint64_t>(to_int(key, value));
    // networks
    else if (key == "w") cfg.net.w = static_cast<int>(to_int(key, value));
    else if (key == "d_model") cfg.net.d_model = static_cast<int>(to_int(key, value));
    else if (key == "heads") cfg.net.n_heads = static_cast<int>(to_int(key, value));
    else if (key == "ffn_hidden") cfg.net.ffn_hidden = static_cast<int>(to_int(key, value));
    else if (key == "q_hidden") cfg.net.q_hidden = static_cast<int>(to_int(key, value));
    else if (key == "mix_hidden") cfg.net.mix_hidden = static_cast<int>(to_int(key, value));
    else if (key == "mix_b2_hidden") cfg.net.mix_b2_hidden = static_cast<int>(to_int(key, value));
    else if (key == "ablate_attention") cfg.net.ablate_attention = to_bool(key, value);
    // scenario
    else if (key == "n_agents") {
        cfg.scenario.n_agents = static_cast<int>(to_int(key, value));
        cfg.net.n_agents = cfg.scenario.n_agents;
    } else if (key == "hw_speed_min") cfg.scenario.hw_speed_min = to_double(key, value);
    else if (key == "hw_speed_max") cfg.scenario.hw_speed_max = to_double(key, value);
    else if (key == "merge_speed_min") cfg.scenario.merge_speed_min = to_double(key, value);
    else if (key == "merge_speed_max") cfg.scenario.merge_speed_max = to_double(key, value);
    else if (key == "depart_min") cfg.scenario.depart_min = to_double(key, value);
    else if (key == "depart_max") cfg.scenario.depart_max = to_double(key, value);
    else if (key == "highway_length") cfg.scenario.highway_length = to_double(key, value);
    else if (key == "ramp_length") cfg.scenario.ramp_length = to_double(key, value);
    else if (key == "dt") cfg.scenario.dt = to_double(key, value);
    else if (key == "max_steps") cfg.scenario.max_steps = static_cast<int>(to_int(key, value));
    else if (key == "v_max") cfg.scenario.v_max = to_double(key, value);
    else if (key == "junction_x") cfg.scenario.junction_x = to_double(key, value);
    else if (key == "hw_desired_velocity")
        cfg.scenario.hw_desired_velocity = to_double(key, value);
    else if (key == "merge_desired_velocity")
        cfg.scenario.merge_desired_velocity = to_double(key, value);
    // reward coefficients
    else if (key == "c1") cfg.reward.c1 = to_double(key, value);
    else if (key == "c2") cfg.reward.c2 = to_double(key, value);
    else if (key == "c3") cfg.reward.c3 = to_double(key, value);
    else if (key == "c4") cfg.reward.c4 = to_double(key, value);
    else if (key == "c5") cfg.reward.c5 = to_double(key, value);
    else if (key == "c6") cfg.reward.c6 = to_double(key, value);
    else if (key == "c7") cfg.reward.c7 = to_double(key, value);
    else if (key == "c8") cfg.reward.c8 = to_double(key, value);
    else throw ConfigError("config: unknown key '" + key + "'");
}

TrainConfig parse_config_file(const std::string& path, TrainConfig base) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot read " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config: line " + std::to_string(lineno) + " is not 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty() || value.empty())
            throw ConfigError("config: line " + std::to_string(lineno) + " has empty key/value");
        apply_config_entry(base, key, value);
    }
    return base;
}

void write_config(std::ostream& out, const TrainConfig& cfg) {
    out << "# training\n";
    out << "episodes = " << cfg.episodes << "\n";
    out << "batch_size = " << cfg.batch_size << "\n";
    out << "gamma = " << cfg.gamma << "\n";
    out << "lr = " << cfg.lr << "\n";
    out << "epsilon_start = " << cfg.epsilon_start << "\n";
    out << "epsilon_min = " << cfg.epsilon_min << "\n";
    out << "epsilon_decay = " << cfg.epsilon_decay << "\n";
    out << "target_update_interval = " << cfg.target_update_interval << "\n";
    out << "buffer_capacity = " << cfg.buffer_capacity << "\n";
    out << "update_every = " << cfg.update_every << "\n";
    out << "checkpoint_interval = " << cfg.checkpoint_interval << "\n";
    out << "seed = " << cfg.seed << "\n";
    out << "# networks\n";
    out << "w = " << cfg.net.w << "\n";
    out << "d_model = " << cfg.net.d_model << "\n";
    out << "heads = " << cfg.net.n_heads << "\n";
    out << "ffn_hidden = " << cfg.net.ffn_hidden << "\n";
    out << "q_hidden = " << cfg.net.q_hidden << "\n";
    out << "mix_hidden = " << cfg.net.mix_hidden << "\n";
    out << "mix_b2_hidden = " << cfg.net.mix_b2_hidden << "\n";
    out << "ablate_attention = " << (cfg.net.ablate_attention ? "true" : "false") << "\n";
    out << "# scenario\n";
    out << "n_agents = " << cfg.scenario.n_agents << "\n";
    out << "hw_speed_min = " << cfg.scenario.hw_speed_min << "\n";
    out << "hw_speed_max = " << cfg.scenario.hw_speed_max << "\n";
    out << "merge_speed_min = " << cfg.scenario.merge_speed_min << "\n";
    out << "merge_speed_max = " << cfg.scenario.merge_speed_max << "\n";
    out << "depart_min = " << cfg.scenario.depart_min << "\n";
    out << "depart_max = " << cfg.scenario.depart_max << "\n";
    out << "highway_length = " << cfg.scenario.highway_length << "\n";
    out << "ramp_length = " << cfg.scenario.ramp_length << "\n";
    out << "dt = " << cfg.scenario.dt << "\n";
    out << "max_steps = " << cfg.scenario.max_steps << "\n";
    out << "v_max = " << cfg.scenario.v_max << "\n";
    out << "junction_x = " << cfg.scenario.junction_x << "\n";
    out << "hw_desired_velocity = " << cfg.scenario.hw_desired_velocity << "\n";
    out << "merge_desired_velocity = " << cfg.scenario.merge_desired_velocity << "\n";
    out << "# reward coefficients\n";
    out << "c1 = " << cfg.reward.c1 << "\n";
    out << "c2 = " << cfg.reward.c2 << "\n";
    out << "c3 = " << cfg.reward.c3 << "\n";
    out << "c4 = " << cfg.reward.c4 << "\n";
    out << "c5 = " << cfg.reward.c5 << "\n";
    out << "c6 = " << cfg.reward.c6 << "\n";
    out << "c7 = " << cfg.reward.c7 << "\n";
    out << "c8 = " << cfg.reward.c8 << "\n";
}

}  // namespace mergerl
