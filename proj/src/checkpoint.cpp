#include "mergerl/checkpoint.hpp"

#include <cstdint>
#include <fstream>

namespace mergerl {

namespace {

constexpr char kMagic[8] = {'M', 'R', 'L', 'C', 'K', 'P', 'T', '1'};

void write_u32(std::ostream& out, uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

uint32_t read_u32(std::istream& in) {
    uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!in) throw CheckpointError("checkpoint: truncated header");
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path, Nets& nets) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("checkpoint: cannot open for writing: " + path);
    out.write(kMagic, sizeof(kMagic));
    const QNetConfig& c = nets.cfg;
    for (uint32_t v : {static_cast<uint32_t>(c.w), static_cast<uint32_t>(c.d_model),
                       static_cast<uint32_t>(c.n_heads), static_cast<uint32_t>(c.n_actions()),
                       static_cast<uint32_t>(c.n_agents), static_cast<uint32_t>(c.ffn_hidden),
                       static_cast<uint32_t>(c.q_hidden), static_cast<uint32_t>(c.mix_hidden),
                       static_cast<uint32_t>(c.mix_b2_hidden),
                       static_cast<uint32_t>(c.ablate_attention ? 1 : 0)})
        write_u32(out, v);

    auto params = nets.params();
    // alpha is fixed but stored so the file fully describes the encoder
    write_u32(out, static_cast<uint32_t>(params.size()) + 1);
    auto write_tensor = [&](const std::string& name, const Tensor& t) {
        write_u32(out, static_cast<uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_u32(out, static_cast<uint32_t>(t.rows));
        write_u32(out, static_cast<uint32_t>(t.cols));
        out.write(reinterpret_cast<const char*>(t.data.data()),
                  static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    };
    write_tensor("enc.alpha", nets.agent.enc.alpha);
    for (Parameter* p : params) write_tensor(p->name, p->value);
    if (!out) throw CheckpointError("checkpoint: write failed: " + path);
}

Nets load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("checkpoint: cannot open: " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::string(magic, 8) != std::string(kMagic, 8))
        throw CheckpointError("checkpoint: bad magic (not a checkpoint file?): " + path);

    QNetConfig c;
    c.w = static_cast<int>(read_u32(in));
    c.d_model = static_cast<int>(read_u32(in));
    c.n_heads = static_cast<int>(read_u32(in));
    const uint32_t n_actions = read_u32(in);
    c.n_agents = static_cast<int>(read_u32(in));
    c.ffn_hidden = static_cast<int>(read_u32(in));
    c.q_hidden = static_cast<int>(read_u32(in));
    c.mix_hidden = static_cast<int>(read_u32(in));
    c.mix_b2_hidden = static_cast<int>(read_u32(in));
    c.ablate_attention = read_u32(in) != 0;
    if (n_actions != static_cast<uint32_t>(kNumActions))
        throw CheckpointError("checkpoint: unsupported action-set size");

    Nets nets = Nets::init(c, 0);
    auto params = nets.params();
    std::unordered_map<std::string, Parameter*> by_name;
    for (Parameter* p : params) by_name[p->name] = p;

    const uint32_t count = read_u32(in);
    if (count != params.size() + 1)
        throw CheckpointError("checkpoint: parameter count mismatch");
    for (uint32_t k = 0; k < count; ++k) {
        const uint32_t name_len = read_u32(in);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        const int rows = static_cast<int>(read_u32(in));
        const int cols = static_cast<int>(read_u32(in));
        Tensor t(rows, cols);
        in.read(reinterpret_cast<char*>(t.data.data()),
                static_cast<std::streamsize>(t.data.size() * sizeof(double)));
        if (!in) throw CheckpointError("checkpoint: truncated payload at " + name);
        if (name == "enc.alpha") {
            if (!t.same_shape(nets.agent.enc.alpha))
                throw CheckpointError("checkpoint: alpha shape mismatch");
            nets.agent.enc.alpha = std::move(t);
            continue;
        }
        auto it = by_name.find(name);
        if (it == by_name.end()) throw CheckpointError("checkpoint: unknown parameter " + name);
        if (!it->second->value.same_shape(t))
            throw CheckpointError("checkpoint: shape mismatch for " + name);
        it->second->value = std::move(t);
    }
    return nets;
}

}  // namespace mergerl
