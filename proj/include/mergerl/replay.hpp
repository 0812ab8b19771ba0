#pragma once

#include <cstdint>
#include <vector>

#include "mergerl/tensor.hpp"

namespace mergerl {

// One joint environment transition. Observations are stored flat:
// per-agent information states (N×dim, zeros for non-active agents)
// plus the fixed-length global state.
struct Transition {
    std::vector<double> obs;        // N · (4 + 8(w+1))
    std::vector<double> gs;         // 5N
    std::vector<int> actions;       // N action indices (zero-accel for inactive)
    double reward = 0.0;
    std::vector<double> next_obs;
    std::vector<double> next_gs;
    bool terminal = false;
};

// FIFO ring with uniform seeded sampling.
class ReplayBuffer {
public:
    explicit ReplayBuffer(size_t capacity, uint64_t seed)
        : capacity_(capacity), rng_(seed) {
        if (capacity == 0) throw std::invalid_argument("ReplayBuffer: zero capacity");
    }

    void push(Transition t);
    size_t size() const { return store_.size(); }
    size_t capacity() const { return capacity_; }
    bool ready(size_t batch_size) const { return size() >= batch_size; }

    // uniform with replacement; throws when size() < batch_size
    std::vector<const Transition*> sample(size_t batch_size);

    const Transition& at(size_t logical) const;  // 0 = oldest retained

private:
    size_t capacity_;
    std::vector<Transition> store_;
    size_t head_ = 0;  // insertion point once full
    Rng rng_;
};

}  // namespace mergerl
