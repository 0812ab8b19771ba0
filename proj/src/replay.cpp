#include "mergerl/replay.hpp"

#include <stdexcept>

namespace mergerl {

void ReplayBuffer::push(Transition t) {
    if (store_.size() < capacity_) {
        store_.push_back(std::move(t));
    } else {
        store_[head_] = std::move(t);
        head_ = (head_ + 1) % capacity_;
    }
}

const Transition& ReplayBuffer::at(size_t logical) const {
    if (logical >= store_.size()) throw std::out_of_range("ReplayBuffer::at");
    if (store_.size() < capacity_) return store_[logical];
    return store_[(head_ + logical) % capacity_];
}

std::vector<const Transition*> ReplayBuffer::sample(size_t batch_size) {
    if (store_.size() < batch_size)
        throw std::logic_error("ReplayBuffer::sample: fewer transitions than batch size");
    std::vector<const Transition*> out;
    out.reserve(batch_size);
    for (size_t i = 0; i < batch_size; ++i)
        out.push_back(&store_[rng_.uniform_int(static_cast<int>(store_.size()))]);
    return out;
}

}  // namespace mergerl
