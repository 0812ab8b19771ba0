#pragma once

#include <string>

#include "mergerl/qmix.hpp"

namespace mergerl {

struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Versioned flat binary file: a header with the network geometry (w, d_model,
// head count, action-set size, agent count, hidden widths, ablation flag)
// followed by name → shape → raw float64 payload for every parameter.
// Loading rebuilds nets from the header and validates every shape.
void save_checkpoint(const std::string& path, Nets& nets);
Nets load_checkpoint(const std::string& path);

}  // namespace mergerl
