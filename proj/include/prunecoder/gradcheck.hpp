#pragma once

#include <cstdint>
#include <string>

#include "prunecoder/model.hpp"

namespace prunecoder {

struct ModelGradCheckOptions {
    std::size_t batch = 2;
    std::size_t seq = 4;
    double step = 1e-4;
    /// Gaussian noise added to the initial weights so the check runs away from the near-linear
    /// regime of a fresh initialization. Embedding tables get their own scale.
    double perturbation = 0.1;
    double embedding_perturbation = 1.0;
};

struct ModelGradCheckResult {
    double max_rel_error = 0.0;
    std::string worst_tensor;
    std::size_t worst_index = 0;
    std::size_t coordinates = 0;
    double loss = 0.0;
};

/// Central differences on every parameter of a float64 model versus backward(), on a random
/// batch whose last sequence has one padded position. Dropout is off.
ModelGradCheckResult model_grad_check(const ModelConfig& config, std::uint64_t seed,
                                      const ModelGradCheckOptions& options = {});

}  // namespace prunecoder
