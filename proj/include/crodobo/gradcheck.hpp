#pragma once

#include <cstdint>

#include "crodobo/net.hpp"

namespace crodobo {

enum class GradCheckLoss { source, exchange, entropy, diversity };

const char* to_string(GradCheckLoss loss);

struct GradCheckOptions {
    real fd_step = real(1e-5);
    std::size_t batch_size = 6;
    // Detector self-test: flips the sign of the analytic batch-norm gradients
    // so a healthy run must report a large error.
    bool corrupt_bn_backward = false;
};

// Builds a network and random batch from `seed`, then compares the analytic
// gradient of the named loss against central finite differences over every
// trainable parameter. Returns the max per-coordinate relative error
// |a - n| / max(|a|, |n|, 1e-6).
real grad_check(const NetworkSpec& spec, std::uint64_t seed, GradCheckLoss loss,
                const GradCheckOptions& options = {});

}  // namespace crodobo
