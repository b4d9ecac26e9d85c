#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ecglink/numerics/tensor.hpp"

namespace ecglink::numerics {

struct OptimizerState {
    std::uint64_t step_count = 0;
    std::vector<std::vector<double>> first_moment;
    std::vector<std::vector<double>> second_moment;
    double lr_max = 1e-4;
    double lr_min = 0.0;
    double weight_decay = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    // Zeroed moments congruent with `params`. Validates the constants.
    static OptimizerState for_params(std::span<const Tensor> params, double lr_max, double lr_min,
                                     double weight_decay);
};

// Decoupled-weight-decay Adam:
//   theta <- theta - lr_t * (m_hat / (sqrt(v_hat) + eps) + weight_decay * theta)
// Every gradient is checked before anything is written; a non-finite value
// throws NumericalError and leaves params and state untouched.
void adamw_step(std::span<Tensor> params, std::span<const std::vector<double>> grads,
                OptimizerState& state, double lr_t);

struct LrSchedule {
    std::uint64_t total_steps = 1;
    std::uint64_t warmup_steps = 0;

    // warmup = round(warmup_fraction * total), kept below total.
    static LrSchedule with_warmup_fraction(std::uint64_t total_steps, double warmup_fraction);
};

// Linear warmup to lr_max, then half-cosine decay to lr_min at total_steps.
// Throws ScheduleError for step > total_steps.
double cosine_lr(std::uint64_t step, const LrSchedule& schedule, double lr_max, double lr_min);

}  // namespace ecglink::numerics
