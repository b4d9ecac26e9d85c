#include "ecglink/numerics/optim.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "ecglink/error.hpp"

namespace ecglink::numerics {

OptimizerState OptimizerState::for_params(std::span<const Tensor> params, double lr_max,
                                          double lr_min, double weight_decay) {
    if (!(lr_max >= 0.0) || !(lr_min >= 0.0) || lr_min > lr_max) {
        throw ConfigError("learning rates must satisfy 0 <= lr_min <= lr_max");
    }
    if (!(weight_decay >= 0.0)) {
        throw ConfigError("weight_decay must be non-negative");
    }
    OptimizerState state;
    state.lr_max = lr_max;
    state.lr_min = lr_min;
    state.weight_decay = weight_decay;
    for (const Tensor& p : params) {
        state.first_moment.emplace_back(p.size(), 0.0);
        state.second_moment.emplace_back(p.size(), 0.0);
    }
    return state;
}

void adamw_step(std::span<Tensor> params, std::span<const std::vector<double>> grads,
                OptimizerState& state, double lr_t) {
    if (params.size() != grads.size() || params.size() != state.first_moment.size() ||
        params.size() != state.second_moment.size()) {
        throw DimensionError("adamw_step: parameter, gradient and moment counts differ");
    }
    for (std::size_t k = 0; k < params.size(); ++k) {
        if (grads[k].size() != params[k].size() || state.first_moment[k].size() != params[k].size() ||
            state.second_moment[k].size() != params[k].size()) {
            throw DimensionError("adamw_step: tensor " + std::to_string(k) + " of shape " +
                                 to_string(params[k].shape()) + " has incongruent gradient or moments");
        }
        for (double g : grads[k]) {
            if (!std::isfinite(g)) {
                throw NumericalError("adamw_step: non-finite gradient in tensor " + std::to_string(k));
            }
        }
    }
    const auto t = static_cast<double>(state.step_count + 1);
    const double bc1 = 1.0 - std::pow(state.beta1, t);
    const double bc2 = 1.0 - std::pow(state.beta2, t);
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto theta = params[k].mutable_values();
        auto& m = state.first_moment[k];
        auto& v = state.second_moment[k];
        const auto& g = grads[k];
        for (std::size_t i = 0; i < theta.size(); ++i) {
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
            const double m_hat = m[i] / bc1;
            const double v_hat = v[i] / bc2;
            theta[i] -= lr_t * (m_hat / (std::sqrt(v_hat) + state.epsilon) +
                                state.weight_decay * theta[i]);
        }
    }
    ++state.step_count;
}

LrSchedule LrSchedule::with_warmup_fraction(std::uint64_t total_steps, double warmup_fraction) {
    if (total_steps == 0) {
        throw ScheduleError("schedule needs at least one step");
    }
    auto warmup = static_cast<std::uint64_t>(std::llround(warmup_fraction * static_cast<double>(total_steps)));
    if (warmup >= total_steps) {
        warmup = total_steps - 1;
    }
    return LrSchedule{total_steps, warmup};
}

double cosine_lr(std::uint64_t step, const LrSchedule& schedule, double lr_max, double lr_min) {
    if (schedule.total_steps == 0 || schedule.warmup_steps >= schedule.total_steps) {
        throw ScheduleError("invalid schedule: warmup " + std::to_string(schedule.warmup_steps) +
                            " total " + std::to_string(schedule.total_steps));
    }
    if (step > schedule.total_steps) {
        throw ScheduleError("step " + std::to_string(step) + " beyond schedule of " +
                            std::to_string(schedule.total_steps));
    }
    if (step < schedule.warmup_steps) {
        return lr_max * static_cast<double>(step + 1) / static_cast<double>(schedule.warmup_steps + 1);
    }
    const double progress = static_cast<double>(step - schedule.warmup_steps) /
                            static_cast<double>(schedule.total_steps - schedule.warmup_steps);
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace ecglink::numerics
