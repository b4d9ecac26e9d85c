#pragma once

#include <cstddef>
#include <functional>
#include <span>

#include "ecglink/numerics/tensor.hpp"

namespace ecglink::numerics {

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t input = 0;    // index of the worst input tensor
    std::size_t element = 0;  // flat index inside it
    double analytic = 0.0;
    double numeric = 0.0;
    std::size_t checked = 0;  // number of scalar entries compared
};

// Relative error |a - n| / max(|a|, |n|, floor). Gradients smaller than the
// floor are compared on an absolute scale.
double relative_error(double analytic, double numeric, double floor = 1e-3) noexcept;

// Compares the tape gradient of scalar f at `inputs` with central differences
// of step h. Inputs must be leaves; they are perturbed in place and restored.
// f must rebuild its graph from the inputs on every call.
GradCheckResult grad_check(const std::function<Tensor(std::span<const Tensor>)>& f,
                           std::span<Tensor> inputs, double h = 1e-4);

}  // namespace ecglink::numerics
