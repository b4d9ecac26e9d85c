#include "ecglink/numerics/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "ecglink/error.hpp"

namespace ecglink::numerics {

double relative_error(double analytic, double numeric, double floor) noexcept {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
    return std::abs(analytic - numeric) / denom;
}

GradCheckResult grad_check(const std::function<Tensor(std::span<const Tensor>)>& f,
                           std::span<Tensor> inputs, double h) {
    std::vector<Tensor> tracked;
    tracked.reserve(inputs.size());
    for (Tensor& in : inputs) {
        if (!in.is_leaf()) {
            throw Error("grad_check: inputs must be leaf tensors");
        }
        // Gradient-tracking views share the input storage, so perturbing the
        // inputs below is seen by f.
        tracked.push_back(in.requires_grad() ? in : in.view());
        tracked.back().zero_grad();
    }
    {
        GradTape tape;
        const Tensor loss = f(tracked);
        tape.backward(loss);
    }
    std::vector<std::vector<double>> analytic;
    for (const Tensor& t : tracked) {
        auto g = t.grad();
        if (g.empty()) {
            analytic.emplace_back(t.size(), 0.0);
        } else {
            analytic.emplace_back(g.begin(), g.end());
        }
    }

    GradCheckResult result;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        auto values = inputs[k].mutable_values();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double saved = values[i];
            values[i] = saved + h;
            const double up = f(tracked).item();
            values[i] = saved - h;
            const double down = f(tracked).item();
            values[i] = saved;
            const double numeric = (up - down) / (2.0 * h);
            const double err = relative_error(analytic[k][i], numeric);
            ++result.checked;
            if (err > result.max_rel_error || result.checked == 1) {
                result.max_rel_error = err;
                result.input = k;
                result.element = i;
                result.analytic = analytic[k][i];
                result.numeric = numeric;
            }
        }
    }
    return result;
}

}  // namespace ecglink::numerics
