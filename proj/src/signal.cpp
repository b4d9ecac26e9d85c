#include "ecglink/signal.hpp"

#include <algorithm>
#include <cmath>

#include "ecglink/error.hpp"

namespace ecglink {

int Label::index() const {
    if (is_unknown()) {
        throw LabelError("Unknown label has no class index");
    }
    return value_;
}

std::string Label::to_string() const { return is_unknown() ? "unknown" : std::to_string(value_); }

}  // namespace ecglink

namespace ecglink::signal {

void EcgRecord::validate() const {
    if (samples.empty()) {
        throw InputError("record '" + subject_id + "' has no samples");
    }
    if (!(sampling_rate_hz > 0.0) || !std::isfinite(sampling_rate_hz)) {
        throw InputError("record '" + subject_id + "' has non-positive sampling rate");
    }
}

std::string Window::id() const { return subject_id + "#" + std::to_string(index); }

EcgRecord resample(const EcgRecord& record, double target_hz) {
    if (!(target_hz > 0.0) || !std::isfinite(target_hz)) {
        throw ParameterError("resample: target rate must be positive");
    }
    record.validate();
    EcgRecord out{record.subject_id, record.dataset_id, target_hz, {}};
    const double src_hz = record.sampling_rate_hz;
    if (src_hz == target_hz) {
        out.samples = record.samples;
        return out;
    }
    const std::size_t t = record.samples.size();
    // Position of output sample k on the source index grid is k * src / target.
    const double span = static_cast<double>(t - 1) * target_hz / src_hz;
    const auto count = static_cast<std::size_t>(std::floor(span + 1e-9)) + 1;
    out.samples.resize(count);
    for (std::size_t k = 0; k < count; ++k) {
        const double pos = static_cast<double>(k) * src_hz / target_hz;
        auto i = static_cast<std::size_t>(std::floor(pos));
        if (i >= t - 1) {
            out.samples[k] = record.samples[t - 1];
            continue;
        }
        const double frac = pos - static_cast<double>(i);
        const double a = record.samples[i];
        const double b = record.samples[i + 1];
        out.samples[k] = frac == 0.0 ? a : a + frac * (b - a);
    }
    return out;
}

Normalized minmax_normalize(std::span<const double> values) {
    if (values.empty()) {
        throw InputError("minmax_normalize: empty input");
    }
    const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
    const double lo = *lo_it;
    const double hi = *hi_it;
    Normalized out;
    out.values.resize(values.size());
    if (!(hi > lo)) {
        out.flat = true;
        std::fill(out.values.begin(), out.values.end(), 0.0);
        return out;
    }
    const double range = hi - lo;
    for (std::size_t i = 0; i < values.size(); ++i) {
        out.values[i] = (values[i] - lo) / range;
    }
    return out;
}

std::vector<Window> segment(const EcgRecord& record, std::size_t window_len) {
    if (window_len < 2) {
        throw ParameterError("segment: window length must be at least 2");
    }
    std::vector<Window> windows;
    const std::size_t count = record.samples.size() / window_len;
    windows.reserve(count);
    for (std::size_t w = 0; w < count; ++w) {
        const std::span<const double> slice(record.samples.data() + w * window_len, window_len);
        Normalized n = minmax_normalize(slice);
        Window win;
        win.values = std::move(n.values);
        win.flat = n.flat;
        win.subject_id = record.subject_id;
        win.offset = w * window_len;
        win.index = w;
        windows.push_back(std::move(win));
    }
    return windows;
}

void AugmentSpec::validate(std::size_t window_len) const {
    if (!(noise_sigma >= 0.0)) {
        throw ConfigError("augment: noise_sigma must be non-negative");
    }
    if (!(scale_lo > 0.0) || !(scale_hi >= scale_lo)) {
        throw ConfigError("augment: scale range must satisfy 0 < lo <= hi");
    }
    if (!(flip_prob >= 0.0 && flip_prob <= 1.0)) {
        throw ConfigError("augment: flip_prob must lie in [0, 1]");
    }
    if (max_shift >= window_len) {
        throw ConfigError("augment: max_shift must be below the window length");
    }
}

bool AugmentSpec::is_identity() const {
    return noise_sigma == 0.0 && scale_lo == 1.0 && scale_hi == 1.0 && flip_prob == 0.0 && max_shift == 0;
}

std::vector<double> flip_polarity(std::span<const double> values) {
    std::vector<double> out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        out[i] = 1.0 - values[i];
    }
    return out;
}

std::vector<double> circular_shift(std::span<const double> values, std::int64_t k) {
    const auto n = static_cast<std::int64_t>(values.size());
    std::vector<double> out(values.size());
    if (n == 0) {
        return out;
    }
    const std::int64_t s = ((k % n) + n) % n;
    for (std::int64_t i = 0; i < n; ++i) {
        out[static_cast<std::size_t>((i + s) % n)] = values[static_cast<std::size_t>(i)];
    }
    return out;
}

Window augment(const Window& window, const AugmentSpec& spec, Rng& rng) {
    spec.validate(window.values.size());
    Window out = window;
    if (spec.is_identity()) {
        return out;
    }
    auto& v = out.values;
    if (spec.noise_sigma > 0.0) {
        for (double& x : v) {
            x += rng.normal(0.0, spec.noise_sigma);
        }
    }
    const double gain = spec.scale_lo == spec.scale_hi ? spec.scale_lo : rng.uniform(spec.scale_lo, spec.scale_hi);
    if (gain != 1.0) {
        for (double& x : v) {
            x *= gain;
        }
    }
    if (spec.flip_prob > 0.0 && rng.bernoulli(spec.flip_prob)) {
        v = flip_polarity(v);
    }
    if (spec.max_shift > 0) {
        const auto m = static_cast<std::int64_t>(spec.max_shift);
        v = circular_shift(v, rng.between(-m, m));
    }
    for (double& x : v) {
        x = std::clamp(x, 0.0, 1.0);
    }
    return out;
}

}  // namespace ecglink::signal
