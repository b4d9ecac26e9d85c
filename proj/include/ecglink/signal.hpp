#pragma once

// ECG preprocessing: resampling, min-max normalization, segmentation into
// fixed-length windows, and training-time augmentation.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ecglink/label.hpp"
#include "ecglink/rng.hpp"

namespace ecglink::signal {

inline constexpr double kTargetRateHz = 250.0;
inline constexpr std::size_t kWindowLength = 2000;

struct EcgRecord {
    std::string subject_id;
    std::string dataset_id;
    double sampling_rate_hz = 0.0;
    std::vector<double> samples;

    // Throws InputError unless samples are non-empty and the rate is positive.
    void validate() const;
};

struct Window {
    std::vector<double> values;
    Label label;
    std::string subject_id;
    std::size_t offset = 0;  // first sample in the resampled record
    std::size_t index = 0;   // position among the record's windows
    bool flat = false;       // normalization hit max == min

    // Stable identifier "<subject_id>#<index>".
    std::string id() const;
};

struct Normalized {
    std::vector<double> values;
    bool flat = false;
};

// Linear interpolation onto a grid of target_hz starting at the first sample.
// Output length is floor((T - 1) * target / source) + 1, so the covered
// duration differs from the input's by less than one output period.
EcgRecord resample(const EcgRecord& record, double target_hz);

// Affine map onto [0, 1]. A flat input maps to all zeros with `flat` set.
Normalized minmax_normalize(std::span<const double> values);

// floor(T / L) consecutive non-overlapping windows, each normalized on its own.
// The trailing remainder is dropped; T < L yields no windows.
std::vector<Window> segment(const EcgRecord& record, std::size_t window_len = kWindowLength);

struct AugmentSpec {
    double noise_sigma = 0.0;
    double scale_lo = 1.0;
    double scale_hi = 1.0;
    double flip_prob = 0.0;
    std::size_t max_shift = 0;
    std::uint64_t seed = 0;

    void validate(std::size_t window_len) const;
    bool is_identity() const;
};

// Applies, in order: additive Gaussian noise, a uniform random gain, a
// polarity flip (v -> 1 - v), and a uniform circular shift in
// [-max_shift, max_shift]; then clamps to [0, 1].
Window augment(const Window& window, const AugmentSpec& spec, Rng& rng);

std::vector<double> flip_polarity(std::span<const double> values);
// out[i] = in[(i - k) mod n]; positive k delays the signal.
std::vector<double> circular_shift(std::span<const double> values, std::int64_t k);

}  // namespace ecglink::signal
