// Controlled four-channel binary benchmark: an angle theta distributes the
// class-discriminative amplitude information between channels 1 and 2.
#pragma once

#include <array>
#include <cstdint>

#include <json.hpp>

#include "drocket/dataset.hpp"

namespace drocket {

struct SynthConfig {
    double theta_deg = 45.0;      // [0, 90]
    std::int64_t n_per_class = 250;
    std::int64_t n_timesteps = 512;
    double sigma_amp = 1.0;       // amplitude Gaussian std
    double separation = 2.0;      // distance between class means
    double base_amp = 5.0;        // class-1 mean amplitude
    std::array<double, 3> freqs = {3.0, 7.0, 5.0};  // cycles over the window, channels 1-3
    double noise_sigma = 1.0;     // additive white noise std
    std::uint64_t seed = 0;

    void validate() const;  // throws std::invalid_argument
    nlohmann::json to_json() const;
};

/// Class 1 (label 0) samples amplitudes (A1,A2) from an isotropic
/// Gaussian(mean (base,base), sigma_amp); class 2 (label 1) from the mean
/// shifted by separation*(sin theta, cos theta). Channels: A1*sin, A2*sin,
/// class-independent A3*sin, silence; white noise everywhere. Classes are
/// balanced and the instance order is a seeded shuffle. Per-instance streams
/// make the result independent of generation order.
Dataset generate(const SynthConfig& config);

/// Optimal accuracy of any classifier on (A1,A2): Phi(separation/(2*sigma_amp)).
/// Independent of theta.
double bayes_accuracy(const SynthConfig& config);

}  // namespace drocket
