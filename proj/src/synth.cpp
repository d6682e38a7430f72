#include "drocket/synth.hpp"

#include <cmath>
#include <stdexcept>

namespace drocket {

void SynthConfig::validate() const {
    if (!(theta_deg >= 0.0 && theta_deg <= 90.0))
        throw std::invalid_argument("theta must be in [0, 90] degrees");
    if (n_per_class < 1) throw std::invalid_argument("n_per_class must be >= 1");
    if (n_timesteps < 9) throw std::invalid_argument("n_timesteps must be >= 9");
    if (!(sigma_amp >= 0.0)) throw std::invalid_argument("sigma_amp must be >= 0");
    if (!(separation > 0.0)) throw std::invalid_argument("separation must be > 0");
    if (!(noise_sigma >= 0.0)) throw std::invalid_argument("noise_sigma must be >= 0");
    for (const double f : freqs)
        if (!(f > 0.0)) throw std::invalid_argument("frequencies must be > 0");
    if (freqs[0] == freqs[1] || freqs[0] == freqs[2] || freqs[1] == freqs[2])
        throw std::invalid_argument("frequencies must be distinct");
}

nlohmann::json SynthConfig::to_json() const {
    return {
        {"theta_deg", theta_deg},   {"n_per_class", n_per_class}, {"n_timesteps", n_timesteps},
        {"sigma_amp", sigma_amp},   {"separation", separation},   {"base_amp", base_amp},
        {"freqs", freqs},           {"noise_sigma", noise_sigma}, {"seed", seed},
    };
}

Dataset generate(const SynthConfig& config) {
    config.validate();
    const std::int64_t n = 2 * config.n_per_class;
    const std::int64_t T = config.n_timesteps;
    const double theta = config.theta_deg * M_PI / 180.0;

    // Balanced labels in a seeded shuffled order.
    std::vector<std::int32_t> labels(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i)
        labels[static_cast<std::size_t>(i)] = i < config.n_per_class ? 0 : 1;
    Rng order_rng(mix_seed(config.seed, 0));
    order_rng.shuffle(labels);

    Dataset d;
    d.n_instances = n;
    d.n_channels = 4;
    d.n_timesteps = T;
    d.labels = labels;
    d.channel_names = std::vector<std::string>{"ch1", "ch2", "ch3", "ch4"};
    d.values.resize(static_cast<std::size_t>(n * 4 * T));

    // Precomputed unit waveforms.
    std::array<std::vector<double>, 3> wave;
    for (int k = 0; k < 3; ++k) {
        wave[static_cast<std::size_t>(k)].resize(static_cast<std::size_t>(T));
        for (std::int64_t t = 0; t < T; ++t)
            wave[static_cast<std::size_t>(k)][static_cast<std::size_t>(t)] =
                std::sin(2.0 * M_PI * config.freqs[static_cast<std::size_t>(k)] *
                         static_cast<double>(t) / static_cast<double>(T));
    }

    const double shift_a1 = config.separation * std::sin(theta);
    const double shift_a2 = config.separation * std::cos(theta);

    for (std::int64_t i = 0; i < n; ++i) {
        // One stream per instance: generation order does not matter.
        Rng rng(mix_seed(config.seed, static_cast<std::uint64_t>(i) + 1));
        const bool class2 = labels[static_cast<std::size_t>(i)] == 1;
        const double a1 = config.base_amp + (class2 ? shift_a1 : 0.0) + config.sigma_amp * rng.normal();
        const double a2 = config.base_amp + (class2 ? shift_a2 : 0.0) + config.sigma_amp * rng.normal();
        const double a3 = config.base_amp + config.sigma_amp * rng.normal();
        const std::array<double, 4> amp = {a1, a2, a3, 0.0};
        for (std::int64_t c = 0; c < 4; ++c) {
            const auto base = static_cast<std::size_t>((i * 4 + c) * T);
            for (std::int64_t t = 0; t < T; ++t) {
                double v = config.noise_sigma == 0.0 ? 0.0 : config.noise_sigma * rng.normal();
                if (c < 3)
                    v += amp[static_cast<std::size_t>(c)] *
                         wave[static_cast<std::size_t>(c)][static_cast<std::size_t>(t)];
                d.values[base + static_cast<std::size_t>(t)] = static_cast<float>(v);
            }
        }
    }
    d.validate();
    return d;
}

double bayes_accuracy(const SynthConfig& config) {
    config.validate();
    if (config.sigma_amp == 0.0) return 1.0;
    return normal_cdf(config.separation / (2.0 * config.sigma_amp));
}

}  // namespace drocket
