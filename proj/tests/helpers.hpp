// Shared test utilities: random data builders and small statistics oracles.
#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "drocket/dataset.hpp"

namespace drocket::testutil {

inline Dataset random_dataset(std::int64_t n, std::int64_t channels, std::int64_t timesteps,
                              std::uint64_t seed, double scale = 1.0) {
    Dataset d;
    d.n_instances = n;
    d.n_channels = channels;
    d.n_timesteps = timesteps;
    d.values.resize(static_cast<std::size_t>(n * channels * timesteps));
    d.labels.resize(static_cast<std::size_t>(n));
    Rng rng(seed);
    for (auto& v : d.values) v = static_cast<float>(scale * rng.normal());
    for (std::int64_t i = 0; i < n; ++i) d.labels[static_cast<std::size_t>(i)] = i % 2;
    return d;
}

inline std::string read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& tag) {
        path = std::filesystem::temp_directory_path() / ("drocket_test_" + tag);
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
};

/// Two-sample Kolmogorov-Smirnov statistic.
inline double ks_statistic(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    double stat = 0.0;
    std::size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        if (a[i] <= b[j])
            ++i;
        else
            ++j;
        const double fa = static_cast<double>(i) / static_cast<double>(a.size());
        const double fb = static_cast<double>(j) / static_cast<double>(b.size());
        stat = std::max(stat, std::abs(fa - fb));
    }
    return stat;
}

/// Least-squares amplitude of A*sin(2*pi*freq*t/T) against one channel.
inline double fitted_amplitude(const Dataset& d, std::int64_t instance, std::int64_t channel,
                               double freq) {
    double num = 0.0, den = 0.0;
    for (std::int64_t t = 0; t < d.n_timesteps; ++t) {
        const double s =
            std::sin(2.0 * M_PI * freq * static_cast<double>(t) / static_cast<double>(d.n_timesteps));
        num += static_cast<double>(d.at(instance, channel, t)) * s;
        den += s * s;
    }
    return num / den;
}

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    const auto n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace drocket::testutil
