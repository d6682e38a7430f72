#include "drocket/transform.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace drocket {

namespace {

constexpr std::int64_t kKernelLength = 9;
constexpr std::int64_t kNumPatterns = 84;
constexpr std::int64_t kMaxChannelsPerKernel = 9;

std::array<std::array<std::int8_t, 9>, 84> make_patterns() {
    std::array<std::array<std::int8_t, 9>, 84> patterns{};
    std::size_t idx = 0;
    for (int a = 0; a < 9; ++a) {
        for (int b = a + 1; b < 9; ++b) {
            for (int c = b + 1; c < 9; ++c) {
                auto& w = patterns[idx++];
                w.fill(-1);
                w[static_cast<std::size_t>(a)] = 2;
                w[static_cast<std::size_t>(b)] = 2;
                w[static_cast<std::size_t>(c)] = 2;
            }
        }
    }
    return patterns;
}

std::int64_t output_length(const KernelInstance& k, std::int64_t T) {
    return k.padding == Padding::Same ? T : T - (kKernelLength - 1) * static_cast<std::int64_t>(k.dilation);
}

/// Sum of the instance's channel subset, f32 promoted to f64.
void sum_channels(const Dataset& d, std::int64_t i, const KernelInstance& k, std::vector<double>& out) {
    const std::int64_t T = d.n_timesteps;
    out.assign(static_cast<std::size_t>(T), 0.0);
    for (const auto c : k.channels) {
        const float* p = d.series(i, c);
        for (std::int64_t t = 0; t < T; ++t) out[static_cast<std::size_t>(t)] += p[t];
    }
}

/// Dilated 9-tap convolution of the pre-summed signal.
void convolve(const std::vector<double>& x, const KernelInstance& k, std::vector<double>& out) {
    const auto& w = kernel_patterns()[k.pattern];
    const auto T = static_cast<std::int64_t>(x.size());
    const auto dil = static_cast<std::int64_t>(k.dilation);

    if (k.padding == Padding::Valid) {
        const std::int64_t len = T - (kKernelLength - 1) * dil;
        out.resize(static_cast<std::size_t>(len));
        for (std::int64_t t = 0; t < len; ++t) {
            double acc = 0.0;
            for (std::int64_t j = 0; j < kKernelLength; ++j)
                acc += static_cast<double>(w[static_cast<std::size_t>(j)]) * x[static_cast<std::size_t>(t + j * dil)];
            out[static_cast<std::size_t>(t)] = acc;
        }
        return;
    }

    // Same padding: center tap at t, zero outside [0, T).
    out.resize(static_cast<std::size_t>(T));
    const std::int64_t lo = std::min<std::int64_t>(4 * dil, T);
    const std::int64_t hi = std::max<std::int64_t>(lo, T - 4 * dil);
    for (std::int64_t t = 0; t < lo; ++t) {
        double acc = 0.0;
        for (std::int64_t j = 0; j < kKernelLength; ++j) {
            const std::int64_t pos = t + (j - 4) * dil;
            if (pos >= 0 && pos < T)
                acc += static_cast<double>(w[static_cast<std::size_t>(j)]) * x[static_cast<std::size_t>(pos)];
        }
        out[static_cast<std::size_t>(t)] = acc;
    }
    for (std::int64_t t = lo; t < hi; ++t) {
        double acc = 0.0;
        for (std::int64_t j = 0; j < kKernelLength; ++j)
            acc += static_cast<double>(w[static_cast<std::size_t>(j)]) *
                   x[static_cast<std::size_t>(t + (j - 4) * dil)];
        out[static_cast<std::size_t>(t)] = acc;
    }
    for (std::int64_t t = hi; t < T; ++t) {
        double acc = 0.0;
        for (std::int64_t j = 0; j < kKernelLength; ++j) {
            const std::int64_t pos = t + (j - 4) * dil;
            if (pos >= 0 && pos < T)
                acc += static_cast<double>(w[static_cast<std::size_t>(j)]) * x[static_cast<std::size_t>(pos)];
        }
        out[static_cast<std::size_t>(t)] = acc;
    }
}

void check_compatible(const KernelBank& bank, const Dataset& dataset) {
    if (dataset.n_channels != bank.n_channels)
        throw DataError("channel count mismatch: bank expects " + std::to_string(bank.n_channels) +
                        ", dataset has " + std::to_string(dataset.n_channels));
    for (const auto& k : bank.kernels) {
        const std::int64_t rf = (kKernelLength - 1) * static_cast<std::int64_t>(k.dilation) + 1;
        if (rf > dataset.n_timesteps)
            throw DataError("kernel receptive field " + std::to_string(rf) +
                            " exceeds series length " + std::to_string(dataset.n_timesteps));
    }
}

/// Bias position of a feature id within the bank's flattened feature order.
std::vector<std::size_t> bias_offsets(const KernelBank& bank) {
    std::vector<std::size_t> offsets(bank.kernels.size());
    std::size_t next = 0;
    for (std::size_t k = 0; k < bank.kernels.size(); ++k) {
        offsets[k] = next;
        next += bank.kernels[k].feature_ids.size();
    }
    return offsets;
}

}  // namespace

const std::array<std::array<std::int8_t, 9>, 84>& kernel_patterns() {
    static const auto patterns = make_patterns();
    return patterns;
}

double feature_quantile(std::uint32_t feature_id) { return van_der_corput(feature_id + 1ULL); }

std::vector<std::uint32_t> KernelBank::all_feature_ids() const {
    std::vector<std::uint32_t> ids;
    for (const auto& k : kernels) ids.insert(ids.end(), k.feature_ids.begin(), k.feature_ids.end());
    return ids;
}

void KernelBank::validate() const {
    if (n_channels < 1) throw InvariantError("bank has no channels");
    std::size_t total = 0;
    std::int64_t prev_id = -1;
    for (const auto& k : kernels) {
        if (k.pattern >= kNumPatterns) throw InvariantError("pattern index out of range");
        if (k.dilation < 1) throw InvariantError("dilation must be >= 1");
        const std::int64_t rf = (kKernelLength - 1) * static_cast<std::int64_t>(k.dilation) + 1;
        if (rf > n_timesteps) throw InvariantError("kernel receptive field exceeds n_timesteps");
        if (k.channels.empty() ||
            k.channels.size() > static_cast<std::size_t>(std::min<std::int64_t>(kMaxChannelsPerKernel, n_channels)))
            throw InvariantError("channel subset size out of range");
        for (std::size_t i = 0; i < k.channels.size(); ++i) {
            if (k.channels[i] >= n_channels) throw InvariantError("channel index out of range");
            if (i > 0 && k.channels[i] <= k.channels[i - 1])
                throw InvariantError("channel subset must be sorted and distinct");
        }
        if (k.feature_ids.empty()) throw InvariantError("kernel without features");
        for (const auto id : k.feature_ids) {
            if (static_cast<std::int64_t>(id) <= prev_id)
                throw InvariantError("feature ids must be globally ascending");
            prev_id = id;
        }
        total += k.feature_ids.size();
    }
    if (fitted != (biases.size() == total && total > 0))
        throw InvariantError("fitted flag inconsistent with biases");
}

KernelBank build_kernel_bank(std::int64_t num_features, std::int64_t n_channels,
                             std::int64_t n_timesteps, std::uint64_t seed,
                             double channel_size_base) {
    if (num_features < kNumPatterns)
        throw std::invalid_argument("num_features must be >= 84");
    if (n_channels < 1 || n_channels > 65535)
        throw std::invalid_argument("n_channels out of range");
    if (n_timesteps < kKernelLength)
        throw std::invalid_argument("receptive field cannot fit at dilation 1: n_timesteps < 9");
    if (!(channel_size_base > 1.0))
        throw std::invalid_argument("channel_size_base must be > 1");

    KernelBank bank;
    bank.num_features = num_features;
    bank.n_channels = n_channels;
    bank.n_timesteps = n_timesteps;
    bank.seed = seed;
    bank.channel_size_base = channel_size_base;

    // Cumulative size distribution for channel subsets: P(k) ~ base^-k.
    const auto max_k = static_cast<std::size_t>(std::min<std::int64_t>(kMaxChannelsPerKernel, n_channels));
    std::vector<double> cumulative(max_k);
    double mass = 0.0;
    for (std::size_t k = 0; k < max_k; ++k) {
        mass += std::pow(channel_size_base, -static_cast<double>(k + 1));
        cumulative[k] = mass;
    }
    for (auto& c : cumulative) c /= mass;

    const double max_exponent = std::log2(static_cast<double>(n_timesteps - 1) / 8.0);
    Rng rng(seed);
    std::uint32_t next_feature = 0;
    std::size_t kernel_counter = 0;

    for (std::int64_t p = 0; p < kNumPatterns; ++p) {
        const std::int64_t count = num_features / kNumPatterns + (p < num_features % kNumPatterns ? 1 : 0);
        std::int64_t start = 0;
        std::uint32_t current_dilation = 0;
        for (std::int64_t j = 0; j <= count; ++j) {
            std::uint32_t dil = 0;
            if (j < count) {
                const double x = count == 1 ? 0.0
                                            : static_cast<double>(j) / static_cast<double>(count - 1);
                dil = static_cast<std::uint32_t>(
                    std::max(1.0, std::floor(std::exp2(x * max_exponent))));
            }
            if (j > 0 && (j == count || dil != current_dilation)) {
                KernelInstance k;
                k.pattern = static_cast<std::uint16_t>(p);
                k.dilation = current_dilation;
                k.padding = kernel_counter % 2 == 0 ? Padding::Same : Padding::Valid;
                ++kernel_counter;

                const double u = rng.uniform();
                std::size_t size = 1;
                while (size < max_k && u > cumulative[size - 1]) ++size;
                auto members = rng.sample_indices(static_cast<std::uint64_t>(n_channels), size);
                k.channels.reserve(size);
                for (const auto m : members) k.channels.push_back(static_cast<std::uint16_t>(m));

                k.feature_ids.resize(static_cast<std::size_t>(j - start));
                for (std::int64_t f = start; f < j; ++f)
                    k.feature_ids[static_cast<std::size_t>(f - start)] =
                        next_feature + static_cast<std::uint32_t>(f - start);
                next_feature += static_cast<std::uint32_t>(j - start);
                bank.kernels.push_back(std::move(k));
                start = j;
            }
            current_dilation = dil;
        }
    }
    bank.validate();
    return bank;
}

KernelBank fit_biases(const KernelBank& bank, const Dataset& train, const BiasFitOptions& options) {
    if (bank.fitted) throw std::invalid_argument("bank is already fitted");
    train.validate();
    if (train.n_instances == 0) throw DataError("empty training set");
    check_compatible(bank, train);

    std::vector<std::int64_t> instances;
    if (options.max_instances > 0 && options.max_instances < train.n_instances) {
        Rng rng(mix_seed(bank.seed, 0xb1a5));
        for (const auto i : rng.sample_indices(static_cast<std::uint64_t>(train.n_instances),
                                               static_cast<std::uint64_t>(options.max_instances)))
            instances.push_back(static_cast<std::int64_t>(i));
    } else {
        instances.resize(static_cast<std::size_t>(train.n_instances));
        for (std::int64_t i = 0; i < train.n_instances; ++i) instances[static_cast<std::size_t>(i)] = i;
    }

    KernelBank fitted = bank;
    const auto offsets = bias_offsets(bank);
    fitted.biases.assign(static_cast<std::size_t>(bank.all_feature_ids().size()), 0.0);

    parallel_for(bank.kernels.size(), options.jobs, [&](std::size_t ki) {
        const auto& k = bank.kernels[ki];
        const std::int64_t len = output_length(k, train.n_timesteps);
        std::vector<double> summed, conv;
        std::vector<double> pooled;
        pooled.reserve(instances.size() * static_cast<std::size_t>(len));
        for (const auto i : instances) {
            sum_channels(train, i, k, summed);
            convolve(summed, k, conv);
            pooled.insert(pooled.end(), conv.begin(), conv.end());
        }
        std::vector<double> scratch;
        for (std::size_t f = 0; f < k.feature_ids.size(); ++f) {
            scratch = pooled;
            fitted.biases[offsets[ki] + f] = quantile_type7(scratch, feature_quantile(k.feature_ids[f]));
        }
    });
    fitted.fitted = true;
    fitted.validate();
    return fitted;
}

FeatureMatrix transform(const KernelBank& bank, const Dataset& dataset, int jobs) {
    if (!bank.fitted) throw std::invalid_argument("bank is not fitted");
    dataset.validate();
    check_compatible(bank, dataset);

    FeatureMatrix out;
    out.feature_ids = bank.all_feature_ids();
    out.values.resize(dataset.n_instances, static_cast<std::int64_t>(out.feature_ids.size()));
    const auto offsets = bias_offsets(bank);

    parallel_for(static_cast<std::size_t>(dataset.n_instances), jobs, [&](std::size_t i) {
        std::vector<double> summed, conv;
        for (std::size_t ki = 0; ki < bank.kernels.size(); ++ki) {
            const auto& k = bank.kernels[ki];
            sum_channels(dataset, static_cast<std::int64_t>(i), k, summed);
            convolve(summed, k, conv);
            const auto len = static_cast<double>(conv.size());
            for (std::size_t f = 0; f < k.feature_ids.size(); ++f) {
                const double bias = bank.biases[offsets[ki] + f];
                std::int64_t positive = 0;
                for (const double v : conv)
                    if (v > bias) ++positive;
                out.values(static_cast<std::int64_t>(i), static_cast<std::int64_t>(offsets[ki] + f)) =
                    static_cast<double>(positive) / len;
            }
        }
    });
    return out;
}

FeatureMatrix transform_oracle(const KernelBank& bank, const Dataset& dataset) {
    if (!bank.fitted) throw std::invalid_argument("bank is not fitted");
    dataset.validate();
    check_compatible(bank, dataset);

    FeatureMatrix out;
    out.feature_ids = bank.all_feature_ids();
    out.values.resize(dataset.n_instances, static_cast<std::int64_t>(out.feature_ids.size()));
    const std::int64_t T = dataset.n_timesteps;
    const auto offsets = bias_offsets(bank);

    for (std::int64_t i = 0; i < dataset.n_instances; ++i) {
        for (std::size_t ki = 0; ki < bank.kernels.size(); ++ki) {
            const auto& k = bank.kernels[ki];
            const auto& w = kernel_patterns()[k.pattern];
            const auto dil = static_cast<std::int64_t>(k.dilation);
            const std::int64_t len = output_length(k, T);
            for (std::size_t f = 0; f < k.feature_ids.size(); ++f) {
                const double bias = bank.biases[offsets[ki] + f];
                std::int64_t positive = 0;
                for (std::int64_t t = 0; t < len; ++t) {
                    double acc = 0.0;
                    for (const auto c : k.channels) {
                        for (std::int64_t j = 0; j < kKernelLength; ++j) {
                            const std::int64_t pos =
                                k.padding == Padding::Same ? t + (j - 4) * dil : t + j * dil;
                            if (pos >= 0 && pos < T)
                                acc += static_cast<double>(w[static_cast<std::size_t>(j)]) *
                                       static_cast<double>(dataset.at(i, c, pos));
                        }
                    }
                    if (acc - bias > 0.0) ++positive;
                }
                out.values(i, static_cast<std::int64_t>(offsets[ki] + f)) =
                    static_cast<double>(positive) / static_cast<double>(len);
            }
        }
    }
    return out;
}

KernelBank restrict_bank(const KernelBank& bank, const std::vector<std::uint32_t>& retained_ids) {
    if (!bank.fitted) throw std::invalid_argument("cannot restrict an unfitted bank");
    std::vector<std::uint32_t> keep(retained_ids);
    std::sort(keep.begin(), keep.end());
    keep.erase(std::unique(keep.begin(), keep.end()), keep.end());

    KernelBank out;
    out.num_features = bank.num_features;
    out.n_channels = bank.n_channels;
    out.n_timesteps = bank.n_timesteps;
    out.seed = bank.seed;
    out.channel_size_base = bank.channel_size_base;
    out.fitted = true;

    const auto offsets = bias_offsets(bank);
    std::size_t matched = 0;
    for (std::size_t ki = 0; ki < bank.kernels.size(); ++ki) {
        const auto& k = bank.kernels[ki];
        KernelInstance nk;
        nk.pattern = k.pattern;
        nk.dilation = k.dilation;
        nk.padding = k.padding;
        nk.channels = k.channels;
        std::vector<double> nb;
        for (std::size_t f = 0; f < k.feature_ids.size(); ++f) {
            if (std::binary_search(keep.begin(), keep.end(), k.feature_ids[f])) {
                nk.feature_ids.push_back(k.feature_ids[f]);
                nb.push_back(bank.biases[offsets[ki] + f]);
                ++matched;
            }
        }
        if (!nk.feature_ids.empty()) {
            out.kernels.push_back(std::move(nk));
            out.biases.insert(out.biases.end(), nb.begin(), nb.end());
        }
    }
    if (matched != keep.size())
        throw std::invalid_argument("retained feature ids not all present in bank");
    out.validate();
    return out;
}

FeatureMatrix select_columns(const FeatureMatrix& m, const std::vector<std::uint32_t>& ids) {
    FeatureMatrix out;
    out.feature_ids = ids;
    out.values.resize(m.values.rows(), static_cast<std::int64_t>(ids.size()));
    for (std::size_t j = 0; j < ids.size(); ++j) {
        const auto it = std::find(m.feature_ids.begin(), m.feature_ids.end(), ids[j]);
        if (it == m.feature_ids.end())
            throw std::invalid_argument("feature id " + std::to_string(ids[j]) + " not in matrix");
        out.values.col(static_cast<std::int64_t>(j)) =
            m.values.col(static_cast<std::int64_t>(it - m.feature_ids.begin()));
    }
    return out;
}

nlohmann::json bank_to_json(const KernelBank& bank) {
    nlohmann::json kernels = nlohmann::json::array();
    for (const auto& k : bank.kernels) {
        kernels.push_back({k.pattern, k.dilation, k.padding == Padding::Same ? 0 : 1, k.channels,
                           k.feature_ids});
    }
    return {
        {"num_features", bank.num_features},
        {"n_channels", bank.n_channels},
        {"n_timesteps", bank.n_timesteps},
        {"seed", bank.seed},
        {"channel_size_base", bank.channel_size_base},
        {"fitted", bank.fitted},
        {"kernel_fields", "pattern, dilation, padding(0=same,1=valid), channels, feature_ids"},
        {"kernels", kernels},
    };
}

KernelBank bank_from_json(const nlohmann::json& j) {
    KernelBank bank;
    try {
        bank.num_features = j.at("num_features").get<std::int64_t>();
        bank.n_channels = j.at("n_channels").get<std::int64_t>();
        bank.n_timesteps = j.at("n_timesteps").get<std::int64_t>();
        bank.seed = j.at("seed").get<std::uint64_t>();
        bank.channel_size_base = j.at("channel_size_base").get<double>();
        bank.fitted = j.at("fitted").get<bool>();
        for (const auto& jk : j.at("kernels")) {
            KernelInstance k;
            k.pattern = jk.at(0).get<std::uint16_t>();
            k.dilation = jk.at(1).get<std::uint32_t>();
            k.padding = jk.at(2).get<int>() == 0 ? Padding::Same : Padding::Valid;
            k.channels = jk.at(3).get<std::vector<std::uint16_t>>();
            k.feature_ids = jk.at(4).get<std::vector<std::uint32_t>>();
            bank.kernels.push_back(std::move(k));
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed kernel bank json: ") + e.what());
    }
    return bank;
}

}  // namespace drocket
