// MiniRocket-style random convolutional feature extraction: 84 fixed
// length-9 kernel patterns, log-uniform dilations, random channel subsets,
// quantile biases and PPV pooling.
#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "drocket/dataset.hpp"

namespace drocket {

enum class Padding : std::uint8_t { Same, Valid };

/// One convolution: a pattern at a dilation over a channel subset. Produces
/// one feature per bias (features of a kernel share the convolution output).
struct KernelInstance {
    std::uint16_t pattern = 0;  // index into kernel_patterns()
    std::uint32_t dilation = 1;
    Padding padding = Padding::Same;
    std::vector<std::uint16_t> channels;      // sorted, distinct, < n_channels
    std::vector<std::uint32_t> feature_ids;   // ascending global ids
};

struct KernelBank {
    std::int64_t num_features = 0;  // total across kernels
    std::int64_t n_channels = 0;
    std::int64_t n_timesteps = 0;   // length the dilation schedule was built for
    std::uint64_t seed = 0;
    double channel_size_base = 2.0;
    std::vector<KernelInstance> kernels;
    /// One bias per feature, ordered by ascending feature id; empty until fitted.
    std::vector<double> biases;
    bool fitted = false;

    std::size_t convolutions_per_instance() const { return kernels.size(); }
    std::vector<std::uint32_t> all_feature_ids() const;
    void validate() const;
};

/// The 84 length-9 weight patterns: six -1 weights and three +2 weights, one
/// pattern per placement of the +2 triple. Weights sum to zero.
const std::array<std::array<std::int8_t, 9>, 84>& kernel_patterns();

/// Quantile used for the bias of a feature id (base-2 van der Corput).
double feature_quantile(std::uint32_t feature_id);

/// PPV features of a dataset: one column per feature, entries in [0,1].
struct FeatureMatrix {
    Eigen::MatrixXd values;  // n_instances x n_features
    std::vector<std::uint32_t> feature_ids;

    std::int64_t n_instances() const { return values.rows(); }
    std::int64_t n_features() const { return values.cols(); }
};

/// Column subset by feature id (ids must all be present).
FeatureMatrix select_columns(const FeatureMatrix& m, const std::vector<std::uint32_t>& ids);

/// Deterministic bank for a given (num_features, shape, seed). Features are
/// spread across the 84 patterns as evenly as possible; each pattern's
/// features take dilations floor(2^(x*log2(Lmax))) on a uniform x-grid with
/// Lmax=(T-1)/8; padding alternates same/valid per kernel; channel-subset
/// sizes follow P(k) ~ base^-k over 1..min(9,C).
KernelBank build_kernel_bank(std::int64_t num_features, std::int64_t n_channels,
                             std::int64_t n_timesteps, std::uint64_t seed,
                             double channel_size_base = 2.0);

struct BiasFitOptions {
    std::int64_t max_instances = 0;  // 0 = full training set (deterministic default)
    int jobs = 1;
};

/// Bias of each feature = its quantile of the kernel's pooled convolution
/// outputs over the training instances. Instance order does not matter.
KernelBank fit_biases(const KernelBank& bank, const Dataset& train,
                      const BiasFitOptions& options = {});

FeatureMatrix transform(const KernelBank& bank, const Dataset& dataset, int jobs = 1);

/// Literal triple-loop reference implementation; tests only.
FeatureMatrix transform_oracle(const KernelBank& bank, const Dataset& dataset);

/// Bank containing only the kernels with at least one retained feature.
/// Retained features keep their original ids and biases.
KernelBank restrict_bank(const KernelBank& bank, const std::vector<std::uint32_t>& retained_ids);

/// Structure to/from JSON; biases travel separately as a binary block.
nlohmann::json bank_to_json(const KernelBank& bank);
KernelBank bank_from_json(const nlohmann::json& j);

}  // namespace drocket
