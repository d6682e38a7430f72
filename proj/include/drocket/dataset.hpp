// Labeled multivariate time-series container, file I/O, splitting and
// per-channel normalization.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "drocket/common.hpp"

namespace drocket {

/// Instances x channels x timesteps, stored instance-major then channel-major.
/// Values are float32: the on-disk payload type, round-tripped bit-exactly.
struct Dataset {
    std::int64_t n_instances = 0;
    std::int64_t n_channels = 0;
    std::int64_t n_timesteps = 0;
    std::vector<float> values;
    std::vector<std::int32_t> labels;
    std::optional<std::vector<std::int32_t>> subject_ids;
    std::optional<std::vector<std::string>> channel_names;

    float at(std::int64_t i, std::int64_t c, std::int64_t t) const {
        return values[static_cast<std::size_t>((i * n_channels + c) * n_timesteps + t)];
    }
    float& at(std::int64_t i, std::int64_t c, std::int64_t t) {
        return values[static_cast<std::size_t>((i * n_channels + c) * n_timesteps + t)];
    }
    /// Pointer to the n_timesteps contiguous values of one channel of one instance.
    const float* series(std::int64_t i, std::int64_t c) const {
        return values.data() + static_cast<std::size_t>((i * n_channels + c) * n_timesteps);
    }

    /// Sorted distinct labels.
    std::vector<std::int32_t> classes() const;

    /// Throws DataError when any structural invariant is broken.
    void validate() const;
};

struct SplitSpec {
    double validation_fraction = 0.25;
    std::uint64_t seed = 0;
    bool stratified = true;
    bool group_by_subject = false;
};

enum class DatasetFormat { DreBinary, CsvLong };

/// dre-binary: `<name>.json` header + `<name>.bin` little-endian f32 payload.
/// `path` may be the header path or the extension-less base path.
Dataset load_dataset(const std::filesystem::path& path, DatasetFormat format);

/// Round-trip identity: load_dataset(save_dataset(d)) == d bit-exactly for
/// dre-binary. `extra_header` is merged into the JSON header (dre-binary only).
void save_dataset(const Dataset& dataset, const std::filesystem::path& path,
                  DatasetFormat format = DatasetFormat::DreBinary,
                  const nlohmann::json& extra_header = nlohmann::json::object());

/// Returns (rest, validation). Deterministic in spec.seed.
std::pair<Dataset, Dataset> split(const Dataset& dataset, const SplitSpec& spec);

struct ChannelStats {
    std::vector<double> mean;
    std::vector<double> stddev;  // entries < 1e-12 are replaced by 1 when applied
};

/// Per-channel z-normalization. Without `stats`, fits them on `dataset` and
/// applies them; with `stats` (test time) applies them unchanged.
std::pair<Dataset, ChannelStats> znormalize(const Dataset& dataset,
                                            const std::optional<ChannelStats>& stats = std::nullopt);

}  // namespace drocket
