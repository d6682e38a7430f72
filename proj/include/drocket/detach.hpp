// Sequential Feature Detachment: iteratively refit a ridge classifier and
// drop the smallest-magnitude coefficients, then pick the pruning level that
// trades accuracy against model size.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "drocket/dataset.hpp"
#include "drocket/ridge.hpp"
#include "drocket/transform.hpp"

namespace drocket {

struct PruningStep {
    double retained_fraction = 1.0;             // of the starting feature count
    std::vector<std::uint32_t> retained_ids;    // sorted
    double val_accuracy = 0.0;
};

struct PruningCurve {
    std::vector<PruningStep> steps;  // steps[0] is the unpruned model
    double full_accuracy = 0.0;      // == steps[0].val_accuracy

    void validate() const;  // strict fraction decrease + nested retained sets
};

struct SfdOptions {
    double step_proportion = 0.05;  // of the current feature count, per step
    std::int64_t min_features = 10;
    std::vector<double> alphas = default_alpha_grid();
};

/// Runs the detachment loop: fit ridge on the current features, record
/// validation accuracy, keep the ceil((1-step)*count) features with the
/// largest |coefficient| (ties drop the lower feature id first), repeat
/// until at most min_features remain.
PruningCurve sfd(const FeatureMatrix& train_features, const std::vector<std::int32_t>& train_labels,
                 const FeatureMatrix& val_features, const std::vector<std::int32_t>& val_labels,
                 const SfdOptions& options = {});

/// Step maximizing val_accuracy/full_accuracy + c*(1 - retained_fraction);
/// ties go to the smaller model.
std::size_t select_optimal_step(const PruningCurve& curve, double c);
std::vector<std::uint32_t> select_optimal(const PruningCurve& curve, double c);

struct DetachConfig {
    std::int64_t num_features = 10000;
    double c = 0.1;
    double step_proportion = 0.05;
    double val_fraction = 0.25;
    std::int64_t min_features = 10;
    std::vector<double> alphas = default_alpha_grid();
    bool normalize = true;
    std::uint64_t seed = 0;
    double channel_size_base = 2.0;
    std::int64_t bias_max_instances = 0;  // 0 = full training set
    int jobs = 1;

    void validate() const;  // throws std::invalid_argument
};

/// A pruned MiniRocket + ridge classifier.
struct DetachModel {
    KernelBank bank;  // restricted to kernels with >= 1 retained feature
    std::vector<std::uint32_t> retained_ids;
    RidgeModel classifier;  // feature_ids == retained_ids
    double val_accuracy = 0.0;
    double c = 0.1;
    std::optional<ChannelStats> normalization;

    FeatureMatrix features_for(const Dataset& dataset, int jobs = 1) const;
    std::vector<std::int32_t> predict_labels(const Dataset& dataset, int jobs = 1) const;
    void validate() const;
};

/// End-to-end fit: inner stratified split, bank fit on the inner-train part,
/// SFD, size selection via c, final ridge refit on the full training set.
DetachModel fit_detach(const Dataset& train, const DetachConfig& config);

/// JSON manifest + little-endian f64 blob (biases, coefficients, scaler).
void save_detach_model(const DetachModel& model, const std::filesystem::path& json_path,
                       const std::filesystem::path& blob_path);
DetachModel load_detach_model(const std::filesystem::path& json_path,
                              const std::filesystem::path& blob_path);

}  // namespace drocket
