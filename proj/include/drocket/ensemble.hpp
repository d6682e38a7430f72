// Ensemble of independently trained Detach models: performance-weighted
// hard-label voting into a normalized label probability, plus built-in
// channel relevance estimation.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "drocket/detach.hpp"

namespace drocket {

struct EnsembleConfig {
    std::int64_t n_members = 25;
    DetachConfig detach;
    double threshold = 0.5;
    bool soft_member_scores = false;  // reserved; must stay false

    void validate() const;
};

/// Nonnegative per-channel importances summing to one.
struct ChannelRelevance {
    std::vector<double> values;

    void validate() const;
};

struct EnsembleModel {
    std::vector<DetachModel> members;
    std::vector<double> weights;  // nonnegative, sum 1
    std::int64_t n_channels = 0;
    double threshold = 0.5;
    std::array<std::int32_t, 2> class_labels = {0, 1};  // [negative, positive]
    std::optional<std::vector<std::string>> channel_names;

    void validate() const;
};

/// Member weights from validation accuracies: max(acc - chance, eps),
/// normalized to sum 1. All-at-chance degenerates to uniform weights.
std::vector<double> ensemble_weights(const std::vector<double>& val_accuracies,
                                     double chance = 0.5, double eps = 1e-6);

/// Trains n_members Detach models with seeds seed+0 .. seed+N-1. Members are
/// independent, so the result does not depend on scheduling.
EnsembleModel fit_ensemble(const Dataset& train, const EnsembleConfig& config);

/// Each member votes its hard label; P(class k) is the summed weight of the
/// members voting k. Columns are [negative, positive]; rows sum to one.
Eigen::MatrixXd predict_proba(const EnsembleModel& ensemble, const Dataset& dataset, int jobs = 1);

/// Positive class when P(positive) >= threshold (boundary counts as positive).
std::vector<std::int32_t> predict_label(const EnsembleModel& ensemble, const Dataset& dataset,
                                        double threshold, int jobs = 1);

/// Per-channel importance of one pruned model: every retained feature adds
/// |coefficient| / |channel_set| to each channel its kernel reads.
ChannelRelevance member_channel_relevance(const DetachModel& model);

/// Channel-wise median over per-member relevances, renormalized to sum 1.
ChannelRelevance median_relevance(const std::vector<ChannelRelevance>& members);
ChannelRelevance ensemble_channel_relevance(const EnsembleModel& ensemble);

/// Directory layout: ensemble.json + member_XXX.json/.bin per member.
void save_ensemble(const EnsembleModel& ensemble, const std::filesystem::path& dir,
                   const nlohmann::json& config_echo = nlohmann::json::object());
EnsembleModel load_ensemble(const std::filesystem::path& dir);

}  // namespace drocket
