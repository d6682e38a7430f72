// Metrics, ROC and threshold analysis, leave-one-subject-out cross
// validation and subject-level majority voting.
#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include "drocket/ensemble.hpp"

namespace drocket {

struct Metrics {
    double accuracy = 0.0;
    double sensitivity = 0.0;
    double specificity = 0.0;
    double precision = 0.0;
    double f1 = 0.0;
    /// rows = truth, cols = prediction, index 0 = negative, 1 = positive
    std::array<std::array<std::int64_t, 2>, 2> confusion = {{{0, 0}, {0, 0}}};
    bool degenerate = false;  // some denominator was zero
};

double label_accuracy(const std::vector<std::int32_t>& y_true,
                      const std::vector<std::int32_t>& y_pred);

Metrics compute_metrics(const std::vector<std::int32_t>& y_true,
                        const std::vector<std::int32_t>& y_pred, std::int32_t positive_class);

Metrics metrics_from_confusion(const std::array<std::array<std::int64_t, 2>, 2>& confusion);

struct RocPoint {
    double threshold = 0.0;
    double fpr = 0.0;
    double tpr = 0.0;
};

struct RocCurve {
    std::vector<RocPoint> points;  // thresholds descending; (0,0) first, (1,1) last
    double auc = 0.0;
};

/// Thresholds at every distinct probability plus sentinels just above 1 and
/// just below 0; prediction is positive when prob >= threshold.
RocCurve roc(const std::vector<std::int32_t>& y_true, const std::vector<double>& prob_positive,
             std::int32_t positive_class);

/// Accuracy-maximizing threshold among the curve's candidates. Ties pick the
/// threshold closest to 0.5; equal distance picks the lower one.
std::pair<double, Metrics> best_threshold(const RocCurve& curve,
                                          const std::vector<std::int32_t>& y_true,
                                          const std::vector<double>& prob_positive,
                                          std::int32_t positive_class);

struct LosoFold {
    std::int32_t subject = 0;
    Metrics metrics;
    ChannelRelevance relevance;
    std::vector<std::int64_t> test_indices;
};

struct LosoResult {
    std::array<std::array<std::int64_t, 2>, 2> summed_confusion = {{{0, 0}, {0, 0}}};
    std::vector<LosoFold> folds;
    std::vector<double> prob_positive;       // per instance; NaN when its fold was skipped
    std::vector<std::int32_t> predicted;     // per instance; only valid where prob is not NaN
    std::vector<std::int32_t> skipped_subjects;
};

struct LosoOptions {
    double threshold = 0.5;
    int fold_jobs = 1;  // folds run in parallel; results are order-independent
};

/// One fold per subject: train on all other subjects, predict the held-out
/// trials. Folds whose remaining training data has a single class are
/// skipped with a warning record.
LosoResult loso_cv(const Dataset& dataset, const EnsembleConfig& config,
                   const LosoOptions& options = {});

/// Per-subject modal predicted label (exact tie goes to the positive class)
/// and the accuracy over subjects.
std::pair<std::vector<std::pair<std::int32_t, std::int32_t>>, double> subject_majority_vote(
    const std::vector<std::int32_t>& y_pred_trials, const std::vector<std::int32_t>& subject_ids,
    const std::map<std::int32_t, std::int32_t>& y_true_subjects, std::int32_t positive_class);

}  // namespace drocket
