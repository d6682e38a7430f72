#include "drocket/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>

namespace drocket {

double label_accuracy(const std::vector<std::int32_t>& y_true,
                      const std::vector<std::int32_t>& y_pred) {
    if (y_true.size() != y_pred.size() || y_true.empty())
        throw std::invalid_argument("accuracy needs equal-length nonempty vectors");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < y_true.size(); ++i)
        if (y_true[i] == y_pred[i]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(y_true.size());
}

Metrics metrics_from_confusion(const std::array<std::array<std::int64_t, 2>, 2>& confusion) {
    Metrics m;
    m.confusion = confusion;
    const auto tn = static_cast<double>(confusion[0][0]);
    const auto fp = static_cast<double>(confusion[0][1]);
    const auto fn = static_cast<double>(confusion[1][0]);
    const auto tp = static_cast<double>(confusion[1][1]);
    const double total = tn + fp + fn + tp;
    if (total <= 0.0) throw std::invalid_argument("empty confusion matrix");

    m.accuracy = (tp + tn) / total;
    const auto rate = [&m](double num, double den) {
        if (den <= 0.0) {
            m.degenerate = true;
            return 0.0;
        }
        return num / den;
    };
    m.sensitivity = rate(tp, tp + fn);
    m.specificity = rate(tn, tn + fp);
    m.precision = rate(tp, tp + fp);
    m.f1 = rate(2.0 * m.precision * m.sensitivity, m.precision + m.sensitivity);
    return m;
}

Metrics compute_metrics(const std::vector<std::int32_t>& y_true,
                        const std::vector<std::int32_t>& y_pred, std::int32_t positive_class) {
    if (y_true.size() != y_pred.size()) throw std::invalid_argument("length mismatch");
    if (y_true.empty()) throw std::invalid_argument("empty input");
    std::array<std::array<std::int64_t, 2>, 2> confusion = {{{0, 0}, {0, 0}}};
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        const int row = y_true[i] == positive_class ? 1 : 0;
        const int col = y_pred[i] == positive_class ? 1 : 0;
        ++confusion[static_cast<std::size_t>(row)][static_cast<std::size_t>(col)];
    }
    return metrics_from_confusion(confusion);
}

RocCurve roc(const std::vector<std::int32_t>& y_true, const std::vector<double>& prob_positive,
             std::int32_t positive_class) {
    if (y_true.size() != prob_positive.size() || y_true.empty())
        throw std::invalid_argument("roc needs equal-length nonempty vectors");
    for (const double p : prob_positive)
        if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("probabilities must be in [0,1]");

    std::int64_t positives = 0, negatives = 0;
    for (const auto y : y_true) (y == positive_class ? positives : negatives)++;
    if (positives == 0 || negatives == 0)
        throw DataError("roc/auc undefined: y_true contains a single class");

    // Sort by probability descending; sweep thresholds at distinct values.
    std::vector<std::size_t> order(y_true.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return prob_positive[a] > prob_positive[b];
    });

    RocCurve curve;
    const double above_one = std::nextafter(1.0, 2.0);
    const double below_zero = std::nextafter(0.0, -1.0);
    curve.points.push_back({above_one, 0.0, 0.0});

    std::int64_t tp = 0, fp = 0;
    std::size_t i = 0;
    while (i < order.size()) {
        const double th = prob_positive[order[i]];
        while (i < order.size() && prob_positive[order[i]] == th) {
            if (y_true[order[i]] == positive_class)
                ++tp;
            else
                ++fp;
            ++i;
        }
        curve.points.push_back({th, static_cast<double>(fp) / static_cast<double>(negatives),
                                static_cast<double>(tp) / static_cast<double>(positives)});
    }
    curve.points.push_back({below_zero, 1.0, 1.0});

    double auc = 0.0;
    for (std::size_t k = 1; k < curve.points.size(); ++k) {
        const auto& a = curve.points[k - 1];
        const auto& b = curve.points[k];
        auc += (b.fpr - a.fpr) * 0.5 * (a.tpr + b.tpr);
    }
    curve.auc = auc;
    return curve;
}

std::pair<double, Metrics> best_threshold(const RocCurve& curve,
                                          const std::vector<std::int32_t>& y_true,
                                          const std::vector<double>& prob_positive,
                                          std::int32_t positive_class) {
    if (curve.points.empty()) throw std::invalid_argument("empty roc curve");
    if (y_true.size() != prob_positive.size() || y_true.empty())
        throw std::invalid_argument("length mismatch");

    double best_th = curve.points.front().threshold;
    double best_acc = -1.0;
    const std::int32_t negative_class = [&] {
        for (const auto y : y_true)
            if (y != positive_class) return y;
        return positive_class;  // unreachable for valid curves
    }();

    std::vector<std::int32_t> pred(y_true.size());
    for (const auto& point : curve.points) {
        for (std::size_t i = 0; i < pred.size(); ++i)
            pred[i] = prob_positive[i] >= point.threshold ? positive_class : negative_class;
        const double acc = label_accuracy(y_true, pred);
        const bool better =
            acc > best_acc ||
            (acc == best_acc && (std::abs(point.threshold - 0.5) < std::abs(best_th - 0.5) ||
                                 (std::abs(point.threshold - 0.5) == std::abs(best_th - 0.5) &&
                                  point.threshold < best_th)));
        if (better) {
            best_acc = acc;
            best_th = point.threshold;
        }
    }
    std::vector<std::int32_t> final_pred(y_true.size());
    for (std::size_t i = 0; i < final_pred.size(); ++i)
        final_pred[i] = prob_positive[i] >= best_th ? positive_class : negative_class;
    return {best_th, compute_metrics(y_true, final_pred, positive_class)};
}

LosoResult loso_cv(const Dataset& dataset, const EnsembleConfig& config, const LosoOptions& options) {
    dataset.validate();
    if (!dataset.subject_ids) throw DataError("loso requires subject_ids");
    config.validate();

    std::vector<std::int32_t> subjects(*dataset.subject_ids);
    std::sort(subjects.begin(), subjects.end());
    subjects.erase(std::unique(subjects.begin(), subjects.end()), subjects.end());
    if (subjects.size() < 2) throw DataError("loso requires at least two subjects");

    const auto n = dataset.n_instances;
    LosoResult result;
    result.prob_positive.assign(static_cast<std::size_t>(n),
                                std::numeric_limits<double>::quiet_NaN());
    result.predicted.assign(static_cast<std::size_t>(n), 0);

    struct FoldOutput {
        bool skipped = false;
        LosoFold fold;
        std::vector<double> probs;           // aligned with fold.test_indices
        std::vector<std::int32_t> predicted;
    };
    std::vector<FoldOutput> outputs(subjects.size());

    parallel_for(subjects.size(), options.fold_jobs, [&](std::size_t si) {
        const std::int32_t subject = subjects[si];
        std::vector<std::int64_t> train_rows, test_rows;
        for (std::int64_t i = 0; i < n; ++i) {
            if ((*dataset.subject_ids)[static_cast<std::size_t>(i)] == subject)
                test_rows.push_back(i);
            else
                train_rows.push_back(i);
        }
        require(!test_rows.empty() && !train_rows.empty(), "loso fold with empty part");

        // structural guarantee: held-out subject absent from training rows
        for (const auto r : train_rows)
            require((*dataset.subject_ids)[static_cast<std::size_t>(r)] != subject,
                    "subject leaked into training fold");

        std::set<std::int32_t> train_classes;
        for (const auto r : train_rows) train_classes.insert(dataset.labels[static_cast<std::size_t>(r)]);
        FoldOutput& out = outputs[si];
        out.fold.subject = subject;
        out.fold.test_indices = test_rows;
        if (train_classes.size() != 2) {
            out.skipped = true;
            return;
        }

        const auto take = [&](const std::vector<std::int64_t>& rows) {
            Dataset part;
            part.n_instances = static_cast<std::int64_t>(rows.size());
            part.n_channels = dataset.n_channels;
            part.n_timesteps = dataset.n_timesteps;
            part.channel_names = dataset.channel_names;
            const auto stride = static_cast<std::size_t>(dataset.n_channels * dataset.n_timesteps);
            part.values.resize(rows.size() * stride);
            part.labels.resize(rows.size());
            part.subject_ids = std::vector<std::int32_t>(rows.size());
            for (std::size_t k = 0; k < rows.size(); ++k) {
                const auto r = static_cast<std::size_t>(rows[k]);
                std::copy_n(dataset.values.begin() + static_cast<std::ptrdiff_t>(r * stride), stride,
                            part.values.begin() + static_cast<std::ptrdiff_t>(k * stride));
                part.labels[k] = dataset.labels[r];
                (*part.subject_ids)[k] = (*dataset.subject_ids)[r];
            }
            return part;
        };

        EnsembleConfig fold_config = config;
        // Fold seed depends on the subject, not the fold order.
        fold_config.detach.seed = mix_seed(config.detach.seed, static_cast<std::uint64_t>(
                                                                   static_cast<std::uint32_t>(subject)));
        const Dataset train_part = take(train_rows);
        const Dataset test_part = take(test_rows);
        const EnsembleModel model = fit_ensemble(train_part, fold_config);

        const Eigen::MatrixXd proba = predict_proba(model, test_part, 1);
        out.probs.resize(test_rows.size());
        out.predicted.resize(test_rows.size());
        std::vector<std::int32_t> y_true(test_rows.size());
        for (std::size_t k = 0; k < test_rows.size(); ++k) {
            out.probs[k] = proba(static_cast<Eigen::Index>(k), 1);
            out.predicted[k] = out.probs[k] >= options.threshold ? model.class_labels[1]
                                                                 : model.class_labels[0];
            y_true[k] = test_part.labels[k];
        }
        // Single-class held-out subjects are normal; derive the confusion
        // directly instead of through compute_metrics' two-class interface.
        std::array<std::array<std::int64_t, 2>, 2> confusion = {{{0, 0}, {0, 0}}};
        for (std::size_t k = 0; k < y_true.size(); ++k) {
            const int row = y_true[k] == model.class_labels[1] ? 1 : 0;
            const int col = out.predicted[k] == model.class_labels[1] ? 1 : 0;
            ++confusion[static_cast<std::size_t>(row)][static_cast<std::size_t>(col)];
        }
        out.fold.metrics = metrics_from_confusion(confusion);
        out.fold.relevance = ensemble_channel_relevance(model);
    });

    for (const auto& out : outputs) {
        if (out.skipped) {
            result.skipped_subjects.push_back(out.fold.subject);
            continue;
        }
        for (int r = 0; r < 2; ++r)
            for (int c = 0; c < 2; ++c)
                result.summed_confusion[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] +=
                    out.fold.metrics.confusion[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
        for (std::size_t k = 0; k < out.fold.test_indices.size(); ++k) {
            const auto i = static_cast<std::size_t>(out.fold.test_indices[k]);
            result.prob_positive[i] = out.probs[k];
            result.predicted[i] = out.predicted[k];
        }
        result.folds.push_back(out.fold);
    }
    if (result.folds.empty()) throw DataError("all loso folds were skipped");
    return result;
}

std::pair<std::vector<std::pair<std::int32_t, std::int32_t>>, double> subject_majority_vote(
    const std::vector<std::int32_t>& y_pred_trials, const std::vector<std::int32_t>& subject_ids,
    const std::map<std::int32_t, std::int32_t>& y_true_subjects, std::int32_t positive_class) {
    if (y_pred_trials.size() != subject_ids.size() || y_pred_trials.empty())
        throw std::invalid_argument("majority vote needs equal-length nonempty vectors");

    std::map<std::int32_t, std::pair<std::int64_t, std::int64_t>> counts;  // subject -> (pos, neg)
    for (std::size_t i = 0; i < y_pred_trials.size(); ++i) {
        auto& c = counts[subject_ids[i]];
        if (y_pred_trials[i] == positive_class)
            ++c.first;
        else
            ++c.second;
    }
    for (const auto& [subject, label] : y_true_subjects)
        if (!counts.count(subject))
            throw std::invalid_argument("subject " + std::to_string(subject) + " has no trials");

    std::int32_t negative_class = positive_class;
    for (const auto p : y_pred_trials)
        if (p != positive_class) negative_class = p;
    if (negative_class == positive_class)
        for (const auto& [s, lbl] : y_true_subjects)
            if (lbl != positive_class) negative_class = lbl;

    std::vector<std::pair<std::int32_t, std::int32_t>> predictions;
    std::int64_t hits = 0, graded = 0;
    for (const auto& [subject, c] : counts) {
        const std::int32_t vote = c.first >= c.second ? positive_class : negative_class;
        predictions.emplace_back(subject, vote);
        const auto it = y_true_subjects.find(subject);
        if (it != y_true_subjects.end()) {
            ++graded;
            if (it->second == vote) ++hits;
        }
    }
    if (graded == 0) throw std::invalid_argument("no subjects with known labels");
    return {predictions, static_cast<double>(hits) / static_cast<double>(graded)};
}

}  // namespace drocket
