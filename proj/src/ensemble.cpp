#include "drocket/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace drocket {

void EnsembleConfig::validate() const {
    if (n_members < 1) throw std::invalid_argument("n_members must be >= 1");
    if (!(threshold > 0.0 && threshold < 1.0))
        throw std::invalid_argument("threshold must be in (0,1)");
    if (soft_member_scores)
        throw std::invalid_argument("soft_member_scores is reserved and not supported");
    detach.validate();
}

void ChannelRelevance::validate() const {
    double sum = 0.0;
    for (const double v : values) {
        if (!(v >= 0.0)) throw InvariantError("relevance entries must be nonnegative");
        sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw InvariantError("relevance must sum to 1");
}

void EnsembleModel::validate() const {
    if (members.empty() || members.size() != weights.size())
        throw InvariantError("ensemble needs matching members and weights");
    double sum = 0.0;
    for (const double w : weights) {
        if (!(w >= 0.0)) throw InvariantError("weights must be nonnegative");
        sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-12) throw InvariantError("weights must sum to 1");
    for (const auto& m : members) {
        m.validate();
        if (m.bank.n_channels != n_channels) throw InvariantError("member channel count mismatch");
        if (m.classifier.class_labels != class_labels)
            throw InvariantError("member class labels mismatch");
    }
}

std::vector<double> ensemble_weights(const std::vector<double>& val_accuracies, double chance,
                                     double eps) {
    if (val_accuracies.empty()) throw std::invalid_argument("no member accuracies");
    std::vector<double> weights(val_accuracies.size());
    double total = 0.0;
    for (std::size_t i = 0; i < val_accuracies.size(); ++i) {
        weights[i] = std::max(val_accuracies[i] - chance, eps);
        total += weights[i];
    }
    for (auto& w : weights) w /= total;
    return weights;
}

EnsembleModel fit_ensemble(const Dataset& train, const EnsembleConfig& config) {
    config.validate();
    train.validate();
    const auto classes = train.classes();
    if (classes.size() != 2) throw DataError("training set must contain exactly two classes");

    EnsembleModel model;
    model.members.resize(static_cast<std::size_t>(config.n_members));
    model.n_channels = train.n_channels;
    model.threshold = config.threshold;
    model.class_labels = {classes[0], classes[1]};
    model.channel_names = train.channel_names;

    // Members are independent; parallelize across them and keep per-member
    // transforms single-threaded to avoid oversubscription.
    const int outer = resolve_jobs(config.detach.jobs);
    parallel_for(model.members.size(), outer, [&](std::size_t i) {
        DetachConfig member_config = config.detach;
        member_config.seed = config.detach.seed + static_cast<std::uint64_t>(i);
        member_config.jobs = 1;
        model.members[i] = fit_detach(train, member_config);
    });

    std::vector<double> accuracies;
    accuracies.reserve(model.members.size());
    for (const auto& m : model.members) accuracies.push_back(m.val_accuracy);
    model.weights = ensemble_weights(accuracies);
    model.validate();
    return model;
}

Eigen::MatrixXd predict_proba(const EnsembleModel& ensemble, const Dataset& dataset, int jobs) {
    ensemble.validate();
    dataset.validate();
    if (dataset.n_channels != ensemble.n_channels)
        throw DataError("channel count mismatch: model expects " +
                        std::to_string(ensemble.n_channels) + ", dataset has " +
                        std::to_string(dataset.n_channels));

    const auto n = dataset.n_instances;
    std::vector<std::vector<std::int32_t>> votes(ensemble.members.size());
    parallel_for(ensemble.members.size(), jobs, [&](std::size_t m) {
        votes[m] = ensemble.members[m].predict_labels(dataset, 1);
    });

    Eigen::MatrixXd proba = Eigen::MatrixXd::Zero(n, 2);
    for (std::size_t m = 0; m < ensemble.members.size(); ++m) {
        const double w = ensemble.weights[m];
        for (std::int64_t i = 0; i < n; ++i) {
            const int col = votes[m][static_cast<std::size_t>(i)] == ensemble.class_labels[1] ? 1 : 0;
            proba(i, col) += w;
        }
    }
    return proba;
}

std::vector<std::int32_t> predict_label(const EnsembleModel& ensemble, const Dataset& dataset,
                                        double threshold, int jobs) {
    if (!(threshold > 0.0 && threshold < 1.0))
        throw std::invalid_argument("threshold must be in (0,1)");
    const Eigen::MatrixXd proba = predict_proba(ensemble, dataset, jobs);
    std::vector<std::int32_t> out(static_cast<std::size_t>(proba.rows()));
    for (Eigen::Index i = 0; i < proba.rows(); ++i)
        out[static_cast<std::size_t>(i)] =
            proba(i, 1) >= threshold ? ensemble.class_labels[1] : ensemble.class_labels[0];
    return out;
}

ChannelRelevance member_channel_relevance(const DetachModel& model) {
    model.validate();
    ChannelRelevance rel;
    rel.values.assign(static_cast<std::size_t>(model.bank.n_channels), 0.0);

    // classifier feature order matches bank feature order (both ascending ids)
    std::size_t fpos = 0;
    for (const auto& kernel : model.bank.kernels) {
        const auto share = static_cast<double>(kernel.channels.size());
        for (std::size_t f = 0; f < kernel.feature_ids.size(); ++f, ++fpos) {
            const double mass =
                std::abs(model.classifier.coefficients(static_cast<Eigen::Index>(fpos))) / share;
            for (const auto c : kernel.channels) rel.values[c] += mass;
        }
    }

    double total = 0.0;
    for (const double v : rel.values) total += v;
    if (total <= 0.0) {
        // all coefficients zero: no information, report uniform relevance
        std::fill(rel.values.begin(), rel.values.end(), 1.0 / static_cast<double>(rel.values.size()));
    } else {
        for (auto& v : rel.values) v /= total;
    }
    rel.validate();
    return rel;
}

ChannelRelevance median_relevance(const std::vector<ChannelRelevance>& members) {
    if (members.empty()) throw std::invalid_argument("no member relevances");
    const std::size_t channels = members.front().values.size();
    for (const auto& m : members)
        if (m.values.size() != channels) throw std::invalid_argument("relevance length mismatch");

    ChannelRelevance rel;
    rel.values.assign(channels, 0.0);
    std::vector<double> column(members.size());
    for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t m = 0; m < members.size(); ++m) column[m] = members[m].values[c];
        std::sort(column.begin(), column.end());
        const std::size_t mid = column.size() / 2;
        rel.values[c] = column.size() % 2 == 1 ? column[mid] : 0.5 * (column[mid - 1] + column[mid]);
    }
    double total = 0.0;
    for (const double v : rel.values) total += v;
    if (total <= 0.0)
        std::fill(rel.values.begin(), rel.values.end(), 1.0 / static_cast<double>(channels));
    else
        for (auto& v : rel.values) v /= total;
    rel.validate();
    return rel;
}

ChannelRelevance ensemble_channel_relevance(const EnsembleModel& ensemble) {
    ensemble.validate();
    std::vector<ChannelRelevance> members;
    members.reserve(ensemble.members.size());
    for (const auto& m : ensemble.members) members.push_back(member_channel_relevance(m));
    return median_relevance(members);
}

namespace {

std::string member_stem(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "member_%03zu", index);
    return buf;
}

}  // namespace

void save_ensemble(const EnsembleModel& ensemble, const std::filesystem::path& dir,
                   const nlohmann::json& config_echo) {
    ensemble.validate();
    std::filesystem::create_directories(dir);
    nlohmann::json manifest = {
        {"version", 1},
        {"kind", "dre-ensemble"},
        {"n_members", ensemble.members.size()},
        {"weights", ensemble.weights},
        {"n_channels", ensemble.n_channels},
        {"threshold", ensemble.threshold},
        {"class_labels", ensemble.class_labels},
        {"channel_names", ensemble.channel_names ? nlohmann::json(*ensemble.channel_names)
                                                 : nlohmann::json(nullptr)},
        {"config", config_echo},
    };
    nlohmann::json member_files = nlohmann::json::array();
    for (std::size_t i = 0; i < ensemble.members.size(); ++i) member_files.push_back(member_stem(i));
    manifest["members"] = member_files;

    std::ofstream out(dir / "ensemble.json");
    if (!out) throw DataError("cannot write ensemble manifest in " + dir.string());
    out << manifest.dump(2) << '\n';
    if (!out) throw DataError("failed writing ensemble manifest in " + dir.string());

    for (std::size_t i = 0; i < ensemble.members.size(); ++i) {
        const auto stem = member_stem(i);
        save_detach_model(ensemble.members[i], dir / (stem + ".json"), dir / (stem + ".bin"));
    }
}

EnsembleModel load_ensemble(const std::filesystem::path& dir) {
    std::ifstream in(dir / "ensemble.json");
    if (!in) throw DataError("cannot open ensemble manifest: " + (dir / "ensemble.json").string());
    nlohmann::json manifest;
    try {
        in >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("malformed ensemble manifest: " + std::string(e.what()));
    }

    EnsembleModel model;
    try {
        if (manifest.at("version").get<int>() != 1 || manifest.at("kind") != "dre-ensemble")
            throw DataError("unsupported ensemble manifest in " + dir.string());
        model.weights = manifest.at("weights").get<std::vector<double>>();
        model.n_channels = manifest.at("n_channels").get<std::int64_t>();
        model.threshold = manifest.at("threshold").get<double>();
        const auto labels = manifest.at("class_labels").get<std::vector<std::int32_t>>();
        if (labels.size() != 2) throw DataError("class_labels must have two entries");
        model.class_labels = {labels[0], labels[1]};
        if (!manifest.at("channel_names").is_null())
            model.channel_names = manifest["channel_names"].get<std::vector<std::string>>();
        for (const auto& stem : manifest.at("members").get<std::vector<std::string>>())
            model.members.push_back(
                load_detach_model(dir / (stem + ".json"), dir / (stem + ".bin")));
    } catch (const nlohmann::json::exception& e) {
        throw DataError("invalid ensemble manifest: " + std::string(e.what()));
    }
    model.validate();
    return model;
}

}  // namespace drocket
