#include "drocket/detach.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>

namespace drocket {

namespace {

double label_accuracy(const std::vector<std::int32_t>& truth, const std::vector<std::int32_t>& pred) {
    require(truth.size() == pred.size() && !truth.empty(), "accuracy over mismatched vectors");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < truth.size(); ++i)
        if (truth[i] == pred[i]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(truth.size());
}

// --- little-endian f64 blob sections ---------------------------------------

void write_f64_section(std::ostream& out, const double* data, std::uint64_t count) {
    unsigned char head[8];
    for (int b = 0; b < 8; ++b) head[b] = static_cast<unsigned char>((count >> (8 * b)) & 0xff);
    out.write(reinterpret_cast<const char*>(head), 8);
    std::vector<unsigned char> buf(count * 8);
    for (std::uint64_t i = 0; i < count; ++i) {
        std::uint64_t bits;
        std::memcpy(&bits, data + i, 8);
        for (int b = 0; b < 8; ++b)
            buf[8 * i + static_cast<std::uint64_t>(b)] = static_cast<unsigned char>((bits >> (8 * b)) & 0xff);
    }
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

std::vector<double> read_f64_section(std::istream& in) {
    unsigned char head[8];
    in.read(reinterpret_cast<char*>(head), 8);
    if (in.gcount() != 8) throw DataError("model blob truncated");
    std::uint64_t count = 0;
    for (int b = 0; b < 8; ++b) count |= static_cast<std::uint64_t>(head[b]) << (8 * b);
    std::vector<unsigned char> buf(count * 8);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (static_cast<std::uint64_t>(in.gcount()) != count * 8) throw DataError("model blob truncated");
    std::vector<double> data(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b)
            bits |= static_cast<std::uint64_t>(buf[8 * i + static_cast<std::uint64_t>(b)]) << (8 * b);
        std::memcpy(&data[i], &bits, 8);
    }
    return data;
}

constexpr char kBlobMagic[4] = {'D', 'R', 'E', 'B'};

}  // namespace

void PruningCurve::validate() const {
    if (steps.empty()) throw InvariantError("empty pruning curve");
    for (std::size_t k = 0; k < steps.size(); ++k) {
        const auto& s = steps[k];
        if (!(s.retained_fraction > 0.0 && s.retained_fraction <= 1.0))
            throw InvariantError("retained_fraction out of (0,1]");
        if (!std::is_sorted(s.retained_ids.begin(), s.retained_ids.end()))
            throw InvariantError("retained ids must be sorted");
        if (k > 0) {
            if (!(s.retained_fraction < steps[k - 1].retained_fraction))
                throw InvariantError("retained_fraction must strictly decrease");
            if (!std::includes(steps[k - 1].retained_ids.begin(), steps[k - 1].retained_ids.end(),
                               s.retained_ids.begin(), s.retained_ids.end()))
                throw InvariantError("retained sets must be nested");
        }
    }
}

PruningCurve sfd(const FeatureMatrix& train_features, const std::vector<std::int32_t>& train_labels,
                 const FeatureMatrix& val_features, const std::vector<std::int32_t>& val_labels,
                 const SfdOptions& options) {
    if (!(options.step_proportion > 0.0 && options.step_proportion < 1.0))
        throw std::invalid_argument("step_proportion must be in (0,1)");
    if (options.min_features < 1) throw std::invalid_argument("min_features must be >= 1");
    if (train_features.feature_ids != val_features.feature_ids)
        throw std::invalid_argument("train/val feature columns differ");
    if (val_labels.empty()) throw std::invalid_argument("empty validation set");

    const auto total = static_cast<double>(train_features.n_features());
    std::vector<std::uint32_t> current = train_features.feature_ids;

    PruningCurve curve;
    for (;;) {
        const FeatureMatrix train_sub = select_columns(train_features, current);
        const FeatureMatrix val_sub = select_columns(val_features, current);
        const RidgeModel model = fit_ridge(train_sub, train_labels, options.alphas);
        const double acc = label_accuracy(val_labels, predict(model, val_sub));

        curve.steps.push_back({static_cast<double>(current.size()) / total, current, acc});
        const auto count = static_cast<std::int64_t>(current.size());
        if (count <= options.min_features) break;

        auto next = static_cast<std::int64_t>(
            std::ceil(static_cast<double>(count) * (1.0 - options.step_proportion)));
        if (next >= count) next = count - 1;  // always detach at least one feature
        next = std::max(next, options.min_features);

        // Keep the `next` features with the largest |coefficient|; among equal
        // magnitudes the lower feature id is detached first.
        std::vector<std::size_t> order(current.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            const double ma = std::abs(model.coefficients(static_cast<Eigen::Index>(a)));
            const double mb = std::abs(model.coefficients(static_cast<Eigen::Index>(b)));
            if (ma != mb) return ma > mb;
            return current[a] > current[b];
        });
        std::vector<std::uint32_t> kept;
        kept.reserve(static_cast<std::size_t>(next));
        for (std::int64_t k = 0; k < next; ++k) kept.push_back(current[order[static_cast<std::size_t>(k)]]);
        std::sort(kept.begin(), kept.end());
        current = std::move(kept);
    }
    curve.full_accuracy = curve.steps.front().val_accuracy;
    curve.validate();
    return curve;
}

std::size_t select_optimal_step(const PruningCurve& curve, double c) {
    curve.validate();
    if (!(c >= 0.0)) throw std::invalid_argument("c must be >= 0");
    const double denom = curve.full_accuracy > 0.0 ? curve.full_accuracy : 1.0;
    std::size_t best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < curve.steps.size(); ++k) {
        const auto& s = curve.steps[k];
        const double score = s.val_accuracy / denom + c * (1.0 - s.retained_fraction);
        // ties go to the smaller model; fractions strictly decrease along steps
        if (score > best_score) {
            best_score = score;
            best = k;
        }
    }
    return best;
}

std::vector<std::uint32_t> select_optimal(const PruningCurve& curve, double c) {
    return curve.steps[select_optimal_step(curve, c)].retained_ids;
}

void DetachConfig::validate() const {
    if (num_features < 84) throw std::invalid_argument("num_features must be >= 84");
    if (!(c >= 0.0)) throw std::invalid_argument("c must be >= 0");
    if (!(step_proportion > 0.0 && step_proportion < 1.0))
        throw std::invalid_argument("step_proportion must be in (0,1)");
    if (!(val_fraction > 0.0 && val_fraction < 1.0))
        throw std::invalid_argument("val_fraction must be in (0,1)");
    if (min_features < 1) throw std::invalid_argument("min_features must be >= 1");
    if (alphas.empty()) throw std::invalid_argument("empty alpha grid");
    if (!(channel_size_base > 1.0)) throw std::invalid_argument("channel_size_base must be > 1");
    if (bias_max_instances < 0) throw std::invalid_argument("bias_max_instances must be >= 0");
}

void DetachModel::validate() const {
    bank.validate();
    if (!bank.fitted) throw InvariantError("detach model bank must be fitted");
    if (bank.all_feature_ids() != retained_ids)
        throw InvariantError("bank features differ from retained ids");
    if (classifier.feature_ids != retained_ids)
        throw InvariantError("classifier features differ from retained ids");
}

FeatureMatrix DetachModel::features_for(const Dataset& dataset, int jobs) const {
    if (normalization) {
        const auto [normalized, stats] = znormalize(dataset, normalization);
        (void)stats;
        return transform(bank, normalized, jobs);
    }
    return transform(bank, dataset, jobs);
}

std::vector<std::int32_t> DetachModel::predict_labels(const Dataset& dataset, int jobs) const {
    return predict(classifier, features_for(dataset, jobs));
}

DetachModel fit_detach(const Dataset& train, const DetachConfig& config) {
    config.validate();
    train.validate();
    if (train.classes().size() != 2) throw DataError("training set must contain exactly two classes");

    std::optional<ChannelStats> stats;
    Dataset prepared;
    if (config.normalize) {
        auto [normalized, fitted_stats] = znormalize(train);
        prepared = std::move(normalized);
        stats = std::move(fitted_stats);
    } else {
        prepared = train;
    }

    SplitSpec inner;
    inner.validation_fraction = config.val_fraction;
    inner.seed = mix_seed(config.seed, 0x5b17);
    inner.stratified = true;
    auto [inner_train, inner_val] = split(prepared, inner);

    KernelBank bank = build_kernel_bank(config.num_features, prepared.n_channels,
                                        prepared.n_timesteps, config.seed, config.channel_size_base);
    bank = fit_biases(bank, inner_train, {config.bias_max_instances, config.jobs});

    const FeatureMatrix train_f = transform(bank, inner_train, config.jobs);
    const FeatureMatrix val_f = transform(bank, inner_val, config.jobs);
    const PruningCurve curve = sfd(train_f, inner_train.labels, val_f, inner_val.labels,
                                   {config.step_proportion, config.min_features, config.alphas});
    const std::size_t chosen = select_optimal_step(curve, config.c);

    DetachModel model;
    model.retained_ids = curve.steps[chosen].retained_ids;
    model.val_accuracy = curve.steps[chosen].val_accuracy;
    model.c = config.c;
    model.bank = restrict_bank(bank, model.retained_ids);
    model.normalization = std::move(stats);

    // Final refit uses the whole training set (inner-train plus validation).
    const FeatureMatrix full_f = transform(model.bank, prepared, config.jobs);
    model.classifier = fit_ridge(full_f, prepared.labels, config.alphas);
    model.validate();
    return model;
}

void save_detach_model(const DetachModel& model, const std::filesystem::path& json_path,
                       const std::filesystem::path& blob_path) {
    model.validate();
    nlohmann::json manifest = {
        {"version", 1},
        {"kind", "detach-model"},
        {"c", model.c},
        {"val_accuracy", model.val_accuracy},
        {"retained_ids", model.retained_ids},
        {"bank", bank_to_json(model.bank)},
        {"classifier",
         {{"alpha", model.classifier.alpha},
          {"intercept", model.classifier.intercept},
          {"loo_error", model.classifier.loo_error},
          {"feature_ids", model.classifier.feature_ids},
          {"class_labels", model.classifier.class_labels}}},
        {"normalization", model.normalization
                              ? nlohmann::json({{"mean", model.normalization->mean},
                                                {"stddev", model.normalization->stddev}})
                              : nlohmann::json(nullptr)},
        {"blob_layout", "magic DREB, u32 version, f64-le sections: biases, coefficients, means, stds"},
    };
    std::ofstream jout(json_path);
    if (!jout) throw DataError("cannot write model manifest: " + json_path.string());
    jout << manifest.dump(2) << '\n';
    if (!jout) throw DataError("failed writing model manifest: " + json_path.string());

    std::ofstream bout(blob_path, std::ios::binary);
    if (!bout) throw DataError("cannot write model blob: " + blob_path.string());
    bout.write(kBlobMagic, 4);
    const std::uint32_t version = 1;
    unsigned char vbuf[4];
    for (int b = 0; b < 4; ++b) vbuf[b] = static_cast<unsigned char>((version >> (8 * b)) & 0xff);
    bout.write(reinterpret_cast<const char*>(vbuf), 4);
    write_f64_section(bout, model.bank.biases.data(), model.bank.biases.size());
    write_f64_section(bout, model.classifier.coefficients.data(),
                      static_cast<std::uint64_t>(model.classifier.coefficients.size()));
    write_f64_section(bout, model.classifier.feature_means.data(),
                      static_cast<std::uint64_t>(model.classifier.feature_means.size()));
    write_f64_section(bout, model.classifier.feature_stds.data(),
                      static_cast<std::uint64_t>(model.classifier.feature_stds.size()));
    if (!bout) throw DataError("failed writing model blob: " + blob_path.string());
}

DetachModel load_detach_model(const std::filesystem::path& json_path,
                              const std::filesystem::path& blob_path) {
    std::ifstream jin(json_path);
    if (!jin) throw DataError("cannot open model manifest: " + json_path.string());
    nlohmann::json manifest;
    try {
        jin >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("malformed model manifest " + json_path.string() + ": " + e.what());
    }

    DetachModel model;
    try {
        if (manifest.at("version").get<int>() != 1 || manifest.at("kind") != "detach-model")
            throw DataError("unsupported model manifest: " + json_path.string());
        model.c = manifest.at("c").get<double>();
        model.val_accuracy = manifest.at("val_accuracy").get<double>();
        model.retained_ids = manifest.at("retained_ids").get<std::vector<std::uint32_t>>();
        model.bank = bank_from_json(manifest.at("bank"));
        const auto& cls = manifest.at("classifier");
        model.classifier.alpha = cls.at("alpha").get<double>();
        model.classifier.intercept = cls.at("intercept").get<double>();
        model.classifier.loo_error = cls.at("loo_error").get<double>();
        model.classifier.feature_ids = cls.at("feature_ids").get<std::vector<std::uint32_t>>();
        const auto labels = cls.at("class_labels").get<std::vector<std::int32_t>>();
        if (labels.size() != 2) throw DataError("class_labels must have two entries");
        model.classifier.class_labels = {labels[0], labels[1]};
        if (!manifest.at("normalization").is_null()) {
            ChannelStats stats;
            stats.mean = manifest["normalization"].at("mean").get<std::vector<double>>();
            stats.stddev = manifest["normalization"].at("stddev").get<std::vector<double>>();
            model.normalization = std::move(stats);
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError("invalid model manifest " + json_path.string() + ": " + e.what());
    }

    std::ifstream bin(blob_path, std::ios::binary);
    if (!bin) throw DataError("cannot open model blob: " + blob_path.string());
    char magic[4];
    bin.read(magic, 4);
    if (bin.gcount() != 4 || std::memcmp(magic, kBlobMagic, 4) != 0)
        throw DataError("bad model blob magic: " + blob_path.string());
    unsigned char vbuf[4];
    bin.read(reinterpret_cast<char*>(vbuf), 4);
    if (bin.gcount() != 4) throw DataError("model blob truncated");
    std::uint32_t version = 0;
    for (int b = 0; b < 4; ++b) version |= static_cast<std::uint32_t>(vbuf[b]) << (8 * b);
    if (version != 1) throw DataError("unsupported model blob version");

    model.bank.biases = read_f64_section(bin);
    const auto coef = read_f64_section(bin);
    const auto means = read_f64_section(bin);
    const auto stds = read_f64_section(bin);
    model.classifier.coefficients =
        Eigen::Map<const Eigen::VectorXd>(coef.data(), static_cast<Eigen::Index>(coef.size()));
    model.classifier.feature_means =
        Eigen::Map<const Eigen::VectorXd>(means.data(), static_cast<Eigen::Index>(means.size()));
    model.classifier.feature_stds =
        Eigen::Map<const Eigen::VectorXd>(stds.data(), static_cast<Eigen::Index>(stds.size()));
    model.validate();
    return model;
}

}  // namespace drocket
