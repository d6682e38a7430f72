#include "drocket/ridge.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>

namespace drocket {

namespace {

constexpr double kStdFloor = 1e-12;

struct Standardized {
    Eigen::MatrixXd x;  // zero-mean, unit-std columns
    Eigen::VectorXd means, stds;
};

Standardized standardize(const Eigen::MatrixXd& x) {
    Standardized s;
    const auto n = static_cast<double>(x.rows());
    s.means = x.colwise().mean();
    Eigen::MatrixXd centered = x.rowwise() - s.means.transpose();
    s.stds = (centered.array().square().colwise().sum() / n).sqrt();
    for (Eigen::Index j = 0; j < s.stds.size(); ++j)
        if (s.stds(j) < kStdFloor) s.stds(j) = 1.0;
    s.x = centered.array().rowwise() / s.stds.transpose().array();
    return s;
}

}  // namespace

std::vector<double> default_alpha_grid() {
    std::vector<double> grid;
    grid.reserve(17);
    for (int i = 0; i < 17; ++i) grid.push_back(std::pow(10.0, -3.0 + 0.5 * i));
    return grid;
}

RidgeModel fit_ridge(const FeatureMatrix& features, const std::vector<std::int32_t>& labels,
                     const std::vector<double>& alphas, std::vector<double>* loo_errors_out) {
    const Eigen::Index n = features.values.rows();
    const Eigen::Index p = features.values.cols();
    if (n < 2) throw std::invalid_argument("ridge needs at least two instances");
    if (p < 1) throw std::invalid_argument("empty feature matrix");
    if (labels.size() != static_cast<std::size_t>(n))
        throw std::invalid_argument("labels length mismatch");
    if (alphas.empty()) throw std::invalid_argument("empty alpha grid");
    for (const double a : alphas)
        if (!(a >= 0.0)) throw std::invalid_argument("alphas must be >= 0");

    std::set<std::int32_t> classes(labels.begin(), labels.end());
    if (classes.size() != 2)
        throw std::invalid_argument("ridge classifier requires exactly two classes, got " +
                                    std::to_string(classes.size()));
    const std::int32_t neg = *classes.begin();
    const std::int32_t pos = *std::next(classes.begin());

    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) y(i) = labels[static_cast<std::size_t>(i)] == pos ? 1.0 : -1.0;
    const double y_mean = y.mean();

    const Standardized s = standardize(features.values);

    // Shared eigendecomposition; every candidate alpha is then a diagonal
    // reweighting. Dual (n x n) when the feature count exceeds n.
    const bool dual = n <= p;
    Eigen::VectorXd eigenvalues;
    Eigen::MatrixXd basis;  // dual: Q (n x r); primal: B = X V (n x r)
    Eigen::MatrixXd primal_v;
    if (dual) {
        const Eigen::MatrixXd gram = s.x * s.x.transpose();
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
        eigenvalues = eig.eigenvalues().cwiseMax(0.0);
        basis = eig.eigenvectors();
    } else {
        const Eigen::MatrixXd gram = s.x.transpose() * s.x;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
        eigenvalues = eig.eigenvalues().cwiseMax(0.0);
        primal_v = eig.eigenvectors();
        basis = s.x * primal_v;
    }
    const double eps_eigen = eigenvalues.maxCoeff() * 1e-14;

    // z_j = basis_j . y ; in both branches yhat = mean + basis D(alpha) z.
    const Eigen::VectorXd z = basis.transpose() * y;
    const Eigen::MatrixXd basis_sq = basis.array().square();

    double best_alpha = alphas.front();
    double best_err = std::numeric_limits<double>::infinity();
    bool have_best = false;
    if (loo_errors_out) loo_errors_out->clear();

    std::vector<double> sorted_alphas(alphas);
    std::sort(sorted_alphas.begin(), sorted_alphas.end());
    for (const double alpha : sorted_alphas) {
        Eigen::VectorXd d(eigenvalues.size());
        for (Eigen::Index j = 0; j < eigenvalues.size(); ++j) {
            const double lam = eigenvalues(j);
            if (lam <= eps_eigen && alpha == 0.0)
                d(j) = 0.0;  // zero mode: pseudo-inverse behavior
            else if (dual)
                d(j) = lam / (lam + alpha);
            else
                d(j) = 1.0 / (lam + alpha);
        }
        const Eigen::VectorXd yhat = (basis * (d.asDiagonal() * z)).array() + y_mean;
        const Eigen::VectorXd leverage = basis_sq * d;
        double err = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double h = leverage(i) + 1.0 / static_cast<double>(n);
            const double denom = std::max(1.0 - h, 1e-12);
            const double r = (y(i) - yhat(i)) / denom;
            err += r * r;
        }
        err /= static_cast<double>(n);
        if (loo_errors_out) loo_errors_out->push_back(err);
        if (!have_best || err < best_err) {
            have_best = true;
            best_err = err;
            best_alpha = alpha;
        }
    }

    // Coefficients at the winning alpha.
    Eigen::VectorXd beta(p);
    if (dual) {
        Eigen::VectorXd inv(eigenvalues.size());
        for (Eigen::Index j = 0; j < eigenvalues.size(); ++j) {
            const double lam = eigenvalues(j);
            inv(j) = (lam <= eps_eigen && best_alpha == 0.0) ? 0.0 : 1.0 / (lam + best_alpha);
        }
        beta = s.x.transpose() * (basis * (inv.asDiagonal() * z));
    } else {
        Eigen::VectorXd inv(eigenvalues.size());
        for (Eigen::Index j = 0; j < eigenvalues.size(); ++j) {
            const double lam = eigenvalues(j);
            inv(j) = (lam <= eps_eigen && best_alpha == 0.0) ? 0.0 : 1.0 / (lam + best_alpha);
        }
        beta = primal_v * (inv.asDiagonal() * z);
    }

    RidgeModel model;
    model.feature_ids = features.feature_ids;
    model.coefficients = beta;
    model.intercept = y_mean;
    model.alpha = best_alpha;
    model.class_labels = {neg, pos};
    model.feature_means = s.means;
    model.feature_stds = s.stds;
    model.loo_error = best_err;
    return model;
}

Eigen::VectorXd decision_function(const RidgeModel& model, const FeatureMatrix& features) {
    const Eigen::Index n = features.values.rows();
    Eigen::VectorXd scores = Eigen::VectorXd::Constant(n, model.intercept);
    for (std::size_t j = 0; j < model.feature_ids.size(); ++j) {
        const auto it =
            std::find(features.feature_ids.begin(), features.feature_ids.end(), model.feature_ids[j]);
        if (it == features.feature_ids.end())
            throw std::invalid_argument("feature id " + std::to_string(model.feature_ids[j]) +
                                        " missing from matrix");
        const auto col = static_cast<Eigen::Index>(it - features.feature_ids.begin());
        const auto jj = static_cast<Eigen::Index>(j);
        scores += model.coefficients(jj) *
                  ((features.values.col(col).array() - model.feature_means(jj)) / model.feature_stds(jj))
                      .matrix();
    }
    return scores;
}

std::vector<std::int32_t> predict(const RidgeModel& model, const FeatureMatrix& features) {
    const Eigen::VectorXd scores = decision_function(model, features);
    std::vector<std::int32_t> out(static_cast<std::size_t>(scores.size()));
    for (Eigen::Index i = 0; i < scores.size(); ++i)
        out[static_cast<std::size_t>(i)] = scores(i) >= 0.0 ? model.class_labels[1] : model.class_labels[0];
    return out;
}

}  // namespace drocket
