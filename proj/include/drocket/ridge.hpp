// Binary ridge classifier on PPV features: +-1 regression targets,
// per-column standardization, alpha chosen by closed-form leave-one-out.
#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "drocket/transform.hpp"

namespace drocket {

struct RidgeModel {
    std::vector<std::uint32_t> feature_ids;
    Eigen::VectorXd coefficients;  // for standardized features
    double intercept = 0.0;
    double alpha = 0.0;
    std::array<std::int32_t, 2> class_labels = {0, 1};  // mapped to {-1, +1}
    Eigen::VectorXd feature_means;
    Eigen::VectorXd feature_stds;  // entries < 1e-12 stored as 1
    double loo_error = 0.0;        // mean squared LOO residual at the chosen alpha
};

/// 17 points log-spaced over [1e-3, 1e5].
std::vector<double> default_alpha_grid();

/// Fits one model per candidate alpha (shared eigendecomposition) and keeps
/// the alpha with the smallest closed-form leave-one-out squared error;
/// ties go to the smaller alpha. The intercept is not penalized.
/// `loo_errors_out`, when given, receives one LOO error per candidate in
/// ascending alpha order.
RidgeModel fit_ridge(const FeatureMatrix& features, const std::vector<std::int32_t>& labels,
                     const std::vector<double>& alphas = default_alpha_grid(),
                     std::vector<double>* loo_errors_out = nullptr);

/// theta . x_standardized + intercept; positive means the +1 class.
/// The matrix may contain extra columns; model columns are located by id.
Eigen::VectorXd decision_function(const RidgeModel& model, const FeatureMatrix& features);

/// Sign of the decision function mapped back to class labels.
/// A score of exactly zero maps to the class encoded as +1.
std::vector<std::int32_t> predict(const RidgeModel& model, const FeatureMatrix& features);

}  // namespace drocket
