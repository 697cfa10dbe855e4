#pragma once

#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "scefis/transforms.hpp"

namespace scefis {

/// First-order Takagi-Sugeno rule: Gaussian antecedent per input, affine consequent.
struct TSRule {
    Eigen::VectorXd center;
    Eigen::VectorXd width;
    Eigen::VectorXd coefficients;
    double bias = 0.0;

    double consequent(const Eigen::Ref<const Eigen::VectorXd>& x) const { return coefficients.dot(x) + bias; }
};

struct RuleBase {
    std::vector<TSRule> rules;
    int dimension = 0;
    int version = 0;
    int training_rows = 0;
    bool regularized = false;  ///< consequent fit needed the ridge fallback
    bool no_op = false;        ///< last evolution step added no data

    std::size_t size() const noexcept { return rules.size(); }
};

/// Paired training matrices: M (inputs) and O (optimal threshold per row).
struct TrainingStore {
    Matrix inputs;
    Eigen::VectorXd outputs;

    Eigen::Index size() const noexcept { return inputs.rows(); }
    bool empty() const noexcept { return inputs.rows() == 0; }
    Eigen::Index dimension() const noexcept { return inputs.cols(); }

    /// Appends the selected rows of (inputs, outputs).
    void append(const Matrix& new_inputs, const Eigen::VectorXd& new_outputs, std::span<const int> rows);
    void append(const Matrix& new_inputs, const Eigen::VectorXd& new_outputs);
};

struct FuzzyOptions {
    double radius = 0.5;        ///< cluster radius on the unit-normalized joint space
    double squash = 1.25;       ///< neighborhood penalty radius = squash * radius
    double accept_ratio = 0.5;
    double reject_ratio = 0.15;
    double ridge = 1e-8;        ///< slope penalty when the consequent fit is rank deficient
    double prune_distance = 0.3;
    /// Cluster on root-mean-square distances over the joint dimensions and widen the
    /// Gaussians by the same factor, so the radius keeps its meaning as inputs grow.
    bool dimension_scaled = true;
};

/// Cluster centers (row indices of the joint data) found by subtractive clustering.
std::vector<int> subtractive_clustering(const Matrix& joint_normalized, const FuzzyOptions& opts = {});

/// Min-max normalization of every column to [0,1]; constant columns map to 0.
Matrix unit_normalize(const Matrix& x);

RuleBase generate_rules(const TrainingStore& store, const FuzzyOptions& opts = {});

struct Inference {
    double value = 0.0;
    bool nearest_rule_fallback = false;
};

/// Firing-strength-weighted average of rule consequents.
Inference infer(const RuleBase& rb, const Eigen::Ref<const Eigen::VectorXd>& x);

/// One inference per statistic row.
std::vector<double> infer_block(const RuleBase& rb, const Matrix& rows);

/// Z-shaped membership: 1 for x <= a, 0 for x >= b, quadratic spline in between.
double zmf(double x, double a, double b);

struct Fusion {
    double t_star = 0.0;     ///< clamped to [0,255]
    double unclamped = 0.0;
    double mean = 0.0;
    double median = 0.0;
    double stddev = 0.0;
    double membership = 1.0;
    bool nonpositive_mean = false;
};

/// m = zmf(sigma, [0.1 mu, 0.2 mu]); T* = m mu + (1 - m) median.
Fusion fuse_output(std::span<const double> outputs);

/// Indices of candidate rows whose normalized joint distance to every stored row
/// (and to every earlier accepted candidate) is at least `d_min`. All rows are kept
/// when the store is empty.
std::vector<int> prune_rows(const Matrix& inputs, const Eigen::VectorXd& outputs, const TrainingStore& store,
                            double d_min);

struct Evolution {
    RuleBase rules;
    TrainingStore store;
    std::vector<int> kept;
};

Evolution evolve(const RuleBase& rb, const TrainingStore& store, const Matrix& inputs, double best_threshold,
                 const FuzzyOptions& opts = {});

nlohmann::json to_json(const RuleBase& rb);
RuleBase rule_base_from_json(const nlohmann::json& j);

}  // namespace scefis
