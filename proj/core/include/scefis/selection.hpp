#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "scefis/transforms.hpp"

namespace scefis {

struct RowKey {
    std::string image_id;
    int statistic = 0;

    friend bool operator==(const RowKey&, const RowKey&) = default;
};

/// Rows are (image, statistic) pairs, columns are named features of the 108-feature schema.
struct StackedFeatureMatrix {
    Matrix values;
    std::vector<RowKey> rows;
    std::vector<std::string> columns;

    Eigen::Index row_count() const noexcept { return values.rows(); }
    Eigen::Index column_count() const noexcept { return values.cols(); }

    StackedFeatureMatrix select_columns(std::span<const int> indices) const;
    /// The statistic rows belonging to one image, in stored order.
    Matrix image_rows(const std::string& image_id) const;
    std::vector<std::string> image_ids() const;
};

class NoInformativeFeatures : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class SelectionFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

double pearson(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b);

struct PruneResult {
    StackedFeatureMatrix matrix;
    std::vector<int> kept;              ///< indices into the input columns, ascending
    std::vector<int> dropped_constant;  ///< zero-variance columns removed up front
};

/// Walks columns in order and drops any whose |Pearson correlation| with an already
/// kept column reaches `threshold`. Constant columns are dropped first.
PruneResult correlation_prune(const StackedFeatureMatrix& f, double threshold);

/// Target cardinality N_T2 and the correlation-pruned matrix F_C.
struct Cardinality {
    int count = 0;
    PruneResult fc;
};

Cardinality determine_cardinality(const StackedFeatureMatrix& f4, double threshold = 0.90);

enum class SelectionMethod { Correlation, Spectral, MultiCluster, FeatureSimilarity, Greedy, Laplacian };

char method_tag(SelectionMethod m) noexcept;
std::string method_name(SelectionMethod m);

struct SelectionResult {
    SelectionMethod method = SelectionMethod::Correlation;
    std::vector<int> indices;  ///< ascending column indices into F4
};

struct SelectorOptions {
    int neighbors = 5;
    int clusters = 5;
};

/// Column z-scoring; zero-variance columns become all zeros.
Matrix standardize_columns(const Matrix& x);

/// Heat-kernel width used by the graph selectors: mean pairwise Euclidean row distance.
double mean_pairwise_distance(const Matrix& x);

/// Symmetric k-nearest-neighbor graph with heat-kernel weights exp(-d^2 / (2 sigma^2)).
Matrix knn_heat_graph(const Matrix& x, int neighbors, double sigma);

std::vector<double> laplacian_scores(const Matrix& x, const SelectorOptions& opts = {});
std::vector<double> spectral_scores(const Matrix& x);
std::vector<double> mcfs_scores(const Matrix& x, int k, const SelectorOptions& opts = {});
double mici(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b);

SelectionResult fs_laplacian(const Matrix& f4, int k, const SelectorOptions& opts = {});
SelectionResult fs_feature_similarity(const Matrix& f4, int k);
SelectionResult fs_spectral(const Matrix& f4, int k);
SelectionResult fs_mcfs(const Matrix& f4, int k, const SelectorOptions& opts = {});
/// Selection order of the greedy column-subset method (first pick first).
std::vector<int> greedy_order(const Matrix& f4, int k);
SelectionResult fs_greedy(const Matrix& f4, int k);

struct SelectorOutcome {
    SelectionMethod method;
    std::optional<SelectionResult> result;
    std::string error;
};

/// Runs the five unsupervised selectors; a failing selector is reported, not thrown.
std::vector<SelectorOutcome> run_selectors(const Matrix& f4, int k, const SelectorOptions& opts = {});

struct VoteResult {
    std::vector<int> indices;  ///< ascending
    std::vector<int> tally;    ///< votes per F4 column
    int quorum = 0;
    int active = 0;
    bool fallback = false;     ///< empty vote; F_C indices returned
};

/// Keeps every column voted for by at least ceil(quorum_fraction * active) of the given results.
VoteResult ensemble_vote(std::span<const SelectionResult> results, int column_count, double quorum_fraction = 0.5);

/// At most `limit` of the voted indices: highest tally first, ties in column order. Result ascending.
std::vector<int> cap_vote(const VoteResult& vote, int limit);

struct CascadeOptions {
    double prune_threshold = 0.99;
    double cardinality_threshold = 0.90;
    double final_threshold = 0.90;
    double quorum_fraction = 0.5;
    bool cap_to_cardinality = true;  ///< keep N_T3 <= N_T2 when the quorum set is larger
    SelectorOptions selectors;
};

struct FeatureCascade {
    StackedFeatureMatrix f4;
    Cardinality cardinality;
    std::vector<SelectorOutcome> selectors;
    VoteResult vote;
    bool vote_capped = false;
    StackedFeatureMatrix f5;
    PruneResult final_prune;

    const StackedFeatureMatrix& f_star() const noexcept { return final_prune.matrix; }
    /// N_T, N_T1, N_T2, N_T3, N_L
    std::array<int, 5> widths(int n_t) const;
};

FeatureCascade run_cascade(const StackedFeatureMatrix& f3, const CascadeOptions& opts = {});

nlohmann::json selection_report(const FeatureCascade& cascade, int n_t);

}  // namespace scefis
