#include "scefis/selection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include <spdlog/spdlog.h>

namespace scefis {

StackedFeatureMatrix StackedFeatureMatrix::select_columns(std::span<const int> indices) const {
    StackedFeatureMatrix out;
    out.rows = rows;
    out.values.resize(values.rows(), static_cast<Eigen::Index>(indices.size()));
    for (std::size_t i = 0; i < indices.size(); ++i) {
        out.values.col(static_cast<Eigen::Index>(i)) = values.col(indices[i]);
        out.columns.push_back(columns[static_cast<std::size_t>(indices[i])]);
    }
    return out;
}

Matrix StackedFeatureMatrix::image_rows(const std::string& image_id) const {
    std::vector<Eigen::Index> idx;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].image_id == image_id) idx.push_back(static_cast<Eigen::Index>(r));
    }
    Matrix out(static_cast<Eigen::Index>(idx.size()), values.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = values.row(idx[i]);
    return out;
}

std::vector<std::string> StackedFeatureMatrix::image_ids() const {
    std::vector<std::string> ids;
    for (const auto& r : rows) {
        if (std::find(ids.begin(), ids.end(), r.image_id) == ids.end()) ids.push_back(r.image_id);
    }
    return ids;
}

double pearson(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b) {
    const Eigen::VectorXd ca = a.array() - a.mean();
    const Eigen::VectorXd cb = b.array() - b.mean();
    const double den = ca.norm() * cb.norm();
    if (den <= 0) return 0.0;
    return std::clamp(ca.dot(cb) / den, -1.0, 1.0);
}

PruneResult correlation_prune(const StackedFeatureMatrix& f, double threshold) {
    if (!(threshold > 0.0 && threshold <= 1.0)) throw std::invalid_argument("correlation threshold must lie in (0,1]");
    if (f.column_count() == 0 || f.row_count() == 0) throw std::invalid_argument("correlation_prune of empty matrix");
    PruneResult out;
    std::vector<int> candidates;
    for (Eigen::Index c = 0; c < f.column_count(); ++c) {
        const auto col = f.values.col(c);
        if (col.maxCoeff() == col.minCoeff()) {
            out.dropped_constant.push_back(static_cast<int>(c));
        } else {
            candidates.push_back(static_cast<int>(c));
        }
    }
    if (candidates.empty()) throw NoInformativeFeatures("no informative features: every column is constant");
    if (!out.dropped_constant.empty()) {
        spdlog::debug("correlation_prune: dropped {} constant columns", out.dropped_constant.size());
    }
    for (int c : candidates) {
        const bool redundant = std::any_of(out.kept.begin(), out.kept.end(), [&](int k) {
            return std::abs(pearson(f.values.col(c), f.values.col(k))) >= threshold;
        });
        if (!redundant) out.kept.push_back(c);
    }
    out.matrix = f.select_columns(out.kept);
    return out;
}

Cardinality determine_cardinality(const StackedFeatureMatrix& f4, double threshold) {
    Cardinality c;
    c.fc = correlation_prune(f4, threshold);
    c.count = static_cast<int>(c.fc.kept.size());
    return c;
}

char method_tag(SelectionMethod m) noexcept {
    switch (m) {
        case SelectionMethod::Correlation: return 'C';
        case SelectionMethod::Spectral: return 'P';
        case SelectionMethod::MultiCluster: return 'M';
        case SelectionMethod::FeatureSimilarity: return 'F';
        case SelectionMethod::Greedy: return 'G';
        case SelectionMethod::Laplacian: return 'L';
    }
    return '?';
}

std::string method_name(SelectionMethod m) {
    switch (m) {
        case SelectionMethod::Correlation: return "correlation";
        case SelectionMethod::Spectral: return "spectral";
        case SelectionMethod::MultiCluster: return "multi-cluster";
        case SelectionMethod::FeatureSimilarity: return "feature-similarity";
        case SelectionMethod::Greedy: return "greedy";
        case SelectionMethod::Laplacian: return "laplacian";
    }
    return "unknown";
}

Matrix standardize_columns(const Matrix& x) {
    Matrix z(x.rows(), x.cols());
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
        const double mean = x.col(c).mean();
        const Eigen::VectorXd centered = x.col(c).array() - mean;
        const double sd = x.rows() > 1 ? std::sqrt(centered.squaredNorm() / static_cast<double>(x.rows() - 1)) : 0.0;
        z.col(c) = sd > 0 ? Eigen::VectorXd(centered / sd) : Eigen::VectorXd::Zero(x.rows());
    }
    return z;
}

namespace {

Matrix squared_distances(const Matrix& x) {
    const Eigen::VectorXd sq = x.rowwise().squaredNorm();
    Matrix d = (-2.0 * x * x.transpose()).colwise() + sq;
    d.rowwise() += sq.transpose();
    return d.cwiseMax(0.0);
}

void check_inputs(const Matrix& x, int k) {
    if (x.rows() < 2) throw std::invalid_argument("feature selection needs at least 2 rows");
    if (k < 1 || k > x.cols()) throw std::invalid_argument("selection size k must lie in [1, column count]");
}

// Indices of the k best scores; ties resolve to the smaller index.
std::vector<int> top_k(const std::vector<double>& scores, int k, bool ascending) {
    std::vector<int> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        const double sa = scores[static_cast<std::size_t>(a)], sb = scores[static_cast<std::size_t>(b)];
        return ascending ? sa < sb : sa > sb;
    });
    order.resize(static_cast<std::size_t>(k));
    std::sort(order.begin(), order.end());
    return order;
}

}  // namespace

double mean_pairwise_distance(const Matrix& x) {
    const Matrix d2 = squared_distances(x);
    double sum = 0;
    std::size_t n = 0;
    for (Eigen::Index i = 0; i < x.rows(); ++i)
        for (Eigen::Index j = i + 1; j < x.rows(); ++j) {
            sum += std::sqrt(d2(i, j));
            ++n;
        }
    return n ? sum / static_cast<double>(n) : 0.0;
}

Matrix knn_heat_graph(const Matrix& x, int neighbors, double sigma) {
    const Eigen::Index n = x.rows();
    const Matrix d2 = squared_distances(x);
    Matrix w = Matrix::Zero(n, n);
    const int kk = std::min<int>(neighbors, static_cast<int>(n - 1));
    for (Eigen::Index i = 0; i < n; ++i) {
        std::vector<Eigen::Index> others;
        for (Eigen::Index j = 0; j < n; ++j)
            if (j != i) others.push_back(j);
        std::stable_sort(others.begin(), others.end(), [&](Eigen::Index a, Eigen::Index b) { return d2(i, a) < d2(i, b); });
        for (int t = 0; t < kk; ++t) {
            const auto j = others[static_cast<std::size_t>(t)];
            const double v = std::exp(-d2(i, j) / (2.0 * sigma * sigma));
            w(i, j) = v;
            w(j, i) = v;
        }
    }
    return w;
}

std::vector<double> laplacian_scores(const Matrix& x, const SelectorOptions& opts) {
    const Matrix z = standardize_columns(x);
    const double sigma = mean_pairwise_distance(z);
    if (!(sigma > 0)) throw SelectionFailure("laplacian score: all rows coincide");
    const Matrix s = knn_heat_graph(z, opts.neighbors, sigma);
    const Eigen::VectorXd deg = s.rowwise().sum();
    const double vol = deg.sum();
    std::vector<double> scores(static_cast<std::size_t>(z.cols()));
    for (Eigen::Index c = 0; c < z.cols(); ++c) {
        const Eigen::VectorXd f = z.col(c);
        const Eigen::VectorXd ft = f.array() - f.dot(deg) / vol;
        const double dff = ft.dot(deg.asDiagonal() * ft);
        const double sff = ft.dot(s * ft);
        scores[static_cast<std::size_t>(c)] =
            dff > 1e-12 ? (dff - sff) / dff : std::numeric_limits<double>::infinity();
    }
    return scores;
}

std::vector<double> spectral_scores(const Matrix& x) {
    const Matrix z = standardize_columns(x);
    const double sigma = mean_pairwise_distance(z);
    if (!(sigma > 0)) throw SelectionFailure("spectral ranking: all rows coincide");
    Matrix w = (-squared_distances(z) / (2.0 * sigma * sigma)).array().exp();
    w.diagonal().setZero();
    const Eigen::VectorXd deg = w.rowwise().sum();
    if ((deg.array() <= 0).any()) throw SelectionFailure("spectral ranking: isolated sample");
    const Eigen::VectorXd dh = deg.array().sqrt();
    const Eigen::VectorXd dih = dh.cwiseInverse();
    const Matrix lnorm = Matrix::Identity(w.rows(), w.cols()) - dih.asDiagonal() * w * dih.asDiagonal();
    const Eigen::VectorXd xi0 = dh / dh.norm();
    std::vector<double> scores(static_cast<std::size_t>(z.cols()));
    for (Eigen::Index c = 0; c < z.cols(); ++c) {
        Eigen::VectorXd fh = dh.cwiseProduct(z.col(c));
        const double nrm = fh.norm();
        if (nrm <= 0) {
            scores[static_cast<std::size_t>(c)] = std::numeric_limits<double>::infinity();
            continue;
        }
        fh /= nrm;
        const double align = fh.dot(xi0);
        const double den = 1.0 - align * align;
        scores[static_cast<std::size_t>(c)] =
            den > 1e-12 ? fh.dot(lnorm * fh) / den : std::numeric_limits<double>::infinity();
    }
    return scores;
}

namespace {

// Coordinate-descent lasso along a decreasing penalty path; stops at the first
// penalty whose solution has at least `cardinality` nonzeros.
Eigen::VectorXd lasso_path(const Matrix& x, const Eigen::VectorXd& y, int cardinality) {
    const Eigen::Index p = x.cols();
    const Eigen::VectorXd col_sq = x.colwise().squaredNorm();
    const double lambda_max = (x.transpose() * y).cwiseAbs().maxCoeff();
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
    if (lambda_max <= 0) return beta;
    Eigen::VectorXd resid = y;
    constexpr int kSteps = 60;
    for (int step = 1; step <= kSteps; ++step) {
        const double lambda = lambda_max * std::pow(1e-4, static_cast<double>(step) / kSteps);
        for (int sweep = 0; sweep < 500; ++sweep) {
            double max_delta = 0;
            for (Eigen::Index j = 0; j < p; ++j) {
                if (col_sq[j] <= 0) continue;
                const double rho = x.col(j).dot(resid) + col_sq[j] * beta[j];
                const double updated = std::copysign(std::max(std::abs(rho) - lambda, 0.0), rho) / col_sq[j];
                const double delta = updated - beta[j];
                if (delta != 0) {
                    resid -= delta * x.col(j);
                    beta[j] = updated;
                    max_delta = std::max(max_delta, std::abs(delta));
                }
            }
            if (max_delta < 1e-10) break;
        }
        if ((beta.array() != 0).count() >= cardinality) break;
    }
    return beta;
}

}  // namespace

std::vector<double> mcfs_scores(const Matrix& x, int k, const SelectorOptions& opts) {
    const Matrix z = standardize_columns(x);
    const double sigma = mean_pairwise_distance(z);
    if (!(sigma > 0)) throw SelectionFailure("multi-cluster: all rows coincide");
    const Matrix w = knn_heat_graph(z, opts.neighbors, sigma);
    const Eigen::VectorXd deg = w.rowwise().sum();
    if ((deg.array() <= 0).any()) throw SelectionFailure("multi-cluster: isolated sample in neighbor graph");
    const Matrix d = deg.asDiagonal();
    const Matrix lap = d - w;
    Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> es(lap, d);
    if (es.info() != Eigen::Success) throw SelectionFailure("multi-cluster: generalized eigensolve did not converge");
    const int clusters = std::min<int>(opts.clusters, static_cast<int>(z.rows() - 1));
    std::vector<double> scores(static_cast<std::size_t>(z.cols()), 0.0);
    for (int e = 1; e <= clusters; ++e) {
        Eigen::VectorXd y = es.eigenvectors().col(e);
        // Sign convention: largest-magnitude entry positive.
        Eigen::Index arg = 0;
        y.cwiseAbs().maxCoeff(&arg);
        if (y[arg] < 0) y = -y;
        const Eigen::VectorXd coef = lasso_path(z, y, k);
        for (Eigen::Index c = 0; c < z.cols(); ++c) {
            scores[static_cast<std::size_t>(c)] = std::max(scores[static_cast<std::size_t>(c)], std::abs(coef[c]));
        }
    }
    return scores;
}

double mici(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b) {
    const auto n = static_cast<double>(a.size());
    const Eigen::VectorXd ca = a.array() - a.mean();
    const Eigen::VectorXd cb = b.array() - b.mean();
    const double denom = n > 1 ? n - 1 : 1.0;
    const double vx = ca.squaredNorm() / denom;
    const double vy = cb.squaredNorm() / denom;
    const double cxy = ca.dot(cb) / denom;
    const double sum = vx + vy;
    const double disc = std::max(0.0, sum * sum - 4.0 * (vx * vy - cxy * cxy));
    return std::max(0.0, 0.5 * (sum - std::sqrt(disc)));
}

SelectionResult fs_laplacian(const Matrix& f4, int k, const SelectorOptions& opts) {
    check_inputs(f4, k);
    return {SelectionMethod::Laplacian, top_k(laplacian_scores(f4, opts), k, true)};
}

SelectionResult fs_spectral(const Matrix& f4, int k) {
    check_inputs(f4, k);
    return {SelectionMethod::Spectral, top_k(spectral_scores(f4), k, true)};
}

SelectionResult fs_mcfs(const Matrix& f4, int k, const SelectorOptions& opts) {
    check_inputs(f4, k);
    return {SelectionMethod::MultiCluster, top_k(mcfs_scores(f4, k, opts), k, false)};
}

SelectionResult fs_feature_similarity(const Matrix& f4, int k) {
    check_inputs(f4, k);
    const Matrix z = standardize_columns(f4);
    const auto n = static_cast<std::size_t>(z.cols());
    Matrix dis(z.cols(), z.cols());
    for (Eigen::Index i = 0; i < z.cols(); ++i)
        for (Eigen::Index j = 0; j < z.cols(); ++j) dis(i, j) = i == j ? 0.0 : mici(z.col(i), z.col(j));

    // Average-linkage agglomeration down to k clusters.
    std::vector<std::vector<int>> clusters(n);
    for (std::size_t i = 0; i < n; ++i) clusters[i] = {static_cast<int>(i)};
    auto linkage = [&](const std::vector<int>& a, const std::vector<int>& b) {
        double s = 0;
        for (int i : a)
            for (int j : b) s += dis(i, j);
        return s / static_cast<double>(a.size() * b.size());
    };
    while (clusters.size() > static_cast<std::size_t>(k)) {
        std::size_t bi = 0, bj = 1;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < clusters.size(); ++i)
            for (std::size_t j = i + 1; j < clusters.size(); ++j) {
                const double l = linkage(clusters[i], clusters[j]);
                if (l < best) {
                    best = l;
                    bi = i;
                    bj = j;
                }
            }
        clusters[bi].insert(clusters[bi].end(), clusters[bj].begin(), clusters[bj].end());
        clusters.erase(clusters.begin() + static_cast<std::ptrdiff_t>(bj));
    }

    SelectionResult out{SelectionMethod::FeatureSimilarity, {}};
    for (auto& c : clusters) {
        std::sort(c.begin(), c.end());
        int rep = c.front();
        double best = std::numeric_limits<double>::infinity();
        for (int i : c) {
            double s = 0;
            for (int j : c) s += dis(i, j);
            if (s < best) {
                best = s;
                rep = i;
            }
        }
        out.indices.push_back(rep);
    }
    std::sort(out.indices.begin(), out.indices.end());
    return out;
}

std::vector<int> greedy_order(const Matrix& f4, int k) {
    check_inputs(f4, k);
    Matrix e = standardize_columns(f4);
    const double scale = std::max(1.0, e.squaredNorm());
    std::vector<int> order;
    std::vector<bool> taken(static_cast<std::size_t>(e.cols()), false);
    for (int step = 0; step < k; ++step) {
        int best = -1;
        double best_gain = -1.0;
        for (Eigen::Index i = 0; i < e.cols(); ++i) {
            if (taken[static_cast<std::size_t>(i)]) continue;
            const double nn = e.col(i).squaredNorm();
            const double gain = nn > 1e-12 * scale ? (e.transpose() * e.col(i)).squaredNorm() / nn : 0.0;
            if (gain > best_gain) {
                best_gain = gain;
                best = static_cast<int>(i);
            }
        }
        taken[static_cast<std::size_t>(best)] = true;
        order.push_back(best);
        const Eigen::VectorXd col = e.col(best);
        const double nn = col.squaredNorm();
        if (nn > 1e-12 * scale) e -= col * (col.transpose() * e) / nn;
    }
    return order;
}

SelectionResult fs_greedy(const Matrix& f4, int k) {
    auto order = greedy_order(f4, k);
    std::sort(order.begin(), order.end());
    return {SelectionMethod::Greedy, order};
}

std::vector<SelectorOutcome> run_selectors(const Matrix& f4, int k, const SelectorOptions& opts) {
    std::vector<SelectorOutcome> out;
    auto attempt = [&](SelectionMethod m, auto&& fn) {
        SelectorOutcome o{m, std::nullopt, {}};
        try {
            o.result = fn();
        } catch (const SelectionFailure& e) {
            o.error = e.what();
            spdlog::warn("feature selector '{}' excluded from vote: {}", method_name(m), e.what());
        }
        out.push_back(std::move(o));
    };
    attempt(SelectionMethod::Spectral, [&] { return fs_spectral(f4, k); });
    attempt(SelectionMethod::MultiCluster, [&] { return fs_mcfs(f4, k, opts); });
    attempt(SelectionMethod::FeatureSimilarity, [&] { return fs_feature_similarity(f4, k); });
    attempt(SelectionMethod::Greedy, [&] { return fs_greedy(f4, k); });
    attempt(SelectionMethod::Laplacian, [&] { return fs_laplacian(f4, k, opts); });
    return out;
}

VoteResult ensemble_vote(std::span<const SelectionResult> results, int column_count, double quorum_fraction) {
    if (results.empty()) throw std::invalid_argument("ensemble_vote needs at least one active result");
    if (!(quorum_fraction > 0.0 && quorum_fraction <= 1.0)) throw std::invalid_argument("quorum fraction must lie in (0,1]");
    VoteResult v;
    v.active = static_cast<int>(results.size());
    v.quorum = std::max(1, static_cast<int>(std::ceil(quorum_fraction * v.active - 1e-9)));
    v.tally.assign(static_cast<std::size_t>(column_count), 0);
    for (const auto& r : results) {
        std::vector<int> uniq = r.indices;
        std::sort(uniq.begin(), uniq.end());
        uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
        for (int i : uniq) {
            if (i < 0 || i >= column_count) throw std::out_of_range("vote index outside column range");
            ++v.tally[static_cast<std::size_t>(i)];
        }
    }
    for (int c = 0; c < column_count; ++c) {
        if (v.tally[static_cast<std::size_t>(c)] >= v.quorum) v.indices.push_back(c);
    }
    if (v.indices.empty()) {
        const auto fc = std::find_if(results.begin(), results.end(),
                                     [](const SelectionResult& r) { return r.method == SelectionMethod::Correlation; });
        if (fc != results.end()) {
            v.indices = fc->indices;
            std::sort(v.indices.begin(), v.indices.end());
        }
        v.fallback = true;
        spdlog::warn("ensemble vote produced no feature; falling back to the correlation selection");
    }
    return v;
}

std::vector<int> cap_vote(const VoteResult& vote, int limit) {
    if (limit < 0) throw std::invalid_argument("vote cap must be non-negative");
    if (static_cast<int>(vote.indices.size()) <= limit) return vote.indices;
    std::vector<int> order = vote.indices;
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return vote.tally[static_cast<std::size_t>(a)] > vote.tally[static_cast<std::size_t>(b)];
    });
    order.resize(static_cast<std::size_t>(limit));
    std::sort(order.begin(), order.end());
    return order;
}

std::array<int, 5> FeatureCascade::widths(int n_t) const {
    return {n_t, static_cast<int>(f4.column_count()), cardinality.count, static_cast<int>(f5.column_count()),
            static_cast<int>(f_star().column_count())};
}

FeatureCascade run_cascade(const StackedFeatureMatrix& f3, const CascadeOptions& opts) {
    FeatureCascade c;
    c.f4 = correlation_prune(f3, opts.prune_threshold).matrix;
    c.cardinality = determine_cardinality(c.f4, opts.cardinality_threshold);
    c.selectors = run_selectors(c.f4.values, c.cardinality.count, opts.selectors);

    std::vector<SelectionResult> active;
    active.push_back({SelectionMethod::Correlation, c.cardinality.fc.kept});
    for (const auto& o : c.selectors) {
        if (o.result) active.push_back(*o.result);
    }
    c.vote = ensemble_vote(active, static_cast<int>(c.f4.column_count()), opts.quorum_fraction);
    auto f5_indices = c.vote.indices;
    if (opts.cap_to_cardinality && !c.vote.fallback) {
        f5_indices = cap_vote(c.vote, c.cardinality.count);
        c.vote_capped = f5_indices.size() < c.vote.indices.size();
        if (c.vote_capped) {
            spdlog::info("vote kept {} columns; capped to the {} highest-tally columns", c.vote.indices.size(),
                         f5_indices.size());
        }
    }
    c.f5 = c.f4.select_columns(f5_indices);
    c.final_prune = correlation_prune(c.f5, opts.final_threshold);
    return c;
}

nlohmann::json selection_report(const FeatureCascade& cascade, int n_t) {
    nlohmann::json j;
    const auto w = cascade.widths(n_t);
    j["widths"] = {{"N_T", w[0]}, {"N_T1", w[1]}, {"N_T2", w[2]}, {"N_T3", w[3]}, {"N_L", w[4]}};
    j["f4_columns"] = cascade.f4.columns;
    nlohmann::json methods = nlohmann::json::object();
    methods[std::string(1, method_tag(SelectionMethod::Correlation))] = {
        {"name", method_name(SelectionMethod::Correlation)}, {"indices", cascade.cardinality.fc.kept}};
    for (const auto& o : cascade.selectors) {
        nlohmann::json m = {{"name", method_name(o.method)}};
        if (o.result) {
            m["indices"] = o.result->indices;
        } else {
            m["failed"] = o.error;
        }
        methods[std::string(1, method_tag(o.method))] = m;
    }
    j["methods"] = methods;
    j["vote"] = {{"tally", cascade.vote.tally},
                 {"quorum", cascade.vote.quorum},
                 {"active", cascade.vote.active},
                 {"fallback", cascade.vote.fallback},
                 {"selected", cascade.vote.indices},
                 {"capped", cascade.vote_capped}};
    j["f5_columns"] = cascade.f5.columns;
    j["f_star_columns"] = cascade.f_star().columns;
    return j;
}

}  // namespace scefis
