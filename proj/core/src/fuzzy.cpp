#include "scefis/fuzzy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <spdlog/spdlog.h>

#include "scefis/features.hpp"

namespace scefis {

void TrainingStore::append(const Matrix& new_inputs, const Eigen::VectorXd& new_outputs, std::span<const int> rows) {
    if (new_inputs.rows() != new_outputs.size()) throw std::invalid_argument("inputs and outputs are not row-aligned");
    if (!empty() && new_inputs.cols() != dimension()) throw std::invalid_argument("input dimension mismatch");
    const Eigen::Index old = size();
    const auto add = static_cast<Eigen::Index>(rows.size());
    Matrix m(old + add, new_inputs.cols());
    Eigen::VectorXd o(old + add);
    if (old > 0) {
        m.topRows(old) = inputs;
        o.head(old) = outputs;
    }
    for (Eigen::Index i = 0; i < add; ++i) {
        m.row(old + i) = new_inputs.row(rows[static_cast<std::size_t>(i)]);
        o[old + i] = new_outputs[rows[static_cast<std::size_t>(i)]];
    }
    inputs = std::move(m);
    outputs = std::move(o);
}

void TrainingStore::append(const Matrix& new_inputs, const Eigen::VectorXd& new_outputs) {
    std::vector<int> all(static_cast<std::size_t>(new_inputs.rows()));
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
    append(new_inputs, new_outputs, all);
}

Matrix unit_normalize(const Matrix& x) {
    Matrix out(x.rows(), x.cols());
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
        const double lo = x.col(c).minCoeff();
        const double range = x.col(c).maxCoeff() - lo;
        if (range > 0) {
            out.col(c) = (x.col(c).array() - lo) / range;
        } else {
            out.col(c).setZero();
        }
    }
    return out;
}

std::vector<int> subtractive_clustering(const Matrix& z, const FuzzyOptions& opts) {
    if (!(opts.radius > 0 && opts.radius <= 1)) throw std::invalid_argument("cluster radius must lie in (0,1]");
    const Eigen::Index n = z.rows();
    const double alpha = 4.0 / (opts.radius * opts.radius);
    const double rb = opts.squash * opts.radius;
    const double beta = 4.0 / (rb * rb);

    Matrix d2(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) d2(i, j) = (z.row(i) - z.row(j)).squaredNorm();
    if (opts.dimension_scaled && z.cols() > 0) d2 /= static_cast<double>(z.cols());

    Eigen::VectorXd potential(n);
    for (Eigen::Index i = 0; i < n; ++i) potential[i] = (-alpha * d2.row(i).array()).exp().sum();

    std::vector<int> centers;
    double first = 0.0;
    while (true) {
        Eigen::Index cand = 0;
        const double p = potential.maxCoeff(&cand);
        if (!(p > 0)) break;
        if (centers.empty()) {
            first = p;
        } else if (p < opts.reject_ratio * first) {
            break;
        } else if (p < opts.accept_ratio * first) {
            double dmin = std::numeric_limits<double>::infinity();
            for (int c : centers) dmin = std::min(dmin, std::sqrt(d2(cand, c)));
            if (dmin / opts.radius + p / first < 1.0) {
                potential[cand] = 0.0;
                continue;
            }
        }
        centers.push_back(static_cast<int>(cand));
        for (Eigen::Index i = 0; i < n; ++i) potential[i] -= p * std::exp(-beta * d2(i, cand));
        potential[cand] = 0.0;
    }
    return centers;
}

RuleBase generate_rules(const TrainingStore& store, const FuzzyOptions& opts) {
    if (store.empty()) throw std::invalid_argument("generate_rules needs at least one training row");
    const Eigen::Index n = store.size();
    const Eigen::Index dim = store.dimension();

    Matrix joint(n, dim + 1);
    joint.leftCols(dim) = store.inputs;
    joint.col(dim) = store.outputs;
    const auto centers = subtractive_clustering(unit_normalize(joint), opts);

    Eigen::VectorXd lo(dim), range(dim);
    for (Eigen::Index d = 0; d < dim; ++d) {
        lo[d] = store.inputs.col(d).minCoeff();
        range[d] = store.inputs.col(d).maxCoeff() - lo[d];
    }

    RuleBase rb;
    rb.dimension = static_cast<int>(dim);
    rb.training_rows = static_cast<int>(n);
    for (int c : centers) {
        TSRule r;
        r.center = store.inputs.row(c).transpose();
        r.width.resize(dim);
        const double ws = opts.dimension_scaled ? std::sqrt(static_cast<double>(dim + 1)) : 1.0;
        for (Eigen::Index d = 0; d < dim; ++d) r.width[d] = range[d] > 0 ? ws * opts.radius * range[d] / std::sqrt(8.0) : 1.0;
        rb.rules.push_back(std::move(r));
    }

    // Global least squares over normalized-firing-weighted regressors, fitted in
    // unit-normalized input coordinates and mapped back to raw coefficients.
    const auto rcount = static_cast<Eigen::Index>(rb.rules.size());
    const Eigen::Index block = dim + 1;
    Matrix unit(n, dim);
    for (Eigen::Index d = 0; d < dim; ++d) {
        unit.col(d) = range[d] > 0 ? Eigen::VectorXd((store.inputs.col(d).array() - lo[d]) / range[d])
                                   : Eigen::VectorXd::Zero(n);
    }
    Matrix design(n, rcount * block);
    for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::VectorXd logw(rcount);
        for (Eigen::Index r = 0; r < rcount; ++r) {
            const auto& rule = rb.rules[static_cast<std::size_t>(r)];
            logw[r] = -0.5 * ((store.inputs.row(i).transpose() - rule.center).array() / rule.width.array()).square().sum();
        }
        const Eigen::VectorXd w = (logw.array() - logw.maxCoeff()).exp();
        const Eigen::VectorXd wn = w / w.sum();
        for (Eigen::Index r = 0; r < rcount; ++r) {
            design.block(i, r * block, 1, dim) = wn[r] * unit.row(i);
            design(i, r * block + dim) = wn[r];
        }
    }

    Eigen::VectorXd theta;
    bool solved = false;
    if (design.cols() <= n) {
        Eigen::CompleteOrthogonalDecomposition<Matrix> cod(design);
        if (cod.rank() == design.cols()) {
            theta = cod.solve(store.outputs);
            solved = true;
        }
    }
    if (!solved) {
        // Slope-only ridge. Slopes are eliminated through the n x n kernel
        // K = As As^T + ridge I, leaving a whitened least-squares problem in the biases.
        rb.regularized = true;
        Matrix slopes(n, rcount * dim), biases(n, rcount);
        for (Eigen::Index r = 0; r < rcount; ++r) {
            slopes.middleCols(r * dim, dim) = design.middleCols(r * block, dim);
            biases.col(r) = design.col(r * block + dim);
        }
        Matrix k = slopes * slopes.transpose();
        k.diagonal().array() += opts.ridge;
        const Eigen::LLT<Matrix> llt(k);
        const Matrix wb = llt.matrixL().solve(biases);
        const Eigen::VectorXd wy = llt.matrixL().solve(store.outputs);
        const Eigen::VectorXd b = wb.completeOrthogonalDecomposition().solve(wy);
        const Eigen::VectorXd s = slopes.transpose() * llt.solve(store.outputs - biases * b);
        theta.resize(design.cols());
        for (Eigen::Index r = 0; r < rcount; ++r) {
            theta.segment(r * block, dim) = s.segment(r * dim, dim);
            theta[r * block + dim] = b[r];
        }
    }

    for (Eigen::Index r = 0; r < rcount; ++r) {
        auto& rule = rb.rules[static_cast<std::size_t>(r)];
        rule.coefficients.resize(dim);
        double bias = theta[r * block + dim];
        for (Eigen::Index d = 0; d < dim; ++d) {
            const double t = theta[r * block + d];
            rule.coefficients[d] = range[d] > 0 ? t / range[d] : 0.0;
            if (range[d] > 0) bias -= t * lo[d] / range[d];
        }
        rule.bias = bias;
    }
    return rb;
}

Inference infer(const RuleBase& rb, const Eigen::Ref<const Eigen::VectorXd>& x) {
    if (x.size() != rb.dimension) throw std::invalid_argument("inference input dimension mismatch");
    if (rb.rules.empty()) throw std::invalid_argument("inference on an empty rule base");
    double total = 0, acc = 0;
    double best_log = -std::numeric_limits<double>::infinity();
    std::size_t nearest = 0;
    for (std::size_t r = 0; r < rb.rules.size(); ++r) {
        const auto& rule = rb.rules[r];
        const double logw = -0.5 * ((x - rule.center).array() / rule.width.array()).square().sum();
        if (logw > best_log) {
            best_log = logw;
            nearest = r;
        }
        const double w = std::exp(logw);
        total += w;
        acc += w * rule.consequent(x);
    }
    if (total < 1e-12) return {rb.rules[nearest].consequent(x), true};
    return {acc / total, false};
}

std::vector<double> infer_block(const RuleBase& rb, const Matrix& rows) {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(rows.rows()));
    for (Eigen::Index i = 0; i < rows.rows(); ++i) out.push_back(infer(rb, rows.row(i).transpose()).value);
    return out;
}

double zmf(double x, double a, double b) {
    if (!(a < b)) throw std::invalid_argument("zmf requires a < b");
    if (x <= a) return 1.0;
    if (x >= b) return 0.0;
    const double mid = 0.5 * (a + b);
    if (x <= mid) {
        const double r = (x - a) / (b - a);
        return 1.0 - 2.0 * r * r;
    }
    const double r = (x - b) / (b - a);
    return 2.0 * r * r;
}

Fusion fuse_output(std::span<const double> outputs) {
    if (outputs.empty()) throw std::invalid_argument("fuse_output of empty vector");
    Fusion f;
    double sum = 0;
    for (double v : outputs) sum += v;
    f.mean = sum / static_cast<double>(outputs.size());
    f.median = median(std::vector<double>(outputs.begin(), outputs.end()));
    f.stddev = sample_stddev(outputs);
    if (f.mean > 0) {
        f.membership = zmf(f.stddev, 0.10 * f.mean, 0.20 * f.mean);
    } else {
        f.membership = 1.0;
        f.nonpositive_mean = true;
    }
    const double m = f.membership;
    const double raw = m * f.mean + (1.0 - m) * f.median;
    f.unclamped = std::clamp(raw, std::min(f.mean, f.median), std::max(f.mean, f.median));
    f.t_star = std::clamp(f.unclamped, 0.0, 255.0);
    return f;
}

std::vector<int> prune_rows(const Matrix& inputs, const Eigen::VectorXd& outputs, const TrainingStore& store,
                            double d_min) {
    if (inputs.rows() != outputs.size()) throw std::invalid_argument("inputs and outputs are not row-aligned");
    std::vector<int> kept;
    if (store.empty()) {
        for (Eigen::Index i = 0; i < inputs.rows(); ++i) kept.push_back(static_cast<int>(i));
        return kept;
    }
    if (inputs.cols() != store.dimension()) throw std::invalid_argument("candidate dimension does not match store");

    const Eigen::Index dim = store.dimension();
    Matrix joint(store.size(), dim + 1);
    joint.leftCols(dim) = store.inputs;
    joint.col(dim) = store.outputs;
    const Eigen::RowVectorXd mean = joint.colwise().mean();
    Eigen::RowVectorXd sd(dim + 1);
    for (Eigen::Index c = 0; c <= dim; ++c) {
        const double ss = (joint.col(c).array() - mean[c]).square().sum();
        const double s = store.size() > 1 ? std::sqrt(ss / static_cast<double>(store.size() - 1)) : 0.0;
        sd[c] = s > 0 ? s : 1.0;
    }
    auto normalize = [&](const Eigen::RowVectorXd& row) -> Eigen::RowVectorXd {
        return (row - mean).cwiseQuotient(sd);
    };

    std::vector<Eigen::RowVectorXd> reference;
    reference.reserve(static_cast<std::size_t>(store.size() + inputs.rows()));
    for (Eigen::Index i = 0; i < store.size(); ++i) reference.push_back(normalize(joint.row(i)));

    for (Eigen::Index i = 0; i < inputs.rows(); ++i) {
        Eigen::RowVectorXd cand(dim + 1);
        cand.head(dim) = inputs.row(i);
        cand[dim] = outputs[i];
        const Eigen::RowVectorXd z = normalize(cand);
        const bool novel = std::all_of(reference.begin(), reference.end(),
                                       [&](const Eigen::RowVectorXd& r) { return (r - z).norm() >= d_min; });
        if (novel) {
            kept.push_back(static_cast<int>(i));
            reference.push_back(z);
        }
    }
    return kept;
}

Evolution evolve(const RuleBase& rb, const TrainingStore& store, const Matrix& inputs, double best_threshold,
                 const FuzzyOptions& opts) {
    if (best_threshold < 0 || best_threshold > 255) throw std::out_of_range("best threshold outside [0,255]");
    const Eigen::VectorXd outputs = Eigen::VectorXd::Constant(inputs.rows(), best_threshold);
    Evolution ev;
    ev.kept = prune_rows(inputs, outputs, store, opts.prune_distance);
    ev.store = store;
    if (ev.kept.empty()) {
        ev.rules = rb;
        ev.rules.no_op = true;
    } else {
        ev.store.append(inputs, outputs, ev.kept);
        ev.rules = generate_rules(ev.store, opts);
    }
    ev.rules.version = rb.version + 1;
    return ev;
}

nlohmann::json to_json(const RuleBase& rb) {
    nlohmann::json rules = nlohmann::json::array();
    for (const auto& r : rb.rules) {
        rules.push_back({{"center", std::vector<double>(r.center.begin(), r.center.end())},
                         {"width", std::vector<double>(r.width.begin(), r.width.end())},
                         {"coefficients", std::vector<double>(r.coefficients.begin(), r.coefficients.end())},
                         {"bias", r.bias}});
    }
    return {{"format", "scefis-rulebase"},
            {"format_version", 1},
            {"version", rb.version},
            {"dimension", rb.dimension},
            {"training_rows", rb.training_rows},
            {"regularized", rb.regularized},
            {"no_op", rb.no_op},
            {"rules", rules}};
}

RuleBase rule_base_from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "scefis-rulebase") throw std::invalid_argument("not a rule base document");
    RuleBase rb;
    rb.version = j.at("version").get<int>();
    rb.dimension = j.at("dimension").get<int>();
    rb.training_rows = j.at("training_rows").get<int>();
    rb.regularized = j.value("regularized", false);
    rb.no_op = j.value("no_op", false);
    auto vec = [](const nlohmann::json& a) {
        const auto v = a.get<std::vector<double>>();
        return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
    };
    for (const auto& r : j.at("rules")) {
        TSRule rule{vec(r.at("center")), vec(r.at("width")), vec(r.at("coefficients")), r.at("bias").get<double>()};
        if (rule.center.size() != rb.dimension || rule.width.size() != rb.dimension ||
            rule.coefficients.size() != rb.dimension) {
            throw std::invalid_argument("rule dimension does not match rule base");
        }
        if ((rule.width.array() <= 0).any()) throw std::invalid_argument("rule widths must be positive");
        rb.rules.push_back(std::move(rule));
    }
    return rb;
}

}  // namespace scefis
