#include "scefis/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "scefis/image_io.hpp"
#include "scefis/synthetic.hpp"

namespace scefis {

void ProjectConfig::validate(bool require_directories) const {
    auto unit = [](double v, const char* name) {
        if (!(v > 0.0 && v <= 1.0)) throw std::invalid_argument(std::string(name) + " must lie in (0,1]");
    };
    unit(prune_threshold, "prune_threshold");
    unit(cardinality_threshold, "cardinality_threshold");
    unit(final_threshold, "final_threshold");
    unit(quorum_fraction, "quorum_fraction");
    unit(cluster_radius, "cluster_radius");
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw std::invalid_argument("test_fraction must lie in (0,1)");
    if (folds < 1) throw std::invalid_argument("folds must be positive");
    if (!prune_distance.count(parent)) throw std::invalid_argument("no prune distance configured for parent " + parent);
    for (const auto& [k, v] : prune_distance) {
        if (!(v >= 0.0)) throw std::invalid_argument("prune distance for " + k + " must be non-negative");
    }
    if (niblack.window < 3 || niblack.window % 2 == 0) throw std::invalid_argument("niblack window must be odd and >= 3");
    if (!(tizhoosh.alpha >= 1.0)) throw std::invalid_argument("tizhoosh alpha must be >= 1");
    if (require_directories) {
        if (!std::filesystem::is_directory(image_dir)) throw std::invalid_argument("image directory does not exist: " + image_dir.string());
        if (!std::filesystem::is_directory(gold_dir)) throw std::invalid_argument("gold directory does not exist: " + gold_dir.string());
    }
}

FuzzyOptions ProjectConfig::fuzzy() const {
    FuzzyOptions f;
    f.radius = cluster_radius;
    f.prune_distance = prune_distance.at(parent);
    return f;
}

CascadeOptions ProjectConfig::cascade() const {
    CascadeOptions c;
    c.prune_threshold = prune_threshold;
    c.cardinality_threshold = cardinality_threshold;
    c.final_threshold = final_threshold;
    c.quorum_fraction = quorum_fraction;
    c.cap_to_cardinality = cap_vote;
    c.selectors = selectors;
    return c;
}

nlohmann::json to_json(const ProjectConfig& c) {
    return {{"image_dir", c.image_dir.string()},
            {"gold_dir", c.gold_dir.string()},
            {"prune_threshold", c.prune_threshold},
            {"cardinality_threshold", c.cardinality_threshold},
            {"final_threshold", c.final_threshold},
            {"quorum_fraction", c.quorum_fraction},
            {"cap_vote", c.cap_vote},
            {"cluster_radius", c.cluster_radius},
            {"prune_distance", c.prune_distance},
            {"parent", c.parent},
            {"orientation", std::string(to_string(c.orientation))},
            {"seed", c.seed},
            {"folds", c.folds},
            {"test_fraction", c.test_fraction},
            {"niblack", {{"window", c.niblack.window}, {"k", c.niblack.k}}},
            {"tizhoosh", {{"alpha", c.tizhoosh.alpha}, {"half_width", c.tizhoosh.half_width}}},
            {"detector",
             {{"octaves", c.detector.octaves},
              {"scales_per_octave", c.detector.scales_per_octave},
              {"sigma", c.detector.sigma},
              {"contrast_threshold", c.detector.contrast_threshold},
              {"edge_ratio", c.detector.edge_ratio}}},
            {"selectors", {{"neighbors", c.selectors.neighbors}, {"clusters", c.selectors.clusters}}}};
}

ProjectConfig config_from_json(const nlohmann::json& j) {
    ProjectConfig c;
    c.image_dir = j.value("image_dir", std::string{});
    c.gold_dir = j.value("gold_dir", std::string{});
    c.prune_threshold = j.value("prune_threshold", c.prune_threshold);
    c.cardinality_threshold = j.value("cardinality_threshold", c.cardinality_threshold);
    c.final_threshold = j.value("final_threshold", c.final_threshold);
    c.quorum_fraction = j.value("quorum_fraction", c.quorum_fraction);
    c.cap_vote = j.value("cap_vote", c.cap_vote);
    c.cluster_radius = j.value("cluster_radius", c.cluster_radius);
    if (j.contains("prune_distance")) c.prune_distance = j.at("prune_distance").get<std::map<std::string, double>>();
    c.parent = j.value("parent", c.parent);
    c.orientation = orientation_from_string(j.value("orientation", std::string(to_string(c.orientation))));
    c.seed = j.value("seed", c.seed);
    c.folds = j.value("folds", c.folds);
    c.test_fraction = j.value("test_fraction", c.test_fraction);
    if (j.contains("niblack")) {
        const auto& n = j.at("niblack");
        c.niblack.window = n.value("window", c.niblack.window);
        c.niblack.k = n.value("k", c.niblack.k);
    }
    c.niblack.orientation = c.orientation;
    if (j.contains("tizhoosh")) {
        const auto& t = j.at("tizhoosh");
        c.tizhoosh.alpha = t.value("alpha", c.tizhoosh.alpha);
        c.tizhoosh.half_width = t.value("half_width", c.tizhoosh.half_width);
    }
    if (j.contains("detector")) {
        const auto& d = j.at("detector");
        c.detector.octaves = d.value("octaves", c.detector.octaves);
        c.detector.scales_per_octave = d.value("scales_per_octave", c.detector.scales_per_octave);
        c.detector.sigma = d.value("sigma", c.detector.sigma);
        c.detector.contrast_threshold = d.value("contrast_threshold", c.detector.contrast_threshold);
        c.detector.edge_ratio = d.value("edge_ratio", c.detector.edge_ratio);
    }
    if (j.contains("selectors")) {
        const auto& s = j.at("selectors");
        c.selectors.neighbors = s.value("neighbors", c.selectors.neighbors);
        c.selectors.clusters = s.value("clusters", c.selectors.clusters);
    }
    return c;
}

const GrayImage& Dataset::image(const std::string& id) const {
    const auto it = images.find(id);
    if (it == images.end()) throw std::out_of_range("unknown image id " + id);
    return it->second;
}

Dataset load_dataset(const std::filesystem::path& image_dir, const std::filesystem::path& gold_dir) {
    Dataset ds;
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(image_dir)) {
        const auto ext = e.path().extension().string();
        if (e.is_regular_file() && (ext == ".png" || ext == ".pgm")) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
        const auto id = f.stem().string();
        ds.images.emplace(id, read_image(f));
        ds.ids.push_back(id);
        for (const auto* ext : {".png", ".pgm"}) {
            const auto g = gold_dir / (id + ext);
            if (std::filesystem::exists(g)) {
                auto mask = read_mask(g);
                if (!same_shape(ds.images.at(id), mask)) throw DimensionMismatch("gold mask size differs for " + id);
                ds.gold.emplace(id, std::move(mask));
                break;
            }
        }
    }
    return ds;
}

ImageFeatures image_features(const std::string& id, const GrayImage& img, int z, const DetectorOptions& opts) {
    ImageFeatures out;
    out.id = id;
    auto points = detect_interest_points(img, opts);
    out.detected = static_cast<int>(points.size());
    auto sel = select_seeds(std::move(points), z, img);
    out.seeds = static_cast<int>(sel.seeds.size());
    out.seed_fallback = sel.fallback;
    if (sel.fallback) spdlog::warn("image {}: no interest points, using the center seed", id);
    out.f1 = build_f1(img, sel.seeds, z);
    out.f2 = build_f2(out.f1);
    return out;
}

SelfConfiguration self_configure(const Dataset& ds, const ProjectConfig& cfg) {
    if (ds.ids.size() < 2) throw std::invalid_argument("self-configuration needs at least two images");
    SelfConfiguration sc;
    std::vector<int> rows, cols;
    for (const auto& id : ds.ids) {
        rows.push_back(ds.image(id).height());
        cols.push_back(ds.image(id).width());
    }
    sc.z = rectangle_size(rows, cols);

    const auto n_rows = static_cast<Eigen::Index>(kStatisticCount * ds.ids.size());
    sc.f3.values.resize(n_rows, static_cast<Eigen::Index>(kFeatureCount));
    sc.f3.columns = feature_schema();
    Eigen::Index r = 0;
    for (const auto& id : ds.ids) {
        auto feats = image_features(id, ds.image(id), sc.z, cfg.detector);
        for (std::size_t s = 0; s < kStatisticCount; ++s, ++r) {
            sc.f3.values.row(r) = feats.f2.values.row(static_cast<Eigen::Index>(s));
            sc.f3.rows.push_back({id, static_cast<int>(s)});
        }
        sc.per_image.push_back(std::move(feats));
    }
    sc.cascade = run_cascade(sc.f3, cfg.cascade());
    return sc;
}

nlohmann::json SelfConfiguration::report() const {
    auto j = selection_report(cascade, static_cast<int>(kFeatureCount));
    j["z"] = z;
    j["f3_rows"] = f3.row_count();
    nlohmann::json images = nlohmann::json::array();
    for (const auto& f : per_image) {
        images.push_back({{"id", f.id}, {"detected", f.detected}, {"seeds", f.seeds}, {"seed_fallback", f.seed_fallback}});
    }
    j["images"] = images;
    return j;
}

ThresholdTable offline_optimal(const Dataset& ds, const ProjectConfig& cfg) {
    ThresholdTable t;
    for (const auto& id : ds.ids) {
        if (!ds.has_gold(id)) {
            spdlog::warn("image {} has no gold standard; excluded from the threshold table", id);
            continue;
        }
        t.emplace(id, maa_search(ds.image(id), ds.gold.at(id), cfg.maa()));
    }
    return t;
}

TrainedSystem train(const StackedFeatureMatrix& f_star, const ThresholdTable& table,
                    const std::vector<std::string>& train_ids, const ProjectConfig& cfg) {
    if (train_ids.empty()) throw std::invalid_argument("training needs at least one image");
    const auto opts = cfg.fuzzy();
    TrainedSystem sys;
    for (const auto& id : train_ids) {
        const auto entry = table.find(id);
        if (entry == table.end()) throw std::invalid_argument("no optimal threshold for training image " + id);
        const Matrix rows = f_star.image_rows(id);
        if (rows.rows() == 0) throw std::invalid_argument("no feature rows for training image " + id);
        const Eigen::VectorXd out = Eigen::VectorXd::Constant(rows.rows(), entry->second.t_star);
        const auto kept = prune_rows(rows, out, sys.store, opts.prune_distance);
        sys.store.append(rows, out, kept);
    }
    sys.rules = generate_rules(sys.store, opts);
    return sys;
}

std::optional<BinaryMask> ReplayFeedback::review(const std::string& id, const GrayImage&, const BinaryMask&) {
    const auto it = ds_->gold.find(id);
    if (it == ds_->gold.end()) return std::nullopt;
    return it->second;
}

OnlineSession::OnlineSession(StackedFeatureMatrix f_star, TrainedSystem system, ProjectConfig cfg)
    : f_star_(std::move(f_star)), system_(std::move(system)), cfg_(std::move(cfg)) {}

Proposal OnlineSession::propose(const std::string& id, const GrayImage& img) const {
    const Matrix rows = f_star_.image_rows(id);
    if (rows.rows() == 0) throw std::invalid_argument("no feature rows for image " + id);
    Proposal p;
    p.id = id;
    p.outputs = infer_block(system_.rules, rows);
    p.fusion = fuse_output(p.outputs);
    p.threshold = static_cast<int>(std::lround(p.fusion.t_star));
    p.segment = apply_threshold(img, p.threshold, cfg_.orientation);
    return p;
}

Learning OnlineSession::learn(const std::string& id, const GrayImage& img, const BinaryMask& corrected) {
    if (!same_shape(img, corrected)) throw DimensionMismatch("corrected mask size differs from image " + id);
    Learning l;
    l.best_threshold = maa_search(img, corrected, cfg_.maa()).t_star;
    auto ev = evolve(system_.rules, system_.store, f_star_.image_rows(id), l.best_threshold, cfg_.fuzzy());
    system_.rules = std::move(ev.rules);
    system_.store = std::move(ev.store);
    l.kept_rows = std::move(ev.kept);
    l.rule_version = system_.rules.version;
    l.rule_count = system_.rules.size();
    return l;
}

OnlineRun run_online(const StackedFeatureMatrix& f_star, const Dataset& ds, TrainedSystem system,
                     const std::vector<std::string>& test_ids, FeedbackSource& feedback, const ProjectConfig& cfg) {
    OnlineSession session(f_star, std::move(system), cfg);
    OnlineRun run;
    for (const auto& id : test_ids) {
        const auto& img = ds.image(id);
        OnlineStep step;
        step.id = id;
        step.proposal = session.propose(id, img);
        auto corrected = feedback.review(id, img, step.proposal.segment);
        if (!corrected) {
            spdlog::warn("no feedback for image {}; skipped without evolution", id);
            step.skipped = true;
        } else {
            step.jaccard = jaccard(step.proposal.segment, *corrected).jaccard;
            step.learning = session.learn(id, img, *corrected);
            run.rule_trace.push_back(step.learning.rule_count);
        }
        run.steps.push_back(std::move(step));
    }
    run.final_system = session.system();
    return run;
}

std::vector<MethodResult> compare_baselines(const Dataset& ds, const std::vector<std::string>& test_ids,
                                            const ThresholdTable& table, const std::vector<double>& sc_efis,
                                            const ProjectConfig& cfg) {
    if (sc_efis.size() != test_ids.size()) throw std::invalid_argument("one evolving-system score per test image expected");
    std::vector<MethodResult> m = {{kMaa, {}, {}},   {kScEfis, sc_efis, {}}, {kNiblack, {}, {}}, {kHuang, {}, {}},
                                   {kKittler, {}, {}}, {kTizhoosh, {}, {}},  {kOtsu, {}, {}}};
    auto niblack_opts = cfg.niblack;
    niblack_opts.orientation = cfg.orientation;
    for (const auto& id : test_ids) {
        const auto& img = ds.image(id);
        const auto& gold = ds.gold.at(id);
        const auto hist = histogram(img);
        auto score = [&](int t) { return jaccard(apply_threshold(img, t, cfg.orientation), gold).jaccard; };
        const auto entry = table.find(id);
        m[0].jaccard.push_back(entry != table.end() ? entry->second.j_max : maa_search(img, gold, cfg.maa()).j_max);
        m[2].jaccard.push_back(jaccard(niblack(img, niblack_opts), gold).jaccard);
        m[3].jaccard.push_back(score(huang(hist).threshold));
        m[4].jaccard.push_back(score(kittler(hist).threshold));
        m[5].jaccard.push_back(score(tizhoosh_interval(hist, cfg.tizhoosh).threshold));
        m[6].jaccard.push_back(score(otsu(hist).threshold));
    }
    if (test_ids.size() >= 2) {
        const auto& otsu_scores = m.back().jaccard;
        for (auto& r : m) {
            r.summary = stats_summary(r.jaccard, std::span<const double>(otsu_scores));
        }
    } else if (test_ids.size() == 1) {
        for (auto& r : m) r.summary = {r.jaccard[0], 0.0, r.jaccard[0], r.jaccard[0], std::nullopt};
    }
    return m;
}

std::vector<TrialSplit> make_splits(const std::vector<std::string>& ids, int folds, double test_fraction,
                                    std::uint64_t seed) {
    const int n = static_cast<int>(ids.size());
    if (n < folds) throw std::invalid_argument(fmt::format("{} images cannot support {} folds", n, folds));
    if (n < 2) throw std::invalid_argument("cross-validation needs at least two images");
    const int n_test = std::clamp(static_cast<int>(std::lround(test_fraction * n)), 1, n - 1);
    const int blocks = (n + n_test - 1) / n_test;

    std::vector<TrialSplit> splits;
    std::vector<std::string> perm;
    for (int trial = 0; trial < folds; ++trial) {
        const int block = trial % blocks;
        if (block == 0) {
            perm = ids;
            SplitMix64 rng(seed + static_cast<std::uint64_t>(trial / blocks));
            for (int i = n - 1; i > 0; --i) {
                const auto j = static_cast<int>(rng.next() % static_cast<std::uint64_t>(i + 1));
                std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
            }
        }
        std::vector<bool> is_test(static_cast<std::size_t>(n), false);
        TrialSplit s;
        for (int k = 0; k < n_test; ++k) {
            const int pos = (block * n_test + k) % n;
            is_test[static_cast<std::size_t>(pos)] = true;
            s.test_ids.push_back(perm[static_cast<std::size_t>(pos)]);
        }
        for (int pos = 0; pos < n; ++pos) {
            if (!is_test[static_cast<std::size_t>(pos)]) s.train_ids.push_back(perm[static_cast<std::size_t>(pos)]);
        }
        splits.push_back(std::move(s));
    }
    return splits;
}

const MethodResult& TrialReport::method(const std::string& name) const {
    for (const auto& m : methods)
        if (m.name == name) return m;
    throw std::out_of_range("no method " + name + " in trial report");
}

TrialReport run_trial(int trial, const Dataset& ds, const StackedFeatureMatrix& f_star, const ThresholdTable& table,
                      const TrialSplit& split, FeedbackSource& feedback, const ProjectConfig& cfg) {
    TrialReport rep;
    rep.trial = trial;
    rep.split = split;
    auto sys = train(f_star, table, split.train_ids, cfg);
    rep.initial_rules = sys.rules.size();
    auto run = run_online(f_star, ds, std::move(sys), split.test_ids, feedback, cfg);
    rep.rule_trace = run.rule_trace;
    std::vector<std::string> scored;
    std::vector<double> sc;
    for (const auto& s : run.steps) {
        if (s.skipped) continue;
        scored.push_back(s.id);
        sc.push_back(s.jaccard);
    }
    rep.methods = compare_baselines(ds, scored, table, sc, cfg);
    rep.steps = std::move(run.steps);
    return rep;
}

CrossValidation cross_validate(const Dataset& ds, const StackedFeatureMatrix& f_star, const ThresholdTable& table,
                               const ProjectConfig& cfg, unsigned threads) {
    std::vector<std::string> ids;
    for (const auto& id : ds.ids)
        if (table.count(id)) ids.push_back(id);
    const auto splits = make_splits(ids, cfg.folds, cfg.test_fraction, cfg.seed);

    CrossValidation cv;
    cv.trials.resize(splits.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        ReplayFeedback replay(ds);
        for (std::size_t t = next++; t < splits.size(); t = next++) {
            try {
                cv.trials[t] = run_trial(static_cast<int>(t) + 1, ds, f_star, table, splits[t], replay, cfg);
            } catch (...) {
                std::lock_guard g(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = std::min<unsigned>(threads, static_cast<unsigned>(splits.size()));
    std::vector<std::thread> pool;
    for (unsigned i = 1; i < threads; ++i) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);

    for (const auto& trial : cv.trials) {
        for (const auto& m : trial.methods) cv.aggregate_mean[m.name] += m.summary.mean / static_cast<double>(cv.trials.size());
    }
    return cv;
}

namespace {

nlohmann::json summary_json(const MethodResult& m) {
    nlohmann::json j = {{"method", m.name},
                        {"mean", m.summary.mean},
                        {"stddev", m.summary.stddev},
                        {"ci95", {m.summary.ci_low, m.summary.ci_high}},
                        {"jaccard", m.jaccard}};
    j["p_value_vs_otsu"] = m.summary.p_value ? nlohmann::json(*m.summary.p_value) : nlohmann::json(nullptr);
    return j;
}

}  // namespace

nlohmann::json to_json(const TrialReport& r) {
    nlohmann::json methods = nlohmann::json::array();
    for (const auto& m : r.methods) methods.push_back(summary_json(m));
    nlohmann::json steps = nlohmann::json::array();
    for (const auto& s : r.steps) {
        steps.push_back({{"id", s.id},
                         {"t_o", s.proposal.outputs},
                         {"t_star", s.proposal.threshold},
                         {"membership", s.proposal.fusion.membership},
                         {"skipped", s.skipped},
                         {"jaccard", s.jaccard},
                         {"t_best", s.learning.best_threshold},
                         {"kept_rows", s.learning.kept_rows.size()},
                         {"rules", s.learning.rule_count}});
    }
    return {{"trial", r.trial},
            {"train_ids", r.split.train_ids},
            {"test_ids", r.split.test_ids},
            {"initial_rules", r.initial_rules},
            {"rule_trace", r.rule_trace},
            {"methods", methods},
            {"steps", steps}};
}

nlohmann::json to_json(const CrossValidation& cv) {
    nlohmann::json trials = nlohmann::json::array();
    for (const auto& t : cv.trials) trials.push_back(to_json(t));
    return {{"trials", trials}, {"aggregate_mean", cv.aggregate_mean}};
}

std::string markdown_table(const std::vector<TrialReport>& trials) {
    std::ostringstream os;
    os << "| Run | Method | J ± σ_J | CI_J | p vs Otsu |\n|---|---|---|---|---|\n";
    for (const auto& t : trials) {
        for (const auto& m : t.methods) {
            const auto& s = m.summary;
            os << fmt::format("| {} | {} | {:.0f}% ± {:.0f}% | [{:.0f}% {:.0f}%] | {} |\n", t.trial, m.name,
                              100 * s.mean, 100 * s.stddev, 100 * s.ci_low, 100 * s.ci_high,
                              s.p_value ? fmt::format("{:.3g}", *s.p_value) : std::string("-"));
        }
    }
    return os.str();
}

std::string rule_trace_csv(const std::vector<TrialReport>& trials) {
    std::ostringstream os;
    os << "trial,step,image_id,rules\n";
    for (const auto& t : trials) {
        std::size_t k = 0;
        for (const auto& s : t.steps) {
            if (s.skipped) continue;
            os << t.trial << ',' << k + 1 << ',' << s.id << ',' << t.rule_trace[k] << '\n';
            ++k;
        }
    }
    return os.str();
}

}  // namespace scefis
