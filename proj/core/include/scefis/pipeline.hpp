#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "scefis/features.hpp"
#include "scefis/fuzzy.hpp"
#include "scefis/image.hpp"
#include "scefis/keypoints.hpp"
#include "scefis/selection.hpp"
#include "scefis/stats.hpp"
#include "scefis/thresholding.hpp"

namespace scefis {

struct ProjectConfig {
    std::filesystem::path image_dir;
    std::filesystem::path gold_dir;
    double prune_threshold = 0.99;
    double cardinality_threshold = 0.90;
    double final_threshold = 0.90;
    double quorum_fraction = 0.5;
    bool cap_vote = true;
    double cluster_radius = 0.5;
    /// Pruning distance per parent algorithm.
    std::map<std::string, double> prune_distance = {{"threshold", 0.3}};
    std::string parent = "threshold";
    Orientation orientation = Orientation::DarkObject;
    std::uint64_t seed = 1;
    int folds = 10;
    double test_fraction = 0.2;
    NiblackOptions niblack;
    TizhooshOptions tizhoosh;
    DetectorOptions detector;
    SelectorOptions selectors;

    /// Throws std::invalid_argument on out-of-range values (and missing directories when asked).
    void validate(bool require_directories) const;
    FuzzyOptions fuzzy() const;
    CascadeOptions cascade() const;
    MaaOptions maa() const { return {orientation, false}; }
};

nlohmann::json to_json(const ProjectConfig& c);
ProjectConfig config_from_json(const nlohmann::json& j);

struct Dataset {
    std::vector<std::string> ids;
    std::map<std::string, GrayImage> images;
    std::map<std::string, BinaryMask> gold;

    const GrayImage& image(const std::string& id) const;
    bool has_gold(const std::string& id) const { return gold.count(id) != 0; }
};

/// Images (PNG/PGM) from `image_dir`, gold masks with the same stem from `gold_dir`.
Dataset load_dataset(const std::filesystem::path& image_dir, const std::filesystem::path& gold_dir);

struct ImageFeatures {
    std::string id;
    int detected = 0;
    int seeds = 0;
    bool seed_fallback = false;
    Matrix f1;
    ImageFeatureBlock f2;
};

struct SelfConfiguration {
    int z = 0;
    std::vector<ImageFeatures> per_image;
    StackedFeatureMatrix f3;
    FeatureCascade cascade;

    const StackedFeatureMatrix& f_star() const noexcept { return cascade.f_star(); }
    nlohmann::json report() const;
};

ImageFeatures image_features(const std::string& id, const GrayImage& img, int z, const DetectorOptions& opts);

/// Window size, per-image feature blocks, F3 stacking and the selection cascade.
SelfConfiguration self_configure(const Dataset& ds, const ProjectConfig& cfg);

using ThresholdTable = std::map<std::string, MaaResult>;

ThresholdTable offline_optimal(const Dataset& ds, const ProjectConfig& cfg);

struct TrainedSystem {
    TrainingStore store;
    RuleBase rules;
};

TrainedSystem train(const StackedFeatureMatrix& f_star, const ThresholdTable& table,
                    const std::vector<std::string>& train_ids, const ProjectConfig& cfg);

/// Source of corrected gold masks for proposed segments. nullopt means no answer
/// (e.g. timeout): the image is skipped without evolution.
class FeedbackSource {
public:
    virtual ~FeedbackSource() = default;
    virtual std::optional<BinaryMask> review(const std::string& id, const GrayImage& img,
                                             const BinaryMask& proposed) = 0;
};

/// Replays stored gold standards as the user's correction.
class ReplayFeedback : public FeedbackSource {
public:
    explicit ReplayFeedback(const Dataset& ds) : ds_(&ds) {}
    std::optional<BinaryMask> review(const std::string& id, const GrayImage&, const BinaryMask&) override;

private:
    const Dataset* ds_;
};

struct Proposal {
    std::string id;
    std::vector<double> outputs;  ///< T_O, one per statistic row
    Fusion fusion;
    int threshold = 0;
    BinaryMask segment;
};

struct Learning {
    int best_threshold = 0;
    std::vector<int> kept_rows;
    int rule_version = 0;
    std::size_t rule_count = 0;
};

/// Inference, segmentation and rule evolution for one image at a time.
class OnlineSession {
public:
    OnlineSession(StackedFeatureMatrix f_star, TrainedSystem system, ProjectConfig cfg);

    Proposal propose(const std::string& id, const GrayImage& img) const;
    Learning learn(const std::string& id, const GrayImage& img, const BinaryMask& corrected);

    const RuleBase& rules() const noexcept { return system_.rules; }
    const TrainingStore& store() const noexcept { return system_.store; }
    const TrainedSystem& system() const noexcept { return system_; }

private:
    StackedFeatureMatrix f_star_;
    TrainedSystem system_;
    ProjectConfig cfg_;
};

struct OnlineStep {
    std::string id;
    Proposal proposal;
    bool skipped = false;
    double jaccard = 0.0;  ///< displayed segment vs corrected gold
    Learning learning;
};

struct OnlineRun {
    std::vector<OnlineStep> steps;
    TrainedSystem final_system;
    std::vector<std::size_t> rule_trace;
};

OnlineRun run_online(const StackedFeatureMatrix& f_star, const Dataset& ds, TrainedSystem system,
                     const std::vector<std::string>& test_ids, FeedbackSource& feedback, const ProjectConfig& cfg);

struct MethodResult {
    std::string name;
    std::vector<double> jaccard;  ///< per test image
    Summary summary;
};

inline const char* kMaa = "MAA";
inline const char* kScEfis = "SC-EFIS-THR";
inline const char* kNiblack = "Niblack (local)";
inline const char* kHuang = "Huang";
inline const char* kKittler = "Kittler";
inline const char* kTizhoosh = "Tizhoosh";
inline const char* kOtsu = "Otsu";

/// Baselines, MAA and the evolving system on one test set; p-values are against Otsu.
std::vector<MethodResult> compare_baselines(const Dataset& ds, const std::vector<std::string>& test_ids,
                                            const ThresholdTable& table, const std::vector<double>& sc_efis,
                                            const ProjectConfig& cfg);

struct TrialSplit {
    std::vector<std::string> train_ids;
    std::vector<std::string> test_ids;
};

/// Seeded leave-n-images-out design: each cycle shuffles the ids and cuts disjoint
/// test blocks, so every image is tested at least once across `folds` >= blocks trials.
std::vector<TrialSplit> make_splits(const std::vector<std::string>& ids, int folds, double test_fraction,
                                    std::uint64_t seed);

struct TrialReport {
    int trial = 0;
    TrialSplit split;
    std::size_t initial_rules = 0;
    std::vector<std::size_t> rule_trace;
    std::vector<MethodResult> methods;
    std::vector<OnlineStep> steps;

    const MethodResult& method(const std::string& name) const;
};

TrialReport run_trial(int trial, const Dataset& ds, const StackedFeatureMatrix& f_star, const ThresholdTable& table,
                      const TrialSplit& split, FeedbackSource& feedback, const ProjectConfig& cfg);

struct CrossValidation {
    std::vector<TrialReport> trials;
    /// Mean of per-trial mean Jaccard, by method.
    std::map<std::string, double> aggregate_mean;
};

/// Trials run on `threads` workers (0 = hardware concurrency); results do not depend on it.
CrossValidation cross_validate(const Dataset& ds, const StackedFeatureMatrix& f_star, const ThresholdTable& table,
                               const ProjectConfig& cfg, unsigned threads = 0);

nlohmann::json to_json(const TrialReport& r);
nlohmann::json to_json(const CrossValidation& cv);
std::string markdown_table(const std::vector<TrialReport>& trials);
std::string rule_trace_csv(const std::vector<TrialReport>& trials);

}  // namespace scefis
