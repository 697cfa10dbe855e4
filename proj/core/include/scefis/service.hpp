#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "scefis/project_store.hpp"

namespace scefis {

class ServiceError : public std::runtime_error {
public:
    enum class Kind { Invalid, NotFound, Conflict };

    ServiceError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

struct UploadedFile {
    std::string name;  ///< file name; the stem becomes the image id
    std::vector<std::uint8_t> bytes;
};

struct IngestResult {
    int added = 0;
    int unchanged = 0;
    int total = 0;  ///< images registered in the project afterwards
    std::map<std::string, std::string> errors;  ///< per file name
};

struct ReviewItem {
    std::string image_id;
    GrayImage image;
    BinaryMask proposal;
    int t_star = 0;
    Fusion fusion;
    std::vector<double> outputs;
    int position = 0;   ///< 1-based place in the queue
    int queue_size = 0;
};

struct FeedbackEvent {
    int sequence = 0;  ///< 1-based
    std::string image_id;
    BinaryMask mask;
    int best_threshold = 0;
    int rule_version = 0;
    std::size_t rule_count = 0;
    double jaccard = 0.0;  ///< displayed segment against the submitted mask
    std::vector<int> kept_rows;
    std::string timestamp;  ///< UTC, ISO 8601
};

nlohmann::json to_json(const FeedbackEvent& e);

/// Phase-ordered project operations over a ProjectStore. Reads run concurrently;
/// mutations of one project are serialized.
class ProjectService {
public:
    explicit ProjectService(std::filesystem::path root);

    /// Validates the configuration; when image/gold directories are set they must
    /// exist and their contents are ingested.
    ProjectRecord create_project(const std::string& id, const ProjectConfig& cfg, IngestResult* ingested = nullptr);
    ProjectRecord project(const std::string& id) const;
    std::vector<std::string> projects() const;

    IngestResult ingest_images(const std::string& id, const std::vector<UploadedFile>& images,
                               const std::vector<UploadedFile>& gold = {});

    nlohmann::json configure(const std::string& id);
    ThresholdTable offline(const std::string& id);
    /// Default split is the first trial of the seeded design; explicit lists override it.
    ProjectRecord train(const std::string& id, std::optional<std::vector<std::string>> train_ids = std::nullopt,
                        std::optional<std::vector<std::string>> test_ids = std::nullopt);
    ProjectRecord start_online(const std::string& id);

    /// nullopt once every queued image is reviewed.
    std::optional<ReviewItem> next_review_item(const std::string& id);
    FeedbackEvent submit_feedback(const std::string& id, const std::string& image_id, const BinaryMask& corrected);
    /// Skips the served item without evolving (feedback timeout).
    ProjectRecord skip_review(const std::string& id, const std::string& image_id);

    RuleBase rules(const std::string& id, std::optional<int> version = std::nullopt) const;
    nlohmann::json metrics(const std::string& id) const;
    /// Baseline comparison over the reviewed test images.
    TrialReport evaluate(const std::string& id) const;

    GrayImage image(const std::string& id, const std::string& image_id) const;
    BinaryMask gold(const std::string& id, const std::string& image_id) const;
    FeedbackEvent feedback_event(const std::string& id, int sequence) const;

    const ProjectStore& store() const noexcept { return store_; }

private:
    std::shared_mutex& lock_for(const std::string& id) const;
    ProjectRecord load(const std::string& id) const;
    Dataset dataset(const ProjectRecord& r) const;
    StackedFeatureMatrix f_star(const std::string& id) const;
    TrainedSystem system(const ProjectRecord& r) const;
    void persist_system(const std::string& id, const TrainedSystem& sys) const;

    ProjectStore store_;
    mutable std::mutex registry_mutex_;
    mutable std::map<std::string, std::unique_ptr<std::shared_mutex>> locks_;
};

}  // namespace scefis
