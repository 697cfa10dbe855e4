#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "scefis/pipeline.hpp"

namespace scefis {

enum class Phase { Created, Configured, OfflineDone, Trained, Online };

const char* to_string(Phase p) noexcept;
Phase phase_from_string(const std::string& s);

struct ReviewRecord {
    std::string image_id;
    bool skipped = false;
    double jaccard = 0.0;
    int t_star = 0;
    int best_threshold = 0;
    int rule_version = 0;
    std::size_t rule_count = 0;
};

/// Everything in project.json. Artifacts live next to it:
///   images/ gold/             ingested inputs (PNG)
///   features/                 schema.json, F1_<id>.csv, F2_<id>.csv, F3.csv, Fstar.csv, selection.json
///   offline/thresholds.json
///   rules/v<n>.json           one per version; store/v<n>/{M,O}.csv alongside
///   proposals/<id>.png        the displayed segment S
///   feedback/<n>_<id>.{json,png}
struct ProjectRecord {
    std::string id;
    ProjectConfig config;
    Phase phase = Phase::Created;
    int rule_version = -1;  ///< -1 until trained
    std::vector<std::string> images;
    std::vector<std::string> gold;
    std::vector<std::string> train_ids;
    std::vector<std::string> test_ids;
    std::optional<std::string> served;  ///< queue head handed out and awaiting feedback
    std::vector<ReviewRecord> reviews;
    std::size_t initial_rules = 0;

    bool has_image(const std::string& image_id) const;
    bool has_gold(const std::string& image_id) const;
    /// Next unreviewed test image, if any.
    std::optional<std::string> queue_head() const;
};

nlohmann::json to_json(const ProjectRecord& r);
ProjectRecord record_from_json(const nlohmann::json& j);

/// Directory-per-project persistence rooted at `root`. Every write goes through
/// write-temp-then-rename.
class ProjectStore {
public:
    explicit ProjectStore(std::filesystem::path root);

    const std::filesystem::path& root() const noexcept { return root_; }
    std::filesystem::path dir(const std::string& id) const;
    bool exists(const std::string& id) const;
    std::vector<std::string> list() const;

    ProjectRecord load(const std::string& id) const;
    void save(const ProjectRecord& record) const;

    nlohmann::json read_json(const std::string& id, const std::filesystem::path& rel) const;
    void write_json(const std::string& id, const std::filesystem::path& rel, const nlohmann::json& j) const;
    std::string read_text(const std::string& id, const std::filesystem::path& rel) const;
    void write_text(const std::string& id, const std::filesystem::path& rel, const std::string& text) const;

private:
    std::filesystem::path root_;
};

/// Project ids become directory names: [A-Za-z0-9_-], 1..64 characters.
bool valid_project_id(const std::string& id);

}  // namespace scefis
