#include "scefis/project_store.hpp"

#include <algorithm>
#include <regex>
#include <stdexcept>

#include "scefis/image_io.hpp"

namespace scefis {

namespace {

constexpr const char* kPhaseNames[] = {"created", "configured", "offline-done", "trained", "online"};

}  // namespace

const char* to_string(Phase p) noexcept { return kPhaseNames[static_cast<int>(p)]; }

Phase phase_from_string(const std::string& s) {
    for (int i = 0; i < 5; ++i)
        if (s == kPhaseNames[i]) return static_cast<Phase>(i);
    throw std::invalid_argument("unknown phase '" + s + "'");
}

bool ProjectRecord::has_image(const std::string& image_id) const {
    return std::find(images.begin(), images.end(), image_id) != images.end();
}

bool ProjectRecord::has_gold(const std::string& image_id) const {
    return std::find(gold.begin(), gold.end(), image_id) != gold.end();
}

std::optional<std::string> ProjectRecord::queue_head() const {
    if (reviews.size() >= test_ids.size()) return std::nullopt;
    return test_ids[reviews.size()];
}

nlohmann::json to_json(const ProjectRecord& r) {
    nlohmann::json reviews = nlohmann::json::array();
    for (const auto& v : r.reviews) {
        reviews.push_back({{"image_id", v.image_id},
                           {"skipped", v.skipped},
                           {"jaccard", v.jaccard},
                           {"t_star", v.t_star},
                           {"best_threshold", v.best_threshold},
                           {"rule_version", v.rule_version},
                           {"rule_count", v.rule_count}});
    }
    return {{"id", r.id},
            {"config", to_json(r.config)},
            {"phase", to_string(r.phase)},
            {"rule_version", r.rule_version},
            {"images", r.images},
            {"gold", r.gold},
            {"train_ids", r.train_ids},
            {"test_ids", r.test_ids},
            {"served", r.served ? nlohmann::json(*r.served) : nlohmann::json(nullptr)},
            {"reviews", reviews},
            {"initial_rules", r.initial_rules}};
}

ProjectRecord record_from_json(const nlohmann::json& j) {
    ProjectRecord r;
    r.id = j.at("id").get<std::string>();
    r.config = config_from_json(j.at("config"));
    r.phase = phase_from_string(j.at("phase").get<std::string>());
    r.rule_version = j.value("rule_version", -1);
    r.images = j.value("images", std::vector<std::string>{});
    r.gold = j.value("gold", std::vector<std::string>{});
    r.train_ids = j.value("train_ids", std::vector<std::string>{});
    r.test_ids = j.value("test_ids", std::vector<std::string>{});
    if (j.contains("served") && !j.at("served").is_null()) r.served = j.at("served").get<std::string>();
    for (const auto& v : j.value("reviews", nlohmann::json::array())) {
        ReviewRecord rr;
        rr.image_id = v.at("image_id").get<std::string>();
        rr.skipped = v.value("skipped", false);
        rr.jaccard = v.value("jaccard", 0.0);
        rr.t_star = v.value("t_star", 0);
        rr.best_threshold = v.value("best_threshold", 0);
        rr.rule_version = v.value("rule_version", 0);
        rr.rule_count = v.value("rule_count", std::size_t{0});
        r.reviews.push_back(std::move(rr));
    }
    r.initial_rules = j.value("initial_rules", std::size_t{0});
    return r;
}

bool valid_project_id(const std::string& id) {
    static const std::regex re("[A-Za-z0-9_-]{1,64}");
    return std::regex_match(id, re);
}

ProjectStore::ProjectStore(std::filesystem::path root) : root_(std::move(root)) {
    std::filesystem::create_directories(root_);
}

std::filesystem::path ProjectStore::dir(const std::string& id) const {
    if (!valid_project_id(id)) throw std::invalid_argument("invalid project id '" + id + "'");
    return root_ / id;
}

bool ProjectStore::exists(const std::string& id) const {
    return valid_project_id(id) && std::filesystem::exists(dir(id) / "project.json");
}

std::vector<std::string> ProjectStore::list() const {
    std::vector<std::string> ids;
    for (const auto& e : std::filesystem::directory_iterator(root_)) {
        const auto name = e.path().filename().string();
        if (e.is_directory() && exists(name)) ids.push_back(name);
    }
    std::sort(ids.begin(), ids.end());
    return ids;
}

ProjectRecord ProjectStore::load(const std::string& id) const { return record_from_json(read_json(id, "project.json")); }

void ProjectStore::save(const ProjectRecord& record) const { write_json(record.id, "project.json", to_json(record)); }

nlohmann::json ProjectStore::read_json(const std::string& id, const std::filesystem::path& rel) const {
    return nlohmann::json::parse(read_text(id, rel));
}

void ProjectStore::write_json(const std::string& id, const std::filesystem::path& rel, const nlohmann::json& j) const {
    write_text(id, rel, j.dump(2) + "\n");
}

std::string ProjectStore::read_text(const std::string& id, const std::filesystem::path& rel) const {
    const auto bytes = read_file_bytes(dir(id) / rel);
    return std::string(bytes.begin(), bytes.end());
}

void ProjectStore::write_text(const std::string& id, const std::filesystem::path& rel, const std::string& text) const {
    write_text_atomic(dir(id) / rel, text);
}

}  // namespace scefis
