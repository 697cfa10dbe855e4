#include "scefis/service.hpp"

#include <algorithm>
#include <chrono>
#include <set>

#include <fmt/chrono.h>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "scefis/image_io.hpp"
#include "scefis/matrix_io.hpp"

namespace scefis {

namespace {

using Kind = ServiceError::Kind;

void require_phase(const ProjectRecord& r, Phase expected, const char* op) {
    if (r.phase != expected) {
        throw ServiceError(Kind::Conflict, fmt::format("{} needs phase '{}' but project {} is '{}'", op,
                                                       to_string(expected), r.id, to_string(r.phase)));
    }
}

std::string utc_now() {
    return fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", fmt::gmtime(std::chrono::system_clock::to_time_t(std::chrono::system_clock::now())));
}

std::string stem_of(const std::string& name) { return std::filesystem::path(name).stem().string(); }

std::vector<UploadedFile> files_in(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> paths;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        const auto ext = e.path().extension().string();
        if (e.is_regular_file() && (ext == ".png" || ext == ".pgm")) paths.push_back(e.path());
    }
    std::sort(paths.begin(), paths.end());
    std::vector<UploadedFile> out;
    for (const auto& p : paths) out.push_back({p.filename().string(), read_file_bytes(p)});
    return out;
}

void insert_sorted(std::vector<std::string>& v, const std::string& s) {
    v.insert(std::upper_bound(v.begin(), v.end(), s), s);
}

nlohmann::json thresholds_json(const ThresholdTable& t) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [id, m] : t) {
        j[id] = {{"t_star", m.t_star}, {"j_max", m.j_max}, {"orientation", std::string(to_string(m.orientation))}};
    }
    return j;
}

ThresholdTable thresholds_from_json(const nlohmann::json& j) {
    ThresholdTable t;
    for (const auto& [id, m] : j.items()) {
        t[id] = {m.at("t_star").get<int>(), m.at("j_max").get<double>(),
                 orientation_from_string(m.at("orientation").get<std::string>())};
    }
    return t;
}

std::filesystem::path rules_path(int version) { return std::filesystem::path("rules") / fmt::format("v{}.json", version); }
std::filesystem::path store_path(int version) { return std::filesystem::path("store") / fmt::format("v{}", version); }

}  // namespace

nlohmann::json to_json(const FeedbackEvent& e) {
    return {{"sequence", e.sequence},
            {"image_id", e.image_id},
            {"best_threshold", e.best_threshold},
            {"rule_version", e.rule_version},
            {"rule_count", e.rule_count},
            {"jaccard", e.jaccard},
            {"kept_rows", e.kept_rows},
            {"timestamp", e.timestamp},
            {"mask", fmt::format("feedback/{}.png", e.sequence)}};
}

ProjectService::ProjectService(std::filesystem::path root) : store_(std::move(root)) {}

std::shared_mutex& ProjectService::lock_for(const std::string& id) const {
    std::lock_guard g(registry_mutex_);
    auto& slot = locks_[id];
    if (!slot) slot = std::make_unique<std::shared_mutex>();
    return *slot;
}

ProjectRecord ProjectService::load(const std::string& id) const {
    if (!valid_project_id(id)) throw ServiceError(Kind::Invalid, "invalid project id '" + id + "'");
    if (!store_.exists(id)) throw ServiceError(Kind::NotFound, "no project " + id);
    return store_.load(id);
}

ProjectRecord ProjectService::create_project(const std::string& id, const ProjectConfig& cfg, IngestResult* ingested) {
    if (!valid_project_id(id)) throw ServiceError(Kind::Invalid, "invalid project id '" + id + "'");
    const bool has_dirs = !cfg.image_dir.empty() || !cfg.gold_dir.empty();
    try {
        cfg.validate(has_dirs);
    } catch (const std::invalid_argument& e) {
        throw ServiceError(Kind::Invalid, e.what());
    }
    {
        std::unique_lock lock(lock_for(id));
        if (store_.exists(id)) throw ServiceError(Kind::Conflict, "project " + id + " already exists");
        ProjectRecord r;
        r.id = id;
        r.config = cfg;
        store_.save(r);
    }
    spdlog::info("created project {}", id);
    if (has_dirs) {
        auto res = ingest_images(id, files_in(cfg.image_dir), files_in(cfg.gold_dir));
        if (ingested) *ingested = std::move(res);
    }
    return project(id);
}

ProjectRecord ProjectService::project(const std::string& id) const {
    std::shared_lock lock(lock_for(id));
    return load(id);
}

std::vector<std::string> ProjectService::projects() const { return store_.list(); }

IngestResult ProjectService::ingest_images(const std::string& id, const std::vector<UploadedFile>& images,
                                           const std::vector<UploadedFile>& gold) {
    std::unique_lock lock(lock_for(id));
    auto r = load(id);
    require_phase(r, Phase::Created, "ingest");
    const auto dir = store_.dir(id);
    IngestResult res;
    std::map<std::string, GrayImage> batch;

    for (const auto& f : images) {
        const auto image_id = stem_of(f.name);
        try {
            if (!valid_project_id(image_id)) throw std::invalid_argument("invalid image id '" + image_id + "'");
            auto img = decode_image(f.bytes);
            if (r.has_image(image_id)) {
                if (read_image(dir / "images" / (image_id + ".png")) != img) {
                    throw std::invalid_argument("image id " + image_id + " already holds different content");
                }
                ++res.unchanged;
                continue;
            }
            write_png(dir / "images" / (image_id + ".png"), img);
            insert_sorted(r.images, image_id);
            batch.emplace(image_id, std::move(img));
            ++res.added;
        } catch (const std::exception& e) {
            res.errors[f.name] = e.what();
            spdlog::warn("ingest {}: {}", f.name, e.what());
        }
    }
    for (const auto& f : gold) {
        const auto image_id = stem_of(f.name);
        try {
            if (!r.has_image(image_id)) throw std::invalid_argument("gold mask without image " + image_id);
            auto mask = decode_mask(f.bytes);
            const auto it = batch.find(image_id);
            const GrayImage img = it != batch.end() ? it->second : read_image(dir / "images" / (image_id + ".png"));
            if (!same_shape(img, mask)) throw DimensionMismatch("gold mask size differs from image " + image_id);
            if (r.has_gold(image_id)) {
                if (read_mask(dir / "gold" / (image_id + ".png")) != mask) {
                    throw std::invalid_argument("gold for " + image_id + " already holds different content");
                }
                continue;
            }
            write_mask_png(dir / "gold" / (image_id + ".png"), mask);
            insert_sorted(r.gold, image_id);
        } catch (const std::exception& e) {
            res.errors[f.name] = e.what();
            spdlog::warn("ingest gold {}: {}", f.name, e.what());
        }
    }
    res.total = static_cast<int>(r.images.size());
    store_.save(r);
    return res;
}

Dataset ProjectService::dataset(const ProjectRecord& r) const {
    const auto dir = store_.dir(r.id);
    Dataset ds;
    for (const auto& image_id : r.images) {
        ds.ids.push_back(image_id);
        ds.images.emplace(image_id, read_image(dir / "images" / (image_id + ".png")));
    }
    for (const auto& image_id : r.gold) ds.gold.emplace(image_id, read_mask(dir / "gold" / (image_id + ".png")));
    return ds;
}

nlohmann::json ProjectService::configure(const std::string& id) {
    std::unique_lock lock(lock_for(id));
    auto r = load(id);
    require_phase(r, Phase::Created, "configure");
    if (r.images.size() < 2) throw ServiceError(Kind::Invalid, "self-configuration needs at least two images");
    const auto ds = dataset(r);
    const auto sc = self_configure(ds, r.config);

    const auto schema = feature_schema();
    store_.write_json(id, "features/schema.json", schema);
    for (const auto& f : sc.per_image) {
        store_.write_text(id, "features/F1_" + f.id + ".csv", to_csv(schema, f.f1));
        store_.write_text(id, "features/F2_" + f.id + ".csv", to_csv(schema, f.f2.values));
    }
    store_.write_text(id, "features/F3.csv", to_csv(sc.f3));
    store_.write_text(id, "features/Fstar.csv", to_csv(sc.f_star()));
    const auto report = sc.report();
    store_.write_json(id, "features/selection.json", report);

    r.phase = Phase::Configured;
    store_.save(r);
    spdlog::info("project {} configured: Z = {}, {} features kept", id, sc.z, sc.f_star().column_count());
    return report;
}

ThresholdTable ProjectService::offline(const std::string& id) {
    std::unique_lock lock(lock_for(id));
    auto r = load(id);
    require_phase(r, Phase::Configured, "offline");
    const auto table = offline_optimal(dataset(r), r.config);
    store_.write_json(id, "offline/thresholds.json", thresholds_json(table));
    r.phase = Phase::OfflineDone;
    store_.save(r);
    return table;
}

StackedFeatureMatrix ProjectService::f_star(const std::string& id) const {
    return stacked_from_csv(store_.read_text(id, "features/Fstar.csv"));
}

void ProjectService::persist_system(const std::string& id, const TrainedSystem& sys) const {
    write_store(store_.dir(id) / store_path(sys.rules.version), sys.store);
    store_.write_json(id, rules_path(sys.rules.version), to_json(sys.rules));
}

TrainedSystem ProjectService::system(const ProjectRecord& r) const {
    TrainedSystem sys;
    sys.rules = rule_base_from_json(store_.read_json(r.id, rules_path(r.rule_version)));
    sys.store = read_store(store_.dir(r.id) / store_path(r.rule_version));
    return sys;
}

ProjectRecord ProjectService::train(const std::string& id, std::optional<std::vector<std::string>> train_ids,
                                    std::optional<std::vector<std::string>> test_ids) {
    std::unique_lock lock(lock_for(id));
    auto r = load(id);
    require_phase(r, Phase::OfflineDone, "train");
    const auto table = thresholds_from_json(store_.read_json(id, "offline/thresholds.json"));

    if (!train_ids) {
        std::vector<std::string> ids;
        for (const auto& [image_id, _] : table) ids.push_back(image_id);
        try {
            const auto split = make_splits(ids, 1, r.config.test_fraction, r.config.seed).front();
            train_ids = split.train_ids;
            if (!test_ids) test_ids = split.test_ids;
        } catch (const std::invalid_argument& e) {
            throw ServiceError(Kind::Invalid, e.what());
        }
    }
    if (!test_ids) {
        test_ids.emplace();
        for (const auto& image_id : r.images)
            if (std::find(train_ids->begin(), train_ids->end(), image_id) == train_ids->end()) test_ids->push_back(image_id);
    }
    if (train_ids->empty()) throw ServiceError(Kind::Invalid, "training needs at least one image");
    std::set<std::string> seen;
    for (const auto& image_id : *train_ids) {
        if (!table.count(image_id)) throw ServiceError(Kind::Invalid, "training image " + image_id + " has no gold standard");
        if (!seen.insert(image_id).second) throw ServiceError(Kind::Invalid, "training image " + image_id + " listed twice");
    }
    for (const auto& image_id : *test_ids) {
        if (!r.has_image(image_id)) throw ServiceError(Kind::Invalid, "unknown test image " + image_id);
        if (!seen.insert(image_id).second) throw ServiceError(Kind::Invalid, "test image " + image_id + " overlaps training or repeats");
    }

    auto sys = scefis::train(f_star(id), table, *train_ids, r.config);
    persist_system(id, sys);
    r.train_ids = *train_ids;
    r.test_ids = *test_ids;
    r.rule_version = sys.rules.version;
    r.initial_rules = sys.rules.size();
    r.phase = Phase::Trained;
    store_.save(r);
    spdlog::info("project {} trained: {} rows, {} rules", id, sys.store.size(), sys.rules.size());
    return r;
}

ProjectRecord ProjectService::start_online(const std::string& id) {
    std::unique_lock lock(lock_for(id));
    auto r = load(id);
    require_phase(r, Phase::Trained, "online");
    r.phase = Phase::Online;
    store_.save(r);
    return r;
}

std::optional<ReviewItem> ProjectService::next_review_item(const std::string& id) {
    std::unique_lock lock(lock_for(id));
    auto r = load(id);
    require_phase(r, Phase::Online, "review");
    const auto head = r.queue_head();
    if (!head) return std::nullopt;

    const auto img = read_image(store_.dir(id) / "images" / (*head + ".png"));
    const OnlineSession session(f_star(id), system(r), r.config);
    const auto p = session.propose(*head, img);
    if (r.served != head) {
        write_mask_png(store_.dir(id) / "proposals" / (*head + ".png"), p.segment);
        store_.write_json(id, std::filesystem::path("proposals") / (*head + ".json"),
                          {{"t_star", p.threshold},
                           {"t_star_real", p.fusion.t_star},
                           {"t_o", p.outputs},
                           {"membership", p.fusion.membership},
                           {"rule_version", r.rule_version}});
        r.served = *head;
        store_.save(r);
    }
    ReviewItem item;
    item.image_id = *head;
    item.image = img;
    item.proposal = p.segment;
    item.t_star = p.threshold;
    item.fusion = p.fusion;
    item.outputs = p.outputs;
    item.position = static_cast<int>(r.reviews.size()) + 1;
    item.queue_size = static_cast<int>(r.test_ids.size());
    return item;
}

FeedbackEvent ProjectService::submit_feedback(const std::string& id, const std::string& image_id,
                                              const BinaryMask& corrected) {
    std::unique_lock lock(lock_for(id));
    auto r = load(id);
    require_phase(r, Phase::Online, "feedback");
    for (const auto& v : r.reviews)
        if (v.image_id == image_id) throw ServiceError(Kind::Conflict, "image " + image_id + " was already reviewed");
    if (r.queue_head() != image_id || r.served != image_id) {
        throw ServiceError(Kind::Conflict, "image " + image_id + " is not the served review item");
    }
    const auto dir = store_.dir(id);
    const auto img = read_image(dir / "images" / (image_id + ".png"));
    if (!same_shape(img, corrected)) {
        throw ServiceError(Kind::Invalid, fmt::format("mask is {}x{} but image {} is {}x{}", corrected.width(),
                                                      corrected.height(), image_id, img.width(), img.height()));
    }
    const auto shown = read_mask(dir / "proposals" / (image_id + ".png"));
    const auto proposal_meta = store_.read_json(id, std::filesystem::path("proposals") / (image_id + ".json"));

    OnlineSession session(f_star(id), system(r), r.config);
    const auto learned = session.learn(image_id, img, corrected);

    FeedbackEvent e;
    e.sequence = static_cast<int>(std::count_if(r.reviews.begin(), r.reviews.end(),
                                                [](const ReviewRecord& v) { return !v.skipped; })) + 1;
    e.image_id = image_id;
    e.mask = corrected;
    e.best_threshold = learned.best_threshold;
    e.rule_version = learned.rule_version;
    e.rule_count = learned.rule_count;
    e.jaccard = jaccard(shown, corrected).jaccard;
    e.kept_rows = learned.kept_rows;
    e.timestamp = utc_now();

    // Version files first, then the event, then the pointer in project.json.
    persist_system(id, session.system());
    write_mask_png(dir / "feedback" / fmt::format("{}.png", e.sequence), corrected);
    store_.write_json(id, std::filesystem::path("feedback") / fmt::format("{}.json", e.sequence), to_json(e));

    r.reviews.push_back({image_id, false, e.jaccard, proposal_meta.at("t_star").get<int>(), e.best_threshold,
                         e.rule_version, e.rule_count});
    r.rule_version = e.rule_version;
    r.served.reset();
    store_.save(r);
    spdlog::info("project {}: feedback on {} -> T_B {}, rule base v{} ({} rules)", id, image_id, e.best_threshold,
                 e.rule_version, e.rule_count);
    return e;
}

ProjectRecord ProjectService::skip_review(const std::string& id, const std::string& image_id) {
    std::unique_lock lock(lock_for(id));
    auto r = load(id);
    require_phase(r, Phase::Online, "skip");
    if (r.queue_head() != image_id || r.served != image_id) {
        throw ServiceError(Kind::Conflict, "image " + image_id + " is not the served review item");
    }
    ReviewRecord rr;
    rr.image_id = image_id;
    rr.skipped = true;
    rr.rule_version = r.rule_version;
    r.reviews.push_back(rr);
    r.served.reset();
    store_.save(r);
    spdlog::warn("project {}: no feedback for {}; skipped without evolution", id, image_id);
    return r;
}

RuleBase ProjectService::rules(const std::string& id, std::optional<int> version) const {
    std::shared_lock lock(lock_for(id));
    const auto r = load(id);
    if (r.rule_version < 0) throw ServiceError(Kind::Conflict, "project " + id + " has no rule base yet");
    const int v = version.value_or(r.rule_version);
    if (v < 0 || v > r.rule_version) throw ServiceError(Kind::NotFound, fmt::format("no rule base version {}", v));
    return rule_base_from_json(store_.read_json(id, rules_path(v)));
}

nlohmann::json ProjectService::metrics(const std::string& id) const {
    std::shared_lock lock(lock_for(id));
    const auto r = load(id);
    nlohmann::json trace = nlohmann::json::array();
    nlohmann::json history = nlohmann::json::array();
    for (const auto& v : r.reviews) {
        if (!v.skipped) trace.push_back(v.rule_count);
        history.push_back({{"image_id", v.image_id},
                           {"skipped", v.skipped},
                           {"jaccard", v.jaccard},
                           {"t_star", v.t_star},
                           {"best_threshold", v.best_threshold},
                           {"rule_version", v.rule_version}});
    }
    return {{"project", r.id},
            {"phase", to_string(r.phase)},
            {"rule_version", r.rule_version},
            {"initial_rules", r.initial_rules},
            {"rule_trace", trace},
            {"history", history},
            {"queue", {{"total", r.test_ids.size()}, {"reviewed", r.reviews.size()}}}};
}

TrialReport ProjectService::evaluate(const std::string& id) const {
    std::shared_lock lock(lock_for(id));
    const auto r = load(id);
    if (r.phase != Phase::Online) throw ServiceError(Kind::Conflict, "evaluation needs an online run");
    const auto table = thresholds_from_json(store_.read_json(id, "offline/thresholds.json"));
    const auto ds = dataset(r);
    TrialReport rep;
    rep.trial = 1;
    rep.split = {r.train_ids, r.test_ids};
    rep.initial_rules = r.initial_rules;
    std::vector<std::string> ids;
    std::vector<double> sc;
    for (const auto& v : r.reviews) {
        OnlineStep step;
        step.id = v.image_id;
        step.skipped = v.skipped;
        step.jaccard = v.jaccard;
        step.proposal.threshold = v.t_star;
        step.learning = {v.best_threshold, {}, v.rule_version, v.rule_count};
        rep.steps.push_back(std::move(step));
        if (v.skipped) continue;
        rep.rule_trace.push_back(v.rule_count);
        if (!ds.has_gold(v.image_id)) continue;
        ids.push_back(v.image_id);
        sc.push_back(v.jaccard);
    }
    if (ids.empty()) throw ServiceError(Kind::Conflict, "no reviewed image with a gold standard to evaluate");
    rep.methods = compare_baselines(ds, ids, table, sc, r.config);
    return rep;
}

GrayImage ProjectService::image(const std::string& id, const std::string& image_id) const {
    std::shared_lock lock(lock_for(id));
    const auto r = load(id);
    if (!r.has_image(image_id)) throw ServiceError(Kind::NotFound, "no image " + image_id);
    return read_image(store_.dir(id) / "images" / (image_id + ".png"));
}

BinaryMask ProjectService::gold(const std::string& id, const std::string& image_id) const {
    std::shared_lock lock(lock_for(id));
    const auto r = load(id);
    if (!r.has_gold(image_id)) throw ServiceError(Kind::NotFound, "no gold standard for " + image_id);
    return read_mask(store_.dir(id) / "gold" / (image_id + ".png"));
}

FeedbackEvent ProjectService::feedback_event(const std::string& id, int sequence) const {
    std::shared_lock lock(lock_for(id));
    load(id);
    const auto rel = std::filesystem::path("feedback") / fmt::format("{}.json", sequence);
    if (!std::filesystem::exists(store_.dir(id) / rel)) throw ServiceError(Kind::NotFound, fmt::format("no feedback event {}", sequence));
    const auto j = store_.read_json(id, rel);
    FeedbackEvent e;
    e.sequence = j.at("sequence").get<int>();
    e.image_id = j.at("image_id").get<std::string>();
    e.best_threshold = j.at("best_threshold").get<int>();
    e.rule_version = j.at("rule_version").get<int>();
    e.rule_count = j.at("rule_count").get<std::size_t>();
    e.jaccard = j.at("jaccard").get<double>();
    e.kept_rows = j.at("kept_rows").get<std::vector<int>>();
    e.timestamp = j.at("timestamp").get<std::string>();
    e.mask = read_mask(store_.dir(id) / "feedback" / fmt::format("{}.png", sequence));
    return e;
}

}  // namespace scefis
