#include <doctest.h>

#include <filesystem>
#include <thread>

#include "scefis/base64.hpp"
#include "scefis/http_api.hpp"
#include "scefis/image_io.hpp"
#include "scefis/service.hpp"
#include "scefis/synthetic.hpp"

// After Eigen: resolv.h, pulled in by httplib, defines a `_res` macro.
#include <httplib.h>

using namespace scefis;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TempRoot {
    fs::path path;
    explicit TempRoot(const std::string& name) : path(fs::temp_directory_path() / ("scefis_" + name)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempRoot() { fs::remove_all(path); }
};

const std::vector<SyntheticCase>& cases() {
    static const auto c = [] {
        SyntheticOptions o;
        o.count = 35;
        o.seed = 5;
        o.min_rows = 70;
        o.max_rows = 90;
        o.min_cols = 90;
        o.max_cols = 110;
        return generate_synthetic(o);
    }();
    return c;
}

std::vector<UploadedFile> image_files(int count) {
    std::vector<UploadedFile> out;
    for (int i = 0; i < count; ++i) out.push_back({cases()[static_cast<std::size_t>(i)].id + ".png", encode_png(cases()[static_cast<std::size_t>(i)].image)});
    return out;
}

std::vector<UploadedFile> gold_files(int count) {
    std::vector<UploadedFile> out;
    for (int i = 0; i < count; ++i) out.push_back({cases()[static_cast<std::size_t>(i)].id + ".png", encode_mask_png(cases()[static_cast<std::size_t>(i)].gold)});
    return out;
}

ServiceError::Kind kind_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const ServiceError& e) {
        return e.kind();
    }
    FAIL("expected a ServiceError");
    return ServiceError::Kind::Invalid;
}

/// Creates, ingests, configures, computes the offline table, trains and goes online.
void ready_project(ProjectService& s, const std::string& id, int count = 35) {
    s.create_project(id, ProjectConfig{});
    const auto ing = s.ingest_images(id, image_files(count), gold_files(count));
    REQUIRE(ing.errors.empty());
    s.configure(id);
    s.offline(id);
    s.train(id);
    s.start_online(id);
}

}  // namespace

TEST_CASE("project ids") {
    CHECK(valid_project_id("abc-1_X"));
    CHECK_FALSE(valid_project_id(""));
    CHECK_FALSE(valid_project_id("../x"));
    CHECK_FALSE(valid_project_id(std::string(65, 'a')));
}

TEST_CASE("phases are enforced in order") {
    TempRoot root("phases");
    ProjectService s(root.path);
    s.create_project("p", ProjectConfig{});
    CHECK(s.project("p").phase == Phase::Created);
    CHECK(kind_of([&] { s.create_project("p", ProjectConfig{}); }) == ServiceError::Kind::Conflict);
    CHECK(kind_of([&] { s.project("missing"); }) == ServiceError::Kind::NotFound);
    CHECK(kind_of([&] { s.create_project("bad id", ProjectConfig{}); }) == ServiceError::Kind::Invalid);
    CHECK(kind_of([&] { s.offline("p"); }) == ServiceError::Kind::Conflict);
    CHECK(kind_of([&] { s.train("p"); }) == ServiceError::Kind::Conflict);
    CHECK(kind_of([&] { s.configure("p"); }) == ServiceError::Kind::Invalid);

    s.ingest_images("p", image_files(6), gold_files(6));
    s.configure("p");
    CHECK(s.project("p").phase == Phase::Configured);
    CHECK(kind_of([&] { s.ingest_images("p", image_files(1)); }) == ServiceError::Kind::Conflict);
    CHECK(kind_of([&] { s.start_online("p"); }) == ServiceError::Kind::Conflict);
    s.offline("p");
    CHECK(s.project("p").phase == Phase::OfflineDone);
    CHECK(kind_of([&] { s.train("p", std::vector<std::string>{"nope"}); }) == ServiceError::Kind::Invalid);
    const auto r = s.train("p");
    CHECK(r.phase == Phase::Trained);
    CHECK(r.rule_version == 0);
    CHECK(r.test_ids.size() == 1);
    s.start_online("p");
    CHECK(s.project("p").phase == Phase::Online);
    CHECK(s.projects() == std::vector<std::string>{"p"});
}

TEST_CASE("ingest is idempotent and reports corrupt files") {
    TempRoot root("ingest");
    ProjectService s(root.path);
    s.create_project("p", ProjectConfig{});
    auto files = image_files(3);
    files.push_back({"broken.png", {1, 2, 3, 4}});
    const auto a = s.ingest_images("p", files, gold_files(3));
    CHECK(a.added == 3);
    CHECK(a.total == 3);
    CHECK(a.errors.count("broken.png") == 1);

    const auto b = s.ingest_images("p", image_files(3), gold_files(3));
    CHECK(b.added == 0);
    CHECK(b.unchanged == 3);
    CHECK(b.total == 3);
    CHECK(b.errors.empty());

    std::vector<UploadedFile> clash = {{cases()[0].id + ".png", encode_png(cases()[1].image)}};
    CHECK(s.ingest_images("p", clash).errors.size() == 1);

    std::vector<UploadedFile> wrong_gold = {{cases()[0].id + ".png", encode_mask_png(BinaryMask(3, 3))}};
    CHECK(s.ingest_images("p", {}, wrong_gold).errors.size() == 1);
    std::vector<UploadedFile> orphan = {{"ghost.png", encode_mask_png(BinaryMask(3, 3))}};
    CHECK(s.ingest_images("p", {}, orphan).errors.size() == 1);
    CHECK(s.image("p", cases()[2].id) == cases()[2].image);
    CHECK(s.gold("p", cases()[2].id) == cases()[2].gold);
}

TEST_CASE("review queue, feedback and versions") {
    TempRoot root("review");
    ProjectService s(root.path);
    ready_project(s, "p");
    const auto rec = s.project("p");
    REQUIRE(rec.test_ids.size() == 7);
    CHECK(rec.train_ids.size() == 28);

    int expected_version = 0;
    for (int i = 0; i < 7; ++i) {
        const auto item = s.next_review_item("p");
        REQUIRE(item.has_value());
        CHECK(item->position == i + 1);
        CHECK(item->queue_size == 7);
        CHECK(item->outputs.size() == 8);
        // Fetching again serves the same item.
        CHECK(s.next_review_item("p")->image_id == item->image_id);

        if (i == 0) {
            CHECK(kind_of([&] { s.submit_feedback("p", item->image_id, BinaryMask(2, 2)); }) == ServiceError::Kind::Invalid);
            CHECK(kind_of([&] { s.submit_feedback("p", rec.test_ids[1], item->proposal); }) == ServiceError::Kind::Conflict);
        }
        if (i == 2) {
            s.skip_review("p", item->image_id);
            CHECK(s.project("p").rule_version == expected_version);
            continue;
        }
        BinaryMask mask = item->proposal;
        if (i % 2 == 1) mask = s.gold("p", item->image_id);
        const auto e = s.submit_feedback("p", item->image_id, mask);
        ++expected_version;
        CHECK(e.rule_version == expected_version);
        CHECK(s.project("p").rule_version == expected_version);
        CHECK(s.rules("p").version == expected_version);

        if (i % 2 == 0) {
            // Accepting the proposal as the gold standard reproduces its segmentation.
            CHECK(e.jaccard == 1.0);
            CHECK(apply_threshold(item->image, e.best_threshold) == item->proposal);
        }
        const auto stored = s.feedback_event("p", e.sequence);
        CHECK(stored.mask == mask);
        CHECK(encode_mask_png(stored.mask) == encode_mask_png(mask));
        CHECK(kind_of([&] { s.submit_feedback("p", item->image_id, mask); }) == ServiceError::Kind::Conflict);
    }
    CHECK_FALSE(s.next_review_item("p").has_value());
    CHECK(s.rules("p", 0).version == 0);
    CHECK(kind_of([&] { s.rules("p", 99); }) == ServiceError::Kind::NotFound);

    const auto m = s.metrics("p");
    CHECK(m.is_object());
    const auto rep = s.evaluate("p");
    CHECK(rep.method(kMaa).jaccard.size() == 6);
    for (std::size_t i = 0; i < 6; ++i) CHECK(rep.method(kMaa).jaccard[i] >= rep.method(kOtsu).jaccard[i]);

    // Everything survives a restart of the service.
    ProjectService reopened(root.path);
    CHECK(reopened.project("p").reviews.size() == 7);
    CHECK(reopened.rules("p").version == expected_version);
}

TEST_CASE("base64") {
    const std::vector<std::uint8_t> bytes = {0, 1, 2, 250, 251, 252, 253};
    CHECK(base64_encode(bytes) == "AAEC+vv8/Q==");
    CHECK(base64_decode("AAEC+vv8/Q==") == bytes);
    CHECK(base64_decode("AAEC\n+vv8/Q==") == bytes);
    CHECK_THROWS(base64_decode("@@@"));
}

TEST_CASE("HTTP round trip with a one-pixel edit") {
    TempRoot root("http");
    ProjectService s(root.path);
    HttpApi api(s);
    const int port = api.bind_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::thread server([&] { api.listen_after_bind(); });
    api.wait_until_ready();

    httplib::Client cli("127.0.0.1", port);
    auto post = [&](const std::string& path, const json& body) {
        auto res = cli.Post(path, body.dump(), "application/json");
        REQUIRE(res);
        return std::pair{res->status, json::parse(res->body)};
    };
    auto get = [&](const std::string& path) {
        auto res = cli.Get(path);
        REQUIRE(res);
        return std::pair{res->status, json::parse(res->body)};
    };

    CHECK(post("/v1/projects", {{"id", "web"}}).first == 201);
    CHECK(post("/v1/projects", {{"id", "web"}}).first == 409);
    CHECK(get("/v1/projects/nothing").first == 404);
    CHECK(post("/v1/projects", {{"config", json::object()}}).first == 400);

    json images = json::array(), gold = json::array();
    for (int i = 0; i < 10; ++i) {
        images.push_back({{"name", cases()[static_cast<std::size_t>(i)].id + ".png"}, {"data", base64_encode(encode_png(cases()[static_cast<std::size_t>(i)].image))}});
        gold.push_back({{"name", cases()[static_cast<std::size_t>(i)].id + ".png"}, {"data", base64_encode(encode_mask_png(cases()[static_cast<std::size_t>(i)].gold))}});
    }
    const auto [ing_status, ing] = post("/v1/projects/web/images", {{"images", images}, {"gold", gold}});
    CHECK(ing_status == 200);
    CHECK(ing.at("count") == 10);

    CHECK(post("/v1/projects/web/configure", json::object()).first == 200);
    CHECK(post("/v1/projects/web/offline", json::object()).first == 200);
    CHECK(post("/v1/projects/web/train", json::object()).first == 200);
    CHECK(post("/v1/projects/web/online", json::object()).first == 200);

    const auto [next_status, item] = get("/v1/projects/web/review/next");
    REQUIRE(next_status == 200);
    REQUIRE(item.at("empty") == false);
    const auto image_id = item.at("image_id").get<std::string>();
    auto mask = decode_mask(base64_decode(item.at("mask_png").get<std::string>()));
    CHECK(mask.width() == item.at("width").get<int>());
    mask.at(0, 0) = mask.at(0, 0) ? 0 : 1;
    const auto submitted = encode_mask_png(mask);

    const int before = get("/v1/projects/web").second.at("rule_version").get<int>();
    const auto [fb_status, event] =
        post("/v1/projects/web/review/" + image_id + "/feedback", {{"mask", base64_encode(submitted)}});
    REQUIRE(fb_status == 200);
    CHECK(event.at("rule_version").get<int>() == before + 1);
    CHECK(get("/v1/projects/web").second.at("rule_version").get<int>() == before + 1);

    const auto [ev_status, stored] = get("/v1/projects/web/feedback/" + std::to_string(event.at("sequence").get<int>()));
    CHECK(ev_status == 200);
    CHECK(base64_decode(stored.at("mask_png").get<std::string>()) == submitted);
    CHECK(s.feedback_event("web", event.at("sequence").get<int>()).mask == mask);

    CHECK(post("/v1/projects/web/review/" + image_id + "/feedback", {{"mask", base64_encode(submitted)}}).first == 409);
    CHECK(post("/v1/projects/web/review/x/feedback", {{"mask", "not base64!"}}).first == 400);
    CHECK(get("/v1/projects/web/rules?version=1").second.at("version") == 1);
    CHECK(get("/v1/projects/web/metrics").first == 200);
    for (auto next = get("/v1/projects/web/review/next").second; next.at("empty") == false;
         next = get("/v1/projects/web/review/next").second) {
        CHECK(post("/v1/projects/web/review/" + next.at("image_id").get<std::string>() + "/skip", json::object()).first == 200);
    }
    CHECK(get("/v1/projects/web").second.at("rule_version").get<int>() == before + 1);
    CHECK(get("/v1/projects/web/evaluate").first == 200);

    auto png = cli.Get("/v1/projects/web/images/" + image_id);
    REQUIRE(png);
    CHECK(png->get_header_value("Content-Type") == "image/png");
    CHECK(decode_image(std::vector<std::uint8_t>(png->body.begin(), png->body.end())) == s.image("web", image_id));
    CHECK(png->get_header_value("Access-Control-Allow-Origin") == "*");

    api.stop();
    server.join();
}
