#include "scefis/http_api.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "scefis/base64.hpp"
#include "scefis/image_io.hpp"

namespace scefis {

namespace {

using nlohmann::json;

void send(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

json body_of(const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    auto j = json::parse(req.body);
    if (!j.is_object()) throw std::invalid_argument("request body must be a JSON object");
    return j;
}

std::vector<UploadedFile> uploads(const json& body, const char* key) {
    std::vector<UploadedFile> out;
    if (!body.contains(key)) return out;
    for (const auto& f : body.at(key)) {
        out.push_back({f.at("name").get<std::string>(), base64_decode(f.at("data").get<std::string>())});
    }
    return out;
}

json project_json(const ProjectRecord& r) {
    auto j = to_json(r);
    j["queue_head"] = r.queue_head() ? json(*r.queue_head()) : json(nullptr);
    return j;
}

json ingest_json(const IngestResult& r) {
    return {{"added", r.added}, {"unchanged", r.unchanged}, {"count", r.total}, {"errors", r.errors}};
}

using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

/// Maps service and parsing errors onto status codes.
Handler guarded(Handler h) {
    return [h = std::move(h)](const httplib::Request& req, httplib::Response& res) {
        try {
            h(req, res);
        } catch (const ServiceError& e) {
            const int status = e.kind() == ServiceError::Kind::NotFound   ? 404
                               : e.kind() == ServiceError::Kind::Conflict ? 409
                                                                          : 400;
            send(res, status, {{"error", e.what()}});
        } catch (const json::exception& e) {
            send(res, 400, {{"error", std::string("bad JSON: ") + e.what()}});
        } catch (const ImageIoError& e) {
            send(res, 400, {{"error", e.what()}});
        } catch (const std::invalid_argument& e) {
            send(res, 400, {{"error", e.what()}});
        } catch (const std::exception& e) {
            spdlog::error("{} {}: {}", req.method, req.path, e.what());
            send(res, 500, {{"error", e.what()}});
        }
    };
}

}  // namespace

struct HttpApi::Impl {
    ProjectService& service;
    httplib::Server server;

    explicit Impl(ProjectService& s) : service(s) { routes(); }

    void routes() {
        server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                    {"Access-Control-Allow-Headers", "Content-Type"},
                                    {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
        server.Options(R"(/v1/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

        server.Get("/v1/projects", guarded([this](const httplib::Request&, httplib::Response& res) {
            send(res, 200, {{"projects", service.projects()}});
        }));

        server.Post("/v1/projects", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const auto body = body_of(req);
            const auto id = body.at("id").get<std::string>();
            const auto cfg = config_from_json(body.value("config", json::object()));
            IngestResult ingested;
            const auto r = service.create_project(id, cfg, &ingested);
            auto out = project_json(r);
            out["ingest"] = ingest_json(ingested);
            send(res, 201, out);
        }));

        server.Get("/v1/projects/:id", guarded([this](const httplib::Request& req, httplib::Response& res) {
            send(res, 200, project_json(service.project(req.path_params.at("id"))));
        }));

        server.Post("/v1/projects/:id/images", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const auto body = body_of(req);
            const auto r = service.ingest_images(req.path_params.at("id"), uploads(body, "images"), uploads(body, "gold"));
            send(res, 200, ingest_json(r));
        }));

        server.Get("/v1/projects/:id/images/:image", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const auto png = encode_png(service.image(req.path_params.at("id"), req.path_params.at("image")));
            res.set_content(std::string(png.begin(), png.end()), "image/png");
        }));

        server.Post("/v1/projects/:id/configure", guarded([this](const httplib::Request& req, httplib::Response& res) {
            send(res, 200, service.configure(req.path_params.at("id")));
        }));

        server.Post("/v1/projects/:id/offline", guarded([this](const httplib::Request& req, httplib::Response& res) {
            json table = json::object();
            for (const auto& [id, m] : service.offline(req.path_params.at("id"))) {
                table[id] = {{"t_star", m.t_star}, {"j_max", m.j_max}};
            }
            send(res, 200, {{"thresholds", table}});
        }));

        server.Post("/v1/projects/:id/train", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const auto body = body_of(req);
            std::optional<std::vector<std::string>> train_ids, test_ids;
            if (body.contains("train_ids")) train_ids = body.at("train_ids").get<std::vector<std::string>>();
            if (body.contains("test_ids")) test_ids = body.at("test_ids").get<std::vector<std::string>>();
            send(res, 200, project_json(service.train(req.path_params.at("id"), train_ids, test_ids)));
        }));

        server.Post("/v1/projects/:id/online", guarded([this](const httplib::Request& req, httplib::Response& res) {
            send(res, 200, project_json(service.start_online(req.path_params.at("id"))));
        }));

        server.Get("/v1/projects/:id/review/next", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const auto item = service.next_review_item(req.path_params.at("id"));
            if (!item) {
                send(res, 200, {{"empty", true}});
                return;
            }
            send(res, 200,
                 {{"empty", false},
                  {"image_id", item->image_id},
                  {"width", item->image.width()},
                  {"height", item->image.height()},
                  {"image_png", base64_encode(encode_png(item->image))},
                  {"mask_png", base64_encode(encode_mask_png(item->proposal))},
                  {"t_star", item->t_star},
                  {"t_o", item->outputs},
                  {"membership", item->fusion.membership},
                  {"position", item->position},
                  {"queue_size", item->queue_size}});
        }));

        server.Post("/v1/projects/:id/review/:image/feedback",
                    guarded([this](const httplib::Request& req, httplib::Response& res) {
                        const auto body = body_of(req);
                        const auto mask = decode_mask(base64_decode(body.at("mask").get<std::string>()));
                        const auto e = service.submit_feedback(req.path_params.at("id"), req.path_params.at("image"), mask);
                        send(res, 200, to_json(e));
                    }));

        server.Post("/v1/projects/:id/review/:image/skip", guarded([this](const httplib::Request& req, httplib::Response& res) {
            send(res, 200, project_json(service.skip_review(req.path_params.at("id"), req.path_params.at("image"))));
        }));

        server.Get("/v1/projects/:id/feedback/:seq", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const auto e = service.feedback_event(req.path_params.at("id"), std::stoi(req.path_params.at("seq")));
            auto j = to_json(e);
            j["mask_png"] = base64_encode(encode_mask_png(e.mask));
            send(res, 200, j);
        }));

        server.Get("/v1/projects/:id/rules", guarded([this](const httplib::Request& req, httplib::Response& res) {
            std::optional<int> version;
            if (req.has_param("version")) version = std::stoi(req.get_param_value("version"));
            send(res, 200, to_json(service.rules(req.path_params.at("id"), version)));
        }));

        server.Get("/v1/projects/:id/metrics", guarded([this](const httplib::Request& req, httplib::Response& res) {
            send(res, 200, service.metrics(req.path_params.at("id")));
        }));

        server.Get("/v1/projects/:id/evaluate", guarded([this](const httplib::Request& req, httplib::Response& res) {
            send(res, 200, to_json(service.evaluate(req.path_params.at("id"))));
        }));
    }
};

HttpApi::HttpApi(ProjectService& service) : impl_(std::make_unique<Impl>(service)) {}
HttpApi::~HttpApi() { stop(); }

int HttpApi::bind(const std::string& host, int port) { return impl_->server.bind_to_port(host, port) ? port : -1; }
int HttpApi::bind_any_port(const std::string& host) { return impl_->server.bind_to_any_port(host); }
bool HttpApi::listen_after_bind() { return impl_->server.listen_after_bind(); }
void HttpApi::stop() {
    if (impl_->server.is_running()) impl_->server.stop();
}
bool HttpApi::is_running() const { return impl_->server.is_running(); }
void HttpApi::wait_until_ready() const { impl_->server.wait_until_ready(); }

}  // namespace scefis
