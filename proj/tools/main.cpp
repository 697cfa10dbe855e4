#include <poll.h>
#include <unistd.h>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "scefis/http_api.hpp"
#include "scefis/image_io.hpp"
#include "scefis/pipeline.hpp"
#include "scefis/service.hpp"
#include "scefis/synthetic.hpp"

namespace fs = std::filesystem;
using namespace scefis;

namespace {

struct ProjectRef {
    fs::path root;
    std::string id;
};

ProjectRef project_ref(const fs::path& dir) {
    const auto abs = fs::absolute(dir).lexically_normal();
    auto id = abs.filename().string();
    auto root = abs.parent_path();
    if (id.empty()) {
        id = root.filename().string();
        root = root.parent_path();
    }
    return {root, id};
}

std::vector<std::string> split_ids(const std::string& csv) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(csv);
    while (std::getline(is, cur, ','))
        if (!cur.empty()) out.push_back(cur);
    return out;
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    write_text_atomic(path, text);
}

/// Reads one line from stdin, or nullopt on timeout/EOF.
std::optional<std::string> read_line(int timeout_seconds) {
    pollfd p{STDIN_FILENO, POLLIN, 0};
    const int ready = ::poll(&p, 1, timeout_seconds < 0 ? -1 : timeout_seconds * 1000);
    if (ready <= 0) return std::nullopt;
    std::string line;
    if (!std::getline(std::cin, line)) return std::nullopt;
    return line;
}

struct Common {
    fs::path project;
    fs::path config_file;
    std::string orientation;
    std::optional<std::uint64_t> seed;
};

ProjectConfig load_config(const Common& c) {
    ProjectConfig cfg;
    if (!c.config_file.empty()) {
        std::ifstream in(c.config_file);
        if (!in) throw std::runtime_error("cannot open config " + c.config_file.string());
        cfg = config_from_json(nlohmann::json::parse(in));
    }
    if (!c.orientation.empty()) cfg.orientation = orientation_from_string(c.orientation);
    if (c.seed) cfg.seed = *c.seed;
    return cfg;
}

void print_report(const TrialReport& rep) {
    std::cout << markdown_table({rep});
    std::cout << "rule trace:";
    for (auto n : rep.rule_trace) std::cout << ' ' << n;
    std::cout << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Self-configuring evolving fuzzy image thresholding"};
    app.require_subcommand(1);
    std::string log_level = "info";
    app.add_option("--log-level", log_level, "trace|debug|info|warn|error|off")->capture_default_str();

    Common common;
    auto add_project = [&](CLI::App* sub) {
        sub->add_option("--project", common.project, "Project directory (its name is the project id)")->required();
    };

    // synth
    auto* synth = app.add_subcommand("synth", "Write the synthetic ultrasound-like dataset");
    fs::path synth_out;
    SyntheticOptions synth_opts;
    synth->add_option("--out", synth_out, "Output directory (images/ and gold/)")->required();
    synth->add_option("--count", synth_opts.count)->capture_default_str();
    synth->add_option("--seed", synth_opts.seed)->capture_default_str();

    // configure
    auto* configure = app.add_subcommand("configure", "Create a project from image/gold directories and self-configure");
    add_project(configure);
    fs::path images_dir, gold_dir;
    configure->add_option("--images", images_dir, "Image directory (PNG/PGM)");
    configure->add_option("--gold", gold_dir, "Gold-standard mask directory");
    configure->add_option("--config", common.config_file, "ProjectConfig JSON");
    configure->add_option("--orientation", common.orientation, "dark|bright object");
    configure->add_option("--seed", common.seed, "Split seed");

    auto* offline = app.add_subcommand("offline", "Compute the optimal-threshold table");
    add_project(offline);

    auto* train = app.add_subcommand("train", "Train the initial rule base");
    add_project(train);
    std::string train_ids, test_ids;
    train->add_option("--train-ids", train_ids, "Comma-separated training ids (default: seeded split)");
    train->add_option("--test-ids", test_ids, "Comma-separated test ids");

    auto* run = app.add_subcommand("run", "Online phase: propose, collect feedback, evolve");
    add_project(run);
    std::string feedback_mode = "replay";
    int timeout = 300;
    fs::path review_dir;
    run->add_option("--feedback", feedback_mode, "replay|interactive")
        ->check(CLI::IsMember({"replay", "interactive"}))
        ->capture_default_str();
    run->add_option("--timeout", timeout, "Interactive answer timeout in seconds")->capture_default_str();
    run->add_option("--review-dir", review_dir, "Where proposals are written in interactive mode");

    auto* evaluate = app.add_subcommand("evaluate", "Compare the online run with the baselines");
    add_project(evaluate);
    fs::path eval_out;
    evaluate->add_option("--out", eval_out, "Directory for report.json, table.md, rule_trace.csv");

    auto* crossval = app.add_subcommand("crossval", "Seeded leave-n-images-out cross-validation with replay feedback");
    fs::path cv_images, cv_gold, cv_out;
    int folds = 10;
    unsigned threads = 0;
    crossval->add_option("--images", cv_images)->required();
    crossval->add_option("--gold", cv_gold)->required();
    crossval->add_option("--folds", folds)->capture_default_str();
    crossval->add_option("--seed", common.seed);
    crossval->add_option("--config", common.config_file, "ProjectConfig JSON");
    crossval->add_option("--orientation", common.orientation, "dark|bright object");
    crossval->add_option("--threads", threads, "Worker threads (0 = all cores)")->capture_default_str();
    crossval->add_option("--out", cv_out, "Directory for crossval.json, table.md, rule_trace.csv");

    auto* serve = app.add_subcommand("serve", "Serve the /v1 HTTP API over a project root");
    fs::path serve_root = "projects";
    std::string host = "127.0.0.1";
    int port = 8080;
    serve->add_option("--root", serve_root)->capture_default_str();
    serve->add_option("--host", host)->capture_default_str();
    serve->add_option("--port", port)->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    spdlog::set_default_logger(spdlog::stderr_color_mt("scefis"));
    spdlog::set_level(spdlog::level::from_str(log_level));

    try {
        if (*synth) {
            write_dataset(synth_out, generate_synthetic(synth_opts));
            std::cout << fmt::format("wrote {} images to {}\n", synth_opts.count, synth_out.string());
            return 0;
        }
        if (*crossval) {
            auto cfg = load_config(common);
            cfg.folds = folds;
            cfg.image_dir = cv_images;
            cfg.gold_dir = cv_gold;
            cfg.validate(true);
            const auto ds = load_dataset(cv_images, cv_gold);
            const auto sc = self_configure(ds, cfg);
            const auto table = offline_optimal(ds, cfg);
            const auto cv = cross_validate(ds, sc.f_star(), table, cfg, threads);
            const auto md = markdown_table(cv.trials);
            std::cout << md << "\naggregate mean J:\n";
            for (const auto& [name, mean] : cv.aggregate_mean) std::cout << fmt::format("  {:<16} {:.4f}\n", name, mean);
            if (!cv_out.empty()) {
                write_text(cv_out / "crossval.json", to_json(cv).dump(2) + "\n");
                write_text(cv_out / "table.md", md);
                write_text(cv_out / "rule_trace.csv", rule_trace_csv(cv.trials));
                write_text(cv_out / "selection.json", sc.report().dump(2) + "\n");
            }
            return 0;
        }
        if (*serve) {
            ProjectService service(serve_root);
            HttpApi api(service);
            if (api.bind(host, port) < 0) throw std::runtime_error(fmt::format("cannot bind {}:{}", host, port));
            spdlog::info("serving {} on http://{}:{}/v1", serve_root.string(), host, port);
            return api.listen_after_bind() ? 0 : 1;
        }

        const auto ref = project_ref(common.project);
        ProjectService service(ref.root);

        if (*configure) {
            if (!service.store().exists(ref.id)) {
                auto cfg = load_config(common);
                cfg.image_dir = images_dir;
                cfg.gold_dir = gold_dir;
                IngestResult ingested;
                service.create_project(ref.id, cfg, &ingested);
                std::cout << fmt::format("ingested {} images ({} errors)\n", ingested.total, ingested.errors.size());
                for (const auto& [file, err] : ingested.errors) std::cerr << file << ": " << err << '\n';
            }
            const auto report = service.configure(ref.id);
            std::cout << fmt::format("Z = {}\nwidths N_T, N_T1, N_T2, N_T3, N_L = {}\nF* = {}\n", report.at("z").get<int>(),
                                     report.at("widths").dump(), report.at("f_star_columns").dump());
        } else if (*offline) {
            for (const auto& [id, m] : service.offline(ref.id)) std::cout << fmt::format("{}\t{}\t{:.4f}\n", id, m.t_star, m.j_max);
        } else if (*train) {
            std::optional<std::vector<std::string>> tr, te;
            if (!train_ids.empty()) tr = split_ids(train_ids);
            if (!test_ids.empty()) te = split_ids(test_ids);
            const auto r = service.train(ref.id, tr, te);
            std::cout << fmt::format("trained on {} images, {} rules; review queue: {}\n", r.train_ids.size(), r.initial_rules,
                                     fmt::join(r.test_ids, ","));
        } else if (*run) {
            if (service.project(ref.id).phase == Phase::Trained) service.start_online(ref.id);
            const bool interactive = feedback_mode == "interactive";
            const auto out_dir = review_dir.empty() ? service.store().dir(ref.id) / "review" : review_dir;
            while (auto item = service.next_review_item(ref.id)) {
                std::optional<BinaryMask> corrected;
                if (interactive) {
                    const auto img_path = out_dir / (item->image_id + "_image.png");
                    const auto seg_path = out_dir / (item->image_id + "_proposal.png");
                    write_png(img_path, item->image);
                    write_mask_png(seg_path, item->proposal);
                    std::cerr << fmt::format("[{}/{}] {}: T* = {} proposal at {}\n", item->position, item->queue_size,
                                             item->image_id, item->t_star, seg_path.string())
                              << "corrected mask path (empty line accepts the proposal): " << std::flush;
                    if (auto line = read_line(timeout)) {
                        corrected = line->empty() ? item->proposal : read_mask(*line);
                    }
                } else if (service.project(ref.id).has_gold(item->image_id)) {
                    corrected = service.gold(ref.id, item->image_id);
                }
                if (!corrected) {
                    service.skip_review(ref.id, item->image_id);
                    continue;
                }
                const auto e = service.submit_feedback(ref.id, item->image_id, *corrected);
                std::cout << fmt::format("{}\tT*={}\tJ={:.4f}\tT_B={}\trules={}\tv{}\n", e.image_id, item->t_star, e.jaccard,
                                         e.best_threshold, e.rule_count, e.rule_version);
            }
        } else if (*evaluate) {
            const auto rep = service.evaluate(ref.id);
            print_report(rep);
            if (!eval_out.empty()) {
                write_text(eval_out / "report.json", to_json(rep).dump(2) + "\n");
                write_text(eval_out / "table.md", markdown_table({rep}));
                write_text(eval_out / "rule_trace.csv", rule_trace_csv({rep}));
            }
        }
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return 1;
    }
    return 0;
}
