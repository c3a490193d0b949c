#pragma once

// Command-line front end. run_cli() is the whole program; tools/groundcrit.cpp
// only forwards argv, which lets tests drive every subcommand in process.

#include <groundcrit/eval.hpp>
#include <groundcrit/http_backend.hpp>
#include <groundcrit/io.hpp>
#include <groundcrit/orchestrator.hpp>

#include "CLI11.hpp"

#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace groundcrit {

namespace exit_code {
inline constexpr int kOk = 0;
inline constexpr int kInternal = 1;
inline constexpr int kConfig = 2;
inline constexpr int kBackend = 3;
inline constexpr int kParseBudget = 4;
} // namespace exit_code

namespace cli {

namespace fs = std::filesystem;

/// Bad flag combination or value; reported with usage text, exit 2.
class UsageError : public Error {
public:
    using Error::Error;
};

struct CritiqueOptions {
    std::string image;
    std::string task_profile = "design-critique";
    std::string guidelines;
    std::string fewshot_db;
    std::string embeddings;
    std::string embedder = "hash";
    std::string embed_endpoint;
    std::string embed_model;
    std::string backend;
    std::string transcript;
    std::string endpoint;
    std::string model;
    std::string credential_env = "LLM_API_KEY";
    double timeout = 60.0;
    int max_retries = 2;
    std::string config;
    std::uint64_t seed = 0;
    std::string out_dir;
    bool no_filter = false;
    bool no_box_refine = false;
    bool no_validation = false;
    bool no_visual_prompting = false;
    bool ground_only = false;
    std::string comment;
    std::string task;
    int parallel_items = 0; // 0: keep config value
    std::string replay;
};

inline std::string absolute_or_empty(const std::string& p) {
    return p.empty() ? p : fs::absolute(p).lexically_normal().string();
}

inline GridBox parse_box_flag(const std::string& text, const GridSpace& space) {
    std::vector<double> v;
    std::string_view rest = text;
    while (true) {
        const auto comma = rest.find(',');
        const std::string piece(trim(rest.substr(0, comma)));
        std::size_t used = 0;
        double x = 0.0;
        try {
            x = std::stod(piece, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (piece.empty() || used != piece.size()) {
            throw UsageError("--box expects l,t,r,b numbers, got \"" + text + "\"");
        }
        v.push_back(x);
        if (comma == std::string_view::npos) {
            break;
        }
        rest.remove_prefix(comma + 1);
    }
    if (v.size() != 4) {
        throw UsageError("--box expects exactly four numbers, got \"" + text + "\"");
    }
    const GridBox b{v[0], v[1], v[2], v[3]};
    try {
        require_valid(b, space, "--box");
    } catch (const InvalidArgument& e) {
        throw UsageError(e.what());
    }
    return b;
}

// ---------------------------------------------------------------------------
// critique
// ---------------------------------------------------------------------------

inline ojson manifest_for(const CritiqueOptions& o, const PipelineConfig& cfg) {
    ojson m;
    m["schema"] = std::string(kManifestSchema);
    m["command"] = "critique";
    m["mode"] = o.ground_only ? "ground-only" : "full";
    m["image"] = absolute_or_empty(o.image);
    m["task_profile"] = o.task_profile;
    m["guidelines"] = absolute_or_empty(o.guidelines);
    m["fewshot_db"] = absolute_or_empty(o.fewshot_db);
    m["embeddings"] = absolute_or_empty(o.embeddings);
    m["comment"] = o.comment;
    m["seed"] = o.seed;
    m["config_path"] = absolute_or_empty(o.config);
    m["config"] = config_to_json(cfg);
    ojson chat;
    chat["kind"] = o.backend;
    if (o.backend == "scripted") {
        chat["transcript"] = absolute_or_empty(o.transcript);
    } else {
        chat["endpoint"] = o.endpoint;
        chat["model"] = o.model;
        chat["credential_env"] = o.credential_env;
        chat["timeout_seconds"] = o.timeout;
        chat["max_retries"] = o.max_retries;
    }
    ojson emb;
    emb["kind"] = o.embedder;
    if (o.embedder == "http") {
        emb["endpoint"] = o.embed_endpoint;
        emb["model"] = o.embed_model;
        emb["credential_env"] = o.credential_env;
    }
    m["backends"] = {{"chat", chat}, {"embedder", emb}};
    m["out_dir"] = absolute_or_empty(o.out_dir);
    return m;
}

/// Rebuilds options from a run directory's manifest. A remote run replays
/// from its recorded transcript through the scripted backend, serially so
/// responses are consumed in transcript order.
inline std::pair<CritiqueOptions, PipelineConfig> options_from_manifest(const fs::path& manifest_path,
                                                                        const std::string& out_dir) {
    ojson m;
    try {
        m = ojson::parse(read_text_file(manifest_path));
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(manifest_path.string(), 1, e.what());
    }
    if (m.value("schema", "") != kManifestSchema) {
        throw SchemaError(manifest_path.string(), 1, "not a run manifest");
    }
    try {
        CritiqueOptions o;
        o.image = m.at("image").get<std::string>();
        o.task_profile = m.at("task_profile").get<std::string>();
        o.guidelines = m.at("guidelines").get<std::string>();
        o.fewshot_db = m.at("fewshot_db").get<std::string>();
        o.embeddings = m.at("embeddings").get<std::string>();
        o.comment = m.at("comment").get<std::string>();
        o.ground_only = m.at("mode").get<std::string>() == "ground-only";
        o.seed = m.at("seed").get<std::uint64_t>();
        o.config = m.at("config_path").get<std::string>();
        PipelineConfig cfg = config_from_json(m.at("config"));
        const ojson& chat = m.at("backends").at("chat");
        o.backend = "scripted";
        if (chat.at("kind") == "scripted") {
            o.transcript = chat.at("transcript").get<std::string>();
        } else {
            o.transcript = (manifest_path.parent_path() / "transcript.jsonl").string();
            cfg.parallel_items = 1;
        }
        const ojson& emb = m.at("backends").at("embedder");
        o.embedder = emb.at("kind").get<std::string>();
        if (o.embedder == "http") {
            o.embed_endpoint = emb.at("endpoint").get<std::string>();
            o.embed_model = emb.at("model").get<std::string>();
            o.credential_env = emb.at("credential_env").get<std::string>();
        }
        o.out_dir = out_dir.empty() ? m.at("out_dir").get<std::string>() : out_dir;
        return {o, cfg};
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(manifest_path.string(), 1, e.what());
    } catch (const InvalidArgument& e) {
        throw SchemaError(manifest_path.string(), 1, e.what());
    }
}

inline PipelineConfig resolve_config(const CritiqueOptions& o) {
    PipelineConfig cfg;
    if (!o.config.empty()) {
        apply_config_text(cfg, read_text_file(o.config), o.config);
    }
    if (o.no_filter) {
        cfg.filtering_on = false;
    }
    if (o.no_box_refine) {
        cfg.box_refine_on = false;
    }
    if (o.no_validation) {
        cfg.validation_on = false;
    }
    if (o.no_visual_prompting) {
        cfg.visual_prompting_on = false;
    }
    if (o.parallel_items > 0) {
        cfg.parallel_items = o.parallel_items;
    }
    if (!o.task.empty()) {
        cfg.task_description = o.task;
    }
    return cfg;
}

inline void check_critique_options(const CritiqueOptions& o) {
    if (o.image.empty()) {
        throw UsageError("--image is required");
    }
    if (o.out_dir.empty()) {
        throw UsageError("--out-dir is required");
    }
    if (o.backend != "scripted" && o.backend != "http") {
        throw UsageError("--backend must be scripted or http");
    }
    if (o.backend == "scripted" && o.transcript.empty()) {
        throw UsageError("--backend scripted needs --transcript");
    }
    if (o.backend == "http" && !o.transcript.empty()) {
        throw UsageError("--transcript only applies to --backend scripted");
    }
    if (o.backend == "http" && (o.endpoint.empty() || o.model.empty())) {
        throw UsageError("--backend http needs --endpoint and --model");
    }
    if (o.embedder != "hash" && o.embedder != "http") {
        throw UsageError("--embedder must be hash or http");
    }
    if (o.ground_only && trim(o.comment).empty()) {
        throw UsageError("--ground-only needs --comment");
    }
    if (!o.ground_only && !o.comment.empty()) {
        throw UsageError("--comment only applies with --ground-only");
    }
}

inline int write_outputs(const fs::path& dir, const PipelineReport& report, const RasterImage& image,
                         const PipelineConfig& cfg, bool complete) {
    write_text_file(dir / "transcript.jsonl", transcript_jsonl(report.transcript));
    write_text_file(dir / (complete ? "report.json" : "report.partial.json"), dump_document(report_to_json(report)));
    if (complete) {
        write_png(dir / "annotated.png", draw_result_boxes(image, report.emitted(), cfg.space, cfg.style));
    }
    return 0;
}

inline void print_call_counts(std::ostream& out, const PipelineReport& report) {
    for (Stage s : kAllStages) {
        out << "calls " << stage_name(s) << ": " << report.calls(s) << "\n";
    }
    out << "calls total: " << report.total_calls() << "\n";
}

inline int run_critique(const CritiqueOptions& given, std::ostream& out, std::ostream& err) {
    CritiqueOptions o = given;
    PipelineConfig cfg;
    if (!o.replay.empty()) {
        std::tie(o, cfg) = options_from_manifest(o.replay, given.out_dir);
    } else {
        check_critique_options(o);
        cfg = resolve_config(o);
    }
    cfg.validate();

    const RasterImage image = read_png(o.image);
    const std::string guidelines = o.guidelines.empty() ? std::string() : read_text_file(o.guidelines);
    const TaskProfile profile = profile_by_name(o.task_profile, guidelines);

    BackendConfig chat_cfg;
    chat_cfg.endpoint = o.endpoint;
    chat_cfg.model = o.model;
    chat_cfg.credential_env = o.credential_env;
    chat_cfg.timeout_seconds = o.timeout;
    chat_cfg.max_retries = o.max_retries;

    std::shared_ptr<const EmbeddingProvider> embedder = std::make_shared<HashEmbedder>();
    if (o.embedder == "http") {
        BackendConfig ecfg = chat_cfg;
        ecfg.endpoint = o.embed_endpoint;
        ecfg.model = o.embed_model;
        embedder = std::make_shared<HttpEmbedder>(ecfg, embedder);
    }
    ExemplarStore store =
        o.fewshot_db.empty()
            ? ExemplarStore({}, embedder, cfg.space)
            : load_exemplar_store(o.fewshot_db, embedder, cfg.space,
                                  o.embeddings.empty() ? std::nullopt : std::optional<std::string>(o.embeddings));

    std::unique_ptr<ChatBackend> chat;
    if (o.backend == "scripted") {
        chat = std::make_unique<ScriptedBackend>(load_script(o.transcript));
    } else {
        chat = std::make_unique<HttpChatBackend>(chat_cfg);
    }
    Backends backends;
    backends.fallback = chat.get();

    const fs::path dir = o.out_dir;
    fs::create_directories(dir);
    write_text_file(dir / "manifest.json", dump_document(manifest_for(o, cfg)));

    Rng rng(o.seed);
    const std::string image_id = fs::path(o.image).filename().string();
    PipelineReport report;
    try {
        report = o.ground_only ? run_ground_only(image, o.comment, profile, store, backends, cfg, rng, image_id)
                               : run(image, profile, store, backends, cfg, rng, image_id);
    } catch (const PipelineAborted& e) {
        write_outputs(dir, e.partial(), image, cfg, false);
        print_call_counts(err, e.partial());
        err << "error: run aborted: " << e.what() << "\n";
        return e.cause() == PipelineAborted::Cause::Backend ? exit_code::kBackend : exit_code::kParseBudget;
    }
    write_outputs(dir, report, image, cfg, true);
    print_call_counts(out, report);
    out << "items: generated " << report.items.size() << ", filtered_out " << report.count(ItemStatus::FilteredOut)
        << ", discarded " << report.count(ItemStatus::Discarded) << ", emitted "
        << report.count(ItemStatus::Emitted) << "\n";
    out << "report: " << (dir / "report.json").string() << "\n";
    return exit_code::kOk;
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

struct EvaluateOptions {
    std::vector<std::string> preds;
    std::string dataset;
    std::string mode = "critique";
    std::string metrics;
    std::string embeddings;
    std::string out;
};

inline bool same_image(const std::string& a, const std::string& b) {
    return a == b || fs::path(a).filename() == fs::path(b).filename();
}

inline int run_evaluate(const EvaluateOptions& o, std::ostream& out) {
    if (o.preds.empty() || o.dataset.empty()) {
        throw UsageError("evaluate needs --pred and --dataset");
    }
    if (o.mode != "critique" && o.mode != "ovad" && o.mode != "ovd") {
        throw UsageError("--mode must be critique, ovad or ovd");
    }
    std::set<std::string> metrics;
    for (const auto& m : split_csv_list(o.metrics)) {
        metrics.insert(m);
    }
    const std::set<std::string> allowed =
        o.mode == "critique" ? std::set<std::string>{"similarity", "estimated_iou", "iou"} : std::set<std::string>{"map"};
    if (metrics.empty()) {
        metrics = allowed;
    }
    for (const auto& m : metrics) {
        if (!allowed.count(m)) {
            throw UsageError("metric \"" + m + "\" does not apply to mode " + o.mode);
        }
    }

    std::vector<ojson> reports;
    for (const auto& p : o.preds) {
        ojson j;
        try {
            j = ojson::parse(read_text_file(p));
        } catch (const nlohmann::json::exception& e) {
            throw SchemaError(p, 1, e.what());
        }
        const auto errs = check_report_schema(j);
        if (!errs.empty()) {
            throw SchemaError(p, 1, errs.front());
        }
        reports.push_back(std::move(j));
    }

    EvalReport rep;
    rep.mode = o.mode;
    rep.images = reports.size();
    if (o.mode == "critique") {
        const CritiqueGroundTruth gt = load_critique_dataset(o.dataset);
        std::shared_ptr<const EmbeddingProvider> embedder = std::make_shared<HashEmbedder>();
        if (!o.embeddings.empty()) {
            embedder = std::make_shared<TableEmbedder>(load_embedding_table(o.embeddings));
        }
        std::vector<double> sim;
        std::vector<double> est;
        std::vector<double> direct;
        for (std::size_t r = 0; r < reports.size(); ++r) {
            const std::string image = reports[r].value("image", "");
            const CritiqueImage* g = nullptr;
            for (const auto& c : gt) {
                if (same_image(c.image, image)) {
                    g = &c;
                    break;
                }
            }
            if (!g) {
                throw SchemaError(o.preds[r], 1, "image \"" + image + "\" is not in the dataset");
            }
            const auto preds = report_predictions(reports[r]);
            rep.predictions += preds.size();
            if (g->comments.empty()) {
                continue;
            }
            const auto a = comment_similarity(preds, g->comments, *embedder);
            sim.insert(sim.end(), a.scores.begin(), a.scores.end());
            const auto b = estimated_iou(preds, g->comments, *embedder);
            est.insert(est.end(), b.scores.begin(), b.scores.end());
            const auto c = direct_iou(preds, g->comments);
            direct.insert(direct.end(), c.scores.begin(), c.scores.end());
        }
        if (metrics.count("similarity")) {
            rep.comment_similarity = mean_of(sim);
        }
        if (metrics.count("estimated_iou")) {
            rep.estimated_iou = mean_of(est);
        }
        if (metrics.count("iou")) {
            rep.direct_iou = mean_of(direct);
        }
    } else {
        const DetectionGroundTruth gt = load_detection_dataset(o.dataset);
        std::vector<DetImage> preds;
        for (const auto& r : reports) {
            DetImage d = report_detections(r);
            for (const auto& g : gt.images) {
                if (same_image(g.image, d.image)) {
                    d.image = g.image;
                }
            }
            rep.predictions += d.objects.size();
            preds.push_back(std::move(d));
        }
        const MapMode mode = o.mode == "ovad" ? MapMode::OVAD : MapMode::OVD;
        const MapResult m = compute_map(preds, gt, mode);
        (mode == MapMode::OVAD ? rep.map_ovad : rep.map_ovd) = m.map;
        rep.per_category = m.per_category;
    }
    out << eval_report_table(rep);
    if (!o.out.empty()) {
        write_text_file(o.out, dump_document(eval_report_to_json(rep)));
    }
    return exit_code::kOk;
}

// ---------------------------------------------------------------------------
// render / snap
// ---------------------------------------------------------------------------

struct RenderOptions {
    std::string image;
    std::string mode = "axes";
    std::string box;
    std::string out;
    double context = kDefaultContextFrac;
    double grid_width = 9.0;
    double grid_height = 16.0;
};

inline int run_render(const RenderOptions& o, std::ostream& out) {
    if (o.image.empty() || o.out.empty()) {
        throw UsageError("render needs --image and --out");
    }
    const GridSpace space{o.grid_width, o.grid_height};
    if (!space.valid()) {
        throw UsageError("grid dimensions must be positive");
    }
    const RasterImage img = read_png(o.image);
    RasterImage result;
    if (o.mode == "axes") {
        if (!o.box.empty()) {
            throw UsageError("--box only applies to --mode patch");
        }
        result = draw_coordinate_axes(img, space);
    } else if (o.mode == "patch") {
        if (o.box.empty()) {
            throw UsageError("--mode patch needs --box l,t,r,b");
        }
        result = render_zoom_patch(img, parse_box_flag(o.box, space), space, {}, o.context);
    } else {
        throw UsageError("--mode must be axes or patch");
    }
    write_png(o.out, result);
    out << raster_checksum(result) << "  " << o.out << "\n";
    return exit_code::kOk;
}

struct SnapOptions {
    std::string pred;
    std::string dom;
    std::string out;
    double min_iou = kDefaultSnapIou;
    double grid_width = 9.0;
    double grid_height = 16.0;
};

inline int run_snap(const SnapOptions& o, std::ostream& out) {
    if (o.pred.empty() || o.dom.empty() || o.out.empty()) {
        throw UsageError("snap needs --pred, --dom and --out");
    }
    if (!(o.min_iou >= 0.0 && o.min_iou <= 1.0)) {
        throw UsageError("--min-iou must lie in [0, 1]");
    }
    const GridSpace space{o.grid_width, o.grid_height};
    ojson report;
    try {
        report = ojson::parse(read_text_file(o.pred));
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(o.pred, 1, e.what());
    }
    const auto errs = check_report_schema(report);
    if (!errs.empty()) {
        throw SchemaError(o.pred, 1, errs.front());
    }
    const auto dom = load_dom(o.dom, space);
    std::size_t snapped = 0;
    for (auto& it : report["items"]) {
        if (it["status"] != "emitted" || it["box"].is_null()) {
            continue;
        }
        const GridBox before = box_from_json(it["box"]);
        const GridBox after = snap_to_dom(before, dom, o.min_iou);
        if (!(after == before)) {
            it["box"] = box_to_json(after);
            ++snapped;
        }
    }
    write_text_file(o.out, dump_document(report));
    out << "snapped " << snapped << " box(es)\n";
    return exit_code::kOk;
}

} // namespace cli

/// Entry point. Returns the process exit code.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
    CLI::App app{"Grounded critique pipeline: critique, evaluate, render, snap", "groundcrit"};
    app.require_subcommand(1);

    cli::CritiqueOptions co;
    auto* critique = app.add_subcommand("critique", "Run the pipeline on one screenshot");
    critique->add_option("--image", co.image, "Input PNG");
    critique->add_option("--task-profile", co.task_profile, "design-critique or open-vocab-detection");
    critique->add_option("--guidelines", co.guidelines, "Guidelines text file");
    critique->add_option("--fewshot-db", co.fewshot_db, "Exemplar store (JSONL)");
    critique->add_option("--embeddings", co.embeddings, "Precomputed exemplar embedding table");
    critique->add_option("--embedder", co.embedder, "hash or http");
    critique->add_option("--embed-endpoint", co.embed_endpoint, "Embedding API base URL (--embedder http)");
    critique->add_option("--embed-model", co.embed_model, "Embedding model name (--embedder http)");
    critique->add_option("--backend", co.backend, "scripted or http");
    critique->add_option("--transcript", co.transcript, "Scripted transcript (JSONL)");
    critique->add_option("--endpoint", co.endpoint, "Chat API base URL (--backend http)");
    critique->add_option("--model", co.model, "Chat model name (--backend http)");
    critique->add_option("--credential-env", co.credential_env, "Environment variable holding the API key");
    critique->add_option("--timeout", co.timeout, "Per-request timeout in seconds");
    critique->add_option("--max-retries", co.max_retries, "Transport retries per request");
    critique->add_option("--config", co.config, "Flat key = value config file");
    critique->add_option("--seed", co.seed, "Seed for example synthesis");
    critique->add_option("--out-dir", co.out_dir, "Run directory");
    critique->add_flag("--no-filter", co.no_filter, "Skip TextFilter");
    critique->add_flag("--no-box-refine", co.no_box_refine, "Skip BoxRefine");
    critique->add_flag("--no-validation", co.no_validation, "Skip Validation and TextRefine");
    critique->add_flag("--no-visual-prompting", co.no_visual_prompting, "Send plain screenshots");
    critique->add_flag("--ground-only", co.ground_only, "Ground one given comment");
    critique->add_option("--comment", co.comment, "Comment for --ground-only");
    critique->add_option("--task", co.task, "Task description for exemplar selection");
    critique->add_option("--parallel-items", co.parallel_items, "Items grounded concurrently");
    critique->add_option("--replay", co.replay, "Replay a run from its manifest.json");

    cli::EvaluateOptions eo;
    auto* evaluate = app.add_subcommand("evaluate", "Score reports against a dataset");
    evaluate->add_option("--pred", eo.preds, "Report document (repeatable)");
    evaluate->add_option("--dataset", eo.dataset, "Ground-truth dataset (JSONL)");
    evaluate->add_option("--mode", eo.mode, "critique, ovad or ovd");
    evaluate->add_option("--metrics", eo.metrics, "Comma list: similarity,estimated_iou,iou or map");
    evaluate->add_option("--embeddings", eo.embeddings, "Precomputed embedding table");
    evaluate->add_option("--out", eo.out, "Write the eval report as JSON");

    cli::RenderOptions ro;
    auto* render = app.add_subcommand("render", "Draw the axis overlay or a zoom patch");
    render->add_option("--image", ro.image, "Input PNG");
    render->add_option("--mode", ro.mode, "axes or patch");
    render->add_option("--box", ro.box, "l,t,r,b in grid units (patch mode)");
    render->add_option("--context", ro.context, "Context margin as a fraction of box size");
    render->add_option("--grid-width", ro.grid_width, "Grid units across");
    render->add_option("--grid-height", ro.grid_height, "Grid units down");
    render->add_option("--out", ro.out, "Output PNG");

    cli::SnapOptions so;
    auto* snap = app.add_subcommand("snap", "Snap emitted boxes to DOM element bounds");
    snap->add_option("--pred", so.pred, "Report document");
    snap->add_option("--dom", so.dom, "DOM hierarchy (JSON)");
    snap->add_option("--min-iou", so.min_iou, "Minimum IoU for a snap");
    snap->add_option("--grid-width", so.grid_width, "Grid units across");
    snap->add_option("--grid-height", so.grid_height, "Grid units down");
    snap->add_option("--out", so.out, "Rewritten report");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return exit_code::kOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return exit_code::kOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return exit_code::kConfig;
    }

    CLI::App* active = critique->parsed()   ? critique
                       : evaluate->parsed() ? evaluate
                       : render->parsed()   ? render
                                            : snap;
    try {
        if (active == critique) {
            return cli::run_critique(co, out, err);
        }
        if (active == evaluate) {
            return cli::run_evaluate(eo, out);
        }
        if (active == render) {
            return cli::run_render(ro, out);
        }
        return cli::run_snap(so, out);
    } catch (const cli::UsageError& e) {
        err << "error: " << e.what() << "\n\n" << active->help();
        return exit_code::kConfig;
    } catch (const BackendError& e) {
        // Raised before the run starts (e.g. missing credential).
        err << "error: " << e.what() << "\n";
        return dynamic_cast<const ConfigurationError*>(&e) ? exit_code::kConfig : exit_code::kBackend;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return exit_code::kConfig;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << "\n";
        return exit_code::kInternal;
    }
}

} // namespace groundcrit
