#pragma once

#include <groundcrit/backends.hpp>
#include <groundcrit/detection.hpp>
#include <groundcrit/fewshot.hpp>
#include <groundcrit/geometry.hpp>
#include <groundcrit/imaging.hpp>
#include <groundcrit/parsers.hpp>
#include <groundcrit/prompts.hpp>

#include <array>
#include <atomic>
#include <exception>
#include <functional>
#include <optional>
#include <string>
#include <thread>
#include <variant>
#include <vector>

namespace groundcrit {

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

struct PipelineConfig {
    int max_box_refine_iters = 5;
    int max_text_refine_iters = 5;
    int max_validation_cycles = 2;
    int parse_retry = 1;

    // Few-shot example counts per stage. 0 gives the zero-shot variant.
    int k_textgen = 4;
    int k_filter = 4;
    int k_box_gen = 3;
    int k_box_refine = 3;
    int k_validation = 3;
    int k_text_refine = 3;
    int k_invalid = 2;          // injected items per filter example
    int text_refine_steps = 2;  // distractors per synthetic text trace
    PerturbConfig perturb{};

    bool filtering_on = true;
    bool box_refine_on = true;
    bool validation_on = true;
    bool visual_prompting_on = true;

    GridSpace space{};
    AnnotationStyle style{};
    double context_frac = kDefaultContextFrac;
    double temperature = 0.0;
    int parallel_items = 1;
    std::string task_description;

    void validate() const {
        const int budgets[] = {max_box_refine_iters, max_text_refine_iters, max_validation_cycles,
                               parse_retry, k_textgen, k_filter, k_box_gen, k_box_refine,
                               k_validation, k_text_refine, k_invalid};
        for (int b : budgets) {
            if (b < 0) {
                throw InvalidArgument("PipelineConfig: budgets and example counts must be >= 0");
            }
        }
        if (text_refine_steps < 1 || perturb.max_num_perturb < 1 || parallel_items < 1) {
            throw InvalidArgument(
                "PipelineConfig: text_refine_steps, max_num_perturb and parallel_items must be >= 1");
        }
        if (!space.valid() || !(context_frac >= 0.0) || !(temperature >= 0.0)) {
            throw InvalidArgument("PipelineConfig: invalid grid space, context or temperature");
        }
        validate_style(style);
    }
};

enum class ItemStatus { Generated, FilteredOut, Grounded, Emitted, Discarded };

inline constexpr std::string_view item_status_name(ItemStatus s) {
    switch (s) {
    case ItemStatus::Generated: return "generated";
    case ItemStatus::FilteredOut: return "filtered_out";
    case ItemStatus::Grounded: return "grounded";
    case ItemStatus::Emitted: return "emitted";
    case ItemStatus::Discarded: return "discarded";
    }
    return "?";
}

namespace discard_reason {
inline constexpr std::string_view kBothIncorrect = "both_incorrect";
inline constexpr std::string_view kBudgetExhausted = "budget_exhausted";
inline constexpr std::string_view kBoxParseFailure = "box_parse_failure";
inline constexpr std::string_view kValidationParseFailure = "validation_parse_failure";
} // namespace discard_reason

struct CritiqueItem {
    int id = 0;
    std::string comment;
    std::optional<GridBox> box;
    ItemStatus status = ItemStatus::Generated;
    std::string discard_reason;
    std::vector<GridBox> box_trace;       // oldest first, starts with the BoxGen box
    std::vector<std::string> text_trace;  // oldest first, starts with the generated text
    std::vector<ValidationVerdict> verdicts;
    bool box_trace_truncated = false;
    bool text_trace_truncated = false;

    int box_gen_calls = 0;
    int box_refine_calls = 0;
    int validation_calls = 0;
    int text_refine_calls = 0;
    int validation_cycles = 0;

    int calls() const { return box_gen_calls + box_refine_calls + validation_calls + text_refine_calls; }
};

struct TranscriptEntry {
    Stage stage = Stage::TextGen;
    int item_id = -1; // -1 for whole-image stages
    std::string request_text;
    std::vector<std::string> image_checksums;
    std::string response_text;
};

struct PipelineReport {
    std::string profile;
    std::string image_id;
    std::vector<CritiqueItem> items; // every generated item, original order
    std::array<int, 6> stage_calls{};
    int parse_retries = 0;
    std::vector<TranscriptEntry> transcript;

    int calls(Stage s) const { return stage_calls[static_cast<std::size_t>(s)]; }
    int total_calls() const {
        int t = 0;
        for (int c : stage_calls) {
            t += c;
        }
        return t;
    }
    std::size_t count(ItemStatus s) const {
        std::size_t n = 0;
        for (const auto& i : items) {
            n += i.status == s ? 1 : 0;
        }
        return n;
    }
    std::vector<CritiqueItem> emitted() const {
        std::vector<CritiqueItem> out;
        for (const auto& i : items) {
            if (i.status == ItemStatus::Emitted) {
                out.push_back(i);
            }
        }
        return out;
    }
};

/// Thrown when a run cannot finish. Carries whatever was produced so far,
/// including the transcript up to the failing call.
class PipelineAborted : public Error {
public:
    enum class Cause { Backend, ParseBudget };

    PipelineAborted(Cause cause, const std::string& what, PipelineReport partial)
        : Error(what), cause_(cause), partial_(std::move(partial)) {}

    Cause cause() const noexcept { return cause_; }
    const PipelineReport& partial() const noexcept { return partial_; }

private:
    Cause cause_;
    PipelineReport partial_;
};

/// One chat backend per stage; stages without an override use the default.
struct Backends {
    ChatBackend* fallback = nullptr;
    std::array<ChatBackend*, 6> per_stage{};

    ChatBackend& for_stage(Stage s) const {
        ChatBackend* b = per_stage[static_cast<std::size_t>(s)];
        b = b ? b : fallback;
        if (!b) {
            throw ConfigurationError("no chat backend for stage " + std::string(stage_name(s)));
        }
        return *b;
    }
};

// ---------------------------------------------------------------------------
// Routing
// ---------------------------------------------------------------------------

enum class RouteKind { Emit, Discard, RefineBox, RefineText };

struct RouteAction {
    RouteKind kind = RouteKind::Emit;
    std::string_view reason;
};

/// What happens to a grounded item after a verdict. Total over the verdicts.
inline RouteAction route(ValidationVerdict verdict, const CritiqueItem& item,
                         const PipelineConfig& cfg) {
    const bool cycles_left = item.validation_cycles < cfg.max_validation_cycles;
    switch (verdict) {
    case ValidationVerdict::BothCorrect:
        return {RouteKind::Emit, {}};
    case ValidationVerdict::BothIncorrect:
        return {RouteKind::Discard, discard_reason::kBothIncorrect};
    case ValidationVerdict::IncorrectBbox:
        if (cycles_left && cfg.box_refine_on && item.box_refine_calls < cfg.max_box_refine_iters) {
            return {RouteKind::RefineBox, {}};
        }
        return {RouteKind::Discard, discard_reason::kBudgetExhausted};
    case ValidationVerdict::IncorrectComment:
        if (cycles_left && item.text_refine_calls < cfg.max_text_refine_iters) {
            return {RouteKind::RefineText, {}};
        }
        return {RouteKind::Discard, discard_reason::kBudgetExhausted};
    }
    return {RouteKind::Discard, discard_reason::kBudgetExhausted};
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

namespace detail {

inline std::string format_reminder(Stage s) {
    switch (s) {
    case Stage::TextFilter:
        return "Your previous answer could not be read. Reply with only a list of tuples such as "
               "[(0, True), (1, False)], one tuple per comment index.";
    case Stage::BoxGen:
        return "Your previous answer could not be read. Reply with only the bounding box as "
               "(left, top, right, bottom) with nonzero area inside the coordinate range.";
    case Stage::BoxRefine:
        return "Your previous answer could not be read. Reply with only a bounding box as "
               "(left, top, right, bottom) or '" + std::string(kBoxAcceptSentinel) + "'.";
    case Stage::Validation:
        return "Your previous answer could not be read. Reply with exactly one of: 'Both "
               "Correct', 'Incorrect Comment', 'Incorrect Bbox', 'Both Incorrect'.";
    case Stage::TextRefine:
        return "Your previous answer could not be read. Reply with only the refined comment or '" +
               std::string(kCommentAcceptSentinel) + "'.";
    case Stage::TextGen:
        break;
    }
    return "Your previous answer could not be read. Please follow the output format exactly.";
}

inline void append_examples(ChatRequest& req, const StageExamples& ex) {
    const std::string_view out_label = ex.stage == Stage::Validation ? "Label:" : "Output:";
    std::size_t example_no = 0;
    for (std::size_t i = 0; i < ex.blocks.size(); ++i) {
        const ExampleBlock& b = ex.blocks[i];
        // Multi-block traces only get a header on their first step.
        const bool new_example = ex.stage != Stage::BoxRefine && ex.stage != Stage::TextRefine
                                     ? true
                                     : std::any_of(b.parts.begin(), b.parts.end(), [](const ChatPart& p) {
                                           const auto* t = std::get_if<TextPart>(&p);
                                           return t && (t->text.rfind("Design comment: ", 0) == 0 ||
                                                        t->text == "UI screenshot:");
                                       });
        if (new_example || i == 0) {
            req.add_text("Example " + std::to_string(++example_no) + ":");
        }
        for (const auto& p : b.parts) {
            req.parts.push_back(p);
        }
        req.add_text(std::string(out_label) + " " + b.expected_output);
    }
}

inline std::vector<std::string> image_checksums(const ChatRequest& req) {
    std::vector<std::string> out;
    for (const auto& p : req.parts) {
        if (const auto* img = std::get_if<ImagePart>(&p)) {
            char buf[17];
            std::snprintf(buf, sizeof buf, "%016llx",
                          static_cast<unsigned long long>(fnv1a64(img->png)));
            out.emplace_back(buf);
        }
    }
    return out;
}

/// Per-run state. Item processing only touches its own item and transcript
/// slice, so distinct items may run on different threads.
class Run {
public:
    Run(const RasterImage& image, const TaskProfile& profile, const ExemplarStore& store,
        const Backends& backends, const PipelineConfig& cfg, std::uint64_t seed)
        : image_(image), profile_(profile), store_(store), backends_(backends), cfg_(cfg),
          seed_(seed) {
        vis_.space = cfg.space;
        vis_.style = cfg.style;
        vis_.context_frac = cfg.context_frac;
        vis_.axes = cfg.visual_prompting_on;
        axes_png_ = encode_png(cfg.visual_prompting_on ? draw_coordinate_axes(image, cfg.space, cfg.style)
                                                       : image);
        plain_png_ = encode_png(image);
    }

    struct ItemLog {
        std::vector<TranscriptEntry> transcript;
        int parse_retries = 0;
    };

    template <class Parse>
    auto ask(Stage stage, int item_id, ChatRequest req, Parse&& parse, ItemLog& log, int* call_counter,
             const std::function<bool()>& may_call = {})
        -> std::optional<decltype(parse(std::string_view{}))> {
        req.temperature = cfg_.temperature;
        for (int attempt = 0; attempt <= cfg_.parse_retry; ++attempt) {
            if (may_call && !may_call()) {
                return std::nullopt;
            }
            ++*call_counter;
            TranscriptEntry entry{stage, item_id, req.text(), image_checksums(req), {}};
            ChatResponse resp;
            try {
                resp = backends_.for_stage(stage).chat(req);
            } catch (...) {
                entry.response_text = "<error>";
                log.transcript.push_back(std::move(entry));
                throw;
            }
            entry.response_text = resp.text;
            log.transcript.push_back(std::move(entry));
            try {
                return parse(std::string_view(resp.text));
            } catch (const ParseError& e) {
                if (attempt == cfg_.parse_retry) {
                    return std::nullopt;
                }
                ++log.parse_retries;
                req.add_text(format_reminder(stage) + " (" + e.what() + ")");
            }
        }
        return std::nullopt;
    }

    ChatRequest base_request(Stage s, const StageExamples* ex) const {
        ChatRequest req;
        req.add_text(render_instruction(profile_, s, ex ? static_cast<int>(ex->example_count) : 0));
        if (ex) {
            append_examples(req, *ex);
        }
        return req;
    }

    // -- whole-image stages --------------------------------------------------

    std::vector<std::string> text_gen(ItemLog& log, int& calls) {
        const auto selected = select_by_joint_similarity(store_, image_, cfg_.task_description,
                                                         static_cast<std::size_t>(cfg_.k_textgen));
        const StageExamples ex = build_textgen_examples(selected);
        ChatRequest req = base_request(Stage::TextGen, &ex);
        req.add_text("UI screenshot:");
        req.parts.emplace_back(ImagePart{plain_png_});
        auto out = ask(Stage::TextGen, -1, std::move(req),
                       [](std::string_view t) { return parse_comment_list(t); }, log, &calls);
        return out ? *out : std::vector<std::string>{};
    }

    std::optional<std::vector<std::pair<int, bool>>> text_filter(const std::vector<std::string>& comments,
                                                                 ItemLog& log, int& calls) {
        Rng rng(mix_seed(seed_, 0));
        const auto selected = select_by_joint_similarity(store_, image_, cfg_.task_description,
                                                         static_cast<std::size_t>(cfg_.k_filter));
        const auto pool = collect_invalid_pool(store_, selected);
        const StageExamples ex = build_filter_examples(
            selected, pool, pool.empty() ? 0 : static_cast<std::size_t>(cfg_.k_invalid), rng);
        ChatRequest req = base_request(Stage::TextFilter, &ex);
        req.add_text("UI screenshot:");
        req.parts.emplace_back(ImagePart{plain_png_});
        req.add_text("Design comments:\n" + format_comment_list(comments));
        const int n = static_cast<int>(comments.size());
        return ask(Stage::TextFilter, -1, std::move(req),
                   [n](std::string_view t) { return parse_filter_verdicts(t, n); }, log, &calls);
    }

    // -- per-item stages -----------------------------------------------------

    void process_item(CritiqueItem& item, ItemLog& log) {
        Rng rng(mix_seed(seed_, static_cast<std::uint64_t>(item.id) + 1));
        item.text_trace = {item.comment};

        const auto box_matches = select_by_text_similarity(store_, item.comment,
                                                           static_cast<std::size_t>(cfg_.k_box_gen));
        const StageExamples gen_ex = build_boxgen_examples(box_matches, vis_);
        ChatRequest req = base_request(Stage::BoxGen, &gen_ex);
        req.add_text("Design comment: " + item.comment);
        req.add_text("UI screenshot:");
        req.parts.emplace_back(ImagePart{axes_png_});
        const GridSpace space = cfg_.space;
        auto box = ask(Stage::BoxGen, item.id, std::move(req),
                       [space](std::string_view t) { return parse_box(t, space); }, log,
                       &item.box_gen_calls);
        if (!box) {
            discard(item, discard_reason::kBoxParseFailure);
            return;
        }
        item.box = *box;
        item.box_trace = {*box};
        item.status = ItemStatus::Grounded;

        if (cfg_.box_refine_on) {
            box_refine_loop(item, log, rng);
        }
        if (!cfg_.validation_on) {
            item.status = ItemStatus::Emitted;
            return;
        }
        while (true) {
            const auto verdict = validate(item, log, rng);
            if (!verdict) {
                discard(item, discard_reason::kValidationParseFailure);
                return;
            }
            item.verdicts.push_back(*verdict);
            const RouteAction action = route(*verdict, item, cfg_);
            switch (action.kind) {
            case RouteKind::Emit:
                item.status = ItemStatus::Emitted;
                return;
            case RouteKind::Discard:
                discard(item, action.reason);
                return;
            case RouteKind::RefineBox:
                ++item.validation_cycles;
                box_refine_loop(item, log, rng);
                break;
            case RouteKind::RefineText:
                ++item.validation_cycles;
                text_refine_loop(item, log, rng);
                break;
            }
        }
    }

    static void discard(CritiqueItem& item, std::string_view reason) {
        item.status = ItemStatus::Discarded;
        item.discard_reason = std::string(reason);
    }

    const StageExamples& box_refine_examples(const CritiqueItem& item, Rng& rng) {
        if (!box_refine_ex_) {
            StageExamples all{Stage::BoxRefine, {}, 0};
            for (const auto& m : select_by_text_similarity(store_, item.comment,
                                                           static_cast<std::size_t>(cfg_.k_box_refine))) {
                auto trace = build_box_refine_trace(*m.record->image, m.comment().text,
                                                    m.comment().box, cfg_.perturb, vis_, rng);
                all.blocks.insert(all.blocks.end(), trace.blocks.begin(), trace.blocks.end());
                ++all.example_count;
            }
            box_refine_ex_ = std::move(all);
        }
        return *box_refine_ex_;
    }

    void box_refine_loop(CritiqueItem& item, ItemLog& log, Rng& rng) {
        const StageExamples& ex = box_refine_examples(item, rng);
        const GridSpace space = cfg_.space;
        while (item.box_refine_calls < cfg_.max_box_refine_iters) {
            ChatRequest req = base_request(Stage::BoxRefine, &ex);
            req.add_text("Design comment: " + item.comment);
            req.add_text("UI screenshot:");
            req.parts.emplace_back(ImagePart{axes_png_});
            req.add_text("Bounding box candidate: " + format_box(*item.box));
            req.add_text(format_box_history({item.box_trace.begin(), item.box_trace.end() - 1}));
            req.add_text("Zoomed-in patch:");
            req.add_image(render_zoom_patch(image_, *item.box, cfg_.space, cfg_.style, cfg_.context_frac));
            const auto step = ask(
                Stage::BoxRefine, item.id, std::move(req),
                [space](std::string_view t) { return parse_refine_step(t, space); }, log,
                &item.box_refine_calls,
                [&] { return item.box_refine_calls < cfg_.max_box_refine_iters; });
            if (!step) {
                // Parse retries exhausted (or the budget ran out mid-retry).
                item.box_trace_truncated = true;
                return;
            }
            if (std::holds_alternative<Accept>(*step)) {
                return;
            }
            item.box = std::get<NewBox>(*step).box;
            item.box_trace.push_back(*item.box);
        }
    }

    std::vector<std::string> foreign_pool(const std::string& exclude) const {
        std::vector<std::string> pool;
        for (const auto& r : store_.records()) {
            for (const auto& c : r.comments) {
                if (!c.valid && c.text != exclude) {
                    pool.push_back(normalize_comment(c.text));
                }
            }
        }
        for (const auto& r : store_.records()) {
            for (const auto& c : r.comments) {
                if (c.valid && c.text != exclude) {
                    pool.push_back(normalize_comment(c.text));
                }
            }
        }
        return pool;
    }

    const std::optional<StageExamples>& validation_examples(const CritiqueItem& item, Rng& rng) {
        if (!validation_ex_computed_) {
            validation_ex_computed_ = true;
            const auto matches = select_by_text_similarity(store_, item.comment,
                                                           static_cast<std::size_t>(cfg_.k_validation));
            if (!matches.empty()) {
                CommentPerturber perturber;
                if (profile_.vocabulary) {
                    const DetectionVocabulary vocab = *profile_.vocabulary;
                    perturber = [vocab](const std::string& s, Rng& r) {
                        return format_detection_label(
                            perturb_detection_label(parse_detection_label(s), vocab, r));
                    };
                }
                try {
                    validation_ex_ = build_validation_examples(matches, foreign_pool(""), rng, vis_,
                                                               perturber);
                } catch (const InvalidArgument&) {
                    validation_ex_.reset(); // not enough material: zero-shot validation
                }
            }
        }
        return validation_ex_;
    }

    std::optional<ValidationVerdict> validate(CritiqueItem& item, ItemLog& log, Rng& rng) {
        const auto& ex = validation_examples(item, rng);
        ChatRequest req = base_request(Stage::Validation, ex ? &*ex : nullptr);
        req.add_text("UI Screenshot:");
        req.parts.emplace_back(ImagePart{plain_png_});
        req.add_text("Design Comment: " + item.comment);
        req.add_text("Zoomed-in Patch:");
        req.add_image(render_zoom_patch(image_, *item.box, cfg_.space, cfg_.style, cfg_.context_frac));
        return ask(Stage::Validation, item.id, std::move(req),
                   [](std::string_view t) { return parse_verdict(t); }, log, &item.validation_calls);
    }

    const StageExamples& text_refine_examples(const CritiqueItem& item) {
        if (!text_refine_ex_) {
            StageExamples all{Stage::TextRefine, {}, 0};
            for (const auto& m : select_by_text_similarity(store_, item.comment,
                                                           static_cast<std::size_t>(cfg_.k_text_refine))) {
                const auto pool = foreign_pool(m.comment().text);
                const auto steps = static_cast<std::size_t>(cfg_.text_refine_steps);
                if (pool.size() < steps) {
                    continue;
                }
                auto trace = build_text_refine_trace(normalize_comment(m.comment().text), pool, steps,
                                                     store_.embedder(),
                                                     RegionOfInterest{m.record->image.get(), m.comment().box},
                                                     vis_);
                all.blocks.insert(all.blocks.end(), trace.blocks.begin(), trace.blocks.end());
                ++all.example_count;
            }
            text_refine_ex_ = std::move(all);
        }
        return *text_refine_ex_;
    }

    void text_refine_loop(CritiqueItem& item, ItemLog& log, Rng&) {
        const StageExamples& ex = text_refine_examples(item);
        while (item.text_refine_calls < cfg_.max_text_refine_iters) {
            ChatRequest req = base_request(Stage::TextRefine, &ex);
            req.add_text("UI screenshot:");
            req.parts.emplace_back(ImagePart{plain_png_});
            req.add_text("Zoomed-in patch:");
            req.add_image(render_zoom_patch(image_, *item.box, cfg_.space, cfg_.style, cfg_.context_frac));
            std::string history = "Previous candidates:";
            for (std::size_t i = 0; i + 1 < item.text_trace.size(); ++i) {
                history += "\n" + std::to_string(i + 1) + ". " + item.text_trace[i];
            }
            if (item.text_trace.size() > 1) {
                req.add_text(history);
            }
            req.add_text("Design comment candidate: " + item.comment);
            const auto step = ask(
                Stage::TextRefine, item.id, std::move(req),
                [](std::string_view t) { return parse_text_refine_step(t); }, log,
                &item.text_refine_calls,
                [&] { return item.text_refine_calls < cfg_.max_text_refine_iters; });
            if (!step) {
                item.text_trace_truncated = true;
                return;
            }
            if (std::holds_alternative<Accept>(*step)) {
                return;
            }
            item.comment = std::get<NewComment>(*step).text;
            item.text_trace.push_back(item.comment);
        }
    }

    void reset_item_cache() {
        box_refine_ex_.reset();
        validation_ex_.reset();
        validation_ex_computed_ = false;
        text_refine_ex_.reset();
    }

private:
    const RasterImage& image_;
    const TaskProfile& profile_;
    const ExemplarStore& store_;
    const Backends& backends_;
    const PipelineConfig& cfg_;
    std::uint64_t seed_;
    VisualContext vis_;
    std::vector<std::uint8_t> axes_png_;
    std::vector<std::uint8_t> plain_png_;

    std::optional<StageExamples> box_refine_ex_;
    std::optional<StageExamples> validation_ex_;
    bool validation_ex_computed_ = false;
    std::optional<StageExamples> text_refine_ex_;
};

inline void add_item_calls(PipelineReport& r, const CritiqueItem& item) {
    r.stage_calls[static_cast<std::size_t>(Stage::BoxGen)] += item.box_gen_calls;
    r.stage_calls[static_cast<std::size_t>(Stage::BoxRefine)] += item.box_refine_calls;
    r.stage_calls[static_cast<std::size_t>(Stage::Validation)] += item.validation_calls;
    r.stage_calls[static_cast<std::size_t>(Stage::TextRefine)] += item.text_refine_calls;
}

// Grounds, refines and validates each item with status Generated, possibly in
// parallel, then merges results into the report in item order.
inline void ground_items(PipelineReport& report, const RasterImage& image, const TaskProfile& profile,
                         const ExemplarStore& store, const Backends& backends,
                         const PipelineConfig& cfg, std::uint64_t seed) {
    std::vector<std::size_t> todo;
    for (std::size_t i = 0; i < report.items.size(); ++i) {
        if (report.items[i].status == ItemStatus::Generated) {
            todo.push_back(i);
        }
    }
    std::vector<Run::ItemLog> logs(report.items.size());
    std::vector<std::exception_ptr> errors(report.items.size());
    std::vector<char> done(report.items.size(), 0);

    auto work = [&](std::size_t slot) {
        const std::size_t i = todo[slot];
        Run run(image, profile, store, backends, cfg, seed);
        try {
            run.process_item(report.items[i], logs[i]);
            done[i] = 1;
        } catch (...) {
            errors[i] = std::current_exception();
        }
    };

    const auto workers = std::min<std::size_t>(static_cast<std::size_t>(cfg.parallel_items), todo.size());
    if (workers <= 1) {
        for (std::size_t s = 0; s < todo.size(); ++s) {
            work(s);
            if (errors[todo[s]]) {
                break;
            }
        }
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t s = next++; s < todo.size(); s = next++) {
                    work(s);
                }
            });
        }
        for (auto& t : pool) {
            t.join();
        }
    }

    std::exception_ptr first_error;
    for (std::size_t i = 0; i < report.items.size(); ++i) {
        add_item_calls(report, report.items[i]);
        report.parse_retries += logs[i].parse_retries;
        report.transcript.insert(report.transcript.end(), logs[i].transcript.begin(),
                                 logs[i].transcript.end());
        if (errors[i] && !first_error) {
            first_error = errors[i];
        }
    }
    if (first_error) {
        try {
            std::rethrow_exception(first_error);
        } catch (const BackendError& e) {
            throw PipelineAborted(PipelineAborted::Cause::Backend, e.what(), report);
        }
    }
}

} // namespace detail

/// Full pipeline: TextGen, TextFilter, then per item BoxGen, the BoxRefine
/// loop, and Validation with routed refinement, honouring the ablation
/// switches in cfg. Backend failures abort with a PipelineAborted carrying the
/// partial report.
inline PipelineReport run(const RasterImage& image, const TaskProfile& profile,
                          const ExemplarStore& store, const Backends& backends,
                          const PipelineConfig& cfg, Rng& rng, std::string image_id = {}) {
    cfg.validate();
    profile.validate();
    const std::uint64_t seed = rng();
    PipelineReport report;
    report.profile = profile.name;
    report.image_id = std::move(image_id);

    detail::Run run(image, profile, store, backends, cfg, seed);
    detail::Run::ItemLog log;
    auto flush_log = [&] {
        report.transcript.insert(report.transcript.end(), log.transcript.begin(), log.transcript.end());
        report.parse_retries += log.parse_retries;
        log = {};
    };
    try {
        const auto comments =
            run.text_gen(log, report.stage_calls[static_cast<std::size_t>(Stage::TextGen)]);
        for (std::size_t i = 0; i < comments.size(); ++i) {
            CritiqueItem item;
            item.id = static_cast<int>(i);
            item.comment = comments[i];
            report.items.push_back(std::move(item));
        }
        if (cfg.filtering_on && !report.items.empty()) {
            const auto verdicts =
                run.text_filter(comments, log, report.stage_calls[static_cast<std::size_t>(Stage::TextFilter)]);
            if (!verdicts) {
                flush_log();
                throw PipelineAborted(PipelineAborted::Cause::ParseBudget,
                                      "TextFilter output unreadable after " +
                                          std::to_string(cfg.parse_retry) + " re-asks",
                                      report);
            }
            for (const auto& [idx, keep] : *verdicts) {
                if (!keep) {
                    report.items[static_cast<std::size_t>(idx)].status = ItemStatus::FilteredOut;
                }
            }
        }
    } catch (const BackendError& e) {
        flush_log();
        throw PipelineAborted(PipelineAborted::Cause::Backend, e.what(), report);
    }
    flush_log();
    detail::ground_items(report, image, profile, store, backends, cfg, seed);
    return report;
}

/// Grounding only: one given comment through BoxGen, BoxRefine and (if on)
/// Validation. TextGen and TextFilter are never called.
inline PipelineReport run_ground_only(const RasterImage& image, const std::string& comment,
                                      const TaskProfile& profile, const ExemplarStore& store,
                                      const Backends& backends, const PipelineConfig& cfg, Rng& rng,
                                      std::string image_id = {}) {
    cfg.validate();
    profile.validate();
    if (trim(comment).empty()) {
        throw InvalidArgument("run_ground_only: comment must be nonempty");
    }
    const std::uint64_t seed = rng();
    PipelineReport report;
    report.profile = profile.name;
    report.image_id = std::move(image_id);
    CritiqueItem item;
    item.comment = std::string(trim(comment));
    report.items.push_back(std::move(item));
    detail::ground_items(report, image, profile, store, backends, cfg, seed);
    return report;
}

} // namespace groundcrit
