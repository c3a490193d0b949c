#pragma once

#include <groundcrit/backends.hpp>
#include <groundcrit/geometry.hpp>
#include <groundcrit/imaging.hpp>
#include <groundcrit/parsers.hpp>

#include "json.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace groundcrit {

struct GroundedComment {
    std::string text;
    GridBox box;
    bool valid = true;
};

struct ExemplarRecord {
    std::string id;
    std::string image_path;
    std::shared_ptr<const RasterImage> image;
    std::string task;
    std::vector<GroundedComment> comments;
    std::optional<Vector> joint_vector;
    std::vector<std::optional<Vector>> comment_vectors; // parallel to comments
};

/// Few-shot source. Immutable once built; every record has its joint vector
/// and per-comment vectors filled in, either precomputed or from the bound
/// embedding provider.
class ExemplarStore {
public:
    ExemplarStore(std::vector<ExemplarRecord> records,
                  std::shared_ptr<const EmbeddingProvider> embedder, GridSpace space = {})
        : records_(std::move(records)), embedder_(std::move(embedder)), space_(space) {
        if (!embedder_) {
            throw InvalidArgument("ExemplarStore: an embedding provider is required");
        }
        std::set<std::string> ids;
        for (auto& r : records_) {
            if (!ids.insert(r.id).second) {
                throw InvalidArgument("ExemplarStore: duplicate exemplar id " + r.id);
            }
            if (!r.image) {
                throw InvalidArgument("ExemplarStore: exemplar " + r.id + " has no image");
            }
            for (const auto& c : r.comments) {
                require_valid(c.box, space_, "ExemplarStore");
            }
            if (!r.joint_vector) {
                r.joint_vector = embedder_->embed_joint(*r.image, r.task.empty() ? r.id : r.task);
            }
            r.comment_vectors.resize(r.comments.size());
            for (std::size_t i = 0; i < r.comments.size(); ++i) {
                if (!r.comment_vectors[i]) {
                    r.comment_vectors[i] = embedder_->embed_text(r.comments[i].text);
                }
            }
        }
    }

    const std::vector<ExemplarRecord>& records() const noexcept { return records_; }
    const EmbeddingProvider& embedder() const noexcept { return *embedder_; }
    const GridSpace& space() const noexcept { return space_; }
    bool empty() const noexcept { return records_.empty(); }

    /// Throws if any exemplar id is also an evaluation id.
    void require_disjoint(const std::set<std::string>& eval_ids) const {
        for (const auto& r : records_) {
            if (eval_ids.count(r.id)) {
                throw InvalidArgument("few-shot exemplar " + r.id +
                                      " overlaps the evaluation split");
            }
        }
    }

private:
    std::vector<ExemplarRecord> records_;
    std::shared_ptr<const EmbeddingProvider> embedder_;
    GridSpace space_;
};

/// Loads a line-delimited exemplar file. Each nonblank line is a JSON object
///   {"id": "...", "image": "relative/or/absolute.png", "task": "...",
///    "comments": [{"text": "...", "box": [l, t, r, b], "valid": true}]}
/// Images resolve relative to the file. An optional embedding table supplies
/// vectors under keys "<id>" (joint) and "<id>#<k>" (comment k).
inline ExemplarStore load_exemplar_store(const std::filesystem::path& path,
                                         std::shared_ptr<const EmbeddingProvider> embedder,
                                         GridSpace space = {},
                                         const std::optional<std::string>& embedding_table = {}) {
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open exemplar store " + path.string());
    }
    std::map<std::string, Vector> table;
    if (embedding_table) {
        table = load_embedding_table(*embedding_table);
    }
    std::vector<ExemplarRecord> records;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) {
            continue;
        }
        try {
            const auto j = nlohmann::json::parse(line);
            ExemplarRecord r;
            r.id = j.at("id").get<std::string>();
            r.image_path = j.at("image").get<std::string>();
            r.task = j.value("task", std::string{});
            std::filesystem::path img_path(r.image_path);
            if (img_path.is_relative()) {
                img_path = path.parent_path() / img_path;
            }
            r.image = std::make_shared<const RasterImage>(read_png(img_path));
            for (const auto& c : j.at("comments")) {
                const auto& b = c.at("box");
                if (!b.is_array() || b.size() != 4) {
                    throw SchemaError(path.string(), line_no, "box must be [l, t, r, b]");
                }
                GroundedComment gc{c.at("text").get<std::string>(),
                                   {b[0].get<double>(), b[1].get<double>(), b[2].get<double>(),
                                    b[3].get<double>()},
                                   c.value("valid", true)};
                if (!gc.box.valid_in(space)) {
                    throw SchemaError(path.string(), line_no,
                                      "invalid box " + format_box(gc.box));
                }
                r.comments.push_back(std::move(gc));
            }
            if (auto it = table.find(r.id); it != table.end()) {
                r.joint_vector = it->second;
            }
            r.comment_vectors.resize(r.comments.size());
            for (std::size_t k = 0; k < r.comments.size(); ++k) {
                if (auto it = table.find(r.id + "#" + std::to_string(k)); it != table.end()) {
                    r.comment_vectors[k] = it->second;
                }
            }
            records.push_back(std::move(r));
        } catch (const SchemaError&) {
            throw;
        } catch (const nlohmann::json::exception& e) {
            throw SchemaError(path.string(), line_no, e.what());
        } catch (const Error& e) {
            throw SchemaError(path.string(), line_no, e.what());
        }
    }
    try {
        return ExemplarStore(std::move(records), std::move(embedder), space);
    } catch (const InvalidArgument& e) {
        throw SchemaError(path.string(), 0, e.what());
    }
}

// ---------------------------------------------------------------------------
// Selection
// ---------------------------------------------------------------------------

/// Top-k records by cosine between the query's joint embedding and each
/// record's, descending; ties by ascending id.
inline std::vector<const ExemplarRecord*> select_by_joint_similarity(const ExemplarStore& store,
                                                                     const RasterImage& image,
                                                                     const std::string& task_text,
                                                                     std::size_t k) {
    if (k == 0 || store.empty()) {
        return {};
    }
    const Vector q = store.embedder().embed_joint(image, task_text.empty() ? "ui" : task_text);
    std::vector<std::pair<double, const ExemplarRecord*>> scored;
    for (const auto& r : store.records()) {
        scored.emplace_back(cosine(q, *r.joint_vector), &r);
    }
    std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) {
            return a.first > b.first;
        }
        return a.second->id < b.second->id;
    });
    std::vector<const ExemplarRecord*> out;
    for (std::size_t i = 0; i < std::min(k, scored.size()); ++i) {
        out.push_back(scored[i].second);
    }
    return out;
}

struct CommentMatch {
    const ExemplarRecord* record = nullptr;
    std::size_t comment_index = 0;
    double score = 0.0;

    const GroundedComment& comment() const { return record->comments[comment_index]; }
};

/// Top-k valid comments across the store by cosine to the query text;
/// ties by (record id, comment index).
inline std::vector<CommentMatch> select_by_text_similarity(const ExemplarStore& store,
                                                           const std::string& text, std::size_t k) {
    if (k == 0) {
        return {};
    }
    const Vector q = store.embedder().embed_text(text);
    std::vector<CommentMatch> scored;
    for (const auto& r : store.records()) {
        for (std::size_t i = 0; i < r.comments.size(); ++i) {
            if (r.comments[i].valid) {
                scored.push_back({&r, i, cosine(q, *r.comment_vectors[i])});
            }
        }
    }
    std::stable_sort(scored.begin(), scored.end(), [](const CommentMatch& a, const CommentMatch& b) {
        if (a.score != b.score) {
            return a.score > b.score;
        }
        if (a.record->id != b.record->id) {
            return a.record->id < b.record->id;
        }
        return a.comment_index < b.comment_index;
    });
    scored.resize(std::min(k, scored.size()));
    return scored;
}

// ---------------------------------------------------------------------------
// Example blocks
// ---------------------------------------------------------------------------

/// One worked example: input parts, then the output the model should produce.
struct ExampleBlock {
    std::vector<ChatPart> parts;
    std::string expected_output;
};

struct StageExamples {
    Stage stage = Stage::TextGen;
    std::vector<ExampleBlock> blocks;
    std::size_t example_count = 0; // the N quoted in the instruction prompt
};

/// Trims and collapses blank lines so a comment survives the blank-line split
/// of parse_comment_list.
inline std::string normalize_comment(std::string_view text) {
    std::string out;
    for (const auto& piece : parse_comment_list(text)) {
        if (!out.empty()) {
            out += '\n';
        }
        out += piece;
    }
    return out;
}

inline std::string format_comment_list(const std::vector<std::string>& comments) {
    std::string out;
    for (std::size_t i = 0; i < comments.size(); ++i) {
        out += std::to_string(i) + ": " + comments[i] + "\n";
    }
    return out;
}

/// Bundle for rendering example screenshots and patches.
struct VisualContext {
    GridSpace space;
    AnnotationStyle style;
    double context_frac = kDefaultContextFrac;
    bool axes = true;
};

inline RasterImage screenshot_for_prompt(const RasterImage& img, const VisualContext& vis) {
    return vis.axes ? draw_coordinate_axes(img, vis.space, vis.style) : img;
}

inline std::vector<std::string> valid_comment_texts(const ExemplarRecord& r) {
    std::vector<std::string> out;
    for (const auto& c : r.comments) {
        if (c.valid) {
            out.push_back(normalize_comment(c.text));
        }
    }
    return out;
}

inline StageExamples build_textgen_examples(const std::vector<const ExemplarRecord*>& selected) {
    StageExamples ex{Stage::TextGen, {}, selected.size()};
    for (const auto* r : selected) {
        ExampleBlock b;
        b.parts.emplace_back(TextPart{"UI screenshot:"});
        b.parts.emplace_back(ImagePart{encode_png(*r->image)});
        std::string out;
        for (const auto& c : valid_comment_texts(*r)) {
            out += c + "\n\n";
        }
        b.expected_output = out;
        ex.blocks.push_back(std::move(b));
    }
    return ex;
}

/// Marked-invalid comments of the selected records first, then every comment
/// of the remaining records. The order is deterministic.
inline std::vector<std::string> collect_invalid_pool(const ExemplarStore& store,
                                                     const std::vector<const ExemplarRecord*>& selected) {
    std::vector<std::string> pool;
    std::set<std::string> chosen;
    for (const auto* r : selected) {
        chosen.insert(r->id);
        for (const auto& c : r->comments) {
            if (!c.valid) {
                pool.push_back(normalize_comment(c.text));
            }
        }
    }
    for (const auto& r : store.records()) {
        if (!chosen.count(r.id)) {
            for (const auto& c : r.comments) {
                pool.push_back(normalize_comment(c.text));
            }
        }
    }
    return pool;
}

struct FilterExample {
    std::vector<std::string> items;
    std::vector<std::pair<int, bool>> expected;
};

/// Inserts each invalid item before the element currently at positions[i]
/// (positions index the growing list). Originals get True, injected False.
inline FilterExample make_filter_example(const std::vector<std::string>& valid,
                                         const std::vector<std::string>& injected,
                                         const std::vector<std::size_t>& positions) {
    if (injected.size() != positions.size()) {
        throw InvalidArgument("make_filter_example: one position per injected item");
    }
    std::vector<std::pair<std::string, bool>> list;
    for (const auto& v : valid) {
        list.emplace_back(v, true);
    }
    for (std::size_t i = 0; i < injected.size(); ++i) {
        const auto pos = std::min(positions[i], list.size());
        list.insert(list.begin() + static_cast<std::ptrdiff_t>(pos), {injected[i], false});
    }
    FilterExample out;
    for (std::size_t i = 0; i < list.size(); ++i) {
        out.items.push_back(list[i].first);
        out.expected.emplace_back(static_cast<int>(i), list[i].second);
    }
    return out;
}

inline StageExamples build_filter_examples(const std::vector<const ExemplarRecord*>& selected,
                                           const std::vector<std::string>& invalid_pool,
                                           std::size_t k_invalid, Rng& rng) {
    if (k_invalid > 0 && invalid_pool.empty()) {
        throw InvalidArgument("build_filter_examples: invalid pool is empty");
    }
    StageExamples ex{Stage::TextFilter, {}, selected.size()};
    for (const auto* r : selected) {
        const auto valid = valid_comment_texts(*r);
        std::vector<std::size_t> order(invalid_pool.size());
        for (std::size_t i = 0; i < order.size(); ++i) {
            order[i] = i;
        }
        std::vector<std::string> injected;
        std::vector<std::size_t> positions;
        for (std::size_t i = 0; i < k_invalid; ++i) {
            // Without replacement while the pool lasts.
            if (i < order.size()) {
                const std::size_t pick = i + uniform_index(rng, order.size() - i);
                std::swap(order[i], order[pick]);
                injected.push_back(invalid_pool[order[i]]);
            } else {
                injected.push_back(invalid_pool[uniform_index(rng, invalid_pool.size())]);
            }
            positions.push_back(uniform_index(rng, valid.size() + i + 1));
        }
        const FilterExample fe = make_filter_example(valid, injected, positions);
        ExampleBlock b;
        b.parts.emplace_back(TextPart{"UI screenshot:"});
        b.parts.emplace_back(ImagePart{encode_png(*r->image)});
        b.parts.emplace_back(TextPart{"Design comments:\n" + format_comment_list(fe.items)});
        b.expected_output = format_filter_verdicts(fe.expected);
        ex.blocks.push_back(std::move(b));
    }
    return ex;
}

inline StageExamples build_boxgen_examples(const std::vector<CommentMatch>& matches,
                                           const VisualContext& vis) {
    StageExamples ex{Stage::BoxGen, {}, matches.size()};
    for (const auto& m : matches) {
        ExampleBlock b;
        b.parts.emplace_back(TextPart{"Design comment: " + normalize_comment(m.comment().text)});
        b.parts.emplace_back(TextPart{"UI screenshot:"});
        b.parts.emplace_back(ImagePart{encode_png(screenshot_for_prompt(*m.record->image, vis))});
        b.expected_output = format_box(m.comment().box);
        ex.blocks.push_back(std::move(b));
    }
    return ex;
}

inline std::string format_box_history(const std::vector<GridBox>& boxes) {
    if (boxes.empty()) {
        return "Refinement history: none";
    }
    std::string out = "Refinement history:";
    for (std::size_t i = 0; i < boxes.size(); ++i) {
        out += "\n" + std::to_string(i + 1) + ". " + format_box(boxes[i]);
    }
    return out;
}

/// A synthetic refinement dialogue ending on the exemplar's own box. Each
/// step shows the current candidate with its zoom patch and the refinement
/// history; the expected answer is the next box, or the acceptance sentinel
/// on the final step.
inline StageExamples build_box_refine_trace(const RasterImage& exemplar_image,
                                            const std::string& comment, const GridBox& exemplar_box,
                                            const PerturbConfig& cfg, const VisualContext& vis,
                                            Rng& rng) {
    const auto boxes = generate_perturbed_fewshot_examples(exemplar_box, cfg, vis.space, rng);
    StageExamples ex{Stage::BoxRefine, {}, 1};
    for (std::size_t i = 0; i < boxes.size(); ++i) {
        ExampleBlock b;
        if (i == 0) {
            b.parts.emplace_back(TextPart{"Design comment: " + normalize_comment(comment)});
            b.parts.emplace_back(TextPart{"UI screenshot:"});
            b.parts.emplace_back(ImagePart{encode_png(screenshot_for_prompt(exemplar_image, vis))});
        }
        b.parts.emplace_back(TextPart{"Bounding box candidate: " + format_box(boxes[i])});
        b.parts.emplace_back(TextPart{format_box_history({boxes.begin(), boxes.begin() +
                                                                             static_cast<std::ptrdiff_t>(i)})});
        b.parts.emplace_back(TextPart{"Zoomed-in patch:"});
        b.parts.emplace_back(ImagePart{encode_png(
            render_zoom_patch(exemplar_image, boxes[i], vis.space, vis.style, vis.context_frac))});
        b.expected_output = i + 1 < boxes.size() ? format_box(boxes[i + 1])
                                                 : std::string(kBoxAcceptSentinel);
        ex.blocks.push_back(std::move(b));
    }
    return ex;
}

/// `steps` distractors (the first ones in pool order) sorted by ascending
/// cosine to the target, then the target itself.
inline std::vector<std::string> order_text_refinement(const std::string& target,
                                                      const std::vector<std::string>& pool,
                                                      std::size_t steps,
                                                      const EmbeddingProvider& embedder) {
    if (steps < 1) {
        throw InvalidArgument("text refinement trace needs at least one step");
    }
    if (pool.size() < steps) {
        throw InvalidArgument("distractor pool has " + std::to_string(pool.size()) +
                              " comments, " + std::to_string(steps) + " needed");
    }
    const Vector t = embedder.embed_text(target);
    std::vector<std::pair<double, std::string>> scored;
    for (std::size_t i = 0; i < steps; ++i) {
        scored.emplace_back(cosine(t, embedder.embed_text(pool[i])), pool[i]);
    }
    std::stable_sort(scored.begin(), scored.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<std::string> out;
    for (auto& [_, s] : scored) {
        out.push_back(std::move(s));
    }
    out.push_back(target);
    return out;
}

struct RegionOfInterest {
    const RasterImage* image = nullptr;
    GridBox box;
};

inline StageExamples build_text_refine_trace(const std::string& target,
                                             const std::vector<std::string>& distractor_pool,
                                             std::size_t steps, const EmbeddingProvider& embedder,
                                             const std::optional<RegionOfInterest>& region = {},
                                             const VisualContext& vis = {}) {
    const auto seq = order_text_refinement(target, distractor_pool, steps, embedder);
    StageExamples ex{Stage::TextRefine, {}, 1};
    for (std::size_t i = 0; i < seq.size(); ++i) {
        ExampleBlock b;
        if (i == 0 && region && region->image) {
            b.parts.emplace_back(TextPart{"UI screenshot:"});
            b.parts.emplace_back(ImagePart{encode_png(*region->image)});
            b.parts.emplace_back(TextPart{"Zoomed-in patch:"});
            b.parts.emplace_back(ImagePart{encode_png(render_zoom_patch(
                *region->image, region->box, vis.space, vis.style, vis.context_frac))});
        }
        b.parts.emplace_back(TextPart{"Design comment candidate: " + seq[i]});
        b.expected_output =
            i + 1 < seq.size() ? seq[i + 1] : std::string(kCommentAcceptSentinel);
        ex.blocks.push_back(std::move(b));
    }
    return ex;
}

/// Replaces a correct comment with an incorrect one for validation examples.
using CommentPerturber = std::function<std::string(const std::string&, Rng&)>;

/// One example per verdict class, in kAllVerdicts order, all built from the
/// first match whose box can be perturbed away from ground truth. The wrong
/// box comes from generate_perturb at frac 1, or the largest of 0.75, 0.5,
/// 0.25 that moves it.
inline StageExamples build_validation_examples(const std::vector<CommentMatch>& selected,
                                               const std::vector<std::string>& foreign_pool,
                                               Rng& rng, const VisualContext& vis,
                                               const CommentPerturber& perturb_text = {}) {
    for (const auto& m : selected) {
        const GroundedComment& gc = m.comment();
        // Wide boxes have no legal full-strength perturbation, so step down.
        GridBox wrong_box = gc.box;
        for (double frac : {1.0, 0.75, 0.5, 0.25}) {
            wrong_box = generate_perturb(gc.box, frac, vis.space, rng);
            if (!(wrong_box == gc.box)) {
                break;
            }
        }
        if (wrong_box == gc.box) {
            continue;
        }
        const std::string right_text = normalize_comment(gc.text);
        std::string wrong_text;
        if (perturb_text) {
            wrong_text = perturb_text(right_text, rng);
        } else {
            for (const auto& c : m.record->comments) {
                if (!c.valid) {
                    wrong_text = normalize_comment(c.text);
                    break;
                }
            }
            for (std::size_t i = 0; wrong_text.empty() && i < foreign_pool.size(); ++i) {
                if (foreign_pool[i] != right_text) {
                    wrong_text = foreign_pool[i];
                }
            }
        }
        if (wrong_text.empty() || wrong_text == right_text) {
            continue;
        }

        StageExamples ex{Stage::Validation, {}, 4};
        const RasterImage& img = *m.record->image;
        for (ValidationVerdict v : kAllVerdicts) {
            const bool bad_text = v == ValidationVerdict::IncorrectComment ||
                                  v == ValidationVerdict::BothIncorrect;
            const bool bad_box =
                v == ValidationVerdict::IncorrectBbox || v == ValidationVerdict::BothIncorrect;
            ExampleBlock b;
            b.parts.emplace_back(TextPart{"UI Screenshot:"});
            b.parts.emplace_back(ImagePart{encode_png(img)});
            b.parts.emplace_back(TextPart{"Design Comment: " + (bad_text ? wrong_text : right_text)});
            b.parts.emplace_back(TextPart{"Zoomed-in Patch:"});
            b.parts.emplace_back(ImagePart{encode_png(render_zoom_patch(
                img, bad_box ? wrong_box : gc.box, vis.space, vis.style, vis.context_frac))});
            b.expected_output = std::string(verdict_label(v));
            ex.blocks.push_back(std::move(b));
        }
        return ex;
    }
    throw InvalidArgument(
        "build_validation_examples: no selected exemplar yields all four verdict classes");
}

} // namespace groundcrit
