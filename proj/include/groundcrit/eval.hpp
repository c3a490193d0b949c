#pragma once

#include <groundcrit/backends.hpp>
#include <groundcrit/detection.hpp>
#include <groundcrit/error.hpp>
#include <groundcrit/geometry.hpp>
#include <groundcrit/io.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace groundcrit {

// ---------------------------------------------------------------------------
// Ground truth and predictions
// ---------------------------------------------------------------------------

struct GtComment {
    std::string text;
    GridBox box;
};

struct CritiqueImage {
    std::string image;
    std::string task;
    std::vector<GtComment> comments;
};

using CritiqueGroundTruth = std::vector<CritiqueImage>;

struct PredComment {
    std::string text;
    std::optional<GridBox> box;
};

struct DetObject {
    std::string category;
    std::vector<std::string> attributes;
    GridBox box;
};

struct DetImage {
    std::string image;
    std::vector<DetObject> objects; // predictions: emission order
};

struct DetectionGroundTruth {
    DetectionVocabulary vocabulary;
    std::vector<std::string> novel_categories;
    std::vector<DetImage> images;
};

// ---------------------------------------------------------------------------
// Comment metrics
// ---------------------------------------------------------------------------

struct ScoreSet {
    std::vector<double> scores;
    std::optional<double> mean; // nullopt when there is nothing to average
};

inline std::optional<double> mean_of(const std::vector<double>& v) {
    if (v.empty()) {
        return std::nullopt;
    }
    double s = 0.0;
    for (double x : v) {
        s += x;
    }
    return s / static_cast<double>(v.size());
}

namespace detail {

// Best gt index by cosine; ties keep the lowest index.
inline std::pair<std::size_t, double> best_match(const Vector& q, const std::vector<Vector>& gt) {
    std::size_t best = 0;
    double best_score = cosine(q, gt[0]);
    for (std::size_t j = 1; j < gt.size(); ++j) {
        const double s = cosine(q, gt[j]);
        if (s > best_score) {
            best = j;
            best_score = s;
        }
    }
    return {best, best_score};
}

inline std::vector<Vector> embed_all(const std::vector<GtComment>& gt, const EmbeddingProvider& e) {
    if (gt.empty()) {
        throw InvalidArgument("comment metrics need at least one ground-truth comment");
    }
    std::vector<Vector> out;
    for (const auto& g : gt) {
        out.push_back(e.embed_text(g.text));
    }
    return out;
}

} // namespace detail

/// Per prediction, the highest cosine to any ground-truth comment.
inline ScoreSet comment_similarity(const std::vector<PredComment>& preds, const std::vector<GtComment>& gt,
                                   const EmbeddingProvider& embedder) {
    const auto gv = detail::embed_all(gt, embedder);
    ScoreSet out;
    for (const auto& p : preds) {
        out.scores.push_back(detail::best_match(embedder.embed_text(p.text), gv).second);
    }
    out.mean = mean_of(out.scores);
    return out;
}

/// Per prediction, IoU against the box of its most similar ground-truth
/// comment.
inline ScoreSet estimated_iou(const std::vector<PredComment>& preds, const std::vector<GtComment>& gt,
                              const EmbeddingProvider& embedder) {
    const auto gv = detail::embed_all(gt, embedder);
    ScoreSet out;
    for (const auto& p : preds) {
        if (!p.box) {
            throw InvalidArgument("estimated_iou: prediction \"" + p.text + "\" has no box");
        }
        const auto j = detail::best_match(embedder.embed_text(p.text), gv).first;
        out.scores.push_back(iou(*p.box, gt[j].box));
    }
    out.mean = mean_of(out.scores);
    return out;
}

/// IoU for predictions whose text equals a ground-truth comment verbatim
/// (grounding-only runs); other predictions are skipped.
inline ScoreSet direct_iou(const std::vector<PredComment>& preds, const std::vector<GtComment>& gt) {
    ScoreSet out;
    for (const auto& p : preds) {
        if (!p.box) {
            continue;
        }
        for (const auto& g : gt) {
            if (trim(g.text) == trim(p.text)) {
                out.scores.push_back(iou(*p.box, g.box));
                break;
            }
        }
    }
    out.mean = mean_of(out.scores);
    return out;
}

// ---------------------------------------------------------------------------
// Average precision
// ---------------------------------------------------------------------------

inline constexpr double kApIouThreshold = 0.5;

/// A box tagged with the image it belongs to.
struct ImageBox {
    std::size_t image = 0;
    GridBox box;
};

/// Greedy matching in prediction order, then all-points interpolated AP.
/// Each prediction takes the unmatched same-image ground truth with the
/// highest IoU (lowest index on ties) if that IoU reaches the threshold.
/// nullopt when there is no ground truth.
inline std::optional<double> match_and_ap(const std::vector<ImageBox>& preds, const std::vector<ImageBox>& gts,
                                          double iou_threshold = kApIouThreshold) {
    if (gts.empty()) {
        return std::nullopt;
    }
    std::vector<char> used(gts.size(), 0);
    std::vector<char> tp(preds.size(), 0);
    for (std::size_t i = 0; i < preds.size(); ++i) {
        std::optional<std::size_t> best;
        double best_iou = -1.0;
        for (std::size_t j = 0; j < gts.size(); ++j) {
            if (used[j] || gts[j].image != preds[i].image) {
                continue;
            }
            const double v = iou(preds[i].box, gts[j].box);
            if (v > best_iou) {
                best = j;
                best_iou = v;
            }
        }
        if (best && best_iou >= iou_threshold) {
            used[*best] = 1;
            tp[i] = 1;
        }
    }

    const auto n = preds.size();
    std::vector<double> precision(n);
    std::vector<double> recall(n);
    double hits = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        hits += tp[i];
        precision[i] = hits / static_cast<double>(i + 1);
        recall[i] = hits / static_cast<double>(gts.size());
    }
    for (std::size_t i = n; i-- > 1;) {
        precision[i - 1] = std::max(precision[i - 1], precision[i]);
    }
    double ap = 0.0;
    double prev_recall = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        ap += (recall[i] - prev_recall) * precision[i];
        prev_recall = recall[i];
    }
    return ap;
}

inline std::optional<double> match_and_ap(const std::vector<GridBox>& preds, const std::vector<GridBox>& gts,
                                          double iou_threshold = kApIouThreshold) {
    std::vector<ImageBox> p;
    std::vector<ImageBox> g;
    for (const auto& b : preds) {
        p.push_back({0, b});
    }
    for (const auto& b : gts) {
        g.push_back({0, b});
    }
    return match_and_ap(p, g, iou_threshold);
}

enum class MapMode { OVAD, OVD };

inline std::string_view map_mode_name(MapMode m) { return m == MapMode::OVAD ? "ovad" : "ovd"; }

struct CategoryAp {
    std::string category;
    std::optional<double> ap; // nullopt: no ground truth, excluded from the mean
};

struct MapResult {
    double map = 0.0; // 0-100
    std::vector<CategoryAp> per_category;
};

namespace detail {

inline bool covers(const DetObject& o, const std::string& category, MapMode mode) {
    if (mode == MapMode::OVD) {
        return o.category == category;
    }
    return std::find(o.attributes.begin(), o.attributes.end(), category) != o.attributes.end();
}

} // namespace detail

/// Mean AP over attribute (OVAD) or object (OVD) categories on a 0-100
/// scale. Predictions are matched to ground-truth images by id; across
/// images they are ranked by their emission index, earlier images first on
/// equal index.
inline MapResult compute_map(const std::vector<DetImage>& preds, const DetectionGroundTruth& gt, MapMode mode) {
    const auto& cats = mode == MapMode::OVAD ? gt.vocabulary.attributes : gt.vocabulary.categories;
    if (cats.empty()) {
        throw InvalidArgument("compute_map: empty " +
                              std::string(mode == MapMode::OVAD ? "attribute" : "category") + " vocabulary");
    }
    struct Ranked {
        std::size_t rank;
        std::size_t image;
        const DetObject* obj;
    };
    std::vector<Ranked> ranked;
    for (const auto& p : preds) {
        std::size_t img = gt.images.size();
        for (std::size_t i = 0; i < gt.images.size(); ++i) {
            if (gt.images[i].image == p.image) {
                img = i;
                break;
            }
        }
        if (img == gt.images.size()) {
            continue; // image not in the dataset
        }
        for (std::size_t r = 0; r < p.objects.size(); ++r) {
            ranked.push_back({r, img, &p.objects[r]});
        }
    }
    std::stable_sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
        return a.rank != b.rank ? a.rank < b.rank : a.image < b.image;
    });

    MapResult out;
    double sum = 0.0;
    std::size_t counted = 0;
    for (const auto& c : cats) {
        std::vector<ImageBox> g;
        for (std::size_t i = 0; i < gt.images.size(); ++i) {
            for (const auto& o : gt.images[i].objects) {
                if (detail::covers(o, c, mode)) {
                    g.push_back({i, o.box});
                }
            }
        }
        std::vector<ImageBox> p;
        for (const auto& r : ranked) {
            if (detail::covers(*r.obj, c, mode)) {
                p.push_back({r.image, r.obj->box});
            }
        }
        const auto ap = match_and_ap(p, g);
        out.per_category.push_back({c, ap});
        if (ap) {
            sum += *ap;
            ++counted;
        }
    }
    out.map = counted ? 100.0 * sum / static_cast<double>(counted) : 0.0;
    return out;
}

// ---------------------------------------------------------------------------
// DOM snapping
// ---------------------------------------------------------------------------

inline constexpr double kDefaultSnapIou = 0.3;

/// The DOM box with the highest IoU against `box` when that IoU reaches
/// min_iou (ties: smaller area, then earlier in the list); otherwise `box`.
inline GridBox snap_to_dom(const GridBox& box, const std::vector<GridBox>& dom, double min_iou = kDefaultSnapIou) {
    std::optional<std::size_t> best;
    double best_iou = 0.0;
    for (std::size_t i = 0; i < dom.size(); ++i) {
        if (!(dom[i].right > dom[i].left && dom[i].bottom > dom[i].top)) {
            throw InvalidArgument("snap_to_dom: DOM box " + format_box(dom[i]) + " is invalid");
        }
        const double v = iou(box, dom[i]);
        if (!best || v > best_iou || (v == best_iou && dom[i].area() < dom[*best].area())) {
            best = i;
            best_iou = v;
        }
    }
    if (best && best_iou >= min_iou) {
        return dom[*best];
    }
    return box;
}

// ---------------------------------------------------------------------------
// Loaders
// ---------------------------------------------------------------------------

namespace detail {

template <class Fn>
void for_each_json_line(const std::filesystem::path& path, Fn&& fn) {
    std::ifstream in(path);
    if (!in) {
        throw InvalidArgument("cannot read " + path.string());
    }
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) {
            continue;
        }
        try {
            fn(ojson::parse(line), lineno);
        } catch (const nlohmann::json::exception& e) {
            throw SchemaError(path.string(), lineno, e.what());
        } catch (const InvalidArgument& e) {
            throw SchemaError(path.string(), lineno, e.what());
        }
    }
}

inline GridBox checked_box(const ojson& j, const GridSpace& space) {
    const GridBox b = box_from_json(j);
    require_valid(b, space, "box");
    return b;
}

inline std::vector<std::string> string_list(const ojson& j, const char* what) {
    if (!j.is_array()) {
        throw InvalidArgument(std::string(what) + " must be an array of strings");
    }
    std::vector<std::string> out;
    for (const auto& v : j) {
        if (!v.is_string()) {
            throw InvalidArgument(std::string(what) + " must be an array of strings");
        }
        out.push_back(v.get<std::string>());
    }
    return out;
}

inline const ojson& field(const ojson& j, const char* key) {
    if (!j.is_object() || !j.contains(key)) {
        throw InvalidArgument(std::string("missing field \"") + key + "\"");
    }
    return j.at(key);
}

} // namespace detail

/// Line-delimited; each nonblank line is
///   {"image": "id", "task": "optional", "comments": [{"text": "...", "box": [l, t, r, b]}]}
inline CritiqueGroundTruth load_critique_dataset(const std::filesystem::path& path, const GridSpace& space = {}) {
    CritiqueGroundTruth out;
    detail::for_each_json_line(path, [&](const ojson& j, std::size_t) {
        CritiqueImage img;
        img.image = detail::field(j, "image").get<std::string>();
        if (j.contains("task")) {
            img.task = j["task"].get<std::string>();
        }
        const ojson& comments = detail::field(j, "comments");
        if (!comments.is_array()) {
            throw InvalidArgument("\"comments\" must be an array");
        }
        for (const auto& c : comments) {
            img.comments.push_back({detail::field(c, "text").get<std::string>(),
                                    detail::checked_box(detail::field(c, "box"), space)});
        }
        out.push_back(std::move(img));
    });
    return out;
}

/// Line-delimited. The first record carries the vocabulary:
///   {"vocabulary": {"categories": [...], "attributes": [...], "novel": [...]}}
/// and each later record one image:
///   {"image": "id", "objects": [{"category": "c", "attributes": ["a"], "box": [l, t, r, b]}]}
inline DetectionGroundTruth load_detection_dataset(const std::filesystem::path& path, const GridSpace& space = {}) {
    DetectionGroundTruth out;
    bool have_vocab = false;
    detail::for_each_json_line(path, [&](const ojson& j, std::size_t) {
        if (!have_vocab) {
            const ojson& v = detail::field(j, "vocabulary");
            out.vocabulary.categories = detail::string_list(detail::field(v, "categories"), "categories");
            out.vocabulary.attributes = detail::string_list(detail::field(v, "attributes"), "attributes");
            if (v.contains("novel")) {
                out.novel_categories = detail::string_list(v["novel"], "novel");
            }
            have_vocab = true;
            return;
        }
        auto known = [](const std::vector<std::string>& vocab, const std::string& s) {
            return std::find(vocab.begin(), vocab.end(), s) != vocab.end();
        };
        DetImage img;
        img.image = detail::field(j, "image").get<std::string>();
        const ojson& objects = detail::field(j, "objects");
        if (!objects.is_array()) {
            throw InvalidArgument("\"objects\" must be an array");
        }
        for (const auto& o : objects) {
            DetObject d;
            d.category = detail::field(o, "category").get<std::string>();
            if (!known(out.vocabulary.categories, d.category)) {
                throw InvalidArgument("category \"" + d.category + "\" is not in the vocabulary");
            }
            if (o.contains("attributes")) {
                d.attributes = detail::string_list(o["attributes"], "attributes");
            }
            for (const auto& a : d.attributes) {
                if (!known(out.vocabulary.attributes, a)) {
                    throw InvalidArgument("attribute \"" + a + "\" is not in the vocabulary");
                }
            }
            d.box = detail::checked_box(detail::field(o, "box"), space);
            img.objects.push_back(std::move(d));
        }
        out.images.push_back(std::move(img));
    });
    return out;
}

/// A UI hierarchy in pixel coordinates:
///   {"width": W, "height": H, "root": {"bounds": [l, t, r, b], "children": [...]}}
/// Flattened pre-order into grid boxes; bounds are clipped to the screen and
/// empty ones dropped.
inline std::vector<GridBox> load_dom(const std::filesystem::path& path, const GridSpace& space = {}) {
    const std::string text = read_text_file(path);
    ojson j;
    try {
        j = ojson::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(path.string(), 1, e.what());
    }
    std::vector<GridBox> out;
    try {
        const int w = detail::field(j, "width").get<int>();
        const int h = detail::field(j, "height").get<int>();
        if (w <= 0 || h <= 0) {
            throw InvalidArgument("width and height must be positive");
        }
        std::vector<const ojson*> stack{&detail::field(j, "root")};
        while (!stack.empty()) {
            const ojson& node = *stack.back();
            stack.pop_back();
            const ojson& b = detail::field(node, "bounds");
            if (!b.is_array() || b.size() != 4) {
                throw InvalidArgument("bounds must be [left, top, right, bottom]");
            }
            const PixelBox px{std::clamp(b[0].get<int>(), 0, w), std::clamp(b[1].get<int>(), 0, h),
                              std::clamp(b[2].get<int>(), 0, w), std::clamp(b[3].get<int>(), 0, h)};
            if (px.right > px.left && px.bottom > px.top) {
                out.push_back(pixel_to_grid(px, w, h, space));
            }
            if (node.contains("children")) {
                const ojson& kids = node["children"];
                if (!kids.is_array()) {
                    throw InvalidArgument("children must be an array");
                }
                for (auto it = kids.rbegin(); it != kids.rend(); ++it) {
                    stack.push_back(&*it);
                }
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(path.string(), 1, e.what());
    } catch (const InvalidArgument& e) {
        throw SchemaError(path.string(), 1, e.what());
    }
    return out;
}

/// Emitted items of a report document, in emission order.
inline std::vector<PredComment> report_predictions(const ojson& report) {
    std::vector<PredComment> out;
    for (const auto& it : detail::field(report, "items")) {
        if (it.value("status", "") != "emitted") {
            continue;
        }
        PredComment p{it.at("comment").get<std::string>(), std::nullopt};
        if (it.contains("box") && !it["box"].is_null()) {
            p.box = box_from_json(it["box"]);
        }
        out.push_back(std::move(p));
    }
    return out;
}

/// Reads detection predictions ("category: attr, attr" items) from a report.
inline DetImage report_detections(const ojson& report) {
    DetImage out;
    out.image = report.value("image", "");
    for (const auto& p : report_predictions(report)) {
        if (!p.box) {
            continue;
        }
        const DetectionLabel label = parse_detection_label(p.text);
        out.objects.push_back({label.category, label.attributes, *p.box});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

struct EvalReport {
    std::string mode;
    std::size_t images = 0;
    std::size_t predictions = 0;
    std::optional<double> comment_similarity;
    std::optional<double> estimated_iou;
    std::optional<double> direct_iou;
    std::optional<double> map_ovad;
    std::optional<double> map_ovd;
    std::vector<CategoryAp> per_category;
};

inline std::string format_metric(const std::optional<double>& v, int decimals = 3) {
    if (!v) {
        return "N/A";
    }
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, *v);
    return buf;
}

inline ojson eval_report_to_json(const EvalReport& r) {
    auto opt = [](const std::optional<double>& v) { return v ? ojson(*v) : ojson(nullptr); };
    ojson j;
    j["mode"] = r.mode;
    j["images"] = r.images;
    j["predictions"] = r.predictions;
    j["comment_similarity"] = opt(r.comment_similarity);
    j["estimated_iou"] = opt(r.estimated_iou);
    j["direct_iou"] = opt(r.direct_iou);
    j["map_ovad"] = opt(r.map_ovad);
    j["map_ovd"] = opt(r.map_ovd);
    ojson cats = ojson::array();
    for (const auto& c : r.per_category) {
        cats.push_back({{"category", c.category}, {"ap", opt(c.ap)}});
    }
    j["per_category"] = std::move(cats);
    return j;
}

inline std::string eval_report_table(const EvalReport& r) {
    std::string out;
    char buf[256];
    std::snprintf(buf, sizeof buf, "mode: %s   images: %zu   predictions: %zu\n", r.mode.c_str(), r.images,
                  r.predictions);
    out += buf;
    if (r.mode == "critique") {
        std::snprintf(buf, sizeof buf, "%-24s %-12s %-14s %-10s\n", "", "Comment Sim", "Estimated IoU", "IoU");
        out += buf;
        std::snprintf(buf, sizeof buf, "%-24s %-12s %-14s %-10s\n", "run", format_metric(r.comment_similarity).c_str(),
                      format_metric(r.estimated_iou).c_str(), format_metric(r.direct_iou).c_str());
        out += buf;
        return out;
    }
    std::snprintf(buf, sizeof buf, "%-24s %-10s %-10s\n", "", "OVAD mAP", "OVD mAP");
    out += buf;
    std::snprintf(buf, sizeof buf, "%-24s %-10s %-10s\n", "run", format_metric(r.map_ovad, 1).c_str(),
                  format_metric(r.map_ovd, 1).c_str());
    out += buf;
    for (const auto& c : r.per_category) {
        std::snprintf(buf, sizeof buf, "  %-22s AP %s\n", c.category.c_str(),
                      c.ap ? format_metric(100.0 * *c.ap, 1).c_str() : "N/A");
        out += buf;
    }
    return out;
}

} // namespace groundcrit
