#pragma once

// Shared fixtures and independent oracles for the unit and acceptance tests.
// The oracles deliberately avoid the library's own arithmetic.

#include <groundcrit/groundcrit.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <unistd.h>

namespace gc_test {

using namespace groundcrit;
namespace fs = std::filesystem;

inline fs::path data_path(const std::string& name) { return fs::path(GC_TEST_DATA) / name; }

class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = fs::temp_directory_path() /
                ("groundcrit_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& name) const { return path_ / name; }

private:
    fs::path path_;
};

// ---------------------------------------------------------------------------
// Geometry oracles
// ---------------------------------------------------------------------------

struct IntBox {
    int l, t, r, b;
};

/// IoU by counting covered unit cells, for boxes with integer corners.
inline double iou_by_cells(const IntBox& a, const IntBox& b) {
    const int x0 = std::min(a.l, b.l), x1 = std::max(a.r, b.r);
    const int y0 = std::min(a.t, b.t), y1 = std::max(a.b, b.b);
    long inter = 0, uni = 0;
    for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
            const bool in_a = x >= a.l && x < a.r && y >= a.t && y < a.b;
            const bool in_b = x >= b.l && x < b.r && y >= b.t && y < b.b;
            inter += in_a && in_b;
            uni += in_a || in_b;
        }
    }
    return uni ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

inline IntBox random_int_box(std::mt19937& g, int w, int h) {
    std::uniform_int_distribution<int> dx(0, w - 1), dy(0, h - 1);
    const int l = dx(g), t = dy(g);
    std::uniform_int_distribution<int> rx(l + 1, w), ry(t + 1, h);
    return {l, t, rx(g), ry(g)};
}

/// Largest per-edge displacement allowed for one perturbation at `frac`:
/// an offset moves an edge by at most frac of the larger margin on that
/// axis, a resize moves the far edge by at most frac of the box size.
inline bool within_step_bound(const GridBox& gt, const GridBox& p, double frac, const GridSpace& s) {
    const double eps = 1e-9;
    const double mx = std::max(gt.left, s.width_units - gt.right);
    const double my = std::max(gt.top, s.height_units - gt.bottom);
    const double w = gt.right - gt.left, h = gt.bottom - gt.top;
    return std::abs(p.left - gt.left) <= frac * mx + eps && std::abs(p.top - gt.top) <= frac * my + eps &&
           std::abs(p.right - gt.right) <= frac * (mx + w) + eps &&
           std::abs(p.bottom - gt.bottom) <= frac * (my + h) + eps;
}

// ---------------------------------------------------------------------------
// Metric oracles
// ---------------------------------------------------------------------------

inline double naive_cos(const std::vector<double>& a, const std::vector<double>& b) {
    double d = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        d += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    return (na == 0 || nb == 0) ? 0.0 : d / (std::sqrt(na) * std::sqrt(nb));
}

inline double naive_iou(const GridBox& a, const GridBox& b) {
    const double l = std::max(a.left, b.left), r = std::min(a.right, b.right);
    const double t = std::max(a.top, b.top), bo = std::min(a.bottom, b.bottom);
    const double inter = (r > l && bo > t) ? (r - l) * (bo - t) : 0.0;
    const double u = (a.right - a.left) * (a.bottom - a.top) + (b.right - b.left) * (b.bottom - b.top) - inter;
    return u > 0 ? inter / u : 0.0;
}

/// AP written the long way: greedy TP/FP flags, then for every distinct
/// recall level the best precision at that recall or beyond, weighted by the
/// recall step.
inline double naive_ap(const std::vector<std::pair<int, GridBox>>& preds,
                       const std::vector<std::pair<int, GridBox>>& gts, double thr = 0.5) {
    std::vector<bool> taken(gts.size(), false);
    std::vector<int> flags;
    for (const auto& [img, box] : preds) {
        int best = -1;
        double bv = -1;
        for (std::size_t j = 0; j < gts.size(); ++j) {
            if (taken[j] || gts[j].first != img) {
                continue;
            }
            const double v = naive_iou(box, gts[j].second);
            if (v > bv) {
                bv = v;
                best = static_cast<int>(j);
            }
        }
        if (best >= 0 && bv >= thr) {
            taken[static_cast<std::size_t>(best)] = true;
            flags.push_back(1);
        } else {
            flags.push_back(0);
        }
    }
    std::vector<double> prec, rec;
    int tp = 0;
    for (std::size_t i = 0; i < flags.size(); ++i) {
        tp += flags[i];
        prec.push_back(static_cast<double>(tp) / static_cast<double>(i + 1));
        rec.push_back(static_cast<double>(tp) / static_cast<double>(gts.size()));
    }
    double ap = 0;
    double last_r = 0;
    std::set<double> levels(rec.begin(), rec.end());
    for (double r : levels) {
        double best_p = 0;
        for (std::size_t i = 0; i < rec.size(); ++i) {
            if (rec[i] >= r) {
                best_p = std::max(best_p, prec[i]);
            }
        }
        ap += (r - last_r) * best_p;
        last_r = r;
    }
    return ap;
}

// ---------------------------------------------------------------------------
// Pipeline fixtures
// ---------------------------------------------------------------------------

inline std::shared_ptr<const EmbeddingProvider> hash_embedder() { return std::make_shared<HashEmbedder>(); }

inline const ExemplarStore& fixture_store() {
    static const ExemplarStore store =
        load_exemplar_store(data_path("exemplars/exemplars.jsonl"), hash_embedder());
    return store;
}

inline const RasterImage& signin_image() {
    static const RasterImage img = read_png(data_path("ui_signin.png"));
    return img;
}

inline const RasterImage& feed_image() {
    static const RasterImage img = read_png(data_path("ui_feed.png"));
    return img;
}

inline const TaskProfile& critique_profile() {
    static const TaskProfile p = design_critique_profile("1. Keep text readable.");
    return p;
}

struct ScriptedRun {
    PipelineReport report;
    std::vector<ScriptLogEntry> log;
    std::size_t unused = 0;
};

/// Runs the full pipeline (or grounding only when `ground_comment` is set)
/// against a scripted backend serving `responses` in order.
inline ScriptedRun run_scripted(const std::vector<ScriptEntry>& script, const PipelineConfig& cfg,
                                const std::string& ground_comment = {}, std::uint64_t seed = 7) {
    ScriptedBackend backend(script);
    Backends b;
    b.fallback = &backend;
    Rng rng(seed);
    ScriptedRun out;
    out.report = ground_comment.empty()
                     ? run(signin_image(), critique_profile(), fixture_store(), b, cfg, rng, "ui_signin.png")
                     : run_ground_only(signin_image(), ground_comment, critique_profile(), fixture_store(), b,
                                       cfg, rng, "ui_signin.png");
    out.log = backend.log();
    out.unused = backend.remaining();
    return out;
}

inline std::vector<ScriptEntry> plain_script(const std::vector<std::string>& responses) {
    std::vector<ScriptEntry> out;
    for (const auto& r : responses) {
        out.push_back({std::nullopt, ChatResponse{r, std::nullopt}, {}});
    }
    return out;
}

inline const std::string kAcceptBox(kBoxAcceptSentinel);
inline const std::string kAcceptText(kCommentAcceptSentinel);

// ---------------------------------------------------------------------------
// Report invariants
// ---------------------------------------------------------------------------

/// Every generated item ends in exactly one terminal state.
inline bool items_conserved(const PipelineReport& r) {
    return r.items.size() ==
           r.count(ItemStatus::FilteredOut) + r.count(ItemStatus::Discarded) + r.count(ItemStatus::Emitted);
}

/// total = TextGen + TextFilter calls + per item (BoxGen + r + v + t), and the
/// total equals the number of backend calls actually made.
inline bool call_law_holds(const PipelineReport& r, std::size_t backend_calls) {
    int per_item = 0;
    for (const auto& i : r.items) {
        per_item += i.box_gen_calls + i.box_refine_calls + i.validation_calls + i.text_refine_calls;
    }
    const int expected = r.calls(Stage::TextGen) + r.calls(Stage::TextFilter) + per_item;
    return r.total_calls() == expected && static_cast<std::size_t>(r.total_calls()) == backend_calls &&
           r.transcript.size() == backend_calls;
}

inline bool budgets_hold(const PipelineReport& r, const PipelineConfig& cfg) {
    for (const auto& i : r.items) {
        if (i.box_refine_calls > cfg.max_box_refine_iters || i.text_refine_calls > cfg.max_text_refine_iters ||
            i.validation_cycles > cfg.max_validation_cycles) {
            return false;
        }
        if (cfg.validation_on && i.status == ItemStatus::Emitted &&
            (i.verdicts.empty() || i.verdicts.back() != ValidationVerdict::BothCorrect)) {
            return false;
        }
        if (i.status == ItemStatus::Emitted && !i.box) {
            return false;
        }
        if (i.status == ItemStatus::Discarded && i.discard_reason.empty()) {
            return false;
        }
        if (i.box && (i.box_trace.empty() || !(i.box_trace.back() == *i.box))) {
            return false;
        }
    }
    return true;
}

} // namespace gc_test

namespace gc_test {

// ---------------------------------------------------------------------------
// Rendering goldens
// ---------------------------------------------------------------------------

struct GoldenRender {
    std::string name;
    RasterImage image;
};

/// The frozen renders: axes and a zoom patch on each fixture screen.
inline std::vector<GoldenRender> golden_renders() {
    const GridSpace s;
    return {
        {"signin_axes", draw_coordinate_axes(signin_image(), s)},
        {"signin_patch", render_zoom_patch(signin_image(), {1, 11.5, 8, 12.75}, s)},
        {"feed_axes", draw_coordinate_axes(feed_image(), s)},
        {"feed_patch", render_zoom_patch(feed_image(), {2, 3, 5, 6}, s)},
    };
}

inline fs::path golden_dir() { return data_path("golden"); }

/// name -> checksum, from golden/checksums.txt ("name checksum" per line).
inline std::map<std::string, std::string> read_golden_manifest() {
    std::map<std::string, std::string> out;
    std::ifstream in(golden_dir() / "checksums.txt");
    std::string name, sum;
    while (in >> name >> sum) {
        out[name] = sum;
    }
    return out;
}

/// Rewrites the golden PNGs and manifest when GROUNDCRIT_UPDATE_GOLDEN=1.
inline bool maybe_update_goldens(const std::vector<GoldenRender>& renders) {
    const char* flag = std::getenv("GROUNDCRIT_UPDATE_GOLDEN");
    if (flag == nullptr || std::string(flag) != "1") {
        return false;
    }
    fs::create_directories(golden_dir());
    std::ofstream manifest(golden_dir() / "checksums.txt");
    for (const auto& r : renders) {
        write_png(golden_dir() / (r.name + ".png"), r.image);
        manifest << r.name << ' ' << raster_checksum(r.image) << '\n';
    }
    return true;
}

/// Independent model of where the blue rectangle of a zoom patch lands:
/// grid -> source pixels (floor(x + 0.5)) -> crop offset -> integer upscale.
struct PatchOracle {
    int left, top, right, bottom; // exclusive right/bottom, patch pixels
};

inline PatchOracle patch_oracle(int w, int h, const GridBox& c, double frac) {
    auto px = [](double v, double extent, double units) {
        return static_cast<int>(std::floor(v * extent / units + 0.5));
    };
    const double cw = c.right - c.left, ch = c.bottom - c.top;
    const double el = std::max(0.0, c.left - frac * cw), er = std::min(9.0, c.right + frac * cw);
    const double et = std::max(0.0, c.top - frac * ch), eb = std::min(16.0, c.bottom + frac * ch);
    const int cl = px(el, w, 9), cr = px(er, w, 9), ct = px(et, h, 16), cb = px(eb, h, 16);
    const int longest = std::max(cr - cl, cb - ct);
    int scale = 1;
    while (longest * scale < 512) {
        ++scale;
    }
    return {(px(c.left, w, 9) - cl) * scale, (px(c.top, h, 16) - ct) * scale,
            (px(c.right, w, 9) - cl) * scale, (px(c.bottom, h, 16) - ct) * scale};
}

inline bool is_blue(const RasterImage& img, int x, int y) { return img.at(x, y) == kBlue; }

// Outermost blue pixels along the middle row and column of the rectangle.
inline PatchOracle measure_blue(const RasterImage& img, const PatchOracle& near) {
    const int my = (near.top + near.bottom) / 2;
    const int mx = (near.left + near.right) / 2;
    PatchOracle m{-1, -1, -1, -1};
    for (int x = 0; x < img.width(); ++x) {
        if (is_blue(img, x, my)) {
            m.left = x;
            break;
        }
    }
    for (int x = img.width() - 1; x >= 0; --x) {
        if (is_blue(img, x, my)) {
            m.right = x + 1;
            break;
        }
    }
    for (int y = 0; y < img.height(); ++y) {
        if (is_blue(img, mx, y)) {
            m.top = y;
            break;
        }
    }
    for (int y = img.height() - 1; y >= 0; --y) {
        if (is_blue(img, mx, y)) {
            m.bottom = y + 1;
            break;
        }
    }
    return m;
}

// ---------------------------------------------------------------------------
// Metric oracles over synthetic fixtures
// ---------------------------------------------------------------------------

inline GridBox random_grid_box(std::mt19937& g) {
    const IntBox b = random_int_box(g, 9, 16);
    return {double(b.l), double(b.t), double(b.r), double(b.b)};
}

/// Comment similarity and estimated IoU as a double loop, recomputing every
/// embedding.
inline std::pair<std::vector<double>, std::vector<double>>
brute_comment_metrics(const std::vector<PredComment>& preds, const std::vector<GtComment>& gt,
                      const EmbeddingProvider& e) {
    std::vector<double> sim, est;
    for (const auto& p : preds) {
        double best = -2;
        std::size_t arg = 0;
        for (std::size_t j = 0; j < gt.size(); ++j) {
            const double c = naive_cos(e.embed_text(p.text), e.embed_text(gt[j].text));
            if (c > best) {
                best = c;
                arg = j;
            }
        }
        sim.push_back(best);
        est.push_back(naive_iou(*p.box, gt[arg].box));
    }
    return {sim, est};
}

/// mAP from naive_ap per category, ranking predictions by emission index.
inline double brute_map(const std::vector<DetImage>& preds, const DetectionGroundTruth& gt, MapMode mode) {
    const auto& cats = mode == MapMode::OVAD ? gt.vocabulary.attributes : gt.vocabulary.categories;
    auto has = [&](const DetObject& o, const std::string& c) {
        if (mode == MapMode::OVD) return o.category == c;
        for (const auto& a : o.attributes) {
            if (a == c) return true;
        }
        return false;
    };
    double sum = 0;
    int n = 0;
    for (const auto& c : cats) {
        std::vector<std::pair<int, GridBox>> g, p;
        for (std::size_t i = 0; i < gt.images.size(); ++i) {
            for (const auto& o : gt.images[i].objects) {
                if (has(o, c)) g.emplace_back(int(i), o.box);
            }
        }
        if (g.empty()) continue;
        // Rank r of every image before rank r+1 of any image.
        std::size_t max_rank = 0;
        for (const auto& pi : preds) max_rank = std::max(max_rank, pi.objects.size());
        for (std::size_t r = 0; r < max_rank; ++r) {
            for (std::size_t i = 0; i < gt.images.size(); ++i) {
                for (const auto& pi : preds) {
                    if (pi.image == gt.images[i].image && r < pi.objects.size() && has(pi.objects[r], c)) {
                        p.emplace_back(int(i), pi.objects[r].box);
                    }
                }
            }
        }
        sum += naive_ap(p, g);
        ++n;
    }
    return n ? 100.0 * sum / n : 0.0;
}

// Short sentences over a small shared vocabulary, so hash-embedding cosines
// spread out.
inline std::string random_sentence(std::mt19937& g) {
    static const std::vector<std::string> words{"button", "label", "contrast", "spacing", "field",
                                                "small",  "icon",  "header",   "color",   "tap"};
    std::string s;
    const int n = 2 + int(g() % 5);
    for (int i = 0; i < n; ++i) {
        s += (i ? " " : "") + words[g() % words.size()];
    }
    return s;
}

inline DetectionGroundTruth synthetic_detection(std::mt19937& g, int images) {
    DetectionGroundTruth gt;
    gt.vocabulary = {{"a", "b", "c"}, {"x", "y", "z", "w"}};
    for (int i = 0; i < images; ++i) {
        DetImage img{"img" + std::to_string(i), {}};
        const int n = 1 + int(g() % 3);
        for (int k = 0; k < n; ++k) {
            DetObject o{gt.vocabulary.categories[g() % 3], {}, random_grid_box(g)};
            for (const auto& a : gt.vocabulary.attributes) {
                if (g() % 2) o.attributes.push_back(a);
            }
            img.objects.push_back(o);
        }
        gt.images.push_back(img);
    }
    return gt;
}

} // namespace gc_test
