#pragma once

#include <groundcrit/error.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

namespace groundcrit {

// ---------------------------------------------------------------------------
// Random numbers
// ---------------------------------------------------------------------------

/// Engine used everywhere randomness is needed. mt19937_64 is fully specified
/// by the standard; the helpers below avoid the implementation-defined
/// std::*_distribution so seeded runs are bit-reproducible across toolchains.
using Rng = std::mt19937_64;

/// Uniform integer in [0, n). n must be positive.
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
    if (n == 0) {
        throw InvalidArgument("uniform_index: empty range");
    }
    const std::uint64_t range = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = Rng::max() - (Rng::max() % range + 1) % range;
    std::uint64_t draw = rng();
    while (draw > limit) {
        draw = rng();
    }
    return static_cast<std::size_t>(draw % range);
}

/// SplitMix64 finalizer, used to derive independent child seeds.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// ---------------------------------------------------------------------------
// Coordinate spaces and boxes
// ---------------------------------------------------------------------------

/// Prompt coordinate space. Portrait phone screenshots use 9 x 16 units.
struct GridSpace {
    double width_units = 9.0;
    double height_units = 16.0;

    bool valid() const noexcept { return width_units > 0.0 && height_units > 0.0; }
    friend bool operator==(const GridSpace&, const GridSpace&) = default;
};

/// Rectangle in grid units, (left, top, right, bottom) with y growing downward.
struct GridBox {
    double left = 0.0;
    double top = 0.0;
    double right = 0.0;
    double bottom = 0.0;

    double width() const noexcept { return right - left; }
    double height() const noexcept { return bottom - top; }
    double area() const noexcept { return width() * height(); }

    bool valid_in(const GridSpace& space) const noexcept {
        return std::isfinite(left) && std::isfinite(top) && std::isfinite(right) &&
               std::isfinite(bottom) && left < right && top < bottom && left >= 0.0 &&
               top >= 0.0 && right <= space.width_units && bottom <= space.height_units;
    }

    friend bool operator==(const GridBox&, const GridBox&) = default;
};

/// Raster-side rectangle; right/bottom are exclusive pixel edges.
struct PixelBox {
    int left = 0;
    int top = 0;
    int right = 0;
    int bottom = 0;

    int width() const noexcept { return right - left; }
    int height() const noexcept { return bottom - top; }

    friend bool operator==(const PixelBox&, const PixelBox&) = default;
};

/// Distance from each box edge to the matching image edge, in grid units.
struct Margins {
    double left_margin = 0.0;
    double right_margin = 0.0;
    double top_margin = 0.0;
    double bottom_margin = 0.0;

    friend bool operator==(const Margins&, const Margins&) = default;
};

struct PerturbConfig {
    int max_num_perturb = 4;
    std::uint64_t rng_seed = 0;
};

/// Formats a coordinate with at most three decimals and no trailing zeros.
inline std::string format_coord(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    std::string s(buf);
    while (!s.empty() && s.back() == '0') {
        s.pop_back();
    }
    if (!s.empty() && s.back() == '.') {
        s.pop_back();
    }
    if (s == "-0") {
        s = "0";
    }
    return s;
}

/// "(left, top, right, bottom)": the surface syntax used in prompts and parsers.
inline std::string format_box(const GridBox& b) {
    return "(" + format_coord(b.left) + ", " + format_coord(b.top) + ", " +
           format_coord(b.right) + ", " + format_coord(b.bottom) + ")";
}

inline void require_valid(const GridBox& b, const GridSpace& space, const char* where) {
    if (!b.valid_in(space)) {
        throw InvalidArgument(std::string(where) + ": box " + format_box(b) +
                              " is not valid in the grid space");
    }
}

// ---------------------------------------------------------------------------
// Box arithmetic
// ---------------------------------------------------------------------------

/// Intersection over union. Disjoint or edge-touching boxes give 0.
inline double iou(const GridBox& a, const GridBox& b) {
    const double iw = std::min(a.right, b.right) - std::max(a.left, b.left);
    const double ih = std::min(a.bottom, b.bottom) - std::max(a.top, b.top);
    if (iw <= 0.0 || ih <= 0.0) {
        return 0.0;
    }
    const double inter = iw * ih;
    const double uni = a.area() + b.area() - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

inline int round_half_up(double v) { return static_cast<int>(std::floor(v + 0.5)); }

inline GridBox clamp_to(const GridBox& b, const GridSpace& space) {
    return {std::clamp(b.left, 0.0, space.width_units), std::clamp(b.top, 0.0, space.height_units),
            std::clamp(b.right, 0.0, space.width_units),
            std::clamp(b.bottom, 0.0, space.height_units)};
}

/// Linear map into pixels with half-up rounding. Throws BelowResolution when
/// the result has zero width or height.
inline PixelBox grid_to_pixel(const GridBox& b, int image_w, int image_h, const GridSpace& space) {
    if (image_w <= 0 || image_h <= 0) {
        throw InvalidArgument("grid_to_pixel: image dimensions must be positive");
    }
    require_valid(b, space, "grid_to_pixel");
    const double sx = image_w / space.width_units;
    const double sy = image_h / space.height_units;
    PixelBox p{round_half_up(b.left * sx), round_half_up(b.top * sy), round_half_up(b.right * sx),
               round_half_up(b.bottom * sy)};
    p.left = std::clamp(p.left, 0, image_w);
    p.right = std::clamp(p.right, 0, image_w);
    p.top = std::clamp(p.top, 0, image_h);
    p.bottom = std::clamp(p.bottom, 0, image_h);
    if (p.width() <= 0 || p.height() <= 0) {
        throw BelowResolution("grid_to_pixel: box " + format_box(b) +
                              " is below raster resolution");
    }
    return p;
}

inline GridBox pixel_to_grid(const PixelBox& p, int image_w, int image_h, const GridSpace& space) {
    if (image_w <= 0 || image_h <= 0) {
        throw InvalidArgument("pixel_to_grid: image dimensions must be positive");
    }
    const double sx = space.width_units / image_w;
    const double sy = space.height_units / image_h;
    return {p.left * sx, p.top * sy, p.right * sx, p.bottom * sy};
}

inline Margins margins(const GridBox& b, const GridSpace& space) {
    return {b.left, space.width_units - b.right, b.top, space.height_units - b.bottom};
}

/// Grows the box by context_frac of its size on every side, clamped to the space.
inline GridBox expand_with_context(const GridBox& b, double context_frac, const GridSpace& space) {
    if (!(context_frac >= 0.0)) {
        throw InvalidArgument("expand_with_context: context_frac must be >= 0");
    }
    const double dx = context_frac * b.width();
    const double dy = context_frac * b.height();
    return clamp_to({b.left - dx, b.top - dy, b.right + dx, b.bottom + dy}, space);
}

// ---------------------------------------------------------------------------
// Perturbation machinery for synthetic refinement traces
// ---------------------------------------------------------------------------

/// Every candidate generate_perturb may choose from, before filtering. Offsets
/// move the box toward each image edge by perturb_frac of the margin on that
/// side; resizes scale width and height by (1 +/- perturb_frac) keeping the
/// top-left corner fixed. 2 x 2 offsets times 2 x 2 resizes = 16 candidates.
inline std::vector<GridBox> perturb_candidates(const GridBox& b, double perturb_frac,
                                               const GridSpace& space) {
    const Margins m = margins(b, space);
    const double x_offsets[2] = {-perturb_frac * m.left_margin, perturb_frac * m.right_margin};
    const double y_offsets[2] = {-perturb_frac * m.top_margin, perturb_frac * m.bottom_margin};
    const double fracs[2] = {-perturb_frac, perturb_frac};
    const double w = b.width();
    const double h = b.height();

    std::vector<GridBox> moved;
    moved.reserve(4);
    for (double dx : x_offsets) {
        for (double dy : y_offsets) {
            moved.push_back({b.left + dx, b.top + dy, b.right + dx, b.bottom + dy});
        }
    }

    std::vector<GridBox> out;
    out.reserve(16);
    for (const GridBox& m_box : moved) {
        for (double wf : fracs) {
            for (double hf : fracs) {
                out.push_back({m_box.left, m_box.top, m_box.left + w * (1.0 + wf),
                               m_box.top + h * (1.0 + hf)});
            }
        }
    }
    return out;
}

/// Drops candidates that leave the space, have no area, or (when the
/// perturbation is nonzero) reproduce the input exactly.
inline std::vector<GridBox> remove_invalid_perturbed(const std::vector<GridBox>& candidates,
                                                     const GridBox& input, double perturb_frac,
                                                     const GridSpace& space) {
    std::vector<GridBox> kept;
    kept.reserve(candidates.size());
    for (const GridBox& c : candidates) {
        if (!c.valid_in(space)) {
            continue;
        }
        if (perturb_frac > 0.0 && c == input) {
            continue;
        }
        kept.push_back(c);
    }
    return kept;
}

/// One random perturbation of b at strength perturb_frac in [0, 1].
inline GridBox generate_perturb(const GridBox& b, double perturb_frac, const GridSpace& space,
                                Rng& rng) {
    require_valid(b, space, "generate_perturb");
    if (!(perturb_frac >= 0.0 && perturb_frac <= 1.0)) {
        throw InvalidArgument("generate_perturb: perturb_frac must be in [0, 1]");
    }
    const auto kept =
        remove_invalid_perturbed(perturb_candidates(b, perturb_frac, space), b, perturb_frac, space);
    if (kept.empty()) {
        return clamp_to(b, space);
    }
    return kept[uniform_index(rng, kept.size())];
}

/// A refinement trace with decreasing noise that ends on b itself. Length is
/// num_perturb + 1 where num_perturb is drawn uniformly from 0..max_num_perturb.
inline std::vector<GridBox> generate_perturbed_fewshot_examples(const GridBox& b,
                                                                const PerturbConfig& cfg,
                                                                const GridSpace& space, Rng& rng) {
    require_valid(b, space, "generate_perturbed_fewshot_examples");
    if (cfg.max_num_perturb < 1) {
        throw InvalidArgument("max_num_perturb must be >= 1");
    }
    const auto num_perturb =
        static_cast<int>(uniform_index(rng, static_cast<std::size_t>(cfg.max_num_perturb) + 1));
    std::vector<GridBox> trace;
    trace.reserve(static_cast<std::size_t>(num_perturb) + 1);
    for (int j = num_perturb; j >= 1; --j) {
        const double frac = static_cast<double>(j) / cfg.max_num_perturb;
        trace.push_back(generate_perturb(b, frac, space, rng));
    }
    trace.push_back(b);
    return trace;
}

} // namespace groundcrit
