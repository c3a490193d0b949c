#pragma once

#include <groundcrit/geometry.hpp>
#include <groundcrit/raster.hpp>

#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace groundcrit {

struct AnnotationStyle {
    Rgba axis_color = kBlack;
    Rgba label_background = kWhite;
    Rgba box_color = kBlue;
    int tick_stroke_px = 1;
    int box_stroke_px = 3;
    int label_px = 14;     // target glyph height; shrunk when ticks are dense
    int ticks_per_unit = 1;
};

inline constexpr int kMinAxesImageSide = 64;
inline constexpr int kPatchTargetLongSide = 512;
inline constexpr double kDefaultContextFrac = 0.25;

inline void validate_style(const AnnotationStyle& s) {
    if (s.tick_stroke_px < 1 || s.box_stroke_px < 1 || s.ticks_per_unit < 1 || s.label_px < 1) {
        throw InvalidArgument("AnnotationStyle: strokes, label size and tick density must be >= 1");
    }
    if (s.axis_color.a != 255 || s.box_color.a != 255) {
        throw InvalidArgument("AnnotationStyle: colors must be opaque");
    }
}

/// Grid values that get a tick on one axis of a full-frame overlay.
inline std::vector<double> axis_tick_values(double units, int ticks_per_unit) {
    std::vector<double> out;
    const int n = static_cast<int>(std::floor(units * ticks_per_unit + 1e-9));
    for (int i = 0; i <= n; ++i) {
        out.push_back(static_cast<double>(i) / ticks_per_unit);
    }
    return out;
}

/// Pixel positions of those ticks: round(value * extent / units).
inline std::vector<int> axis_tick_positions(int extent_px, double units, int ticks_per_unit = 1) {
    std::vector<int> out;
    for (double v : axis_tick_values(units, ticks_per_unit)) {
        out.push_back(round_half_up(v * extent_px / units));
    }
    return out;
}

/// Grid values labelled along one patch axis spanning [lo, hi]: both crop
/// edges plus every tick value strictly inside.
inline std::vector<double> patch_axis_labels(double lo, double hi, int ticks_per_unit = 1) {
    std::vector<double> out{lo};
    const double step = 1.0 / ticks_per_unit;
    for (double v = std::ceil(lo * ticks_per_unit) / ticks_per_unit; v < hi; v += step) {
        if (v > lo + 1e-9 && v < hi - 1e-9) {
            out.push_back(v);
        }
    }
    if (hi > lo) {
        out.push_back(hi);
    }
    return out;
}

namespace detail {

inline std::string label_text(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    std::string s(buf);
    while (s.back() == '0') {
        s.pop_back();
    }
    if (s.back() == '.') {
        s.pop_back();
    }
    return s;
}

inline int label_scale(const AnnotationStyle& style, int spacing_px) {
    int scale = std::max(1, style.label_px / font::kGlyphH);
    while (scale > 1 && font::text_height(scale) + 2 * scale > spacing_px) {
        --scale;
    }
    return scale;
}

struct Tick {
    int pos;
    std::string text;
};

// Draws ticks and labels on all four edges of img. Ticks on the far edges are
// pulled in by one pixel so they stay inside the raster.
inline void draw_edge_axes(RasterImage& img, const std::vector<Tick>& xs,
                           const std::vector<Tick>& ys, const AnnotationStyle& style) {
    const int w = img.width();
    const int h = img.height();
    const int tick_len = std::max(4, std::min(w, h) / 40);
    const int stroke = style.tick_stroke_px;

    auto min_gap = [](const std::vector<Tick>& t, int fallback) {
        int gap = fallback;
        for (std::size_t i = 1; i < t.size(); ++i) {
            gap = std::min(gap, t[i].pos - t[i - 1].pos);
        }
        return std::max(gap, 1);
    };
    const int scale = label_scale(style, std::min(min_gap(xs, w), min_gap(ys, h)));
    const int th = font::text_height(scale);

    for (const Tick& t : xs) {
        const int x = std::clamp(t.pos, 0, w - stroke);
        fill_rect(img, x, 0, x + stroke, tick_len, style.axis_color);
        fill_rect(img, x, h - tick_len, x + stroke, h, style.axis_color);
    }
    for (const Tick& t : ys) {
        const int y = std::clamp(t.pos, 0, h - stroke);
        fill_rect(img, 0, y, tick_len, y + stroke, style.axis_color);
        fill_rect(img, w - tick_len, y, w, y + stroke, style.axis_color);
    }

    const int inset = tick_len + scale + 1;
    for (const Tick& t : xs) {
        const int tw = font::text_width(t.text, scale);
        const int lx = std::clamp(t.pos - tw / 2, scale, std::max(scale, w - tw - scale));
        draw_label(img, lx, inset, t.text, scale, style.axis_color, style.label_background);
        draw_label(img, lx, h - inset - th, t.text, scale, style.axis_color,
                   style.label_background);
    }
    // Side labels stay clear of the top and bottom label rows; the corner
    // ticks keep their exact positions.
    const int y_lo = inset + th + 2 * scale + 1;
    const int y_hi = std::max(y_lo, h - inset - 2 * th - 2 * scale - 1);
    for (const Tick& t : ys) {
        const int tw = font::text_width(t.text, scale);
        const int ly = std::clamp(t.pos - th / 2, y_lo, y_hi);
        draw_label(img, inset, ly, t.text, scale, style.axis_color, style.label_background);
        draw_label(img, w - inset - tw, ly, t.text, scale, style.axis_color,
                   style.label_background);
    }
}

} // namespace detail

/// Copy of img with ticks and numeric labels along all four edges at every
/// grid unit. Dimensions are unchanged.
inline RasterImage draw_coordinate_axes(const RasterImage& img, const GridSpace& space,
                                        const AnnotationStyle& style = {}) {
    validate_style(style);
    if (img.width() < kMinAxesImageSide || img.height() < kMinAxesImageSide) {
        throw InvalidArgument("draw_coordinate_axes: image must be at least 64 px on each side");
    }
    std::vector<detail::Tick> xs;
    for (double v : axis_tick_values(space.width_units, style.ticks_per_unit)) {
        xs.push_back({round_half_up(v * img.width() / space.width_units), detail::label_text(v)});
    }
    std::vector<detail::Tick> ys;
    for (double v : axis_tick_values(space.height_units, style.ticks_per_unit)) {
        ys.push_back({round_half_up(v * img.height() / space.height_units), detail::label_text(v)});
    }
    RasterImage out = img;
    detail::draw_edge_axes(out, xs, ys, style);
    return out;
}

/// Where each piece of a zoom patch landed; lets callers and tests check the
/// composed grid -> pixel -> crop -> upscale map.
struct ZoomPatchLayout {
    GridBox context_box;   // expanded region shown, grid units
    PixelBox crop;         // that region in source pixels
    int scale = 1;         // integer upscale factor
    PixelBox candidate_px; // blue rectangle in patch pixels, exclusive edges
    std::vector<double> x_labels;
    std::vector<double> y_labels;
};

inline ZoomPatchLayout zoom_patch_layout(int image_w, int image_h, const GridBox& candidate,
                                         const GridSpace& space, double context_frac,
                                         const AnnotationStyle& style = {}) {
    require_valid(candidate, space, "render_zoom_patch");
    ZoomPatchLayout layout;
    layout.context_box = expand_with_context(candidate, context_frac, space);
    layout.crop = grid_to_pixel(layout.context_box, image_w, image_h, space);
    const int long_side = std::max(layout.crop.width(), layout.crop.height());
    layout.scale = std::max(1, (kPatchTargetLongSide + long_side - 1) / long_side);
    const PixelBox cand = grid_to_pixel(candidate, image_w, image_h, space);
    layout.candidate_px = {(cand.left - layout.crop.left) * layout.scale,
                           (cand.top - layout.crop.top) * layout.scale,
                           (cand.right - layout.crop.left) * layout.scale,
                           (cand.bottom - layout.crop.top) * layout.scale};
    layout.x_labels = patch_axis_labels(layout.context_box.left, layout.context_box.right,
                                        style.ticks_per_unit);
    layout.y_labels = patch_axis_labels(layout.context_box.top, layout.context_box.bottom,
                                        style.ticks_per_unit);
    return layout;
}

/// Close-up of the candidate region: crop with context, upscale so the long
/// side reaches 512 px, local axes labelled in the original grid units, and
/// the candidate drawn as a blue rectangle on top.
inline RasterImage render_zoom_patch(const RasterImage& img, const GridBox& candidate,
                                     const GridSpace& space, const AnnotationStyle& style = {},
                                     double context_frac = kDefaultContextFrac) {
    validate_style(style);
    const ZoomPatchLayout layout =
        zoom_patch_layout(img.width(), img.height(), candidate, space, context_frac, style);
    RasterImage patch = upscale_nearest(
        crop(img, layout.crop.left, layout.crop.top, layout.crop.right, layout.crop.bottom),
        layout.scale);

    const double sx = img.width() / space.width_units;
    const double sy = img.height() / space.height_units;
    std::vector<detail::Tick> xs;
    for (double v : layout.x_labels) {
        xs.push_back({(round_half_up(v * sx) - layout.crop.left) * layout.scale,
                      detail::label_text(v)});
    }
    std::vector<detail::Tick> ys;
    for (double v : layout.y_labels) {
        ys.push_back({(round_half_up(v * sy) - layout.crop.top) * layout.scale,
                      detail::label_text(v)});
    }
    detail::draw_edge_axes(patch, xs, ys, style);

    const PixelBox& c = layout.candidate_px;
    stroke_rect(patch, c.left, c.top, c.right, c.bottom, style.box_stroke_px, style.box_color);
    return patch;
}

/// Overlays one numbered rectangle per item that carries a box. Items are any
/// type with an optional<GridBox> `box` member; numbering starts at 1 and
/// follows the input order.
template <class Items>
RasterImage draw_result_boxes(const RasterImage& img, const Items& items, const GridSpace& space,
                              const AnnotationStyle& style = {}) {
    validate_style(style);
    RasterImage out = img;
    int number = 0;
    for (const auto& item : items) {
        ++number;
        if (!item.box) {
            continue;
        }
        const PixelBox p = grid_to_pixel(*item.box, img.width(), img.height(), space);
        stroke_rect(out, p.left, p.top, p.right, p.bottom, style.box_stroke_px, style.box_color);
        const int scale = std::max(1, style.label_px / font::kGlyphH);
        const std::string text = std::to_string(number);
        draw_label(out, p.left + style.box_stroke_px + scale, p.top + style.box_stroke_px + scale,
                   text, scale, kWhite, style.box_color);
    }
    return out;
}

} // namespace groundcrit
