#pragma once

#include <groundcrit/error.hpp>

#include <png.h>

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace groundcrit {

struct Rgba {
    std::uint8_t r = 0, g = 0, b = 0, a = 255;
    friend bool operator==(const Rgba&, const Rgba&) = default;
};

inline constexpr Rgba kBlue{0, 0, 255, 255};
inline constexpr Rgba kBlack{0, 0, 0, 255};
inline constexpr Rgba kWhite{255, 255, 255, 255};

/// 8-bit RGBA raster, row-major, no padding.
class RasterImage {
public:
    RasterImage() = default;

    RasterImage(int width, int height, Rgba fill = kWhite) : width_(width), height_(height) {
        if (width <= 0 || height <= 0) {
            throw InvalidArgument("RasterImage: dimensions must be positive");
        }
        pixels_.resize(static_cast<std::size_t>(width) * height * 4);
        for (std::size_t i = 0; i < pixels_.size(); i += 4) {
            pixels_[i] = fill.r;
            pixels_[i + 1] = fill.g;
            pixels_[i + 2] = fill.b;
            pixels_[i + 3] = fill.a;
        }
    }

    RasterImage(int width, int height, std::vector<std::uint8_t> rgba)
        : width_(width), height_(height), pixels_(std::move(rgba)) {
        if (width <= 0 || height <= 0 ||
            pixels_.size() != static_cast<std::size_t>(width) * height * 4) {
            throw InvalidArgument("RasterImage: buffer length must equal width*height*4");
        }
    }

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    bool empty() const noexcept { return pixels_.empty(); }
    std::span<const std::uint8_t> bytes() const noexcept { return pixels_; }

    bool contains(int x, int y) const noexcept {
        return x >= 0 && y >= 0 && x < width_ && y < height_;
    }

    Rgba at(int x, int y) const {
        const std::size_t i = index(x, y);
        return {pixels_[i], pixels_[i + 1], pixels_[i + 2], pixels_[i + 3]};
    }

    void set(int x, int y, Rgba c) {
        if (!contains(x, y)) {
            return;
        }
        const std::size_t i = index(x, y);
        pixels_[i] = c.r;
        pixels_[i + 1] = c.g;
        pixels_[i + 2] = c.b;
        pixels_[i + 3] = c.a;
    }

    friend bool operator==(const RasterImage&, const RasterImage&) = default;

private:
    std::size_t index(int x, int y) const {
        return (static_cast<std::size_t>(y) * width_ + x) * 4;
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<std::uint8_t> pixels_;
};

// ---------------------------------------------------------------------------
// Primitives
// ---------------------------------------------------------------------------

/// Fills [x0, x1) x [y0, y1), clipped to the image.
inline void fill_rect(RasterImage& img, int x0, int y0, int x1, int y1, Rgba c) {
    x0 = std::max(x0, 0);
    y0 = std::max(y0, 0);
    x1 = std::min(x1, img.width());
    y1 = std::min(y1, img.height());
    for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
            img.set(x, y, c);
        }
    }
}

/// Outline of [x0, x1) x [y0, y1) drawn inward with the given stroke.
inline void stroke_rect(RasterImage& img, int x0, int y0, int x1, int y1, int stroke, Rgba c) {
    fill_rect(img, x0, y0, x1, y0 + stroke, c);
    fill_rect(img, x0, y1 - stroke, x1, y1, c);
    fill_rect(img, x0, y0, x0 + stroke, y1, c);
    fill_rect(img, x1 - stroke, y0, x1, y1, c);
}

inline RasterImage crop(const RasterImage& img, int x0, int y0, int x1, int y1) {
    if (x0 < 0 || y0 < 0 || x1 > img.width() || y1 > img.height() || x0 >= x1 || y0 >= y1) {
        throw InvalidArgument("crop: rectangle outside image or empty");
    }
    const int w = x1 - x0;
    const int h = y1 - y0;
    std::vector<std::uint8_t> out(static_cast<std::size_t>(w) * h * 4);
    const auto src = img.bytes();
    for (int y = 0; y < h; ++y) {
        const auto row = src.subspan((static_cast<std::size_t>(y0 + y) * img.width() + x0) * 4,
                                     static_cast<std::size_t>(w) * 4);
        std::copy(row.begin(), row.end(), out.begin() + static_cast<std::ptrdiff_t>(y) * w * 4);
    }
    return RasterImage(w, h, std::move(out));
}

/// Nearest-neighbour integer upscale. Pixel (x, y) maps to block [x*f, (x+1)*f).
inline RasterImage upscale_nearest(const RasterImage& img, int factor) {
    if (factor < 1) {
        throw InvalidArgument("upscale_nearest: factor must be >= 1");
    }
    if (factor == 1) {
        return img;
    }
    const int w = img.width() * factor;
    const int h = img.height() * factor;
    std::vector<std::uint8_t> out(static_cast<std::size_t>(w) * h * 4);
    const auto src = img.bytes();
    for (int y = 0; y < h; ++y) {
        const int sy = y / factor;
        for (int x = 0; x < w; ++x) {
            const std::size_t s = (static_cast<std::size_t>(sy) * img.width() + x / factor) * 4;
            const std::size_t d = (static_cast<std::size_t>(y) * w + x) * 4;
            std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(s), 4,
                        out.begin() + static_cast<std::ptrdiff_t>(d));
        }
    }
    return RasterImage(w, h, std::move(out));
}

// ---------------------------------------------------------------------------
// Embedded 5x7 bitmap font: digits, '.', '-'. Enough for axis labels and
// item numbers, and identical on every platform.
// ---------------------------------------------------------------------------

namespace font {

inline constexpr int kGlyphW = 5;
inline constexpr int kGlyphH = 7;
inline constexpr int kAdvance = 6;

// Rows top to bottom, bit 4 = leftmost column.
inline const std::array<std::uint8_t, 7>* glyph(char c) {
    static constexpr std::array<std::array<std::uint8_t, 7>, 12> kGlyphs{{
        {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}, // 0
        {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E}, // 1
        {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}, // 2
        {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E}, // 3
        {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}, // 4
        {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E}, // 5
        {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}, // 6
        {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}, // 7
        {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}, // 8
        {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}, // 9
        {0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C}, // .
        {0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00}, // -
    }};
    if (c >= '0' && c <= '9') {
        return &kGlyphs[static_cast<std::size_t>(c - '0')];
    }
    if (c == '.') {
        return &kGlyphs[10];
    }
    if (c == '-') {
        return &kGlyphs[11];
    }
    return nullptr;
}

inline int text_width(std::string_view s, int scale) {
    if (s.empty()) {
        return 0;
    }
    return (static_cast<int>(s.size()) * kAdvance - 1) * scale;
}

inline int text_height(int scale) { return kGlyphH * scale; }

} // namespace font

/// Draws s with its top-left at (x, y). Unsupported characters advance blank.
inline void draw_text(RasterImage& img, int x, int y, std::string_view s, int scale, Rgba c) {
    for (char ch : s) {
        if (const auto* g = font::glyph(ch)) {
            for (int row = 0; row < font::kGlyphH; ++row) {
                for (int col = 0; col < font::kGlyphW; ++col) {
                    if (((*g)[row] >> (font::kGlyphW - 1 - col)) & 1) {
                        fill_rect(img, x + col * scale, y + row * scale, x + (col + 1) * scale,
                                  y + (row + 1) * scale, c);
                    }
                }
            }
        }
        x += font::kAdvance * scale;
    }
}

/// Text on an opaque backing plate so labels stay legible on busy screenshots.
inline void draw_label(RasterImage& img, int x, int y, std::string_view s, int scale, Rgba fg,
                       Rgba bg) {
    const int pad = scale;
    fill_rect(img, x - pad, y - pad, x + font::text_width(s, scale) + pad,
              y + font::text_height(scale) + pad, bg);
    draw_text(img, x, y, s, scale, fg);
}

// ---------------------------------------------------------------------------
// PNG and checksums
// ---------------------------------------------------------------------------

inline std::vector<std::uint8_t> encode_png(const RasterImage& img) {
    png_image desc{};
    desc.version = PNG_IMAGE_VERSION;
    desc.width = static_cast<png_uint_32>(img.width());
    desc.height = static_cast<png_uint_32>(img.height());
    desc.format = PNG_FORMAT_RGBA;
    png_alloc_size_t size = 0;
    if (!png_image_write_get_memory_size(desc, size, 0, img.bytes().data(), 0, nullptr)) {
        throw Error(std::string("encode_png: ") + desc.message);
    }
    std::vector<std::uint8_t> out(size);
    if (!png_image_write_to_memory(&desc, out.data(), &size, 0, img.bytes().data(), 0, nullptr)) {
        throw Error(std::string("encode_png: ") + desc.message);
    }
    out.resize(size);
    return out;
}

inline RasterImage decode_png(std::span<const std::uint8_t> data) {
    png_image desc{};
    desc.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&desc, data.data(), data.size())) {
        throw Error(std::string("decode_png: ") + desc.message);
    }
    desc.format = PNG_FORMAT_RGBA;
    std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(desc));
    if (!png_image_finish_read(&desc, nullptr, buf.data(), 0, nullptr)) {
        png_image_free(&desc);
        throw Error(std::string("decode_png: ") + desc.message);
    }
    return RasterImage(static_cast<int>(desc.width), static_cast<int>(desc.height), std::move(buf));
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot open " + path.string());
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> data) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error("cannot write " + path.string());
    }
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
}

inline RasterImage read_png(const std::filesystem::path& path) {
    return decode_png(read_file_bytes(path));
}

inline void write_png(const std::filesystem::path& path, const RasterImage& img) {
    write_file_bytes(path, encode_png(img));
}

/// FNV-1a 64 over the raw bytes.
inline std::uint64_t fnv1a64(std::span<const std::uint8_t> data,
                             std::uint64_t h = 0xCBF29CE484222325ULL) {
    for (std::uint8_t byte : data) {
        h ^= byte;
        h *= 0x100000001B3ULL;
    }
    return h;
}

/// Checksum of dimensions and pixel buffer, rendered as 16 hex digits.
inline std::string raster_checksum(const RasterImage& img) {
    std::uint8_t dims[8];
    for (int i = 0; i < 4; ++i) {
        dims[i] = static_cast<std::uint8_t>(img.width() >> (8 * i));
        dims[4 + i] = static_cast<std::uint8_t>(img.height() >> (8 * i));
    }
    const std::uint64_t h = fnv1a64(img.bytes(), fnv1a64(dims));
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

} // namespace groundcrit
