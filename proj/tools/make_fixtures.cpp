// Regenerates the synthetic screenshots under tests/data. Not part of the
// test run; the PNGs are committed and the goldens are computed from them.
//
//   make_fixtures <tests/data>

#include <groundcrit/raster.hpp>

#include <filesystem>
#include <iostream>

using namespace groundcrit;

namespace {

struct Palette {
    Rgba background;
    Rgba header;
    Rgba card;
    Rgba accent;
    Rgba muted;
};

// Blocks are placed on a 36 x 64 layout grid scaled to the target size.
RasterImage phone_screen(int w, int h, int variant) {
    const Palette palettes[] = {
        {{244, 244, 246, 255}, {52, 73, 94, 255}, {255, 255, 255, 255}, {231, 126, 34, 255}, {189, 195, 199, 255}},
        {{250, 250, 250, 255}, {142, 68, 173, 255}, {236, 240, 241, 255}, {39, 174, 96, 255}, {149, 165, 166, 255}},
        {{30, 30, 36, 255}, {20, 20, 24, 255}, {58, 58, 66, 255}, {241, 196, 15, 255}, {90, 90, 100, 255}},
    };
    const Palette& p = palettes[variant % 3];
    RasterImage img(w, h, p.background);
    auto block = [&](int l, int t, int r, int b, Rgba c) {
        fill_rect(img, l * w / 36, t * h / 64, r * w / 36, b * h / 64, c);
    };
    block(0, 0, 36, 6, p.header);
    draw_text(img, 2 * w / 36, 2 * h / 64, "9:41", 1, kWhite);
    switch (variant % 3) {
    case 0: // sign-in form
        block(8, 10, 28, 22, p.muted);
        block(4, 28, 32, 33, p.card);
        block(4, 36, 32, 41, p.card);
        block(4, 46, 32, 51, p.accent);
        block(12, 55, 24, 57, p.muted);
        break;
    case 1: // feed
        for (int i = 0; i < 3; ++i) {
            const int top = 9 + i * 17;
            block(2, top, 34, top + 15, p.card);
            block(4, top + 2, 12, top + 10, p.muted);
            block(14, top + 2, 32, top + 4, p.muted);
            block(14, top + 6, 28, top + 8, p.muted);
            block(26, top + 11, 32, top + 13, p.accent);
        }
        block(0, 60, 36, 64, p.header);
        break;
    default: // settings list
        for (int i = 0; i < 6; ++i) {
            const int top = 9 + i * 8;
            block(0, top, 36, top + 7, p.card);
            block(2, top + 2, 5, top + 5, p.accent);
            block(7, top + 3, 22, top + 4, p.muted);
            block(30, top + 2, 34, top + 5, i % 2 ? p.accent : p.muted);
        }
        break;
    }
    return img;
}

} // namespace

int main(int argc, char** argv) {
    if (argc != 2) {
        std::cerr << "usage: make_fixtures <tests/data>\n";
        return 2;
    }
    const std::filesystem::path dir = argv[1];
    std::filesystem::create_directories(dir / "exemplars");
    write_png(dir / "ui_signin.png", phone_screen(180, 320, 0));
    write_png(dir / "ui_feed.png", phone_screen(270, 480, 1));
    write_png(dir / "exemplars" / "ex_signin.png", phone_screen(135, 240, 0));
    write_png(dir / "exemplars" / "ex_feed.png", phone_screen(135, 240, 1));
    write_png(dir / "exemplars" / "ex_settings.png", phone_screen(135, 240, 2));
    std::cout << "wrote fixtures to " << dir << "\n";
    return 0;
}
