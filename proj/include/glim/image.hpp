#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "glim/array.hpp"

namespace glim {

using Rgb = std::array<uint8_t, 3>;

struct Image {
    int width = 0, height = 0;
    std::vector<uint8_t> rgb;  // 3 bytes per pixel, row-major

    Image() = default;
    Image(int w, int h, Rgb fill = {0, 0, 0});

    uint8_t* px(int x, int y) { return rgb.data() + 3 * (static_cast<size_t>(y) * width + x); }
    const uint8_t* px(int x, int y) const {
        return rgb.data() + 3 * (static_cast<size_t>(y) * width + x);
    }
    void set(int x, int y, Rgb c) {
        if (x < 0 || y < 0 || x >= width || y >= height) return;
        uint8_t* p = px(x, y);
        p[0] = c[0]; p[1] = c[1]; p[2] = c[2];
    }
};

// 8-bit RGB PNG, written atomically (temp file + rename).
void write_png(const std::string& path, const Image& img);

void fill_rect(Image& img, int x, int y, int w, int h, Rgb c);
void draw_rect_outline(Image& img, int x, int y, int w, int h, Rgb c, int thickness = 1);
void draw_line(Image& img, int x0, int y0, int x1, int y1, Rgb c);
// Digits, '.', '-', '+', 'e', ':' in a 4x6 pixel font; other characters
// advance the cursor without marking.
void draw_text(Image& img, int x, int y, const std::string& text, Rgb c, int scl = 1);

Image hstack(const std::vector<Image>& imgs, int gap = 2, Rgb bg = {255, 255, 255});

// Values in [0,1] mapped through a black-red-yellow-white heat ramp,
// one cell per grid entry.
Image render_heatmap(const Array& grid, int cellpx);

struct ChartSeries {
    std::string label;
    Rgb color{0, 0, 0};
    std::vector<double> xs, ys;
};

// Minimal line chart: axes with numeric tick labels, one polyline per
// series. Series names go to an adjacent .legend.txt (color order matches).
Image line_chart(const std::vector<ChartSeries>& series, int width = 640, int height = 420);
void write_chart(const std::string& png_path, const std::vector<ChartSeries>& series,
                 int width = 640, int height = 420);

}  // namespace glim
