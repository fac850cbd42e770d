#include "glim/image.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "glim/common.hpp"

namespace glim {

Image::Image(int w, int h, Rgb fill) : width(w), height(h) {
    rgb.resize(3 * static_cast<size_t>(w) * h);
    for (size_t i = 0; i < rgb.size(); i += 3) {
        rgb[i] = fill[0];
        rgb[i + 1] = fill[1];
        rgb[i + 2] = fill[2];
    }
}

namespace {

void put_u32(std::vector<uint8_t>& v, uint32_t x) {
    v.push_back(static_cast<uint8_t>(x >> 24));
    v.push_back(static_cast<uint8_t>(x >> 16));
    v.push_back(static_cast<uint8_t>(x >> 8));
    v.push_back(static_cast<uint8_t>(x));
}

void put_chunk(std::vector<uint8_t>& out, const char type[4],
               const std::vector<uint8_t>& data) {
    put_u32(out, static_cast<uint32_t>(data.size()));
    std::vector<uint8_t> td;
    td.insert(td.end(), type, type + 4);
    td.insert(td.end(), data.begin(), data.end());
    out.insert(out.end(), td.begin(), td.end());
    put_u32(out, static_cast<uint32_t>(crc32(0, td.data(), static_cast<uInt>(td.size()))));
}

}  // namespace

void write_png(const std::string& path, const Image& img) {
    if (img.width <= 0 || img.height <= 0) throw IoError("write_png: empty image");
    std::vector<uint8_t> raw;
    raw.reserve(static_cast<size_t>(img.height) * (1 + 3 * static_cast<size_t>(img.width)));
    for (int y = 0; y < img.height; ++y) {
        raw.push_back(0);  // filter: none
        const uint8_t* row = img.rgb.data() + 3 * static_cast<size_t>(y) * img.width;
        raw.insert(raw.end(), row, row + 3 * static_cast<size_t>(img.width));
    }
    uLongf zlen = compressBound(static_cast<uLong>(raw.size()));
    std::vector<uint8_t> zdata(zlen);
    if (compress2(zdata.data(), &zlen, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
        throw IoError("write_png: deflate failed");
    zdata.resize(zlen);

    std::vector<uint8_t> out = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
    std::vector<uint8_t> ihdr;
    put_u32(ihdr, static_cast<uint32_t>(img.width));
    put_u32(ihdr, static_cast<uint32_t>(img.height));
    ihdr.push_back(8);   // bit depth
    ihdr.push_back(2);   // color type: truecolor
    ihdr.push_back(0);   // compression
    ihdr.push_back(0);   // filter
    ihdr.push_back(0);   // interlace
    put_chunk(out, "IHDR", ihdr);
    put_chunk(out, "IDAT", zdata);
    put_chunk(out, "IEND", {});

    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary);
        if (!f) throw IoError("cannot open " + tmp + " for writing");
        f.write(reinterpret_cast<const char*>(out.data()),
                static_cast<std::streamsize>(out.size()));
        if (!f) throw IoError("write failed: " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

void fill_rect(Image& img, int x, int y, int w, int h, Rgb c) {
    for (int j = y; j < y + h; ++j)
        for (int i = x; i < x + w; ++i) img.set(i, j, c);
}

void draw_rect_outline(Image& img, int x, int y, int w, int h, Rgb c, int thickness) {
    for (int t = 0; t < thickness; ++t) {
        for (int i = x; i < x + w; ++i) {
            img.set(i, y + t, c);
            img.set(i, y + h - 1 - t, c);
        }
        for (int j = y; j < y + h; ++j) {
            img.set(x + t, j, c);
            img.set(x + w - 1 - t, j, c);
        }
    }
}

void draw_line(Image& img, int x0, int y0, int x1, int y1, Rgb c) {
    // Bresenham
    int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
    int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
        img.set(x0, y0, c);
        if (x0 == x1 && y0 == y1) break;
        const int e2 = 2 * err;
        if (e2 >= dy) { err += dy; x0 += sx; }
        if (e2 <= dx) { err += dx; y0 += sy; }
    }
}

namespace {

// 4x6 glyphs, one row per byte (low 4 bits used).
struct Glyph {
    char ch;
    uint8_t rows[6];
};

constexpr Glyph kGlyphs[] = {
    {'0', {0b0110, 0b1001, 0b1011, 0b1101, 0b1001, 0b0110}},
    {'1', {0b0010, 0b0110, 0b0010, 0b0010, 0b0010, 0b0111}},
    {'2', {0b0110, 0b1001, 0b0001, 0b0110, 0b1000, 0b1111}},
    {'3', {0b1110, 0b0001, 0b0110, 0b0001, 0b0001, 0b1110}},
    {'4', {0b1001, 0b1001, 0b1111, 0b0001, 0b0001, 0b0001}},
    {'5', {0b1111, 0b1000, 0b1110, 0b0001, 0b0001, 0b1110}},
    {'6', {0b0110, 0b1000, 0b1110, 0b1001, 0b1001, 0b0110}},
    {'7', {0b1111, 0b0001, 0b0010, 0b0010, 0b0100, 0b0100}},
    {'8', {0b0110, 0b1001, 0b0110, 0b1001, 0b1001, 0b0110}},
    {'9', {0b0110, 0b1001, 0b1001, 0b0111, 0b0001, 0b0110}},
    {'.', {0b0000, 0b0000, 0b0000, 0b0000, 0b0000, 0b0100}},
    {'-', {0b0000, 0b0000, 0b1111, 0b0000, 0b0000, 0b0000}},
    {'+', {0b0000, 0b0010, 0b0111, 0b0010, 0b0000, 0b0000}},
    {'e', {0b0000, 0b0110, 0b1001, 0b1111, 0b1000, 0b0111}},
    {':', {0b0000, 0b0100, 0b0000, 0b0000, 0b0100, 0b0000}},
};

const Glyph* find_glyph(char c) {
    for (const auto& g : kGlyphs)
        if (g.ch == c) return &g;
    return nullptr;
}

}  // namespace

void draw_text(Image& img, int x, int y, const std::string& text, Rgb c, int scl) {
    int cx = x;
    for (char ch : text) {
        if (const Glyph* g = find_glyph(ch)) {
            for (int r = 0; r < 6; ++r)
                for (int b = 0; b < 4; ++b)
                    if (g->rows[r] & (1 << (3 - b)))
                        fill_rect(img, cx + b * scl, y + r * scl, scl, scl, c);
        }
        cx += 5 * scl;
    }
}

Image hstack(const std::vector<Image>& imgs, int gap, Rgb bg) {
    int w = 0, h = 0;
    for (const auto& im : imgs) {
        w += im.width;
        h = std::max(h, im.height);
    }
    w += gap * (static_cast<int>(imgs.size()) - 1);
    Image out(w, h, bg);
    int x = 0;
    for (const auto& im : imgs) {
        for (int y = 0; y < im.height; ++y)
            std::memcpy(out.px(x, y), im.px(0, y), 3 * static_cast<size_t>(im.width));
        x += im.width + gap;
    }
    return out;
}

namespace {
Rgb heat_color(double v) {
    v = std::clamp(v, 0.0, 1.0);
    // black -> red -> yellow -> white
    double r = std::clamp(v * 3.0, 0.0, 1.0);
    double g = std::clamp(v * 3.0 - 1.0, 0.0, 1.0);
    double b = std::clamp(v * 3.0 - 2.0, 0.0, 1.0);
    return {static_cast<uint8_t>(r * 255), static_cast<uint8_t>(g * 255),
            static_cast<uint8_t>(b * 255)};
}
}  // namespace

Image render_heatmap(const Array& grid, int cellpx) {
    if (grid.ndim() != 2) throw ContractError("render_heatmap expects [H,W]");
    const int h = grid.dim(0), w = grid.dim(1);
    Image img(w * cellpx, h * cellpx);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            fill_rect(img, x * cellpx, y * cellpx, cellpx, cellpx,
                      heat_color(grid.at(y * w + x)));
    return img;
}

namespace {
std::string format_tick(double v) {
    char buf[32];
    if (v == 0) return "0";
    if (std::abs(v) >= 0.01 && std::abs(v) < 10000)
        std::snprintf(buf, sizeof(buf), "%.3g", v);
    else
        std::snprintf(buf, sizeof(buf), "%.2e", v);
    return buf;
}
}  // namespace

Image line_chart(const std::vector<ChartSeries>& series, int width, int height) {
    Image img(width, height, {255, 255, 255});
    const int ml = 56, mr = 12, mt = 12, mb = 28;
    const int px0 = ml, px1 = width - mr, py0 = mt, py1 = height - mb;

    double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
    bool first = true;
    for (const auto& s : series)
        for (size_t i = 0; i < s.xs.size(); ++i) {
            if (!std::isfinite(s.xs[i]) || !std::isfinite(s.ys[i])) continue;
            if (first) {
                xmin = xmax = s.xs[i];
                ymin = ymax = s.ys[i];
                first = false;
            }
            xmin = std::min(xmin, s.xs[i]);
            xmax = std::max(xmax, s.xs[i]);
            ymin = std::min(ymin, s.ys[i]);
            ymax = std::max(ymax, s.ys[i]);
        }
    if (xmax == xmin) xmax = xmin + 1;
    if (ymax == ymin) ymax = ymin + 1;

    auto sx = [&](double x) {
        return px0 + static_cast<int>((x - xmin) / (xmax - xmin) * (px1 - px0));
    };
    auto sy = [&](double y) {
        return py1 - static_cast<int>((y - ymin) / (ymax - ymin) * (py1 - py0));
    };

    const Rgb axis{60, 60, 60}, grid{225, 225, 225};
    for (int i = 0; i <= 4; ++i) {
        const double gy = ymin + (ymax - ymin) * i / 4.0;
        draw_line(img, px0, sy(gy), px1, sy(gy), grid);
        draw_text(img, 4, sy(gy) - 3, format_tick(gy), axis);
    }
    for (int i = 0; i <= 4; ++i) {
        const double gx = xmin + (xmax - xmin) * i / 4.0;
        draw_line(img, sx(gx), py0, sx(gx), py1, grid);
        draw_text(img, sx(gx) - 8, py1 + 6, format_tick(gx), axis);
    }
    draw_line(img, px0, py0, px0, py1, axis);
    draw_line(img, px0, py1, px1, py1, axis);

    int legend_y = py0 + 4;
    for (const auto& s : series) {
        for (size_t i = 1; i < s.xs.size(); ++i) {
            if (!std::isfinite(s.ys[i - 1]) || !std::isfinite(s.ys[i])) continue;
            draw_line(img, sx(s.xs[i - 1]), sy(s.ys[i - 1]), sx(s.xs[i]), sy(s.ys[i]),
                      s.color);
        }
        fill_rect(img, px1 - 22, legend_y, 16, 6, s.color);
        legend_y += 10;
    }
    return img;
}

void write_chart(const std::string& png_path, const std::vector<ChartSeries>& series,
                 int width, int height) {
    write_png(png_path, line_chart(series, width, height));
    // color order is top-to-bottom in the legend swatches
    const std::string legend = png_path + ".legend.txt";
    const std::string tmp = legend + ".tmp";
    {
        std::ofstream f(tmp);
        for (const auto& s : series)
            f << static_cast<int>(s.color[0]) << "," << static_cast<int>(s.color[1]) << ","
              << static_cast<int>(s.color[2]) << " " << s.label << "\n";
    }
    std::filesystem::rename(tmp, legend);
}

}  // namespace glim
