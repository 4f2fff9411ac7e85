#include "densetrf/plot.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "densetrf/png_io.h"

namespace dtrf::plot {

namespace {

struct Rgb {
    uint8_t r, g, b;
};

const Rgb kPalette[] = {{31, 119, 180}, {255, 127, 14}, {44, 160, 44}, {214, 39, 40},
                        {148, 103, 189}, {140, 86, 75},  {227, 119, 194}};

// 5x7 bitmap font rows (top to bottom), 5-bit patterns.
const std::map<char, std::array<uint8_t, 7>>& font() {
    static const std::map<char, std::array<uint8_t, 7>> f = {
        {'0', {0x0e, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0e}}, {'1', {0x04, 0x0c, 0x04, 0x04, 0x04, 0x04, 0x0e}},
        {'2', {0x0e, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1f}}, {'3', {0x1f, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0e}},
        {'4', {0x02, 0x06, 0x0a, 0x12, 0x1f, 0x02, 0x02}}, {'5', {0x1f, 0x10, 0x1e, 0x01, 0x01, 0x11, 0x0e}},
        {'6', {0x06, 0x08, 0x10, 0x1e, 0x11, 0x11, 0x0e}}, {'7', {0x1f, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
        {'8', {0x0e, 0x11, 0x11, 0x0e, 0x11, 0x11, 0x0e}}, {'9', {0x0e, 0x11, 0x11, 0x0f, 0x01, 0x02, 0x0c}},
        {'A', {0x0e, 0x11, 0x11, 0x1f, 0x11, 0x11, 0x11}}, {'B', {0x1e, 0x11, 0x11, 0x1e, 0x11, 0x11, 0x1e}},
        {'C', {0x0e, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0e}}, {'D', {0x1c, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1c}},
        {'E', {0x1f, 0x10, 0x10, 0x1e, 0x10, 0x10, 0x1f}}, {'F', {0x1f, 0x10, 0x10, 0x1e, 0x10, 0x10, 0x10}},
        {'G', {0x0e, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0f}}, {'H', {0x11, 0x11, 0x11, 0x1f, 0x11, 0x11, 0x11}},
        {'I', {0x0e, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0e}}, {'J', {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0c}},
        {'K', {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11}}, {'L', {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1f}},
        {'M', {0x11, 0x1b, 0x15, 0x15, 0x11, 0x11, 0x11}}, {'N', {0x11, 0x19, 0x15, 0x13, 0x11, 0x11, 0x11}},
        {'O', {0x0e, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0e}}, {'P', {0x1e, 0x11, 0x11, 0x1e, 0x10, 0x10, 0x10}},
        {'Q', {0x0e, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0d}}, {'R', {0x1e, 0x11, 0x11, 0x1e, 0x14, 0x12, 0x11}},
        {'S', {0x0f, 0x10, 0x10, 0x0e, 0x01, 0x01, 0x1e}}, {'T', {0x1f, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04}},
        {'U', {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0e}}, {'V', {0x11, 0x11, 0x11, 0x11, 0x11, 0x0a, 0x04}},
        {'W', {0x11, 0x11, 0x11, 0x15, 0x15, 0x1b, 0x11}}, {'X', {0x11, 0x11, 0x0a, 0x04, 0x0a, 0x11, 0x11}},
        {'Y', {0x11, 0x11, 0x0a, 0x04, 0x04, 0x04, 0x04}}, {'Z', {0x1f, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1f}},
        {' ', {0, 0, 0, 0, 0, 0, 0}},                      {'.', {0, 0, 0, 0, 0, 0x0c, 0x0c}},
        {'-', {0, 0, 0, 0x1f, 0, 0, 0}},                   {'_', {0, 0, 0, 0, 0, 0, 0x1f}},
        {'%', {0x19, 0x1a, 0x02, 0x04, 0x08, 0x0b, 0x13}}, {'/', {0x01, 0x02, 0x02, 0x04, 0x08, 0x08, 0x10}},
        {'(', {0x02, 0x04, 0x08, 0x08, 0x08, 0x04, 0x02}}, {')', {0x08, 0x04, 0x02, 0x02, 0x02, 0x04, 0x08}},
        {':', {0, 0x0c, 0x0c, 0, 0x0c, 0x0c, 0}},          {'=', {0, 0, 0x1f, 0, 0x1f, 0, 0}},
        {'+', {0, 0x04, 0x04, 0x1f, 0x04, 0x04, 0}},       {',', {0, 0, 0, 0, 0x0c, 0x04, 0x08}},
        {'e', {0, 0, 0x0e, 0x11, 0x1f, 0x10, 0x0e}},
    };
    return f;
}

class Canvas {
  public:
    Canvas(int w, int h) : w_(w), h_(h), px_(size_t(w) * h * 3, 255) {}

    void set(int x, int y, Rgb c) {
        if (x < 0 || y < 0 || x >= w_ || y >= h_) return;
        size_t i = (size_t(y) * w_ + x) * 3;
        px_[i] = c.r;
        px_[i + 1] = c.g;
        px_[i + 2] = c.b;
    }

    void line(int x0, int y0, int x1, int y1, Rgb c) {
        int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
        int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
        int err = dx + dy;
        while (true) {
            set(x0, y0, c);
            if (x0 == x1 && y0 == y1) break;
            int e2 = 2 * err;
            if (e2 >= dy) {
                err += dy;
                x0 += sx;
            }
            if (e2 <= dx) {
                err += dx;
                y0 += sy;
            }
        }
    }

    void fill_rect(int x0, int y0, int x1, int y1, Rgb c) {
        for (int y = std::min(y0, y1); y <= std::max(y0, y1); ++y)
            for (int x = std::min(x0, x1); x <= std::max(x0, x1); ++x) set(x, y, c);
    }

    void text(int x, int y, const std::string& s, Rgb c) {
        const auto& f = font();
        int cx = x;
        for (char raw : s) {
            char ch = raw;
            if (ch >= 'a' && ch <= 'z' && ch != 'e') ch = char(ch - 'a' + 'A');
            auto it = f.find(ch);
            if (it == f.end()) it = f.find(char(std::toupper(ch)));
            if (it != f.end()) {
                for (int r = 0; r < 7; ++r)
                    for (int b = 0; b < 5; ++b)
                        if (it->second[size_t(r)] & (1 << (4 - b))) set(cx + b, y + r, c);
            }
            cx += 6;
        }
    }

    void save(const std::filesystem::path& path) const {
        png::Image8 img;
        img.width = w_;
        img.height = h_;
        img.channels = 3;
        img.pixels = px_;
        std::filesystem::create_directories(path.parent_path());
        png::write_png(path, img);
    }

    int w_, h_;
    std::vector<uint8_t> px_;
};

std::string fmt_tick(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3g", v);
    return buf;
}

} // namespace

void line_plot(const std::filesystem::path& path, const std::vector<Series>& series, const std::string& title,
               const std::string& xlabel, const std::string& ylabel) {
    const int W = 800, H = 480, L = 70, R = 20, T = 30, B = 50;
    Canvas cv(W, H);
    Rgb black{0, 0, 0}, grey{180, 180, 180};

    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& s : series) {
        for (size_t i = 0; i < s.xs.size(); ++i) {
            xmin = std::min(xmin, s.xs[i]);
            xmax = std::max(xmax, s.xs[i]);
            ymin = std::min(ymin, s.ys[i]);
            ymax = std::max(ymax, s.ys[i]);
        }
    }
    if (xmin > xmax) {
        xmin = 0;
        xmax = 1;
    }
    if (ymin > ymax) {
        ymin = 0;
        ymax = 1;
    }
    if (xmax == xmin) xmax = xmin + 1;
    if (ymax == ymin) ymax = ymin + 1;

    auto px = [&](double x) { return L + int((x - xmin) / (xmax - xmin) * (W - L - R)); };
    auto py = [&](double y) { return H - B - int((y - ymin) / (ymax - ymin) * (H - T - B)); };

    for (int i = 0; i <= 4; ++i) {
        double y = ymin + (ymax - ymin) * i / 4.0;
        cv.line(L, py(y), W - R, py(y), grey);
        cv.text(4, py(y) - 3, fmt_tick(y), black);
        double x = xmin + (xmax - xmin) * i / 4.0;
        cv.text(px(x) - 8, H - B + 8, fmt_tick(x), black);
    }
    cv.line(L, T, L, H - B, black);
    cv.line(L, H - B, W - R, H - B, black);
    cv.text(L, 10, title, black);
    cv.text(W / 2 - int(xlabel.size()) * 3, H - 18, xlabel, black);
    cv.text(4, T - 12, ylabel, black);

    for (size_t si = 0; si < series.size(); ++si) {
        Rgb c = kPalette[si % 7];
        const auto& s = series[si];
        for (size_t i = 1; i < s.xs.size(); ++i) {
            cv.line(px(s.xs[i - 1]), py(s.ys[i - 1]), px(s.xs[i]), py(s.ys[i]), c);
        }
        int lx = W - R - 160, ly = T + 14 * int(si);
        cv.fill_rect(lx, ly + 2, lx + 10, ly + 6, c);
        cv.text(lx + 16, ly, s.label, black);
    }
    cv.save(path);
}

void bar_plot(const std::filesystem::path& path, const std::vector<std::string>& series_names,
              const std::vector<BarGroup>& groups, const std::string& title, const std::string& ylabel) {
    const int W = 800, H = 480, L = 70, R = 20, T = 30, B = 60;
    Canvas cv(W, H);
    Rgb black{0, 0, 0}, grey{180, 180, 180};

    double ymax = 0.0;
    for (const auto& g : groups) {
        for (size_t i = 0; i < g.values.size(); ++i) {
            double e = i < g.errors.size() ? g.errors[i] : 0.0;
            ymax = std::max(ymax, g.values[i] + e);
        }
    }
    if (ymax <= 0) ymax = 1.0;
    ymax *= 1.1;

    auto py = [&](double y) { return H - B - int(y / ymax * (H - T - B)); };
    for (int i = 0; i <= 4; ++i) {
        double y = ymax * i / 4.0;
        cv.line(L, py(y), W - R, py(y), grey);
        cv.text(4, py(y) - 3, fmt_tick(y), black);
    }
    cv.line(L, T, L, H - B, black);
    cv.line(L, H - B, W - R, H - B, black);
    cv.text(L, 10, title, black);
    cv.text(4, T - 12, ylabel, black);

    int ng = int(groups.size());
    int ns = std::max(1, int(series_names.size()));
    int group_w = (W - L - R) / std::max(ng, 1);
    int bar_w = std::max(4, group_w / (ns + 1));
    for (int gi = 0; gi < ng; ++gi) {
        const auto& g = groups[size_t(gi)];
        int gx = L + gi * group_w + group_w / 2 - (ns * bar_w) / 2;
        for (int si = 0; si < int(g.values.size()); ++si) {
            Rgb c = kPalette[size_t(si) % 7];
            int x0 = gx + si * bar_w;
            cv.fill_rect(x0, py(g.values[size_t(si)]), x0 + bar_w - 2, H - B - 1, c);
            if (si < int(g.errors.size()) && g.errors[size_t(si)] > 0) {
                int cx = x0 + bar_w / 2 - 1;
                cv.line(cx, py(g.values[size_t(si)] + g.errors[size_t(si)]),
                        cx, py(std::max(g.values[size_t(si)] - g.errors[size_t(si)], 0.0)), black);
                cv.line(cx - 3, py(g.values[size_t(si)] + g.errors[size_t(si)]), cx + 3,
                        py(g.values[size_t(si)] + g.errors[size_t(si)]), black);
                cv.line(cx - 3, py(std::max(g.values[size_t(si)] - g.errors[size_t(si)], 0.0)), cx + 3,
                        py(std::max(g.values[size_t(si)] - g.errors[size_t(si)], 0.0)), black);
            }
        }
        cv.text(L + gi * group_w + 8, H - B + 10, g.label, black);
    }
    for (size_t si = 0; si < series_names.size(); ++si) {
        Rgb c = kPalette[si % 7];
        int lx = W - R - 160, ly = T + 14 * int(si);
        cv.fill_rect(lx, ly + 2, lx + 10, ly + 6, c);
        cv.text(lx + 16, ly, series_names[si], black);
    }
    cv.save(path);
}

} // namespace dtrf::plot
