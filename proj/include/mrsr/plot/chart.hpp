#pragma once

// Static line charts for loss and metric CSVs, rendered into an RGB buffer
// and written as PNG. Text uses a built-in 3x5 pixel font scaled up.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mrsr/core/error.hpp"
#include "mrsr/io/png.hpp"

namespace mrsr::plot {

struct Series {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
};

struct ChartOptions {
    std::size_t width = 640;
    std::size_t height = 400;
    std::string title;
    std::string x_label = "epoch";
};

struct Canvas {
    std::size_t width = 0, height = 0;
    std::vector<std::uint8_t> rgb;

    Canvas(std::size_t w, std::size_t h) : width(w), height(h), rgb(w * h * 3, 255) {}

    void set(long x, long y, const std::array<std::uint8_t, 3>& c) {
        if (x < 0 || y < 0 || x >= static_cast<long>(width) || y >= static_cast<long>(height)) return;
        const std::size_t i = (static_cast<std::size_t>(y) * width + static_cast<std::size_t>(x)) * 3;
        rgb[i] = c[0];
        rgb[i + 1] = c[1];
        rgb[i + 2] = c[2];
    }

    void line(double x0, double y0, double x1, double y1, const std::array<std::uint8_t, 3>& c, int thick = 1) {
        const double len = std::max(std::fabs(x1 - x0), std::fabs(y1 - y0));
        const int steps = std::max(1, static_cast<int>(std::ceil(len)));
        for (int s = 0; s <= steps; ++s) {
            const double t = static_cast<double>(s) / steps;
            const long px = std::lround(x0 + t * (x1 - x0)), py = std::lround(y0 + t * (y1 - y0));
            for (int dy = 0; dy < thick; ++dy)
                for (int dx = 0; dx < thick; ++dx) set(px + dx - thick / 2, py + dy - thick / 2, c);
        }
    }
};

namespace detail {

// Rows top to bottom, 3 columns each ('#' = ink).
inline const char* glyph(char ch) {
    switch (std::toupper(static_cast<unsigned char>(ch))) {
        case '0': return "####.##.##.####";
        case '1': return ".#.##..#..#.###";
        case '2': return "###..#####..###";
        case '3': return "###..####..####";
        case '4': return "#.##.####..#..#";
        case '5': return "####..###..####";
        case '6': return "####..####.####";
        case '7': return "###..#..#.#..#.";
        case '8': return "####.#####.####";
        case '9': return "####.####..####";
        case 'A': return ".#.#.#####.##.#";
        case 'B': return "##.#.###.#.###.";
        case 'C': return ".###..#..#...##";
        case 'D': return "##.#.##.##.###.";
        case 'E': return "####..####..###";
        case 'F': return "####..####..#..";
        case 'G': return ".###..#.##.#.##";
        case 'H': return "#.##.#####.##.#";
        case 'I': return "###.#..#..#.###";
        case 'J': return "..#..#..##.#.#.";
        case 'K': return "#.##.###.#.##.#";
        case 'L': return "#..#..#..#..###";
        case 'M': return "#.########.##.#";
        case 'N': return "##.#.##.##.##.#";
        case 'O': return ".#.#.##.##.#.#.";
        case 'P': return "##.#.###.#..#..";
        case 'Q': return ".#.#.##.###..##";
        case 'R': return "##.#.###.#.##.#";
        case 'S': return ".###...#...###.";
        case 'T': return "###.#..#..#..#.";
        case 'U': return "#.##.##.##.####";
        case 'V': return "#.##.##.##.#.#.";
        case 'W': return "#.##.########.#";
        case 'X': return "#.##.#.#.#.##.#";
        case 'Y': return "#.##.#.#..#..#.";
        case 'Z': return "###..#.#.#..###";
        case '.': return ".............#.";
        case ',': return "..........#.#..";
        case '-': return "......###......";
        case '+': return "....#.###.#....";
        case '_': return "............###";
        case ':': return "....#.....#....";
        case '(': return "..#.#..#..#...#";
        case ')': return "#...#..#..#.#..";
        case '/': return "..#..#.#.#..#..";
        case '=': return "...###...###...";
        default: return "...............";
    }
}

}  // namespace detail

/// Draws `text` with its top-left corner at (x, y); each font pixel is `px` wide.
inline void draw_text(Canvas& c, long x, long y, const std::string& text, const std::array<std::uint8_t, 3>& color,
                      int px = 2) {
    for (char ch : text) {
        const char* g = detail::glyph(ch);
        const std::size_t n = std::char_traits<char>::length(g);
        for (std::size_t i = 0; i < n && i < 15; ++i) {
            if (g[i] != '#') continue;
            const long gx = static_cast<long>(i % 3), gy = static_cast<long>(i / 3);
            for (int dy = 0; dy < px; ++dy)
                for (int dx = 0; dx < px; ++dx) c.set(x + gx * px + dx, y + gy * px + dy, color);
        }
        x += 4 * px;
    }
}

inline long text_width(const std::string& text, int px = 2) { return static_cast<long>(text.size()) * 4 * px; }

inline std::string tick_label(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

inline std::array<std::uint8_t, 3> series_color(std::size_t i) {
    static const std::array<std::array<std::uint8_t, 3>, 8> palette = {{{31, 119, 180},
                                                                        {255, 127, 14},
                                                                        {44, 160, 44},
                                                                        {214, 39, 40},
                                                                        {148, 103, 189},
                                                                        {140, 86, 75},
                                                                        {227, 119, 194},
                                                                        {127, 127, 127}}};
    return palette[i % palette.size()];
}

/// Renders finite points of every series as connected lines; non-finite
/// values break the line.
inline Canvas render_chart(const std::vector<Series>& series, const ChartOptions& opt = {}) {
    if (opt.width < 160 || opt.height < 120) throw ConfigError("chart must be at least 160x120 pixels");
    double x_lo = INFINITY, x_hi = -INFINITY, y_lo = INFINITY, y_hi = -INFINITY;
    for (const Series& s : series) {
        if (s.x.size() != s.y.size()) throw DimensionError("series '" + s.name + "' has mismatched x/y lengths");
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
            x_lo = std::min(x_lo, s.x[i]);
            x_hi = std::max(x_hi, s.x[i]);
            y_lo = std::min(y_lo, s.y[i]);
            y_hi = std::max(y_hi, s.y[i]);
        }
    }
    if (!std::isfinite(x_lo)) throw DataError("chart: no finite data points");
    if (x_hi == x_lo) x_hi = x_lo + 1.0;
    if (y_hi == y_lo) {
        y_hi += 0.5;
        y_lo -= 0.5;
    }
    const double pad = 0.05 * (y_hi - y_lo);
    y_lo -= pad;
    y_hi += pad;

    Canvas c(opt.width, opt.height);
    const std::array<std::uint8_t, 3> ink{0, 0, 0}, grid{225, 225, 225};
    const long left = 80, right = static_cast<long>(opt.width) - 20, top = 36,
               bottom = static_cast<long>(opt.height) - 40;
    auto sx = [&](double x) { return left + (x - x_lo) / (x_hi - x_lo) * static_cast<double>(right - left); };
    auto sy = [&](double y) { return bottom - (y - y_lo) / (y_hi - y_lo) * static_cast<double>(bottom - top); };

    for (int k = 0; k <= 4; ++k) {
        const double yv = y_lo + (y_hi - y_lo) * k / 4.0;
        const double py = sy(yv);
        c.line(left, py, right, py, grid);
        const std::string lab = tick_label(yv);
        draw_text(c, left - 6 - text_width(lab), std::lround(py) - 5, lab, ink);
    }
    c.line(left, top, left, bottom, ink);
    c.line(left, bottom, right, bottom, ink);
    for (int k = 0; k <= 4; ++k) {
        const double xv = x_lo + (x_hi - x_lo) * k / 4.0;
        const double px = sx(xv);
        c.line(px, bottom, px, bottom + 4, ink);
        const std::string lab = tick_label(xv);
        draw_text(c, std::lround(px) - text_width(lab) / 2, bottom + 8, lab, ink);
    }
    draw_text(c, (left + right) / 2 - text_width(opt.x_label) / 2, bottom + 24, opt.x_label, ink);
    if (!opt.title.empty()) draw_text(c, left, 10, opt.title, ink, 3);

    for (std::size_t si = 0; si < series.size(); ++si) {
        const Series& s = series[si];
        const auto col = series_color(si);
        bool have_prev = false;
        double px = 0, py = 0;
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) {
                have_prev = false;
                continue;
            }
            const double qx = sx(s.x[i]), qy = sy(s.y[i]);
            if (have_prev) c.line(px, py, qx, qy, col, 2);
            else c.line(qx, qy, qx, qy, col, 3);
            px = qx;
            py = qy;
            have_prev = true;
        }
        // Legend, top right.
        const long ly = top + 4 + static_cast<long>(si) * 14;
        const long lx = right - 12 - text_width(s.name) - 24;
        c.line(lx, ly + 5, lx + 18, ly + 5, col, 3);
        draw_text(c, lx + 24, ly, s.name, ink);
    }
    return c;
}

/// Header plus rows of a comma-separated table.
struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

inline Table read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw MissingPathError("CSV not found: " + path);
    auto split = [](const std::string& line) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        return cells;
    };
    Table t;
    std::string line;
    if (!std::getline(in, line)) throw DataError("CSV is empty: " + path);
    t.header = split(line);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto cells = split(line);
        if (cells.size() != t.header.size()) throw DataError(path + ": row has " + std::to_string(cells.size()) +
                                                             " cells, header has " + std::to_string(t.header.size()));
        t.rows.push_back(std::move(cells));
    }
    return t;
}

inline bool parse_number(const std::string& s, double& out) {
    if (s == "nan") { out = NAN; return true; }
    if (s == "inf") { out = INFINITY; return true; }
    if (s == "-inf") { out = -INFINITY; return true; }
    char* end = nullptr;
    out = std::strtod(s.c_str(), &end);
    return !s.empty() && end == s.c_str() + s.size();
}

inline bool numeric_column(const Table& t, std::size_t col) {
    for (const auto& r : t.rows) {
        double v;
        if (!parse_number(r[col], v)) return false;
    }
    return !t.rows.empty();
}

/// Name of the x axis table_series uses: the first column, or "row".
inline std::string x_axis_label(const Table& t) {
    return !t.header.empty() && numeric_column(t, 0) ? t.header[0] : "row";
}

/// Series from a CSV: x is the first column when it is numeric (e.g. epoch),
/// otherwise the row index; every other numeric column becomes a series.
/// `columns`, when non-empty, restricts the plotted columns.
inline std::vector<Series> table_series(const Table& t, const std::vector<std::string>& columns = {}) {
    const bool x_col = numeric_column(t, 0);
    std::vector<Series> out;
    for (std::size_t col = x_col ? 1 : 0; col < t.header.size(); ++col) {
        const std::string& name = t.header[col];
        if (!columns.empty() && std::find(columns.begin(), columns.end(), name) == columns.end()) continue;
        if (!numeric_column(t, col)) continue;
        Series s{name, {}, {}};
        for (std::size_t i = 0; i < t.rows.size(); ++i) {
            double x = static_cast<double>(i), y = 0;
            if (x_col) parse_number(t.rows[i][0], x);
            parse_number(t.rows[i][col], y);
            s.x.push_back(x);
            s.y.push_back(y);
        }
        out.push_back(std::move(s));
    }
    for (const auto& want : columns) {
        if (std::none_of(out.begin(), out.end(), [&](const Series& s) { return s.name == want; })) {
            throw DataError("column '" + want + "' is missing or not numeric");
        }
    }
    if (out.empty()) throw DataError("CSV has no numeric columns to plot");
    return out;
}

inline void write_chart(const std::string& path, const Canvas& c) { io::write_png_rgb(path, c.height, c.width, c.rgb); }

}  // namespace mrsr::plot
