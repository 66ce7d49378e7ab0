#include "anchorlab/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <sstream>

namespace anchorlab::svg {

namespace {

// Compact viridis-like ramp over [0, 1].
void color_at(double v, int* r, int* g, int* b) {
    v = std::clamp(v, 0.0, 1.0);
    struct Stop {
        double t;
        int r, g, b;
    };
    static const Stop stops[] = {
        {0.0, 68, 1, 84}, {0.25, 59, 82, 139}, {0.5, 33, 145, 140},
        {0.75, 94, 201, 98}, {1.0, 253, 231, 37},
    };
    for (size_t i = 1; i < std::size(stops); ++i) {
        if (v <= stops[i].t) {
            const double f = (v - stops[i - 1].t) / (stops[i].t - stops[i - 1].t);
            *r = static_cast<int>(std::lround(stops[i - 1].r + f * (stops[i].r - stops[i - 1].r)));
            *g = static_cast<int>(std::lround(stops[i - 1].g + f * (stops[i].g - stops[i - 1].g)));
            *b = static_cast<int>(std::lround(stops[i - 1].b + f * (stops[i].b - stops[i - 1].b)));
            return;
        }
    }
    *r = 253;
    *g = 231;
    *b = 37;
}

std::string format(const char* fmt, ...) {
    char buf[512];
    va_list args;
    va_start(args, fmt);
    vsnprintf(buf, sizeof(buf), fmt, args);
    va_end(args);
    return buf;
}

}  // namespace

std::string heatmap(const std::vector<double>& values, int rows, int cols,
                    const std::string& title) {
    const int cell = 24;
    const int margin = title.empty() ? 4 : 28;
    const int width = cols * cell + 8;
    const int height = rows * cell + margin + 4;
    std::ostringstream os;
    os << format(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%d\" height=\"%d\" "
        "viewBox=\"0 0 %d %d\">\n",
        width, height, width, height);
    if (!title.empty()) {
        os << format(
            "<text x=\"4\" y=\"16\" font-family=\"monospace\" font-size=\"12\">%s</text>\n",
            title.c_str());
    }
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) {
            int r, g, b;
            color_at(values[static_cast<size_t>(i) * cols + j], &r, &g, &b);
            os << format(
                "<rect x=\"%d\" y=\"%d\" width=\"%d\" height=\"%d\" fill=\"rgb(%d,%d,%d)\"/>\n",
                4 + j * cell, margin + i * cell, cell, cell, r, g, b);
        }
    }
    os << "</svg>\n";
    return os.str();
}

std::string line_chart(const std::vector<Series>& series, const std::string& title,
                       const std::string& x_label, const std::string& y_label) {
    const int width = 640, height = 420;
    const int ml = 56, mr = 140, mt = 32, mb = 44;
    double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
    bool first = true;
    for (const Series& s : series) {
        for (const auto& [x, y] : s.points) {
            if (!std::isfinite(y)) {
                continue;
            }
            if (first) {
                xmin = xmax = x;
                ymin = ymax = y;
                first = false;
            } else {
                xmin = std::min(xmin, x);
                xmax = std::max(xmax, x);
                ymin = std::min(ymin, y);
                ymax = std::max(ymax, y);
            }
        }
    }
    if (xmax == xmin) {
        xmax = xmin + 1;
    }
    if (ymax == ymin) {
        ymax = ymin + 1;
    }
    auto px = [&](double x) {
        return ml + (x - xmin) / (xmax - xmin) * (width - ml - mr);
    };
    auto py = [&](double y) {
        return height - mb - (y - ymin) / (ymax - ymin) * (height - mt - mb);
    };
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                   "#9467bd", "#8c564b", "#17becf", "#7f7f7f"};
    std::ostringstream os;
    os << format(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%d\" height=\"%d\" "
        "viewBox=\"0 0 %d %d\" font-family=\"monospace\" font-size=\"12\">\n",
        width, height, width, height);
    os << format("<text x=\"%d\" y=\"20\" font-size=\"14\">%s</text>\n", ml, title.c_str());
    os << format(
        "<rect x=\"%d\" y=\"%d\" width=\"%d\" height=\"%d\" fill=\"none\" stroke=\"#333\"/>\n",
        ml, mt, width - ml - mr, height - mt - mb);
    // Axis ticks: min/mid/max.
    for (int t = 0; t <= 2; ++t) {
        const double xv = xmin + (xmax - xmin) * t / 2.0;
        const double yv = ymin + (ymax - ymin) * t / 2.0;
        os << format("<text x=\"%.0f\" y=\"%d\" text-anchor=\"middle\">%.4g</text>\n", px(xv),
                     height - mb + 16, xv);
        os << format("<text x=\"%d\" y=\"%.0f\" text-anchor=\"end\">%.4g</text>\n", ml - 6,
                     py(yv) + 4, yv);
    }
    os << format("<text x=\"%d\" y=\"%d\">%s</text>\n", (width - mr + ml) / 2,
                 height - 8, x_label.c_str());
    os << format("<text x=\"8\" y=\"%d\" transform=\"rotate(-90 8 %d)\">%s</text>\n", mt + 60,
                 mt + 60, y_label.c_str());
    int ci = 0;
    for (const Series& s : series) {
        const char* color = colors[ci % 8];
        std::ostringstream pts;
        bool open = false;
        for (const auto& [x, y] : s.points) {
            if (!std::isfinite(y)) {
                continue;
            }
            pts << (open ? " " : "") << format("%.1f,%.1f", px(x), py(y));
            open = true;
        }
        os << format("<polyline points=\"%s\" fill=\"none\" stroke=\"%s\" stroke-width=\"1.5\"/>\n",
                     pts.str().c_str(), color);
        os << format("<rect x=\"%d\" y=\"%d\" width=\"10\" height=\"10\" fill=\"%s\"/>\n",
                     width - mr + 10, mt + 14 * ci, color);
        os << format("<text x=\"%d\" y=\"%d\">%s</text>\n", width - mr + 24, mt + 14 * ci + 9,
                     s.name.c_str());
        ++ci;
    }
    os << "</svg>\n";
    return os.str();
}

}  // namespace anchorlab::svg
