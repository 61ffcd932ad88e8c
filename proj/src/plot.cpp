#include "seqdiff/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace seqdiff {

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    return buf;
}

std::string svg_open(double width, double height) {
    return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(width) + "\" height=\"" +
           fmt(height) + "\" viewBox=\"0 0 " + fmt(width) + " " + fmt(height) + "\">\n";
}

std::string line(double x1, double y1, double x2, double y2, const std::string& color,
                 double width) {
    return "  <line x1=\"" + fmt(x1) + "\" y1=\"" + fmt(y1) + "\" x2=\"" + fmt(x2) + "\" y2=\"" +
           fmt(y2) + "\" stroke=\"" + color + "\" stroke-width=\"" + fmt(width) + "\"/>\n";
}

std::string circle(double cx, double cy, double r, const std::string& color) {
    return "  <circle cx=\"" + fmt(cx) + "\" cy=\"" + fmt(cy) + "\" r=\"" + fmt(r) +
           "\" fill=\"" + color + "\"/>\n";
}

std::string text(double x, double y, const std::string& s, int size = 12) {
    return "  <text x=\"" + fmt(x) + "\" y=\"" + fmt(y) + "\" font-size=\"" +
           std::to_string(size) + "\" font-family=\"monospace\">" + s + "</text>\n";
}

// Oblique projection of a 3D point.
std::pair<double, double> project(const std::array<double, 3>& p) {
    return {p[0] + 0.35 * p[2], p[1] + 0.20 * p[2]};
}

} // namespace

std::string svg_skeleton_strip(const std::string& title,
                               const std::vector<SkeletonKeyframe>& keyframes) {
    const double panel = 180.0;
    const double margin = 16.0;
    const double header = 28.0;
    const double width = margin + keyframes.size() * (panel + margin);
    const double height = header + panel + 2 * margin + 14.0;

    double lo_x = std::numeric_limits<double>::infinity(), hi_x = -lo_x;
    double lo_y = lo_x, hi_y = hi_x;
    for (const auto& kf : keyframes) {
        for (const auto& j : kf.joints) {
            const auto [x, y] = project(j);
            lo_x = std::min(lo_x, x);
            hi_x = std::max(hi_x, x);
            lo_y = std::min(lo_y, y);
            hi_y = std::max(hi_y, y);
        }
    }
    if (!(hi_x > lo_x)) {
        hi_x = lo_x + 1.0;
    }
    if (!(hi_y > lo_y)) {
        hi_y = lo_y + 1.0;
    }
    const double span = std::max(hi_x - lo_x, hi_y - lo_y);
    const double scale = (panel - 24.0) / span;

    std::string out = svg_open(width, height);
    out += text(margin, header - 10.0, title, 13);
    for (std::size_t k = 0; k < keyframes.size(); ++k) {
        const double ox = margin + k * (panel + margin);
        const double oy = header + margin;
        out += "  <rect x=\"" + fmt(ox) + "\" y=\"" + fmt(oy) + "\" width=\"" + fmt(panel) +
               "\" height=\"" + fmt(panel) + "\" fill=\"none\" stroke=\"#cccccc\"/>\n";
        const auto& joints = keyframes[k].joints;
        auto place = [&](const std::array<double, 3>& p) {
            const auto [x, y] = project(p);
            // y grows upward in data space, downward in SVG.
            return std::pair<double, double>{ox + 12.0 + (x - lo_x) * scale,
                                             oy + panel - 12.0 - (y - lo_y) * scale};
        };
        for (std::size_t j = 0; j + 1 < joints.size(); ++j) {
            const auto [x1, y1] = place(joints[j]);
            const auto [x2, y2] = place(joints[j + 1]);
            out += line(x1, y1, x2, y2, "#2b6cb0", 2.5);
        }
        for (std::size_t j = 0; j < joints.size(); ++j) {
            const auto [x, y] = place(joints[j]);
            out += circle(x, y, j == 0 ? 4.0 : 3.0, j == 0 ? "#c53030" : "#2d3748");
        }
        out += text(ox, oy + panel + 14.0, keyframes[k].label, 11);
    }
    out += "</svg>\n";
    return out;
}

std::string svg_line_chart(const std::string& title, const std::string& x_label,
                           const std::string& y_label,
                           const std::vector<std::pair<double, double>>& points) {
    const double width = 560.0, height = 320.0, ml = 64.0, mr = 16.0, mt = 32.0, mb = 44.0;
    double lo_x = 0.0, hi_x = 1.0, lo_y = 0.0, hi_y = 1.0;
    if (!points.empty()) {
        lo_x = hi_x = points.front().first;
        lo_y = hi_y = points.front().second;
        for (const auto& [x, y] : points) {
            lo_x = std::min(lo_x, x);
            hi_x = std::max(hi_x, x);
            lo_y = std::min(lo_y, y);
            hi_y = std::max(hi_y, y);
        }
    }
    if (!(hi_x > lo_x)) {
        hi_x = lo_x + 1.0;
    }
    if (!(hi_y > lo_y)) {
        hi_y = lo_y + 1.0;
    }
    auto px = [&](double x) { return ml + (x - lo_x) / (hi_x - lo_x) * (width - ml - mr); };
    auto py = [&](double y) { return height - mb - (y - lo_y) / (hi_y - lo_y) * (height - mt - mb); };

    std::string out = svg_open(width, height);
    out += text(ml, mt - 12.0, title, 13);
    out += line(ml, height - mb, width - mr, height - mb, "#444444", 1.0);
    out += line(ml, mt, ml, height - mb, "#444444", 1.0);
    out += text(width / 2.0 - 20.0, height - 10.0, x_label, 11);
    out += text(6.0, mt + 4.0, y_label, 11);
    out += text(ml - 8.0, height - mb + 14.0, fmt(lo_x), 9);
    out += text(width - mr - 40.0, height - mb + 14.0, fmt(hi_x), 9);
    out += text(4.0, height - mb, fmt(lo_y), 9);
    out += text(4.0, mt + 16.0, fmt(hi_y), 9);
    if (points.size() > 1) {
        std::string poly = "  <polyline fill=\"none\" stroke=\"#2b6cb0\" stroke-width=\"1.5\" points=\"";
        for (const auto& [x, y] : points) {
            poly += fmt(px(x)) + "," + fmt(py(y)) + " ";
        }
        poly += "\"/>\n";
        out += poly;
    } else if (points.size() == 1) {
        out += circle(px(points[0].first), py(points[0].second), 3.0, "#2b6cb0");
    }
    out += "</svg>\n";
    return out;
}

std::string svg_bar_chart(const std::string& title,
                          const std::vector<std::pair<std::string, double>>& bars) {
    const double width = 560.0, height = 320.0, ml = 64.0, mr = 16.0, mt = 32.0, mb = 56.0;
    double hi = 1.0;
    for (const auto& [label, v] : bars) {
        hi = std::max(hi, std::fabs(v));
    }
    const double bw = bars.empty() ? 1.0 : (width - ml - mr) / static_cast<double>(bars.size());

    std::string out = svg_open(width, height);
    out += text(ml, mt - 12.0, title, 13);
    out += line(ml, height - mb, width - mr, height - mb, "#444444", 1.0);
    for (std::size_t i = 0; i < bars.size(); ++i) {
        const double h = std::fabs(bars[i].second) / hi * (height - mt - mb);
        const double x = ml + i * bw + bw * 0.15;
        out += "  <rect x=\"" + fmt(x) + "\" y=\"" + fmt(height - mb - h) + "\" width=\"" +
               fmt(bw * 0.7) + "\" height=\"" + fmt(h) + "\" fill=\"#2b6cb0\"/>\n";
        out += text(ml + i * bw + 4.0, height - mb + 16.0, bars[i].first, 10);
        out += text(ml + i * bw + 4.0, height - mb - h - 6.0, fmt(bars[i].second), 9);
    }
    out += "</svg>\n";
    return out;
}

} // namespace seqdiff
