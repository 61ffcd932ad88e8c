#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

namespace seqdiff {

// Minimal deterministic SVG writers (line segments, circles, text); output
// bytes depend only on the inputs.

struct SkeletonKeyframe {
    std::string label;
    std::vector<std::array<double, 3>> joints;
};

std::string svg_skeleton_strip(const std::string& title,
                               const std::vector<SkeletonKeyframe>& keyframes);

std::string svg_line_chart(const std::string& title, const std::string& x_label,
                           const std::string& y_label,
                           const std::vector<std::pair<double, double>>& points);

std::string svg_bar_chart(const std::string& title,
                          const std::vector<std::pair<std::string, double>>& bars);

} // namespace seqdiff
