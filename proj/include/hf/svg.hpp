#pragma once

// Minimal self-contained SVG line charts for sweep figures. No dependencies,
// deterministic output bytes.

#include <filesystem>
#include <string>
#include <vector>

namespace hf::svg {

struct Series {
    std::string label;
    std::vector<double> xs;
    std::vector<double> ys;
    /// Index of a point to highlight with a marker, -1 for none.
    int marker = -1;
};

void write_line_chart(const std::filesystem::path& path, const std::string& title,
                      const std::string& x_label, const std::string& y_label,
                      const std::vector<Series>& series);

}  // namespace hf::svg
