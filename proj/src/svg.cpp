#include "hf/svg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "hf/errors.hpp"
#include "hf/numkit.hpp"

namespace hf::svg {

namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 420.0;
constexpr double kMarginLeft = 70.0;
constexpr double kMarginRight = 20.0;
constexpr double kMarginTop = 40.0;
constexpr double kMarginBottom = 50.0;

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

std::string num(double v) {
    // Fixed 3-decimal layout keeps the documents diff-stable.
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    return buf;
}

}  // namespace

void write_line_chart(const std::filesystem::path& path, const std::string& title,
                      const std::string& x_label, const std::string& y_label,
                      const std::vector<Series>& series) {
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const Series& s : series) {
        if (s.xs.size() != s.ys.size()) {
            throw ShapeError("svg: series x/y lengths differ");
        }
        for (std::size_t i = 0; i < s.xs.size(); ++i) {
            xmin = std::min(xmin, s.xs[i]);
            xmax = std::max(xmax, s.xs[i]);
            ymin = std::min(ymin, s.ys[i]);
            ymax = std::max(ymax, s.ys[i]);
        }
    }
    if (xmin > xmax) {
        xmin = 0.0;
        xmax = 1.0;
    }
    if (ymin > ymax) {
        ymin = 0.0;
        ymax = 1.0;
    }
    if (xmax == xmin) {
        xmax = xmin + 1.0;
    }
    if (ymax == ymin) {
        ymax = ymin + (ymin == 0.0 ? 1.0 : std::abs(ymin) * 0.1);
    }
    const double plot_w = kWidth - kMarginLeft - kMarginRight;
    const double plot_h = kHeight - kMarginTop - kMarginBottom;
    auto sx = [&](double x) { return kMarginLeft + (x - xmin) / (xmax - xmin) * plot_w; };
    auto sy = [&](double y) { return kHeight - kMarginBottom - (y - ymin) / (ymax - ymin) * plot_h; };

    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot open svg: " + path.string());
    }
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
        << kHeight << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" "
        << "font-family=\"sans-serif\" font-size=\"15\">" << title << "</text>\n";

    // Axes and ticks.
    out << "<line x1=\"" << kMarginLeft << "\" y1=\"" << kHeight - kMarginBottom << "\" x2=\""
        << kWidth - kMarginRight << "\" y2=\"" << kHeight - kMarginBottom
        << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << kMarginLeft << "\" y1=\"" << kMarginTop << "\" x2=\"" << kMarginLeft
        << "\" y2=\"" << kHeight - kMarginBottom << "\" stroke=\"black\"/>\n";
    const int ticks = 5;
    for (int i = 0; i <= ticks; ++i) {
        const double fx = xmin + (xmax - xmin) * i / ticks;
        const double fy = ymin + (ymax - ymin) * i / ticks;
        out << "<line x1=\"" << num(sx(fx)) << "\" y1=\"" << kHeight - kMarginBottom << "\" x2=\""
            << num(sx(fx)) << "\" y2=\"" << kHeight - kMarginBottom + 5 << "\" stroke=\"black\"/>\n";
        out << "<text x=\"" << num(sx(fx)) << "\" y=\"" << kHeight - kMarginBottom + 18
            << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
            << fmt_double(std::round(fx * 1e4) / 1e4) << "</text>\n";
        out << "<line x1=\"" << kMarginLeft - 5 << "\" y1=\"" << num(sy(fy)) << "\" x2=\""
            << kMarginLeft << "\" y2=\"" << num(sy(fy)) << "\" stroke=\"black\"/>\n";
        out << "<text x=\"" << kMarginLeft - 8 << "\" y=\"" << num(sy(fy) + 4)
            << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
            << fmt_double(std::round(fy * 1e4) / 1e4) << "</text>\n";
    }
    out << "<text x=\"" << kWidth / 2 << "\" y=\"" << kHeight - 12
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">" << x_label
        << "</text>\n";
    out << "<text x=\"16\" y=\"" << kHeight / 2
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" "
        << "transform=\"rotate(-90 16 " << kHeight / 2 << ")\">" << y_label << "</text>\n";

    for (std::size_t s = 0; s < series.size(); ++s) {
        const char* color = kPalette[s % (sizeof(kPalette) / sizeof(kPalette[0]))];
        if (series[s].xs.size() > 1) {
            out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
            for (std::size_t i = 0; i < series[s].xs.size(); ++i) {
                out << num(sx(series[s].xs[i])) << "," << num(sy(series[s].ys[i])) << " ";
            }
            out << "\"/>\n";
        }
        for (std::size_t i = 0; i < series[s].xs.size(); ++i) {
            out << "<circle cx=\"" << num(sx(series[s].xs[i])) << "\" cy=\""
                << num(sy(series[s].ys[i])) << "\" r=\"3\" fill=\"" << color << "\"/>\n";
        }
        if (series[s].marker >= 0 && static_cast<std::size_t>(series[s].marker) < series[s].xs.size()) {
            const auto m = static_cast<std::size_t>(series[s].marker);
            out << "<circle cx=\"" << num(sx(series[s].xs[m])) << "\" cy=\""
                << num(sy(series[s].ys[m])) << "\" r=\"6\" fill=\"none\" stroke=\"" << color
                << "\" stroke-width=\"2\"/>\n";
        }
        out << "<text x=\"" << kWidth - kMarginRight - 8 << "\" y=\""
            << kMarginTop + 16.0 * static_cast<double>(s)
            << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"12\" fill=\"" << color
            << "\">" << series[s].label << "</text>\n";
    }
    out << "</svg>\n";
    if (!out) {
        throw IoError("svg write failed: " + path.string());
    }
}

}  // namespace hf::svg
