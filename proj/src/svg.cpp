#include "seeopt/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "seeopt/common.hpp"

namespace seeopt {
namespace {

constexpr double kWidth = 860;
constexpr double kHeight = 480;
constexpr double kLeft = 64;
constexpr double kRight = 24;
constexpr double kTop = 44;
constexpr double kBottom = 48;

const char* kPalette[] = {"#3366cc", "#dc3912", "#109618", "#ff9900", "#990099", "#0099c6"};

std::string escape(const std::string& s) {
    std::string out;
    for (const char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string coord(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string tick_label(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

struct Bounds {
    double x_min = std::numeric_limits<double>::infinity();
    double x_max = -std::numeric_limits<double>::infinity();
    double y_min = std::numeric_limits<double>::infinity();
    double y_max = -std::numeric_limits<double>::infinity();

    void include(double x, double y) {
        if (!std::isfinite(x) || !std::isfinite(y)) return;
        x_min = std::min(x_min, x);
        x_max = std::max(x_max, x);
        y_min = std::min(y_min, y);
        y_max = std::max(y_max, y);
    }

    // degenerate or empty data still gets a drawable frame
    void finalize() {
        if (!(x_min <= x_max)) {
            x_min = 0.0;
            x_max = 1.0;
        }
        if (!(y_min <= y_max)) {
            y_min = 0.0;
            y_max = 1.0;
        }
        if (x_max == x_min) {
            x_min -= 0.5;
            x_max += 0.5;
        }
        if (y_max == y_min) {
            const double pad = std::max(0.5, std::abs(y_min) * 0.1);
            y_min -= pad;
            y_max += pad;
        }
        const double y_pad = 0.05 * (y_max - y_min);
        y_min -= y_pad;
        y_max += y_pad;
    }

    double px(double x) const {
        return kLeft + (x - x_min) / (x_max - x_min) * (kWidth - kLeft - kRight);
    }
    double py(double y) const {
        return kHeight - kBottom - (y - y_min) / (y_max - y_min) * (kHeight - kTop - kBottom);
    }
};

std::ofstream open_svg(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError(path + ": cannot open for writing");
    return out;
}

void write_frame(std::ostream& out, const std::string& title, const std::string& x_label,
                 const std::string& y_label, const Bounds& b) {
    out << "<rect x=\"0\" y=\"0\" width=\"" << kWidth << "\" height=\"" << kHeight
        << "\" fill=\"white\"/>\n";
    out << "<text x=\"" << kWidth / 2 << "\" y=\"24\" font-size=\"16\" text-anchor=\"middle\" "
           "font-family=\"sans-serif\">"
        << escape(title) << "</text>\n";
    // gridlines and tick labels, five divisions per axis
    for (int i = 0; i <= 5; ++i) {
        const double fx = b.x_min + (b.x_max - b.x_min) * i / 5.0;
        const double fy = b.y_min + (b.y_max - b.y_min) * i / 5.0;
        const double px = b.px(fx);
        const double py = b.py(fy);
        out << "<line x1=\"" << coord(px) << "\" y1=\"" << coord(kTop) << "\" x2=\""
            << coord(px) << "\" y2=\"" << coord(kHeight - kBottom)
            << "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
        out << "<line x1=\"" << coord(kLeft) << "\" y1=\"" << coord(py) << "\" x2=\""
            << coord(kWidth - kRight) << "\" y2=\"" << coord(py)
            << "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
        out << "<text x=\"" << coord(px) << "\" y=\"" << coord(kHeight - kBottom + 16)
            << "\" font-size=\"11\" text-anchor=\"middle\" font-family=\"sans-serif\">"
            << tick_label(fx) << "</text>\n";
        out << "<text x=\"" << coord(kLeft - 6) << "\" y=\"" << coord(py + 4)
            << "\" font-size=\"11\" text-anchor=\"end\" font-family=\"sans-serif\">"
            << tick_label(fy) << "</text>\n";
    }
    out << "<rect x=\"" << coord(kLeft) << "\" y=\"" << coord(kTop) << "\" width=\""
        << coord(kWidth - kLeft - kRight) << "\" height=\"" << coord(kHeight - kTop - kBottom)
        << "\" fill=\"none\" stroke=\"#444444\"/>\n";
    out << "<text x=\"" << kWidth / 2 << "\" y=\"" << kHeight - 8
        << "\" font-size=\"13\" text-anchor=\"middle\" font-family=\"sans-serif\">"
        << escape(x_label) << "</text>\n";
    out << "<text x=\"16\" y=\"" << kHeight / 2
        << "\" font-size=\"13\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "transform=\"rotate(-90 16 "
        << kHeight / 2 << ")\">" << escape(y_label) << "</text>\n";
}

}  // namespace

void write_line_plot(const std::string& path, const std::string& title,
                     const std::string& x_label, const std::string& y_label,
                     const std::vector<PlotSeries>& series, const PlotBand* band) {
    Bounds b;
    for (const auto& s : series)
        for (size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) b.include(s.x[i], s.y[i]);
    if (band) {
        for (size_t i = 0; i < band->x.size() && i < band->lo.size(); ++i)
            b.include(band->x[i], band->lo[i]);
        for (size_t i = 0; i < band->x.size() && i < band->hi.size(); ++i)
            b.include(band->x[i], band->hi[i]);
    }
    b.finalize();

    auto out = open_svg(path);
    out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
        << kHeight << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n";
    write_frame(out, title, x_label, y_label, b);

    if (band && band->x.size() >= 2 && band->x.size() == band->lo.size() &&
        band->x.size() == band->hi.size()) {
        std::ostringstream d;
        d << "M";
        for (size_t i = 0; i < band->x.size(); ++i)
            d << " " << coord(b.px(band->x[i])) << " " << coord(b.py(band->lo[i]));
        for (size_t i = band->x.size(); i-- > 0;)
            d << " L " << coord(b.px(band->x[i])) << " " << coord(b.py(band->hi[i]));
        d << " Z";
        out << "<path d=\"" << d.str() << "\" fill=\"#3366cc\" fill-opacity=\"0.15\" "
               "stroke=\"none\"/>\n";
    }

    for (size_t s = 0; s < series.size(); ++s) {
        const auto& cur = series[s];
        const char* color = kPalette[s % std::size(kPalette)];
        std::ostringstream pts;
        bool any = false;
        for (size_t i = 0; i < cur.x.size() && i < cur.y.size(); ++i) {
            if (!std::isfinite(cur.x[i]) || !std::isfinite(cur.y[i])) continue;
            if (any) pts << " ";
            pts << coord(b.px(cur.x[i])) << "," << coord(b.py(cur.y[i]));
            any = true;
        }
        if (any)
            out << "<polyline points=\"" << pts.str() << "\" fill=\"none\" stroke=\"" << color
                << "\" stroke-width=\"1.5\"/>\n";
        // legend entry
        const double ly = kTop + 16 + 16 * static_cast<double>(s);
        out << "<line x1=\"" << coord(kWidth - kRight - 150) << "\" y1=\"" << coord(ly - 4)
            << "\" x2=\"" << coord(kWidth - kRight - 126) << "\" y2=\"" << coord(ly - 4)
            << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
        out << "<text x=\"" << coord(kWidth - kRight - 120) << "\" y=\"" << coord(ly)
            << "\" font-size=\"12\" font-family=\"sans-serif\">" << escape(cur.label)
            << "</text>\n";
    }
    out << "</svg>\n";
}

void write_circle_plot(const std::string& path, const std::string& title,
                       const std::vector<std::pair<double, double>>& points) {
    constexpr double size = 480;
    constexpr double margin = 48;
    const auto px = [&](double v) { return margin + (v + 1.3) / 2.6 * (size - 2 * margin); };
    const auto py = [&](double v) { return size - margin - (v + 1.3) / 2.6 * (size - 2 * margin); };

    auto out = open_svg(path);
    out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\""
        << size << "\" viewBox=\"0 0 " << size << " " << size << "\">\n";
    out << "<rect x=\"0\" y=\"0\" width=\"" << size << "\" height=\"" << size
        << "\" fill=\"white\"/>\n";
    out << "<text x=\"" << size / 2 << "\" y=\"24\" font-size=\"16\" text-anchor=\"middle\" "
           "font-family=\"sans-serif\">"
        << escape(title) << "</text>\n";
    out << "<line x1=\"" << coord(px(-1.3)) << "\" y1=\"" << coord(py(0)) << "\" x2=\""
        << coord(px(1.3)) << "\" y2=\"" << coord(py(0))
        << "\" stroke=\"#bbbbbb\" stroke-width=\"1\"/>\n";
    out << "<line x1=\"" << coord(px(0)) << "\" y1=\"" << coord(py(-1.3)) << "\" x2=\""
        << coord(px(0)) << "\" y2=\"" << coord(py(1.3))
        << "\" stroke=\"#bbbbbb\" stroke-width=\"1\"/>\n";
    out << "<circle cx=\"" << coord(px(0)) << "\" cy=\"" << coord(py(0)) << "\" r=\""
        << coord(px(1.0) - px(0.0))
        << "\" fill=\"none\" stroke=\"#444444\" stroke-dasharray=\"4 3\"/>\n";
    out << "<text x=\"" << coord(px(1.02)) << "\" y=\"" << coord(py(0) - 6)
        << "\" font-size=\"12\" font-family=\"sans-serif\">lambda</text>\n";
    out << "<text x=\"" << coord(px(0) + 6) << "\" y=\"" << coord(py(1.08))
        << "\" font-size=\"12\" font-family=\"sans-serif\">mu</text>\n";

    std::ostringstream pts;
    bool any = false;
    for (const auto& [x, y] : points) {
        if (!std::isfinite(x) || !std::isfinite(y)) continue;
        if (any) pts << " ";
        pts << coord(px(x)) << "," << coord(py(y));
        any = true;
    }
    if (any)
        out << "<polyline points=\"" << pts.str()
            << "\" fill=\"none\" stroke=\"#dc3912\" stroke-width=\"1.5\"/>\n";
    for (const auto& [x, y] : points) {
        if (!std::isfinite(x) || !std::isfinite(y)) continue;
        out << "<circle cx=\"" << coord(px(x)) << "\" cy=\"" << coord(py(y))
            << "\" r=\"3\" fill=\"#dc3912\"/>\n";
    }
    out << "</svg>\n";
}

}  // namespace seeopt
