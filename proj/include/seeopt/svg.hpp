#pragma once

#include <string>
#include <utility>
#include <vector>

namespace seeopt {

// Hand-rolled SVG line plots: no plotting dependency, deterministic output,
// well-formed standalone XML. Empty inputs still produce a valid plot frame
// with title and axes, just no series.
struct PlotSeries {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};

// Shaded region between lo and hi, drawn under the series (mean +- stderr).
struct PlotBand {
    std::vector<double> x;
    std::vector<double> lo;
    std::vector<double> hi;
};

void write_line_plot(const std::string& path, const std::string& title,
                     const std::string& x_label, const std::string& y_label,
                     const std::vector<PlotSeries>& series,
                     const PlotBand* band = nullptr);

// Fixed square frame with the unit circle and the given (x, y) points joined
// in order; used for the multiplier path, which lives on the circle.
void write_circle_plot(const std::string& path, const std::string& title,
                       const std::vector<std::pair<double, double>>& points);

}  // namespace seeopt
