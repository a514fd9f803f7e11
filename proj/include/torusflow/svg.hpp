// Static SVG emission: line plots and heatmaps, no dependencies.
#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

namespace torusflow {

class LinePlot {
  public:
    LinePlot(std::string title, std::string xlabel, std::string ylabel)
        : title_(std::move(title)), xlabel_(std::move(xlabel)), ylabel_(std::move(ylabel)) {}

    void add_series(std::string name, std::vector<double> xs, std::vector<double> ys) {
        series_.push_back({std::move(name), std::move(xs), std::move(ys)});
    }

    void set_log_y(bool v) { log_y_ = v; }

    void write(const std::filesystem::path& file) const {
        const double W = 720, H = 440, L = 70, R = 170, T = 40, B = 50;
        double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
        for (const auto& s : series_) {
            for (double x : s.xs) {
                xmin = std::min(xmin, x);
                xmax = std::max(xmax, x);
            }
            for (double y : s.ys) {
                double v = log_y_ ? safe_log(y) : y;
                ymin = std::min(ymin, v);
                ymax = std::max(ymax, v);
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
        if (xmax - xmin < 1e-12) xmax = xmin + 1;
        if (ymax - ymin < 1e-12) ymax = ymin + 1;

        auto px = [&](double x) { return L + (x - xmin) / (xmax - xmin) * (W - L - R); };
        auto py = [&](double y) {
            double v = log_y_ ? safe_log(y) : y;
            return H - B - (v - ymin) / (ymax - ymin) * (H - T - B);
        };

        std::ofstream out(file);
        if (!out) throw std::runtime_error("cannot open " + file.string());
        out << std::setprecision(8);
        out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H
            << "' viewBox='0 0 " << W << " " << H << "'>\n";
        out << "<rect width='100%' height='100%' fill='white'/>\n";
        out << "<text x='" << W / 2 << "' y='20' text-anchor='middle' font-size='15'>"
            << title_ << "</text>\n";
        // axes
        out << "<line x1='" << L << "' y1='" << T << "' x2='" << L << "' y2='" << H - B
            << "' stroke='black'/>\n";
        out << "<line x1='" << L << "' y1='" << H - B << "' x2='" << W - R << "' y2='"
            << H - B << "' stroke='black'/>\n";
        for (int i = 0; i <= 4; ++i) {
            double fx = xmin + (xmax - xmin) * i / 4;
            double fy = ymin + (ymax - ymin) * i / 4;
            out << "<text x='" << px(fx) << "' y='" << H - B + 18
                << "' text-anchor='middle' font-size='11'>" << fmt(fx) << "</text>\n";
            out << "<text x='" << L - 8 << "' y='" << H - B - (H - T - B) * i / 4.0 + 4
                << "' text-anchor='end' font-size='11'>"
                << fmt(log_y_ ? std::exp(fy) : fy) << "</text>\n";
        }
        out << "<text x='" << (L + W - R) / 2 << "' y='" << H - 12
            << "' text-anchor='middle' font-size='12'>" << xlabel_ << "</text>\n";
        out << "<text x='16' y='" << (T + H - B) / 2
            << "' text-anchor='middle' font-size='12' transform='rotate(-90 16 "
            << (T + H - B) / 2 << ")'>" << ylabel_ << "</text>\n";

        static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                       "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
        for (std::size_t s = 0; s < series_.size(); ++s) {
            const auto& ser = series_[s];
            out << "<polyline fill='none' stroke='" << colors[s % 8]
                << "' stroke-width='1.5' points='";
            for (std::size_t i = 0; i < ser.xs.size(); ++i)
                out << px(ser.xs[i]) << "," << py(ser.ys[i]) << " ";
            out << "'/>\n";
            double ly = T + 16 + 16 * static_cast<double>(s);
            out << "<line x1='" << W - R + 10 << "' y1='" << ly << "' x2='" << W - R + 30
                << "' y2='" << ly << "' stroke='" << colors[s % 8] << "' stroke-width='2'/>\n";
            out << "<text x='" << W - R + 36 << "' y='" << ly + 4 << "' font-size='11'>"
                << ser.name << "</text>\n";
        }
        out << "</svg>\n";
    }

  private:
    struct Series {
        std::string name;
        std::vector<double> xs, ys;
    };

    static double safe_log(double y) { return std::log(std::max(y, 1e-300)); }

    static std::string fmt(double v) {
        std::ostringstream os;
        os << std::setprecision(3) << v;
        return os.str();
    }

    std::string title_, xlabel_, ylabel_;
    std::vector<Series> series_;
    bool log_y_ = false;
};

/// Row-major scalar grid rendered as colored cells (blue-white-red).
inline void write_heatmap(const std::filesystem::path& file, const std::vector<double>& grid,
                          int n, const std::string& title) {
    double lo = 1e300, hi = -1e300;
    for (double v : grid) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (hi - lo < 1e-300) hi = lo + 1;
    const double cell = std::max(1.0, 512.0 / n);
    const double W = n * cell, H = n * cell + 30;

    std::ofstream out(file);
    if (!out) throw std::runtime_error("cannot open " + file.string());
    out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H
        << "'>\n";
    out << "<text x='" << W / 2 << "' y='18' text-anchor='middle' font-size='14'>" << title
        << "</text>\n";
    for (int a = 0; a < n; ++a) {
        for (int b = 0; b < n; ++b) {
            double t = (grid[static_cast<std::size_t>(a) * n + b] - lo) / (hi - lo);
            int r = static_cast<int>(255 * std::min(1.0, 2 * t));
            int bch = static_cast<int>(255 * std::min(1.0, 2 * (1 - t)));
            int g = static_cast<int>(255 * (1 - std::abs(2 * t - 1)));
            out << "<rect x='" << b * cell << "' y='" << 30 + a * cell << "' width='" << cell
                << "' height='" << cell << "' fill='rgb(" << r << "," << g << "," << bch
                << ")'/>\n";
        }
    }
    out << "</svg>\n";
}

}  // namespace torusflow
