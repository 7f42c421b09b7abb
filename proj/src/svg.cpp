#include "llab/svg.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <vector>

#include "llab/errors.hpp"

namespace llab {

namespace {

struct Series {
    std::string name;
    std::vector<std::pair<double, double>> points;
};

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

bool parse_num(const std::string& s, double& out) {
    if (s.empty()) return false;
    char* end = nullptr;
    out = std::strtod(s.c_str(), &end);
    return end == s.c_str() + s.size();
}

std::string fmt(double v, const char* spec = "%.2f") {
    char buf[48];
    std::snprintf(buf, sizeof(buf), spec, v);
    return buf;
}

std::vector<Series> build_series(const std::string& csv) {
    std::istringstream in(csv);
    std::string line;
    if (!std::getline(in, line)) throw ConfigError("empty CSV");
    const std::vector<std::string> header = split(line, ',');
    std::vector<std::vector<std::string>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        rows.push_back(split(line, ','));
    }
    if (rows.empty()) throw ConfigError("CSV has no data rows");

    std::vector<Series> series;
    const std::string schema = [&] {
        std::string s;
        for (std::size_t i = 0; i < header.size(); ++i) s += (i ? "," : "") + header[i];
        return s;
    }();

    if (schema == "alpha,beta,loss") {
        Series s;
        s.name = "loss";
        const std::string beta0 = rows.front()[1];
        for (const auto& r : rows) {
            if (r.size() != 3 || r[1] != beta0)
                throw ConfigError("landscape CSV is not a 1-D slice");
            double x, y;
            if (!parse_num(r[0], x)) throw ConfigError("bad alpha value");
            if (!parse_num(r[2], y)) continue;  // flagged nan cell
            if (std::isfinite(y)) s.points.push_back({x, y});
        }
        series.push_back(std::move(s));
    } else if (schema == "bit_width,variant,stressor_param,mean_loss,std_loss,n_seeds") {
        std::map<std::string, Series> by_key;
        for (const auto& r : rows) {
            if (r.size() != 6) throw ConfigError("bad robustness CSV row");
            double x, y;
            if (!parse_num(r[0], x) || !parse_num(r[3], y))
                throw ConfigError("bad robustness CSV value");
            const std::string key = r[1] + "@" + r[2];
            auto& s = by_key[key];
            s.name = key;
            s.points.push_back({x, y});
        }
        for (auto& [k, s] : by_key) series.push_back(std::move(s));
    } else if (header.size() >= 3 && header[1] == "variant") {
        // summary tables: x = first column, y = third, one series per variant
        std::map<std::string, Series> by_key;
        for (const auto& r : rows) {
            if (r.size() != header.size()) throw ConfigError("ragged CSV row");
            double x, y;
            if (!parse_num(r[0], x)) throw ConfigError("bad x value in CSV");
            if (!parse_num(r[2], y) || !std::isfinite(y)) continue;
            auto& s = by_key[r[1]];
            s.name = r[1];
            s.points.push_back({x, y});
        }
        for (auto& [k, s] : by_key) series.push_back(std::move(s));
    } else {
        // generic: first column is x, every later numeric column a series
        for (std::size_t c = 1; c < header.size(); ++c) {
            Series s;
            s.name = header[c];
            series.push_back(std::move(s));
        }
        for (const auto& r : rows) {
            if (r.size() != header.size()) throw ConfigError("ragged CSV row");
            double x;
            if (!parse_num(r[0], x)) throw ConfigError("bad x value in CSV");
            for (std::size_t c = 1; c < header.size(); ++c) {
                double y;
                if (parse_num(r[c], y) && std::isfinite(y))
                    series[c - 1].points.push_back({x, y});
            }
        }
        std::erase_if(series, [](const Series& s) { return s.points.empty(); });
    }
    if (series.empty()) throw ConfigError("CSV produced no plottable series");
    return series;
}

}  // namespace

std::string emit_plot(const std::string& csv, const std::string& kind) {
    if (kind != "line" && kind != "multi-line")
        throw ConfigError("plot kind must be 'line' or 'multi-line'");
    std::vector<Series> series = build_series(csv);
    if (kind == "line" && series.size() != 1)
        throw ConfigError("line plot expects exactly one series, CSV has " +
                          std::to_string(series.size()));

    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& s : series)
        for (const auto& [x, y] : s.points) {
            xmin = std::min(xmin, x);
            xmax = std::max(xmax, x);
            ymin = std::min(ymin, y);
            ymax = std::max(ymax, y);
        }
    if (xmin > xmax) throw ConfigError("no finite data points to plot");
    if (xmax == xmin) {
        xmin -= 1.0;
        xmax += 1.0;
    }
    if (ymax == ymin) {
        ymin -= 1.0;
        ymax += 1.0;
    }
    const double ypad = 0.05 * (ymax - ymin);
    ymin -= ypad;
    ymax += ypad;

    const double px0 = 60, px1 = 620, py0 = 380, py1 = 20;  // py grows downward
    auto sx = [&](double x) { return px0 + (x - xmin) / (xmax - xmin) * (px1 - px0); };
    auto sy = [&](double y) { return py0 - (y - ymin) / (ymax - ymin) * (py0 - py1); };

    static const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c",
                                     "#ff7f0e", "#9467bd", "#8c564b"};
    constexpr int kPaletteSize = 6;

    std::string out;
    out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"420\" "
           "viewBox=\"0 0 640 420\">\n";
    out += "<rect width=\"640\" height=\"420\" fill=\"white\"/>\n";
    // axes
    out += "<line x1=\"60\" y1=\"380\" x2=\"620\" y2=\"380\" stroke=\"black\"/>\n";
    out += "<line x1=\"60\" y1=\"20\" x2=\"60\" y2=\"380\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double xv = xmin + (xmax - xmin) * i / 4.0;
        const double yv = ymin + (ymax - ymin) * i / 4.0;
        const std::string xs = fmt(sx(xv));
        const std::string ys = fmt(sy(yv));
        out += "<line x1=\"" + xs + "\" y1=\"380\" x2=\"" + xs +
               "\" y2=\"384\" stroke=\"black\"/>\n";
        out += "<text x=\"" + xs + "\" y=\"398\" font-size=\"11\" text-anchor=\"middle\">" +
               fmt(xv, "%.4g") + "</text>\n";
        out += "<line x1=\"56\" y1=\"" + ys + "\" x2=\"60\" y2=\"" + ys +
               "\" stroke=\"black\"/>\n";
        out += "<text x=\"52\" y=\"" + ys + "\" font-size=\"11\" text-anchor=\"end\" "
               "dominant-baseline=\"middle\">" + fmt(yv, "%.4g") + "</text>\n";
    }
    // series
    for (std::size_t si = 0; si < series.size(); ++si) {
        const char* color = kPalette[si % kPaletteSize];
        std::string pts;
        for (const auto& [x, y] : series[si].points) {
            if (!pts.empty()) pts += " ";
            pts += fmt(sx(x)) + "," + fmt(sy(y));
        }
        out += "<polyline fill=\"none\" stroke=\"";
        out += color;
        out += "\" stroke-width=\"1.5\" points=\"" + pts + "\"/>\n";
    }
    // legend
    for (std::size_t si = 0; si < series.size(); ++si) {
        const char* color = kPalette[si % kPaletteSize];
        const std::string y = fmt(30.0 + 16.0 * static_cast<double>(si));
        out += "<line x1=\"480\" y1=\"" + y + "\" x2=\"500\" y2=\"" + y + "\" stroke=\"";
        out += color;
        out += "\" stroke-width=\"2\"/>\n";
        out += "<text x=\"506\" y=\"" + fmt(34.0 + 16.0 * static_cast<double>(si)) +
               "\" font-size=\"11\">" + series[si].name + "</text>\n";
    }
    out += "</svg>\n";
    return out;
}

}  // namespace llab
