#include "segda/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

// CSV + SVG emitters for the evaluation summary. SVG is hand-assembled so
// the output is byte-stable and has no plotting dependency.

namespace segda::eval {

namespace {

std::string fmt(double v, int digits = 4) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
    return buf;
}

void open_out(std::ofstream& f, const std::filesystem::path& p) {
    f.open(p);
    if (!f) throw std::runtime_error("emit_report: cannot write " + p.string());
}

// maps a value from [lo, hi] to pixel coordinates, y axis flipped
struct LinearScale {
    double lo, hi, px0, px1;
    double operator()(double v) const { return px0 + (v - lo) / (hi - lo) * (px1 - px0); }
};

const char* kMethodColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b"};

void write_trend_svg(const std::filesystem::path& path, const std::vector<TrendCell>& trend,
                     const std::vector<std::string>& levels,
                     const std::vector<std::string>& methods) {
    const int w = 640, h = 420, ml = 70, mr = 160, mt = 30, mb = 60;
    double lo = 0.0, hi = 1.0;
    for (const auto& c : trend) {
        lo = std::min(lo, c.mean_d_r);
        hi = std::max(hi, c.mean_d_r);
    }
    const double pad = 0.05 * (hi - lo + 1e-9);
    LinearScale sy{lo - pad, hi + pad, static_cast<double>(h - mb), static_cast<double>(mt)};
    LinearScale sx{0.0, static_cast<double>(levels.size() < 2 ? 1 : levels.size() - 1),
                   static_cast<double>(ml), static_cast<double>(w - mr)};

    auto value_of = [&](const std::string& level, const std::string& method) -> const TrendCell* {
        for (const auto& c : trend)
            if (c.availability == level && c.method == method) return &c;
        return nullptr;
    };

    std::ofstream f;
    open_out(f, path);
    f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    f << "<rect width=\"" << w << "\" height=\"" << h << "\" fill=\"white\"/>\n";
    f << "<text x=\"" << ml << "\" y=\"18\" font-size=\"14\">mean gap closure vs target data "
         "availability</text>\n";

    // axes and horizontal gridlines at fixed fractions
    for (int g = 0; g <= 4; ++g) {
        const double v = (lo - pad) + (hi + pad - (lo - pad)) * g / 4.0;
        const double y = sy(v);
        f << "<line x1=\"" << ml << "\" y1=\"" << fmt(y, 1) << "\" x2=\"" << (w - mr)
          << "\" y2=\"" << fmt(y, 1) << "\" stroke=\"#dddddd\"/>\n";
        f << "<text x=\"" << (ml - 8) << "\" y=\"" << fmt(y + 4, 1)
          << "\" text-anchor=\"end\">" << fmt(v, 2) << "</text>\n";
    }
    for (std::size_t i = 0; i < levels.size(); ++i) {
        const double x = sx(static_cast<double>(i));
        f << "<text x=\"" << fmt(x, 1) << "\" y=\"" << (h - mb + 20)
          << "\" text-anchor=\"middle\">" << levels[i] << "</text>\n";
    }
    f << "<line x1=\"" << ml << "\" y1=\"" << (h - mb) << "\" x2=\"" << (w - mr) << "\" y2=\""
      << (h - mb) << "\" stroke=\"black\"/>\n";
    f << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << (h - mb)
      << "\" stroke=\"black\"/>\n";

    for (std::size_t mi = 0; mi < methods.size(); ++mi) {
        const char* color = kMethodColors[mi % 5];
        std::ostringstream pts;
        for (std::size_t li = 0; li < levels.size(); ++li) {
            const TrendCell* c = value_of(levels[li], methods[mi]);
            if (!c) continue;
            pts << fmt(sx(static_cast<double>(li)), 1) << "," << fmt(sy(c->mean_d_r), 1) << " ";
        }
        f << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\""
          << pts.str() << "\"/>\n";
        for (std::size_t li = 0; li < levels.size(); ++li) {
            const TrendCell* c = value_of(levels[li], methods[mi]);
            if (!c) continue;
            f << "<circle cx=\"" << fmt(sx(static_cast<double>(li)), 1) << "\" cy=\""
              << fmt(sy(c->mean_d_r), 1) << "\" r=\"3.5\" fill=\"" << color << "\"/>\n";
        }
        const double ly = mt + 20.0 * static_cast<double>(mi);
        f << "<rect x=\"" << (w - mr + 10) << "\" y=\"" << fmt(ly, 1)
          << "\" width=\"12\" height=\"12\" fill=\"" << color << "\"/>\n";
        f << "<text x=\"" << (w - mr + 28) << "\" y=\"" << fmt(ly + 11, 1) << "\">"
          << methods[mi] << "</text>\n";
    }
    f << "</svg>\n";
}

void write_winners_svg(const std::filesystem::path& path, const WinnerCounts& winners,
                       const std::vector<std::string>& levels,
                       const std::vector<std::string>& methods) {
    const int w = 640, h = 360, ml = 60, mr = 160, mt = 30, mb = 60;
    int max_wins = 1;
    for (const auto& [lvl, cells] : winners.per_level)
        for (const auto& c : cells) max_wins = std::max(max_wins, c.wins);

    const double band = static_cast<double>(w - ml - mr) /
                        static_cast<double>(std::max<std::size_t>(1, levels.size()));
    const double bar = band / (static_cast<double>(methods.size()) + 1.0);
    LinearScale sy{0.0, static_cast<double>(max_wins), static_cast<double>(h - mb),
                   static_cast<double>(mt)};

    std::ofstream f;
    open_out(f, path);
    f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    f << "<rect width=\"" << w << "\" height=\"" << h << "\" fill=\"white\"/>\n";
    f << "<text x=\"" << ml << "\" y=\"18\" font-size=\"14\">per-pair wins by fine-tuning "
         "strategy (filled part significant)</text>\n";
    f << "<line x1=\"" << ml << "\" y1=\"" << (h - mb) << "\" x2=\"" << (w - mr) << "\" y2=\""
      << (h - mb) << "\" stroke=\"black\"/>\n";
    for (int g = 0; g <= max_wins; ++g) {
        const double y = sy(g);
        f << "<text x=\"" << (ml - 8) << "\" y=\"" << fmt(y + 4, 1)
          << "\" text-anchor=\"end\">" << g << "</text>\n";
    }

    for (std::size_t li = 0; li < levels.size(); ++li) {
        auto it = winners.per_level.find(levels[li]);
        if (it == winners.per_level.end()) continue;
        const double x0 = ml + band * static_cast<double>(li);
        f << "<text x=\"" << fmt(x0 + band / 2.0, 1) << "\" y=\"" << (h - mb + 20)
          << "\" text-anchor=\"middle\">" << levels[li] << "</text>\n";
        for (std::size_t mi = 0; mi < methods.size(); ++mi) {
            const WinnerCell* cell = nullptr;
            for (const auto& c : it->second)
                if (c.method == methods[mi]) cell = &c;
            if (!cell) continue;
            const char* color = kMethodColors[mi % 5];
            const double x = x0 + bar * (static_cast<double>(mi) + 0.5);
            const double y_all = sy(cell->wins), y_sig = sy(cell->significant_wins);
            f << "<rect x=\"" << fmt(x, 1) << "\" y=\"" << fmt(y_all, 1) << "\" width=\""
              << fmt(bar * 0.8, 1) << "\" height=\"" << fmt((h - mb) - y_all, 1)
              << "\" fill=\"none\" stroke=\"" << color << "\"/>\n";
            if (cell->significant_wins > 0)
                f << "<rect x=\"" << fmt(x, 1) << "\" y=\"" << fmt(y_sig, 1) << "\" width=\""
                  << fmt(bar * 0.8, 1) << "\" height=\"" << fmt((h - mb) - y_sig, 1)
                  << "\" fill=\"" << color << "\" fill-opacity=\"0.7\"/>\n";
        }
    }
    for (std::size_t mi = 0; mi < methods.size(); ++mi) {
        const double ly = mt + 20.0 * static_cast<double>(mi);
        f << "<rect x=\"" << (w - mr + 10) << "\" y=\"" << fmt(ly, 1)
          << "\" width=\"12\" height=\"12\" fill=\"" << kMethodColors[mi % 5] << "\"/>\n";
        f << "<text x=\"" << (w - mr + 28) << "\" y=\"" << fmt(ly + 11, 1) << "\">"
          << methods[mi] << "</text>\n";
    }
    f << "</svg>\n";
}

} // namespace

void emit_report(const TransferMatrix& matrix, const std::vector<TrendCell>& trend,
                 const WinnerCounts& winners, const std::string& out_dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw std::runtime_error("emit_report: cannot create " + out_dir);

    // ordered level/method lists as they appear in the trend rows
    std::vector<std::string> levels, methods;
    for (const auto& c : trend) {
        if (std::find(levels.begin(), levels.end(), c.availability) == levels.end())
            levels.push_back(c.availability);
        if (std::find(methods.begin(), methods.end(), c.method) == methods.end())
            methods.push_back(c.method);
    }

    {
        std::ofstream f;
        open_out(f, fs::path(out_dir) / "transfer_matrix.csv");
        f << "source\\target";
        for (const auto& t : matrix.domains) f << "," << t;
        f << "\n";
        for (const auto& s : matrix.domains) {
            f << s;
            for (const auto& t : matrix.domains) {
                const MatrixCell& c = matrix.cells.at({s, t});
                f << "," << fmt(c.mean) << "±" << fmt(c.stddev);
            }
            f << "\n";
        }
    }
    {
        std::ofstream f;
        open_out(f, fs::path(out_dir) / "trend.csv");
        f << "availability,method,mean_gap_closure,pairs_defined,pairs_excluded\n";
        for (const auto& c : trend)
            f << c.availability << "," << c.method << "," << fmt(c.mean_d_r) << ","
              << c.pairs_defined << "," << c.pairs_excluded << "\n";
    }
    {
        std::ofstream f;
        open_out(f, fs::path(out_dir) / "winners.csv");
        f << "availability,method,wins,significant_wins,pair_count\n";
        for (const auto& lvl : levels) {
            auto it = winners.per_level.find(lvl);
            if (it == winners.per_level.end()) continue;
            for (const auto& c : it->second)
                f << lvl << "," << c.method << "," << c.wins << "," << c.significant_wins << ","
                  << winners.pair_count << "\n";
        }
    }
    write_trend_svg(fs::path(out_dir) / "trend.svg", trend, levels, methods);
    write_winners_svg(fs::path(out_dir) / "winners.svg", winners, levels, methods);
}

} // namespace segda::eval
