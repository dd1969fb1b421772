#include "safeflow/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace safeflow::io {

std::string format_double(double v) {
    char buf[32];
    const int len = std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf, static_cast<std::size_t>(len));
}

std::string render_csv(const ParticleEnsemble& ensemble) {
    std::string out = "t,particle_id";
    for (Eigen::Index k = 0; k < ensemble.dim(); ++k) out += ",x" + std::to_string(k + 1);
    out += '\n';
    const std::string t = format_double(ensemble.time);
    for (Eigen::Index j = 0; j < ensemble.size(); ++j) {
        out += t;
        out += ',';
        out += std::to_string(j);
        for (Eigen::Index k = 0; k < ensemble.dim(); ++k) {
            out += ',';
            out += format_double(ensemble.states(k, j));
        }
        out += '\n';
    }
    return out;
}

namespace {

std::vector<std::string_view> split(std::string_view line, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(sep, start);
        out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

double parse_number(std::string_view field, std::size_t line_no) {
    // strtod handles every form %.17g can emit, including inf and nan.
    const std::string copy(field);
    char* end = nullptr;
    const double v = std::strtod(copy.c_str(), &end);
    if (copy.empty() || end != copy.c_str() + copy.size())
        throw std::runtime_error("CSV line " + std::to_string(line_no) + ": invalid number '" + copy + "'");
    return v;
}

}  // namespace

ParticleEnsemble parse_csv(std::string_view text) {
    std::vector<std::string_view> lines;
    for (std::string_view line : split(text, '\n')) {
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (!line.empty()) lines.push_back(line);
    }
    if (lines.empty()) throw std::runtime_error("CSV is empty");
    const auto header = split(lines.front(), ',');
    if (header.size() < 3 || header[0] != "t" || header[1] != "particle_id")
        throw std::runtime_error("CSV header must start with t,particle_id");
    const auto dim = static_cast<Eigen::Index>(header.size() - 2);
    for (Eigen::Index k = 0; k < dim; ++k) {
        if (header[static_cast<std::size_t>(k + 2)] != "x" + std::to_string(k + 1))
            throw std::runtime_error("CSV header column " + std::to_string(k + 3) + " must be x" +
                                     std::to_string(k + 1));
    }
    const auto count = static_cast<Eigen::Index>(lines.size() - 1);
    ParticleEnsemble ens(Matrix(dim, count), 0.0);
    for (Eigen::Index j = 0; j < count; ++j) {
        const std::size_t line_no = static_cast<std::size_t>(j) + 2;
        const auto fields = split(lines[static_cast<std::size_t>(j + 1)], ',');
        if (fields.size() != header.size())
            throw std::runtime_error("CSV line " + std::to_string(line_no) + ": wrong number of fields");
        const double t = parse_number(fields[0], line_no);
        if (j == 0)
            ens.time = t;
        else if (t != ens.time)
            throw std::runtime_error("CSV line " + std::to_string(line_no) + ": inconsistent time column");
        long long id = -1;
        const auto [ptr, ec] = std::from_chars(fields[1].data(), fields[1].data() + fields[1].size(), id);
        if (ec != std::errc() || ptr != fields[1].data() + fields[1].size() || id != j)
            throw std::runtime_error("CSV line " + std::to_string(line_no) + ": particle ids must be 0..M-1 in order");
        for (Eigen::Index k = 0; k < dim; ++k) ens.states(k, j) = parse_number(fields[static_cast<std::size_t>(k + 2)], line_no);
    }
    return ens;
}

Viewport compute_viewport(const std::vector<ParticleEnsemble>& snapshots, const StateSpace& space) {
    double xmin = std::numeric_limits<double>::infinity();
    double ymin = xmin;
    double xmax = -xmin;
    double ymax = -xmin;
    for (const auto& s : snapshots) {
        if (s.size() == 0) continue;
        xmin = std::min(xmin, s.states.row(0).minCoeff());
        xmax = std::max(xmax, s.states.row(0).maxCoeff());
        const auto& ys = s.dim() > 1 ? s.states.row(1) : s.states.row(0);
        ymin = std::min(ymin, ys.minCoeff());
        ymax = std::max(ymax, ys.maxCoeff());
    }
    if (!std::isfinite(xmin)) return {};
    // Equal scales on both axes; pad the shorter side.
    const double span = std::max({xmax - xmin, ymax - ymin, 1e-9}) * 1.1;
    const double cx = 0.5 * (xmin + xmax);
    const double cy = 0.5 * (ymin + ymax);
    Viewport v{cx - span / 2, cx + span / 2, cy - span / 2, cy + span / 2};
    const int ydim = space.dim() > 1 ? 1 : 0;
    v.xmin = std::max(v.xmin, space.lower()[0]);
    v.xmax = std::min(v.xmax, space.upper()[0]);
    v.ymin = std::max(v.ymin, space.lower()[ydim]);
    v.ymax = std::min(v.ymax, space.upper()[ydim]);
    return v;
}

namespace {

constexpr double kCanvas = 600.0;

std::string fmt(double v) {
    char buf[32];
    const int len = std::snprintf(buf, sizeof buf, "%.3f", v);
    return std::string(buf, static_cast<std::size_t>(len));
}

struct Mapper {
    Viewport v;
    double scale;
    double px(double x) const { return (x - v.xmin) * scale; }
    double py(double y) const { return kCanvas - (y - v.ymin) * scale; }
};

}  // namespace

std::string render_svg(const ParticleEnsemble& current, const ParticleEnsemble& initial,
                       const std::vector<Constraint>& constraints, const Viewport& viewport, std::string_view title) {
    const double span = std::max(viewport.xmax - viewport.xmin, viewport.ymax - viewport.ymin);
    const Mapper m{viewport, kCanvas / std::max(span, 1e-12)};
    const double reach = 4.0 * span + std::abs(viewport.xmin) + std::abs(viewport.ymin) + std::abs(viewport.xmax) +
                         std::abs(viewport.ymax);
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kCanvas << "\" height=\"" << kCanvas + 30
       << "\" viewBox=\"0 0 " << kCanvas << ' ' << kCanvas + 30 << "\">\n";
    os << "<rect x=\"0\" y=\"0\" width=\"" << kCanvas << "\" height=\"" << kCanvas + 30 << "\" fill=\"white\"/>\n";
    os << "<clipPath id=\"plot\"><rect x=\"0\" y=\"0\" width=\"" << kCanvas << "\" height=\"" << kCanvas
       << "\"/></clipPath>\n<g clip-path=\"url(#plot)\">\n";

    const bool planar = current.dim() == 2;
    for (const Constraint& c : constraints) {
        if (!planar) break;
        if (const auto* cone = std::get_if<ConeShape>(&c.shape)) {
            const double base = std::atan2(cone->direction[1], cone->direction[0]);
            const double a0 = base - cone->half_angle;
            const double a1 = base + cone->half_angle;
            os << "<path d=\"M " << fmt(m.px(0)) << ' ' << fmt(m.py(0));
            for (int k = 0; k <= 16; ++k) {
                const double a = a0 + (a1 - a0) * k / 16.0;
                os << " L " << fmt(m.px(reach * std::cos(a))) << ' ' << fmt(m.py(reach * std::sin(a)));
            }
            os << " Z\" fill=\"#d9d9d9\" stroke=\"none\"/>\n";
            for (double a : {a0, a1}) {
                os << "<line x1=\"" << fmt(m.px(0)) << "\" y1=\"" << fmt(m.py(0)) << "\" x2=\""
                   << fmt(m.px(reach * std::cos(a))) << "\" y2=\"" << fmt(m.py(reach * std::sin(a)))
                   << "\" stroke=\"#555555\" stroke-width=\"1.5\"/>\n";
            }
        } else if (const auto* sphere = std::get_if<SphereShape>(&c.shape)) {
            os << "<circle cx=\"" << fmt(m.px(0)) << "\" cy=\"" << fmt(m.py(0)) << "\" r=\""
               << fmt(sphere->radius * m.scale) << "\" fill=\"none\" stroke=\"#333333\" stroke-width=\"1.5\" "
               << "stroke-dasharray=\"6 4\"/>\n";
        } else if (const auto* half = std::get_if<HalfspaceShape>(&c.shape)) {
            // Points p0 + s t on the line n^T x = offset.
            const Vector n = half->normal.head(2);
            const Vector p0 = n * (half->offset / n.squaredNorm());
            const Vector t = (Vector(2) << -n[1], n[0]).finished().normalized();
            const Vector a = p0 - reach * t;
            const Vector b = p0 + reach * t;
            os << "<line x1=\"" << fmt(m.px(a[0])) << "\" y1=\"" << fmt(m.py(a[1])) << "\" x2=\"" << fmt(m.px(b[0]))
               << "\" y2=\"" << fmt(m.py(b[1])) << "\" stroke=\"#555555\" stroke-width=\"1.5\"/>\n";
        }
    }

    const int ydim = current.dim() > 1 ? 1 : 0;
    os << "<g fill=\"#1f4fd1\" fill-opacity=\"0.6\">\n";
    for (Eigen::Index j = 0; j < initial.size(); ++j) {
        os << "<circle cx=\"" << fmt(m.px(initial.states(0, j))) << "\" cy=\"" << fmt(m.py(initial.states(ydim, j)))
           << "\" r=\"1.6\"/>\n";
    }
    os << "</g>\n<g stroke=\"#d11f1f\" stroke-width=\"1\">\n";
    for (Eigen::Index j = 0; j < current.size(); ++j) {
        const double x = m.px(current.states(0, j));
        const double y = m.py(current.states(ydim, j));
        os << "<path d=\"M " << fmt(x - 2.5) << ' ' << fmt(y - 2.5) << " L " << fmt(x + 2.5) << ' ' << fmt(y + 2.5)
           << " M " << fmt(x - 2.5) << ' ' << fmt(y + 2.5) << " L " << fmt(x + 2.5) << ' ' << fmt(y - 2.5)
           << "\"/>\n";
    }
    os << "</g>\n</g>\n";
    os << "<text x=\"8\" y=\"" << kCanvas + 20 << "\" font-family=\"sans-serif\" font-size=\"13\">" << title
       << "  [x: " << fmt(viewport.xmin) << " .. " << fmt(viewport.xmax) << ", y: " << fmt(viewport.ymin) << " .. "
       << fmt(viewport.ymax) << "]</text>\n";
    os << "</svg>\n";
    return os.str();
}

nlohmann::json trace_to_json(const BarrierTrace& trace) {
    nlohmann::json h = nlohmann::json::array();
    for (const Vector& v : trace.h) h.push_back(std::vector<double>(v.data(), v.data() + v.size()));
    return {{"labels", trace.labels},
            {"times", trace.times},
            {"h", std::move(h)},
            {"violation_fraction", trace.violation_fraction},
            {"nonzero_control_fraction", trace.nonzero_control_fraction}};
}

nlohmann::json decay_to_json(const DecayReport& report, const std::vector<std::string>& labels) {
    auto violation_json = [&labels](const DecayViolation& v) {
        return nlohmann::json{{"constraint", v.constraint < labels.size() ? labels[v.constraint] : std::to_string(v.constraint)},
                              {"interval", v.interval},
                              {"t_start", v.t_start},
                              {"t_end", v.t_end},
                              {"h_start", v.h_start},
                              {"h_end", v.h_end},
                              {"bound", v.bound},
                              {"excess", v.excess()}};
    };
    nlohmann::json out{{"alpha", report.alpha},
                       {"pass", report.pass},
                       {"intervals_checked", report.intervals_checked},
                       {"violation_count", report.violations.size()},
                       {"slack", std::vector<double>(report.slack.data(), report.slack.data() + report.slack.size())}};
    out["worst"] = report.worst ? violation_json(*report.worst) : nlohmann::json(nullptr);
    return out;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw std::runtime_error("failed writing " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

std::string fnv1a_hex(std::string_view data) {
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    for (unsigned char c : data) {
        hash ^= c;
        hash *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash));
    return buf;
}

}  // namespace safeflow::io
