#pragma once

#include "safeflow/constraints.hpp"
#include "safeflow/diagnostics.hpp"
#include "safeflow/drift.hpp"
#include "safeflow/models.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace safeflow::io {

/// Shortest-safe decimal rendering: 17 significant digits, round-trips any double.
std::string format_double(double v);

/// CSV with header `t,particle_id,x1,...,xn`, one row per particle.
std::string render_csv(const ParticleEnsemble& ensemble);

/// Inverse of render_csv. Throws std::runtime_error on malformed input.
ParticleEnsemble parse_csv(std::string_view text);

/// Plot window in state coordinates (first two components).
struct Viewport {
    double xmin = 0.0;
    double xmax = 1.0;
    double ymin = 0.0;
    double ymax = 1.0;
};

/// Bounding box of every snapshot, padded by 5% and clipped to the state space.
Viewport compute_viewport(const std::vector<ParticleEnsemble>& snapshots, const StateSpace& space);

/// Scatter plot of the first two coordinates: constraint boundaries, initial
/// particles as blue dots, current particles as red crosses.
std::string render_svg(const ParticleEnsemble& current, const ParticleEnsemble& initial,
                       const std::vector<Constraint>& constraints, const Viewport& viewport, std::string_view title);

nlohmann::json trace_to_json(const BarrierTrace& trace);
nlohmann::json decay_to_json(const DecayReport& report, const std::vector<std::string>& labels);

/// Writes to `path.tmp` and renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

std::string read_file(const std::filesystem::path& path);

/// 64-bit FNV-1a as 16 hex digits.
std::string fnv1a_hex(std::string_view data);

}  // namespace safeflow::io
