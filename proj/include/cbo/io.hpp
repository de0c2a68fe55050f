#pragma once

#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cbo/dynamics.hpp"
#include "cbo/errors.hpp"
#include "cbo/meanfield.hpp"
#include "cbo/measure.hpp"

namespace cbo {

// Shortest round-trip decimal form; the reason CSV output is byte-stable.
inline std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0.0 ? "inf" : "-inf";
    std::array<char, 32> buf;
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return {buf.data(), res.ptr};
}

// Binary mode so line endings stay LF everywhere.
inline void write_text_file(const std::filesystem::path& path,
                            const std::string& content) {
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    f.write(content.data(),
            static_cast<std::streamsize>(content.size()));
    if (!f) throw DataError("cannot write " + path.string());
}

inline std::string ensemble_csv(const Ensemble& ens) {
    ens.validate();
    std::string out;
    for (std::size_t j = 0; j < ens.dim; ++j) {
        if (j) out += ',';
        out += 'x';
        out += std::to_string(j);
    }
    out += '\n';
    for (std::size_t i = 0; i < ens.n; ++i) {
        const auto x = ens.point(i);
        for (std::size_t j = 0; j < ens.dim; ++j) {
            if (j) out += ',';
            out += format_double(x[j]);
        }
        out += '\n';
    }
    return out;
}

inline std::string trajectory_csv(const Trajectory& traj) {
    std::string out = "t";
    for (std::size_t j = 0; j < traj.dim; ++j)
        out += ",consensus_" + std::to_string(j);
    out += ",best_f,moment_p\n";
    for (std::size_t k = 0; k < traj.times.size(); ++k) {
        out += format_double(traj.times[k]);
        for (std::size_t j = 0; j < traj.dim; ++j) {
            out += ',';
            out += format_double(traj.consensus[k * traj.dim + j]);
        }
        out += ',';
        out += format_double(traj.best_f[k]);
        out += ',';
        out += format_double(traj.moment[k]);
        out += '\n';
    }
    return out;
}

inline std::string consensus_csv(const MeanFieldSolution& sol) {
    std::string out = "t";
    for (std::size_t j = 0; j < sol.dim; ++j)
        out += ",m_" + std::to_string(j);
    out += ",phi_R,moment_p\n";
    for (std::size_t k = 0; k < sol.curve.times.size(); ++k) {
        out += format_double(sol.curve.times[k]);
        for (std::size_t j = 0; j < sol.dim; ++j) {
            out += ',';
            out += format_double(sol.consensus_curve[k * sol.dim + j]);
        }
        out += ',';
        out += format_double(sol.phi[k]);
        out += ',';
        out += format_double(sol.moment[k]);
        out += '\n';
    }
    return out;
}

inline std::string picard_history_csv(const std::vector<double>& history) {
    std::string out = "iter,path_dist\n";
    for (std::size_t i = 0; i < history.size(); ++i) {
        out += std::to_string(i + 1);
        out += ',';
        out += format_double(history[i]);
        out += '\n';
    }
    return out;
}

inline std::string chaos_csv(const ChaosTable& table) {
    std::string out = "N,rep,w_p\n";
    for (const auto& row : table) {
        for (std::size_t rep = 0; rep < row.distances.size(); ++rep) {
            out += std::to_string(row.n);
            out += ',';
            out += std::to_string(rep);
            out += ',';
            out += format_double(row.distances[rep]);
            out += '\n';
        }
    }
    return out;
}

// One CSV per frame plus a manifest carrying the time grid.
inline void write_measure_curve(const std::filesystem::path& dir,
                                const MeasureCurve& curve) {
    curve.validate();
    std::filesystem::create_directories(dir);
    nlohmann::json manifest;
    manifest["times"] = curve.times;
    manifest["n"] = curve.frames[0].n;
    manifest["dim"] = curve.frames[0].dim;
    std::vector<std::string> names;
    names.reserve(curve.frames.size());
    for (std::size_t k = 0; k < curve.frames.size(); ++k) {
        std::string idx = std::to_string(k);
        idx.insert(0, idx.size() < 6 ? 6 - idx.size() : 0, '0');
        names.push_back("frame_" + idx + ".csv");
        write_text_file(dir / names.back(), ensemble_csv(curve.frames[k]));
    }
    manifest["frames"] = names;
    write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

} // namespace cbo
