#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "monodiff/errors.hpp"
#include "monodiff/solver.hpp"
#include "monodiff/spatial_operator.hpp"

namespace monodiff::io {

inline std::uint64_t fnv1a(const char* data, std::size_t len) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= std::uint64_t(static_cast<unsigned char>(data[i]));
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t file_checksum(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error("cannot read " + p.string());
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return fnv1a(bytes.data(), bytes.size());
}

inline std::string checksum_hex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

/// Shortest round-trippable decimal representation.
inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
}

/// Snapshot matrix (rows = snapshots) of a field sequence, flat row-major
/// values prefixed by the snapshot time.
inline void write_field_matrix_csv(const std::filesystem::path& p, const SpatialOperator& op,
                                   const std::vector<double>& times, const std::vector<Field>& fields,
                                   const std::string& kind) {
    std::ofstream out(p);
    if (!out) throw Error("cannot write " + p.string());
    out << "# dim=" << op.dim() << " n=" << op.n() << " kind=" << kind << "\n";
    out << "time";
    for (std::size_t i = 0; i < op.points(); ++i) out << ",p" << i;
    out << "\n";
    for (std::size_t s = 0; s < fields.size(); ++s) {
        out << format_double(times[s]);
        for (std::size_t i = 0; i < fields[s].size(); ++i) out << "," << format_double(fields[s][i]);
        out << "\n";
    }
}

/// Wiener increments, mode-major: one row per mode.
inline void write_wiener_csv(const std::filesystem::path& p, const WienerPath& w) {
    std::ofstream out(p);
    if (!out) throw Error("cannot write " + p.string());
    out << "# kind=wiener_increments modes=" << w.modes << " steps=" << w.steps
        << " dt=" << format_double(w.dt) << " seed=" << w.seed << "\n";
    out << "mode";
    for (std::size_t n = 0; n < w.steps; ++n) out << ",db" << n;
    out << "\n";
    for (std::size_t k = 0; k < w.modes; ++k) {
        out << k;
        for (std::size_t n = 0; n < w.steps; ++n) out << "," << format_double(w.increment(k, n));
        out << "\n";
    }
}

} // namespace monodiff::io
