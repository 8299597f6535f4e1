#pragma once

// Report and sample files.
//
// CSV: '#'-prefixed metadata lines, a header row, then rows with every double
// printed as its shortest round-trip text (locale independent).
//
// CGLF sample files: 32-byte header
//   bytes  0-3   magic "CGLF"
//   bytes  4-7   u32 dimension
//   bytes  8-11  u32 N (modes per dimension)
//   bytes 12-15  u32 sample count
//   bytes 16-23  f64 period
//   bytes 24-31  reserved (zero)
// followed, per sample, by (re, im) f64 pairs for every lattice wavevector in
// flat order (k_1 slowest, each k_i from -N/2 to N/2). All little-endian.

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "experiments.hpp"
#include "torus.hpp"

namespace cglavg {

/// Shortest text that parses back to exactly x.
inline std::string exact_text(double x) {
    std::array<char, 64> buf{};
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), x);
    return std::string(buf.data(), res.ptr);
}

struct CsvTable {
    std::vector<std::pair<std::string, std::string>> metadata;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::string render() const {
        std::string out;
        for (const auto& [k, v] : metadata) out += "# " + k + ": " + v + "\n";
        for (std::size_t i = 0; i < header.size(); ++i) out += (i ? "," : "") + header[i];
        out += "\n";
        for (const auto& r : rows) {
            for (std::size_t i = 0; i < r.size(); ++i) out += (i ? "," : "") + r[i];
            out += "\n";
        }
        return out;
    }
};

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + path + "'");
    out << text;
    if (!out) throw Error("write failed for '" + path + "'");
}

inline CsvTable convergence_csv(const ConvergenceReport& rep,
                                const std::vector<std::pair<std::string, std::string>>& extra = {}) {
    CsvTable t;
    t.metadata = extra;
    t.metadata.emplace_back("experiment", rep.experiment);
    for (const auto& m : rep.metadata) t.metadata.push_back(m);
    t.metadata.emplace_back("threshold", exact_text(rep.threshold));
    t.metadata.emplace_back("monotone", rep.monotone ? "yes" : "no");
    t.metadata.emplace_back("below_threshold", rep.below_threshold ? "yes" : "no");
    t.metadata.emplace_back("partial", rep.partial ? "yes" : "no");
    for (const auto& n : rep.notes) t.metadata.emplace_back("note", n);
    t.metadata.emplace_back("verdict", rep.verdict ? "PASS" : "FAIL");
    t.header = {"epsilon", "estimate", "ci_low", "ci_high", "n_paths", "dt", "seed"};
    for (const auto& r : rep.rows)
        t.rows.push_back({exact_text(r.epsilon), exact_text(r.estimate), exact_text(r.ci_low), exact_text(r.ci_high),
                          std::to_string(r.n_paths), exact_text(r.dt), std::to_string(r.seed)});
    return t;
}

inline CsvTable time_csv(const std::vector<TimeRow>& rows,
                         std::vector<std::pair<std::string, std::string>> metadata) {
    CsvTable t;
    t.metadata = std::move(metadata);
    t.header = {"t", "w2", "ci_low", "ci_high"};
    for (const auto& r : rows)
        t.rows.push_back({exact_text(r.t), exact_text(r.w2), exact_text(r.ci_low), exact_text(r.ci_high)});
    return t;
}

namespace detail {

template <class T>
void put_le(std::string& out, T value) {
    std::array<unsigned char, sizeof(T)> b{};
    std::memcpy(b.data(), &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b.begin(), b.end());
    out.append(reinterpret_cast<const char*>(b.data()), b.size());
}

template <class T>
T get_le(const std::string& in, std::size_t& pos) {
    if (pos + sizeof(T) > in.size()) throw Error("sample file truncated");
    std::array<unsigned char, sizeof(T)> b{};
    std::memcpy(b.data(), in.data() + pos, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b.begin(), b.end());
    pos += sizeof(T);
    T value;
    std::memcpy(&value, b.data(), sizeof(T));
    return value;
}

}  // namespace detail

inline std::string encode_samples(const std::vector<SpectralField>& samples) {
    if (samples.empty()) throw InvalidArgument("encode_samples: no samples");
    const TorusGrid& g = samples.front().grid();
    std::string out = "CGLF";
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(g.dimension()));
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(g.modes_per_dim()));
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(samples.size()));
    detail::put_le<double>(out, g.period());
    detail::put_le<std::uint64_t>(out, 0);
    for (const auto& s : samples) {
        if (s.grid().dimension() != g.dimension() || s.grid().modes_per_dim() != g.modes_per_dim())
            throw InvalidArgument("encode_samples: samples live on different grids");
        for (std::size_t i = 0; i < s.size(); ++i) {
            detail::put_le<double>(out, s[i].real());
            detail::put_le<double>(out, s[i].imag());
        }
    }
    return out;
}

/// Decodes a CGLF buffer; the grid uses the default dealias fraction.
inline std::vector<SpectralField> decode_samples(const std::string& bytes) {
    if (bytes.size() < 32 || bytes.compare(0, 4, "CGLF") != 0) throw Error("not a CGLF sample file");
    std::size_t pos = 4;
    const auto dim = detail::get_le<std::uint32_t>(bytes, pos);
    const auto n = detail::get_le<std::uint32_t>(bytes, pos);
    const auto count = detail::get_le<std::uint32_t>(bytes, pos);
    const auto period = detail::get_le<double>(bytes, pos);
    pos = 32;
    const GridPtr grid = make_grid(static_cast<int>(dim), static_cast<int>(n), period);
    const std::size_t need = 32 + static_cast<std::size_t>(count) * grid->size() * 16;
    if (bytes.size() != need) throw Error("sample file size does not match its header");
    std::vector<SpectralField> out;
    out.reserve(count);
    for (std::uint32_t s = 0; s < count; ++s) {
        std::vector<Complex> c(grid->size());
        for (auto& z : c) {
            const double re = detail::get_le<double>(bytes, pos);
            const double im = detail::get_le<double>(bytes, pos);
            z = {re, im};
        }
        SpectralField f(grid);
        for (std::size_t i = 0; i < c.size(); ++i) f[i] = c[i];
        out.push_back(std::move(f));
    }
    return out;
}

inline void write_samples(const std::string& path, const std::vector<SpectralField>& samples) {
    write_text(path, encode_samples(samples));
}

inline std::vector<SpectralField> read_samples(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open sample file '" + path + "'");
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_samples(bytes);
}

}  // namespace cglavg
