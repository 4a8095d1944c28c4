#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mfgjump/continuous_limit.hpp"
#include "mfgjump/crypto_game.hpp"
#include "mfgjump/equilibrium.hpp"
#include "mfgjump/io/config.hpp"
#include "mfgjump/nplayer.hpp"

namespace mfgjump {

inline constexpr const char* version_string = "0.1.0";

/// 64-bit FNV-1a hash.
inline std::uint64_t fnv1a64(const std::string& bytes) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : bytes) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Round-trippable decimal form of a double.
inline std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// Builds a CSV file in memory so it can be hashed before it is written.
class CsvWriter {
public:
    explicit CsvWriter(const std::vector<std::string>& header) {
        for (std::size_t i = 0; i < header.size(); ++i) body_ += (i ? "," : "") + header[i];
        body_ += '\n';
    }

    template <class... Ts>
    void row(const Ts&... cells) {
        bool first = true;
        ((body_ += (first ? "" : ","), body_ += cell(cells), first = false), ...);
        body_ += '\n';
    }

    const std::string& str() const noexcept { return body_; }

private:
    static std::string cell(double v) { return fmt(v); }
    static std::string cell(std::size_t v) { return std::to_string(v); }
    static std::string cell(int v) { return std::to_string(v); }
    static std::string cell(const std::string& v) { return v; }

    std::string body_;
};

/// Output directory that remembers the checksum of every file it writes.
class ArtifactDir {
public:
    explicit ArtifactDir(std::filesystem::path dir) : dir_(std::move(dir)) {
        std::filesystem::create_directories(dir_);
    }

    const std::filesystem::path& path() const noexcept { return dir_; }

    void write(const std::string& name, const std::string& body) {
        const auto file = dir_ / name;
        std::filesystem::create_directories(file.parent_path());
        std::ofstream out(file, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + file.string());
        out << body;
        checksums_[name] = {fnv1a64(body), body.size()};
    }

    void write(const std::string& name, const CsvWriter& csv) { write(name, csv.str()); }

    nlohmann::json artifacts() const {
        nlohmann::json j = nlohmann::json::object();
        for (const auto& [name, info] : checksums_) {
            char hex[17];
            std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(info.first));
            j[name] = {{"fnv1a64", hex}, {"bytes", info.second}};
        }
        return j;
    }

private:
    std::filesystem::path dir_;
    std::map<std::string, std::pair<std::uint64_t, std::size_t>> checksums_;
};

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + p.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Manifest: resolved config, seed, version, artifact checksums and run facts.
inline void write_manifest(ArtifactDir& dir, const ExperimentConfig& cfg, const std::string& command,
                           const nlohmann::json& summary) {
    nlohmann::json m;
    m["command"] = command;
    m["version"] = version_string;
    m["seed"] = cfg.simulation.seed;
    m["config"] = to_json(cfg);
    m["summary"] = summary;
    m["artifacts"] = dir.artifacts();
    dir.write("manifest.json", m.dump(2) + "\n");
}

inline CsvWriter eta_csv(const CryptoGame& game, const HashRateFlow& eta) {
    CsvWriter csv({"k", "t", "eta_bar"});
    for (std::size_t k = 0; k < eta.size(); ++k) csv.row(k, game.time.time(k), eta[k]);
    return csv;
}

template <class Tag>
CsvWriter table_csv(const WealthGrid& grid, const GridTable<Tag>& table, const std::string& column) {
    CsvWriter csv({"k", "x", column});
    for (std::size_t k = 0; k < table.rows(); ++k)
        for (std::size_t i = 0; i < table.cols(); ++i) csv.row(k, grid[i], table(k, i));
    return csv;
}

inline CsvWriter trace_csv(const std::vector<double>& trace) {
    CsvWriter csv({"iter", "residual"});
    for (std::size_t i = 0; i < trace.size(); ++i) csv.row(i + 1, trace[i]);
    return csv;
}

/// Writes eta_bar.csv, policy.csv, value.csv, distribution.csv and trace.csv.
inline void write_equilibrium(ArtifactDir& dir, const CryptoGame& game, const EquilibriumResult& res) {
    dir.write("eta_bar.csv", eta_csv(game, res.eta));
    dir.write("policy.csv", table_csv(game.wealth, res.policy, "a_star"));
    dir.write("value.csv", table_csv(game.wealth, res.values, "v"));
    dir.write("distribution.csv", table_csv(game.wealth, res.flow.mu, "mass"));
    dir.write("trace.csv", trace_csv(res.residual_trace));
}

/// Simple CSV reader for numeric files written by this module.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;

    std::size_t column(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        throw std::runtime_error("missing CSV column '" + name + "'");
    }
};

inline CsvTable read_csv(const std::filesystem::path& p) {
    const std::string body = read_file(p);
    CsvTable t;
    std::size_t pos = 0;
    bool first = true;
    while (pos < body.size()) {
        std::size_t end = body.find('\n', pos);
        if (end == std::string::npos) end = body.size();
        const std::string line = body.substr(pos, end - pos);
        pos = end + 1;
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::size_t s = 0;
        for (;;) {
            const std::size_t c = line.find(',', s);
            cells.push_back(line.substr(s, c == std::string::npos ? std::string::npos : c - s));
            if (c == std::string::npos) break;
            s = c + 1;
        }
        if (first) {
            t.header = std::move(cells);
            first = false;
            continue;
        }
        std::vector<double> row;
        row.reserve(cells.size());
        for (const auto& c : cells) row.push_back(std::stod(c));
        t.rows.push_back(std::move(row));
    }
    return t;
}

/// Rebuild a K x |grid| table from a (k, x, value) CSV.
template <class Tag>
GridTable<Tag> read_table_csv(const std::filesystem::path& p, std::size_t rows, std::size_t cols,
                              const std::string& column) {
    const CsvTable t = read_csv(p);
    const std::size_t ck = t.column("k");
    const std::size_t cv = t.column(column);
    if (t.rows.size() != rows * cols) throw std::runtime_error(p.string() + ": unexpected row count");
    GridTable<Tag> out(rows, cols);
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto k = static_cast<std::size_t>(t.rows[r][ck]);
        if (k != r / cols) throw std::runtime_error(p.string() + ": rows out of order");
        out(k, r % cols) = t.rows[r][cv];
    }
    return out;
}

inline HashRateFlow read_eta_csv(const std::filesystem::path& p, std::size_t steps) {
    const CsvTable t = read_csv(p);
    const std::size_t cv = t.column("eta_bar");
    if (t.rows.size() != steps) throw std::runtime_error(p.string() + ": flow length does not match K");
    std::vector<double> v;
    v.reserve(steps);
    for (const auto& r : t.rows) v.push_back(r[cv]);
    return HashRateFlow(std::move(v));
}

}  // namespace mfgjump
