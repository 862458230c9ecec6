#ifndef KINGLAB_IO_HPP
#define KINGLAB_IO_HPP

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "kinglab/ensemble.hpp"
#include "kinglab/errors.hpp"
#include "kinglab/king_model.hpp"

namespace kinglab {

/// ========================= configuration =========================

/// Flat key = value configuration with dotted section keys
/// ("king.w0 = 2.0"), '#' comments, blank lines ignored.
class Config {
public:
    Config() = default;

    static Config parse(std::istream& in) {
        Config cfg;
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            const std::string t = trim(line);
            if (t.empty()) continue;
            const auto eq = t.find('=');
            if (eq == std::string::npos)
                throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
            const std::string key = trim(t.substr(0, eq));
            const std::string val = trim(t.substr(eq + 1));
            if (key.empty() || val.empty())
                throw ConfigError("config line " + std::to_string(lineno) + ": empty key or value");
            cfg.kv_[key] = val;
        }
        return cfg;
    }

    static Config load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file: " + path);
        return parse(in);
    }

    bool has(const std::string& key) const { return kv_.count(key) > 0; }

    double get_double(const std::string& key, double fallback) const {
        const auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        try {
            std::size_t pos = 0;
            const double v = std::stod(it->second, &pos);
            if (pos != it->second.size()) throw std::invalid_argument("trailing");
            return v;
        } catch (const std::exception&) {
            throw ConfigError("config key '" + key + "': not a number: " + it->second);
        }
    }

    long get_int(const std::string& key, long fallback) const {
        const auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        try {
            std::size_t pos = 0;
            const long v = std::stol(it->second, &pos);
            if (pos != it->second.size()) throw std::invalid_argument("trailing");
            return v;
        } catch (const std::exception&) {
            throw ConfigError("config key '" + key + "': not an integer: " + it->second);
        }
    }

    std::string get_string(const std::string& key, const std::string& fallback) const {
        const auto it = kv_.find(key);
        return it == kv_.end() ? fallback : it->second;
    }

    void set(const std::string& key, const std::string& val) { kv_[key] = val; }

    const std::map<std::string, std::string>& entries() const { return kv_; }

private:
    static std::string trim(const std::string& s) {
        const auto b = s.find_first_not_of(" \t\r\n");
        if (b == std::string::npos) return "";
        const auto e = s.find_last_not_of(" \t\r\n");
        return s.substr(b, e - b + 1);
    }

    std::map<std::string, std::string> kv_;
};

/// ========================= CSV =========================

/// shortest round-trip formatting so that identical runs give identical files
inline std::string fmt_g17(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void write_csv(const std::string& path, const std::vector<std::string>& header,
                      const std::vector<std::vector<double>>& rows) {
    std::ofstream out(path);
    if (!out) throw SnapshotError("cannot open for writing: " + path);
    for (std::size_t i = 0; i < header.size(); ++i)
        out << (i ? "," : "") << header[i];
    out << "\n";
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i)
            out << (i ? "," : "") << fmt_g17(row[i]);
        out << "\n";
    }
}

/// ========================= binary snapshots =========================

namespace detail {
inline void put_bytes(std::ostream& out, const void* p, std::size_t n) {
    out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}
inline void get_bytes(std::istream& in, void* p, std::size_t n) {
    in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!in) throw SnapshotError("snapshot truncated");
}
template <class T>
void put(std::ostream& out, const T& v) { put_bytes(out, &v, sizeof v); }
template <class T>
T get(std::istream& in) { T v; get_bytes(in, &v, sizeof v); return v; }
inline void put_vec(std::ostream& out, const std::vector<double>& v) {
    put<std::uint64_t>(out, v.size());
    put_bytes(out, v.data(), v.size() * sizeof(double));
}
inline std::vector<double> get_vec(std::istream& in) {
    const auto n = get<std::uint64_t>(in);
    std::vector<double> v(n);
    get_bytes(in, v.data(), n * sizeof(double));
    return v;
}
} // namespace detail

inline constexpr char king_snapshot_magic[8] = {'K', 'N', 'G', 'M', 'O', 'D', 'L', '1'};
inline constexpr std::uint32_t king_snapshot_version = 1;

inline void save_model(const KingModel& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw SnapshotError("cannot open for writing: " + path);
    detail::put_bytes(out, king_snapshot_magic, 8);
    detail::put(out, king_snapshot_version);
    detail::put(out, model.W0);
    detail::put(out, model.E0);
    detail::put(out, model.R);
    detail::put(out, model.M);
    detail::put_vec(out, model.grid_r);
    detail::put_vec(out, model.grid_u0);
    detail::put_vec(out, model.grid_rho0);
    detail::put_vec(out, model.grid_m0);
}

/// Snapshot loading rebuilds the model from its parameters rather than
/// trusting stored profiles for interpolation; the stored grid is used to
/// cross-check that the rebuild matches.
struct ModelSnapshot {
    double W0 = 0, E0 = 0, R = 0, M = 0;
    std::vector<double> grid_r, grid_u0, grid_rho0, grid_m0;
};

inline ModelSnapshot load_model_snapshot(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw SnapshotError("cannot open snapshot: " + path);
    char magic[8];
    detail::get_bytes(in, magic, 8);
    if (std::memcmp(magic, king_snapshot_magic, 8) != 0)
        throw SnapshotError("bad snapshot magic: " + path);
    const auto version = detail::get<std::uint32_t>(in);
    if (version != king_snapshot_version)
        throw SnapshotError("unsupported snapshot version");
    ModelSnapshot s;
    s.W0 = detail::get<double>(in);
    s.E0 = detail::get<double>(in);
    s.R = detail::get<double>(in);
    s.M = detail::get<double>(in);
    s.grid_r = detail::get_vec(in);
    s.grid_u0 = detail::get_vec(in);
    s.grid_rho0 = detail::get_vec(in);
    s.grid_m0 = detail::get_vec(in);
    return s;
}

inline constexpr char checkpoint_magic[8] = {'K', 'N', 'G', 'C', 'H', 'K', 'P', '1'};
inline constexpr std::uint32_t checkpoint_version = 1;

inline void save_checkpoint(const ParticleEnsemble& ens, double t, std::uint64_t step,
                            const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw SnapshotError("cannot open for writing: " + path);
    detail::put_bytes(out, checkpoint_magic, 8);
    detail::put(out, checkpoint_version);
    detail::put<std::uint64_t>(out, ens.size());
    detail::put(out, t);
    detail::put(out, step);
    detail::put(out, ens.total_mass);
    detail::put_vec(out, ens.r);
    detail::put_vec(out, ens.w);
    detail::put_vec(out, ens.L);
    detail::put_vec(out, ens.f);
    detail::put_vec(out, ens.weight);
}

struct Checkpoint {
    ParticleEnsemble ensemble;
    double t = 0;
    std::uint64_t step = 0;
};

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw SnapshotError("cannot open checkpoint: " + path);
    char magic[8];
    detail::get_bytes(in, magic, 8);
    if (std::memcmp(magic, checkpoint_magic, 8) != 0)
        throw SnapshotError("bad checkpoint magic: " + path);
    const auto version = detail::get<std::uint32_t>(in);
    if (version != checkpoint_version)
        throw SnapshotError("unsupported checkpoint version");
    Checkpoint c;
    const auto n = detail::get<std::uint64_t>(in);
    c.t = detail::get<double>(in);
    c.step = detail::get<std::uint64_t>(in);
    c.ensemble.total_mass = detail::get<double>(in);
    c.ensemble.r = detail::get_vec(in);
    c.ensemble.w = detail::get_vec(in);
    c.ensemble.L = detail::get_vec(in);
    c.ensemble.f = detail::get_vec(in);
    c.ensemble.weight = detail::get_vec(in);
    if (c.ensemble.r.size() != n || c.ensemble.weight.size() != n)
        throw SnapshotError("checkpoint array sizes inconsistent");
    return c;
}

} // namespace kinglab

#endif
