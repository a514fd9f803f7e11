// JSON and binary persistence for the lab's value types.
#pragma once

#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "torusflow/ensemble.hpp"
#include "torusflow/noise_basis.hpp"
#include "torusflow/spectral_field.hpp"

namespace torusflow {

using json = nlohmann::json;

inline json to_json(const NoiseBasis& basis) {
    json modes = json::array();
    for (const auto& m : basis.modes())
        modes.push_back({{"k", {m.k.k1, m.k.k2}},
                         {"parity", m.parity == Parity::A ? "A" : "B"},
                         {"weight", m.weight}});
    return {{"cutoff", basis.cutoff()},
            {"decay", basis.decay()},
            {"normalization", basis.normalization()},
            {"modes", modes}};
}

inline NoiseBasis basis_from_json(const json& j) {
    std::vector<NoiseMode> modes;
    for (const auto& m : j.at("modes")) {
        NoiseMode mode;
        mode.k = {m.at("k")[0].get<int>(), m.at("k")[1].get<int>()};
        mode.parity = m.at("parity").get<std::string>() == "A" ? Parity::A : Parity::B;
        mode.weight = m.at("weight").get<double>();
        modes.push_back(mode);
    }
    return NoiseBasis(j.at("cutoff").get<int>(), j.at("decay").get<double>(),
                      j.at("normalization").get<double>(), std::move(modes));
}

inline json to_json(const VectorTrigPoly& V) {
    json modes = json::array();
    for (const auto& [k, w] : detail::gather_waves(V))
        modes.push_back({{"k", {k.k1, k.k2}},
                         {"cos", {w.c1, w.c2}},
                         {"sin", {w.s1, w.s2}}});
    return modes;
}

inline VectorTrigPoly vector_poly_from_json(const json& modes) {
    VectorTrigPoly V;
    for (const auto& m : modes) {
        Wave k{m.at("k")[0].get<int>(), m.at("k")[1].get<int>()};
        V.u1().add_term(k, m.at("cos")[0].get<double>(), m.at("sin")[0].get<double>());
        V.u2().add_term(k, m.at("cos")[1].get<double>(), m.at("sin")[1].get<double>());
    }
    return V;
}

inline json to_json(const SpectralField& b) {
    json bins = json::array();
    for (const auto& bin : b.bins())
        bins.push_back({{"t_start", bin.t_start},
                        {"t_end", bin.t_end},
                        {"modes", to_json(bin.field)}});
    return {{"T", b.horizon()}, {"bins", bins}};
}

inline SpectralField field_from_json(const json& j) {
    std::vector<DriftBin> bins;
    for (const auto& bj : j.at("bins"))
        bins.push_back({bj.at("t_start").get<double>(), bj.at("t_end").get<double>(),
                        vector_poly_from_json(bj.at("modes"))});
    SpectralField b = SpectralField::from_bins(std::move(bins));
    if (std::abs(b.horizon() - j.at("T").get<double>()) > 1e-12)
        throw std::runtime_error("drift horizon does not match its bins");
    return b;
}

inline json to_json(const EmpiricalCoupling& c) {
    return {{"x", c.x}, {"y", c.y}};
}

inline EmpiricalCoupling coupling_from_json(const json& j) {
    EmpiricalCoupling c;
    c.x = j.at("x").get<std::vector<double>>();
    c.y = j.at("y").get<std::vector<double>>();
    if (c.x.size() != c.y.size()) throw std::runtime_error("coupling arrays differ in size");
    return c;
}

// ---------------------------------------------------------------------------
// path ensembles: one-line JSON header, then little-endian float64 positions
// ---------------------------------------------------------------------------

inline void write_path_binary(const std::filesystem::path& file, const PathEnsemble& e) {
    json header = {{"N", e.particles},     {"S", e.steps},
                   {"dt", e.dt},           {"seed", e.seed},
                   {"basis_id", e.basis_id}, {"drift_id", e.drift_id},
                   {"thin", e.thin},       {"replica", e.replica},
                   {"grid_side", e.grid_side}};
    std::ofstream out(file, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + file.string());
    out << header.dump() << '\n';
    out.write(reinterpret_cast<const char*>(e.positions.data()),
              static_cast<std::streamsize>(e.positions.size() * sizeof(double)));
}

struct PathFile {
    json header;
    std::vector<double> positions;
};

inline PathFile read_path_binary(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + file.string());
    std::string line;
    std::getline(in, line);
    PathFile out;
    out.header = json::parse(line);
    int n = out.header.at("N").get<int>();
    int s = out.header.at("S").get<int>();
    int thin = out.header.value("thin", 1);
    std::size_t count = static_cast<std::size_t>(s / thin + 1) * 2 * n;
    out.positions.resize(count);
    in.read(reinterpret_cast<char*>(out.positions.data()),
            static_cast<std::streamsize>(count * sizeof(double)));
    if (!in) throw std::runtime_error("truncated path file " + file.string());
    return out;
}

inline json load_json(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw std::runtime_error("cannot open " + file.string());
    return json::parse(in);
}

inline void save_json(const std::filesystem::path& file, const json& j) {
    std::ofstream out(file);
    if (!out) throw std::runtime_error("cannot open " + file.string());
    out << j.dump(2) << '\n';
}

}  // namespace torusflow
