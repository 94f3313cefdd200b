#pragma once

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "taskdisc/common.hpp"
#include "taskdisc/rng.hpp"
#include "taskdisc/tensor.hpp"

namespace taskdisc {

static_assert(std::endian::native == std::endian::little, "TDS i/o assumes a little-endian host");

enum class Mixing : uint8_t { linear, linear_tanh };

struct SyntheticSpec {
    int64_t n = 0;            // point count
    int64_t d = 0;            // feature dimension
    int64_t f = 0;            // number of planted binary factors
    double noise_sigma = 0.0; // additive gaussian noise scale
    Mixing mixing = Mixing::linear;

    void validate() const {
        if (n < 2) throw spec_error("synthetic spec: need at least 2 points");
        if (d < 1) throw spec_error("synthetic spec: feature dimension must be positive");
        if (f < 0) throw spec_error("synthetic spec: factor count must be non-negative");
        if (f > d) throw spec_error("synthetic spec: more factors than feature dimensions");
        if (n < 2 * f) throw spec_error("synthetic spec: need n >= 2*f");
        if (noise_sigma < 0) throw spec_error("synthetic spec: negative noise sigma");
    }
};

struct Dataset {
    Tensor features;                         // N x D
    std::vector<int64_t> ids;                // unique, row-aligned
    std::vector<std::vector<uint8_t>> planted;  // F factor vectors of length N, values {0,1}

    int64_t n() const { return features.rows(); }
    int64_t dim() const { return features.cols(); }

    int64_t row_of(int64_t id) const {
        for (size_t i = 0; i < ids.size(); ++i)
            if (ids[i] == id) return static_cast<int64_t>(i);
        throw contract_error("dataset: unknown id " + std::to_string(id));
    }

    bool canonical_ids() const {
        for (size_t i = 0; i < ids.size(); ++i)
            if (ids[i] != static_cast<int64_t>(i)) return false;
        return true;
    }
};

enum class SplitProvenance : uint8_t { random, adversarial };

struct SplitSpec {
    std::vector<int64_t> train_ids;
    std::vector<int64_t> test_ids;
    SplitProvenance provenance = SplitProvenance::random;
    // Fraction of class-1 points per side w.r.t. the task the split was built
    // around; negative until some task has been bound to the split.
    double train_balance = -1.0;
    double test_balance = -1.0;

    std::string summary() const {
        return std::string(provenance == SplitProvenance::random ? "random" : "adversarial") +
               ":tr=" + std::to_string(train_ids.size()) + ",te=" + std::to_string(test_ids.size());
    }
};

// Balanced factor vectors (exact-count permutation, not coin flips), a
// seed-drawn gaussian mixing matrix, then additive noise. Draw order is
// fixed: factors, mixing matrix, noise.
inline Dataset generate_synthetic(const SyntheticSpec& spec, uint64_t seed) {
    spec.validate();
    Pcg64 rng(seed);

    Dataset ds;
    ds.ids.resize(static_cast<size_t>(spec.n));
    for (int64_t i = 0; i < spec.n; ++i) ds.ids[static_cast<size_t>(i)] = i;

    ds.planted.resize(static_cast<size_t>(spec.f));
    for (auto& factor : ds.planted) {
        factor.assign(static_cast<size_t>(spec.n), 0);
        for (int64_t i = 0; i < spec.n / 2; ++i) factor[static_cast<size_t>(i)] = 1;
        rng.shuffle(factor);
    }

    std::vector<double> mix(static_cast<size_t>(spec.f * spec.d));
    for (auto& v : mix) v = rng.gaussian();

    ds.features = Tensor::zeros({spec.n, spec.d});
    const double norm = 1.0 / std::sqrt(static_cast<double>(std::max<int64_t>(spec.f, 1)));
    for (int64_t i = 0; i < spec.n; ++i) {
        for (int64_t j = 0; j < spec.d; ++j) {
            double s = 0.0;
            for (int64_t k = 0; k < spec.f; ++k) {
                const double z = ds.planted[static_cast<size_t>(k)][static_cast<size_t>(i)] ? 1.0 : -1.0;
                s += z * mix[static_cast<size_t>(k * spec.d + j)];
            }
            s *= norm;
            if (spec.mixing == Mixing::linear_tanh && spec.f > 0) s = std::tanh(s);
            ds.features.at(i, j) = static_cast<float>(s);
        }
    }
    if (spec.noise_sigma > 0) {
        for (auto& v : ds.features.data) v += static_cast<float>(spec.noise_sigma * rng.gaussian());
    }
    return ds;
}

inline SplitSpec split_dataset(const Dataset& ds, double test_fraction, uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0))
        throw spec_error("split: test fraction must lie in (0, 1)");
    const int64_t n_test = std::llround(test_fraction * static_cast<double>(ds.n()));
    if (n_test < 1 || n_test >= ds.n()) throw spec_error("split: a side would be empty");

    std::vector<int64_t> perm = ds.ids;
    Pcg64 rng(seed);
    rng.shuffle(perm);

    SplitSpec s;
    s.test_ids.assign(perm.begin(), perm.begin() + n_test);
    s.train_ids.assign(perm.begin() + n_test, perm.end());
    std::sort(s.test_ids.begin(), s.test_ids.end());
    std::sort(s.train_ids.begin(), s.train_ids.end());
    return s;
}

// ---- TDS on-disk format ----
//
//   bytes 0..3   ASCII magic "TDS1"
//   JSON header  {"n":..,"d":..,"f":..,"ids":bool} terminated by '\n'
//   payload      n*d little-endian f32, row-major
//   [ids]        n little-endian int64, present iff header ids flag is true
//                (the flag is false when ids are the canonical 0..n-1)
//   [factors]    f rows, each ceil(n/8) bytes, bit i of row r = factor r of
//                point i, LSB-first within each byte

namespace detail {

inline void write_bytes(std::ofstream& out, const void* p, size_t n) {
    out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

inline void read_bytes(std::ifstream& in, void* p, size_t n, const char* what) {
    in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<size_t>(in.gcount()) != n)
        throw corruption_error(std::string("tds: truncated ") + what + " section");
}

}  // namespace detail

inline void save_tds(const Dataset& ds, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("tds: cannot open '" + path + "' for writing");

    const bool ids_present = !ds.canonical_ids();
    nlohmann::ordered_json header;
    header["n"] = ds.n();
    header["d"] = ds.dim();
    header["f"] = ds.planted.size();
    header["ids"] = ids_present;
    const std::string htext = header.dump();

    detail::write_bytes(out, "TDS1", 4);
    detail::write_bytes(out, htext.data(), htext.size());
    detail::write_bytes(out, "\n", 1);
    detail::write_bytes(out, ds.features.data.data(), ds.features.data.size() * sizeof(float));
    if (ids_present) detail::write_bytes(out, ds.ids.data(), ds.ids.size() * sizeof(int64_t));

    const size_t row_bytes = static_cast<size_t>((ds.n() + 7) / 8);
    for (const auto& factor : ds.planted) {
        std::vector<uint8_t> packed(row_bytes, 0);
        for (int64_t i = 0; i < ds.n(); ++i)
            if (factor[static_cast<size_t>(i)])
                packed[static_cast<size_t>(i / 8)] |= static_cast<uint8_t>(1u << (i % 8));
        detail::write_bytes(out, packed.data(), packed.size());
    }
    if (!out) throw io_error("tds: write to '" + path + "' failed");
}

inline Dataset load_tds(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("tds: cannot open '" + path + "'");

    char magic[4];
    detail::read_bytes(in, magic, 4, "magic");
    if (std::memcmp(magic, "TDS1", 4) != 0) throw format_error("tds: bad magic, not a TDS1 file");

    std::string htext;
    if (!std::getline(in, htext)) throw corruption_error("tds: truncated header section");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(htext);
    } catch (const nlohmann::json::exception& e) {
        throw format_error(std::string("tds: malformed header: ") + e.what());
    }
    if (!header.contains("n") || !header.contains("d") || !header.contains("f") || !header.contains("ids"))
        throw format_error("tds: header missing a required key");
    const int64_t n = header["n"].get<int64_t>();
    const int64_t d = header["d"].get<int64_t>();
    const int64_t f = header["f"].get<int64_t>();
    const bool ids_present = header["ids"].get<bool>();
    if (n < 0 || d < 0 || f < 0) throw format_error("tds: negative dimension in header");

    Dataset ds;
    ds.features = Tensor::zeros({n, d});
    detail::read_bytes(in, ds.features.data.data(), static_cast<size_t>(n * d) * sizeof(float), "feature");

    ds.ids.resize(static_cast<size_t>(n));
    if (ids_present) {
        detail::read_bytes(in, ds.ids.data(), static_cast<size_t>(n) * sizeof(int64_t), "ids");
    } else {
        for (int64_t i = 0; i < n; ++i) ds.ids[static_cast<size_t>(i)] = i;
    }

    const size_t row_bytes = static_cast<size_t>((n + 7) / 8);
    ds.planted.resize(static_cast<size_t>(f));
    for (auto& factor : ds.planted) {
        std::vector<uint8_t> packed(row_bytes);
        detail::read_bytes(in, packed.data(), packed.size(), "factor");
        factor.resize(static_cast<size_t>(n));
        for (int64_t i = 0; i < n; ++i)
            factor[static_cast<size_t>(i)] = (packed[static_cast<size_t>(i / 8)] >> (i % 8)) & 1u;
    }
    return ds;
}

// In-place per-column standardization to mean 0, unit variance (population
// variance). Constant columns are centered and left at zero.
inline void standardize_columns(Tensor& features) {
    const int64_t n = features.rows(), d = features.cols();
    for (int64_t j = 0; j < d; ++j) {
        double mean = 0.0;
        for (int64_t i = 0; i < n; ++i) mean += features.at(i, j);
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (int64_t i = 0; i < n; ++i) {
            const double c = features.at(i, j) - mean;
            var += c * c;
        }
        var /= static_cast<double>(n);
        const double inv = var > 1e-24 ? 1.0 / std::sqrt(var) : 0.0;
        for (int64_t i = 0; i < n; ++i)
            features.at(i, j) = static_cast<float>((features.at(i, j) - mean) * inv);
    }
}

inline Dataset load_csv(const std::string& path, bool has_header) {
    std::ifstream in(path);
    if (!in) throw io_error("csv: cannot open '" + path + "'");

    std::vector<std::vector<float>> rows;
    std::string line;
    int64_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line_no == 1 && has_header) continue;
        if (line.empty()) continue;
        std::vector<float> row;
        size_t pos = 0;
        while (true) {
            const size_t comma = line.find(',', pos);
            const std::string_view field(line.data() + pos,
                                         (comma == std::string::npos ? line.size() : comma) - pos);
            float v = 0.0f;
            const auto [ptr, ec] = std::from_chars(field.begin(), field.end(), v);
            if (ec != std::errc() || ptr != field.end())
                throw parse_error("csv: line " + std::to_string(line_no) + ": bad numeric field '" +
                                  std::string(field) + "'");
            row.push_back(v);
            if (comma == std::string::npos) break;
            pos = comma + 1;
        }
        if (!rows.empty() && row.size() != rows.front().size())
            throw parse_error("csv: line " + std::to_string(line_no) + ": expected " +
                              std::to_string(rows.front().size()) + " fields, got " +
                              std::to_string(row.size()));
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw parse_error("csv: no data rows");

    Dataset ds;
    const int64_t n = static_cast<int64_t>(rows.size());
    const int64_t d = static_cast<int64_t>(rows.front().size());
    ds.features = Tensor::zeros({n, d});
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < d; ++j) ds.features.at(i, j) = rows[static_cast<size_t>(i)][static_cast<size_t>(j)];
    ds.ids.resize(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) ds.ids[static_cast<size_t>(i)] = i;
    return ds;
}

// Feature-matrix ingestion for externally computed embeddings. Sniffs the
// TDS magic, otherwise parses as CSV.
inline Dataset load_features(const std::string& path, bool standardize = false, bool has_header = false) {
    bool is_tds = false;
    {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw io_error("load_features: cannot open '" + path + "'");
        char magic[4] = {};
        in.read(magic, 4);
        is_tds = in.gcount() == 4 && std::memcmp(magic, "TDS1", 4) == 0;
    }
    Dataset ds = is_tds ? load_tds(path) : load_csv(path, has_header);
    if (standardize) standardize_columns(ds.features);
    return ds;
}

}  // namespace taskdisc
