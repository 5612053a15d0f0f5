/**
 * @file support.hpp
 * @brief Shared fixtures and small random generators for the unit tests
 */
#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "uvstyle/encoder.hpp"
#include "uvstyle/geom.hpp"
#include "uvstyle/style.hpp"
#include "uvstyle/synth.hpp"

namespace testing_support {

using namespace uvstyle;

inline const WeightBundle& default_weights() {
    static const WeightBundle w = init_weights(EncoderSpec{});
    return w;
}

inline StyleSpec random_style(std::mt19937_64& rng) {
    const auto styles = default_styles();
    return styles[std::uniform_int_distribution<std::size_t>(0, styles.size() - 1)(rng)];
}

/// A generated solid with random content class and style.
inline UVSolid random_solid(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const auto c = kAllContents[std::uniform_int_distribution<std::size_t>(0, kAllContents.size() - 1)(rng)];
    auto s = generate_solid(make_profile(c, seed), random_style(rng), seed);
    s.solid_id = "r" + std::to_string(seed);
    return s;
}

/// A six-face box (rectangle profile), optionally bumpy, the cheapest solid to run through the encoder.
inline UVSolid small_box(std::uint64_t seed, bool bumpy = false) {
    StyleSpec st{"t", 0.0, bumpy ? 0.04 : 0.0, bumpy ? 2.5 : 0.0, 0.6, false};
    auto s = generate_solid(make_profile(ContentClass::Rectangle, seed), st, seed);
    s.solid_id = "box" + std::to_string(seed);
    return s;
}

/// Small labeled dataset: two contents x four styles x `per_cell`.
inline Dataset small_dataset(int per_cell = 1, std::uint64_t seed = 3) {
    DatasetConfig c = default_config(per_cell, seed);
    c.contents = {ContentClass::Rectangle, ContentClass::LShape};
    return generate_dataset(c);
}

inline std::vector<double> random_vector(std::mt19937_64& rng, std::size_t n, double lo = -1, double hi = 1) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(n);
    for (auto& x : v) x = u(rng);
    return v;
}

/// A random point of the probability simplex (normalized exponentials).
inline LayerWeights random_simplex(std::mt19937_64& rng, int L) {
    std::exponential_distribution<double> e(1.0);
    std::vector<double> w(L);
    double s = 0;
    for (auto& x : w) s += (x = e(rng));
    for (auto& x : w) x /= s;
    return {w};
}

/// Embedding with random layer vectors of the given lengths.
inline GramEmbedding random_embedding(std::mt19937_64& rng, const std::vector<int>& lengths,
                                      const std::string& fp = "enc-test") {
    GramEmbedding g;
    g.fingerprint = fp;
    g.policy = "none";
    for (int n : lengths) {
        g.layers.push_back(random_vector(rng, n));
        g.n_used.push_back(1);
    }
    return g;
}

/// Fresh empty directory under the system temp path.
inline std::filesystem::path temp_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("uvstyle_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace testing_support
