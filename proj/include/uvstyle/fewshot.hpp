/**
 * @file fewshot.hpp
 * @brief Layer energies from user exemplars and simplex-constrained layer-weight optimization
 *
 * For positives T and negatives T' the energy of layer l is
 *
 *   E_l = c1 * sum_{i != j in T} D_l(t_i, t_j) - c2 * sum_{T x T'} D_l(t, t')
 *
 * with c1 = 1 / (|T| (|T| - 1)) and c2 = 1 / (|T| |T'|) (empty sums are zero).
 * The weight objective sum_l w_l E_l is linear on the simplex, so its minimum
 * sits on the face spanned by the minimal-energy layers.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "uvstyle/errors.hpp"
#include "uvstyle/index.hpp"
#include "uvstyle/style.hpp"

namespace uvstyle {

struct ExampleSelection {
    std::vector<std::string> positives;
    std::vector<std::string> negatives;
    int auto_negative_count = 0;
    std::uint64_t seed = 0;
};

struct EnergyVector {
    std::vector<double> E;
    double c1 = 0, c2 = 0;
    int num_positives = 0, num_negatives = 0;
    std::vector<std::string> negatives_used;  ///< explicit negatives followed by sampled ones
};

/// Draws `count` ids uniformly without replacement from the store, never
/// picking an id in `exclude`. Returned in draw order.
inline std::vector<std::size_t> sample_negatives(const EmbeddingStore& store, const std::set<std::size_t>& exclude,
                                                 int count, std::uint64_t seed) {
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < store.size(); ++i)
        if (!exclude.count(i)) pool.push_back(i);
    if (count > static_cast<int>(pool.size()))
        throw ContractError("cannot draw " + std::to_string(count) + " auto-negatives from " +
                            std::to_string(pool.size()) + " remaining solids");
    std::mt19937_64 rng(seed);
    // Partial Fisher-Yates.
    for (int i = 0; i < count; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
        std::swap(pool[i], pool[pick(rng)]);
    }
    pool.resize(count);
    return pool;
}

/// Energies from index sets and any per-layer distance D(l, i, j).
template <class LayerDist>
EnergyVector energies_from(const std::vector<std::size_t>& pos, const std::vector<std::size_t>& neg, int L,
                           const LayerDist& D) {
    if (pos.empty()) throw ContractError("at least one positive example is required");
    EnergyVector e;
    e.E.assign(L, 0.0);
    e.num_positives = static_cast<int>(pos.size());
    e.num_negatives = static_cast<int>(neg.size());
    const double P = static_cast<double>(pos.size());
    e.c1 = pos.size() > 1 ? 1.0 / (P * (P - 1)) : 0.0;
    e.c2 = neg.empty() ? 0.0 : 1.0 / (P * static_cast<double>(neg.size()));
    for (int l = 0; l < L; ++l) {
        double cohesion = 0, separation = 0;
        for (std::size_t a = 0; a < pos.size(); ++a)
            for (std::size_t b = 0; b < pos.size(); ++b)
                if (a != b) cohesion += D(l, pos[a], pos[b]);
        for (auto t : pos)
            for (auto u : neg) separation += D(l, t, u);
        e.E[l] = e.c1 * cohesion - e.c2 * separation;
    }
    return e;
}

namespace detail {

struct ResolvedSelection {
    std::vector<std::size_t> pos, neg;
};

inline ResolvedSelection resolve(const ExampleSelection& sel, const EmbeddingStore& store) {
    if (sel.positives.empty()) throw ContractError("at least one positive example is required");
    if (sel.auto_negative_count < 0) throw ContractError("auto_negative_count must be >= 0");
    ResolvedSelection r;
    std::set<std::size_t> seen;
    for (const auto& id : sel.positives) {
        const auto i = store.require(id);
        if (!seen.insert(i).second) throw ContractError("solid \"" + id + "\" listed twice");
        r.pos.push_back(i);
    }
    for (const auto& id : sel.negatives) {
        const auto i = store.require(id);
        if (!seen.insert(i).second)
            throw ContractError("solid \"" + id + "\" is both positive and negative (or listed twice)");
        r.neg.push_back(i);
    }
    if (sel.auto_negative_count > 0) {
        for (auto i : sample_negatives(store, seen, sel.auto_negative_count, sel.seed)) r.neg.push_back(i);
    }
    return r;
}

}  // namespace detail

inline EnergyVector layer_energies(const ExampleSelection& sel, const EmbeddingStore& store) {
    const auto r = detail::resolve(sel, store);
    auto e = energies_from(r.pos, r.neg, store.num_layers(),
                           [&](int l, std::size_t i, std::size_t j) { return store.layer_distance(i, j, l); });
    for (auto i : r.neg) e.negatives_used.push_back(store.ids()[i]);
    return e;
}

inline void check_energies(const std::vector<double>& E) {
    if (E.empty()) throw ContractError("energy vector is empty");
    for (std::size_t l = 0; l < E.size(); ++l)
        if (!std::isfinite(E[l])) throw ContractError("energy " + std::to_string(l) + " is not finite");
}

/// Closed-form minimizer: uniform over the layers whose energy is minimal. Ties
/// are detected relative to the energy range, so scaling or shifting E never
/// changes the answer; all-equal energies give uniform weights.
inline LayerWeights optimize_weights(const std::vector<double>& E) {
    check_energies(E);
    const auto [lo, hi] = std::minmax_element(E.begin(), E.end());
    const double tol = 1e-12 * (*hi - *lo);
    std::vector<double> w(E.size(), 0.0);
    int ties = 0;
    for (double e : E) ties += (e - *lo <= tol) ? 1 : 0;
    for (std::size_t l = 0; l < E.size(); ++l)
        if (E[l] - *lo <= tol) w[l] = 1.0 / ties;
    return {w};
}

inline LayerWeights optimize_weights(const EnergyVector& e) { return optimize_weights(e.E); }

/// Euclidean projection onto the probability simplex (sort-based).
inline std::vector<double> project_to_simplex(const std::vector<double>& v) {
    std::vector<double> u = v;
    std::sort(u.begin(), u.end(), std::greater<>());
    double cum = 0, theta = 0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        cum += u[i];
        const double t = (cum - 1.0) / static_cast<double>(i + 1);
        if (u[i] - t > 0) theta = t;
    }
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::max(v[i] - theta, 0.0);
    return out;
}

inline double user_loss(const std::vector<double>& E, const LayerWeights& w) {
    double s = 0;
    for (std::size_t l = 0; l < E.size(); ++l) s += w.w[l] * E[l];
    return s;
}

/// Iterative solver: projected gradient descent from uniform weights with a
/// geometrically growing step. Energies are shifted so their minimum is zero;
/// once step * range exceeds 1e12 every layer whose energy is more than
/// range * 1e-12 above the minimum has been driven to zero weight.
inline LayerWeights optimize_weights_numeric(const std::vector<double>& E, int max_iter = 2000) {
    check_energies(E);
    const auto [lo, hi] = std::minmax_element(E.begin(), E.end());
    const double range = *hi - *lo;
    std::vector<double> w(E.size(), 1.0 / static_cast<double>(E.size()));
    if (range == 0) return {w};
    std::vector<double> shifted(E.size());
    for (std::size_t l = 0; l < E.size(); ++l) shifted[l] = E[l] - *lo;
    double step = 0.1 / range;
    for (int it = 0; it < max_iter && step * range <= 1e12; ++it, step *= 1.5) {
        std::vector<double> y(w.size());
        for (std::size_t l = 0; l < w.size(); ++l) y[l] = w[l] - step * shifted[l];
        w = project_to_simplex(y);
    }
    const double s = std::accumulate(w.begin(), w.end(), 0.0);
    for (auto& x : w) x /= s;
    return {w};
}

struct FewshotResult {
    LayerWeights weights;
    EnergyVector energies;
    std::string query_id;
    RankedResults results;
};

/// Energies, optimal weights and the top-k ranking of `target_id` (defaults to
/// the first positive) under those weights.
inline FewshotResult fewshot_query(const ExampleSelection& sel, const std::optional<std::string>& target_id, int k,
                                   const EmbeddingStore& store, bool exclude_self = false) {
    FewshotResult r;
    r.energies = layer_energies(sel, store);
    r.weights = optimize_weights(r.energies);
    r.query_id = target_id.value_or(sel.positives.front());
    r.results = topk(store, r.query_id, r.weights, k, exclude_self);
    return r;
}

}  // namespace uvstyle
