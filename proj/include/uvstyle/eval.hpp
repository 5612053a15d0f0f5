/**
 * @file eval.hpp
 * @brief Evaluation harnesses: per-layer linear probes with stratified k-fold CV,
 *        the few-shot Precision@10 protocol, and normalization/PCA ablations
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "uvstyle/encoder.hpp"
#include "uvstyle/errors.hpp"
#include "uvstyle/fewshot.hpp"
#include "uvstyle/geom.hpp"
#include "uvstyle/index.hpp"
#include "uvstyle/io.hpp"
#include "uvstyle/pca.hpp"
#include "uvstyle/style.hpp"

namespace uvstyle {

// ---------------------------------------------------------------------------
// Folds

/// Stratified fold assignment, a pure function of (seed, ids, labels). Within
/// each class the members are ordered by id, shuffled with a class-specific seed
/// and dealt round-robin, continuing the rotation across classes so fold sizes
/// stay balanced.
inline std::vector<int> stratified_folds(const std::vector<std::string>& ids, const std::vector<std::string>& labels,
                                         int folds, std::uint64_t seed) {
    if (ids.size() != labels.size()) throw ContractError("ids and labels differ in length");
    if (folds < 2) throw ContractError("need at least 2 folds");
    std::map<std::string, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < ids.size(); ++i) by_class[labels[i]].push_back(i);
    std::vector<int> fold(ids.size(), -1);
    int next = 0;
    for (auto& [label, members] : by_class) {
        std::sort(members.begin(), members.end(), [&](std::size_t a, std::size_t b) { return ids[a] < ids[b]; });
        std::mt19937_64 rng(derive_seed(seed, label));
        for (std::size_t i = members.size(); i > 1; --i) {
            std::uniform_int_distribution<std::size_t> pick(0, i - 1);
            std::swap(members[i - 1], members[pick(rng)]);
        }
        for (auto m : members) {
            fold[m] = next;
            next = (next + 1) % folds;
        }
    }
    return fold;
}

// ---------------------------------------------------------------------------
// Multinomial logistic regression with L2 penalty

struct LogisticModel {
    int classes = 0, dim = 0;
    std::vector<double> W;  ///< classes x dim
    std::vector<double> b;
    int iterations = 0;
    double grad_norm = 0;

    int predict(const double* x) const {
        int best = 0;
        double best_v = -1e300;
        for (int k = 0; k < classes; ++k) {
            double v = b[k];
            const double* w = W.data() + std::size_t(k) * dim;
            for (int j = 0; j < dim; ++j) v += w[j] * x[j];
            if (v > best_v) {
                best_v = v;
                best = k;
            }
        }
        return best;
    }
};

struct LogisticOptions {
    double l2 = 1.0;
    int max_iter = 500;
    double grad_tol = 1e-6;
    int history = 10;
};

namespace detail {

/// Mean cross-entropy + (l2/2)|W|^2 and its gradient; params = [W | b].
inline double logistic_loss(const std::vector<double>& X, const std::vector<int>& y, int n, int d, int K, double l2,
                            const std::vector<double>& params, std::vector<double>& grad) {
    grad.assign(params.size(), 0.0);
    const double* W = params.data();
    const double* b = params.data() + std::size_t(K) * d;
    double* gW = grad.data();
    double* gb = grad.data() + std::size_t(K) * d;
    std::vector<double> z(K);
    double loss = 0;
    for (int i = 0; i < n; ++i) {
        const double* x = X.data() + std::size_t(i) * d;
        double zmax = -1e300;
        for (int k = 0; k < K; ++k) {
            double v = b[k];
            const double* w = W + std::size_t(k) * d;
            for (int j = 0; j < d; ++j) v += w[j] * x[j];
            z[k] = v;
            zmax = std::max(zmax, v);
        }
        double se = 0;
        for (int k = 0; k < K; ++k) se += std::exp(z[k] - zmax);
        const double lse = zmax + std::log(se);
        loss += lse - z[y[i]];
        for (int k = 0; k < K; ++k) {
            const double pk = std::exp(z[k] - lse) - (k == y[i] ? 1.0 : 0.0);
            if (pk == 0.0) continue;
            double* g = gW + std::size_t(k) * d;
            for (int j = 0; j < d; ++j) g[j] += pk * x[j];
            gb[k] += pk;
        }
    }
    loss /= n;
    for (auto& g : grad) g /= n;
    double reg = 0;
    for (std::size_t i = 0; i < std::size_t(K) * d; ++i) {
        reg += W[i] * W[i];
        gW[i] += l2 * W[i];
    }
    return loss + 0.5 * l2 * reg;
}

}  // namespace detail

/// Fits by L-BFGS with Armijo backtracking from zero weights; stops when the
/// gradient norm drops to `grad_tol` or after `max_iter` iterations.
inline LogisticModel fit_logistic(const std::vector<double>& X, const std::vector<int>& y, int d, int classes,
                                  const LogisticOptions& opt) {
    const int n = static_cast<int>(y.size());
    const int K = classes;
    const std::size_t P = std::size_t(K) * d + K;
    std::vector<double> x(P, 0.0), g, xn, gn;
    double f = detail::logistic_loss(X, y, n, d, K, opt.l2, x, g);
    std::vector<std::vector<double>> S, Yv;
    std::vector<double> rho;
    auto norm = [](const std::vector<double>& v) { return std::sqrt(dot(v, v)); };

    LogisticModel m;
    m.classes = K;
    m.dim = d;
    int it = 0;
    for (; it < opt.max_iter && norm(g) > opt.grad_tol; ++it) {
        // Two-loop recursion.
        std::vector<double> q = g;
        std::vector<double> alpha(S.size());
        for (int i = static_cast<int>(S.size()) - 1; i >= 0; --i) {
            alpha[i] = rho[i] * dot(S[i], q);
            for (std::size_t j = 0; j < P; ++j) q[j] -= alpha[i] * Yv[i][j];
        }
        if (!S.empty()) {
            const double gamma = dot(S.back(), Yv.back()) / dot(Yv.back(), Yv.back());
            for (auto& v : q) v *= gamma;
        }
        for (std::size_t i = 0; i < S.size(); ++i) {
            const double beta = rho[i] * dot(Yv[i], q);
            for (std::size_t j = 0; j < P; ++j) q[j] += S[i][j] * (alpha[i] - beta);
        }
        std::vector<double> dir(P);
        for (std::size_t j = 0; j < P; ++j) dir[j] = -q[j];
        double slope = dot(dir, g);
        if (!(slope < 0)) {
            for (std::size_t j = 0; j < P; ++j) dir[j] = -g[j];
            slope = dot(dir, g);
            S.clear();
            Yv.clear();
            rho.clear();
        }
        double step = S.empty() ? 1.0 / std::max(1.0, norm(g)) : 1.0;
        double fn = f;
        bool accepted = false;
        for (int ls = 0; ls < 60; ++ls) {
            xn = x;
            for (std::size_t j = 0; j < P; ++j) xn[j] += step * dir[j];
            fn = detail::logistic_loss(X, y, n, d, K, opt.l2, xn, gn);
            if (fn <= f + 1e-4 * step * slope) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break;
        std::vector<double> s(P), yy(P);
        for (std::size_t j = 0; j < P; ++j) {
            s[j] = xn[j] - x[j];
            yy[j] = gn[j] - g[j];
        }
        const double sy = dot(s, yy);
        if (sy > 1e-12 * dot(yy, yy)) {
            S.push_back(std::move(s));
            Yv.push_back(std::move(yy));
            rho.push_back(1.0 / sy);
            if (static_cast<int>(S.size()) > opt.history) {
                S.erase(S.begin());
                Yv.erase(Yv.begin());
                rho.erase(rho.begin());
            }
        }
        x.swap(xn);
        g.swap(gn);
        f = fn;
    }
    m.W.assign(x.begin(), x.begin() + std::ptrdiff_t(K) * d);
    m.b.assign(x.begin() + std::ptrdiff_t(K) * d, x.end());
    m.iterations = it;
    m.grad_norm = norm(g);
    return m;
}

// ---------------------------------------------------------------------------
// Metrics

inline double accuracy(const std::vector<int>& truth, const std::vector<int>& pred) {
    if (truth.empty()) return 0;
    int hit = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) hit += truth[i] == pred[i] ? 1 : 0;
    return static_cast<double>(hit) / static_cast<double>(truth.size());
}

/// Support-weighted mean of per-class F1 (classes absent from `truth` carry no weight).
inline double weighted_f1(const std::vector<int>& truth, const std::vector<int>& pred, int classes) {
    double total = 0;
    for (int c = 0; c < classes; ++c) {
        int tp = 0, fp = 0, fn = 0, support = 0;
        for (std::size_t i = 0; i < truth.size(); ++i) {
            const bool t = truth[i] == c, p = pred[i] == c;
            support += t;
            tp += t && p;
            fp += !t && p;
            fn += t && !p;
        }
        if (support == 0) continue;
        const double denom = 2.0 * tp + fp + fn;
        const double f1 = denom > 0 ? 2.0 * tp / denom : 0.0;
        total += f1 * support;
    }
    return truth.empty() ? 0.0 : total / static_cast<double>(truth.size());
}

// ---------------------------------------------------------------------------
// Linear probe

inline const std::vector<double> kDefaultL2Grid{1e-3, 1e-2, 1e-1, 1.0, 10.0};

struct ProbeScore {
    double l2 = 0;
    double acc_mean = 0, acc_std = 0;
    double f1_mean = 0, f1_std = 0;
    std::vector<double> fold_acc, fold_f1;
};

struct ProbeReport {
    int layer = -1;
    std::uint64_t fold_seed = 0;
    int folds = 5;
    std::vector<std::string> classes;
    ProbeScore best;                 ///< the regularization strength with the highest mean accuracy
    std::vector<ProbeScore> per_l2;  ///< one entry per grid value
};

namespace detail {

inline std::pair<double, double> mean_std(const std::vector<double>& v) {
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double s = 0;
    for (double x : v) s += (x - m) * (x - m);
    return {m, std::sqrt(s / static_cast<double>(v.size()))};
}

/// Centers on the training mean and divides by the training RMS row norm, a
/// rotation-invariant scaling so that orthogonal changes of basis leave the
/// probe unchanged.
inline void scale_features(std::vector<double>& train, std::vector<double>& test, int d) {
    const std::size_t ntr = train.size() / d, nte = test.size() / d;
    std::vector<double> mu(d, 0.0);
    for (std::size_t i = 0; i < ntr; ++i)
        for (int j = 0; j < d; ++j) mu[j] += train[i * d + j];
    for (auto& v : mu) v /= static_cast<double>(ntr);
    double ss = 0;
    for (std::size_t i = 0; i < ntr; ++i)
        for (int j = 0; j < d; ++j) ss += (train[i * d + j] - mu[j]) * (train[i * d + j] - mu[j]);
    double scale = std::sqrt(ss / static_cast<double>(ntr));
    if (!(scale > 0)) scale = 1.0;
    for (std::size_t i = 0; i < ntr; ++i)
        for (int j = 0; j < d; ++j) train[i * d + j] = (train[i * d + j] - mu[j]) / scale;
    for (std::size_t i = 0; i < nte; ++i)
        for (int j = 0; j < d; ++j) test[i * d + j] = (test[i * d + j] - mu[j]) / scale;
}

}  // namespace detail

/// Cross-validated multinomial logistic regression on one feature matrix
/// (rows = examples). Folds are stratified by label.
inline ProbeReport linear_probe(const std::vector<std::vector<double>>& features, const std::vector<std::string>& ids,
                                const std::vector<std::string>& labels, const std::vector<double>& l2_grid,
                                int folds, std::uint64_t seed, int max_iter = 500) {
    if (features.size() != labels.size() || ids.size() != labels.size())
        throw ContractError("features, ids and labels differ in length");
    if (l2_grid.empty()) throw ContractError("empty L2 grid");
    std::set<std::string> cls(labels.begin(), labels.end());
    if (cls.size() < 2) throw ContractError("linear probe needs at least 2 classes");
    std::map<std::string, int> count;
    for (const auto& l : labels) ++count[l];
    for (const auto& [l, c] : count)
        if (c < folds)
            throw ContractError("class \"" + l + "\" has " + std::to_string(c) + " examples, fewer than " +
                                std::to_string(folds) + " folds");

    ProbeReport rep;
    rep.classes.assign(cls.begin(), cls.end());
    rep.fold_seed = seed;
    rep.folds = folds;
    std::map<std::string, int> class_index;
    for (std::size_t i = 0; i < rep.classes.size(); ++i) class_index[rep.classes[i]] = static_cast<int>(i);
    std::vector<int> y;
    for (const auto& l : labels) y.push_back(class_index[l]);
    const int K = static_cast<int>(rep.classes.size());
    const int d = static_cast<int>(features.front().size());
    const auto fold = stratified_folds(ids, labels, folds, seed);

    for (double l2 : l2_grid) {
        ProbeScore sc;
        sc.l2 = l2;
        for (int f = 0; f < folds; ++f) {
            std::vector<double> Xtr, Xte;
            std::vector<int> ytr, yte;
            for (std::size_t i = 0; i < features.size(); ++i) {
                auto& X = fold[i] == f ? Xte : Xtr;
                X.insert(X.end(), features[i].begin(), features[i].end());
                (fold[i] == f ? yte : ytr).push_back(y[i]);
            }
            detail::scale_features(Xtr, Xte, d);
            LogisticOptions opt;
            opt.l2 = l2;
            opt.max_iter = max_iter;
            const auto model = fit_logistic(Xtr, ytr, d, K, opt);
            std::vector<int> pred;
            for (std::size_t i = 0; i < yte.size(); ++i) pred.push_back(model.predict(Xte.data() + i * d));
            sc.fold_acc.push_back(accuracy(yte, pred));
            sc.fold_f1.push_back(weighted_f1(yte, pred, K));
        }
        std::tie(sc.acc_mean, sc.acc_std) = detail::mean_std(sc.fold_acc);
        std::tie(sc.f1_mean, sc.f1_std) = detail::mean_std(sc.fold_f1);
        rep.per_l2.push_back(sc);
    }
    rep.best = rep.per_l2.front();
    for (const auto& s : rep.per_l2)
        if (s.acc_mean > rep.best.acc_mean) rep.best = s;
    return rep;
}

/// Probe on one layer of a set of embeddings.
inline ProbeReport linear_probe(const std::vector<GramEmbedding>& embeddings, const std::vector<std::string>& ids,
                                const std::vector<std::string>& labels, int layer,
                                const std::vector<double>& l2_grid = kDefaultL2Grid, int folds = 5,
                                std::uint64_t seed = 0) {
    std::vector<std::vector<double>> X;
    for (const auto& e : embeddings) X.push_back(e.layers.at(layer));
    auto r = linear_probe(X, ids, labels, l2_grid, folds, seed);
    r.layer = layer;
    return r;
}

// ---------------------------------------------------------------------------
// Few-shot Precision@10

struct PrecisionCell {
    std::string style;
    int num_positives = 0, num_negatives = 0;
    int trials = 0;
    double mean_precision = 0;
    double baseline_precision = 0;
    double gain_ratio = 0;  ///< mean_precision / baseline_precision
    std::vector<double> trial_precision;
    std::vector<double> trial_gain;
    std::vector<std::uint64_t> trial_seeds;
    std::vector<LayerWeights> trial_weights;
};

/// Mean over the members of `style` of the fraction of their k nearest
/// neighbours (self excluded) that share the label.
inline double mean_precision_at_k(const LayerDistanceTable& table, const std::vector<std::string>& labels,
                                  const std::string& style, const LayerWeights& w, const std::vector<std::string>& ids,
                                  int k = 10) {
    const std::size_t n = table.size();
    double total = 0;
    int members = 0;
    std::vector<Neighbor> cand;
    for (std::size_t q = 0; q < n; ++q) {
        if (labels[q] != style) continue;
        cand.clear();
        for (std::size_t j = 0; j < n; ++j)
            if (j != q) cand.push_back({ids[j], table.weighted(q, j, w)});
        const std::size_t kk = std::min<std::size_t>(k, cand.size());
        std::partial_sort(cand.begin(), cand.begin() + std::ptrdiff_t(kk), cand.end(), neighbor_less);
        int hit = 0;
        for (std::size_t r = 0; r < kk; ++r) {
            // ids are unique, so map back through the store order.
            const auto it = std::find(ids.begin(), ids.end(), cand[r].id);
            hit += labels[std::size_t(it - ids.begin())] == style ? 1 : 0;
        }
        total += static_cast<double>(hit) / static_cast<double>(k);
        ++members;
    }
    return members ? total / members : 0.0;
}

/// One cell of the Precision@10 grid: `trials` draws of `num_pos` positives from
/// the style class and `num_neg` negatives from everything else, each compared
/// against the uniform-weight baseline.
inline PrecisionCell precision_at_10(const EmbeddingStore& store, const LayerDistanceTable& table,
                                     const std::vector<std::string>& labels, const std::string& style, int num_pos,
                                     int num_neg, int trials = 20, std::uint64_t seed = 0, int k = 10) {
    if (labels.size() != store.size()) throw ContractError("one label per store entry required");
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] == style) members.push_back(i);
    if (num_pos < 1) throw ContractError("at least one positive is required");
    if (static_cast<int>(members.size()) < num_pos + 1)
        throw ContractError("style \"" + style + "\" has " + std::to_string(members.size()) + " members, needs " +
                            std::to_string(num_pos + 1));
    if (static_cast<int>(store.size()) < k + 1)
        throw ContractError("corpus has " + std::to_string(store.size()) + " entries, needs at least " +
                            std::to_string(k + 1));

    const int L = store.num_layers();
    PrecisionCell cell;
    cell.style = style;
    cell.num_positives = num_pos;
    cell.num_negatives = num_neg;
    cell.trials = trials;
    cell.baseline_precision = mean_precision_at_k(table, labels, style, LayerWeights::uniform(L), store.ids(), k);

    for (int t = 0; t < trials; ++t) {
        const auto ts = derive_seed(seed, style + "#" + std::to_string(num_pos) + "/" + std::to_string(num_neg) +
                                              "#" + std::to_string(t));
        std::mt19937_64 rng(ts);
        std::vector<std::size_t> pool = members;
        for (int i = 0; i < num_pos; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
            std::swap(pool[i], pool[pick(rng)]);
        }
        std::vector<std::size_t> pos(pool.begin(), pool.begin() + num_pos);
        std::set<std::size_t> excl(pos.begin(), pos.end());
        const auto neg = sample_negatives(store, excl, num_neg, mix64(ts));
        const auto e = energies_from(pos, neg, L, table);
        const auto w = optimize_weights(e);
        const double p = mean_precision_at_k(table, labels, style, w, store.ids(), k);
        cell.trial_precision.push_back(p);
        cell.trial_gain.push_back(cell.baseline_precision > 0 ? p / cell.baseline_precision : (p > 0 ? 1e300 : 1.0));
        cell.trial_seeds.push_back(ts);
        cell.trial_weights.push_back(w);
    }
    cell.mean_precision =
        std::accumulate(cell.trial_precision.begin(), cell.trial_precision.end(), 0.0) / std::max(1, trials);
    // The baseline is fixed across trials, so the mean of per-trial ratios equals the ratio of
    // means; averaging ratios keeps the (1, 0) cell at exactly 1.
    cell.gain_ratio = std::accumulate(cell.trial_gain.begin(), cell.trial_gain.end(), 0.0) / std::max(1, trials);
    return cell;
}

struct PrecisionReport {
    std::string style;
    std::uint64_t seed = 0;
    std::vector<PrecisionCell> cells;

    /// Long format: style,num_positives,num_negatives,metric,value
    std::string to_csv() const {
        std::ostringstream os;
        os.precision(10);
        os << "style,num_positives,num_negatives,metric,value\n";
        for (const auto& c : cells) {
            const std::string key = c.style + "," + std::to_string(c.num_positives) + "," +
                                    std::to_string(c.num_negatives) + ",";
            os << key << "mean_precision," << c.mean_precision << "\n";
            os << key << "baseline_precision," << c.baseline_precision << "\n";
            os << key << "gain_ratio," << c.gain_ratio << "\n";
        }
        return os.str();
    }

    json to_json() const;
};

/// Every (num_pos, num_neg) combination for one style class.
inline PrecisionReport precision_grid(const EmbeddingStore& store, const std::vector<std::string>& labels,
                                      const std::string& style, const std::vector<int>& positives,
                                      const std::vector<int>& negatives, int trials = 20, std::uint64_t seed = 0) {
    const LayerDistanceTable table(store);
    PrecisionReport rep;
    rep.style = style;
    rep.seed = seed;
    for (int p : positives)
        for (int n : negatives) rep.cells.push_back(precision_at_10(store, table, labels, style, p, n, trials, seed));
    return rep;
}

/// Two-sided sign test over trials (ties dropped): probability of a split at
/// least this uneven under a fair coin. A stand-in for an unspecified test.
inline double sign_test_p(const std::vector<double>& gains) {
    int up = 0, down = 0;
    for (double g : gains) {
        if (g > 1.0) ++up;
        else if (g < 1.0) ++down;
    }
    const int n = up + down;
    if (n == 0) return 1.0;
    const int lo = std::min(up, down);
    double tail = 0;
    for (int i = 0; i <= lo; ++i) tail += std::exp(std::lgamma(n + 1) - std::lgamma(i + 1) - std::lgamma(n - i + 1) - n * std::log(2.0));
    return std::min(1.0, 2 * tail);
}

inline json PrecisionReport::to_json() const {
    json arr = json::array();
    for (const auto& c : cells) {
        json weights = json::array();
        for (const auto& w : c.trial_weights) weights.push_back(w.w);
        int improved = 0;
        for (double g : c.trial_gain) improved += g > 1.0 ? 1 : 0;
        arr.push_back({{"num_positives", c.num_positives},
                       {"num_negatives", c.num_negatives},
                       {"trials", c.trials},
                       {"mean_precision", c.mean_precision},
                       {"baseline_precision", c.baseline_precision},
                       {"gain_ratio", c.gain_ratio},
                       {"trials_improved", improved},
                       {"sign_test_p", sign_test_p(c.trial_gain)},
                       {"trial_precision", c.trial_precision},
                       {"trial_seeds", c.trial_seeds},
                       {"trial_weights", weights}});
    }
    return {{"style", style}, {"seed", seed}, {"cells", arr}};
}

// ---------------------------------------------------------------------------
// Ablations

struct AblationRow {
    int layer = 0;
    std::string policy;
    int dims = 0;  ///< dimension fed to the probe
    std::string reduction;
    ProbeScore score;
};

struct AblationReport {
    std::vector<AblationRow> rows;
    std::vector<std::string> notes;

    /// Long format: layer,policy,dims,metric,value
    std::string to_csv() const {
        std::ostringstream os;
        os.precision(10);
        os << "layer,policy,dims,metric,value\n";
        for (const auto& r : rows) {
            os << r.layer << ',' << r.policy << ',' << r.dims << ",accuracy_mean," << r.score.acc_mean << "\n";
            os << r.layer << ',' << r.policy << ',' << r.dims << ",accuracy_std," << r.score.acc_std << "\n";
            os << r.layer << ',' << r.policy << ',' << r.dims << ",weighted_f1_mean," << r.score.f1_mean << "\n";
            os << r.layer << ',' << r.policy << ',' << r.dims << ",weighted_f1_std," << r.score.f1_std << "\n";
            os << r.layer << ',' << r.policy << ',' << r.dims << ",l2," << r.score.l2 << "\n";
        }
        return os.str();
    }

    json to_json() const {
        json rows_j = json::array();
        for (const auto& r : rows)
            rows_j.push_back({{"layer", r.layer},
                              {"policy", r.policy},
                              {"dims", r.dims},
                              {"reduction", r.reduction},
                              {"accuracy_mean", r.score.acc_mean},
                              {"accuracy_std", r.score.acc_std},
                              {"weighted_f1_mean", r.score.f1_mean},
                              {"weighted_f1_std", r.score.f1_std},
                              {"l2", r.score.l2}});
        return {{"rows", rows_j}, {"notes", notes}};
    }
};

struct AblationOptions {
    std::vector<NormKind> policies{NormKind::None, NormKind::InstanceNorm, NormKind::FaceRecenter};
    std::vector<int> reductions{0};  ///< 0 = raw Grams, otherwise a PCA target dimension
    std::vector<int> layers;         ///< empty = all
    std::vector<double> l2_grid = kDefaultL2Grid;
    int folds = 5;
    std::uint64_t seed = 0;
};

/// Probe every (layer, policy, reduction) combination. Face re-centering is
/// skipped with a note on per-face layers. The policy under test is applied to
/// every layer where it is valid; other layers are left un-normalized.
inline AblationReport ablation_sweep(const Dataset& d, const WeightBundle& w, const AblationOptions& opt) {
    AblationReport rep;
    std::vector<std::string> ids, labels;
    for (const auto& s : d.solids) {
        if (!s.labels) throw ContractError("ablation needs style labels on every solid");
        ids.push_back(s.solid_id);
        labels.push_back(s.labels->style);
    }
    const int L = w.spec.num_layers();
    std::vector<int> layers = opt.layers;
    if (layers.empty())
        for (int l = 0; l < L; ++l) layers.push_back(l);

    // Forward passes are shared across policies.
    std::vector<ActivationSet> acts;
    for (const auto& s : d.solids) acts.push_back(forward(s, w));

    for (auto kind : opt.policies) {
        NormalizationPolicy pol;
        for (int l = 0; l < L; ++l)
            pol.per_layer.push_back(kind == NormKind::FaceRecenter && !w.spec.spatial(l) ? NormKind::None : kind);
        std::vector<GramEmbedding> raw;
        for (const auto& a : acts) raw.push_back(extract_grams(a, pol, w.fingerprint()));

        for (int red : opt.reductions) {
            std::vector<GramEmbedding> emb = raw;
            std::string tag = "raw";
            if (red > 0) {
                const auto pca = fit_pca(raw, red);
                emb.clear();
                for (const auto& g : raw) emb.push_back(reduce(g, pca));
                tag = "pca" + std::to_string(red);
            }
            for (int l : layers) {
                if (kind == NormKind::FaceRecenter && !w.spec.spatial(l)) {
                    rep.notes.push_back("face_recenter skipped for per-face layer " + std::to_string(l) + " (" + tag +
                                        ")");
                    continue;
                }
                auto probe = linear_probe(emb, ids, labels, l, opt.l2_grid, opt.folds, opt.seed);
                rep.rows.push_back({l, norm_name(kind), static_cast<int>(emb.front().layers[l].size()), tag, probe.best});
            }
        }
    }
    return rep;
}

}  // namespace uvstyle
