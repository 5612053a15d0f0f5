/**
 * @file test_fewshot.cpp
 * @brief Layer energies and simplex-constrained weight optimization
 */
#include <gtest/gtest.h>

#include "support.hpp"
#include "uvstyle/fewshot.hpp"

using namespace uvstyle;
using namespace testing_support;

namespace {

EmbeddingStore random_store(std::uint64_t seed, int n, int L = 7) {
    std::mt19937_64 rng(seed);
    std::vector<std::string> ids;
    std::vector<GramEmbedding> e;
    for (int i = 0; i < n; ++i) {
        ids.push_back("e" + std::to_string(i));
        e.push_back(random_embedding(rng, std::vector<int>(L, 8)));
    }
    return EmbeddingStore(ids, e);
}

/// Minimum of the linear objective over the simplex, found by scanning its vertices.
double vertex_minimum(const std::vector<double>& E) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t l = 0; l < E.size(); ++l) best = std::min(best, user_loss(E, LayerWeights::one_hot(E.size(), l)));
    return best;
}

void expect_on_simplex(const LayerWeights& w) {
    double s = 0;
    for (double x : w.w) {
        EXPECT_GE(x, 0.0);
        s += x;
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
}

}  // namespace

TEST(Energies, SinglePositiveGivesZero) {
    const auto s = random_store(1, 10);
    const auto e = layer_energies({{"e3"}, {}, 0, 0}, s);
    EXPECT_EQ(e.E, std::vector<double>(7, 0.0));
    EXPECT_EQ(e.c1, 0.0);
    EXPECT_EQ(e.c2, 0.0);
}

TEST(Energies, IdenticalPositivesGiveZero) {
    std::mt19937_64 rng(2);
    const auto a = random_embedding(rng, std::vector<int>(7, 8));
    EmbeddingStore s({"a", "a_dup", "b"}, {a, a, random_embedding(rng, std::vector<int>(7, 8))});
    const auto e = layer_energies({{"a", "a_dup"}, {}, 0, 0}, s);
    for (double x : e.E) EXPECT_EQ(x, 0.0);
}

TEST(Energies, TwoPositivesOneNegative) {
    const auto s = random_store(3, 6);
    const auto e = layer_energies({{"e0", "e1"}, {"e2"}, 0, 0}, s);
    EXPECT_DOUBLE_EQ(e.c1, 0.5);
    EXPECT_DOUBLE_EQ(e.c2, 0.5);
    for (int l = 0; l < 7; ++l) {
        const auto& a = s.get("e0");
        const auto& b = s.get("e1");
        const auto& c = s.get("e2");
        const double want = layer_distance(a, b, l) - 0.5 * (layer_distance(a, c, l) + layer_distance(b, c, l));
        EXPECT_NEAR(e.E[l], want, 1e-14);
    }
}

TEST(Energies, MatchPairCountMeansForManySelectionSizes) {
    const auto s = random_store(4, 20);
    for (int P = 1; P <= 5; ++P)
        for (int N = 0; N <= 4; ++N) {
            ExampleSelection sel;
            for (int i = 0; i < P; ++i) sel.positives.push_back("e" + std::to_string(i));
            for (int i = 0; i < N; ++i) sel.negatives.push_back("e" + std::to_string(10 + i));
            const auto e = layer_energies(sel, s);
            for (int l = 0; l < 7; ++l) {
                double coh = 0, sep = 0;
                int coh_pairs = 0, sep_pairs = 0;
                for (const auto& a : sel.positives)
                    for (const auto& b : sel.positives)
                        if (a != b) {
                            coh += layer_distance(s.get(a), s.get(b), l);
                            ++coh_pairs;
                        }
                for (const auto& a : sel.positives)
                    for (const auto& b : sel.negatives) {
                        sep += layer_distance(s.get(a), s.get(b), l);
                        ++sep_pairs;
                    }
                const double want = (coh_pairs ? coh / coh_pairs : 0) - (sep_pairs ? sep / sep_pairs : 0);
                EXPECT_NEAR(e.E[l], want, 1e-13) << P << " positives, " << N << " negatives, layer " << l;
            }
            EXPECT_EQ(e.num_positives, P);
            EXPECT_EQ(e.num_negatives, N);
        }
}

TEST(Energies, SelectionErrors) {
    const auto s = random_store(5, 6);
    EXPECT_THROW(layer_energies({{}, {"e1"}, 0, 0}, s), ContractError);
    EXPECT_THROW(layer_energies({{"e0"}, {"e0"}, 0, 0}, s), ContractError);
    EXPECT_THROW(layer_energies({{"e0", "e0"}, {}, 0, 0}, s), ContractError);
    EXPECT_THROW(layer_energies({{"nope"}, {}, 0, 0}, s), ContractError);
    EXPECT_THROW(layer_energies({{"e0"}, {}, 6, 0}, s), ContractError);
}

TEST(AutoNegatives, SeededDistinctAndDisjointFromSelection) {
    const auto s = random_store(6, 30);
    ExampleSelection sel{{"e0", "e1"}, {"e2"}, 10, 77};
    const auto a = layer_energies(sel, s), b = layer_energies(sel, s);
    EXPECT_EQ(a.negatives_used, b.negatives_used);
    EXPECT_EQ(a.E, b.E);
    ASSERT_EQ(a.negatives_used.size(), 11u);
    EXPECT_EQ(a.negatives_used.front(), "e2");
    std::set<std::string> seen(a.negatives_used.begin(), a.negatives_used.end());
    EXPECT_EQ(seen.size(), 11u);
    EXPECT_FALSE(seen.count("e0"));
    EXPECT_FALSE(seen.count("e1"));
    sel.seed = 78;
    EXPECT_NE(layer_energies(sel, s).negatives_used, a.negatives_used);
}

TEST(AutoNegatives, DrawIsUniform) {
    // Each of the 9 candidates should be drawn about 3/9 of the time.
    const auto s = random_store(7, 10);
    std::map<std::string, int> hits;
    const int trials = 3000;
    for (int t = 0; t < trials; ++t)
        for (const auto& id : layer_energies({{"e0"}, {}, 3, std::uint64_t(t)}, s).negatives_used) ++hits[id];
    EXPECT_EQ(hits.size(), 9u);
    for (const auto& [id, n] : hits) EXPECT_NEAR(n / double(trials), 1.0 / 3.0, 0.05) << id;
}

TEST(Optimize, OneHotAtTheMinimum) {
    const auto w = optimize_weights(std::vector<double>{3, 1, 2, 5, 4, 6, 7});
    EXPECT_EQ(w.w, (std::vector<double>{0, 1, 0, 0, 0, 0, 0}));
}

TEST(Optimize, AllEqualGivesUniform) {
    EXPECT_EQ(optimize_weights(std::vector<double>(7, 0.0)).w, LayerWeights::uniform(7).w);
    EXPECT_EQ(optimize_weights(std::vector<double>(7, -2.5)).w, LayerWeights::uniform(7).w);
}

TEST(Optimize, TiesSplitEvenly) {
    const auto w = optimize_weights(std::vector<double>{2, 1, 3, 1, 1, 4, 5});
    EXPECT_EQ(w.w, (std::vector<double>{0, 1.0 / 3, 0, 1.0 / 3, 1.0 / 3, 0, 0}));
}

TEST(Optimize, NonFiniteEnergiesAreRejected) {
    EXPECT_THROW(optimize_weights(std::vector<double>{0, NAN, 1}), ContractError);
    EXPECT_THROW(optimize_weights(std::vector<double>{0, INFINITY, 1}), ContractError);
    EXPECT_THROW(optimize_weights_numeric(std::vector<double>{NAN}), ContractError);
    EXPECT_THROW(optimize_weights(std::vector<double>{}), ContractError);
}

TEST(Optimize, ScaleAndShiftInvariance) {
    std::mt19937_64 rng(8);
    for (int t = 0; t < 200; ++t) {
        auto E = random_vector(rng, 7);
        if (t % 5 == 0) E[3] = E[5] = *std::min_element(E.begin(), E.end());
        const auto w = optimize_weights(E);
        expect_on_simplex(w);
        const double c = std::uniform_real_distribution<double>(0.001, 1000)(rng);
        const double shift = std::uniform_real_distribution<double>(-10, 10)(rng);
        auto scaled = E, shifted = E;
        for (auto& x : scaled) x *= c;
        for (auto& x : shifted) x += shift;
        EXPECT_EQ(optimize_weights(scaled).w, w.w);
        EXPECT_EQ(optimize_weights(shifted).w, w.w);
    }
}

TEST(Optimize, DecreasingOneEnergyBelowTheMinimumSelectsIt) {
    std::mt19937_64 rng(9);
    for (int t = 0; t < 50; ++t) {
        auto E = random_vector(rng, 7);
        const int j = t % 7;
        E[j] = *std::min_element(E.begin(), E.end()) - 0.01;
        EXPECT_EQ(optimize_weights(E).w, LayerWeights::one_hot(7, j).w);
    }
}

TEST(Optimize, AnalyticAttainsTheVertexMinimum) {
    std::mt19937_64 rng(10);
    for (int t = 0; t < 200; ++t) {
        const auto E = random_vector(rng, 7, -3, 3);
        EXPECT_DOUBLE_EQ(user_loss(E, optimize_weights(E)), vertex_minimum(E));
    }
}

TEST(Optimize, NumericSolverAgreesWithAnalytic) {
    std::mt19937_64 rng(11);
    for (int t = 0; t < 500; ++t) {
        auto E = random_vector(rng, 7, -1, 1);
        if (t % 7 == 0) E[1] = E[4] = *std::min_element(E.begin(), E.end());
        if (t % 11 == 0) E[2] = *std::min_element(E.begin(), E.end()) + 1e-7;
        const auto wn = optimize_weights_numeric(E);
        expect_on_simplex(wn);
        EXPECT_LE(std::abs(user_loss(E, wn) - user_loss(E, optimize_weights(E))), 1e-8) << "trial " << t;
    }
}

TEST(Optimize, SimplexProjectionSatisfiesOptimalityConditions) {
    std::mt19937_64 rng(12);
    for (int t = 0; t < 200; ++t) {
        const auto v = random_vector(rng, 1 + t % 9, -2, 2);
        const auto p = project_to_simplex(v);
        expect_on_simplex({p});
        // Positive entries are v shifted by one common theta; zero entries lie at or below it.
        double theta = NAN;
        for (std::size_t i = 0; i < v.size(); ++i)
            if (p[i] > 0) {
                if (std::isnan(theta)) theta = v[i] - p[i];
                EXPECT_NEAR(v[i] - p[i], theta, 1e-12);
            }
        for (std::size_t i = 0; i < v.size(); ++i)
            if (p[i] == 0) EXPECT_LE(v[i], theta + 1e-12);
        const auto again = project_to_simplex(p);
        for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(again[i], p[i], 1e-12);
    }
}

TEST(FewshotQuery, SinglePositiveMatchesUniformBaseline) {
    const auto s = random_store(13, 25);
    const auto r = fewshot_query({{"e4"}, {}, 0, 0}, std::nullopt, 10, s);
    EXPECT_EQ(r.weights.w, LayerWeights::uniform(7).w);
    EXPECT_EQ(r.query_id, "e4");
    EXPECT_EQ(r.results, topk(s, "e4", LayerWeights::uniform(7), 10, false));
}

TEST(FewshotQuery, TargetIsItsOwnNearestNeighbour) {
    const auto s = random_store(14, 25);
    const auto r = fewshot_query({{"e1", "e2"}, {"e3"}, 0, 0}, std::string("e9"), 1, s);
    ASSERT_EQ(r.results.size(), 1u);
    EXPECT_EQ(r.results[0].id, "e9");
    EXPECT_EQ(r.results[0].distance, 0.0);
}

TEST(FewshotQuery, FilletPositivesAgainstAChamferNegativeGiveOneHotWeights) {
    const auto d = small_dataset(2);
    const auto store = build_store(d, default_weights(), NormalizationPolicy::defaults(EncoderSpec{}));
    std::vector<std::string> fillet, chamfer;
    for (const auto& s : d.solids) {
        if (s.labels->style == "fillet") fillet.push_back(s.solid_id);
        if (s.labels->style == "chamfer") chamfer.push_back(s.solid_id);
    }
    ASSERT_GE(fillet.size(), 2u);
    const auto r = fewshot_query({{fillet[0], fillet[1]}, {chamfer[0]}, 0, 0}, std::nullopt, 10, store);
    const auto nonzero = std::count_if(r.weights.w.begin(), r.weights.w.end(), [](double x) { return x > 0; });
    EXPECT_EQ(nonzero, 1);
    expect_on_simplex(r.weights);
}
