/**
 * @file test_grad.cpp
 * @brief Style gradients with respect to sample positions, and glyph export
 */
#include <gtest/gtest.h>

#include "support.hpp"
#include "uvstyle/grad.hpp"

using namespace uvstyle;
using namespace testing_support;

namespace {

StylePipeline default_pipeline() { return {&default_weights(), NormalizationPolicy::defaults(EncoderSpec{})}; }

StylePipeline policy_none_pipeline() {
    return {&default_weights(), NormalizationPolicy::uniform(7, NormKind::None)};
}

/// Relative error on the compared coordinates: max |a - fd| / max(max |a|, max |fd|).
struct Comparison {
    double max_diff = 0, max_a = 0, max_fd = 0;
    int compared = 0, skipped = 0;
    double rel() const { return max_diff / std::max({max_a, max_fd, 1e-300}); }
};

/// Step used when comparing against the analytic gradient. At the default 1e-3 x diagonal the
/// O(h^2) truncation term reaches the percent range on curved solids, so the check uses 1e-5.
constexpr double kCheckStep = 1e-5;

Comparison compare_with_fd(const UVSolid& subject, const UVSolid& reference, const LayerWeights& w,
                           const StylePipeline& p, int samples, std::uint64_t seed, double rel_step = kCheckStep) {
    const auto g = style_gradient_analytic(subject, reference, w, p);
    FiniteDifferenceOracle fd(subject, reference, w, p, rel_step * subject.bbox_diagonal());
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, g.samples.size() - 1);
    Comparison c;
    for (int t = 0; t < samples; ++t) {
        const auto i = pick(rng);
        for (int coord = 0; coord < 3; ++coord) {
            const auto pr = fd.probe(g.samples[i], coord);
            if (pr.crosses_kink) {
                ++c.skipped;
                continue;
            }
            const double a = g.gradients[i][coord];
            c.max_diff = std::max(c.max_diff, std::abs(a - pr.derivative));
            c.max_a = std::max(c.max_a, std::abs(a));
            c.max_fd = std::max(c.max_fd, std::abs(pr.derivative));
            ++c.compared;
        }
    }
    return c;
}

}  // namespace

TEST(StyleGradient, ZeroFieldWhenSubjectEqualsReference) {
    const auto s = random_solid(1);
    const auto g = style_gradient_analytic(s, s, LayerWeights::uniform(7), default_pipeline());
    EXPECT_EQ(g.gradients.size(), g.samples.size());
    EXPECT_LE(g.max_norm(), 1e-9);
}

TEST(StyleGradient, ReportsOnlyVisibleSamples) {
    const auto s = generate_solid(make_profile(ContentClass::TShape, 2), default_styles()[0], 2);
    const auto r = small_box(2);
    const auto g = style_gradient_analytic(s, r, LayerWeights::first_k(7, 4), default_pipeline());
    int visible = 0;
    for (const auto& f : s.faces) visible += f.visible_count();
    ASSERT_EQ(static_cast<int>(g.samples.size()), visible);
    for (std::size_t i = 0; i < g.samples.size(); ++i) {
        EXPECT_TRUE(s.faces[g.samples[i].face].visible(g.samples[i].sample));
        EXPECT_EQ(g.positions[i], s.faces[g.samples[i].face].xyz(g.samples[i].sample));
        for (double v : g.gradients[i]) EXPECT_TRUE(std::isfinite(v));
    }
}

TEST(StyleGradient, LayerZeroMatchesClosedForm) {
    // With policy none and all weight on the feature layer:
    //   D = 1 - <G, R> / (|G| |R|),  G = triu((1/N) sum_r x_r x_r^T)
    //   dD/dG = -R / (|G||R|) + <G,R> G / (|G|^3 |R|)
    //   dG_ii/dx_c = (2/N) x_c [i = c],  dG_ij/dx_c = (1/N)(x_j [i = c] + x_i [j = c]) for i < j
    const auto subject = random_solid(3), reference = random_solid(4);
    const auto p = policy_none_pipeline();
    const auto g = style_gradient_analytic(subject, reference, LayerWeights::one_hot(7, 0), p);

    auto gram = [](const UVSolid& s) {
        std::vector<std::vector<double>> G(6, std::vector<double>(6, 0.0));
        int N = 0;
        for (const auto& f : s.faces)
            for (int k = 0; k < kSamplesPerFace; ++k) {
                if (!f.visible(k)) continue;
                ++N;
                for (int i = 0; i < 6; ++i)
                    for (int j = 0; j < 6; ++j) G[i][j] += f.at(k, i) * f.at(k, j);
            }
        for (auto& row : G)
            for (auto& v : row) v /= N;
        return std::make_pair(G, N);
    };
    const auto [G, N] = gram(subject);
    const auto [R, unused] = gram(reference);
    (void)unused;
    double gr = 0, gg = 0, rr = 0;
    for (int i = 0; i < 6; ++i)
        for (int j = i; j < 6; ++j) {
            gr += G[i][j] * R[i][j];
            gg += G[i][j] * G[i][j];
            rr += R[i][j] * R[i][j];
        }
    const double ng = std::sqrt(gg), nr = std::sqrt(rr);
    std::vector<std::vector<double>> dG(6, std::vector<double>(6, 0.0));
    for (int i = 0; i < 6; ++i)
        for (int j = i; j < 6; ++j) dG[i][j] = -R[i][j] / (ng * nr) + gr * G[i][j] / (ng * ng * ng * nr);

    double worst = 0, scale = 0;
    for (std::size_t s = 0; s < g.samples.size(); ++s) {
        const auto& face = subject.faces[g.samples[s].face];
        const int k = g.samples[s].sample;
        for (int c = 0; c < 3; ++c) {
            double d = 2 * dG[c][c] * face.at(k, c);
            for (int j = c + 1; j < 6; ++j) d += dG[c][j] * face.at(k, j);
            for (int i = 0; i < c; ++i) d += dG[i][c] * face.at(k, i);
            d /= N;
            worst = std::max(worst, std::abs(d - g.gradients[s][c]));
            scale = std::max(scale, std::abs(d));
        }
    }
    ASSERT_GT(scale, 0.0);
    EXPECT_LE(worst / scale, 1e-6);
}

TEST(StyleGradient, AgreesWithCentralDifferencesOnRandomTriples) {
    std::mt19937_64 rng(5);
    const auto pipe = default_pipeline();
    int triples = 0;
    for (int t = 0; t < 10; ++t) {
        const auto subject = small_box(100 + t, t % 2 == 0);
        const auto reference = t % 3 == 0 ? small_box(200 + t, true) : random_solid(200 + t);
        const auto w = t < 2 ? LayerWeights::first_k(7, 4) : random_simplex(rng, 7);
        const auto c = compare_with_fd(subject, reference, w, pipe, 8, 50 + t);
        EXPECT_GT(c.compared, 0);
        EXPECT_LE(c.rel(), 1e-4) << "triple " << t << ": compared " << c.compared << ", skipped " << c.skipped;
        ++triples;
    }
    EXPECT_GE(triples, 10);
}

TEST(StyleGradient, HiddenPositionsDoNotAffectTheFeatureLayerGradient) {
    const auto s = generate_solid(make_profile(ContentClass::Cross, 6), default_styles()[3], 6);
    const auto r = random_solid(7);
    auto moved = s;
    for (auto& f : moved.faces)
        for (int k = 0; k < kSamplesPerFace; ++k)
            if (!f.visible(k)) f.at(k, 0) += 0.5;
    const auto w = LayerWeights::one_hot(7, 0);
    const auto a = style_gradient_analytic(s, r, w, default_pipeline());
    const auto b = style_gradient_analytic(moved, r, w, default_pipeline());
    ASSERT_EQ(a.gradients.size(), b.gradients.size());
    for (std::size_t i = 0; i < a.gradients.size(); ++i)
        for (int c = 0; c < 3; ++c) EXPECT_EQ(a.gradients[i][c], b.gradients[i][c]);
}

TEST(StyleGradient, SwappingArgumentRolesGivesTheSameDerivative) {
    // D(a, b) = D(b, a): differentiate D(b, a) with respect to a numerically and compare.
    const auto a = small_box(8, true), b = small_box(9);
    const auto w = LayerWeights::uniform(7);
    const auto p = default_pipeline();
    EXPECT_NEAR(solid_style_distance(a, b, w, p), solid_style_distance(b, a, w, p), 1e-15);
    const auto g = style_gradient_analytic(a, b, w, p);
    const double h = kCheckStep * a.bbox_diagonal();
    std::mt19937_64 rng(9);
    std::uniform_int_distribution<std::size_t> pick(0, g.samples.size() - 1);
    double worst = 0, scale = 0;
    for (int t = 0; t < 6; ++t) {
        const auto i = pick(rng);
        auto plus = a, minus = a;
        plus.faces[g.samples[i].face].at(g.samples[i].sample, 2) += h;
        minus.faces[g.samples[i].face].at(g.samples[i].sample, 2) -= h;
        const double fd = (solid_style_distance(b, plus, w, p) - solid_style_distance(b, minus, w, p)) / (2 * h);
        worst = std::max(worst, std::abs(fd - g.gradients[i][2]));
        scale = std::max({scale, std::abs(fd), std::abs(g.gradients[i][2])});
    }
    EXPECT_LE(worst / scale, 1e-4);
}

TEST(StyleGradient, ContractViolations) {
    const auto s = small_box(1), r = small_box(2, true);
    EXPECT_THROW(style_gradient_analytic(s, r, LayerWeights{{0.5, 0.6, 0, 0, 0, 0, 0}}, default_pipeline()),
                 ContractError);
    EXPECT_THROW(style_gradient_analytic(s, r, LayerWeights::uniform(6), default_pipeline()), ContractError);
}

TEST(StyleGradient, DefaultStepErrorIsSecondOrder) {
    // Shrinking the step tenfold from the default cuts the discrepancy by roughly a hundred.
    const auto subject = small_box(108, true), reference = random_solid(208);
    std::mt19937_64 rng(5);
    const auto w = random_simplex(rng, 7);
    const auto coarse = compare_with_fd(subject, reference, w, default_pipeline(), 6, 58, 1e-3);
    const auto fine = compare_with_fd(subject, reference, w, default_pipeline(), 6, 58, 1e-4);
    ASSERT_GT(coarse.compared, 0);
    EXPECT_LT(fine.rel(), coarse.rel() / 20) << coarse.rel() << " vs " << fine.rel();
}

TEST(StyleGradient, FiniteDifferenceModeProducesOneEntryPerVisibleSample) {
    // Every visible coordinate is probed, so a narrow encoder keeps this affordable.
    EncoderSpec narrow;
    narrow.conv_channels = {8, 8, 8};
    narrow.face_embed_dim = 16;
    narrow.gnn_dims = {16, 16};
    narrow.seed = 3;
    const auto weights = init_weights(narrow);
    const StylePipeline p{&weights, NormalizationPolicy::defaults(narrow)};
    const auto s = small_box(11), r = small_box(12, true);
    const auto w = LayerWeights::first_k(7, 4);
    const auto g = style_gradient(s, r, w, p, GradMode::FiniteDifference);
    const auto a = style_gradient(s, r, w, p, GradMode::Analytic);
    ASSERT_EQ(g.gradients.size(), 600u);
    ASSERT_EQ(a.samples, g.samples);
    double worst = 0;
    for (std::size_t i = 0; i < g.gradients.size(); ++i)
        for (int c = 0; c < 3; ++c) worst = std::max(worst, std::abs(g.gradients[i][c] - a.gradients[i][c]));
    EXPECT_LE(worst / a.max_norm(), 5e-2);
}

TEST(Glyphs, ZeroFieldAndZeroScaleGiveDegenerateSegments) {
    const auto s = small_box(13);
    const auto g = style_gradient_analytic(s, s, LayerWeights::uniform(7), default_pipeline());
    GradientField zero = g;
    for (auto& v : zero.gradients) v = {0, 0, 0};
    for (const auto& e : glyphs_json(zero, 3.0))
        for (int c = 0; c < 3; ++c) EXPECT_EQ(e["d"][c].get<double>(), 0.0);
    const auto other = style_gradient_analytic(s, small_box(14, true), LayerWeights::uniform(7), default_pipeline());
    for (const auto& e : glyphs_json(other, 0.0))
        for (int c = 0; c < 3; ++c) EXPECT_EQ(e["d"][c].get<double>(), 0.0);
}

TEST(Glyphs, DoublingKDoublesEverySegment) {
    const auto g = style_gradient_analytic(small_box(15), small_box(16, true), LayerWeights::uniform(7),
                                           default_pipeline());
    const auto a = glyphs_json(g, 0.7), b = glyphs_json(g, 1.4);
    ASSERT_EQ(a.size(), g.gradients.size());
    for (std::size_t i = 0; i < a.size(); ++i)
        for (int c = 0; c < 3; ++c) {
            EXPECT_EQ(b[i]["d"][c].get<double>(), 2 * a[i]["d"][c].get<double>());
            EXPECT_EQ(a[i]["d"][c].get<double>(), -0.7 * g.gradients[i][c]);
            EXPECT_EQ(a[i]["p"][c].get<double>(), g.positions[i][c]);
        }
}

TEST(Glyphs, ObjHasTwoVerticesAndOneLinePerGlyph) {
    const auto g = style_gradient_analytic(small_box(17), small_box(18, true), LayerWeights::uniform(7),
                                           default_pipeline());
    const auto ex = export_glyphs(g, default_glyph_scale(g, 1.0));
    std::istringstream is(ex.obj);
    std::string line;
    int v = 0, l = 0;
    while (std::getline(is, line)) {
        if (line.rfind("v ", 0) == 0) ++v;
        if (line.rfind("l ", 0) == 0) ++l;
    }
    EXPECT_EQ(v, 2 * static_cast<int>(g.positions.size()));
    EXPECT_EQ(l, static_cast<int>(g.positions.size()));
    // The default scale makes the longest glyph 5% of the diagonal.
    double longest = 0;
    for (const auto& e : ex.glyphs) {
        double n = 0;
        for (int c = 0; c < 3; ++c) n += e["d"][c].get<double>() * e["d"][c].get<double>();
        longest = std::max(longest, std::sqrt(n));
    }
    EXPECT_NEAR(longest, 0.05, 1e-12);
}
