#include <gtest/gtest.h>

#include <random>

#include <genodcov/epistasis.hpp>
#include <genodcov/sim_models.hpp>

using namespace genodcov;

namespace {

Triple random_simplex(std::mt19937_64& rng) {
    std::exponential_distribution<double> e;
    double a = e(rng), b = e(rng), c = e(rng), s = a + b + c;
    return {a / s, b / s, c / s};
}

std::vector<double> nonzero_eigs(const Eigen::Matrix3d& m) {
    Eigen::EigenSolver<Eigen::Matrix3d> es(m);
    std::vector<double> v;
    for (int i = 0; i < 3; ++i) {
        EXPECT_LT(std::abs(es.eigenvalues()(i).imag()), 1e-12);
        double r = es.eigenvalues()(i).real();
        if (std::abs(r) > 1e-10) v.push_back(r);
    }
    std::sort(v.rbegin(), v.rend());
    return v;
}

// matrix A from the discrete-metric proof
Eigen::Matrix3d discrete_a(const Triple& p) {
    double s = p[0] * p[0] + p[1] * p[1] + p[2] * p[2];
    Eigen::Matrix3d a;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c)
            a(r, c) = (r == c ? 1 - 2 * p[r] + s : -p[r] - p[c] + s) * p[c];
    return a;
}

// L^X_rs = p_s (delta_rs - p_r - p_s + sum p^2)
Eigen::Matrix3d centred_moment_matrix(const Triple& p) {
    double s = p[0] * p[0] + p[1] * p[1] + p[2] * p[2];
    Eigen::Matrix3d l;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) l(r, c) = p[c] * ((r == c) - p[r] - p[c] + s);
    return l;
}

// (E|x_i - X| + E|x_j - X| - |x_i - x_j| - E|X - X'|) p_j on support {0,1,2}
Eigen::Matrix3d euclid_matrix(const Triple& p) {
    double m = 2 * p[0] * (1 - p[0]) + 2 * p[2] * (1 - p[2]);
    Eigen::Matrix3d a;
    a << (2 * p[1] + 4 * p[2] - m) * p[0], (-1 + p[0] + p[1] + 3 * p[2] - m) * p[1], -m * p[2],
        (-1 + p[0] + p[1] + 3 * p[2] - m) * p[0], (2 * p[2] + 2 * p[0] - m) * p[1], (-1 + 3 * p[0] + p[1] + p[2] - m) * p[2],
        -m * p[0], (-1 + 3 * p[0] + p[1] + p[2] - m) * p[1], (2 * p[1] + 4 * p[0] - m) * p[2];
    return a;
}

GenotypeVector hwe_x(std::mt19937_64& rng, int n, double maf) {
    std::uniform_real_distribution<double> u;
    GenotypeVector x(n);
    for (auto& v : x) v = static_cast<std::uint8_t>((u(rng) < maf) + (u(rng) < maf));
    return x;
}

}  // namespace

TEST(Ternary, Examples) {
    auto d = SnpDistanceSpec::discrete(), e = SnpDistanceSpec::euclidean();
    auto u = ternary_eigenvalues({1.0 / 3, 1.0 / 3, 1.0 / 3}, d);
    EXPECT_NEAR(u[0], 1.0 / 3, 1e-12);
    EXPECT_NEAR(u[1], 1.0 / 3, 1e-12);
    auto h = ternary_eigenvalues({0.25, 0.5, 0.25}, e);
    EXPECT_NEAR(h[0], 0.5, 1e-15);
    EXPECT_NEAR(h[1], 0.25, 1e-15);
    auto q = ternary_eigenvalues({0.5, 0.3, 0.2}, d);
    EXPECT_NEAR(q[0], 0.388102, 1e-6);
    EXPECT_NEAR(q[1], 0.231898, 1e-6);
    EXPECT_THROW(ternary_eigenvalues({0.5, 0.6, -0.1}, d), Error);
    EXPECT_THROW(ternary_eigenvalues({0.5, 0.3, 0.2}, SnpDistanceSpec::recessive()), Error);
}

TEST(Ternary, DiscreteMatchesBothMomentMatrices) {
    std::mt19937_64 rng(1);
    for (int it = 0; it < 1000; ++it) {
        auto p = random_simplex(rng);
        auto cf = ternary_eigenvalues(p, SnpDistanceSpec::discrete());
        for (const auto& m : {discrete_a(p), centred_moment_matrix(p)}) {
            auto ev = nonzero_eigs(m);
            ASSERT_EQ(ev.size(), 2u);
            EXPECT_NEAR(ev[0], cf[0], 1e-12);
            EXPECT_NEAR(ev[1], cf[1], 1e-12);
        }
    }
}

TEST(Ternary, EuclideanMatchesMomentMatrix) {
    std::mt19937_64 rng(2);
    for (int it = 0; it < 1000; ++it) {
        auto p = random_simplex(rng);
        auto cf = ternary_eigenvalues(p, SnpDistanceSpec::euclidean());
        auto ev = nonzero_eigs(euclid_matrix(p));
        ASSERT_EQ(ev.size(), 2u);
        EXPECT_NEAR(ev[0], cf[0], 1e-12);
        EXPECT_NEAR(ev[1], cf[1], 1e-12);
    }
}

TEST(Ternary, GenericSpectrumAgreesWithClosedForm) {
    std::mt19937_64 rng(3);
    for (int it = 0; it < 300; ++it) {
        auto p = random_simplex(rng);
        for (auto spec : {SnpDistanceSpec::discrete(), SnpDistanceSpec::euclidean()}) {
            auto cf = ternary_eigenvalues(p, spec);
            Eigen::Matrix3d k = -to_matrix(spec.table());
            auto g = multinomial_spectrum(k, Eigen::Vector3d(p[0], p[1], p[2]));
            ASSERT_EQ(g.size(), 2u);
            EXPECT_NEAR(g[0], cf[0], 1e-12);
            EXPECT_NEAR(g[1], cf[1], 1e-12);
        }
    }
}

TEST(Ternary, BoundaryOfSimplex) {
    auto l = ternary_eigenvalues({0.5, 0.5, 0.0}, SnpDistanceSpec::discrete());
    EXPECT_NEAR(l[0], 0.5, 1e-15);
    EXPECT_EQ(l[1], 0.0);
    auto m = marginal_eigenvalues({0.5, 0.5, 0.0}, SnpDistanceSpec::euclidean());
    EXPECT_EQ(m.size(), 1u);
}

TEST(PairTest, StatisticMatchesDoublyCentredMatrices) {
    std::mt19937_64 rng(4);
    for (int it = 0; it < 30; ++it) {
        int n = 10 + it * 5;
        auto a = hwe_x(rng, n, 0.4), b = hwe_x(rng, n, 0.3);
        for (auto spec : {SnpDistanceSpec::discrete(), SnpDistanceSpec::euclidean(), SnpDistanceSpec::recessive(),
                          SnpDistanceSpec::db(3.0)}) {
            double ref = n * gdc_statistic_double(distance_matrix(spec, a), distance_matrix(spec, b));
            auto r = pair_test(a, b, spec);
            EXPECT_NEAR(r.statistic, std::max(0.0, ref), 1e-9 * std::max(1.0, ref));
        }
    }
}

TEST(PairTest, Symmetric) {
    std::mt19937_64 rng(5);
    for (int it = 0; it < 20; ++it) {
        auto a = hwe_x(rng, 200, 0.3), b = hwe_x(rng, 200, 0.45);
        for (int i = 0; i < 200; i += 3) b[i] = a[i];
        auto r1 = pair_test(a, b, SnpDistanceSpec::discrete()), r2 = pair_test(b, a, SnpDistanceSpec::discrete());
        EXPECT_NEAR(r1.statistic, r2.statistic, 1e-12 * std::max(1.0, r1.statistic));
        EXPECT_NEAR(r1.p_value, r2.p_value, 1e-12);
    }
}

TEST(PairTest, IdenticalVectorsGiveTinyP) {
    std::mt19937_64 rng(6);
    auto a = hwe_x(rng, 1000, 0.3);
    EXPECT_LT(pair_test(a, a, SnpDistanceSpec::euclidean()).p_value, 1e-50);
}

TEST(PairTest, MonomorphicAndShortInputs) {
    std::mt19937_64 rng(7);
    auto a = hwe_x(rng, 50, 0.3);
    GenotypeVector c(50, 0);
    auto r = pair_test(a, c, SnpDistanceSpec::discrete());
    EXPECT_TRUE(r.flags & kMonomorphic);
    EXPECT_EQ(r.p_value, 1.0);
    GenotypeVector s(9, 1);
    EXPECT_THROW(pair_test(s, s, SnpDistanceSpec::discrete()), Error);
}

TEST(PairTest, NullCalibration) {
    SeededGenerator gen(8);
    const int reps = 4000;
    int rej = 0;
    for (int r = 0; r < reps; ++r) {
        auto a = sample_hwe_genotypes(0.3, 1000, gen), b = sample_hwe_genotypes(0.2, 1000, gen);
        rej += pair_test(a, b, SnpDistanceSpec::discrete()).p_value < 0.05;
    }
    EXPECT_NEAR(rej / double(reps), 0.05, 3 * std::sqrt(0.05 * 0.95 / reps));
}

TEST(PairTest, PowerGrowsWithDependence) {
    SeededGenerator gen(9);
    auto rate = [&](double e) {
        auto m = qexp_table(0.5, 0.3, 0.5, 0.3, e);
        int rej = 0;
        for (int r = 0; r < 300; ++r) {
            auto [a, b] = sample_joint(m, 1000, gen);
            rej += pair_test(a, b, SnpDistanceSpec::discrete()).p_value < 0.05;
        }
        return rej / 300.0;
    };
    double r1 = rate(1.0), r3 = rate(3.0);
    EXPECT_LT(r1, 0.1);
    EXPECT_GT(r3, r1 + 0.2);
}

TEST(Permutation, DefaultsAndExtremes) {
    EXPECT_EQ(default_permutations(100), 250u);
    EXPECT_EQ(default_permutations(1000), 205u);
    std::mt19937_64 rng(10);
    auto a = hwe_x(rng, 100, 0.4);
    SeededGenerator gen(11);
    EXPECT_NEAR(permutation_pvalue(a, a, SnpDistanceSpec::discrete(), gen), 1.0 / 251, 1e-15);
    SeededGenerator g1(12), g2(12);
    auto b = hwe_x(rng, 100, 0.3);
    EXPECT_EQ(permutation_pvalue(a, b, SnpDistanceSpec::discrete(), g1, 99),
              permutation_pvalue(a, b, SnpDistanceSpec::discrete(), g2, 99));
}

TEST(Permutation, DominancePremetricsAgreeWithAnalytic) {
    SeededGenerator gen(13);
    for (auto spec : {SnpDistanceSpec::dominant(), SnpDistanceSpec::recessive(), SnpDistanceSpec::heterozygous()}) {
        for (int it = 0; it < 6; ++it) {
            auto m = qexp_table(0.3, 0.4, 0.3, 0.4, 1.0 + 0.15 * it);
            auto [a, b] = sample_joint(m, 1000, gen);
            double pa = pair_test(a, b, spec).p_value;
            const std::size_t B = 2000;
            double pp = permutation_pvalue(a, b, spec, gen, B);
            double se = std::sqrt(std::max(pp * (1 - pp), 1e-3) / B);
            EXPECT_NEAR(pa, pp, 4 * se + 0.02) << spec.name() << " " << it;
        }
    }
}

TEST(Multivariance, StatisticMatchesDoublyCentredMatrices) {
    std::mt19937_64 rng(14);
    for (int it = 0; it < 10; ++it) {
        int n = 12 + 7 * it;
        auto a = hwe_x(rng, n, 0.4), b = hwe_x(rng, n, 0.3), c = hwe_x(rng, n, 0.5);
        for (auto spec : {SnpDistanceSpec::discrete(), SnpDistanceSpec::euclidean()}) {
            Eigen::MatrixXd da = double_center(distance_matrix(spec, a)).values;
            Eigen::MatrixXd db = double_center(distance_matrix(spec, b)).values;
            Eigen::MatrixXd dc = double_center(distance_matrix(spec, c)).values;
            double ref = -(da.array() * db.array() * dc.array()).sum() / n;
            EXPECT_NEAR(mv3_test(a, b, c, spec).statistic, ref, 1e-9 * std::max(1.0, std::abs(ref)));
        }
    }
}

TEST(Multivariance, ConstantThirdIsZeroAndUniformEigen) {
    std::mt19937_64 rng(15);
    auto a = hwe_x(rng, 60, 0.4), b = hwe_x(rng, 60, 0.3);
    GenotypeVector c(60, 1);
    auto r = mv3_test(a, b, c, SnpDistanceSpec::discrete());
    EXPECT_NEAR(r.statistic, 0.0, 1e-12);
    EXPECT_EQ(r.p_value, 1.0);
    GenotypeVector u(108);
    for (int i = 0; i < 108; ++i) u[i] = static_cast<std::uint8_t>(i % 3);
    GenotypeVector v(108), w(108);
    for (int i = 0; i < 108; ++i) {
        v[i] = static_cast<std::uint8_t>((i / 3) % 3);
        w[i] = static_cast<std::uint8_t>((i / 9) % 3);
    }
    auto m = mv3_test(u, v, w, SnpDistanceSpec::discrete());
    for (const auto* e : {&m.eigen_x, &m.eigen_y, &m.eigen_z}) {
        ASSERT_EQ(e->size(), 2u);
        EXPECT_NEAR((*e)[0], 1.0 / 3, 1e-12);
        EXPECT_NEAR((*e)[1], 1.0 / 3, 1e-12);
    }
}

TEST(Multivariance, NullCalibration) {
    SeededGenerator gen(16);
    const int reps = 3000;
    int rej = 0;
    for (int r = 0; r < reps; ++r) {
        auto a = sample_hwe_genotypes(0.3, 500, gen), b = sample_hwe_genotypes(0.4, 500, gen),
             c = sample_hwe_genotypes(0.25, 500, gen);
        rej += mv3_test(a, b, c, SnpDistanceSpec::discrete()).p_value < 0.05;
    }
    EXPECT_NEAR(rej / double(reps), 0.05, 3 * std::sqrt(0.05 * 0.95 / reps));
}

TEST(Bh, Examples) {
    auto m = bh_fdr({0.001, 0.009, 0.04, 0.9}, 0.05);
    EXPECT_EQ(m, (std::vector<bool>{true, true, false, false}));
    auto none = bh_fdr({1.0, 1.0, 1.0}, 0.05);
    EXPECT_EQ(none, (std::vector<bool>{false, false, false}));
    // step-up: the largest k with p_(k) <= kq/m rejects everything below it
    auto up = bh_fdr({0.04, 0.03, 0.02, 0.01}, 0.05);
    EXPECT_EQ(up, (std::vector<bool>{true, true, true, true}));
    auto ties = bh_fdr({0.02, 0.02, 0.5}, 0.05);
    EXPECT_EQ(ties, (std::vector<bool>{true, true, false}));
    auto nan = bh_fdr({std::numeric_limits<double>::quiet_NaN(), 0.001}, 0.05);
    EXPECT_EQ(nan, (std::vector<bool>{false, true}));
    EXPECT_THROW(bh_fdr({0.1}, 1.5), Error);
}

TEST(Bh, ControlsFalseDiscoveriesUnderNull) {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u;
    double total = 0;
    const int reps = 200;
    for (int r = 0; r < reps; ++r) {
        std::vector<double> p(1000);
        for (auto& v : p) v = u(rng);
        auto m = bh_fdr(p, 0.05);
        total += std::count(m.begin(), m.end(), true);
    }
    EXPECT_LE(total / reps, 0.05 * 1000);
    EXPECT_LE(total / reps, 1.0);
}

namespace {
PackedGenotypes pack(const std::vector<GenotypeVector>& s) { return PackedGenotypes::from_vectors(s, s[0].size()); }
}  // namespace

TEST(Scan, IdenticalGroupsHaveNoClasses) {
    SeededGenerator gen(18);
    std::vector<GenotypeVector> s;
    for (int j = 0; j < 12; ++j) s.push_back(sample_hwe_genotypes(0.3, 300, gen));
    s[5] = s[2];
    auto g = pack(s);
    auto hits = epistasis_scan(g, g, SnpDistanceSpec::discrete());
    EXPECT_EQ(hits.size(), 66u);
    for (auto& h : hits) {
        EXPECT_EQ(h.classification, HitClass::None);
        EXPECT_EQ(h.p_cases, h.p_controls);
    }
}

TEST(Scan, PlantedCaseOnlyPairIsPutative) {
    SeededGenerator gen(19);
    const int L = 30, n = 1500;
    std::vector<GenotypeVector> cases, controls;
    for (int j = 0; j < L; ++j) {
        cases.push_back(sample_hwe_genotypes(0.35, n, gen));
        controls.push_back(sample_hwe_genotypes(0.35, n, gen));
    }
    auto m = qmult_table(0.5, 0.3, 0.5, 0.3, 0.2);
    auto [a, b] = sample_joint(m, n, gen);
    cases[4] = a;
    cases[21] = b;
    auto hits = epistasis_scan(pack(cases), pack(controls), SnpDistanceSpec::discrete());
    int putative = 0;
    for (auto& h : hits) {
        if (h.snp_a == 4 && h.snp_b == 21) {
            EXPECT_EQ(h.classification, HitClass::PutativeInteraction);
        }
        putative += h.classification == HitClass::PutativeInteraction;
    }
    EXPECT_LE(putative, 3);
}

TEST(Scan, PositionFilterAndThreads) {
    SeededGenerator gen(20);
    std::vector<GenotypeVector> s;
    for (int j = 0; j < 8; ++j) s.push_back(sample_hwe_genotypes(0.3, 200, gen));
    auto g = pack(s);
    std::vector<SnpPosition> pos;
    for (int j = 0; j < 8; ++j) pos.push_back({j < 4 ? "1" : "2", 1000000LL + 400000LL * (j % 4)});
    EpistasisOptions opt;
    auto hits = epistasis_scan(g, g, SnpDistanceSpec::euclidean(), opt, &pos);
    for (auto& h : hits) {
        bool same = pos[h.snp_a].chrom == pos[h.snp_b].chrom;
        if (same) {
            EXPECT_GT(std::llabs(pos[h.snp_a].bp - pos[h.snp_b].bp), 1000000LL);
        }
    }
    // per chromosome: pairs 0-3 only (1.2 Mb) -> 1 + 1 + cross-chromosome 16
    EXPECT_EQ(hits.size(), 18u);
    opt.threads = 3;
    auto hits3 = epistasis_scan(g, g, SnpDistanceSpec::euclidean(), opt, &pos);
    ASSERT_EQ(hits3.size(), hits.size());
    for (std::size_t i = 0; i < hits.size(); ++i) EXPECT_EQ(hits[i].p_cases, hits3[i].p_cases);
}

TEST(Scan, NullDataBalancedClasses) {
    SeededGenerator gen(21);
    const int L = 50, n = 400;
    int put = 0, sub = 0;
    for (int rep = 0; rep < 4; ++rep) {
        std::vector<GenotypeVector> cases, controls;
        for (int j = 0; j < L; ++j) {
            cases.push_back(sample_hwe_genotypes(0.3, n, gen));
            controls.push_back(sample_hwe_genotypes(0.3, n, gen));
        }
        for (auto& h : epistasis_scan(pack(cases), pack(controls), SnpDistanceSpec::discrete())) {
            EXPECT_EQ(h.classification, HitClass::None);
            put += h.p_cases < 0.05 && h.p_controls >= 0.05;
            sub += h.p_cases >= 0.05 && h.p_controls < 0.05;
        }
    }
    // two-proportion comparison of counts out of the same number of pairs
    double tot = put + sub;
    EXPECT_GT(tot, 100);
    EXPECT_LT(std::abs(put - sub) / std::sqrt(tot), 3.0) << put << " " << sub;
}
