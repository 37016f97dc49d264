#include <gtest/gtest.h>

#include <map>
#include <random>

#include <boost/math/distributions/hypergeometric.hpp>

#include <genodcov/categorical.hpp>
#include <genodcov/geno_model.hpp>

using namespace genodcov;

namespace {

Eigen::MatrixXd admission() {
    Eigen::MatrixXd t(4, 3);
    t << 12, 9, 4, 37, 20, 29, 40, 58, 44, 53, 55, 66;
    return t;
}

Eigen::MatrixXi random_table(std::mt19937_64& rng, int I, int J, int max) {
    std::uniform_int_distribution<int> u(0, max);
    Eigen::MatrixXi t(I, J);
    for (int i = 0; i < I; ++i)
        for (int j = 0; j < J; ++j) t(i, j) = u(rng);
    return t;
}

// expand a table into paired labels
void expand(const Eigen::MatrixXi& t, GenotypeVector& a, std::vector<int>& b) {
    for (int i = 0; i < t.rows(); ++i)
        for (int j = 0; j < t.cols(); ++j)
            for (int k = 0; k < t(i, j); ++k) {
                a.push_back(static_cast<std::uint8_t>(i));
                b.push_back(j);
            }
}

double ks_uniform(std::vector<double> p) {
    std::sort(p.begin(), p.end());
    double d = 0, n = static_cast<double>(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) d = std::max({d, (i + 1) / n - p[i], p[i] - i / n});
    return d;
}

}  // namespace

TEST(Table, MarginsAndValidation) {
    ContingencyTable t(admission());
    EXPECT_EQ(t.n(), 427);
    EXPECT_EQ(t.row_sums()(0), 25);
    EXPECT_EQ(t.col_sums()(2), 143);
    EXPECT_THROW(ContingencyTable(Eigen::MatrixXd::Constant(2, 2, -1.0)), Error);
    EXPECT_THROW(ContingencyTable(Eigen::MatrixXd::Constant(2, 2, 0.5)), Error);
    EXPECT_THROW(ContingencyTable(Eigen::MatrixXd::Zero(2, 2)), Error);
}

TEST(Dcov, PerfectIndependenceIsZero) {
    Eigen::MatrixXd t(2, 3);
    t << 2, 4, 6, 4, 8, 12;
    auto r = dcov_indep_test(ContingencyTable(t));
    EXPECT_NEAR(r.statistic, 0.0, 1e-12);
    EXPECT_NEAR(r.p_value, 1.0, 1e-12);
}

TEST(Dcov, TwoByTwoEigenvalue) {
    Eigen::MatrixXd t(2, 2);
    t << 10, 20, 20, 10;
    auto r = dcov_indep_test(ContingencyTable(t));
    ASSERT_EQ(r.eigenvalues.size(), 1u);
    EXPECT_NEAR(r.eigenvalues[0], 0.25, 1e-14);
    // 0.25 chi2_1 exceedance at the statistic
    double s = r.statistic;
    EXPECT_NEAR(s, 4 * 25.0 / 60, 1e-12);
    EXPECT_NEAR(r.p_value, std::erfc(std::sqrt(s / 0.25 / 2)), 1e-10);
}

TEST(Dcov, StatisticEqualsGenericDoubleCentring) {
    std::mt19937_64 rng(1);
    for (int it = 0; it < 30; ++it) {
        int I = 2 + it % 3, J = 2 + (it / 3) % 3;
        auto t = random_table(rng, I, J, 12);
        if (t.sum() < 10) continue;
        GenotypeVector a;
        std::vector<int> b;
        expand(t, a, b);
        const int n = static_cast<int>(a.size());
        PairMatrix da{Eigen::MatrixXd(n, n), PairTag::Distance}, db{Eigen::MatrixXd(n, n), PairTag::Distance};
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                da.values(i, j) = a[i] != a[j];
                db.values(i, j) = b[i] != b[j];
            }
        double ref = n * gdc_statistic(da, db);
        auto tab = ContingencyTable::from_int(t);
        EXPECT_NEAR(dcov_table_statistic(tab), ref, 1e-9 * std::max(1.0, ref));
    }
}

TEST(Dcov, EigenvalueStructure) {
    std::mt19937_64 rng(2);
    for (int it = 0; it < 100; ++it) {
        int I = 2 + it % 6;
        Eigen::VectorXd q = Eigen::VectorXd::Zero(I);
        std::exponential_distribution<double> e;
        for (int i = 0; i < I; ++i) q(i) = e(rng);
        q /= q.sum();
        auto ev = multinomial_cov_eigenvalues(q);
        EXPECT_EQ(ev.size(), static_cast<std::size_t>(I - 1));
        double tr = std::accumulate(ev.begin(), ev.end(), 0.0);
        EXPECT_NEAR(tr, 1 - q.squaredNorm(), 1e-13);
        // against a general (non-symmetric) eigen solver on the same matrix
        Eigen::MatrixXd a = Eigen::MatrixXd(q.asDiagonal()) - q * q.transpose();
        Eigen::EigenSolver<Eigen::MatrixXd> es(a);
        std::vector<double> ref;
        for (int i = 0; i < I; ++i)
            if (es.eigenvalues()(i).real() > 1e-12) ref.push_back(es.eigenvalues()(i).real());
        std::sort(ref.rbegin(), ref.rend());
        ASSERT_EQ(ref.size(), ev.size());
        for (std::size_t i = 0; i < ev.size(); ++i) EXPECT_NEAR(ev[i], ref[i], 1e-12);
    }
}

TEST(Dcov, EmptyRowsDropped) {
    Eigen::MatrixXd t(3, 3);
    t << 10, 5, 0, 0, 0, 0, 3, 9, 0;
    auto r = dcov_indep_test(ContingencyTable(t));
    EXPECT_TRUE(r.flags & kDroppedCells);
    EXPECT_EQ(r.eigenvalues.size(), 1u);
}

TEST(Dcov, PermutationInvariance) {
    std::mt19937_64 rng(3);
    auto t = random_table(rng, 4, 5, 20);
    Eigen::MatrixXi p(4, 5);
    std::vector<int> ri{2, 0, 3, 1}, ci{4, 1, 0, 3, 2};
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 5; ++j) p(i, j) = t(ri[i], ci[j]);
    auto a = ContingencyTable::from_int(t), b = ContingencyTable::from_int(p);
    EXPECT_NEAR(dcov_indep_test(a).p_value, dcov_indep_test(b).p_value, 1e-12);
    EXPECT_NEAR(pearson_chi2(a).p_value, pearson_chi2(b).p_value, 1e-12);
    EXPECT_NEAR(g_test(a).p_value, g_test(b).p_value, 1e-12);
}

TEST(Dcov, AdmissionTablePins) {
    ContingencyTable t(admission());
    EXPECT_NEAR(dcov_indep_test(t).p_value, 0.044, 0.003);
    EXPECT_NEAR(pearson_chi2(t).p_value, 0.025, 0.003);
    SeededGenerator gen(2019);
    EXPECT_NEAR(perm_indep_pvalue(t, TableStatistic::Dcov, gen, 9999), 0.047, 0.006);
}

TEST(Baselines, PearsonAndGHandComputed) {
    Eigen::MatrixXd t(2, 2);
    t << 10, 20, 20, 10;
    ContingencyTable c(t);
    EXPECT_NEAR(pearson_chi2(c).statistic, 4 * 25.0 / 15, 1e-12);
    double g = 2 * (2 * 10 * std::log(10.0 / 15) + 2 * 20 * std::log(20.0 / 15));
    EXPECT_NEAR(g_test(c).statistic, g, 1e-12);
    Eigen::MatrixXd fit(2, 2);
    fit << 5, 10, 10, 20;
    EXPECT_NEAR(pearson_chi2(ContingencyTable(fit)).statistic, 0.0, 1e-12);
    EXPECT_NEAR(g_test(ContingencyTable(fit)).statistic, 0.0, 1e-12);
    EXPECT_EQ(pearson_chi2(ContingencyTable(fit)).p_value, 1.0);
}

TEST(Baselines, GRandomTableAgainstLogLikelihood) {
    std::mt19937_64 rng(4);
    auto t = random_table(rng, 3, 4, 15);
    ContingencyTable c = ContingencyTable::from_int(t);
    double n = t.sum(), ll1 = 0, ll0 = 0;
    Eigen::VectorXd r = t.cast<double>().rowwise().sum(), k = t.cast<double>().colwise().sum();
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 4; ++j)
            if (t(i, j) > 0) {
                ll1 += t(i, j) * std::log(t(i, j) / n);
                ll0 += t(i, j) * (std::log(r(i) / n) + std::log(k(j) / n));
            }
    EXPECT_NEAR(g_test(c).statistic, 2 * (ll1 - ll0), 1e-10);
}

TEST(Gof, ObservedEqualsExpected) {
    GofSpec g{{0.25, 0.5, 0.25}, {25, 50, 25}};
    auto r = energy_gof_test(g);
    EXPECT_EQ(r.statistic, 0.0);
    EXPECT_EQ(r.p_value, 1.0);
    EXPECT_EQ(pearson_chi2(g).p_value, 1.0);
}

TEST(Gof, WeightsSumToExpectedDistance) {
    for (auto probs : {std::vector<double>{4.0 / 9, 4.0 / 9, 1.0 / 9}, std::vector<double>{0.1, 0.2, 0.3, 0.4}}) {
        GofSpec g{probs, std::vector<double>(probs.size(), 10.0)};
        auto r = energy_gof_test(g);
        double s = 0, q = 0;
        for (double l : r.eigenvalues) s += l;
        for (double p : probs) q += p * p;
        EXPECT_NEAR(s, 1 - q, 1e-13);
        EXPECT_EQ(r.eigenvalues.size(), probs.size() - 1);
    }
}

TEST(Gof, WorkedExamplePins) {
    GofSpec g{hwe_expected(0.59), {139, 232, 56}};
    auto e = energy_gof_test(g), p = pearson_chi2(g);
    EXPECT_NEAR(e.p_value, 0.027, 0.002);
    EXPECT_NEAR(p.p_value, 0.027, 0.002);
}

TEST(Gof, Validation) {
    EXPECT_THROW(energy_gof_test({{0.5, 0.6}, {10, 10}}), Error);
    EXPECT_THROW(energy_gof_test({{0.5, 0.5}, {3, 3}}), Error);
    auto d = energy_gof_test({{1.0, 0.0}, {20, 0}});
    EXPECT_TRUE(d.flags & kDegenerate);
    EXPECT_EQ(d.p_value, 1.0);
}

TEST(Gof, HweNullCalibration) {
    SeededGenerator gen(5);
    auto probs = hwe_expected(2.0 / 3);
    const int reps = 4000;
    int rej = 0;
    for (int r = 0; r < reps; ++r) {
        auto c = sample_counts(probs, 500, gen);
        GofSpec g{probs, std::vector<double>(c.begin(), c.end())};
        rej += energy_gof_test(g).p_value < 0.05;
    }
    EXPECT_NEAR(rej / double(reps), 0.05, 3 * std::sqrt(0.05 * 0.95 / reps));
}

TEST(Hwe, Expected) {
    auto a = hwe_expected({0.5, 0.5});
    EXPECT_NEAR(a[0], 0.25, 1e-15);
    EXPECT_NEAR(a[1], 0.5, 1e-15);
    auto b = hwe_expected(2.0 / 3);
    EXPECT_NEAR(b[0], 4.0 / 9, 1e-15);
    EXPECT_NEAR(b[1], 4.0 / 9, 1e-15);
    EXPECT_NEAR(b[2], 1.0 / 9, 1e-15);
    auto c = hwe_expected({0.70, 0.25, 0.05});
    auto s3 = hwe_departure(HweModel::S3, 0.0);
    ASSERT_EQ(c.size(), 6u);
    for (int i = 0; i < 6; ++i) EXPECT_NEAR(c[i], s3[i], 1e-15);
    EXPECT_THROW(hwe_expected({0.5, 0.6}), Error);
}

TEST(Sampling, HypergeometricMatchesPmf) {
    SeededGenerator gen(6);
    const long draws = 30, succ = 45, pop = 100;
    boost::math::hypergeometric_distribution<double> h(succ, draws, pop);
    const int N = 200000;
    std::map<long, int> hist;
    for (int i = 0; i < N; ++i) ++hist[sample_hypergeometric(draws, succ, pop, gen)];
    double chi = 0;
    int cells = 0;
    for (long k = 0; k <= draws; ++k) {
        double e = N * boost::math::pdf(h, static_cast<unsigned>(k));
        if (e < 5) continue;
        ++cells;
        chi += std::pow(hist[k] - e, 2) / e;
    }
    double crit = boost::math::quantile(boost::math::complement(boost::math::chi_squared(cells - 1), 0.001));
    EXPECT_LT(chi, crit);
}

TEST(Sampling, HypergeometricExtremeParameters) {
    SeededGenerator gen(7);
    for (int i = 0; i < 100; ++i) {
        long k = sample_hypergeometric(5000, 200000, 1000000, gen);
        EXPECT_GE(k, 0);
        EXPECT_LE(k, 5000);
    }
    EXPECT_EQ(sample_hypergeometric(10, 10, 10, gen), 10);
    EXPECT_EQ(sample_hypergeometric(0, 10, 20, gen), 0);
}

TEST(Sampling, TablesMatchLabelShuffling) {
    // sequential hypergeometric tables vs the rejection-free reference: shuffle column labels
    Eigen::VectorXd rows(2), cols(3);
    rows << 3, 4;
    cols << 2, 2, 3;
    SeededGenerator gen(8);
    std::mt19937_64 rng(9);
    std::map<std::vector<int>, int> a, b;
    const int N = 60000;
    std::vector<int> labels{0, 0, 1, 1, 2, 2, 2};
    for (int it = 0; it < N; ++it) {
        auto t = sample_table_given_margins(rows, cols, gen);
        EXPECT_EQ(t.rowwise().sum(), rows);
        ++a[{int(t(0, 0)), int(t(0, 1)), int(t(0, 2))}];
        std::shuffle(labels.begin(), labels.end(), rng);
        std::vector<int> first(3, 0);
        for (int i = 0; i < 3; ++i) ++first[labels[i]];
        ++b[first];
    }
    for (auto& [k, v] : b) {
        double pa = a[k] / double(N), pb = v / double(N);
        EXPECT_NEAR(pa, pb, 4 * std::sqrt(pb * (1 - pb) / N) * std::sqrt(2.0));
    }
    EXPECT_EQ(a.size(), b.size());
}

TEST(Calibration, DecayingMarginalsLevel) {
    SeededGenerator gen(10);
    auto probs = decaying_marginals(5, 8, 0.0);
    const int reps = 1500;
    int rd = 0, rg = 0;
    for (int r = 0; r < reps; ++r) {
        auto t = ContingencyTable::from_int(sample_table(probs, 100, gen));
        rd += dcov_indep_test(t).p_value < 0.05;
        rg += g_test(t).p_value < 0.05;
    }
    double se = std::sqrt(0.05 * 0.95 / reps);
    EXPECT_NEAR(rd / double(reps), 0.05, 3 * se);
    // G with sparse cells is far from nominal at n = 100
    EXPECT_GT(std::abs(rg / double(reps) - 0.05), 3 * se);
}

TEST(Calibration, AnalyticVersusPermutationUniform) {
    SeededGenerator gen(11);
    auto probs = decaying_marginals(3, 4, 0.0);
    std::vector<double> pa, pp;
    for (int r = 0; r < 200; ++r) {
        auto t = ContingencyTable::from_int(sample_table(probs, 100, gen));
        pa.push_back(dcov_indep_test(t).p_value);
        pp.push_back(perm_indep_pvalue(t, TableStatistic::Dcov, gen, 199));
    }
    EXPECT_LT(ks_uniform(pa), 1.63 / std::sqrt(200.0));
    EXPECT_LT(ks_uniform(pp), 1.63 / std::sqrt(200.0));
}

TEST(Power, MonotoneInEpsilon) {
    SeededGenerator gen(12);
    const int I = 5, J = 8, reps = 200;
    double emax = decaying_eps_max(I, J);
    std::vector<double> rate;
    for (double f : {0.0, 0.25, 0.5, 0.75}) {
        auto probs = decaying_marginals(I, J, f * emax);
        int rej = 0;
        for (int r = 0; r < reps; ++r)
            rej += dcov_indep_test(ContingencyTable::from_int(sample_table(probs, 100, gen))).p_value < 0.05;
        rate.push_back(rej / double(reps));
    }
    for (std::size_t i = 1; i < rate.size(); ++i) {
        double se = std::sqrt((rate[i] * (1 - rate[i]) + rate[i - 1] * (1 - rate[i - 1])) / reps);
        EXPECT_GE(rate[i], rate[i - 1] - 2 * se);
    }
    EXPECT_GT(rate.back(), 0.5);
}
