// Library tour on simulated data: single-SNP tests, a screened scan,
// one epistasis pair and a count table.
#include <cstdio>

#include <genodcov/genodcov.hpp>

using namespace genodcov;

int main() {
    SeededGenerator gen(2024);

    // dominant effect of the minor allele, sigma^2 = 25
    auto s = sample_power_model(0.3, 1.0, 3.0, 300, gen);
    for (double b : {0.0, 2.0, 3.0, 4.0}) {
        auto r = test_finite(s.x, s.y, b);
        std::printf("b=%.0f  V=%.5f  p=%.3g\n", b, r.statistic, r.p_value);
    }

    // 2000 null SNPs plus one causal SNP at index 0
    const std::size_t n = 1000;
    std::vector<GenotypeVector> snps;
    PhenotypeVector y(n);
    for (auto& v : y) v = gen.normal();
    snps.push_back(sample_hwe_genotypes(0.25, n, gen));
    for (std::size_t i = 0; i < n; ++i) y[i] += 0.4 * (snps[0][i] > 0);
    for (int j = 0; j < 2000; ++j) snps.push_back(sample_hwe_genotypes(0.05 + 0.4 * gen.uniform(), n, gen));
    auto packed = PackedGenotypes::from_vectors(snps, n);
    auto res = scan(packed, y, nullptr, ScanOptions{});
    std::size_t exact = 0;
    for (auto& r : res) exact += (r.flags & kExact) != 0;
    std::printf("scan: %zu SNPs, %zu needed the exact tail, causal p=%.3g\n", res.size(), exact, res[0].p_value);

    // interacting pair under the multiplicative model
    auto a = hwe_genotype_probs(0.3), c = hwe_genotype_probs(0.3);
    auto [x1, x2] = sample_joint(qmult_table(a[0], a[1], c[0], c[1], 0.3), 800, gen);
    auto ep = pair_test(x1, x2, SnpDistanceSpec::discrete());
    std::printf("epistasis: nV=%.4f  p=%.3g\n", ep.statistic, ep.p_value);

    Eigen::MatrixXd t(4, 3);
    t << 12, 9, 4, 37, 20, 29, 40, 58, 44, 53, 55, 66;
    ContingencyTable tab(t);
    std::printf("table: dcov p=%.4f  pearson p=%.4f\n", dcov_indep_test(tab).p_value, pearson_chi2(tab).p_value);
    return 0;
}
