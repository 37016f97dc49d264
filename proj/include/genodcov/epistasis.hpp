#pragma once

// SNP-SNP dependence tests on {0,1,2}^2 and {0,1,2}^3, Benjamini-Hochberg,
// and the case/control epistasis scan.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "common.hpp"
#include "genotype_matrix.hpp"
#include "geno_model.hpp"
#include "quadform.hpp"
#include "sim_models.hpp"

namespace genodcov {

using Triple = std::array<double, 3>;

struct PairTestResult {
    double statistic = 0.0;  // n V^2 (or n dMv^2 for three SNPs)
    double p_value = 1.0;
    std::vector<double> eigen_x, eigen_y, eigen_z;
    std::string metric;
    long n = 0;
    std::uint32_t flags = 0;
};

namespace detail {
inline void check_simplex(const Triple& p) {
    double s = 0.0;
    for (double v : p) {
        if (!(v >= 0.0)) fail(ErrorKind::InvalidArgument, "probability triple has a negative entry");
        s += v;
    }
    if (std::abs(s - 1.0) > 1e-9) fail(ErrorKind::InvalidArgument, "probability triple does not sum to 1");
}

inline std::vector<double> clamped_pair(double half_sum, double disc) {
    if (disc < 0.0) {
        if (disc < -1e-14) fail(ErrorKind::Numerical, "negative discriminant in ternary eigenvalues");
        disc = 0.0;
    }
    double r = std::sqrt(disc);
    double l1 = half_sum + r;
    double l2 = std::max(0.0, half_sum - r);
    return {l1, l2};
}
}  // namespace detail

// Closed-form eigenvalues for the discrete (d_1) and Euclidean (d_2) metrics.
inline std::vector<double> ternary_eigenvalues(const Triple& p, const SnpDistanceSpec& metric) {
    detail::check_simplex(p);
    if (metric.is_db() && metric.b() == 1.0) {
        double h = (1.0 - (p[0] * p[0] + p[1] * p[1] + p[2] * p[2])) / 2.0;
        // h^2 - 3 prod p, written as a sum of squares so it does not cancel near ties
        double a = p[0] * p[1], b = p[0] * p[2], c = p[1] * p[2];
        double disc = 0.5 * ((a - b) * (a - b) + (b - c) * (b - c) + (c - a) * (c - a));
        return detail::clamped_pair(h, disc);
    }
    if (metric.is_db() && metric.b() == 2.0) {
        double s = p[0] * (1.0 - p[0]) + p[2] * (1.0 - p[2]);
        // s^2 - 4 prod p = ((k11 - k22)/2)^2 + k12^2 with k the feature covariance
        double k11 = p[0] + p[2] - (p[0] - p[2]) * (p[0] - p[2]), k22 = p[1] - p[1] * p[1];
        double k12 = p[1] * (p[0] - p[2]);
        double disc = 0.25 * (k11 - k22) * (k11 - k22) + k12 * k12;
        return detail::clamped_pair(s, disc);
    }
    fail(ErrorKind::InvalidArgument, "closed-form eigenvalues exist only for the discrete and Euclidean metrics");
}

// Nonzero marginal eigenvalues for any premetric; closed form where available.
inline std::vector<double> marginal_eigenvalues(const Triple& p, const SnpDistanceSpec& metric) {
    if (metric.is_db() && (metric.b() == 1.0 || metric.b() == 2.0)) {
        auto l = ternary_eigenvalues(p, metric);
        double tr = l[0] + l[1];
        std::vector<double> out;
        for (double v : l)
            if (v > 1e-12 * tr) out.push_back(v);
        return out;
    }
    detail::check_simplex(p);
    Eigen::Matrix3d k = -to_matrix(metric.table());
    return multinomial_spectrum(k, Eigen::Vector3d(p[0], p[1], p[2]));
}

namespace detail {
// Class-level doubly centred distance matrix at empirical marginals.
inline Eigen::Matrix3d centered_classes(const Table3& d, const Triple& p) {
    Eigen::Matrix3d dm = to_matrix(d);
    Eigen::Vector3d pv(p[0], p[1], p[2]);
    Eigen::Vector3d row = dm * pv;
    double all = pv.dot(row);
    Eigen::Matrix3d c = dm;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) c(i, j) = dm(i, j) - row(i) - row(j) + all;
    return c;
}

inline std::vector<double> products(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> w;
    for (double x : a)
        for (double y : b) w.push_back(x * y);
    return w;
}

inline double weighted_sf(const std::vector<double>& w, double stat) {
    if (w.empty()) return 1.0;
    auto q = QuadFormWeights(w).truncated();
    if (q.weights.empty()) return 1.0;
    return clamp01(wchisq_sf(q, stat));
}

struct PairData {
    std::array<std::array<double, 3>, 3> counts{};
    Triple px{}, py{};
    long n = 0;
};

inline PairData pair_data(const GenotypeVector& x1, const GenotypeVector& x2) {
    require(x1.size() == x2.size(), "pair_test: genotype vectors differ in length");
    PairData d;
    for (std::size_t i = 0; i < x1.size(); ++i) {
        if (x1[i] > 2 || x2[i] > 2) continue;
        d.counts[x1[i]][x2[i]] += 1.0;
        ++d.n;
    }
    require(d.n >= 10, "pair_test: n >= 10 required");
    for (int g = 0; g < 3; ++g)
        for (int h = 0; h < 3; ++h) {
            d.px[g] += d.counts[g][h] / d.n;
            d.py[h] += d.counts[g][h] / d.n;
        }
    return d;
}

// n V^2 from class counts.
inline double pair_stat(const std::array<std::array<double, 3>, 3>& counts, const Eigen::Matrix3d& a,
                        const Eigen::Matrix3d& b, double n) {
    double s = 0.0;
    for (int g = 0; g < 3; ++g)
        for (int h = 0; h < 3; ++h) {
            if (counts[g][h] == 0.0) continue;
            double inner = 0.0;
            for (int g2 = 0; g2 < 3; ++g2)
                for (int h2 = 0; h2 < 3; ++h2) inner += counts[g2][h2] * a(g, g2) * b(h, h2);
            s += counts[g][h] * inner;
        }
    return s / n;
}

inline bool monomorphic(const Triple& p) { return std::max({p[0], p[1], p[2]}) >= 1.0 - 1e-15; }
}  // namespace detail

inline PairTestResult pair_test(const GenotypeVector& x1, const GenotypeVector& x2, const SnpDistanceSpec& metric) {
    auto d = detail::pair_data(x1, x2);
    PairTestResult r;
    r.metric = metric.name();
    r.n = d.n;
    auto t = metric.table();
    auto a = detail::centered_classes(t, d.px);
    auto b = detail::centered_classes(t, d.py);
    r.statistic = std::max(0.0, detail::pair_stat(d.counts, a, b, static_cast<double>(d.n)));
    if (detail::monomorphic(d.px) || detail::monomorphic(d.py)) {
        r.flags |= kMonomorphic;
        r.p_value = 1.0;
        return r;
    }
    r.eigen_x = marginal_eigenvalues(d.px, metric);
    r.eigen_y = marginal_eigenvalues(d.py, metric);
    r.p_value = detail::weighted_sf(detail::products(r.eigen_x, r.eigen_y), r.statistic);
    r.flags |= kAsymptotic;
    return r;
}

// (1 + #{stat* >= stat}) / (B + 1) over permutations of x2.
inline double permutation_pvalue(const GenotypeVector& x1, const GenotypeVector& x2, const SnpDistanceSpec& metric,
                                 SeededGenerator& gen, std::optional<std::size_t> B = std::nullopt) {
    std::vector<std::uint8_t> a, b;
    for (std::size_t i = 0; i < x1.size() && i < x2.size(); ++i)
        if (x1[i] <= 2 && x2[i] <= 2) {
            a.push_back(x1[i]);
            b.push_back(x2[i]);
        }
    auto d = detail::pair_data(a, b);
    const std::size_t reps = B.value_or(default_permutations(a.size()));
    auto t = metric.table();
    auto ca = detail::centered_classes(t, d.px);
    auto cb = detail::centered_classes(t, d.py);
    const double n = static_cast<double>(d.n);
    const double obs = detail::pair_stat(d.counts, ca, cb, n);
    const double tol = 1e-12 * std::max(1.0, std::abs(obs));
    std::size_t ge = 0;
    for (std::size_t rep = 0; rep < reps; ++rep) {
        std::shuffle(b.begin(), b.end(), gen);
        std::array<std::array<double, 3>, 3> c{};
        for (std::size_t i = 0; i < a.size(); ++i) c[a[i]][b[i]] += 1.0;
        if (detail::pair_stat(c, ca, cb, n) >= obs - tol) ++ge;
    }
    return (1.0 + static_cast<double>(ge)) / (static_cast<double>(reps) + 1.0);
}

// Three-way distance multivariance, n dMv^2 = -(1/n) sum A_ij B_ij C_ij.
inline PairTestResult mv3_test(const GenotypeVector& x1, const GenotypeVector& x2, const GenotypeVector& x3,
                               const SnpDistanceSpec& metric) {
    require(x1.size() == x2.size() && x2.size() == x3.size(), "mv3_test: genotype vectors differ in length");
    double cnt[3][3][3] = {};
    long n = 0;
    for (std::size_t i = 0; i < x1.size(); ++i) {
        if (x1[i] > 2 || x2[i] > 2 || x3[i] > 2) continue;
        cnt[x1[i]][x2[i]][x3[i]] += 1.0;
        ++n;
    }
    require(n >= 10, "mv3_test: n >= 10 required");
    Triple p1{}, p2{}, p3{};
    for (int g = 0; g < 3; ++g)
        for (int h = 0; h < 3; ++h)
            for (int k = 0; k < 3; ++k) {
                p1[g] += cnt[g][h][k] / n;
                p2[h] += cnt[g][h][k] / n;
                p3[k] += cnt[g][h][k] / n;
            }
    auto t = metric.table();
    auto a = detail::centered_classes(t, p1), b = detail::centered_classes(t, p2), c = detail::centered_classes(t, p3);
    double s = 0.0;
    for (int g = 0; g < 3; ++g)
        for (int h = 0; h < 3; ++h)
            for (int k = 0; k < 3; ++k) {
                if (cnt[g][h][k] == 0.0) continue;
                double inner = 0.0;
                for (int g2 = 0; g2 < 3; ++g2)
                    for (int h2 = 0; h2 < 3; ++h2)
                        for (int k2 = 0; k2 < 3; ++k2) inner += cnt[g2][h2][k2] * a(g, g2) * b(h, h2) * c(k, k2);
                s += cnt[g][h][k] * inner;
            }
    PairTestResult r;
    r.metric = metric.name();
    r.n = n;
    r.statistic = -s / n;
    if (detail::monomorphic(p1) || detail::monomorphic(p2) || detail::monomorphic(p3)) {
        r.flags |= kMonomorphic;
        r.p_value = 1.0;
        return r;
    }
    r.eigen_x = marginal_eigenvalues(p1, metric);
    r.eigen_y = marginal_eigenvalues(p2, metric);
    r.eigen_z = marginal_eigenvalues(p3, metric);
    auto w = detail::products(detail::products(r.eigen_x, r.eigen_y), r.eigen_z);
    r.p_value = detail::weighted_sf(w, std::max(0.0, r.statistic));
    r.flags |= kAsymptotic;
    return r;
}

// Benjamini-Hochberg step-up; NaN p-values are never rejected.
inline std::vector<bool> bh_fdr(const std::vector<double>& p, double q) {
    require(q > 0.0 && q < 1.0, "bh_fdr: q must lie in (0,1)");
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < p.size(); ++i)
        if (!std::isnan(p[i])) idx.push_back(i);
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return p[a] < p[b]; });
    const double m = static_cast<double>(idx.size());
    double cut = -1.0;
    for (std::size_t r = idx.size(); r-- > 0;)
        if (p[idx[r]] <= static_cast<double>(r + 1) * q / m) {
            cut = p[idx[r]];
            break;
        }
    std::vector<bool> mask(p.size(), false);
    for (auto i : idx) mask[i] = p[i] <= cut;
    return mask;
}

enum class HitClass { None, PutativeInteraction, PopulationSubstructure };

inline std::string hit_class_name(HitClass c) {
    switch (c) {
        case HitClass::PutativeInteraction: return "PUTATIVE_INTERACTION";
        case HitClass::PopulationSubstructure: return "POPULATION_SUBSTRUCTURE";
        default: return "NONE";
    }
}

struct EpistasisHit {
    std::size_t snp_a = 0, snp_b = 0;
    double p_cases = 1.0, p_controls = 1.0;
    std::uint32_t flags_cases = 0, flags_controls = 0;
    HitClass classification = HitClass::None;
};

struct SnpPosition {
    std::string chrom;
    long long bp = 0;
};

struct EpistasisOptions {
    double q = 0.05;
    long long min_distance_bp = 1000000;
    unsigned threads = 1;
};

namespace detail {
inline bool pair_retained(const std::vector<SnpPosition>* pos, std::size_t i, std::size_t j, long long min_bp) {
    if (!pos) return true;
    const auto& a = (*pos)[i];
    const auto& b = (*pos)[j];
    if (a.chrom != b.chrom) return true;
    return std::llabs(a.bp - b.bp) > min_bp;
}

inline PairTestResult safe_pair(const GenotypeVector& a, const GenotypeVector& b, const SnpDistanceSpec& metric) {
    try {
        return pair_test(a, b, metric);
    } catch (const std::exception&) {
        PairTestResult r;
        r.flags = kError;
        r.p_value = std::numeric_limits<double>::quiet_NaN();
        return r;
    }
}
}  // namespace detail

// Every retained pair (lexicographic i < j) with both group p-values and its class.
inline std::vector<EpistasisHit> epistasis_scan(const PackedGenotypes& cases, const PackedGenotypes& controls,
                                                const SnpDistanceSpec& metric, const EpistasisOptions& opt = {},
                                                const std::vector<SnpPosition>* positions = nullptr) {
    require(cases.n_snps == controls.n_snps, "epistasis_scan: cases and controls must share the SNP set");
    if (positions) require(positions->size() == cases.n_snps, "epistasis_scan: one position per SNP required");
    const std::size_t L = cases.n_snps;
    std::vector<GenotypeVector> gc(L), gn(L);
    for (std::size_t j = 0; j < L; ++j) {
        gc[j] = cases.decode(j);
        gn[j] = controls.decode(j);
    }
    std::vector<EpistasisHit> hits;
    for (std::size_t i = 0; i < L; ++i)
        for (std::size_t j = i + 1; j < L; ++j)
            if (detail::pair_retained(positions, i, j, opt.min_distance_bp)) hits.push_back({i, j});

    auto work = [&](std::size_t begin, std::size_t end) {
        for (std::size_t h = begin; h < end; ++h) {
            auto& hit = hits[h];
            auto rc = detail::safe_pair(gc[hit.snp_a], gc[hit.snp_b], metric);
            auto rn = detail::safe_pair(gn[hit.snp_a], gn[hit.snp_b], metric);
            hit.p_cases = rc.p_value;
            hit.flags_cases = rc.flags;
            hit.p_controls = rn.p_value;
            hit.flags_controls = rn.flags;
        }
    };
    const unsigned t = std::max(1u, std::min<unsigned>(opt.threads, static_cast<unsigned>(hits.size())));
    if (t <= 1) {
        work(0, hits.size());
    } else {
        std::vector<std::thread> pool;
        const std::size_t per = (hits.size() + t - 1) / t;
        for (unsigned w = 0; w < t; ++w) {
            std::size_t b = w * per, e = std::min(hits.size(), b + per);
            if (b < e) pool.emplace_back(work, b, e);
        }
        for (auto& th : pool) th.join();
    }

    std::vector<double> pc(hits.size()), pn(hits.size());
    for (std::size_t h = 0; h < hits.size(); ++h) {
        pc[h] = hits[h].p_cases;
        pn[h] = hits[h].p_controls;
    }
    if (hits.empty()) return hits;
    auto rc = bh_fdr(pc, opt.q), rn = bh_fdr(pn, opt.q);
    for (std::size_t h = 0; h < hits.size(); ++h) {
        if (rc[h] && !rn[h]) hits[h].classification = HitClass::PutativeInteraction;
        else if (!rc[h] && rn[h]) hits[h].classification = HitClass::PopulationSubstructure;
    }
    return hits;
}

}  // namespace genodcov
