#pragma once

// Genotype-phenotype association: the V_b^2 statistic, its asymptotic and
// finite-sample tests, covariate adjustment, dosage and multiallelic
// variants, and the screened scan driver.

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "common.hpp"
#include "genotype_matrix.hpp"
#include "geno_model.hpp"
#include "quadform.hpp"

namespace genodcov {

using PhenotypeVector = std::vector<double>;  // NaN marks a missing value

struct AssocResult {
    double statistic = 0.0;  // V_b^2
    double k = 0.0;          // n V_b^2 / sigma_Y^2
    double p_value = 1.0;
    double p_lo = std::numeric_limits<double>::quiet_NaN();
    double p_hi = std::numeric_limits<double>::quiet_NaN();
    std::array<double, 2> eigenvalues{0.0, 0.0};
    long n_effective = 0;
    std::uint32_t flags = 0;
    std::string message;
};

enum class AssocMethod { Auto, Finite, Asymptotic };

inline constexpr long kAsymptoticAbove = 30000;

// Eigenvalues of a symmetric 2x2 matrix, descending, truncated at 1e-12 * trace.
inline std::array<double, 2> sym2_eigenvalues(double a, double b, double d) {
    double tr = a + d, half = (a - d) / 2.0;
    double r = std::hypot(half, b);
    double l1 = tr / 2.0 + r;
    double l2 = tr > 0.0 ? (a * d - b * b) / l1 : 0.0;  // avoids cancellation in tr/2 - r
    if (!(l1 > 0.0)) return {0.0, 0.0};
    if (l2 < 1e-12 * tr) l2 = 0.0;
    return {l1, l2};
}

// K matrix at genotype frequencies p (the finite-sample sign convention).
inline std::array<double, 3> k_matrix(double b, const std::array<double, 3>& p) {
    const double s = std::sqrt(b * (4.0 - b) / 4.0);
    return {b / 2.0 * (p[0] + p[2] - (p[0] - p[2]) * (p[0] - p[2])), s * (-p[1] * (p[0] - p[2])),
            (4.0 - b) / 2.0 * (p[1] - p[1] * p[1])};
}

inline std::array<double, 2> assoc_eigenvalues(double b, const std::array<double, 3>& p) {
    auto k = k_matrix(b, p);
    return sym2_eigenvalues(k[0], k[1], k[2]);
}

// Per-class sufficient statistics of one SNP: counts, sums and sums of squares of y.
struct ClassSums {
    std::array<double, 3> n{0, 0, 0};
    std::array<double, 3> s{0, 0, 0};
    std::array<double, 3> q{0, 0, 0};

    double total() const { return n[0] + n[1] + n[2]; }
};

struct VbParts {
    double v = 0.0;       // V_b^2
    double sigma2 = 0.0;  // (1/n) sum (y - ybar)^2
    long n = 0;
    std::array<double, 3> freq{0, 0, 0};
};

inline VbParts vb_from_sums(const ClassSums& c, double b) {
    VbParts out;
    const double n = c.total();
    out.n = static_cast<long>(n);
    if (n <= 0.0) return out;
    const double ybar = (c.s[0] + c.s[1] + c.s[2]) / n;
    std::array<double, 3> t;
    double syy = 0.0;
    for (int g = 0; g < 3; ++g) {
        t[g] = c.s[g] - c.n[g] * ybar;
        syy += c.q[g] - 2.0 * ybar * c.s[g] + c.n[g] * ybar * ybar;
        out.freq[g] = c.n[g] / n;
    }
    auto f = feature_map(b);
    double u1 = -f.s1 * t[0] + f.s1 * t[2];
    double u2 = f.s2 * t[1];
    out.v = (u1 * u1 + u2 * u2) / (n * n);
    out.sigma2 = std::max(0.0, syy) / n;
    return out;
}

inline ClassSums class_sums(const GenotypeVector& x, const PhenotypeVector& y) {
    require(x.size() == y.size(), "genotype and phenotype lengths differ");
    ClassSums c;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i] > 2 || std::isnan(y[i])) continue;
        c.n[x[i]] += 1.0;
        c.s[x[i]] += y[i];
        c.q[x[i]] += y[i] * y[i];
    }
    return c;
}

namespace detail {
inline void complete_cases(const GenotypeVector& x, const PhenotypeVector& y, std::vector<double>& xs,
                           std::vector<double>& ys) {
    require(x.size() == y.size(), "genotype and phenotype lengths differ");
    for (std::size_t i = 0; i < x.size(); ++i)
        if (x[i] <= 2 && !std::isnan(y[i])) {
            xs.push_back(x[i]);
            ys.push_back(y[i]);
        }
}

inline void complete_cases(const DosageVector& x, const PhenotypeVector& y, std::vector<double>& xs,
                           std::vector<double>& ys) {
    require(x.size() == y.size(), "dosage and phenotype lengths differ");
    for (std::size_t i = 0; i < x.size(); ++i)
        if (!std::isnan(x[i]) && !std::isnan(y[i])) {
            require(x[i] >= 0.0 && x[i] <= 2.0, "dosage outside [0,2]");
            xs.push_back(x[i]);
            ys.push_back(y[i]);
        }
}

// V_b^2 = (1/n^2) || U^t (y - ybar) ||^2 from an explicit feature matrix.
inline double vb_features(const Eigen::MatrixXd& u, const Eigen::VectorXd& y) {
    const double n = static_cast<double>(y.size());
    Eigen::VectorXd yc = y.array() - y.mean();
    return (u.transpose() * yc).squaredNorm() / (n * n);
}

inline Eigen::MatrixXd feature_cov(const Eigen::MatrixXd& u) {
    const double n = static_cast<double>(u.rows());
    Eigen::MatrixXd c = u.rowwise() - u.colwise().mean();
    return c.transpose() * c / n;
}
}  // namespace detail

inline double vb2_statistic(const GenotypeVector& x, const PhenotypeVector& y, double b) {
    auto parts = vb_from_sums(class_sums(x, y), b);
    require(parts.n >= 5, "vb2_statistic: n >= 5 required");
    return parts.v;
}

inline double vb2_statistic(const DosageVector& x, const PhenotypeVector& y, double b) {
    std::vector<double> xs, ys;
    detail::complete_cases(x, y, xs, ys);
    require(xs.size() >= 5, "vb2_statistic: n >= 5 required");
    auto u = feature_matrix(feature_map(b, true), xs);
    return detail::vb_features(u, Eigen::Map<Eigen::VectorXd>(ys.data(), ys.size()));
}

namespace detail {
inline AssocResult finish_result(double v, double sigma2, long n, std::array<double, 2> lam, AssocMethod method,
                                 long q = 0) {
    AssocResult r;
    r.statistic = v;
    r.n_effective = n;
    r.eigenvalues = lam;
    require(n >= 5, "association test: n >= 5 required");
    if (!(sigma2 > 0.0)) fail(ErrorKind::InvalidArgument, "association test: zero phenotype variance");
    if (lam[0] <= 0.0) {
        r.flags |= kMonomorphic;
        r.p_value = 1.0;
        return r;
    }
    r.k = n * v / sigma2;
    if (method == AssocMethod::Auto) method = n > kAsymptoticAbove ? AssocMethod::Asymptotic : AssocMethod::Finite;
    if (method == AssocMethod::Asymptotic) {
        std::vector<double> w{lam[0]};
        if (lam[1] > 0.0) w.push_back(lam[1]);
        auto e = wchisq_eval(QuadFormWeights(w), r.k);
        r.p_value = clamp01(e.sf);
        r.flags |= kAsymptotic;
        if (!e.converged) r.flags |= kNotConverged;
    } else {
        auto t = tn_tail_eval(lam[0], lam[1], r.k, n, q);
        r.p_value = t.p;
        r.flags |= kExact;
        if (!t.converged) r.flags |= kNotConverged;
    }
    return r;
}
}  // namespace detail

inline AssocResult test_with_method(const GenotypeVector& x, const PhenotypeVector& y, double b, AssocMethod m) {
    auto parts = vb_from_sums(class_sums(x, y), b);
    auto lam = assoc_eigenvalues(b, parts.freq);
    return detail::finish_result(parts.v, parts.sigma2, parts.n, lam, m);
}

inline AssocResult test_asymptotic(const GenotypeVector& x, const PhenotypeVector& y, double b) {
    return test_with_method(x, y, b, AssocMethod::Asymptotic);
}

inline AssocResult test_finite(const GenotypeVector& x, const PhenotypeVector& y, double b) {
    return test_with_method(x, y, b, AssocMethod::Finite);
}

// Dosage input: interpolated features, K the empirical feature covariance.
inline AssocResult test_dosage(const DosageVector& x, const PhenotypeVector& y, double b,
                               AssocMethod m = AssocMethod::Finite) {
    std::vector<double> xs, ys;
    detail::complete_cases(x, y, xs, ys);
    require(xs.size() >= 5, "test_dosage: n >= 5 required");
    auto u = feature_matrix(feature_map(b, true), xs);
    Eigen::Map<Eigen::VectorXd> yv(ys.data(), ys.size());
    double v = detail::vb_features(u, yv);
    double sigma2 = (yv.array() - yv.mean()).square().mean();
    auto k = detail::feature_cov(u);
    auto lam = sym2_eigenvalues(k(0, 0), k(0, 1), k(1, 1));
    return detail::finish_result(v, sigma2, static_cast<long>(xs.size()), lam, m);
}

struct CovariateMatrix {
    Eigen::MatrixXd z;  // first column all ones
    std::vector<std::string> names;
};

// Orthonormal basis of the column space of z; throws on rank deficiency.
inline Eigen::MatrixXd covariate_basis(const Eigen::MatrixXd& z, const std::vector<std::string>& names = {}) {
    require(z.rows() > z.cols(), "covariates: need more samples than columns");
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(z);
    qr.setThreshold(1e-10);
    if (qr.rank() < z.cols()) {
        std::string bad;
        auto perm = qr.colsPermutation().indices();
        for (Eigen::Index i = qr.rank(); i < z.cols(); ++i) {
            auto c = perm(i);
            if (!bad.empty()) bad += ", ";
            bad += c < static_cast<Eigen::Index>(names.size()) ? names[c] : "column " + std::to_string(c);
        }
        fail(ErrorKind::InvalidArgument, "covariate matrix is rank deficient; dependent columns: " + bad);
    }
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(z.rows(), z.cols());
    return q;
}

inline PhenotypeVector residualize(const PhenotypeVector& y, const Eigen::MatrixXd& z,
                                   const std::vector<std::string>& names = {}) {
    require(static_cast<Eigen::Index>(y.size()) == z.rows(), "residualize: dimension mismatch");
    Eigen::MatrixXd q = covariate_basis(z, names);
    Eigen::Map<const Eigen::VectorXd> yv(y.data(), y.size());
    Eigen::VectorXd r = yv - q * (q.transpose() * yv);
    return PhenotypeVector(r.data(), r.data() + r.size());
}

namespace detail {
inline bool intercept_only(const Eigen::MatrixXd& z) { return z.cols() == 1 && (z.array() == 1.0).all(); }

// V_b^2 and K for genotype classes after projecting out span(q).
inline AssocResult adjusted_core(const std::vector<double>& xs, const Eigen::VectorXd& y, const Eigen::MatrixXd& q,
                                 double b, long ncov, bool dosage) {
    const auto n = y.size();
    auto u = feature_matrix(feature_map(b, dosage), xs);
    Eigen::VectorXd r = y - q * (q.transpose() * y);
    Eigen::MatrixXd pu = u - q * (q.transpose() * u);
    double v = (u.transpose() * r).squaredNorm() / (double(n) * n);
    double sigma2 = r.squaredNorm() / n;
    Eigen::Matrix2d k = u.transpose() * pu / double(n);
    auto lam = sym2_eigenvalues(k(0, 0), 0.5 * (k(0, 1) + k(1, 0)), k(1, 1));
    return finish_result(v, sigma2, static_cast<long>(n), lam, AssocMethod::Finite, ncov);
}
}  // namespace detail

inline AssocResult test_adjusted(const GenotypeVector& x, const PhenotypeVector& y, const Eigen::MatrixXd& z,
                                 double b) {
    require(static_cast<Eigen::Index>(x.size()) == z.rows() && x.size() == y.size(), "test_adjusted: dimension mismatch");
    if (detail::intercept_only(z)) return test_finite(x, y, b);
    std::vector<double> xs, ys;
    std::vector<Eigen::Index> keep;
    for (std::size_t i = 0; i < x.size(); ++i)
        if (x[i] <= 2 && !std::isnan(y[i]) && z.row(i).allFinite()) {
            xs.push_back(x[i]);
            ys.push_back(y[i]);
            keep.push_back(static_cast<Eigen::Index>(i));
        }
    const long ncov = static_cast<long>(z.cols()) - 1;
    require(static_cast<long>(xs.size()) > ncov + 3, "test_adjusted: n must exceed q + 3");
    Eigen::MatrixXd zs(keep.size(), z.cols());
    for (std::size_t i = 0; i < keep.size(); ++i) zs.row(i) = z.row(keep[i]);
    Eigen::MatrixXd q = covariate_basis(zs);
    Eigen::Map<Eigen::VectorXd> yv(ys.data(), ys.size());
    return detail::adjusted_core(xs, yv, q, b, ncov, false);
}

// Multiallelic: x_counts is n x m allele counts (rows sum to 2); features are
// the per-allele d_b features scaled by 1/sqrt(2).
inline AssocResult test_multiallelic(const Eigen::MatrixXi& x_counts, const PhenotypeVector& y, double b) {
    require(x_counts.cols() >= 2, "test_multiallelic: m >= 2 alleles required");
    require(static_cast<std::size_t>(x_counts.rows()) == y.size(), "test_multiallelic: dimension mismatch");
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < x_counts.rows(); ++i) {
        if (std::isnan(y[i])) continue;
        require(x_counts.row(i).sum() == 2 && x_counts.row(i).minCoeff() >= 0, "test_multiallelic: row does not sum to 2");
        keep.push_back(i);
    }
    const auto n = static_cast<Eigen::Index>(keep.size());
    require(n >= 5, "test_multiallelic: n >= 5 required");
    const auto m = x_counts.cols();
    auto f = feature_map(b);
    Eigen::MatrixXd u(n, 2 * m);
    Eigen::VectorXd yv(n);
    for (Eigen::Index r = 0; r < n; ++r) {
        auto i = keep[r];
        yv(r) = y[i];
        for (Eigen::Index a = 0; a < m; ++a) {
            u(r, 2 * a) = f.phi1(x_counts(i, a)) / std::sqrt(2.0);
            u(r, 2 * a + 1) = f.phi2(x_counts(i, a)) / std::sqrt(2.0);
        }
    }
    double v = detail::vb_features(u, yv);
    double sigma2 = (yv.array() - yv.mean()).square().mean();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(detail::feature_cov(u));
    std::vector<double> lam;
    double tr = std::max(0.0, es.eigenvalues().sum());
    for (Eigen::Index i = es.eigenvalues().size() - 1; i >= 0; --i)
        if (es.eigenvalues()(i) > 1e-12 * tr) lam.push_back(es.eigenvalues()(i));

    AssocResult res;
    res.statistic = v;
    res.n_effective = static_cast<long>(n);
    if (lam.empty()) {
        res.flags |= kMonomorphic;
        return res;
    }
    require(sigma2 > 0.0, "test_multiallelic: zero phenotype variance");
    res.eigenvalues = {lam[0], lam.size() > 1 ? lam[1] : 0.0};
    res.k = n * v / sigma2;
    if (lam.size() <= 2) {
        auto t = tn_tail_eval(res.eigenvalues[0], res.eigenvalues[1], res.k, static_cast<long>(n));
        res.p_value = t.p;
        res.flags |= kExact;
        if (!t.converged) res.flags |= kNotConverged;
        return res;
    }
    // sum (lambda_i - c) Q_i^2 - c chi2_{n - 1 - r} >= 0, evaluated by Imhof
    const double c = res.k / n;
    std::vector<double> w;
    std::vector<int> d;
    for (double l : lam) {
        w.push_back(l - c);
        d.push_back(1);
    }
    int rest = static_cast<int>(n) - 1 - static_cast<int>(lam.size());
    require(rest >= 1, "test_multiallelic: too few samples for the allele count");
    w.push_back(-c);
    d.push_back(rest);
    if (w.front() <= 0.0) {
        res.p_value = 0.0;
    } else {
        QfOptions opt;
        opt.abs_tol = 1e-12;
        auto e = detail::imhof(QuadFormWeights(w, d), 0.0, opt);
        res.p_value = e.sf;
        if (!e.converged) res.flags |= kNotConverged;
    }
    res.flags |= kExact;
    return res;
}

struct ScanOptions {
    double b = 2.0;
    double M = 1e-4;
    double m = 1e-64;
    bool screen = true;
    AssocMethod method = AssocMethod::Auto;
    unsigned threads = 1;
};

// Genome-wide scan. Samples with missing phenotype or covariates are dropped
// up front; missing genotypes are excluded per SNP.
class AssocScanner {
public:
    AssocScanner(const PackedGenotypes& g, const PhenotypeVector& y, const Eigen::MatrixXd* z, ScanOptions opt)
        : g_(g), opt_(opt) {
        if (z && detail::intercept_only(*z)) z = nullptr;
        require(y.size() == g.n_samples, "scan: phenotype length differs from sample count");
        if (z) require(static_cast<std::size_t>(z->rows()) == g.n_samples, "scan: covariate rows differ from sample count");
        keep_.assign(g.n_samples, 0);
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < g.n_samples; ++i)
            if (!std::isnan(y[i]) && (!z || z->row(i).allFinite())) {
                keep_[i] = 1;
                idx.push_back(i);
            }
        n_kept_ = idx.size();
        require(n_kept_ >= 5, "scan: fewer than 5 usable samples");
        // centre y for numerically stable class sums
        double mean = 0.0;
        for (auto i : idx) mean += y[i];
        mean /= static_cast<double>(idx.size());
        yc_.assign(g.n_samples, 0.0);
        for (auto i : idx) yc_[i] = y[i] - mean;
        if (z) {
            ncov_ = static_cast<long>(z->cols()) - 1;
            require(static_cast<long>(n_kept_) > ncov_ + 3, "scan: n must exceed q + 3");
            zk_.resize(static_cast<Eigen::Index>(n_kept_), z->cols());
            for (std::size_t r = 0; r < idx.size(); ++r) zk_.row(r) = z->row(idx[r]);
            q_ = covariate_basis(zk_);
            Eigen::VectorXd yk(static_cast<Eigen::Index>(n_kept_));
            for (std::size_t r = 0; r < idx.size(); ++r) yk(r) = yc_[idx[r]];
            Eigen::VectorXd res = yk - q_ * (q_.transpose() * yk);
            resid_.assign(g.n_samples, 0.0);
            for (std::size_t r = 0; r < idx.size(); ++r) resid_[idx[r]] = res(r);
            qrows_.assign(g.n_samples, Eigen::VectorXd());
            for (std::size_t r = 0; r < idx.size(); ++r) qrows_[idx[r]] = q_.row(r).transpose();
            kept_index_ = idx;
            has_cov_ = true;
        }
    }

    AssocResult run_one(std::size_t j) const {
        try {
            return has_cov_ ? run_adjusted(j) : run_plain(j);
        } catch (const std::exception& e) {
            AssocResult r;
            r.flags = kError;
            r.p_value = std::numeric_limits<double>::quiet_NaN();
            r.message = e.what();
            return r;
        }
    }

    std::vector<AssocResult> run() const {
        std::vector<AssocResult> out(g_.n_snps);
        unsigned t = std::max(1u, opt_.threads);
        if (t == 1 || g_.n_snps < 2) {
            for (std::size_t j = 0; j < g_.n_snps; ++j) out[j] = run_one(j);
            return out;
        }
        std::atomic<std::size_t> next{0};
        constexpr std::size_t chunk = 256;
        auto work = [&] {
            for (;;) {
                std::size_t start = next.fetch_add(chunk);
                if (start >= g_.n_snps) break;
                std::size_t end = std::min(g_.n_snps, start + chunk);
                for (std::size_t j = start; j < end; ++j) out[j] = run_one(j);
            }
        };
        std::vector<std::thread> pool;
        for (unsigned i = 0; i < t; ++i) pool.emplace_back(work);
        for (auto& th : pool) th.join();
        return out;
    }

private:
    AssocResult decide(double v, double sigma2, long n, std::array<double, 2> lam) const {
        AssocResult r;
        r.statistic = v;
        r.n_effective = n;
        r.eigenvalues = lam;
        if (n < 5) fail(ErrorKind::InvalidArgument, "fewer than 5 non-missing genotypes");
        if (lam[0] <= 0.0) {
            r.flags |= kMonomorphic;
            r.p_value = 1.0;
            return r;
        }
        if (!(sigma2 > 0.0)) {
            r.flags |= kDegenerate;
            r.p_value = 1.0;
            return r;
        }
        r.k = n * v / sigma2;
        AssocMethod method = opt_.method;
        if (method == AssocMethod::Auto) method = n > kAsymptoticAbove ? AssocMethod::Asymptotic : AssocMethod::Finite;
        if (method == AssocMethod::Asymptotic) return detail::finish_result(v, sigma2, n, lam, method, ncov_);
        if (opt_.screen && ncov_ == 0) {
            auto bnd = pvalue_bounds(lam[0], lam[1], r.k, n);
            r.p_lo = bnd.p_star;
            r.p_hi = bnd.p_star2;
            if (bnd.p_star >= opt_.M) {
                r.p_value = bnd.p_star;
                r.flags |= kBoundOnlyLow;
                return r;
            }
            if (bnd.p_star2 <= opt_.m) {
                r.p_value = bnd.p_star2;
                r.flags |= kBoundOnlyHigh;
                return r;
            }
        }
        auto t = tn_tail_eval(lam[0], lam[1], r.k, n, ncov_);
        r.p_value = t.p;
        r.flags |= kExact;
        if (!t.converged) r.flags |= kNotConverged;
        return r;
    }

    AssocResult run_plain(std::size_t j) const {
        const auto* p = g_.snp(j);
        const auto& lut = g_.lut();
        double n[4] = {0, 0, 0, 0}, s[4] = {0, 0, 0, 0}, q[4] = {0, 0, 0, 0};
        const std::size_t ns = g_.n_samples;
        for (std::size_t i = 0; i < ns; ++i) {
            unsigned c = keep_[i] ? lut[(p[i >> 2] >> (2 * (i & 3))) & 3u] : kMissing;
            double y = yc_[i];
            n[c] += 1.0;
            s[c] += y;
            q[c] += y * y;
        }
        ClassSums cs;
        for (int g = 0; g < 3; ++g) {
            cs.n[g] = n[g];
            cs.s[g] = s[g];
            cs.q[g] = q[g];
        }
        auto parts = vb_from_sums(cs, opt_.b);
        auto lam = assoc_eigenvalues(opt_.b, parts.freq);
        return decide(parts.v, parts.sigma2, parts.n, lam);
    }

    AssocResult run_adjusted(std::size_t j) const {
        const auto* p = g_.snp(j);
        const auto& lut = g_.lut();
        const auto qc = q_.cols();
        std::array<double, 4> n{0, 0, 0, 0}, rs{0, 0, 0, 0};
        std::array<Eigen::VectorXd, 4> qs;
        for (auto& v : qs) v = Eigen::VectorXd::Zero(qc);
        bool missing = false;
        for (std::size_t i = 0; i < g_.n_samples; ++i) {
            if (!keep_[i]) continue;
            unsigned c = lut[(p[i >> 2] >> (2 * (i & 3))) & 3u];
            if (c == kMissing) {
                missing = true;
                break;
            }
            n[c] += 1.0;
            rs[c] += resid_[i];
            qs[c] += qrows_[i];
        }
        if (missing) {
            // projection changes with the sample subset: recompute exactly
            std::vector<double> xs, ys;
            std::vector<Eigen::Index> rows;
            for (std::size_t r = 0; r < kept_index_.size(); ++r) {
                auto i = kept_index_[r];
                unsigned c = lut[(p[i >> 2] >> (2 * (i & 3))) & 3u];
                if (c == kMissing) continue;
                xs.push_back(c);
                ys.push_back(yc_[i]);
                rows.push_back(static_cast<Eigen::Index>(r));
            }
            if (static_cast<long>(xs.size()) <= ncov_ + 3) fail(ErrorKind::InvalidArgument, "too few non-missing genotypes");
            Eigen::MatrixXd zs(rows.size(), zk_.cols());
            for (std::size_t r = 0; r < rows.size(); ++r) zs.row(r) = zk_.row(rows[r]);
            Eigen::MatrixXd qb = covariate_basis(zs);
            Eigen::Map<Eigen::VectorXd> yv(ys.data(), ys.size());
            auto u = feature_matrix(feature_map(opt_.b), xs);
            Eigen::VectorXd r = yv - qb * (qb.transpose() * yv);
            Eigen::MatrixXd pu = u - qb * (qb.transpose() * u);
            const double nn = static_cast<double>(xs.size());
            double v = (u.transpose() * r).squaredNorm() / (nn * nn);
            Eigen::Matrix2d k = u.transpose() * pu / nn;
            auto lam = sym2_eigenvalues(k(0, 0), 0.5 * (k(0, 1) + k(1, 0)), k(1, 1));
            return decide(v, r.squaredNorm() / nn, static_cast<long>(xs.size()), lam);
        }
        auto f = feature_map(opt_.b);
        const double nn = n[0] + n[1] + n[2];
        std::array<double, 3> phi1{-f.s1, 0.0, f.s1}, phi2{0.0, f.s2, 0.0};
        double u1 = 0.0, u2 = 0.0;
        Eigen::Matrix2d utu = Eigen::Matrix2d::Zero();
        Eigen::MatrixXd utq = Eigen::MatrixXd::Zero(2, qc);
        for (int g = 0; g < 3; ++g) {
            u1 += phi1[g] * rs[g];
            u2 += phi2[g] * rs[g];
            utu(0, 0) += n[g] * phi1[g] * phi1[g];
            utu(0, 1) += n[g] * phi1[g] * phi2[g];
            utu(1, 1) += n[g] * phi2[g] * phi2[g];
            utq.row(0) += phi1[g] * qs[g].transpose();
            utq.row(1) += phi2[g] * qs[g].transpose();
        }
        utu(1, 0) = utu(0, 1);
        Eigen::Matrix2d k = (utu - utq * utq.transpose()) / nn;
        double v = (u1 * u1 + u2 * u2) / (nn * nn);
        auto lam = sym2_eigenvalues(k(0, 0), 0.5 * (k(0, 1) + k(1, 0)), k(1, 1));
        return decide(v, sigma2_resid(), static_cast<long>(nn), lam);
    }

    double sigma2_resid() const {
        double s = 0.0;
        for (double r : resid_) s += r * r;
        return s / static_cast<double>(n_kept_);
    }

    const PackedGenotypes& g_;
    ScanOptions opt_;
    std::vector<std::uint8_t> keep_;
    std::vector<double> yc_;
    std::size_t n_kept_ = 0;
    long ncov_ = 0;
    bool has_cov_ = false;
    Eigen::MatrixXd zk_, q_;
    std::vector<double> resid_;
    std::vector<Eigen::VectorXd> qrows_;
    std::vector<std::size_t> kept_index_;
};

inline std::vector<AssocResult> scan(const PackedGenotypes& g, const PhenotypeVector& y, const Eigen::MatrixXd* z,
                                     const ScanOptions& opt) {
    return AssocScanner(g, y, z, opt).run();
}

}  // namespace genodcov
