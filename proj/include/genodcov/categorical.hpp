#pragma once

// Tests on finite supports: distance-covariance independence for contingency
// tables, energy goodness of fit, Pearson and G baselines, and the
// margin-conditional permutation oracle.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/chi_squared.hpp>

#include "common.hpp"
#include "quadform.hpp"
#include "sim_models.hpp"

namespace genodcov {

class ContingencyTable {
public:
    ContingencyTable() = default;

    explicit ContingencyTable(const Eigen::MatrixXd& counts) : counts_(counts) {
        require(counts.rows() >= 1 && counts.cols() >= 1, "contingency table must be non-empty");
        for (Eigen::Index i = 0; i < counts.rows(); ++i)
            for (Eigen::Index j = 0; j < counts.cols(); ++j) {
                double v = counts(i, j);
                require(v >= 0.0 && std::floor(v) == v, "contingency counts must be nonnegative integers");
            }
        rows_ = counts_.rowwise().sum();
        cols_ = counts_.colwise().sum().transpose();
        n_ = counts_.sum();
        require(n_ >= 1.0, "contingency table has no observations");
    }

    static ContingencyTable from_int(const Eigen::MatrixXi& c) { return ContingencyTable(c.cast<double>()); }

    const Eigen::MatrixXd& counts() const { return counts_; }
    const Eigen::VectorXd& row_sums() const { return rows_; }
    const Eigen::VectorXd& col_sums() const { return cols_; }
    double n() const { return n_; }
    Eigen::Index rows() const { return counts_.rows(); }
    Eigen::Index cols() const { return counts_.cols(); }

    Eigen::MatrixXd expected() const { return rows_ * cols_.transpose() / n_; }

    // Copy without empty rows and columns.
    ContingencyTable drop_empty(bool* dropped = nullptr) const {
        std::vector<Eigen::Index> r, c;
        for (Eigen::Index i = 0; i < rows(); ++i)
            if (rows_(i) > 0.0) r.push_back(i);
        for (Eigen::Index j = 0; j < cols(); ++j)
            if (cols_(j) > 0.0) c.push_back(j);
        if (dropped) *dropped = static_cast<Eigen::Index>(r.size()) != rows() || static_cast<Eigen::Index>(c.size()) != cols();
        Eigen::MatrixXd m(r.size(), c.size());
        for (std::size_t i = 0; i < r.size(); ++i)
            for (std::size_t j = 0; j < c.size(); ++j) m(i, j) = counts_(r[i], c[j]);
        return ContingencyTable(m);
    }

private:
    Eigen::MatrixXd counts_;
    Eigen::VectorXd rows_, cols_;
    double n_ = 0.0;
};

struct GofSpec {
    std::vector<double> probs;
    std::vector<double> counts;

    void validate() const {
        require(probs.size() == counts.size() && !probs.empty(), "GoF: probs and counts differ in length");
        double s = 0.0;
        for (double p : probs) {
            require(p >= 0.0, "GoF: negative probability");
            s += p;
        }
        require(std::abs(s - 1.0) <= 1e-12, "GoF: probabilities must sum to 1");
        for (double c : counts) require(c >= 0.0, "GoF: negative count");
    }

    double n() const { return std::accumulate(counts.begin(), counts.end(), 0.0); }
};

// Nonzero eigenvalues of diag(q) - q q^t, descending.
inline std::vector<double> multinomial_cov_eigenvalues(const Eigen::VectorXd& q) {
    Eigen::MatrixXd a = Eigen::MatrixXd(q.asDiagonal()) - q * q.transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
    std::vector<double> out;
    double tr = std::max(0.0, a.trace());
    for (Eigen::Index i = es.eigenvalues().size() - 1; i >= 0; --i)
        if (es.eigenvalues()(i) > 1e-12 * tr) out.push_back(es.eigenvalues()(i));
    return out;
}

inline double dcov_table_statistic(const ContingencyTable& t) {
    return (t.counts() - t.expected()).squaredNorm() / t.n();
}

inline TestResult dcov_indep_test(const ContingencyTable& table) {
    bool dropped = false;
    auto t = table.drop_empty(&dropped);
    TestResult r;
    r.method = "dcov";
    r.n_effective = static_cast<long>(t.n());
    if (dropped) r.flags |= kDroppedCells;
    require(t.n() >= 10, "dcov_indep_test: n >= 10 required");
    r.statistic = dcov_table_statistic(t);
    if (t.rows() < 2 || t.cols() < 2) {
        r.flags |= kDegenerate;
        r.p_value = 1.0;
        return r;
    }
    auto lam = multinomial_cov_eigenvalues(t.row_sums() / t.n());
    auto mu = multinomial_cov_eigenvalues(t.col_sums() / t.n());
    std::vector<double> w;
    for (double a : lam)
        for (double b : mu) w.push_back(a * b);
    r.eigenvalues = w;
    auto e = wchisq_eval(QuadFormWeights(w).truncated(), r.statistic);
    r.p_value = clamp01(e.sf);
    r.flags |= kAsymptotic;
    if (!e.converged) r.flags |= kNotConverged;
    return r;
}

inline TestResult energy_gof_test(const GofSpec& g) {
    g.validate();
    const double n = g.n();
    require(n >= 10, "energy_gof_test: n >= 10 required");
    TestResult r;
    r.method = "energy";
    r.n_effective = static_cast<long>(n);
    double s = 0.0;
    for (std::size_t i = 0; i < g.probs.size(); ++i) s += std::pow(g.counts[i] - n * g.probs[i], 2);
    r.statistic = s / n;
    auto top = std::max_element(g.probs.begin(), g.probs.end());
    if (*top >= 1.0 - 1e-15) {
        r.flags |= kDegenerate;
        r.p_value = g.counts[top - g.probs.begin()] == n ? 1.0 : 0.0;
        return r;
    }
    r.eigenvalues = multinomial_cov_eigenvalues(Eigen::Map<const Eigen::VectorXd>(g.probs.data(), g.probs.size()));
    auto e = wchisq_eval(QuadFormWeights(r.eigenvalues), r.statistic);
    r.p_value = clamp01(e.sf);
    r.flags |= kAsymptotic;
    if (!e.converged) r.flags |= kNotConverged;
    return r;
}

namespace detail {
inline double chi2_upper(double stat, double dof) {
    if (dof < 1.0) return 1.0;
    if (stat <= 0.0) return 1.0;
    return boost::math::cdf(boost::math::complement(boost::math::chi_squared(dof), stat));
}
}  // namespace detail

inline TestResult pearson_chi2(const ContingencyTable& table) {
    bool dropped = false;
    auto t = table.drop_empty(&dropped);
    TestResult r;
    r.method = "pearson";
    r.n_effective = static_cast<long>(t.n());
    if (dropped) r.flags |= kDroppedCells;
    Eigen::MatrixXd e = t.expected();
    r.statistic = ((t.counts() - e).array().square() / e.array()).sum();
    r.p_value = detail::chi2_upper(r.statistic, static_cast<double>((t.rows() - 1) * (t.cols() - 1)));
    return r;
}

inline TestResult pearson_chi2(const GofSpec& g) {
    g.validate();
    const double n = g.n();
    TestResult r;
    r.method = "pearson";
    r.n_effective = static_cast<long>(n);
    int cells = 0;
    for (std::size_t i = 0; i < g.probs.size(); ++i) {
        double e = n * g.probs[i];
        if (e <= 0.0) {
            r.flags |= kDroppedCells;
            continue;
        }
        ++cells;
        r.statistic += std::pow(g.counts[i] - e, 2) / e;
    }
    r.p_value = detail::chi2_upper(r.statistic, cells - 1.0);
    return r;
}

inline TestResult g_test(const ContingencyTable& table) {
    bool dropped = false;
    auto t = table.drop_empty(&dropped);
    TestResult r;
    r.method = "g";
    r.n_effective = static_cast<long>(t.n());
    if (dropped) r.flags |= kDroppedCells;
    Eigen::MatrixXd e = t.expected();
    double s = 0.0;
    for (Eigen::Index i = 0; i < t.rows(); ++i)
        for (Eigen::Index j = 0; j < t.cols(); ++j)
            if (t.counts()(i, j) > 0.0) s += t.counts()(i, j) * std::log(t.counts()(i, j) / e(i, j));
    r.statistic = std::max(0.0, 2.0 * s);
    r.p_value = detail::chi2_upper(r.statistic, static_cast<double>((t.rows() - 1) * (t.cols() - 1)));
    return r;
}

// One draw of Hypergeometric(draws, successes, population) by inversion over
// the pmf normalised at its mode.
inline long sample_hypergeometric(long draws, long succ, long pop, SeededGenerator& gen) {
    require(draws >= 0 && succ >= 0 && pop >= draws && pop >= succ, "hypergeometric: invalid parameters");
    const long lo = std::max(0L, draws + succ - pop), hi = std::min(draws, succ);
    if (lo == hi) return lo;
    const long mode = std::clamp(static_cast<long>((draws + 1.0) * (succ + 1.0) / (pop + 2.0)), lo, hi);
    std::vector<double> w(static_cast<std::size_t>(hi - lo + 1));
    w[mode - lo] = 1.0;
    // P(k+1)/P(k) = (succ-k)(draws-k) / ((k+1)(pop-succ-draws+k+1))
    for (long k = mode; k < hi; ++k)
        w[k + 1 - lo] = w[k - lo] * static_cast<double>(succ - k) * static_cast<double>(draws - k) /
                        (static_cast<double>(k + 1) * static_cast<double>(pop - succ - draws + k + 1));
    for (long k = mode; k > lo; --k)
        w[k - 1 - lo] = w[k - lo] * static_cast<double>(k) * static_cast<double>(pop - succ - draws + k) /
                        (static_cast<double>(succ - k + 1) * static_cast<double>(draws - k + 1));
    double total = std::accumulate(w.begin(), w.end(), 0.0);
    double u = gen.uniform() * total, cum = 0.0;
    for (long k = lo; k < hi; ++k) {
        cum += w[k - lo];
        if (u < cum) return k;
    }
    return hi;
}

// Random table with the given margins under the independence null
// (row by row, each row a sequential multivariate hypergeometric).
inline Eigen::MatrixXd sample_table_given_margins(const Eigen::VectorXd& rows, const Eigen::VectorXd& cols,
                                                  SeededGenerator& gen) {
    Eigen::MatrixXd t = Eigen::MatrixXd::Zero(rows.size(), cols.size());
    std::vector<long> c(cols.size());
    for (Eigen::Index j = 0; j < cols.size(); ++j) c[j] = static_cast<long>(cols(j));
    long remaining = std::accumulate(c.begin(), c.end(), 0L);
    for (Eigen::Index i = 0; i < rows.size(); ++i) {
        long r = static_cast<long>(rows(i));
        long pool = remaining;
        for (Eigen::Index j = 0; j < cols.size() && r > 0; ++j) {
            long k = j + 1 == cols.size() ? r : sample_hypergeometric(r, c[j], pool, gen);
            t(i, j) = static_cast<double>(k);
            pool -= c[j];
            c[j] -= k;
            r -= k;
        }
        remaining -= static_cast<long>(rows(i));
    }
    return t;
}

enum class TableStatistic { Dcov, Pearson, G };

inline double table_statistic(const ContingencyTable& t, TableStatistic kind) {
    switch (kind) {
        case TableStatistic::Dcov: return dcov_table_statistic(t);
        case TableStatistic::Pearson: return pearson_chi2(t).statistic;
        case TableStatistic::G: return g_test(t).statistic;
    }
    return 0.0;
}

inline double perm_indep_pvalue(const ContingencyTable& table, TableStatistic kind, SeededGenerator& gen,
                                std::size_t B = 999) {
    require(B >= 99, "perm_indep_pvalue: B >= 99 required");
    auto t = table.drop_empty();
    const double obs = table_statistic(t, kind);
    const double tol = 1e-10 * std::max(1.0, std::abs(obs));
    std::size_t ge = 0;
    for (std::size_t b = 0; b < B; ++b) {
        ContingencyTable s(sample_table_given_margins(t.row_sums(), t.col_sums(), gen));
        if (table_statistic(s, kind) >= obs - tol) ++ge;
    }
    return (1.0 + static_cast<double>(ge)) / (static_cast<double>(B) + 1.0);
}

// HWE genotype probabilities. Biallelic order: (theta^2, 2 theta (1-theta), (1-theta)^2).
// Triallelic order: A1A1, A2A2, A3A3, A1A2, A1A3, A2A3.
inline std::vector<double> hwe_expected(const std::vector<double>& theta) {
    require(theta.size() == 2 || theta.size() == 3, "hwe_expected: 2 or 3 alleles supported");
    double s = 0.0;
    for (double v : theta) {
        require(v >= 0.0, "hwe_expected: negative allele frequency");
        s += v;
    }
    require(std::abs(s - 1.0) <= 1e-12, "hwe_expected: allele frequencies must sum to 1");
    if (theta.size() == 2) {
        double t = theta[0];
        return {t * t, 2.0 * t * (1.0 - t), (1.0 - t) * (1.0 - t)};
    }
    const double a = theta[0], b = theta[1], c = theta[2];
    return {a * a, b * b, c * c, 2 * a * b, 2 * a * c, 2 * b * c};
}

inline std::vector<double> hwe_expected(double theta) { return hwe_expected(std::vector<double>{theta, 1.0 - theta}); }

}  // namespace genodcov
