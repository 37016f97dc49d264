#pragma once

// Null distributions: weighted chi-square sums, the generalised F ratio and
// the tail probability of T_n together with its cheap two-sided bounds.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "common.hpp"

namespace genodcov {

struct QuadFormWeights {
    std::vector<double> weights;
    std::vector<int> dof;

    QuadFormWeights() = default;
    QuadFormWeights(std::vector<double> w) : weights(std::move(w)), dof(weights.size(), 1) { sort(); }
    QuadFormWeights(std::vector<double> w, std::vector<int> d) : weights(std::move(w)), dof(std::move(d)) {
        require(weights.size() == dof.size(), "weights and dof differ in length");
        sort();
    }

    void sort() {
        std::vector<std::size_t> idx(weights.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return weights[a] > weights[b]; });
        std::vector<double> w;
        std::vector<int> d;
        for (auto i : idx) {
            require(std::isfinite(weights[i]), "non-finite weight");
            require(dof[i] >= 1, "dof must be positive");
            w.push_back(weights[i]);
            d.push_back(dof[i]);
        }
        weights = std::move(w);
        dof = std::move(d);
    }

    // Drop weights below rel * sum|w|; multinomial covariances are exactly rank deficient.
    QuadFormWeights truncated(double rel = 1e-12) const {
        double tot = 0.0;
        for (std::size_t i = 0; i < weights.size(); ++i) tot += std::abs(weights[i]) * dof[i];
        QuadFormWeights out;
        for (std::size_t i = 0; i < weights.size(); ++i)
            if (std::abs(weights[i]) > rel * tot) {
                out.weights.push_back(weights[i]);
                out.dof.push_back(dof[i]);
            }
        return out;
    }
};

struct QfOptions {
    double abs_tol = 1e-10;
    double rel_tol = 1e-13;
    std::size_t max_terms = 200000;
    double max_dynamic_range = 1e8;
    bool ruben_power_sums = false;  // Ruben mixing weights by the O(K^2) power-sum recursion
};

struct QfEval {
    double cdf = 0.0;
    double sf = 1.0;
    double error = 0.0;
    bool converged = true;
    const char* method = "";
};

namespace detail {

inline double log_add(double a, double b) {
    if (a == -INFINITY) return b;
    if (b == -INFINITY) return a;
    return a > b ? a + std::log1p(std::exp(b - a)) : b + std::log1p(std::exp(a - b));
}

inline double chi2_sf(double dof, double x) {
    if (x <= 0.0) return 1.0;
    return boost::math::gamma_q(dof / 2.0, x / 2.0);
}

inline double chi2_cdf(double dof, double x) {
    if (x <= 0.0) return 0.0;
    return boost::math::gamma_p(dof / 2.0, x / 2.0);
}

inline double f_sf(double d1, double d2, double x) {
    if (x <= 0.0) return 1.0;
    if (!std::isfinite(x)) return 0.0;
    return boost::math::cdf(boost::math::complement(boost::math::fisher_f_distribution<double>(d1, d2), x));
}

inline double f_cdf(double d1, double d2, double x) {
    if (x <= 0.0) return 0.0;
    if (!std::isfinite(x)) return 1.0;
    return boost::math::cdf(boost::math::fisher_f_distribution<double>(d1, d2), x);
}

// Imhof inversion of P(sum w_i chi2_{d_i} > x); absolute accuracy only.
inline QfEval imhof(const QuadFormWeights& q, double x, const QfOptions& opt) {
    const auto& w = q.weights;
    const auto& d = q.dof;
    double half_dof = 0.0, log_prod = 0.0, slope = std::abs(x) / 2.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        half_dof += d[i] / 2.0;
        log_prod += d[i] / 2.0 * std::log(std::abs(w[i]));
        slope += d[i] * std::abs(w[i]) / 2.0;
    }
    const double eps = opt.abs_tol * 0.25;
    // truncation bound 1/(pi k U^k prod|w|^{d/2}) < eps
    double log_u = -(std::log(M_PI * half_dof * eps) + log_prod) / half_dof;
    double upper = std::exp(log_u);

    auto integrand = [&](double u) {
        if (u == 0.0) {
            double s = -x;
            for (std::size_t i = 0; i < w.size(); ++i) s += d[i] * w[i];
            return s / 2.0;
        }
        double theta = -x * u / 2.0, log_rho = 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) {
            theta += d[i] / 2.0 * std::atan(w[i] * u);
            log_rho += d[i] / 4.0 * std::log1p(w[i] * w[i] * u * u);
        }
        return std::sin(theta) / (u * std::exp(log_rho));
    };

    // for x != 0 the integrand oscillates with half-period 2 pi / |x|; panels never exceed it
    // and the stopping rule uses the mean of consecutive partial sums
    const double half_period = x != 0.0 ? 2.0 * M_PI / std::abs(x) : 0.0;
    double total = 0.0, err = 0.0, a = 0.0, prev_total = 0.0, prev_mean = 0.0;
    double h = std::min(upper, M_PI / std::max(slope, 1e-300));
    std::size_t panels = 0, calm = 0;
    bool truncated = false;
    while (a < upper) {
        double b = std::min(upper, a + h);
        double e = 0.0;
        total += boost::math::quadrature::gauss_kronrod<double, 31>::integrate(integrand, a, b, 6, 1e-12, &e);
        err += e;
        a = b;
        if (++panels > opt.max_terms) {
            truncated = true;
            break;
        }
        if (half_period > 0.0 && h >= half_period) {
            double mean = 0.5 * (total + prev_total);
            calm = std::abs(mean - prev_mean) < 0.05 * eps ? calm + 1 : 0;
            prev_mean = mean;
            if (calm >= 4) {
                total = mean;
                break;
            }
        }
        prev_total = total;
        if (a > 64.0 * h) h *= 2.0;
        if (half_period > 0.0) h = std::min(h, half_period);
    }
    QfEval out;
    out.sf = 0.5 + total / M_PI;
    out.error = err / M_PI + eps;
    out.converged = !truncated && out.error <= opt.abs_tol;
    out.sf = clamp01(out.sf);
    out.cdf = clamp01(1.0 - out.sf);
    out.method = "imhof";
    return out;
}

// Ruben/Farebrother series for positive weights:
// P(Q <= x) = sum_k a_k P(chi2_{D+2k} <= x / beta), beta = min w.
inline QfEval ruben(const QuadFormWeights& q, double x, const QfOptions& opt) {
    const auto& w = q.weights;
    const auto& d = q.dof;
    const double beta = w.back();
    double dsum = 0.0, log_a0 = 0.0, qmax = 0.0, mean = 0.0, var = 0.0;
    std::vector<double> qi(w.size()), hi(w.size());
    std::size_t nontrivial = 0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        dsum += d[i];
        hi[i] = d[i] / 2.0;
        qi[i] = 1.0 - beta / w[i];
        if (qi[i] < 1e-15) qi[i] = 0.0;
        if (qi[i] > 0.0) ++nontrivial;
        log_a0 += hi[i] * std::log(beta / w[i]);
        qmax = std::max(qmax, qi[i]);
        mean += hi[i] * qi[i] / (1.0 - qi[i]);
        var += hi[i] * qi[i] / ((1.0 - qi[i]) * (1.0 - qi[i]));
    }
    QfEval out;
    out.method = "ruben";
    const double y = x / beta;
    const double log_y2 = std::log(y / 2.0);

    if (nontrivial == 0) {
        out.sf = chi2_sf(dsum, y);
        out.cdf = chi2_cdf(dsum, y);
        return out;
    }

    // mixing weights: a single NB pmf when one weight differs from beta, the
    // power-sum recursion otherwise
    std::size_t single = w.size();
    for (std::size_t i = 0; i < w.size(); ++i)
        if (qi[i] > 0.0) single = (nontrivial == 1) ? i : single;
    std::vector<double> gamma_pow;
    std::vector<double> coef;
    if (nontrivial > 1) {
        gamma_pow.push_back(0.0);
        coef.push_back(std::exp(log_a0));
    }
    // A'(z) = A(z) sum h q / (1 - q z); with B_i = A / (1 - q_i z) every update is a
    // sum of positive terms, O(m) per coefficient.
    std::vector<double> bq, bh, bsum;
    if (nontrivial > 1 && !opt.ruben_power_sums) {
        for (std::size_t i = 0; i < w.size(); ++i) {
            if (qi[i] <= 0.0) continue;
            bq.push_back(qi[i]);
            bh.push_back(hi[i]);
            bsum.push_back(coef[0]);
        }
    }
    double sf_sum = 0.0, cdf_sum = 0.0;
    double dof_k = dsum;
    double sf_k = chi2_sf(dof_k, y), cdf_k = chi2_cdf(dof_k, y);
    double log_nb = log_a0;
    double coef_sum = 0.0;
    const double s_single = single < w.size() ? hi[single] : 0.0;
    const double q_single = single < w.size() ? qi[single] : 0.0;
    std::size_t k = 0;
    for (;; ++k) {
        double a_k;
        if (nontrivial == 1) {
            a_k = std::exp(log_nb);
        } else {
            if (k > 0 && !bq.empty()) {
                double s = 0.0;
                for (std::size_t i = 0; i < bq.size(); ++i) s += bh[i] * bq[i] * bsum[i];
                double ak = s / static_cast<double>(k);
                for (std::size_t i = 0; i < bq.size(); ++i) bsum[i] = bq[i] * bsum[i] + ak;
                coef.push_back(ak);
            } else if (k > 0) {
                double g = 0.0;
                for (std::size_t i = 0; i < w.size(); ++i)
                    if (qi[i] > 0.0) g += hi[i] * std::pow(qi[i], static_cast<double>(k));
                gamma_pow.push_back(g);
                double s = 0.0;
                for (std::size_t r = 0; r < k; ++r) s += gamma_pow[k - r] * coef[r];
                coef.push_back(s / k);
            }
            a_k = coef[k];
        }
        coef_sum += a_k;
        sf_sum += a_k * sf_k;
        cdf_sum += a_k * cdf_k;

        double rho = qmax * std::max(1.0, (k + dsum / 2.0) / (k + 1.0));
        double rem = rho < 1.0 ? a_k * rho / (1.0 - rho) : INFINITY;
        bool past_mean = k > mean;
        bool sf_ok = rem <= opt.rel_tol * sf_sum || rem < 1e-300;
        bool cdf_ok = rem * cdf_k <= opt.rel_tol * cdf_sum || rem * cdf_k < 1e-300;
        if (past_mean && sf_ok && cdf_ok) break;
        if (k >= opt.max_terms) {
            out.converged = false;
            break;
        }
        // advance chi-square terms: dof -> dof + 2
        double log_term = (dof_k / 2.0) * log_y2 - y / 2.0 - std::lgamma(dof_k / 2.0 + 1.0);
        double term = std::exp(log_term);
        sf_k += term;
        double next_cdf = cdf_k - term;
        dof_k += 2.0;
        cdf_k = (next_cdf < 0.5 * cdf_k) ? chi2_cdf(dof_k, y) : next_cdf;
        if (sf_k > 1.0) sf_k = 1.0;
        if (nontrivial == 1)
            log_nb += std::log((s_single + k) / (k + 1.0)) + std::log(q_single);
    }
    (void)var;
    out.sf = clamp01(sf_sum);
    out.cdf = clamp01(cdf_sum);
    out.error = out.converged ? opt.rel_tol * std::max(out.sf, 1e-300) : 1.0 - coef_sum;
    return out;
}

inline std::size_t ruben_terms_estimate(const QuadFormWeights& q) {
    double beta = q.weights.back(), mean = 0.0, var = 0.0;
    for (std::size_t i = 0; i < q.weights.size(); ++i) {
        double qi = 1.0 - beta / q.weights[i];
        double h = q.dof[i] / 2.0;
        mean += h * qi / (1.0 - qi);
        var += h * qi / ((1.0 - qi) * (1.0 - qi));
    }
    return static_cast<std::size_t>(mean + 40.0 * std::sqrt(var) + 50.0);
}

}  // namespace detail

inline QfEval wchisq_eval(QuadFormWeights q, double x, const QfOptions& opt = {}) {
    q.sort();
    q = q.truncated();
    require(!q.weights.empty(), "weighted chi-square needs a nonzero weight");
    bool all_pos = q.weights.back() > 0.0;
    bool all_neg = q.weights.front() < 0.0;
    if (all_pos && x <= 0.0) return QfEval{0.0, 1.0, 0.0, true, "trivial"};
    if (all_neg && x >= 0.0) return QfEval{1.0, 0.0, 0.0, true, "trivial"};
    if (all_pos) {
        double range = q.weights.front() / q.weights.back();
        std::size_t nonmin = 0;
        for (double w : q.weights)
            if (w > q.weights.back() * (1 + 1e-15)) ++nonmin;
        std::size_t est = detail::ruben_terms_estimate(q);
        bool cheap = (opt.ruben_power_sums && nonmin > 1) ? est < 20000 : est < opt.max_terms;
        if (range <= opt.max_dynamic_range && cheap) return detail::ruben(q, x, opt);
    }
    if (all_neg) {
        QuadFormWeights neg = q;
        for (auto& w : neg.weights) w = -w;
        neg.sort();
        QfEval e = wchisq_eval(neg, -x, opt);
        return QfEval{e.sf, e.cdf, e.error, e.converged, e.method};
    }
    return detail::imhof(q, x, opt);
}

inline double wchisq_cdf(const QuadFormWeights& q, double x, const QfOptions& opt = {}) {
    return wchisq_eval(q, x, opt).cdf;
}

inline double wchisq_sf(const QuadFormWeights& q, double x, const QfOptions& opt = {}) {
    return wchisq_eval(q, x, opt).sf;
}

// Appell F1 double series, summed along diagonals m + n = N.
struct AppellResult {
    double value = 0.0;
    std::size_t terms = 0;
    bool converged = true;
};

inline AppellResult appell_f1_eval(double a, double b1, double b2, double c, double x, double y,
                                   std::size_t max_terms = 1000000, double rel_tol = 1e-15) {
    if (!(std::abs(x) < 1.0 && std::abs(y) < 1.0)) fail(ErrorKind::Numerical, "appell_f1: outside the unit polydisc");
    AppellResult out;
    // u[m] = (b1)_m x^m / m!, v[n] = (b2)_n y^n / n!
    std::vector<double> u{1.0}, v{1.0};
    double outer = 1.0;  // (a)_N / (c)_N
    double sum = 0.0, comp = 0.0;
    int small_run = 0;
    for (std::size_t N = 0;; ++N) {
        if (N > 0) {
            outer *= (a + N - 1) / (c + N - 1);
            u.push_back(u.back() * (b1 + N - 1) / N * x);
            v.push_back(v.back() * (b2 + N - 1) / N * y);
        }
        double diag = 0.0;
        for (std::size_t m = 0; m <= N; ++m) diag += u[m] * v[N - m];
        double term = outer * diag;
        out.terms += N + 1;
        double t = term - comp;
        double s = sum + t;
        comp = (s - sum) - t;
        sum = s;
        if (std::abs(term) <= rel_tol * std::abs(sum)) {
            if (++small_run >= 3 && N > 2 * std::abs(a)) break;
        } else {
            small_run = 0;
        }
        if (out.terms >= max_terms) {
            out.converged = false;
            break;
        }
    }
    out.value = sum;
    return out;
}

inline double appell_f1(double a, double b1, double b2, double c, double x, double y) {
    auto r = appell_f1_eval(a, b1, b2, c, x, y);
    if (!r.converged) fail(ErrorKind::Numerical, "appell_f1: iteration cap reached");
    return r.value;
}

namespace detail {

// sum_{j>=0} NB(s,q)_j * G(a0 + j), where G(a) = I_y(a, 1/2) (upper = true)
// or 1 - I_y(a, 1/2). G(0) is taken as 1 (resp. 0). All terms are positive.
struct MixtureSum {
    double value = 0.0;
    std::size_t terms = 0;
    bool converged = true;
};

class NbBetaMixture {
public:
    NbBetaMixture(double s, double q, double y, double a0, bool upper)
        : s_(s), q_(q), y_(y), a0_(a0), upper_(upper) {
        log_q_ = q > 0.0 ? std::log(q) : -INFINITY;
        log1m_q_ = std::log1p(-q);
        log_y_ = y > 0.0 ? std::log(y) : -INFINITY;
        log1m_y_ = std::log1p(-y);
    }

    double log_nb(double j) const {
        if (j == 0.0) return s_ * log1m_q_;
        return std::lgamma(s_ + j) - std::lgamma(s_) - std::lgamma(j + 1.0) + j * log_q_ + s_ * log1m_q_;
    }

    double g_direct(double a) const {
        if (a == 0.0) return upper_ ? 1.0 : 0.0;
        if (y_ <= 0.0) return upper_ ? 0.0 : 1.0;
        if (y_ >= 1.0) return upper_ ? 1.0 : 0.0;
        return upper_ ? boost::math::ibeta(a, 0.5, y_) : boost::math::ibetac(a, 0.5, y_);
    }

    // I_y(a,1/2) - I_y(a+1,1/2)
    double step(double a) const {
        if (a == 0.0) return std::sqrt(1.0 - y_);  // 1 - I_y(1,1/2)
        double lt = a * log_y_ + 0.5 * log1m_y_ - std::log(a) - (std::lgamma(a) + std::lgamma(0.5) - std::lgamma(a + 0.5));
        return std::exp(lt);
    }

    // Subtractive steps lose relative accuracy as G shrinks, so G is recomputed
    // directly once it falls 1e3 below the last direct value (anchor).
    double g_up(double a, double g, double& anchor) const {
        double t = step(a);
        if (upper_) {
            double r = g - t;
            if (r < 1e-3 * anchor || r < 0.5 * g) {
                r = g_direct(a + 1.0);
                anchor = r;
            }
            return r;
        }
        return std::min(1.0, g + t);
    }

    double g_down(double a, double g, double& anchor) const {  // G(a-1) from G(a)
        double t = step(a - 1.0);
        if (upper_) return std::min(1.0, g + t);
        double r = g - t;
        if (r < 1e-3 * anchor || r < 0.5 * g) {
            r = g_direct(a - 1.0);
            anchor = r;
        }
        return r;
    }

    double log_term(double j) const {
        double g = g_direct(a0_ + j);
        return g > 0.0 ? log_nb(j) + std::log(g) : -INFINITY;
    }

    MixtureSum sum(std::size_t cap, double rel_tol) const {
        MixtureSum out;
        if (q_ <= 0.0) {
            out.value = g_direct(a0_);
            out.terms = 1;
            return out;
        }
        double mode = s_ > 1.0 ? std::floor((s_ - 1.0) * q_ / (1.0 - q_)) : 0.0;
        double start = 0.0;
        if (mode > 2000.0) {
            // integer ternary search for the peak of the (log-concave) term sequence
            double lo = 0.0, hi = mode;
            while (hi - lo > 3.0) {
                double m1 = std::floor(lo + (hi - lo) / 3.0), m2 = std::floor(hi - (hi - lo) / 3.0);
                if (log_term(m1) < log_term(m2))
                    lo = m1;
                else
                    hi = m2;
            }
            start = lo;
            double best = log_term(lo);
            for (double j = lo + 1; j <= hi; ++j)
                if (double lt = log_term(j); lt > best) {
                    best = lt;
                    start = j;
                }
        }
        double total = 0.0;
        // upward from start
        {
            double j = start, lnb = log_nb(j), g = g_direct(a0_ + j);
            double anchor = g;
            double prev = -1.0;
            for (;; j += 1.0) {
                double term = g > 0.0 ? std::exp(lnb + std::log(g)) : 0.0;
                total += term;
                ++out.terms;
                double ratio_nb = q_ * (s_ + j) / (j + 1.0);
                bool done = false;
                if (upper_ && prev > 0.0 && term < prev) {
                    double rho = term / prev;
                    done = term * rho / (1.0 - rho) <= rel_tol * total;
                }
                if (!done && j >= mode) {
                    double rho = s_ >= 1.0 ? ratio_nb : std::max(ratio_nb, q_);
                    double bound = upper_ ? term : std::exp(lnb);
                    double rem = rho < 1.0 ? bound * rho / (1.0 - rho) : INFINITY;
                    done = rem <= rel_tol * total || rem < 1e-300;
                }
                if (done) break;
                if (out.terms >= cap) {
                    out.converged = false;
                    break;
                }
                prev = term;
                lnb += std::log((s_ + j) / (j + 1.0)) + log_q_;
                g = g_up(a0_ + j, g, anchor);
            }
        }
        // downward from start - 1
        if (start > 0.0) {
            double j = start, lnb = log_nb(j), g = g_direct(a0_ + j);
            double anchor = g;
            double prev = g > 0.0 ? std::exp(lnb + std::log(g)) : 0.0;
            while (j > 0.0) {
                lnb -= std::log((s_ + j - 1.0) / j) + log_q_;
                g = g_down(a0_ + j, g, anchor);
                j -= 1.0;
                double term = g > 0.0 ? std::exp(lnb + std::log(g)) : 0.0;
                total += term;
                ++out.terms;
                double rho = prev > 0.0 ? term / prev : 0.0;
                if (rho < 1.0 && term * rho / (1.0 - rho) <= rel_tol * total) break;
                if (out.terms >= cap) {
                    out.converged = false;
                    break;
                }
                prev = term;
            }
        }
        out.value = total;
        return out;
    }

private:
    double s_, q_, y_, a0_;
    bool upper_;
    double log_q_, log1m_q_, log_y_, log1m_y_;
};

}  // namespace detail

struct GenFParams {
    double alpha1 = 1.0;
    double alpha2 = 0.0;
    double nu = 1.0;
};

struct GenFEval {
    double cdf = 0.0;
    double sf = 1.0;
    std::size_t terms = 0;
    bool converged = true;
};

// Generalised F: the printed closed form G is the CDF of
// (alpha1/2 Q1^2 + alpha2/2 Q2^2) / (chi2_nu / nu). Evaluated as a negative
// binomial mixture of incomplete beta functions, which is the Appell series
// summed along its diagonals and keeps relative accuracy in both tails.
inline GenFEval genf_eval(GenFParams p, double x, std::size_t cap = 50000000, double rel_tol = 1e-14) {
    if (p.alpha2 > p.alpha1) std::swap(p.alpha1, p.alpha2);
    require(p.alpha1 > 0.0 && p.alpha2 >= 0.0 && p.nu > 0.0, "genf: invalid parameters");
    GenFEval out;
    if (x <= 0.0) return out;
    const double w1 = p.alpha1 / 2.0, w2 = p.alpha2 / 2.0, t = x / p.nu;
    if (w2 == 0.0) {
        double z = t / (w1 + t);
        out.sf = boost::math::ibetac(0.5, p.nu / 2.0, z);
        out.cdf = boost::math::ibeta(0.5, p.nu / 2.0, z);
        out.terms = 1;
        return out;
    }
    const double v = t / (t + w2);
    const double r = 1.0 - w2 / w1;
    detail::NbBetaMixture up(p.nu / 2.0, v, r, 0.0, true);
    auto s = up.sum(cap, rel_tol);
    out.sf = clamp01(s.value);
    out.terms = s.terms;
    out.converged = s.converged;
    if (out.sf > 0.5) {
        detail::NbBetaMixture lo(p.nu / 2.0, v, r, 0.0, false);
        auto c = lo.sum(cap, rel_tol);
        out.cdf = clamp01(c.value);
        out.terms += c.terms;
        out.converged = out.converged && c.converged;
    } else {
        out.cdf = 1.0 - out.sf;
    }
    return out;
}

inline double genf_cdf(const GenFParams& p, double x) { return genf_eval(p, x).cdf; }
inline double genf_sf(const GenFParams& p, double x) { return genf_eval(p, x).sf; }

// Literal evaluation of the closed form through the Appell series.
inline double genf_cdf_closed_form(const GenFParams& p, double x) {
    require(p.alpha1 >= p.alpha2 && p.alpha2 > 0.0, "closed form needs alpha1 >= alpha2 > 0");
    if (x <= 0.0) return 0.0;
    const double a1 = p.alpha1, a2 = p.alpha2, nu = p.nu;
    double pre = std::pow(nu * a2 / (2.0 * x + nu * a2), nu / 2.0 + 1.0) * x / std::sqrt(a1 * a2);
    double den = x + nu * a2 / 2.0;
    return pre * appell_f1(nu / 2.0 + 1.0, 0.5, 1.0, 2.0, (1.0 - a2 / a1) * x / den, x / den);
}

// P(w1 Q1^2 + w2 Q2^2 >= t) for w1 >= w2 > 0, by the periodic trapezoid rule
// on the polar representation exp(-t / (2 g(theta))).
inline double chi2_pair_sf(double w1, double w2, double t) {
    if (t <= 0.0) return 1.0;
    if (w2 > w1) std::swap(w1, w2);
    if (w2 <= 0.0) return detail::chi2_sf(1.0, t / w1);
    auto f = [&](double th) {
        double c = std::cos(th), s = std::sin(th);
        return std::exp(-t / (2.0 * (w1 * c * c + w2 * s * s)));
    };
    // integrand is pi-periodic and even; average over a full period
    double prev = -1.0;
    for (std::size_t n = 16; n <= (1u << 20); n *= 2) {
        double h = M_PI / n, sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) sum += f(i * h);
        double val = sum / n;
        if (prev >= 0.0 && std::abs(val - prev) <= 1e-13 * val) return val;
        prev = val;
    }
    return prev;
}

struct PvalueBounds {
    double p_star = 1.0;
    double p_star2 = 1.0;
};

inline PvalueBounds pvalue_bounds(double l1, double l2, double k, long n) {
    require(n >= 5, "pvalue_bounds: n >= 5 required");
    if (l2 > l1) std::swap(l1, l2);
    if (l2 < 0.0) l2 = 0.0;
    if (l1 <= 0.0 || k <= 0.0) return {1.0, 1.0};
    const double dn = static_cast<double>(n), c = k / dn;
    if (l1 * dn - k <= 0.0) return {0.0, 0.0};
    PvalueBounds out;
    if (l2 - c > 0.0) {
        double a = chi2_pair_sf(l1 - c, l2 - c, k * (dn - 3.0) / dn);
        double b = detail::f_sf(1.0, dn - 3.0, k * (dn - 3.0) / (l1 * dn - k));
        double e = detail::f_sf(2.0, dn - 3.0, k * (dn - 3.0) / std::sqrt((l1 * dn - k) * (l2 * dn - k)));
        out.p_star = std::max({a, b, e});
        double den = (l1 + l2) * dn - 2.0 * k;
        out.p_star2 = std::min(1.0, 5.0 * detail::f_sf(1.0, dn - 2.0, k * (dn - 2.0) / den));
    } else {
        out.p_star = detail::f_sf(1.0, dn - 2.0, k * (dn - 2.0) / (l1 * dn - k));
        out.p_star2 = detail::f_sf(1.0, dn - 3.0, k * (dn - 3.0) / (l1 * dn - k));
    }
    return out;
}

struct TnTail {
    double p = 1.0;
    std::size_t terms = 0;
    bool converged = true;
    const char* method = "";
};

// P(T_n >= 0) with T_n = (l1-c)Q1^2 + (l2-c)Q2^2 - c chi2_nu, c = k/n,
// nu = n - q - 3 where q counts covariates besides the intercept.
inline TnTail tn_tail_eval(double l1, double l2, double k, long n, long q = 0) {
    require(q >= 0, "tn_tail: negative covariate count");
    const double nu = static_cast<double>(n - q - 3);
    require(nu >= 1.0, "tn_tail: too few samples for the covariate count");
    if (l2 > l1) std::swap(l1, l2);
    if (l2 < 0.0) l2 = 0.0;
    TnTail out;
    if (k <= 0.0 || l1 <= 0.0) {
        out.method = "trivial";
        return out;
    }
    const double c = k / static_cast<double>(n);
    const double w1 = l1 - c, w2 = l2 - c;
    if (w1 <= 0.0) {
        out.p = 0.0;
        out.method = "trivial";
        return out;
    }
    constexpr std::size_t cap = 20000000;
    if (w2 > 0.0) {
        auto g = genf_eval({2.0 * w1, 2.0 * w2, nu}, c * nu, cap);
        out.p = g.sf;
        out.terms = g.terms;
        out.converged = g.converged;
        out.method = "genf";
    } else if (w2 == 0.0) {
        out.p = boost::math::ibetac(0.5, nu / 2.0, c / (w1 + c));
        out.terms = 1;
        out.method = "f";
    } else {
        // -|w2| Q2^2 - c chi2_nu = -|w2| chi2_{nu+1+2J}, J ~ NB(nu/2, 1 - |w2|/c)
        const double d1 = -w2;
        const double z = d1 / (w1 + d1);
        detail::NbBetaMixture mix(nu / 2.0, 1.0 - d1 / c, 1.0 - z, (nu + 1.0) / 2.0, true);
        auto s = mix.sum(cap, 1e-14);
        out.p = s.value;
        out.terms = s.terms;
        out.converged = s.converged;
        out.method = "f-mixture";
    }
    if (!out.converged) {
        QfOptions opt;
        opt.abs_tol = 1e-13;
        auto e = detail::imhof(QuadFormWeights({w1, w2, -c}, {1, 1, static_cast<int>(nu)}), 0.0, opt);
        out.p = e.sf;
        out.converged = e.converged;
        out.method = "imhof";
    }
    out.p = clamp01(out.p);
    return out;
}

inline double tn_tail(double l1, double l2, double k, long n, long q = 0) { return tn_tail_eval(l1, l2, k, n, q).p; }

}  // namespace genodcov
