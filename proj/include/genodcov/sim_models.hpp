#pragma once

// Population models and samplers for every simulation design.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "common.hpp"
#include "geno_model.hpp"

namespace genodcov {

// Engine keyed by (seed, stream): replicate r always sees the same draws no
// matter which worker runs it or in which order.
class SeededGenerator {
public:
    using result_type = std::uint64_t;

    SeededGenerator(std::uint64_t seed, std::uint64_t stream = 0) : seed_(seed), stream_(stream) {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                          0x9e3779b9u};
        engine_.seed(seq);
    }

    static constexpr result_type min() { return std::mt19937_64::min(); }
    static constexpr result_type max() { return std::mt19937_64::max(); }
    result_type operator()() { return engine_(); }

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream() const { return stream_; }

    double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
    double normal(double mean = 0.0, double sd = 1.0) { return std::normal_distribution<double>(mean, sd)(engine_); }

    // index drawn from a discrete distribution given cumulative probabilities
    std::size_t categorical(const std::vector<double>& cum) {
        double u = uniform() * cum.back();
        auto it = std::upper_bound(cum.begin(), cum.end(), u);
        return std::min<std::size_t>(static_cast<std::size_t>(it - cum.begin()), cum.size() - 1);
    }

private:
    std::uint64_t seed_, stream_;
    std::mt19937_64 engine_;
};

inline std::vector<double> cumulative(const std::vector<double>& p) {
    std::vector<double> c(p.size());
    std::partial_sum(p.begin(), p.end(), c.begin());
    return c;
}

inline std::array<double, 3> hwe_genotype_probs(double maf) {
    return {(1.0 - maf) * (1.0 - maf), 2.0 * maf * (1.0 - maf), maf * maf};
}

inline GenotypeVector sample_hwe_genotypes(double maf, std::size_t n, SeededGenerator& gen) {
    require(maf > 0.0 && maf <= 0.5, "maf must lie in (0, 0.5]");
    auto p = hwe_genotype_probs(maf);
    auto cum = cumulative({p[0], p[1], p[2]});
    GenotypeVector x(n);
    for (auto& v : x) v = static_cast<std::uint8_t>(gen.categorical(cum));
    return x;
}

struct JointTernaryModel {
    Table3 p{};

    std::array<double, 3> row_marginal() const {
        return {p[0][0] + p[0][1] + p[0][2], p[1][0] + p[1][1] + p[1][2], p[2][0] + p[2][1] + p[2][2]};
    }
    std::array<double, 3> col_marginal() const {
        return {p[0][0] + p[1][0] + p[2][0], p[0][1] + p[1][1] + p[2][1], p[0][2] + p[1][2] + p[2][2]};
    }
};

namespace detail {
inline void validate_table(const Table3& t, const char* what) {
    double s = 0.0;
    for (auto& r : t)
        for (double v : r) {
            if (!(v >= -1e-15 && v <= 1.0 + 1e-15)) fail(ErrorKind::InvalidArgument, std::string(what) + ": infeasible parameters");
            s += v;
        }
    if (std::abs(s - 1.0) > 1e-12) fail(ErrorKind::InvalidArgument, std::string(what) + ": cells do not sum to 1");
}
}  // namespace detail

inline JointTernaryModel qexp_table(double p, double q, double r, double s, double e) {
    require(e >= 1.0, "qexp requires e >= 1");
    const double qe = std::pow(q, e), o = 1.0 - p - q, t = 1.0 - r - s;
    JointTernaryModel m;
    m.p = {{{p * r + qe * s - q * s, p * s - qe * s + q * s, p * t},
            {q * r - qe * s + q * s, qe * s, q * t},
            {o * r, o * s, o * t}}};
    detail::validate_table(m.p, "qexp");
    return m;
}

inline JointTernaryModel qmult_table(double p, double q, double r, double s, double g) {
    require(g >= 0.0 && g <= 1.0, "qmult requires 0 <= g <= 1");
    const double d = (1.0 - g) * q * s, o = 1.0 - p - q, t = 1.0 - r - s;
    JointTernaryModel m;
    m.p = {{{p * r - d, p * s + d, p * t}, {q * r + d, g * q * s, q * t}, {o * r, o * s, o * t}}};
    detail::validate_table(m.p, "qmult");
    return m;
}

inline JointTernaryModel independent_table(const std::array<double, 3>& a, const std::array<double, 3>& b) {
    JointTernaryModel m;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) m.p[i][j] = a[i] * b[j];
    return m;
}

inline std::pair<GenotypeVector, GenotypeVector> sample_joint(const JointTernaryModel& m, std::size_t n,
                                                              SeededGenerator& gen) {
    std::vector<double> flat;
    for (auto& r : m.p)
        for (double v : r) flat.push_back(std::max(0.0, v));
    auto cum = cumulative(flat);
    GenotypeVector a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto c = gen.categorical(cum);
        a[i] = static_cast<std::uint8_t>(c / 3);
        b[i] = static_cast<std::uint8_t>(c % 3);
    }
    return {a, b};
}

struct PowerSample {
    GenotypeVector x;
    std::vector<double> y;
};

inline PowerSample sample_power_model(double maf, double h, double beta, std::size_t n, SeededGenerator& gen,
                                      double sigma2 = 25.0) {
    PowerSample s;
    s.x = sample_hwe_genotypes(maf, n, gen);
    s.y.resize(n);
    const double sd = std::sqrt(sigma2);
    for (std::size_t i = 0; i < n; ++i) {
        double mu = s.x[i] == 1 ? h * beta : (s.x[i] == 2 ? beta : 0.0);
        s.y[i] = mu + gen.normal(0.0, sd);
    }
    return s;
}

inline double decaying_eps_max(int I, int J) {
    const double a = (1.0 - std::ldexp(1.0, -I)) * (1.0 - std::ldexp(1.0, -J));
    return std::min(1.0 / (8.0 * a), 1.0 - 1.0 / (4.0 * a));
}

// p_ij = 2^{-(i+j)} / ((1-2^{-I})(1-2^{-J})) for i,j >= 1, with +eps at (1,1),(2,2)
// and -eps at (1,2),(2,1).
inline Eigen::MatrixXd decaying_marginals(int I, int J, double eps) {
    require(I >= 2 && J >= 2, "decaying marginals need I, J >= 2");
    require(eps >= 0.0 && eps <= decaying_eps_max(I, J) + 1e-15, "eps outside the admissible range");
    const double a = (1.0 - std::ldexp(1.0, -I)) * (1.0 - std::ldexp(1.0, -J));
    Eigen::MatrixXd p(I, J);
    for (int i = 1; i <= I; ++i)
        for (int j = 1; j <= J; ++j) p(i - 1, j - 1) = std::ldexp(1.0, -(i + j)) / a;
    p(0, 0) += eps;
    p(1, 1) += eps;
    p(0, 1) -= eps;
    p(1, 0) -= eps;
    return p;
}

enum class HweModel { S2, K2, S3, K3 };

inline HweModel parse_hwe_model(const std::string& s) {
    if (s == "2S") return HweModel::S2;
    if (s == "2K") return HweModel::K2;
    if (s == "3S") return HweModel::S3;
    if (s == "3K") return HweModel::K3;
    fail(ErrorKind::InvalidArgument, "unknown HWE departure model: " + s);
}

// Triallelic order: A1A1, A2A2, A3A3, A1A2, A1A3, A2A3.
inline std::vector<double> hwe_departure(HweModel model, double param) {
    switch (model) {
        case HweModel::S2:
            require(param >= 0.0 && param <= 1.0, "2S requires s in [0,1]");
            return {4.0 * (1.0 - param) / 9.0, 4.0 * (1.0 - param) / 9.0, (1.0 + 8.0 * param) / 9.0};
        case HweModel::K2:
            require(param >= -1.0 && param <= 1.0, "2K requires k in [-1,1]");
            return {(1.0 - param) / 4.0, (1.0 + param) / 2.0, (1.0 - param) / 4.0};
        case HweModel::S3:
            require(param >= 0.0 && param <= 1.0, "3S requires s in [0,1]");
            return {0.49 * (1.0 - param), (1.0 + 15.0 * param) / 16.0, 0.0025 * (1.0 - param),
                    0.35 * (1.0 - param),  0.07 * (1.0 - param),         0.025 * (1.0 - param)};
        case HweModel::K3: {
            require(param >= -0.5 && param <= 1.0, "3K requires k in [-1/2,1]");
            double h = (2.0 * param + 1.0) / 9.0, e = (2.0 - 2.0 * param) / 9.0;
            return {h, h, h, e, e, e};
        }
    }
    return {};
}

inline std::vector<long> sample_counts(const std::vector<double>& probs, std::size_t n, SeededGenerator& gen) {
    auto cum = cumulative(probs);
    std::vector<long> c(probs.size(), 0);
    for (std::size_t i = 0; i < n; ++i) ++c[gen.categorical(cum)];
    return c;
}

inline Eigen::MatrixXi sample_table(const Eigen::MatrixXd& probs, std::size_t n, SeededGenerator& gen) {
    std::vector<double> flat(probs.size());
    for (Eigen::Index i = 0; i < probs.rows(); ++i)
        for (Eigen::Index j = 0; j < probs.cols(); ++j) flat[i * probs.cols() + j] = std::max(0.0, probs(i, j));
    auto c = sample_counts(flat, n, gen);
    Eigen::MatrixXi t(probs.rows(), probs.cols());
    for (Eigen::Index i = 0; i < probs.rows(); ++i)
        for (Eigen::Index j = 0; j < probs.cols(); ++j) t(i, j) = static_cast<int>(c[i * probs.cols() + j]);
    return t;
}

// Number of permutations used for the resampling oracle.
inline std::size_t default_permutations(std::size_t n) { return 200 + 5000 / std::max<std::size_t>(n, 1); }

}  // namespace genodcov
