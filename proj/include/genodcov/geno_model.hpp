#pragma once

// Genotype-space geometry: premetrics on {0,1,2}, induced kernels, feature
// maps, pair matrices and the generic GDC / HSIC estimators.

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "common.hpp"

namespace genodcov {

using Table3 = std::array<std::array<double, 3>, 3>;

class SnpDistanceSpec {
public:
    enum class Kind { DB, Dominant, Recessive, Heterozygous };

    static SnpDistanceSpec db(double b) {
        require(b >= 0.0 && b <= 4.0, "d_b requires 0 <= b <= 4");
        return SnpDistanceSpec(Kind::DB, b);
    }
    static SnpDistanceSpec discrete() { return db(1.0); }
    static SnpDistanceSpec euclidean() { return db(2.0); }
    static SnpDistanceSpec squared() { return db(4.0); }
    static SnpDistanceSpec dominant() { return SnpDistanceSpec(Kind::Dominant, 0.0); }
    static SnpDistanceSpec recessive() { return SnpDistanceSpec(Kind::Recessive, 0.0); }
    static SnpDistanceSpec heterozygous() { return SnpDistanceSpec(Kind::Heterozygous, 0.0); }

    static SnpDistanceSpec parse(const std::string& s) {
        if (s == "discrete") return discrete();
        if (s == "euclidean") return euclidean();
        if (s == "dominant") return dominant();
        if (s == "recessive") return recessive();
        if (s == "heterozygous") return heterozygous();
        if (s.rfind("db:", 0) == 0) return db(std::stod(s.substr(3)));
        fail(ErrorKind::InvalidArgument, "unknown metric: " + s);
    }

    Kind kind() const { return kind_; }
    double b() const { return b_; }
    bool is_db() const { return kind_ == Kind::DB; }

    std::string name() const {
        switch (kind_) {
            case Kind::Dominant: return "dominant";
            case Kind::Recessive: return "recessive";
            case Kind::Heterozygous: return "heterozygous";
            default: break;
        }
        if (b_ == 1.0) return "discrete";
        if (b_ == 2.0) return "euclidean";
        return "db:" + std::to_string(b_);
    }

    Table3 table() const {
        Table3 t{};
        auto set = [&](int i, int j, double v) { t[i][j] = t[j][i] = v; };
        switch (kind_) {
            case Kind::DB: set(0, 1, 1.0); set(1, 2, 1.0); set(0, 2, b_); break;
            case Kind::Recessive: set(0, 1, 0.0); set(0, 2, 1.0); set(1, 2, 1.0); break;
            case Kind::Heterozygous: set(0, 2, 0.0); set(0, 1, 1.0); set(1, 2, 1.0); break;
            case Kind::Dominant: set(1, 2, 0.0); set(0, 1, 1.0); set(0, 2, 1.0); break;
        }
        return t;
    }

private:
    SnpDistanceSpec(Kind k, double b) : kind_(k), b_(b) {}
    Kind kind_;
    double b_;
};

inline double distance_eval(const SnpDistanceSpec& spec, int x, int y) {
    require(x >= 0 && x <= 2 && y >= 0 && y <= 2, "genotype outside {0,1,2}");
    return spec.table()[x][y];
}

inline Table3 induced_kernel(const Table3& rho, int center) {
    require(center >= 0 && center <= 2, "kernel centre outside {0,1,2}");
    Table3 k{};
    for (int x = 0; x < 3; ++x)
        for (int y = 0; y < 3; ++y) k[x][y] = rho[x][center] + rho[y][center] - rho[x][y];
    return k;
}

inline Table3 induced_kernel(const SnpDistanceSpec& spec, int center) { return induced_kernel(spec.table(), center); }

inline Table3 induced_semimetric(const Table3& k) {
    Table3 r{};
    for (int x = 0; x < 3; ++x)
        for (int y = 0; y < 3; ++y) r[x][y] = (k[x][x] + k[y][y]) / 2.0 - k[x][y];
    return r;
}

inline Eigen::Matrix3d to_matrix(const Table3& t) {
    Eigen::Matrix3d m;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) m(i, j) = t[i][j];
    return m;
}

inline bool is_psd(const Table3& k, double tol = 1e-12) {
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(to_matrix(k));
    return es.eigenvalues().minCoeff() >= -tol;
}

struct FeatureMap {
    double b = 2.0;
    bool dosage_mode = false;
    double s1 = 1.0;  // sqrt(b/2)
    double s2 = 1.0;  // sqrt((4-b)/2)

    double phi1(double x) const {
        if (dosage_mode) return s1 * x;
        return x == 0.0 ? -s1 : (x == 2.0 ? s1 : 0.0);
    }
    double phi2(double x) const {
        if (dosage_mode) return s2 * std::abs(x - 1.0);
        return x == 1.0 ? s2 : 0.0;
    }
};

inline FeatureMap feature_map(double b, bool dosage_mode = false) {
    require(b >= 0.0 && b <= 4.0, "feature map requires 0 <= b <= 4");
    FeatureMap f;
    f.b = b;
    f.dosage_mode = dosage_mode;
    f.s1 = std::sqrt(b / 2.0);
    f.s2 = std::sqrt((4.0 - b) / 2.0);
    return f;
}

// <Phi(x), Phi(x')> on genotypes; its induced semimetric is d_b.
inline Table3 feature_kernel(double b) {
    auto f = feature_map(b);
    Table3 k{};
    for (int x = 0; x < 3; ++x)
        for (int y = 0; y < 3; ++y) k[x][y] = f.phi1(x) * f.phi1(y) + f.phi2(x) * f.phi2(y);
    return k;
}

enum class PairTag { Distance, Kernel, Centered };

struct PairMatrix {
    Eigen::MatrixXd values;
    PairTag tag = PairTag::Distance;
};

inline PairMatrix distance_matrix(const SnpDistanceSpec& spec, const GenotypeVector& x) {
    const auto t = spec.table();
    const auto n = static_cast<Eigen::Index>(x.size());
    PairMatrix m{Eigen::MatrixXd(n, n), PairTag::Distance};
    for (Eigen::Index i = 0; i < n; ++i) {
        require(x[i] <= 2, "distance_matrix: missing genotype");
        for (Eigen::Index j = 0; j < n; ++j) m.values(i, j) = t[x[i]][x[j]];
    }
    return m;
}

inline PairMatrix kernel_matrix(const Table3& k, const GenotypeVector& x) {
    const auto n = static_cast<Eigen::Index>(x.size());
    PairMatrix m{Eigen::MatrixXd(n, n), PairTag::Kernel};
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) m.values(i, j) = k[x[i]][x[j]];
    return m;
}

// rho(y, y') = |y - y'|^power / scale
inline PairMatrix real_distance_matrix(const std::vector<double>& y, double power = 2.0, double scale = 2.0) {
    const auto n = static_cast<Eigen::Index>(y.size());
    PairMatrix m{Eigen::MatrixXd(n, n), PairTag::Distance};
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) m.values(i, j) = std::pow(std::abs(y[i] - y[j]), power) / scale;
    return m;
}

inline PairMatrix double_center(const PairMatrix& m) {
    require(m.values.rows() == m.values.cols(), "double_center: square matrix required");
    Eigen::VectorXd row = m.values.rowwise().mean();
    Eigen::RowVectorXd col = m.values.colwise().mean();
    double all = m.values.mean();
    PairMatrix out{m.values, PairTag::Centered};
    out.values.colwise() -= row;
    out.values.rowwise() -= col;
    out.values.array() += all;
    return out;
}

inline double gdc_statistic(const PairMatrix& dx, const PairMatrix& dy) {
    require(dx.values.rows() == dy.values.rows() && dx.values.cols() == dy.values.cols(),
            "gdc_statistic: dimension mismatch");
    const double n = static_cast<double>(dx.values.rows());
    PairMatrix cy = dy.tag == PairTag::Centered ? dy : double_center(dy);
    return (dx.values.cwiseProduct(cy.values)).sum() / (n * n);
}

inline double gdc_statistic_double(const PairMatrix& dx, const PairMatrix& dy) {
    const double n = static_cast<double>(dx.values.rows());
    return (double_center(dx).values.cwiseProduct(double_center(dy).values)).sum() / (n * n);
}

inline double hsic_statistic(const PairMatrix& kx, const PairMatrix& ky) {
    require(kx.values.rows() == ky.values.rows(), "hsic_statistic: dimension mismatch");
    const double n = static_cast<double>(kx.values.rows());
    return (double_center(kx).values.cwiseProduct(double_center(ky).values)).sum() / (n * n);
}

// (1/n^2) sum_ij <X_i, X_j> <Y_i - mu, Y_j - mu> for feature rows X and response rows Y.
inline double global_test_statistic(const Eigen::MatrixXd& features, const Eigen::MatrixXd& y) {
    require(features.rows() == y.rows(), "global_test_statistic: dimension mismatch");
    const double n = static_cast<double>(y.rows());
    Eigen::MatrixXd yc = y.rowwise() - y.colwise().mean();
    Eigen::MatrixXd cross = features.transpose() * yc;
    return cross.squaredNorm() / (n * n);
}

inline Eigen::MatrixXd feature_matrix(const FeatureMap& f, const std::vector<double>& x) {
    Eigen::MatrixXd u(static_cast<Eigen::Index>(x.size()), 2);
    for (std::size_t i = 0; i < x.size(); ++i) {
        u(i, 0) = f.phi1(x[i]);
        u(i, 1) = f.phi2(x[i]);
    }
    return u;
}

// Nonzero spectrum of the asymptotic covariance operator for a kernel on a
// finite support with cell probabilities p: eigenvalues of
// diag(p)^{1/2} (I - 1p^t) K (I - p1^t) diag(p)^{1/2}.
inline std::vector<double> multinomial_spectrum(const Eigen::MatrixXd& kernel, const Eigen::VectorXd& p,
                                                double rel_tol = 1e-12) {
    const auto m = p.size();
    Eigen::MatrixXd c = Eigen::MatrixXd::Identity(m, m) - Eigen::VectorXd::Ones(m) * p.transpose();
    Eigen::MatrixXd kc = c * kernel * c.transpose();
    Eigen::VectorXd sq = p.cwiseMax(0.0).cwiseSqrt();
    Eigen::MatrixXd s = sq.asDiagonal() * kc * sq.asDiagonal();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (s + s.transpose()));
    std::vector<double> out;
    double tr = std::max(0.0, s.trace());
    for (Eigen::Index i = es.eigenvalues().size() - 1; i >= 0; --i)
        if (es.eigenvalues()(i) > rel_tol * tr) out.push_back(es.eigenvalues()(i));
    return out;
}

}  // namespace genodcov
