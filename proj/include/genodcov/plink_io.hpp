#pragma once

// PLINK .bed/.bim/.fam reading and writing, QC filters, phenotype and
// covariate tables, dosage tables, and the results file.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "categorical.hpp"
#include "common.hpp"
#include "genotype_matrix.hpp"

namespace genodcov {

struct FamRecord {
    std::string fid, iid, father = "0", mother = "0";
    int sex = 0;
    std::string pheno = "-9";
};

struct BimRecord {
    std::string chrom, id;
    double cm = 0.0;
    long long bp = 0;
    std::string a1, a2;
};

struct BedDataset {
    std::vector<FamRecord> samples;
    std::vector<BimRecord> variants;
    PackedGenotypes genotypes;
};

namespace detail {
inline std::vector<std::string> split_ws(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream is(line);
    std::string tok;
    while (is >> tok) out.push_back(tok);
    return out;
}

inline std::vector<std::string> split_tab(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == '\t') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

inline std::ifstream open_in(const std::string& path, std::ios::openmode mode = std::ios::in) {
    std::ifstream in(path, mode);
    if (!in) fail(ErrorKind::Io, "cannot open " + path);
    return in;
}

// Write through a temporary file, then rename over the target.
template <class F>
void atomic_write(const std::string& path, F&& body, std::ios::openmode mode = std::ios::out) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, mode | std::ios::trunc);
        if (!out) fail(ErrorKind::Io, "cannot write " + path);
        body(out);
        out.flush();
        if (!out) {
            out.close();
            std::remove(tmp.c_str());
            fail(ErrorKind::Io, "write failed for " + path);
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::remove(tmp.c_str());
        fail(ErrorKind::Io, "cannot rename into " + path + ": " + ec.message());
    }
}

inline bool is_missing_token(const std::string& s) {
    return s.empty() || s == "NA" || s == "na" || s == "NaN" || s == "nan" || s == ".";
}

inline double parse_real(const std::string& s, const std::string& where) {
    if (is_missing_token(s)) return std::numeric_limits<double>::quiet_NaN();
    try {
        std::size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        fail(ErrorKind::Format, where + ": not a number: '" + s + "'");
    }
}
}  // namespace detail

inline std::vector<FamRecord> read_fam(const std::string& path) {
    auto in = detail::open_in(path);
    std::vector<FamRecord> out;
    std::string line;
    std::size_t ln = 0;
    while (std::getline(in, line)) {
        ++ln;
        auto f = detail::split_ws(line);
        if (f.empty()) continue;
        if (f.size() < 6) fail(ErrorKind::Format, path + ":" + std::to_string(ln) + ": expected 6 columns");
        FamRecord r{f[0], f[1], f[2], f[3], std::atoi(f[4].c_str()), f[5]};
        out.push_back(r);
    }
    return out;
}

inline std::vector<BimRecord> read_bim(const std::string& path) {
    auto in = detail::open_in(path);
    std::vector<BimRecord> out;
    std::string line;
    std::size_t ln = 0;
    while (std::getline(in, line)) {
        ++ln;
        auto f = detail::split_ws(line);
        if (f.empty()) continue;
        if (f.size() < 6) fail(ErrorKind::Format, path + ":" + std::to_string(ln) + ": expected 6 columns");
        BimRecord r;
        r.chrom = f[0];
        r.id = f[1];
        try {
            r.cm = std::stod(f[2]);
            r.bp = std::stoll(f[3]);
        } catch (const std::exception&) {
            fail(ErrorKind::Format, path + ":" + std::to_string(ln) + ": bad position");
        }
        r.a1 = f[4];
        r.a2 = f[5];
        out.push_back(r);
    }
    return out;
}

inline PackedGenotypes read_bed(const std::string& path, std::size_t n_samples, std::size_t n_snps,
                                bool count_allele1 = true) {
    auto in = detail::open_in(path, std::ios::in | std::ios::binary);
    unsigned char magic[3] = {0, 0, 0};
    in.read(reinterpret_cast<char*>(magic), 3);
    if (in.gcount() != 3 || magic[0] != 0x6C || magic[1] != 0x1B)
        fail(ErrorKind::Format, path + ": not a PLINK .bed file (bad magic bytes)");
    if (magic[2] == 0x00)
        fail(ErrorKind::Format, path + ": individual-major .bed is not supported; convert with 'plink --make-bed'");
    if (magic[2] != 0x01) fail(ErrorKind::Format, path + ": unknown .bed mode byte");
    PackedGenotypes g;
    g.n_samples = n_samples;
    g.n_snps = n_snps;
    g.count_allele1 = count_allele1;
    g.bytes.resize(n_snps * g.stride());
    in.read(reinterpret_cast<char*>(g.bytes.data()), static_cast<std::streamsize>(g.bytes.size()));
    if (static_cast<std::size_t>(in.gcount()) != g.bytes.size())
        fail(ErrorKind::Format, path + ": truncated genotype payload");
    char extra;
    if (in.read(&extra, 1); in.gcount() != 0)
        fail(ErrorKind::Format, path + ": payload longer than variants x ceil(samples/4)");
    return g;
}

inline BedDataset read_plink_triplet(const std::string& stem, bool count_allele1 = true) {
    BedDataset ds;
    ds.samples = read_fam(stem + ".fam");
    ds.variants = read_bim(stem + ".bim");
    ds.genotypes = read_bed(stem + ".bed", ds.samples.size(), ds.variants.size(), count_allele1);
    return ds;
}

inline void write_plink_triplet(const BedDataset& ds, const std::string& stem) {
    require(ds.genotypes.n_samples == ds.samples.size() && ds.genotypes.n_snps == ds.variants.size(),
            "write_plink_triplet: inconsistent dataset");
    detail::atomic_write(stem + ".fam", [&](std::ostream& o) {
        for (auto& s : ds.samples)
            o << s.fid << ' ' << s.iid << ' ' << s.father << ' ' << s.mother << ' ' << s.sex << ' ' << s.pheno << '\n';
    });
    detail::atomic_write(stem + ".bim", [&](std::ostream& o) {
        o << std::setprecision(17);
        for (auto& v : ds.variants)
            o << v.chrom << '\t' << v.id << '\t' << v.cm << '\t' << v.bp << '\t' << v.a1 << '\t' << v.a2 << '\n';
    });
    detail::atomic_write(
        stem + ".bed",
        [&](std::ostream& o) {
            const unsigned char magic[3] = {0x6C, 0x1B, 0x01};
            o.write(reinterpret_cast<const char*>(magic), 3);
            o.write(reinterpret_cast<const char*>(ds.genotypes.bytes.data()),
                    static_cast<std::streamsize>(ds.genotypes.bytes.size()));
        },
        std::ios::out | std::ios::binary);
}

// Keep only the listed SNPs, preserving order.
inline BedDataset subset_snps(const BedDataset& ds, const std::vector<std::size_t>& keep) {
    BedDataset out;
    out.samples = ds.samples;
    out.genotypes.n_samples = ds.genotypes.n_samples;
    out.genotypes.count_allele1 = ds.genotypes.count_allele1;
    out.genotypes.n_snps = keep.size();
    const std::size_t st = ds.genotypes.stride();
    out.genotypes.bytes.resize(keep.size() * st);
    for (std::size_t k = 0; k < keep.size(); ++k) {
        out.variants.push_back(ds.variants[keep[k]]);
        std::copy_n(ds.genotypes.snp(keep[k]), st, out.genotypes.bytes.data() + k * st);
    }
    return out;
}

// Keep only the samples with mask[i] true.
inline PackedGenotypes subset_samples(const PackedGenotypes& g, const std::vector<bool>& mask) {
    require(mask.size() == g.n_samples, "subset_samples: mask length mismatch");
    std::size_t n = 0;
    for (bool b : mask) n += b;
    PackedGenotypes out;
    out.n_samples = n;
    out.n_snps = g.n_snps;
    out.count_allele1 = g.count_allele1;
    out.bytes.assign(out.n_snps * out.stride(), 0);
    for (std::size_t j = 0; j < g.n_snps; ++j) {
        const auto* src = g.snp(j);
        auto* dst = out.snp(j);
        std::size_t k = 0;
        for (std::size_t i = 0; i < g.n_samples; ++i) {
            if (!mask[i]) continue;
            std::uint8_t f = (src[i >> 2] >> (2 * (i & 3))) & 3u;
            dst[k >> 2] |= static_cast<std::uint8_t>(f << (2 * (k & 3)));
            ++k;
        }
    }
    return out;
}

struct QcConfig {
    double maf_min = 0.01;
    double hwe_alpha = 0.001;
    double call_rate_min = 0.95;
    bool hwe_pearson = false;  // energy GoF by default

    void validate() const {
        auto in01 = [](double v) { return v > 0.0 && v < 1.0; };
        if (!in01(maf_min) || !in01(hwe_alpha) || !in01(call_rate_min))
            fail(ErrorKind::Config, "QC thresholds must lie in (0,1)");
    }
};

struct QcReport {
    std::vector<std::string> removed_maf, removed_call_rate, removed_hwe;
    std::size_t kept = 0;
    bool empty = false;
};

struct SnpSummary {
    std::array<double, 3> counts{0, 0, 0};  // by allele count code
    double missing = 0.0;
    double maf() const {
        double n = counts[0] + counts[1] + counts[2];
        if (n <= 0.0) return 0.0;
        double f = (2.0 * counts[2] + counts[1]) / (2.0 * n);
        return std::min(f, 1.0 - f);
    }
};

inline SnpSummary summarize_snp(const PackedGenotypes& g, std::size_t j, const std::vector<bool>* mask = nullptr) {
    SnpSummary s;
    for (std::size_t i = 0; i < g.n_samples; ++i) {
        if (mask && !(*mask)[i]) continue;
        auto c = g.at(j, i);
        if (c == kMissing) s.missing += 1.0;
        else s.counts[c] += 1.0;
    }
    return s;
}

// HWE goodness of fit p-value from genotype counts (codes 0,1,2) with the
// sample allele frequency.
inline double hwe_pvalue(const std::array<double, 3>& c, bool pearson = false) {
    const double n = c[0] + c[1] + c[2];
    if (n < 10) return 1.0;
    const double theta = (2.0 * c[2] + c[1]) / (2.0 * n);
    if (theta <= 0.0 || theta >= 1.0) return 1.0;
    GofSpec g{hwe_expected(theta), {c[2], c[1], c[0]}};
    return pearson ? pearson_chi2(g).p_value : energy_gof_test(g).p_value;
}

inline BedDataset apply_qc(const BedDataset& ds, const std::vector<bool>* controls, const QcConfig& cfg,
                           QcReport* report = nullptr) {
    cfg.validate();
    if (controls) require(controls->size() == ds.samples.size(), "apply_qc: controls mask length mismatch");
    QcReport rep;
    std::vector<std::size_t> keep;
    const double n = static_cast<double>(ds.genotypes.n_samples);
    for (std::size_t j = 0; j < ds.genotypes.n_snps; ++j) {
        auto s = summarize_snp(ds.genotypes, j);
        const auto& id = ds.variants[j].id;
        if (n > 0 && (n - s.missing) / n < cfg.call_rate_min) {
            rep.removed_call_rate.push_back(id);
            continue;
        }
        if (s.maf() < cfg.maf_min || s.maf() == 0.0) {
            rep.removed_maf.push_back(id);
            continue;
        }
        auto sc = controls ? summarize_snp(ds.genotypes, j, controls) : s;
        if (hwe_pvalue(sc.counts, cfg.hwe_pearson) < cfg.hwe_alpha) {
            rep.removed_hwe.push_back(id);
            continue;
        }
        keep.push_back(j);
    }
    rep.kept = keep.size();
    rep.empty = keep.empty();
    if (report) *report = rep;
    return subset_snps(ds, keep);
}

struct AlignedTable {
    std::vector<std::string> columns;
    Eigen::MatrixXd values;          // one row per .fam sample, NaN where missing
    std::size_t unmatched_rows = 0;  // table rows without a .fam sample
    std::size_t matched = 0;
};

// Delimited table with header "FID IID col..." aligned to the .fam order.
inline AlignedTable read_aligned_table(const std::string& path, const std::vector<FamRecord>& fam) {
    auto in = detail::open_in(path);
    std::string line;
    std::vector<std::string> header;
    while (header.empty() && std::getline(in, line)) header = detail::split_ws(line);
    if (header.size() < 3) fail(ErrorKind::Format, path + ": header must contain FID, IID and at least one column");
    AlignedTable t;
    t.columns.assign(header.begin() + 2, header.end());
    t.values = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(fam.size()),
                                         static_cast<Eigen::Index>(t.columns.size()),
                                         std::numeric_limits<double>::quiet_NaN());
    std::map<std::pair<std::string, std::string>, std::size_t> index;
    for (std::size_t i = 0; i < fam.size(); ++i) index[{fam[i].fid, fam[i].iid}] = i;
    std::vector<bool> seen(fam.size(), false);
    std::map<std::pair<std::string, std::string>, bool> ids;
    std::size_t ln = 1;
    while (std::getline(in, line)) {
        ++ln;
        auto f = detail::split_ws(line);
        if (f.empty()) continue;
        if (f.size() != header.size())
            fail(ErrorKind::Format, path + ":" + std::to_string(ln) + ": expected " + std::to_string(header.size()) + " columns");
        auto key = std::make_pair(f[0], f[1]);
        if (ids.count(key)) fail(ErrorKind::Format, path + ": duplicate id " + f[0] + " " + f[1]);
        ids[key] = true;
        auto it = index.find(key);
        if (it == index.end()) {
            ++t.unmatched_rows;
            continue;
        }
        seen[it->second] = true;
        ++t.matched;
        for (std::size_t c = 2; c < f.size(); ++c)
            t.values(static_cast<Eigen::Index>(it->second), static_cast<Eigen::Index>(c - 2)) =
                detail::parse_real(f[c], path + ":" + std::to_string(ln));
    }
    if (t.matched == 0) fail(ErrorKind::Format, path + ": no sample ids overlap the .fam file");
    return t;
}

struct PhenotypeTable {
    std::vector<double> values;  // .fam order, NaN if missing or unmatched
    std::string column;
    std::size_t unmatched_rows = 0;
};

inline PhenotypeTable read_pheno_table(const std::string& path, const std::vector<FamRecord>& fam,
                                       const std::string& column = "") {
    auto t = read_aligned_table(path, fam);
    std::size_t c = 0;
    if (!column.empty()) {
        auto it = std::find(t.columns.begin(), t.columns.end(), column);
        if (it == t.columns.end()) fail(ErrorKind::Config, path + ": no phenotype column '" + column + "'");
        c = static_cast<std::size_t>(it - t.columns.begin());
    }
    PhenotypeTable p;
    p.column = t.columns[c];
    p.unmatched_rows = t.unmatched_rows;
    p.values.resize(fam.size());
    for (std::size_t i = 0; i < fam.size(); ++i) p.values[i] = t.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c));
    return p;
}

struct CovariateTable {
    Eigen::MatrixXd z;  // intercept column first; NaN rows mark missing
    std::vector<std::string> names;
    std::size_t unmatched_rows = 0;
};

inline CovariateTable read_covariate_table(const std::string& path, const std::vector<FamRecord>& fam) {
    auto t = read_aligned_table(path, fam);
    CovariateTable c;
    c.unmatched_rows = t.unmatched_rows;
    c.names.push_back("intercept");
    c.names.insert(c.names.end(), t.columns.begin(), t.columns.end());
    c.z.resize(t.values.rows(), t.values.cols() + 1);
    c.z.col(0).setOnes();
    c.z.rightCols(t.values.cols()) = t.values;
    return c;
}

struct DosageTable {
    std::vector<std::string> snp_ids;
    std::vector<DosageVector> dosages;  // one vector per SNP, .fam order
    std::size_t unmatched_rows = 0;
};

// Header "FID IID snp1 snp2 ...", one row per sample, values in [0,2].
inline DosageTable read_dosage_table(const std::string& path, const std::vector<FamRecord>& fam) {
    auto t = read_aligned_table(path, fam);
    DosageTable d;
    d.snp_ids = t.columns;
    d.unmatched_rows = t.unmatched_rows;
    for (Eigen::Index c = 0; c < t.values.cols(); ++c) {
        DosageVector v(fam.size());
        for (Eigen::Index i = 0; i < t.values.rows(); ++i) {
            double x = t.values(i, c);
            if (!std::isnan(x) && (x < 0.0 || x > 2.0)) fail(ErrorKind::Format, path + ": dosage outside [0,2]");
            v[i] = x;
        }
        d.dosages.push_back(std::move(v));
    }
    return d;
}

inline constexpr const char* kResultsHeader = "#genodcov-results v1";

struct ResultRow {
    std::string id, chrom;
    long long bp = 0;
    std::string allele;
    double statistic = 0.0;
    double p_value = 1.0;
    std::uint32_t flags = 0;
    long n_effective = 0;
};

inline std::string format_real(double v) {
    if (std::isnan(v)) return "NA";
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

inline void write_results(const std::vector<ResultRow>& rows, const std::string& path) {
    detail::atomic_write(path, [&](std::ostream& o) {
        o << kResultsHeader << '\n';
        o << "SNP\tCHR\tBP\tA1\tSTAT\tP\tFLAG\tN\n";
        for (auto& r : rows)
            o << r.id << '\t' << r.chrom << '\t' << r.bp << '\t' << r.allele << '\t' << format_real(r.statistic) << '\t'
              << format_real(r.p_value) << '\t' << flag_token(r.flags) << '\t' << r.n_effective << '\n';
    });
}

inline std::vector<ResultRow> read_results(const std::string& path) {
    auto in = detail::open_in(path);
    std::string line;
    if (!std::getline(in, line) || line != kResultsHeader) fail(ErrorKind::Format, path + ": missing results header");
    if (!std::getline(in, line)) fail(ErrorKind::Format, path + ": missing column header");
    std::vector<ResultRow> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto f = detail::split_tab(line);
        if (f.size() != 8) fail(ErrorKind::Format, path + ": expected 8 columns");
        ResultRow r;
        r.id = f[0];
        r.chrom = f[1];
        r.bp = std::stoll(f[2]);
        r.allele = f[3];
        r.statistic = detail::parse_real(f[4], path);
        r.p_value = detail::parse_real(f[5], path);
        r.flags = flag_from_token(f[6]);
        r.n_effective = std::stol(f[7]);
        out.push_back(r);
    }
    return out;
}

}  // namespace genodcov
