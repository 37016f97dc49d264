#pragma once

// Batch front end: configuration, subcommand drivers and exit codes.
//
// Exit codes
//   0  success
//   1  numerical or internal failure
//   2  usage or configuration error (bad flag, missing required input)
//   3  I/O error (unreadable or unwritable file)
//   4  input format error (bad .bed magic, malformed table)

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "assoc_scan.hpp"
#include "categorical.hpp"
#include "common.hpp"
#include "epistasis.hpp"
#include "plink_io.hpp"
#include "sim_models.hpp"

namespace genodcov {

enum ExitCode : int { kExitOk = 0, kExitNumerical = 1, kExitConfig = 2, kExitIo = 3, kExitFormat = 4 };

inline int exit_code_for(ErrorKind k) {
    switch (k) {
        case ErrorKind::Io: return kExitIo;
        case ErrorKind::Format: return kExitFormat;
        case ErrorKind::Config:
        case ErrorKind::InvalidArgument: return kExitConfig;
        case ErrorKind::Numerical: return kExitNumerical;
    }
    return kExitNumerical;
}

inline unsigned default_threads() {
    if (const char* env = std::getenv("GENODCOV_THREADS")) {
        try {
            int v = std::stoi(env);
            if (v >= 1) return static_cast<unsigned>(v);
        } catch (const std::exception&) {
        }
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

struct RunConfig {
    std::string subcommand;
    // association scan
    double b = 2.0;
    double M = 1e-4;
    double m = 1e-64;
    bool no_screen = false;
    std::string method = "auto";
    std::string bfile, pheno, pheno_name, covar, dosage, fam, out;
    bool allele2 = false;
    bool qc = false;
    double maf_min = 0.01, hwe_alpha = 0.001, call_rate_min = 0.95;
    // epistasis
    std::string metric = "discrete";
    double q = 0.05;
    long long min_distance = 1000000;
    // categorical / gof
    std::string table;
    std::vector<double> counts, probs;
    double hwe_freq = -1.0;
    std::size_t permutations = 0;
    // simulate / bench
    std::string design = "typeI";
    std::size_t replicates = 1000;
    std::size_t n = 300;
    std::vector<double> maf_grid{0.1, 0.2, 0.3, 0.4, 0.5};
    std::vector<double> b_grid{2.0, 3.0};
    std::vector<double> h_grid{0.0, 0.5, 1.0};
    std::vector<double> param_grid;
    double beta = 2.0;
    std::string model = "qexp";
    int rows = 5, cols = 8;
    std::size_t snps = 100000;
    std::uint64_t seed = 1;
    unsigned threads = default_threads();

    void validate() const {
        auto need = [](bool ok, const std::string& msg) {
            if (!ok) fail(ErrorKind::Config, msg);
        };
        auto exists = [&](const std::string& p, const std::string& what) {
            need(std::filesystem::exists(p), what + " not found: " + p);
        };
        need(b >= 0.0 && b <= 4.0, "--b must lie in [0,4]");
        need(M > 0.0 && M <= 1.0 && m >= 0.0 && m < M, "thresholds require 0 <= m < M <= 1");
        need(threads >= 1, "--threads must be >= 1");
        if (subcommand == "scan") {
            need(!bfile.empty() || !dosage.empty(), "scan requires --bfile or --dosage");
            need(!pheno.empty(), "scan requires --pheno");
            exists(pheno, "phenotype file");
            if (!covar.empty()) exists(covar, "covariate file");
            if (!dosage.empty()) {
                exists(dosage, "dosage file");
                need(!fam.empty() || !bfile.empty(), "--dosage requires --fam or --bfile for sample ids");
            }
            need(!out.empty(), "scan requires --out");
            need(method == "auto" || method == "finite" || method == "asymptotic", "--method must be auto, finite or asymptotic");
        } else if (subcommand == "epistasis") {
            need(!bfile.empty(), "epistasis requires --bfile");
            need(!out.empty(), "epistasis requires --out");
            need(q > 0.0 && q < 1.0, "--q must lie in (0,1)");
        } else if (subcommand == "categorical") {
            need(!table.empty(), "categorical requires --table");
            exists(table, "table file");
            need(permutations == 0 || permutations >= 99, "--permutations must be 0 or >= 99");
        } else if (subcommand == "gof") {
            need(!counts.empty(), "gof requires --counts");
            need(!probs.empty() || hwe_freq >= 0.0, "gof requires --probs or --hwe-freq");
            if (hwe_freq >= 0.0) need(counts.size() == 3 && hwe_freq <= 1.0, "--hwe-freq needs 3 genotype counts and a frequency in [0,1]");
        } else if (subcommand == "simulate") {
            need(design == "typeI" || design == "power" || design == "categorical" || design == "gof" || design == "epistasis",
                 "--design must be typeI, power, categorical, gof or epistasis");
            if (design == "gof")
                need(model == "2S" || model == "2K" || model == "3S" || model == "3K", "gof design needs --model 2S, 2K, 3S or 3K");
            if (design == "epistasis") need(model == "qexp" || model == "qmult", "epistasis design needs --model qexp or qmult");
        }
    }
};

namespace detail {
inline void log(const std::string& s) { std::cerr << s << '\n'; }

inline AssocMethod parse_method(const std::string& s) {
    if (s == "finite") return AssocMethod::Finite;
    if (s == "asymptotic") return AssocMethod::Asymptotic;
    return AssocMethod::Auto;
}

// Runs f(i) for i in [0, n) on t workers; results go to caller-owned slots.
inline void parallel_for(std::size_t n, unsigned t, const std::function<void(std::size_t)>& f) {
    t = std::max(1u, std::min<unsigned>(t, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
    if (t == 1) {
        for (std::size_t i = 0; i < n; ++i) f(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < t; ++w)
        pool.emplace_back([&] {
            for (std::size_t i; (i = next.fetch_add(1)) < n;) f(i);
        });
    for (auto& th : pool) th.join();
}

inline std::string summary_line(const std::vector<AssocResult>& res) {
    std::size_t exact = 0, lo = 0, hi = 0, mono = 0, degen = 0, err = 0, asym = 0, hits = 0;
    for (auto& r : res) {
        if (r.flags & kError) ++err;
        else if (r.flags & kMonomorphic) ++mono;
        else if (r.flags & kDegenerate) ++degen;
        else if (r.flags & kBoundOnlyHigh) ++hi;
        else if (r.flags & kBoundOnlyLow) ++lo;
        else if (r.flags & kAsymptotic) ++asym;
        else ++exact;
        if (!(r.flags & kError) && r.p_value < 5e-8) ++hits;
    }
    std::ostringstream os;
    os << "snps=" << res.size() << " exact=" << exact << " asymptotic=" << asym << " bound_only_low=" << lo
       << " bound_only_high=" << hi << " monomorphic=" << mono << " degenerate=" << degen << " errors=" << err
       << " hits_5e-8=" << hits;
    return os.str();
}

inline ContingencyTable read_count_grid(const std::string& path) {
    auto in = open_in(path);
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        auto f = split_ws(line);
        if (f.empty() || f[0][0] == '#') continue;
        std::vector<double> r;
        for (auto& s : f) r.push_back(parse_real(s, path));
        if (!rows.empty() && r.size() != rows[0].size()) fail(ErrorKind::Format, path + ": ragged count grid");
        rows.push_back(r);
    }
    if (rows.empty()) fail(ErrorKind::Format, path + ": empty count grid");
    Eigen::MatrixXd m(rows.size(), rows[0].size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[0].size(); ++j) m(i, j) = rows[i][j];
    return ContingencyTable(m);
}

// Stream id of replicate rep in cell: fixed regardless of scheduling.
inline std::uint64_t stream_id(std::size_t cell, std::size_t rep) {
    return (static_cast<std::uint64_t>(cell) << 40) ^ static_cast<std::uint64_t>(rep);
}
}  // namespace detail

inline int run_scan(const RunConfig& cfg, std::ostream& out = std::cout) {
    ScanOptions opt;
    opt.b = cfg.b;
    opt.M = cfg.M;
    opt.m = cfg.m;
    opt.screen = !cfg.no_screen;
    opt.method = detail::parse_method(cfg.method);
    opt.threads = cfg.threads;

    std::vector<ResultRow> rows;
    std::vector<AssocResult> res;
    if (!cfg.dosage.empty()) {
        auto fam = read_fam(cfg.fam.empty() ? cfg.bfile + ".fam" : cfg.fam);
        auto ph = read_pheno_table(cfg.pheno, fam, cfg.pheno_name);
        auto dt = read_dosage_table(cfg.dosage, fam);
        if (!cfg.covar.empty()) detail::log("warning: covariates are ignored for dosage input");
        res.resize(dt.dosages.size());
        detail::parallel_for(dt.dosages.size(), cfg.threads, [&](std::size_t j) {
            try {
                res[j] = test_dosage(dt.dosages[j], ph.values, cfg.b, opt.method == AssocMethod::Asymptotic ? AssocMethod::Asymptotic : AssocMethod::Finite);
            } catch (const std::exception& e) {
                res[j].flags = kError;
                res[j].p_value = std::numeric_limits<double>::quiet_NaN();
                res[j].message = e.what();
            }
        });
        for (std::size_t j = 0; j < res.size(); ++j)
            rows.push_back({dt.snp_ids[j], "NA", 0, "NA", res[j].statistic, res[j].p_value, res[j].flags, res[j].n_effective});
    } else {
        auto ds = read_plink_triplet(cfg.bfile, !cfg.allele2);
        if (cfg.qc) {
            QcConfig qc{cfg.maf_min, cfg.hwe_alpha, cfg.call_rate_min};
            QcReport rep;
            ds = apply_qc(ds, nullptr, qc, &rep);
            detail::log("qc: kept=" + std::to_string(rep.kept) + " removed_maf=" + std::to_string(rep.removed_maf.size()) +
                        " removed_call_rate=" + std::to_string(rep.removed_call_rate.size()) +
                        " removed_hwe=" + std::to_string(rep.removed_hwe.size()));
        }
        auto ph = read_pheno_table(cfg.pheno, ds.samples, cfg.pheno_name);
        if (ph.unmatched_rows) detail::log("warning: " + std::to_string(ph.unmatched_rows) + " phenotype rows without a .fam sample");
        std::optional<CovariateTable> cov;
        if (!cfg.covar.empty()) {
            cov = read_covariate_table(cfg.covar, ds.samples);
            if (cov->unmatched_rows) detail::log("warning: " + std::to_string(cov->unmatched_rows) + " covariate rows without a .fam sample");
        }
        detail::log("scan: " + std::to_string(ds.genotypes.n_snps) + " SNPs, " + std::to_string(ds.genotypes.n_samples) + " samples");
        res = AssocScanner(ds.genotypes, ph.values, cov ? &cov->z : nullptr, opt).run();
        for (std::size_t j = 0; j < res.size(); ++j) {
            const auto& v = ds.variants[j];
            rows.push_back({v.id, v.chrom, v.bp, cfg.allele2 ? v.a2 : v.a1, res[j].statistic, res[j].p_value, res[j].flags,
                            res[j].n_effective});
        }
    }
    write_results(rows, cfg.out);
    out << "scan " << detail::summary_line(res) << '\n';
    return kExitOk;
}

inline int run_epistasis(const RunConfig& cfg, std::ostream& out = std::cout) {
    auto ds = read_plink_triplet(cfg.bfile, !cfg.allele2);
    std::vector<double> status(ds.samples.size(), std::numeric_limits<double>::quiet_NaN());
    if (!cfg.pheno.empty()) {
        status = read_pheno_table(cfg.pheno, ds.samples, cfg.pheno_name).values;
    } else {
        for (std::size_t i = 0; i < ds.samples.size(); ++i) status[i] = std::atof(ds.samples[i].pheno.c_str());
    }
    std::vector<bool> is_case(status.size()), is_control(status.size());
    for (std::size_t i = 0; i < status.size(); ++i) {
        is_case[i] = status[i] == 2.0;
        is_control[i] = status[i] == 1.0;
    }
    auto cases = subset_samples(ds.genotypes, is_case);
    auto controls = subset_samples(ds.genotypes, is_control);
    if (cases.n_samples < 10 || controls.n_samples < 10)
        fail(ErrorKind::Config, "epistasis needs at least 10 cases (status 2) and 10 controls (status 1)");
    std::vector<SnpPosition> pos;
    for (auto& v : ds.variants) pos.push_back({v.chrom, v.bp});
    EpistasisOptions opt;
    opt.q = cfg.q;
    opt.min_distance_bp = cfg.min_distance;
    opt.threads = cfg.threads;
    auto metric = SnpDistanceSpec::parse(cfg.metric);
    auto hits = epistasis_scan(cases, controls, metric, opt, &pos);
    std::size_t put = 0, sub = 0;
    detail::atomic_write(cfg.out, [&](std::ostream& o) {
        o << "#genodcov-epistasis v1\n";
        o << "SNP_A\tSNP_B\tP_CASES\tP_CONTROLS\tFLAG_CASES\tFLAG_CONTROLS\tCLASS\n";
        for (auto& h : hits) {
            o << ds.variants[h.snp_a].id << '\t' << ds.variants[h.snp_b].id << '\t' << format_real(h.p_cases) << '\t'
              << format_real(h.p_controls) << '\t' << flag_token(h.flags_cases) << '\t' << flag_token(h.flags_controls)
              << '\t' << hit_class_name(h.classification) << '\n';
            put += h.classification == HitClass::PutativeInteraction;
            sub += h.classification == HitClass::PopulationSubstructure;
        }
    });
    out << "epistasis pairs=" << hits.size() << " putative_interaction=" << put << " population_substructure=" << sub
        << '\n';
    return kExitOk;
}

inline int run_categorical(const RunConfig& cfg, std::ostream& out = std::cout) {
    auto t = detail::read_count_grid(cfg.table);
    out << "method\tstatistic\tp_value\tflag\n";
    auto emit = [&](const TestResult& r) {
        out << r.method << '\t' << format_real(r.statistic) << '\t' << format_real(r.p_value) << '\t' << flag_token(r.flags)
            << '\n';
    };
    emit(dcov_indep_test(t));
    emit(pearson_chi2(t));
    emit(g_test(t));
    if (cfg.permutations > 0) {
        SeededGenerator gen(cfg.seed);
        auto stat = dcov_table_statistic(t.drop_empty());
        out << "dcov_permutation\t" << format_real(stat) << '\t'
            << format_real(perm_indep_pvalue(t, TableStatistic::Dcov, gen, cfg.permutations)) << "\tEXACT\n";
    }
    return kExitOk;
}

inline int run_gof(const RunConfig& cfg, std::ostream& out = std::cout) {
    GofSpec g;
    g.counts = cfg.counts;
    g.probs = cfg.hwe_freq >= 0.0 ? hwe_expected(cfg.hwe_freq) : cfg.probs;
    out << "method\tstatistic\tp_value\tflag\n";
    for (auto r : {energy_gof_test(g), pearson_chi2(g)})
        out << r.method << '\t' << format_real(r.statistic) << '\t' << format_real(r.p_value) << '\t' << flag_token(r.flags)
            << '\n';
    return kExitOk;
}

namespace detail {
struct SimCell {
    std::vector<std::string> labels;  // printed before rep and the p-values
    std::function<std::vector<double>(SeededGenerator&)> draw;
};

inline std::vector<SimCell> sim_cells(const RunConfig& cfg, std::string& header) {
    std::vector<SimCell> cells;
    const std::size_t n = cfg.n;
    auto fmt = [](double v) { return format_real(v); };
    if (cfg.design == "typeI" || cfg.design == "power") {
        const bool power = cfg.design == "power";
        header = "design\tmaf\th\tbeta\tb\tn\trep\tp\tflag";
        std::vector<double> hs = power ? cfg.h_grid : std::vector<double>{0.0};
        for (double maf : cfg.maf_grid)
            for (double h : hs)
                for (double b : cfg.b_grid) {
                    double beta = power ? cfg.beta : 0.0;
                    cells.push_back({{cfg.design, fmt(maf), fmt(h), fmt(beta), fmt(b), std::to_string(n)},
                                     [=](SeededGenerator& gen) {
                                         PowerSample s = power ? sample_power_model(maf, h, beta, n, gen)
                                                               : PowerSample{sample_hwe_genotypes(maf, n, gen), {}};
                                         if (!power) {
                                             s.y.resize(n);
                                             for (auto& v : s.y) v = gen.normal();
                                         }
                                         auto r = test_finite(s.x, s.y, b);
                                         return std::vector<double>{r.p_value, static_cast<double>(r.flags)};
                                     }});
                }
    } else if (cfg.design == "categorical") {
        header = "design\trows\tcols\teps\tn\trep\tp_dcov\tp_pearson\tp_g";
        auto eps = cfg.param_grid.empty() ? std::vector<double>{0.0} : cfg.param_grid;
        for (double e : eps) {
            int I = cfg.rows, J = cfg.cols;
            auto probs = decaying_marginals(I, J, e);
            cells.push_back({{cfg.design, std::to_string(I), std::to_string(J), fmt(e), std::to_string(n)},
                             [=](SeededGenerator& gen) {
                                 ContingencyTable t(sample_table(probs, n, gen).cast<double>());
                                 auto d = t.drop_empty();
                                 if (d.rows() < 2 || d.cols() < 2) return std::vector<double>{1.0, 1.0, 1.0};
                                 return std::vector<double>{dcov_indep_test(t).p_value, pearson_chi2(t).p_value,
                                                            g_test(t).p_value};
                             }});
        }
    } else if (cfg.design == "gof") {
        header = "design\tmodel\tparam\tn\trep\tp_energy\tp_pearson";
        auto model = parse_hwe_model(cfg.model);
        auto params = cfg.param_grid.empty() ? std::vector<double>{0.0} : cfg.param_grid;
        auto null = hwe_departure(model, 0.0);
        for (double par : params) {
            auto truth = hwe_departure(model, par);
            cells.push_back({{cfg.design, cfg.model, fmt(par), std::to_string(n)},
                             [=](SeededGenerator& gen) {
                                 auto c = sample_counts(truth, n, gen);
                                 GofSpec g{null, std::vector<double>(c.begin(), c.end())};
                                 return std::vector<double>{energy_gof_test(g).p_value, pearson_chi2(g).p_value};
                             }});
        }
    } else {
        header = "design\tmodel\tparam\tn\trep\tp";
        const bool qexp = cfg.model != "qmult";
        auto params = cfg.param_grid.empty() ? std::vector<double>{1.0} : cfg.param_grid;
        auto metric = SnpDistanceSpec::parse(cfg.metric);
        for (double par : params)
            cells.push_back({{cfg.design, qexp ? "qexp" : "qmult", fmt(par), std::to_string(n)},
                             [=](SeededGenerator& gen) {
                                 double m1 = 0.05 + 0.15 * gen.uniform(), m2 = 0.05 + 0.15 * gen.uniform();
                                 auto a = hwe_genotype_probs(m1), b = hwe_genotype_probs(m2);
                                 auto tab = qexp ? qexp_table(a[0], a[1], b[0], b[1], par)
                                                 : qmult_table(a[0], a[1], b[0], b[1], par);
                                 auto [x1, x2] = sample_joint(tab, n, gen);
                                 try {
                                     return std::vector<double>{pair_test(x1, x2, metric).p_value};
                                 } catch (const std::exception&) {
                                     return std::vector<double>{std::numeric_limits<double>::quiet_NaN()};
                                 }
                             }});
    }
    return cells;
}
}  // namespace detail

inline int run_simulate(const RunConfig& cfg, std::ostream& out = std::cout) {
    std::string header;
    auto cells = detail::sim_cells(cfg, header);
    const std::size_t R = cfg.replicates;
    std::vector<std::vector<double>> results(cells.size() * R);
    detail::parallel_for(results.size(), cfg.threads, [&](std::size_t k) {
        std::size_t c = k / R, r = k % R;
        SeededGenerator gen(cfg.seed, detail::stream_id(c, r));
        results[k] = cells[c].draw(gen);
    });
    auto body = [&](std::ostream& o) {
        o << "#genodcov-simulate v1\n" << header << '\n';
        for (std::size_t k = 0; k < results.size(); ++k) {
            std::size_t c = k / R, r = k % R;
            for (auto& l : cells[c].labels) o << l << '\t';
            o << r;
            const bool flag_col = header.size() >= 5 && header.compare(header.size() - 5, 5, "\tflag") == 0;
            for (std::size_t i = 0; i < results[k].size(); ++i) {
                if (flag_col && i + 1 == results[k].size()) o << '\t' << flag_token(static_cast<std::uint32_t>(results[k][i]));
                else o << '\t' << format_real(results[k][i]);
            }
            o << '\n';
        }
    };
    if (cfg.out.empty() || cfg.out == "-") body(out);
    else detail::atomic_write(cfg.out, body);
    return kExitOk;
}

// Null dataset for timing: MAF uniform on [0.05, 0.5], standard normal phenotype.
inline std::pair<PackedGenotypes, PhenotypeVector> make_null_dataset(std::size_t snps, std::size_t n, std::uint64_t seed) {
    PackedGenotypes g;
    g.n_samples = n;
    g.n_snps = snps;
    g.bytes.assign(snps * g.stride(), 0);
    for (std::size_t j = 0; j < snps; ++j) {
        SeededGenerator gen(seed, j + 1);
        double maf = 0.05 + 0.45 * gen.uniform();
        g.set(j, sample_hwe_genotypes(maf, n, gen));
    }
    SeededGenerator gy(seed, 0);
    PhenotypeVector y(n);
    for (auto& v : y) v = gy.normal();
    return {std::move(g), std::move(y)};
}

struct BenchResult {
    double screened_seconds = 0.0, naive_seconds = 0.0;
    std::size_t exact_screened = 0, mismatches = 0;
};

inline BenchResult bench_scan(std::size_t snps, std::size_t n, double b, unsigned threads, std::uint64_t seed) {
    auto [g, y] = make_null_dataset(snps, n, seed);
    ScanOptions opt;
    opt.b = b;
    opt.threads = threads;
    opt.method = AssocMethod::Finite;
    BenchResult br;
    auto t0 = std::chrono::steady_clock::now();
    auto screened = scan(g, y, nullptr, opt);
    auto t1 = std::chrono::steady_clock::now();
    opt.screen = false;
    auto naive = scan(g, y, nullptr, opt);
    auto t2 = std::chrono::steady_clock::now();
    br.screened_seconds = std::chrono::duration<double>(t1 - t0).count();
    br.naive_seconds = std::chrono::duration<double>(t2 - t1).count();
    for (std::size_t j = 0; j < snps; ++j) {
        if (screened[j].flags & kExact) {
            ++br.exact_screened;
            if (screened[j].p_value != naive[j].p_value) ++br.mismatches;
        }
    }
    return br;
}

inline int run_bench(const RunConfig& cfg, std::ostream& out = std::cout) {
    auto br = bench_scan(cfg.snps, cfg.n, cfg.b, cfg.threads, cfg.seed);
    out << "bench snps=" << cfg.snps << " n=" << cfg.n << " b=" << cfg.b << " threads=" << cfg.threads
        << " screened_s=" << br.screened_seconds << " naive_s=" << br.naive_seconds
        << " speedup=" << (br.screened_seconds > 0 ? br.naive_seconds / br.screened_seconds : 0.0)
        << " exact_after_screen=" << br.exact_screened << " mismatches=" << br.mismatches << '\n';
    return kExitOk;
}

inline int dispatch(const RunConfig& cfg, std::ostream& out) {
    cfg.validate();
    if (cfg.subcommand == "scan") return run_scan(cfg, out);
    if (cfg.subcommand == "epistasis") return run_epistasis(cfg, out);
    if (cfg.subcommand == "categorical") return run_categorical(cfg, out);
    if (cfg.subcommand == "gof") return run_gof(cfg, out);
    if (cfg.subcommand == "simulate") return run_simulate(cfg, out);
    if (cfg.subcommand == "bench") return run_bench(cfg, out);
    fail(ErrorKind::Config, "unknown subcommand: " + cfg.subcommand);
}

// Options live on the top-level app so a flat key=value config file can set any
// of them; subcommands fall through to it.
inline void build_app(CLI::App& app, RunConfig& cfg) {
    app.set_config("--config", "", "flat key=value configuration file");
    app.require_subcommand(1);
    app.fallthrough();
    const std::pair<const char*, const char*> subs[] = {
        {"scan", "per-SNP association with a quantitative phenotype"},
        {"epistasis", "pairwise SNP interaction tests in cases"},
        {"categorical", "independence tests on a count table"},
        {"gof", "goodness of fit of counts to null probabilities"},
        {"simulate", "Monte Carlo level and power runs"},
        {"bench", "screened vs unscreened scan timing on null data"},
    };
    for (auto [name, desc] : subs) {
        std::string s = name;
        app.add_subcommand(s, desc)->callback([&cfg, s] { cfg.subcommand = s; });
    }
    app.add_option("--b", cfg.b, "d_b parameter in [0,4]")->capture_default_str();
    app.add_option("--M", cfg.M, "screening threshold M")->capture_default_str();
    app.add_option("--m", cfg.m, "screening threshold m")->capture_default_str();
    app.add_flag("--no-screen", cfg.no_screen, "evaluate every SNP exactly");
    app.add_option("--method", cfg.method, "auto, finite or asymptotic")->capture_default_str();
    app.add_option("--bfile", cfg.bfile, "PLINK file stem");
    app.add_option("--pheno", cfg.pheno, "phenotype table");
    app.add_option("--pheno-name", cfg.pheno_name, "phenotype column");
    app.add_option("--covar", cfg.covar, "covariate table");
    app.add_option("--dosage", cfg.dosage, "dosage table");
    app.add_option("--fam", cfg.fam, ".fam file for dosage input");
    app.add_option("--out", cfg.out, "output path");
    app.add_flag("--allele2", cfg.allele2, "count copies of allele2 instead of allele1");
    app.add_flag("--qc", cfg.qc, "apply MAF, call-rate and HWE filters before scanning");
    app.add_option("--maf-min", cfg.maf_min)->capture_default_str();
    app.add_option("--hwe-alpha", cfg.hwe_alpha)->capture_default_str();
    app.add_option("--call-rate-min", cfg.call_rate_min)->capture_default_str();
    app.add_option("--metric", cfg.metric, "discrete, euclidean, dominant, recessive, heterozygous or db:<b>")->capture_default_str();
    app.add_option("--q", cfg.q, "FDR level")->capture_default_str();
    app.add_option("--min-distance", cfg.min_distance, "minimum same-chromosome distance in bp")->capture_default_str();
    app.add_option("--table", cfg.table, "count grid file");
    app.add_option("--counts", cfg.counts, "observed counts")->delimiter(',');
    app.add_option("--probs", cfg.probs, "null probabilities")->delimiter(',');
    app.add_option("--hwe-freq", cfg.hwe_freq, "frequency of the allele whose homozygote is listed first");
    app.add_option("--permutations", cfg.permutations, "permutation replicates (0 disables)")->capture_default_str();
    app.add_option("--design", cfg.design, "typeI, power, categorical, gof or epistasis")->capture_default_str();
    app.add_option("--replicates", cfg.replicates)->capture_default_str();
    app.add_option("--n", cfg.n, "sample size")->capture_default_str();
    app.add_option("--maf-grid", cfg.maf_grid)->delimiter(',');
    app.add_option("--b-grid", cfg.b_grid)->delimiter(',');
    app.add_option("--h-grid", cfg.h_grid)->delimiter(',');
    app.add_option("--param-grid", cfg.param_grid, "e, g, eps or HWE departure values")->delimiter(',');
    app.add_option("--beta", cfg.beta)->capture_default_str();
    app.add_option("--model", cfg.model, "qexp, qmult, 2S, 2K, 3S or 3K")->capture_default_str();
    app.add_option("--rows", cfg.rows)->capture_default_str();
    app.add_option("--cols", cfg.cols)->capture_default_str();
    app.add_option("--snps", cfg.snps)->capture_default_str();
    app.add_option("--seed", cfg.seed)->capture_default_str();
    app.add_option("--threads", cfg.threads, "worker count (default from GENODCOV_THREADS)")->capture_default_str();
}

inline int cli_main(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    RunConfig cfg;
    CLI::App app{"genodcov: distance-covariance tests for genotype data"};
    build_app(app, cfg);
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kExitConfig;
    }
    try {
        return dispatch(cfg, out);
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return exit_code_for(e.kind());
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitNumerical;
    }
}

}  // namespace genodcov
