// End-to-end acceptance runs driven through the command line binary.
// Each criterion prints one [PASS]/[FAIL] line; the process exits nonzero
// when any criterion fails.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "stomax/experiments.hpp"
#include "stomax/stats.hpp"

namespace fs = std::filesystem;
using namespace stomax;

namespace {

std::string g_cli;
fs::path g_work;
bool g_all_ok = true;

void report(int criterion, bool ok, const std::string& what) {
    g_all_ok = g_all_ok && ok;
    std::cout << (ok ? "[PASS]" : "[FAIL]") << " criterion " << criterion << ": "
              << what << std::endl;
}

std::string num(double x) {
    std::ostringstream out;
    out << std::setprecision(6) << x;
    return out.str();
}

int run_cmd(const std::string& cmd) {
    const int status = std::system(cmd.c_str());
    if (status == -1) return -1;
    return WIFEXITED(status) ? WEXITSTATUS(status) : -2;
}

void write_file(const fs::path& path, const std::string& content) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    out << content;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

struct Csv {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int col(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (header[i] == name) return static_cast<int>(i);
        }
        return -1;
    }
};

Csv read_csv(const fs::path& path) {
    Csv csv;
    std::ifstream in(path);
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (first) {
            csv.header = cells;
            first = false;
        } else {
            csv.rows.push_back(cells);
        }
    }
    return csv;
}

double cell_num(const Csv& csv, std::size_t row, const std::string& name) {
    return std::strtod(csv.rows[row][static_cast<std::size_t>(csv.col(name))].c_str(),
                       nullptr);
}

/// dt and rms columns of a convergence run, in file order.
void convergence_columns(const fs::path& csv_path, std::vector<double>& dt,
                         std::vector<double>& rms) {
    const Csv csv = read_csv(csv_path);
    for (std::size_t r = 0; r < csv.rows.size(); ++r) {
        dt.push_back(cell_num(csv, r, "dt"));
        rms.push_back(cell_num(csv, r, "rms_error"));
    }
}

/// time and requested value column of one scheme's rows in a trace-style csv.
void scheme_columns(const Csv& csv, const std::string& scheme,
                    const std::string& value, std::vector<double>& times,
                    std::vector<double>& values) {
    const int sc = csv.col("scheme");
    for (std::size_t r = 0; r < csv.rows.size(); ++r) {
        if (csv.rows[r][static_cast<std::size_t>(sc)] != scheme) continue;
        times.push_back(cell_num(csv, r, "time"));
        values.push_back(cell_num(csv, r, value));
    }
}

bool run_convergence(const std::string& tag, const std::string& extra,
                     std::vector<double>& dt, std::vector<double>& rms) {
    const fs::path out = g_work / tag;
    const std::string cmd = g_cli + " convergence --config " +
                            (g_work / "base.json").string() + " --threads 1 --out " +
                            out.string() + " " + extra + " > " +
                            (out.string() + ".log") + " 2>&1";
    fs::create_directories(g_work);
    if (run_cmd(cmd) != 0) return false;
    convergence_columns(out / "convergence.csv", dt, rms);
    return !dt.empty();
}

void criterion_1() {
    std::vector<double> dt, rms;
    if (!run_convergence("c1", "", dt, rms)) {
        report(1, false, "additive-noise convergence run failed");
        return;
    }
    const double slope = fit_loglog_slope(dt, rms);
    report(1, slope >= 0.85 && slope <= 1.15,
           "strong order with additive noise (slope " + num(slope) +
               ", want [0.85, 1.15])");
}

void criterion_2() {
    std::vector<double> dt, rms;
    if (!run_convergence("c2",
                         "--set model.drift=identity_plus_cos "
                         "--set model.diffusion=sine_multiplicative",
                         dt, rms)) {
        report(2, false, "multiplicative-noise convergence run failed");
        return;
    }
    const double slope = fit_loglog_slope(dt, rms);
    report(2, slope >= 0.35 && slope <= 0.65,
           "strong order with multiplicative noise (slope " + num(slope) +
               ", want [0.35, 0.65])");
}

void criterion_3() {
    const fs::path out = g_work / "c3";
    const std::string cmd = g_cli + " trace --config " +
                            (g_work / "base.json").string() + " --threads 1 --out " +
                            out.string() + " > " + (out.string() + ".log") + " 2>&1";
    if (run_cmd(cmd) != 0) {
        report(3, false, "trace run failed");
        return;
    }
    const Csv csv = read_csv(out / "trace.csv");
    std::vector<double> times, sexp_mean, sem_mean, em_mean, theory;
    scheme_columns(csv, "sexp", "mean_energy", times, sexp_mean);
    {
        std::vector<double> t2;
        scheme_columns(csv, "sem", "mean_energy", t2, sem_mean);
        std::vector<double> t3;
        scheme_columns(csv, "em", "mean_energy", t3, em_mean);
        std::vector<double> t4;
        scheme_columns(csv, "sexp", "theory_energy", t4, theory);
    }
    if (times.size() < 2 || sem_mean.empty() || em_mean.empty()) {
        report(3, false, "trace csv incomplete");
        return;
    }
    const double t_final = times.back();
    const double phi0 = theory.front();
    const double k_h = (theory.back() - phi0) / t_final;
    const double sexp_slope = fit_affine_slope(times, sexp_mean);
    const double sem_slope = fit_affine_slope(times, sem_mean);
    const double em_final = em_mean.back();

    const bool sexp_ok = std::abs(sexp_slope - k_h) <= 0.05 * k_h;
    const bool sem_ok = sem_slope < 0.9 * k_h;
    const bool em_ok = em_final > phi0 + 1.5 * k_h * t_final;
    report(3, sexp_ok && sem_ok && em_ok,
           "mean-energy growth (injection rate " + num(k_h) + "; exponential slope " +
               num(sexp_slope) + " within 5%: " + (sexp_ok ? "yes" : "no") +
               "; semi-implicit slope " + num(sem_slope) + " < 0.9 rate: " +
               (sem_ok ? "yes" : "no") + "; explicit final energy " + num(em_final) +
               " explodes: " + (em_ok ? "yes" : "no") + ")");
}

void criterion_4() {
    const fs::path quiet = g_work / "c4_quiet";
    const std::string quiet_cmd =
        g_cli + " divergence --config " + (g_work / "base.json").string() +
        " --threads 1 --set model.lambda_e=0 --set model.lambda_h=0"
        " --set trace.schemes=sexp --set trace.samples=2 --out " +
        quiet.string() + " > " + (quiet.string() + ".log") + " 2>&1";
    if (run_cmd(quiet_cmd) != 0) {
        report(4, false, "zero-noise divergence run failed");
        return;
    }
    const Csv qcsv = read_csv(quiet / "divergence.csv");
    std::vector<double> qt, qmean;
    scheme_columns(qcsv, "sexp", "mean_div_sum", qt, qmean);
    double worst_quiet = 0.0;
    for (double v : qmean) {
        worst_quiet = std::max(worst_quiet, std::abs(v - qmean.front()));
    }

    const fs::path noisy = g_work / "c4_noisy";
    const std::string noisy_cmd =
        g_cli + " divergence --config " + (g_work / "base.json").string() +
        " --threads 1 --set trace.schemes=sexp --out " + noisy.string() + " > " +
        (noisy.string() + ".log") + " 2>&1";
    if (run_cmd(noisy_cmd) != 0) {
        report(4, false, "noisy divergence run failed");
        return;
    }
    const Csv ncsv = read_csv(noisy / "divergence.csv");
    std::vector<double> nt, nmean, nstderr;
    scheme_columns(ncsv, "sexp", "mean_div_sum", nt, nmean);
    {
        std::vector<double> t2;
        scheme_columns(ncsv, "sexp", "stderr", t2, nstderr);
    }
    double worst_ratio = 0.0;
    bool noisy_ok = !nmean.empty();
    for (std::size_t k = 1; k < nmean.size(); ++k) {
        const double dev = std::abs(nmean[k] - nmean.front());
        if (nstderr[k] > 0.0) {
            worst_ratio = std::max(worst_ratio, dev / nstderr[k]);
        } else if (dev > 0.0) {
            noisy_ok = false;
        }
    }
    noisy_ok = noisy_ok && worst_ratio <= 4.0;

    const bool quiet_ok = !qmean.empty() && worst_quiet <= 1e-13;
    report(4, quiet_ok && noisy_ok,
           "divergence preservation (zero-noise drift " + num(worst_quiet) +
               " <= 1e-13: " + (quiet_ok ? "yes" : "no") +
               "; noisy mean within 4 standard errors, worst ratio " +
               num(worst_ratio) + ": " + (noisy_ok ? "yes" : "no") + ")");
}

void criterion_5() {
    const fs::path log = g_work / "c5.log";
    const auto start = std::chrono::steady_clock::now();
    const int rc = run_cmd(g_cli + " check --config " + (g_work / "base.json").string() +
                           " > " + log.string() + " 2>&1");
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    const std::string out = slurp(log);
    const bool ok = rc == 0 && seconds < 30.0 &&
                    out.find("[FAIL]") == std::string::npos &&
                    out.find("[PASS]") != std::string::npos;
    report(5, ok,
           "structural invariant suite (exit " + std::to_string(rc) + ", " +
               num(seconds) + " s, want < 30 s)");
}

void criterion_6() {
    std::vector<double> dt, rms;
    if (!run_convergence("c6",
                         "--set model.drift=zero --set model.lambda_e=0 "
                         "--set model.lambda_h=0 --set convergence.samples=2",
                         dt, rms)) {
        report(6, false, "degenerate-model convergence run failed");
        return;
    }
    double worst_rms = 0.0;
    for (double v : rms) worst_rms = std::max(worst_rms, v);

    // Second half: the explicit scheme's per-step energy increment must equal
    // dt^2 ||A u||_V^2, checked directly through the library.
    const GridSpec spec(16, 1.0, 1.0);
    const GridLayout layout = build_layout(spec);
    const MaxwellMatrix m = assemble(spec, layout);
    const double step = 0.01;
    ModelSpec model;
    model.drift = DriftKind::Zero;
    model.lambda_e = 0.0;
    model.lambda_h = 0.0;
    FieldIncrements zero;
    {
        const FieldState z = FieldState::zero(spec);
        zero = FieldIncrements{z.e3, z.h1, z.h2};
    }
    FieldState u = initial_condition(spec, layout, 6);
    double worst_rel = 0.0;
    for (int k = 0; k < 100; ++k) {
        const FieldState u1 = em_step(m, step, model, u, zero);
        const FieldState au = apply_maxwell(spec, u);
        const double increment = v_inner(spec, u1, u1) - v_inner(spec, u, u);
        const double expected = step * step * v_inner(spec, au, au);
        worst_rel = std::max(worst_rel,
                             std::abs(increment - expected) / expected);
        u = u1;
    }

    const bool exact_ok = worst_rms <= 1e-11;
    const bool energy_ok = worst_rel <= 1e-12;
    report(6, exact_ok && energy_ok,
           "degenerate exactness (zero-model rms " + num(worst_rms) +
               " <= 1e-11: " + (exact_ok ? "yes" : "no") +
               "; explicit energy increment relative error " + num(worst_rel) +
               " <= 1e-12: " + (energy_ok ? "yes" : "no") + ")");
}

void criterion_7() {
    const fs::path dir = g_work / "c7";
    write_file(dir / "conv.json", R"({
  "grid": {"n_cells": 8},
  "convergence": {
    "t_final": 0.25,
    "dt_levels": [0.0625, 0.03125],
    "dt_ref": 0.00390625,
    "samples": 20
  }
})");
    write_file(dir / "div.json", R"({
  "grid": {"n_cells": 8},
  "trace": {"t_final": 0.1, "dt": 0.0125, "samples": 40}
})");

    bool ok = true;
    std::string note;
    for (const char* threads : {"1", "4"}) {
        ok = ok && run_cmd(g_cli + " convergence --config " +
                           (dir / "conv.json").string() + " --threads " + threads +
                           " --out " + (dir / ("conv_t" + std::string(threads))).string() +
                           " > /dev/null 2>&1") == 0;
        ok = ok && run_cmd(g_cli + " divergence --config " +
                           (dir / "div.json").string() + " --threads " + threads +
                           " --out " + (dir / ("div_t" + std::string(threads))).string() +
                           " > /dev/null 2>&1") == 0;
    }
    // Repeat of the threaded run, checking run-to-run stability as well.
    ok = ok && run_cmd(g_cli + " convergence --config " + (dir / "conv.json").string() +
                       " --threads 4 --out " + (dir / "conv_again").string() +
                       " > /dev/null 2>&1") == 0;
    if (!ok) {
        report(7, false, "determinism runs failed to execute");
        return;
    }

    const std::string conv1 = slurp(dir / "conv_t1" / "convergence.csv");
    const std::string conv4 = slurp(dir / "conv_t4" / "convergence.csv");
    const std::string conv_again = slurp(dir / "conv_again" / "convergence.csv");
    const std::string div1 = slurp(dir / "div_t1" / "divergence.csv");
    const std::string div4 = slurp(dir / "div_t4" / "divergence.csv");

    const bool conv_ok = !conv1.empty() && conv1 == conv4 && conv4 == conv_again;
    const bool div_ok = !div1.empty() && div1 == div4;
    report(7, conv_ok && div_ok,
           std::string("byte-identical csv output across thread counts ") +
               "(convergence: " + (conv_ok ? "yes" : "no") + ", divergence: " +
               (div_ok ? "yes" : "no") + ")");
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::cerr << "usage: acceptance <path-to-cli-binary>\n";
        return 2;
    }
    g_cli = argv[1];
    g_work = fs::temp_directory_path() / "stomax_acceptance";
    std::error_code ec;
    fs::remove_all(g_work, ec);
    fs::create_directories(g_work);
    write_file(g_work / "base.json", R"({"grid": {"n_cells": 16}})");

    criterion_1();
    criterion_2();
    criterion_3();
    criterion_4();
    criterion_5();
    criterion_6();
    criterion_7();

    std::cout << (g_all_ok ? "acceptance: all criteria passed"
                           : "acceptance: FAILURES above")
              << std::endl;
    return g_all_ok ? 0 : 1;
}
