// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "epiwane/fclt.hpp"
#include "epiwane/flln.hpp"
#include "epiwane/harness.hpp"
#include "epiwane/simulator.hpp"
#include "epiwane/verify.hpp"

using namespace epiwane;
namespace fs = std::filesystem;

namespace {

const ProfileLaw kSis = ProfileLaw::sis_indicator(2.0, Exponential{1.0});

struct Outcome {
    bool pass = false;
    std::string detail;
};

double logistic(double t)
{
    // I' = 2 (1 - I) I - I, I(0) = 0.1
    const double k = 0.5, r = 1.0, i0 = 0.1;
    return k / (1 + (k / i0 - 1) * std::exp(-r * t));
}

double variance(const std::vector<double>& x)
{
    double m = 0.0;
    for (double v : x)
        m += v;
    m /= static_cast<double>(x.size());
    double s = 0.0;
    for (double v : x)
        s += (v - m) * (v - m);
    return s / static_cast<double>(x.size() - 1);
}

std::string num(double x)
{
    std::ostringstream s;
    s.precision(4);
    s << x;
    return s.str();
}

Outcome ac1()
{
    const auto t0 = std::chrono::steady_clock::now();
    const TimeGrid grid(0.01, 20.0);
    const auto sol = solve_flln(kSis, InitialLaw::from(0.1, kSis), grid);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    double err = 0.0;
    for (std::size_t g = 0; g < grid.size(); ++g)
        err = std::max(err, std::abs(sol.ibar[g] - logistic(grid.at(g))));
    const double end = sol.ibar.back();
    return {err < 1e-3 && std::abs(end - 0.5) < 0.01 && secs < 10,
            "sup|I - logistic| = " + num(err) + ", I(20) = " + num(end) + ", solve " + num(secs) + " s"};
}

Outcome ac2()
{
    const TimeGrid grid(0.01, 5.0);
    const auto init = InitialLaw::from(0.1, kSis);
    const auto flln = solve_flln(kSis, init, grid);
    const std::size_t g = grid.index_of(5.0);
    std::vector<double> x, y;
    std::uint64_t seed = 1000;
    for (std::size_t n : {100, 400, 1600, 6400}) {
        const auto e = run_ensemble(kSis, init, flln, n, 200, seed++);
        double acc = 0.0;
        for (std::size_t r = 0; r < e.replicates; ++r)
            acc += std::abs(e.hat(kF, r, g)) / std::sqrt(static_cast<double>(n));
        x.push_back(std::log(static_cast<double>(n)));
        y.push_back(std::log(acc / static_cast<double>(e.replicates)));
    }
    double mx = 0, my = 0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        mx += x[k];
        my += y[k];
    }
    mx /= static_cast<double>(x.size());
    my /= static_cast<double>(y.size());
    double sxy = 0, sxx = 0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        sxy += (x[k] - mx) * (y[k] - my);
        sxx += (x[k] - mx) * (x[k] - mx);
    }
    const double slope = sxy / sxx;
    return {slope >= -0.65 && slope <= -0.35, "slope " + num(slope)};
}

Outcome ac3()
{
    const TimeGrid grid(0.05, 10.0);
    const auto init = InitialLaw::from(0.1, kSis);
    const auto flln = solve_flln(kSis, init, grid);
    CovarianceOptions co;
    co.agents = 20000;
    const auto cov = estimate_driver_covariance(kSis, init, flln, 301, co);
    const DriverSampler sampler(cov);
    const FluctuationSolver solver(kSis, init, flln);
    const auto model = run_fclt_ensemble(solver, sampler, 2000, 302);
    EnsembleOptions eo;
    eo.simulation.assignment = InitialAssignment::Bernoulli;
    const auto ens = run_ensemble(kSis, init, flln, 2000, 500, 303, eo);

    bool pass = true;
    std::string detail;
    for (Observable q : {kI, kF}) {
        for (double t : {2.0, 5.0, 10.0}) {
            const std::size_t g = grid.index_of(t);
            std::vector<double> emp(ens.replicates), mod(model.samples);
            for (std::size_t r = 0; r < ens.replicates; ++r)
                emp[r] = ens.hat(q, r, g);
            for (std::size_t s = 0; s < model.samples; ++s)
                mod[s] = model.at(q, s, g);
            const double rel = std::abs(variance(emp) / variance(mod) - 1);
            pass = pass && rel < 0.2;
            detail += std::string(q == kI ? "I" : "F") + "(" + num(t) + ") " + num(rel) + " ";
        }
    }
    return {pass, "relative variance errors " + detail};
}

Outcome ac4()
{
    const auto law = ProfileLaw::sis_indicator(2.0, Deterministic{1.0});
    const auto init = InitialLaw::from(0.5, law);
    const TimeGrid grid(1.0, 1.0);
    const int reps = 100000;
    int escaped = 0;
    for (int r = 0; r < reps; ++r) {
        const auto t = simulate_population(init, law, 2, grid, 400000 + static_cast<std::uint64_t>(r));
        bool hit = false;
        for (const auto& e : t.events)
            hit = hit || e.t < 1.0;
        escaped += !hit;
    }
    const double p = std::exp(-1.0), freq = escaped / double(reps);
    const double se = std::sqrt(p * (1 - p) / reps);
    return {std::abs(freq - p) < 3 * se, "frequency " + num(freq) + " vs e^-1, " + num(std::abs(freq - p) / se) + " SE"};
}

// sup |a(t) - b(t)| of two counting processes by merging their jump times
long sup_gap(std::vector<double> a, std::vector<double> b)
{
    std::vector<std::pair<double, int>> jumps;
    for (double t : a)
        jumps.emplace_back(t, 1);
    for (double t : b)
        jumps.emplace_back(t, -1);
    std::sort(jumps.begin(), jumps.end());
    long diff = 0, worst = 0;
    for (std::size_t k = 0; k < jumps.size();) {
        const double t = jumps[k].first;
        while (k < jumps.size() && jumps[k].first == t)
            diff += jumps[k++].second;
        worst = std::max(worst, std::abs(diff));
    }
    return worst;
}

Outcome ac5()
{
    const double ls = 2.0, T = 3 / ls;
    const std::size_t n = 1000;
    const TimeGrid grid(0.01, T);
    const auto init = InitialLaw::from(0.1, kSis);
    const auto flln = solve_flln(kSis, init, grid);
    double mean = 0.0;
    const int reps = 50;
    for (int r = 0; r < reps; ++r) {
        const auto run = simulate_coupled(init, kSis, n, flln, 500 + static_cast<std::uint64_t>(r));
        const auto pop = events_by_individual(run.population);
        double acc = 0.0;
        for (std::size_t k = 0; k < n; ++k)
            acc += static_cast<double>(sup_gap(pop[k], run.agents[k].events));
        mean += acc / static_cast<double>(n);
    }
    mean /= reps;
    const double bound = ls / std::sqrt(static_cast<double>(n)) * T * std::exp(2 * ls * T);
    return {mean < bound, "mean sup gap " + num(mean) + " < bound " + num(bound)};
}

Outcome ac6()
{
    const double ls = 2.0, T = 3 / ls;
    const std::size_t n = 1000;
    const TimeGrid grid(0.01, T);
    const auto init = InitialLaw::from(0.1, kSis);
    const std::vector<std::uint32_t> q{0};
    std::size_t violations = 0;
    double diverged = 0.0;
    const int reps = 100;
    for (int r = 0; r < reps; ++r) {
        const auto run = simulate_quarantine(init, kSis, n, grid, q, 600 + static_cast<std::uint64_t>(r));
        for (std::size_t g = 0; g < grid.size(); ++g) {
            const double D = run.diagnostics.diverged[g];
            const double df = std::abs(run.baseline.fbar[g] - run.variant.fbar[g]);
            const double ds = std::abs(run.baseline.sbar[g] - run.variant.sbar[g]);
            violations += df > ls * D / n + 1e-12 || ds > D / n + 1e-12;
        }
        diverged += run.diagnostics.diverged.back();
    }
    diverged /= reps;
    const double bound = std::exp(ls * T);
    return {violations == 0 && diverged <= bound, std::to_string(violations) + " path-wise violations, mean |D(T)| " +
                                                      num(diverged) + " <= " + num(bound)};
}

Outcome ac7()
{
    const auto init = InitialLaw::from(0.1, kSis);
    auto driver = [](const TimeGrid& grid, double phase) {
        DriverSample d(grid.size());
        for (std::size_t i = 0; i < grid.size(); ++i) {
            const double t = grid.at(i);
            d.jhat[i] = 0.3 * std::sin(t + phase);
            d.mhat[i] = std::cos(t - phase);
            d.jhat1[i] = 0.1 * t;
            d.mhat1[i] = std::sin(2 * t) / 4;
        }
        return d;
    };
    const TimeGrid grid(0.05, 5.0);
    const auto flln = solve_flln(kSis, init, grid);
    const FluctuationSolver solver(kSis, init, flln);
    const auto a = driver(grid, 0.0), b = driver(grid, 1.0);
    DriverSample c(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        c.jhat[i] = a.jhat[i] + 2 * b.jhat[i];
        c.mhat[i] = a.mhat[i] + 2 * b.mhat[i];
        c.jhat1[i] = a.jhat1[i] + 2 * b.jhat1[i];
        c.mhat1[i] = a.mhat1[i] + 2 * b.mhat1[i];
    }
    const auto pa = solver.solve(a), pb = solver.solve(b), pc = solver.solve(c);
    double err = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double pairs[4][3] = {{pa.shat[i], pb.shat[i], pc.shat[i]},
                                    {pa.fhat[i], pb.fhat[i], pc.fhat[i]},
                                    {pa.uhat[i], pb.uhat[i], pc.uhat[i]},
                                    {pa.ihat[i], pb.ihat[i], pc.ihat[i]}};
        for (const auto& p : pairs) {
            err = std::max(err, std::abs(p[0] + 2 * p[1] - p[2]));
            scale = std::max(scale, std::abs(p[2]));
        }
    }
    const auto z = solver.solve(DriverSample(grid.size()));
    double zero = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i)
        zero = std::max({zero, std::abs(z.shat[i]), std::abs(z.fhat[i]), std::abs(z.uhat[i]), std::abs(z.ihat[i])});

    std::vector<FluctuationPath> paths;
    for (double dt : {0.1, 0.05, 0.025}) {
        const TimeGrid gr(dt, 5.0);
        const auto fl = solve_flln(kSis, init, gr);
        paths.push_back(FluctuationSolver(kSis, init, fl).solve(driver(gr, 0.0)));
    }
    auto gap = [](const FluctuationPath& coarse, const FluctuationPath& fine) {
        double m = 0.0;
        for (std::size_t g = 0; g < coarse.fhat.size(); ++g)
            m = std::max({m, std::abs(coarse.fhat[g] - fine.fhat[2 * g]), std::abs(coarse.shat[g] - fine.shat[2 * g]),
                          std::abs(coarse.ihat[g] - fine.ihat[2 * g])});
        return m;
    };
    const double ratio = gap(paths[0], paths[1]) / gap(paths[1], paths[2]);
    return {err <= 1e-12 * scale && zero == 0.0 && ratio > 3 && ratio < 5,
            "superposition " + num(err / scale) + " relative, zero driver " + num(zero) + ", refinement ratio " +
                num(ratio)};
}

Outcome ac8()
{
    const double p = 0.1;
    const auto init = InitialLaw::from(p, kSis);
    const TimeGrid grid(0.1, 10.0);
    const auto flln = solve_flln(kSis, init, grid);
    CovarianceOptions small, large;
    small.agents = 2000;
    large.agents = 8000;
    const auto a = estimate_driver_covariance(kSis, init, flln, 801, small);
    const auto b = estimate_driver_covariance(kSis, init, flln, 802, large);

    const auto m0 = CovarianceModel::index(0, kM);
    const double target = p * (1 - p) * 4.0;
    const double z = std::abs(b.at(m0, m0) - target) / b.se(m0, m0);

    const DriverSampler sampler(b);
    const auto dim = static_cast<Eigen::Index>(b.dim());
    Eigen::MatrixXd c(dim, dim);
    double diag = 0.0;
    for (Eigen::Index x = 0; x < dim; ++x) {
        for (Eigen::Index y = 0; y < dim; ++y)
            c(x, y) = b.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y));
        diag += c(x, x);
    }
    diag /= static_cast<double>(dim);
    c.diagonal().array() += sampler.jitter() * diag;
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(c, Eigen::EigenvaluesOnly);
    const double lowest = eig.eigenvalues().minCoeff();
    const bool psd = lowest >= -1e-12 * diag && sampler.jitter() <= 1e-8;

    std::size_t outside = 0, total = 0;
    for (std::size_t x = 0; x < a.dim(); ++x)
        for (std::size_t y = 0; y <= x; ++y) {
            const double se = std::hypot(a.se(x, y), b.se(x, y));
            outside += std::abs(a.at(x, y) - b.at(x, y)) > 3 * se + 1e-15;
            ++total;
        }
    const double frac = static_cast<double>(outside) / static_cast<double>(total);
    return {z < 3 && psd && frac <= 0.01, "Var M(0) " + num(b.at(m0, m0)) + " vs " + num(target) + " (" + num(z) +
                                              " SE), jitter " + num(sampler.jitter()) + ", lowest eigenvalue " +
                                              num(lowest) + ", entries outside 3 SE " + num(100 * frac) + "%"};
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

Outcome ac9()
{
    auto config = parse_config(fs::path(EPIWANE_SOURCE_DIR) / "configs" / "quick_sis.json");
    config.verify.flln = FllnCheck{};
    config.verify.survival = SurvivalCheck{2000};
    config.verify.solver = SolverCheck{};
    config.verify.quarantine = QuarantineCheck{200, 10, {0}, std::nullopt};
    const auto root = fs::temp_directory_path() / "epiwane_acceptance_ac9";
    fs::remove_all(root);
    std::size_t files = 0, differing = 0;
    std::string which;
    for (const auto& cmd : kSubcommands) {
        std::vector<std::vector<fs::path>> runs;
        for (std::size_t threads : {1, 1, 2}) {
            RunOptions o;
            o.out = root / ("run" + std::to_string(runs.size()));
            o.threads = threads;
            runs.push_back(run_subcommand(cmd, config, o).artifacts);
        }
        for (std::size_t k = 0; k < runs[0].size(); ++k) {
            const std::string ref = slurp(runs[0][k]);
            for (std::size_t r = 1; r < runs.size(); ++r) {
                ++files;
                if (slurp(runs[r][k]) != ref) {
                    ++differing;
                    which += " " + cmd + ":" + runs[0][k].filename().string() + (r == 2 ? "(threads)" : "");
                }
            }
        }
    }
    return {differing == 0 && files > 0,
            std::to_string(files) + " artifact comparisons, " + std::to_string(differing) + " differ" + which};
}

} // namespace

int main()
{
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
        {"AC-1", ac1}, {"AC-2", ac2}, {"AC-3", ac3}, {"AC-4", ac4}, {"AC-5", ac5},
        {"AC-6", ac6}, {"AC-7", ac7}, {"AC-8", ac8}, {"AC-9", ac9},
    };
    int failed = 0;
    for (const auto& [name, run] : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = run();
        }
        catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("%s %s %s (%.1f s)\n", name, o.pass ? "PASS" : "FAIL", o.detail.c_str(), secs);
        std::fflush(stdout);
        failed += !o.pass;
    }
    return failed == 0 ? 0 : 1;
}
