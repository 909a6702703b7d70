#include "epiwane/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <sstream>

#include "epiwane/error.hpp"
#include "epiwane/fclt.hpp"
#include "epiwane/flln.hpp"
#include "epiwane/io.hpp"
#include "epiwane/log.hpp"
#include "epiwane/parallel.hpp"
#include "epiwane/simulator.hpp"

namespace epiwane {

namespace fs = std::filesystem;

namespace {

inline constexpr std::int64_t kPhaseStream = -7;

enum Phase : std::uint64_t {
    kCovariancePhase = 1,
    kDriverPhase,
    kRatePhase,
    kFcltPopulationPhase,
    kSurvivalPhase,
    kCouplingPhase,
    kQuarantinePhase,
    kSolverPhase,
    kCovarianceCheckPhase,
};

class Stopwatch {
public:
    double seconds() const
    {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(double x)
{
    std::ostringstream s;
    s << x;
    return s.str();
}

Metric metric(std::string name, double target, double value, double tol, bool pass, std::string ref)
{
    return {std::move(name), target, value, tol, pass, std::move(ref)};
}

LimitSolution limit_on(const ExperimentConfig& c, const TimeGrid& grid)
{
    return solve_flln(c.profile, c.initial, grid, c.flln);
}

TimeGrid fclt_grid(const ExperimentConfig& c, double horizon) { return TimeGrid(c.fclt.dt, horizon); }

struct FcltModel {
    LimitSolution flln;
    CovarianceModel cov;
    ModelEnsemble paths;
    double jitter = 0.0;
};

FcltModel build_fclt_model(const ExperimentConfig& c, const TimeGrid& grid, std::uint64_t seed, std::size_t threads)
{
    FcltModel m;
    Stopwatch w;
    m.flln = limit_on(c, grid);
    m.cov = estimate_driver_covariance(c.profile, c.initial, m.flln, phase_seed(seed, kCovariancePhase),
                                       {c.fclt.agents, threads, 512});
    log_info("driver covariance: " + std::to_string(m.cov.dim()) + " dims from " + std::to_string(c.fclt.agents) +
             " agents in " + fmt(w.seconds()) + " s");
    const DriverSampler sampler(m.cov);
    m.jitter = sampler.jitter();
    FcltOptions opts;
    opts.corollary_literal = c.fclt.corollary_literal;
    opts.kernel = c.flln.kernel;
    const FluctuationSolver solver(c.profile, c.initial, m.flln, opts);
    m.paths = run_fclt_ensemble(solver, sampler, c.fclt.driver_samples, phase_seed(seed, kDriverPhase), {threads, 64});
    log_info("fluctuation ensemble: " + std::to_string(c.fclt.driver_samples) + " paths, jitter " + fmt(m.jitter) +
             ", total " + fmt(w.seconds()) + " s");
    return m;
}

EnsembleOptions ensemble_options(const ExperimentConfig& c, std::size_t threads)
{
    EnsembleOptions o;
    o.threads = threads;
    o.simulation = c.simulation();
    return o;
}

double initial_lambda_at_zero(const InitialLaw& init)
{
    const ProfileLaw& p = init.infected_profile;
    return p.family() == Family::PiecewiseConstant ? p.segments().front().level : p.lambda_base();
}

} // namespace

std::uint64_t phase_seed(std::uint64_t seed, std::uint64_t phase) noexcept
{
    return stream_key(seed, phase, kPhaseStream);
}

EnsembleSummary restrict_to_grid(const EnsembleSummary& e, const TimeGrid& grid)
{
    if (e.grid == grid)
        return e;
    const double ratio = grid.dt() / e.grid.dt();
    const auto stride = static_cast<std::size_t>(std::llround(ratio));
    if (stride == 0 || std::abs(ratio - static_cast<double>(stride)) > 1e-9 * ratio ||
        !(e.grid.coarsened(stride) == grid))
        throw InvalidParameter("grid", "ensemble grid (dt " + fmt(e.grid.dt()) + ") cannot be restricted to dt " +
                                           fmt(grid.dt()) + ", horizon " + fmt(grid.horizon()));
    EnsembleSummary r;
    r.fingerprint = e.fingerprint;
    r.seed = e.seed;
    r.n = e.n;
    r.replicates = e.replicates;
    r.grid = grid;
    const std::size_t G = grid.size(), Ge = e.grid.size();
    for (std::size_t q = 0; q < 4; ++q) {
        auto pick = [&](const std::vector<double>& v) {
            std::vector<double> out;
            if (v.size() != Ge)
                return out;
            for (std::size_t g = 0; g < G; ++g)
                out.push_back(v[g * stride]);
            return out;
        };
        r.mean[q] = pick(e.mean[q]);
        r.var[q] = pick(e.var[q]);
        r.hat_mean[q] = pick(e.hat_mean[q]);
        r.hat_var[q] = pick(e.hat_var[q]);
        r.hat_samples[q].resize(e.replicates * G);
        for (std::size_t k = 0; k < e.replicates; ++k)
            for (std::size_t g = 0; g < G; ++g)
                r.hat_samples[q][k * G + g] = e.hat_samples[q][k * Ge + g * stride];
    }
    return r;
}

ComparisonReport verify_flln(const ExperimentConfig& config, const FllnCheck& check)
{
    const TimeGrid grid = config.grid();
    const double p = config.initial.p_infected;
    const ProfileLaw law = ProfileLaw::sis_indicator(check.lambda, Exponential{check.mu});
    const LimitSolution sol = solve_flln(law, InitialLaw::from(p, law), grid, config.flln);
    const std::vector<double> ode = solve_markovian_ode(check.lambda, check.mu, p, grid);
    double err = 0.0;
    for (std::size_t g = 0; g < grid.size(); ++g)
        err = std::max(err, std::abs(sol.ibar[g] - ode[g]));
    ComparisonReport rep;
    rep.metrics.push_back(metric("flln_ibar_sup_error_vs_ode", 0.0, err, check.tol, err < check.tol, "FLLN"));
    const double endemic = check.lambda > check.mu ? 1.0 - check.mu / check.lambda : 0.0;
    const double last = sol.ibar.back();
    rep.metrics.push_back(metric("flln_ibar(T)_vs_endemic", endemic, last, check.endemic_tol,
                                 std::abs(last - endemic) <= check.endemic_tol, "FLLN"));
    return rep;
}

ComparisonReport verify_rate(const ExperimentConfig& config, const RateCheck& check, std::uint64_t seed,
                             std::size_t threads)
{
    const TimeGrid grid(config.dt, check.t);
    const LimitSolution flln = limit_on(config, grid);
    std::vector<std::pair<double, double>> errors;
    for (std::size_t n : check.population_sizes) {
        Stopwatch w;
        const EnsembleSummary e = run_ensemble(config.profile, config.initial, flln, n, check.replicates,
                                               phase_seed(phase_seed(seed, kRatePhase), n),
                                               ensemble_options(config, threads));
        errors.emplace_back(static_cast<double>(n), mean_abs_deviation(e, kF, check.t));
        log_info("rate: N=" + std::to_string(n) + " error " + fmt(errors.back().second) + " (" + fmt(w.seconds()) +
                 " s)");
    }
    ComparisonReport rep;
    const RateFit fit = fit_convergence_rate(errors);
    rep.rate_fit = fit;
    const double mid = 0.5 * (check.slope_min + check.slope_max);
    rep.metrics.push_back(metric("lln_rate_slope", mid, fit.slope, 0.5 * (check.slope_max - check.slope_min),
                                 fit.slope >= check.slope_min && fit.slope <= check.slope_max, "LLN rate"));
    return rep;
}

ComparisonReport verify_fclt(const ExperimentConfig& config, const FcltCheck& check, std::uint64_t seed,
                             std::size_t threads)
{
    const TimeGrid grid = fclt_grid(config, check.horizon);
    const FcltModel model = build_fclt_model(config, grid, seed, threads);
    Stopwatch w;
    const EnsembleSummary e = run_ensemble(config.profile, config.initial, model.flln, check.n, check.replicates,
                                           phase_seed(seed, kFcltPopulationPhase), ensemble_options(config, threads));
    log_info("fclt population ensemble: " + fmt(w.seconds()) + " s");
    CompareOptions opts;
    opts.probes = check.probes;
    opts.observables = {kF, kI};
    opts.variance_tol = config.fclt.variance_tol;
    return compare_fclt(e, model.paths, opts);
}

ComparisonReport verify_survival(const SurvivalCheck& check, std::uint64_t seed, std::size_t threads)
{
    // one infective with lambda = 2 on [0, 1) and one fully susceptible individual
    const ProfileLaw law = ProfileLaw::sis_indicator(2.0, Deterministic{1.0});
    const InitialLaw init = InitialLaw::from(0.5, law);
    const TimeGrid grid(1.0, 1.0);
    SimulationOptions sim;
    const std::uint64_t base = phase_seed(seed, kSurvivalPhase);
    std::vector<unsigned char> survived(check.replicates, 0);
    parallel_for(check.replicates, threads, [&](std::size_t r) {
        const Trajectory t = simulate_population(init, law, 2, grid, replicate_seed(base, r), sim);
        survived[r] = std::none_of(t.events.begin(), t.events.end(), [](const Event& e) { return e.t < 1.0; });
    });
    double freq = 0.0;
    for (unsigned char s : survived)
        freq += s;
    freq /= static_cast<double>(check.replicates);
    const double target = std::exp(-1.0);
    const double se = std::sqrt(target * (1 - target) / static_cast<double>(check.replicates));
    ComparisonReport rep;
    rep.metrics.push_back(metric("two_individual_survival", target, freq, 3 * se, std::abs(freq - target) <= 3 * se,
                                 "thinning construction of A^N"));
    return rep;
}

ComparisonReport verify_coupling(const ExperimentConfig& config, const CouplingCheck& check, std::uint64_t seed,
                                 std::size_t threads)
{
    const double lstar = thinning_bound(config.profile, config.initial);
    const double horizon = check.horizon.value_or(3.0 / lstar);
    const LimitSolution flln = limit_on(config, TimeGrid(config.dt, horizon));
    std::vector<CouplingDiagnostics> runs(check.replicates);
    const std::uint64_t base = phase_seed(seed, kCouplingPhase);
    SimulationOptions sim = config.simulation();
    parallel_for(check.replicates, threads, [&](std::size_t r) {
        runs[r] = simulate_coupled(config.initial, config.profile, check.n, flln, replicate_seed(base, r), sim).diagnostics;
    });
    return check_coupling_bounds(runs, lstar, flln.grid.horizon(), check.n);
}

ComparisonReport verify_quarantine(const ExperimentConfig& config, const QuarantineCheck& check, std::uint64_t seed,
                                   std::size_t threads)
{
    const double lstar = thinning_bound(config.profile, config.initial);
    const double horizon = check.horizon.value_or(3.0 / lstar);
    const TimeGrid grid(config.dt, horizon);
    std::vector<QuarantineDiagnostics> runs(check.replicates);
    const std::uint64_t base = phase_seed(seed, kQuarantinePhase);
    SimulationOptions sim = config.simulation();
    parallel_for(check.replicates, threads, [&](std::size_t r) {
        runs[r] = simulate_quarantine(config.initial, config.profile, check.n, grid, check.quarantined,
                                      replicate_seed(base, r), sim)
                      .diagnostics;
    });
    return check_quarantine_bounds(runs, grid.horizon());
}

namespace {

// Smooth deterministic forcing, the same function on every grid.
DriverSample smooth_driver(const TimeGrid& grid)
{
    DriverSample d(grid.size());
    for (std::size_t g = 0; g < grid.size(); ++g) {
        const double t = grid.at(g);
        d.jhat[g] = 0.3 * std::sin(t) + 0.1;
        d.mhat[g] = 0.5 * std::cos(0.7 * t);
        d.jhat1[g] = 0.2 * std::sin(1.3 * t);
        d.mhat1[g] = -0.2 * std::sin(1.3 * t) + 0.05 * t;
    }
    return d;
}

DriverSample noise_driver(const TimeGrid& grid, std::uint64_t seed)
{
    Stream s(seed, 0, kDriverStream);
    std::normal_distribution<double> z;
    DriverSample d(grid.size());
    for (auto* v : {&d.jhat, &d.mhat, &d.jhat1, &d.mhat1})
        for (double& x : *v)
            x = z(s);
    return d;
}

double sup_diff(const std::vector<double>& a, const std::vector<double>& b)
{
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

double sup_norm(const FluctuationPath& p)
{
    double m = 0.0;
    for (auto* v : {&p.shat, &p.fhat, &p.uhat, &p.ihat})
        for (double x : *v)
            m = std::max(m, std::abs(x));
    return m;
}

} // namespace

ComparisonReport verify_solver(const ExperimentConfig& config, const SolverCheck& check, std::uint64_t seed)
{
    FcltOptions opts;
    opts.corollary_literal = config.fclt.corollary_literal;
    opts.kernel = config.flln.kernel;
    ComparisonReport rep;

    const TimeGrid grid(check.dt, check.horizon);
    const LimitSolution flln = limit_on(config, grid);
    const FluctuationSolver solver(config.profile, config.initial, flln, opts);

    const DriverSample d1 = noise_driver(grid, phase_seed(seed, kSolverPhase));
    const DriverSample d2 = noise_driver(grid, phase_seed(seed, kSolverPhase + 100));
    const double a = 1.7, b = -0.6;
    DriverSample mix(grid.size());
    for (std::size_t g = 0; g < grid.size(); ++g) {
        mix.jhat[g] = a * d1.jhat[g] + b * d2.jhat[g];
        mix.mhat[g] = a * d1.mhat[g] + b * d2.mhat[g];
        mix.jhat1[g] = a * d1.jhat1[g] + b * d2.jhat1[g];
        mix.mhat1[g] = a * d1.mhat1[g] + b * d2.mhat1[g];
    }
    const FluctuationPath p1 = solver.solve(d1), p2 = solver.solve(d2), pm = solver.solve(mix);
    double lin = 0.0;
    auto combo = [&](const std::vector<double>& x, const std::vector<double>& y, const std::vector<double>& z) {
        for (std::size_t g = 0; g < x.size(); ++g)
            lin = std::max(lin, std::abs(z[g] - (a * x[g] + b * y[g])));
    };
    combo(p1.shat, p2.shat, pm.shat);
    combo(p1.fhat, p2.fhat, pm.fhat);
    combo(p1.uhat, p2.uhat, pm.uhat);
    combo(p1.ihat, p2.ihat, pm.ihat);
    const double scale = std::max({1.0, sup_norm(p1), sup_norm(p2)});
    rep.metrics.push_back(metric("solver_superposition_error", 0.0, lin, 1e-12 * scale, lin <= 1e-12 * scale,
                                 "linearity of the fluctuation system"));

    const double zero = sup_norm(solver.solve(DriverSample(grid.size())));
    rep.metrics.push_back(metric("solver_zero_driver", 0.0, zero, 0.0, zero == 0.0, "linearity of the fluctuation system"));

    // dt, dt/2, dt/4 with a smooth driver, compared on the coarse grid
    std::vector<FluctuationPath> paths;
    for (std::size_t k : {1, 2, 4}) {
        const TimeGrid gk(check.dt / static_cast<double>(k), check.horizon);
        const LimitSolution fk = limit_on(config, gk);
        const FluctuationSolver sk(config.profile, config.initial, fk, opts);
        FluctuationPath p = sk.solve(smooth_driver(gk));
        FluctuationPath c;
        for (std::size_t g = 0; g < grid.size(); ++g) {
            c.shat.push_back(p.shat[g * k]);
            c.fhat.push_back(p.fhat[g * k]);
            c.uhat.push_back(p.uhat[g * k]);
            c.ihat.push_back(p.ihat[g * k]);
        }
        paths.push_back(std::move(c));
    }
    const double e1 = std::max(sup_diff(paths[0].fhat, paths[1].fhat), sup_diff(paths[0].shat, paths[1].shat));
    const double e2 = std::max(sup_diff(paths[1].fhat, paths[2].fhat), sup_diff(paths[1].shat, paths[2].shat));
    const double ratio = e2 > 0 ? e1 / e2 : std::nan("");
    rep.metrics.push_back(metric("solver_refinement_ratio", 4.0, ratio, 1.0, std::abs(ratio - 4.0) <= 1.0,
                                 "second order trapezoid marching"));
    return rep;
}

ComparisonReport verify_covariance(const ExperimentConfig& config, const CovarianceCheck& check, std::uint64_t seed,
                                   std::size_t threads)
{
    const TimeGrid grid = fclt_grid(config, std::min(config.horizon, 5.0));
    const LimitSolution flln = limit_on(config, grid);
    const std::uint64_t base = phase_seed(seed, kCovarianceCheckPhase);
    const CovarianceModel small =
        estimate_driver_covariance(config.profile, config.initial, flln, base, {check.agents, threads, 512});
    const CovarianceModel large =
        estimate_driver_covariance(config.profile, config.initial, flln, phase_seed(base, 4), {4 * check.agents, threads, 512});

    ComparisonReport rep;
    const double p = config.initial.p_infected;
    const double l0 = initial_lambda_at_zero(config.initial);
    const double target = p * (1 - p) * l0 * l0;
    const std::size_t m0 = CovarianceModel::index(0, kM);
    const double v = large.at(m0, m0), se = large.se(m0, m0);
    rep.metrics.push_back(metric("var_mhat(0)_bernoulli", target, v, 3 * se, std::abs(v - target) <= 3 * se,
                                 "definition of the driver covariance"));

    const DriverSampler sampler(large);
    rep.metrics.push_back(metric("covariance_jitter", 0.0, sampler.jitter(), 1e-8, sampler.jitter() <= 1e-8,
                                 "definition of the driver covariance"));

    // entries outside the combined 3 SE band; about 0.3% expected by chance
    std::size_t outside = 0, total = 0;
    for (std::size_t i = 0; i < small.dim(); ++i)
        for (std::size_t j = 0; j <= i; ++j) {
            const double d = std::abs(small.at(i, j) - large.at(i, j));
            const double band = 3 * std::hypot(small.se(i, j), large.se(i, j));
            ++total;
            if (d > band + 1e-12)
                ++outside;
        }
    const double frac = static_cast<double>(outside) / static_cast<double>(total);
    rep.metrics.push_back(metric("covariance_m_vs_4m_outside_3se", 0.0027, frac, 0.01, frac <= 0.01,
                                 "definition of the driver covariance"));
    return rep;
}

ComparisonReport run_verify(const ExperimentConfig& config, std::uint64_t seed, std::size_t threads)
{
    ComparisonReport rep;
    const VerifyConfig& v = config.verify;
    auto section = [&](const char* name, auto&& fn) {
        Stopwatch w;
        ComparisonReport r = fn();
        log_info(std::string("verify ") + name + ": " + (r.passed() ? "pass" : "FAIL") + " in " + fmt(w.seconds()) + " s");
        rep.append(r);
    };
    if (v.flln)
        section("flln", [&] { return verify_flln(config, *v.flln); });
    if (v.rate)
        section("rate", [&] { return verify_rate(config, *v.rate, seed, threads); });
    if (v.fclt)
        section("fclt", [&] { return verify_fclt(config, *v.fclt, seed, threads); });
    if (v.survival)
        section("survival", [&] { return verify_survival(*v.survival, seed, threads); });
    if (v.coupling)
        section("coupling", [&] { return verify_coupling(config, *v.coupling, seed, threads); });
    if (v.quarantine)
        section("quarantine", [&] { return verify_quarantine(config, *v.quarantine, seed, threads); });
    if (v.solver)
        section("solver", [&] { return verify_solver(config, *v.solver, seed); });
    if (v.covariance)
        section("covariance", [&] { return verify_covariance(config, *v.covariance, seed, threads); });
    return rep;
}

RunResult run_subcommand(const std::string& command, const ExperimentConfig& config, const RunOptions& options)
{
    const fs::path out = options.out.value_or(fs::path(config.output_dir));
    const std::uint64_t seed = options.seed.value_or(config.seed);
    const std::size_t threads = std::max<std::size_t>(1, options.threads);
    const ArtifactTag tag{fingerprint(config), seed};
    RunResult res;
    auto emit = [&](const fs::path& p) {
        res.artifacts.push_back(p);
        log_info("wrote " + p.string());
    };

    if (command == "simulate") {
        const std::size_t n = config.population_sizes.front();
        const Trajectory t = simulate_population(config.initial, config.profile, n, config.grid(), seed,
                                                 config.simulation());
        write_trajectory_csv(out / "trajectory.csv", t, tag);
        emit(out / "trajectory.csv");
        write_events_csv(out / "events.csv", t, tag);
        emit(out / "events.csv");
    }
    else if (command == "flln") {
        const LimitSolution sol = limit_on(config, config.grid());
        write_flln_csv(out / "flln.csv", sol, tag);
        emit(out / "flln.csv");
        write_flln_report(out / "flln_report.json", sol, tag);
        emit(out / "flln_report.json");
    }
    else if (command == "fclt") {
        const FcltModel m = build_fclt_model(config, fclt_grid(config, config.horizon), seed, threads);
        write_covariance_csv(out / "covariance.csv", m.cov, tag);
        emit(out / "covariance.csv");
        write_fluctuations_csv(out / "fluctuations.csv", m.paths, tag);
        emit(out / "fluctuations.csv");
    }
    else if (command == "ensemble") {
        const LimitSolution flln = limit_on(config, config.grid());
        for (std::size_t n : config.population_sizes) {
            EnsembleSummary e = run_ensemble(config.profile, config.initial, flln, n, config.replicates,
                                             phase_seed(seed, n), ensemble_options(config, threads));
            e.fingerprint = tag.fingerprint;
            const std::string suffix = "_N" + std::to_string(n) + ".csv";
            write_ensemble_csv(out / ("ensemble" + suffix), e, tag);
            emit(out / ("ensemble" + suffix));
            write_ensemble_samples_csv(out / ("ensemble_samples" + suffix), e, tag);
            emit(out / ("ensemble_samples" + suffix));
        }
    }
    else if (command == "verify") {
        res.report = run_verify(config, seed, threads);
        write_report_json(out / "verify_report.json", *res.report, tag);
        emit(out / "verify_report.json");
    }
    else if (command == "compare") {
        const std::size_t n = config.population_sizes.front();
        const fs::path model_path = out / "fluctuations.csv";
        const fs::path ens_path = out / ("ensemble_samples_N" + std::to_string(n) + ".csv");
        ArtifactTag model_tag, ens_tag;
        const ModelEnsemble model = read_fluctuations_csv(model_path, &model_tag);
        const EnsembleSummary ens = read_ensemble_samples_csv(ens_path, &ens_tag);
        for (const auto& [path, t] : {std::pair{model_path, model_tag}, std::pair{ens_path, ens_tag}})
            if (t.fingerprint != tag.fingerprint)
                throw InvalidParameter(path.string(), "fingerprint " + t.fingerprint +
                                                          " does not match the config (" + tag.fingerprint + ")");
        CompareOptions opts;
        opts.probes = config.fclt.probes;
        opts.variance_tol = config.fclt.variance_tol;
        res.report = compare_fclt(restrict_to_grid(ens, model.grid), model, opts);
        write_report_json(out / "compare_report.json", *res.report, tag);
        emit(out / "compare_report.json");
    }
    else {
        throw InvalidParameter("command", "unknown subcommand '" + command + "'");
    }
    if (res.report && !res.report->passed())
        res.exit_code = 1;
    return res;
}

} // namespace epiwane
