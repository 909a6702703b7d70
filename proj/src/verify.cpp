#include "epiwane/verify.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include <boost/math/statistics/linear_regression.hpp>

#include "epiwane/error.hpp"
#include "epiwane/parallel.hpp"

namespace epiwane {

std::uint64_t replicate_seed(std::uint64_t master, std::size_t r) noexcept
{
    return stream_key(master, r, kReplicateStream);
}

EnsembleSummary run_ensemble(const ProfileLaw& law, const InitialLaw& init, const LimitSolution& flln, std::size_t n,
                             std::size_t replicates, std::uint64_t seed, const EnsembleOptions& options)
{
    if (replicates == 0)
        throw InvalidParameter("replicates", "must be at least 1");
    const TimeGrid& grid = flln.grid;
    const std::size_t G = grid.size();
    EnsembleSummary e;
    e.seed = seed;
    e.n = n;
    e.replicates = replicates;
    e.grid = grid;

    std::array<std::vector<double>, 4> raw;
    for (std::size_t q = 0; q < 4; ++q) {
        raw[q].resize(replicates * G);
        e.hat_samples[q].resize(replicates * G);
    }
    SimulationOptions sim = options.simulation;
    sim.record_events = false;
    const double rn = std::sqrt(static_cast<double>(n));
    const double inv_n = 1.0 / static_cast<double>(n);
    const std::array<const std::vector<double>*, 4> limit{&flln.fbar, &flln.sbar, &flln.ibar, &flln.ubar};

    parallel_for(replicates, options.threads, [&](std::size_t r) {
        const Trajectory t = simulate_population(init, law, n, grid, replicate_seed(seed, r), sim);
        for (std::size_t g = 0; g < G; ++g) {
            const std::size_t at = r * G + g;
            raw[kF][at] = t.fbar[g];
            raw[kS][at] = t.sbar[g];
            raw[kI][at] = static_cast<double>(t.infected[g]) * inv_n;
            raw[kU][at] = static_cast<double>(t.uninfected[g]) * inv_n;
            for (std::size_t q = 0; q < 4; ++q)
                e.hat_samples[q][at] = rn * (raw[q][at] - (*limit[q])[g]);
        }
    });

    auto moments = [&](const std::vector<double>& x, std::vector<double>& mean, std::vector<double>& var) {
        mean.assign(G, 0.0);
        var.assign(G, 0.0);
        for (std::size_t r = 0; r < replicates; ++r)
            for (std::size_t g = 0; g < G; ++g)
                mean[g] += x[r * G + g];
        for (double& m : mean)
            m /= static_cast<double>(replicates);
        if (replicates < 2) {
            var.assign(G, std::nan(""));
            return;
        }
        for (std::size_t r = 0; r < replicates; ++r)
            for (std::size_t g = 0; g < G; ++g) {
                const double d = x[r * G + g] - mean[g];
                var[g] += d * d;
            }
        for (double& v : var)
            v /= static_cast<double>(replicates - 1);
    };
    for (std::size_t q = 0; q < 4; ++q) {
        moments(raw[q], e.mean[q], e.var[q]);
        moments(e.hat_samples[q], e.hat_mean[q], e.hat_var[q]);
    }
    return e;
}

double mean_abs_deviation(const EnsembleSummary& e, Observable q, double t)
{
    const std::size_t g = e.grid.index_of(t);
    double acc = 0.0;
    for (std::size_t r = 0; r < e.replicates; ++r)
        acc += std::abs(e.hat(q, r, g));
    return acc / static_cast<double>(e.replicates) / std::sqrt(static_cast<double>(e.n));
}

RateFit fit_convergence_rate(std::span<const std::pair<double, double>> errors)
{
    std::vector<double> x, y;
    for (const auto& [n, err] : errors) {
        if (!(n > 0))
            throw InvalidParameter("errors", "population sizes must be positive");
        if (!(err > 0) || !std::isfinite(err))
            throw InvalidParameter("errors", "errors must be positive and finite (got " + std::to_string(err) + ")");
        x.push_back(std::log(n));
        y.push_back(std::log(err));
    }
    std::vector<double> distinct = x;
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    if (distinct.size() < 3)
        throw InvalidParameter("errors", "need at least 3 distinct population sizes");
    const auto [c0, c1, r2] = boost::math::statistics::simple_ordinary_least_squares_with_R_squared(x, y);
    return {c1, c0, r2};
}

ModelEnsemble run_fclt_ensemble(const FluctuationSolver& solver, const DriverSampler& sampler, std::size_t samples,
                                std::uint64_t seed, const ModelEnsembleOptions& options)
{
    if (!(solver.grid() == sampler.grid()))
        throw InvalidParameter("grid", "solver and driver covariance use different grids");
    const std::size_t G = solver.grid().size();
    ModelEnsemble m;
    m.grid = solver.grid();
    m.samples = samples;
    for (auto& p : m.paths)
        p.resize(samples * G);
    const std::size_t batch = std::max<std::size_t>(1, options.batch);
    const std::size_t batches = (samples + batch - 1) / batch;
    parallel_for(batches, options.threads, [&](std::size_t b) {
        const std::size_t first = b * batch;
        const std::size_t count = std::min(batch, samples - first);
        const auto drivers = sampler.sample_batch(seed, first, count);
        for (std::size_t c = 0; c < count; ++c) {
            const FluctuationPath p = solver.solve(drivers[c]);
            const std::size_t at = (first + c) * G;
            std::copy(p.fhat.begin(), p.fhat.end(), m.paths[kF].begin() + static_cast<std::ptrdiff_t>(at));
            std::copy(p.shat.begin(), p.shat.end(), m.paths[kS].begin() + static_cast<std::ptrdiff_t>(at));
            std::copy(p.ihat.begin(), p.ihat.end(), m.paths[kI].begin() + static_cast<std::ptrdiff_t>(at));
            std::copy(p.uhat.begin(), p.uhat.end(), m.paths[kU].begin() + static_cast<std::ptrdiff_t>(at));
        }
    });
    return m;
}

bool ComparisonReport::passed() const noexcept
{
    return std::all_of(metrics.begin(), metrics.end(), [](const Metric& m) { return m.pass; });
}

void ComparisonReport::append(const ComparisonReport& other)
{
    metrics.insert(metrics.end(), other.metrics.begin(), other.metrics.end());
    ks.insert(ks.end(), other.ks.begin(), other.ks.end());
    if (other.rate_fit)
        rate_fit = other.rate_fit;
}

namespace {

// P(K > x) for the Kolmogorov distribution
double kolmogorov_tail(double x)
{
    if (x <= 0)
        return 1.0;
    if (x < 1.18) {
        const double pi = std::numbers::pi;
        double s = 0.0;
        for (int k = 1; k <= 20; ++k) {
            const double j = 2.0 * k - 1.0;
            s += std::exp(-j * j * pi * pi / (8.0 * x * x));
        }
        return std::clamp(1.0 - std::sqrt(2.0 * pi) / x * s, 0.0, 1.0);
    }
    double s = 0.0;
    for (int k = 1; k <= 100; ++k) {
        const double term = std::exp(-2.0 * k * k * x * x);
        s += (k % 2 ? 2.0 : -2.0) * term;
        if (term < 1e-18)
            break;
    }
    return std::clamp(s, 0.0, 1.0);
}

std::string probe_name(const char* what, double t)
{
    std::ostringstream s;
    s << what << "(t=" << t << ")";
    return s.str();
}

} // namespace

std::pair<double, double> ks_two_sample(std::vector<double> a, std::vector<double> b)
{
    if (a.empty() || b.empty())
        throw InvalidParameter("samples", "KS needs two nonempty samples");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] == x)
            ++i;
        while (j < b.size() && b[j] == x)
            ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    const double ne = na * nb / (na + nb);
    const double rn = std::sqrt(ne);
    return {d, kolmogorov_tail((rn + 0.12 + 0.11 / rn) * d)};
}

double sample_variance(std::span<const double> x) { return sample_covariance(x, x); }

double sample_covariance(std::span<const double> x, std::span<const double> y)
{
    const std::size_t n = x.size();
    if (n < 2 || y.size() != n)
        return std::nan("");
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double c = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        c += (x[i] - mx) * (y[i] - my);
    return c / static_cast<double>(n - 1);
}

std::vector<double> default_probes(const TimeGrid& grid)
{
    const double T = grid.horizon();
    return {T / 4, T / 2, 3 * T / 4, T};
}

ComparisonReport compare_fclt(const EnsembleSummary& ens, const ModelEnsemble& model, const CompareOptions& options)
{
    if (!(ens.grid == model.grid))
        throw InvalidParameter("grid", "ensemble and model use different grids");
    if (ens.replicates < 2 || model.samples < 2)
        throw InvalidParameter("replicates", "variance comparison needs at least 2 samples on each side");
    const std::vector<double> probes = options.probes.empty() ? default_probes(ens.grid) : options.probes;
    const std::size_t G = ens.grid.size();

    auto column = [G](const std::vector<double>& rows, std::size_t count, std::size_t g) {
        std::vector<double> c(count);
        for (std::size_t r = 0; r < count; ++r)
            c[r] = rows[r * G + g];
        return c;
    };

    ComparisonReport rep;
    for (Observable q : options.observables) {
        std::vector<std::vector<double>> emp_cols, mod_cols;
        for (double t : probes) {
            const std::size_t g = ens.grid.index_of(t);
            auto emp = column(ens.hat_samples[q], ens.replicates, g);
            auto mod = column(model.paths[q], model.samples, g);
            const double ve = sample_variance(emp), vm = sample_variance(mod);
            Metric m;
            m.name = probe_name((std::string("var_") + kHatNames[q]).c_str(), ens.grid.at(g));
            m.target = vm;
            m.value = ve;
            m.tol = options.variance_tol * vm;
            m.pass = std::abs(ve - vm) <= m.tol;
            m.paper_ref = q == kI || q == kU ? "compartment FCLT" : "FCLT";
            rep.metrics.push_back(m);
            const auto [d, pv] = ks_two_sample(emp, mod);
            rep.ks.push_back({probe_name(kHatNames[q], ens.grid.at(g)), ens.grid.at(g), d, pv, emp.size(), mod.size()});
            emp_cols.push_back(std::move(emp));
            mod_cols.push_back(std::move(mod));
        }
        for (std::size_t a = 0; a + 1 < probes.size(); ++a) {
            const double ce = sample_covariance(emp_cols[a], emp_cols[a + 1]);
            const double cm = sample_covariance(mod_cols[a], mod_cols[a + 1]);
            const double scale = std::sqrt(sample_variance(mod_cols[a]) * sample_variance(mod_cols[a + 1]));
            Metric m;
            std::ostringstream name;
            name << "cov_" << kHatNames[q] << "(t=" << ens.grid.at(ens.grid.index_of(probes[a]))
                 << ",t'=" << ens.grid.at(ens.grid.index_of(probes[a + 1])) << ")";
            m.name = name.str();
            m.target = cm;
            m.value = ce;
            m.tol = options.variance_tol * scale;
            m.pass = std::abs(ce - cm) <= m.tol;
            m.paper_ref = q == kI || q == kU ? "compartment FCLT" : "FCLT";
            rep.metrics.push_back(m);
        }
    }
    return rep;
}

ComparisonReport check_coupling_bounds(std::span<const CouplingDiagnostics> runs, double lambda_star, double horizon,
                                       std::size_t n)
{
    ComparisonReport rep;
    if (runs.empty())
        return rep;
    const double rn = std::sqrt(static_cast<double>(n));
    double gap = 0.0, dev = 0.0, identity = 0.0;
    for (const auto& d : runs) {
        gap += d.mean_sup_gap;
        dev += std::abs(d.fhat.back()) / rn;
        for (std::size_t g = 0; g < d.fhat.size(); ++g)
            identity = std::max(identity, std::abs(d.fhat[g] - d.fhat1[g] - d.fhat2[g]));
    }
    gap /= static_cast<double>(runs.size());
    dev /= static_cast<double>(runs.size());
    const double bound = lambda_star / rn * horizon * std::exp(2 * lambda_star * horizon);
    rep.metrics.push_back({"mean_sup_count_gap", bound, gap, bound, gap < bound, "coupling bound"});
    const double bound44 = lambda_star / rn * (1 + lambda_star * horizon * std::exp(2 * lambda_star * horizon));
    rep.metrics.push_back({"mean_abs_fbar_deviation(T)", bound44, dev, bound44, dev < bound44, "LLN rate"});
    rep.metrics.push_back({"decomposition_identity", 0.0, identity, 1e-9, identity <= 1e-9, "decomposition of the fluctuations"});
    return rep;
}

ComparisonReport check_quarantine_bounds(std::span<const QuarantineDiagnostics> runs, double horizon)
{
    ComparisonReport rep;
    if (runs.empty())
        return rep;
    std::size_t violations = 0;
    double diverged = 0.0;
    const double lambda_star = runs.front().lambda_star;
    const double q = static_cast<double>(runs.front().quarantined.size());
    for (const auto& d : runs) {
        violations += d.violations;
        diverged += d.diverged.back();
    }
    diverged /= static_cast<double>(runs.size());
    const double bound = std::exp(q * lambda_star * horizon);
    rep.metrics.push_back({"pathwise_bound_violations", 0.0, static_cast<double>(violations), 0.0, violations == 0,
                           "quarantine bound"});
    rep.metrics.push_back({"mean_diverged_count(T)", bound, diverged, bound, diverged <= bound, "quarantine bound"});
    return rep;
}

} // namespace epiwane
