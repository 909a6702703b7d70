#include "epiwane/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <string>

#include "epiwane/error.hpp"

namespace epiwane {

namespace {

struct Individual {
    ProfileRealization profile;
    double tau = 0.0;          // last infection time (0 for never infected)
    std::uint32_t count = 0;   // A_k
    std::uint8_t segment = 0;  // current infectivity segment
    double lambda = 0.0;       // current infectivity
    Stream candidates;
    bool excluded = false;
};

enum class Kind : std::uint8_t { Candidate = 0, Breakpoint = 1 };

struct Pending {
    double t;
    Kind kind;
    std::uint32_t k;
    std::uint32_t generation;

    // min-heap on (t, kind, k): candidates see the left limit at ties
    bool operator>(const Pending& o) const noexcept
    {
        if (t != o.t)
            return t > o.t;
        if (kind != o.kind)
            return kind > o.kind;
        return k > o.k;
    }
};

// Neumaier summation; the force of infection is updated one event at a time
class CompensatedSum {
public:
    void add(double x) noexcept
    {
        const double t = sum_ + x;
        comp_ += std::abs(sum_) >= std::abs(x) ? (sum_ - t) + x : (x - t) + sum_;
        sum_ = t;
    }
    double value() const noexcept { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

ProfileRealization start_profile(const InitialLaw& init, bool infected, std::uint64_t seed, std::size_t k)
{
    if (!infected)
        return ProfileRealization::never();
    Stream s(seed, k, 0);
    return sample_initial_infected(init, s);
}

ProfileRealization reinfection_profile(const ProfileLaw& law, std::uint64_t seed, std::size_t k, std::uint32_t i)
{
    Stream s(seed, k, i);
    return sample_pair(law, s);
}

void check_cap(std::size_t n, double lambda_star, double horizon, double cap)
{
    const double expected = static_cast<double>(n) * lambda_star * horizon;
    if (expected > cap)
        throw InvalidParameter("simulation.candidate_cap", "expected candidate count " + std::to_string(expected) +
                                                               " exceeds the cap " + std::to_string(cap));
}

Trajectory run_population(const InitialLaw& init, const ProfileLaw& law, std::size_t n, const TimeGrid& grid,
                          std::uint64_t seed, const SimulationOptions& options, std::span<const std::uint32_t> excluded)
{
    if (n == 0)
        throw InvalidParameter("population_size", "must be at least 1");
    if (n > std::numeric_limits<std::uint32_t>::max())
        throw InvalidParameter("population_size", "too large");
    const double lstar = thinning_bound(law, init);
    const double horizon = grid.horizon();
    check_cap(n, lstar, horizon, options.candidate_cap);

    std::vector<Individual> pop(n);
    std::priority_queue<Pending, std::vector<Pending>, std::greater<>> queue;
    CompensatedSum fsum;
    for (std::uint32_t k = 0; k < n; ++k) {
        Individual& x = pop[k];
        x.candidates = Stream(seed, k, kCandidateStream);
        x.profile = start_profile(init, initially_infected(init, n, k, seed, options.assignment), seed, k);
        x.lambda = x.profile.lambda(0.0);
        queue.push({x.candidates.exponential(lstar), Kind::Candidate, k, 0});
        if (x.lambda > 0)
            queue.push({x.profile.ends[0], Kind::Breakpoint, k, 0});
    }
    for (std::uint32_t k : excluded) {
        if (k >= n)
            throw InvalidParameter("quarantined", "index " + std::to_string(k) + " out of range");
        pop[k].excluded = true;
    }
    for (const Individual& x : pop)
        if (!x.excluded)
            fsum.add(x.lambda);

    Trajectory traj;
    traj.grid = grid;
    traj.n = n;
    traj.counted = n - static_cast<std::size_t>(std::count_if(pop.begin(), pop.end(), [](const Individual& x) { return x.excluded; }));
    const std::size_t G = grid.size();
    traj.fbar.resize(G);
    traj.sbar.resize(G);
    traj.infected.resize(G);
    traj.uninfected.resize(G);
    const double inv_n = 1.0 / static_cast<double>(n);

    auto record = [&](std::size_t g) {
        const double t = grid.at(g);
        double f = 0.0, s = 0.0;
        std::int64_t infectious = 0;
        for (const Individual& x : pop) {
            if (x.excluded)
                continue;
            const double age = t - x.tau;
            f += x.profile.lambda(age);
            s += x.profile.gamma(age);
            infectious += x.profile.infectious(age) ? 1 : 0;
        }
        traj.fbar[g] = f * inv_n;
        traj.sbar[g] = s * inv_n;
        traj.infected[g] = infectious;
        traj.uninfected[g] = static_cast<std::int64_t>(traj.counted) - infectious;
    };

    std::size_t g = 0;
    while (!queue.empty()) {
        const Pending ev = queue.top();
        while (g < G && ev.t >= grid.at(g))
            record(g++);
        if (g == G)
            break;
        queue.pop();
        Individual& x = pop[ev.k];
        if (ev.kind == Kind::Breakpoint) {
            if (ev.generation != x.count)
                continue;
            const double before = x.lambda;
            ++x.segment;
            x.lambda = x.segment < x.profile.segment_count ? x.profile.levels[x.segment] : 0.0;
            if (!x.excluded)
                fsum.add(x.lambda - before);
            if (x.lambda > 0)
                queue.push({x.tau + x.profile.ends[x.segment], Kind::Breakpoint, ev.k, x.count});
            continue;
        }

        const double u = lstar * x.candidates.uniform();
        queue.push({ev.t + x.candidates.exponential(lstar), Kind::Candidate, ev.k, 0});
        if (x.excluded)
            continue;
        const double rate = x.profile.gamma(ev.t - x.tau) * std::max(0.0, fsum.value()) * inv_n;
        if (u > rate)
            continue;
        ++x.count;
        x.tau = ev.t;
        x.profile = reinfection_profile(law, seed, ev.k, x.count);
        x.segment = 0;
        const double before = x.lambda;
        x.lambda = x.profile.lambda(0.0);
        fsum.add(x.lambda - before);
        if (x.lambda > 0)
            queue.push({x.tau + x.profile.ends[0], Kind::Breakpoint, ev.k, x.count});
        if (options.record_events)
            traj.events.push_back({ev.t, ev.k, x.count});
    }
    while (g < G)
        record(g++);
    return traj;
}

} // namespace

double thinning_bound(const ProfileLaw& law, const InitialLaw& init) noexcept
{
    return std::max(law.lambda_star(), init.infected_profile.lambda_star());
}

bool initially_infected(const InitialLaw& init, std::size_t n, std::size_t k, std::uint64_t seed,
                        InitialAssignment assignment) noexcept
{
    if (assignment == InitialAssignment::Bernoulli) {
        Stream s(seed, k, kInitialFlagStream);
        return s.bernoulli(init.p_infected);
    }
    const auto m = static_cast<std::size_t>(std::floor(static_cast<double>(n) * init.p_infected + 1e-9));
    return k < m;
}

Trajectory simulate_population(const InitialLaw& init, const ProfileLaw& law, std::size_t n, const TimeGrid& grid,
                               std::uint64_t seed, const SimulationOptions& options)
{
    return run_population(init, law, n, grid, seed, options, {});
}

// ---------------------------------------------------------------------------
// Mean-field agents

namespace {

template <class Sink>
void run_agent(const ProfileLaw& law, const InitialLaw& init, const LimitSolution& flln, std::uint64_t seed,
               std::size_t k, bool infected_at_start, std::span<double> gamma, std::span<double> lambda,
               std::span<double> infectious, std::span<double> recovered, Sink&& on_event)
{
    const TimeGrid& grid = flln.grid;
    const std::size_t G = grid.size();
    if (gamma.size() != G || lambda.size() != G || infectious.size() != G || recovered.size() != G)
        throw InvalidParameter("grid", "agent buffers do not match the limit solution grid");
    const double lstar = thinning_bound(law, init);
    const double horizon = grid.horizon();

    Stream candidates(seed, k, kCandidateStream);
    ProfileRealization profile = start_profile(init, infected_at_start, seed, k);
    double tau = 0.0;
    std::uint32_t count = 0;

    std::size_t g = 0;
    auto record_until = [&](double t) {
        while (g < G && t >= grid.at(g)) {
            const double age = grid.at(g) - tau;
            gamma[g] = profile.gamma(age);
            lambda[g] = profile.lambda(age);
            const bool inf = profile.infectious(age);
            infectious[g] = inf ? 1.0 : 0.0;
            recovered[g] = inf ? 0.0 : 1.0;
            ++g;
        }
    };

    double t = 0.0;
    for (;;) {
        t += candidates.exponential(lstar);
        record_until(t);
        if (g == G || t > horizon)
            break;
        const double u = lstar * candidates.uniform();
        if (u > profile.gamma(t - tau) * interpolate(flln.fbar, grid, t))
            continue;
        ++count;
        tau = t;
        profile = reinfection_profile(law, seed, k, count);
        on_event(t);
    }
    record_until(INFINITY);
}

} // namespace

AgentPath simulate_auxiliary_agent(const ProfileLaw& law, const InitialLaw& init, const LimitSolution& flln,
                                   std::uint64_t seed, std::size_t k, bool infected_at_start)
{
    const std::size_t G = flln.grid.size();
    AgentPath a{{}, std::vector<double>(G), std::vector<double>(G), std::vector<double>(G), std::vector<double>(G)};
    run_agent(law, init, flln, seed, k, infected_at_start, a.gamma, a.lambda, a.infectious, a.recovered,
              [&](double t) { a.events.push_back(t); });
    return a;
}

AgentPath simulate_auxiliary_agent(const ProfileLaw& law, const InitialLaw& init, const LimitSolution& flln,
                                   std::uint64_t seed, std::size_t k)
{
    return simulate_auxiliary_agent(law, init, flln, seed, k,
                                    initially_infected(init, 1, k, seed, InitialAssignment::Bernoulli));
}

void sample_agent_functionals(const ProfileLaw& law, const InitialLaw& init, const LimitSolution& flln,
                              std::uint64_t seed, std::size_t k, bool infected_at_start, std::span<double> gamma,
                              std::span<double> lambda, std::span<double> infectious, std::span<double> recovered)
{
    run_agent(law, init, flln, seed, k, infected_at_start, gamma, lambda, infectious, recovered, [](double) {});
}

// ---------------------------------------------------------------------------
// Couplings

std::uint32_t counting_sup_gap(std::span<const double> a, std::span<const double> b) noexcept
{
    std::size_t i = 0, j = 0;
    std::int64_t diff = 0, sup = 0;
    while (i < a.size() || j < b.size()) {
        const double ta = i < a.size() ? a[i] : INFINITY;
        const double tb = j < b.size() ? b[j] : INFINITY;
        const double t = std::min(ta, tb);
        while (i < a.size() && a[i] == t) {
            ++diff;
            ++i;
        }
        while (j < b.size() && b[j] == t) {
            --diff;
            ++j;
        }
        sup = std::max(sup, std::abs(diff));
    }
    return static_cast<std::uint32_t>(sup);
}

std::vector<std::vector<double>> events_by_individual(const Trajectory& traj)
{
    std::vector<std::vector<double>> out(traj.n);
    for (const Event& e : traj.events)
        out[e.k].push_back(e.t);
    return out;
}

CoupledRun simulate_coupled(const InitialLaw& init, const ProfileLaw& law, std::size_t n, const LimitSolution& flln,
                            std::uint64_t seed, const SimulationOptions& options)
{
    SimulationOptions opt = options;
    opt.record_events = true;
    CoupledRun run;
    run.population = simulate_population(init, law, n, flln.grid, seed, opt);
    const auto pop_events = events_by_individual(run.population);

    const std::size_t G = flln.grid.size();
    std::vector<double> fa(G, 0.0), sa(G, 0.0);
    auto& d = run.diagnostics;
    d.sup_gap.resize(n);
    run.agents.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
        run.agents.push_back(simulate_auxiliary_agent(law, init, flln, seed, k,
                                                      initially_infected(init, n, k, seed, opt.assignment)));
        const AgentPath& a = run.agents.back();
        for (std::size_t g = 0; g < G; ++g) {
            fa[g] += a.lambda[g];
            sa[g] += a.gamma[g];
        }
        d.sup_gap[k] = counting_sup_gap(pop_events[k], a.events);
        d.mean_sup_gap += d.sup_gap[k];
    }
    d.mean_sup_gap /= static_cast<double>(n);

    const double rn = std::sqrt(static_cast<double>(n));
    const double inv_n = 1.0 / static_cast<double>(n);
    for (auto* v : {&d.fhat, &d.fhat1, &d.fhat2, &d.shat, &d.shat1, &d.shat2})
        v->resize(G);
    for (std::size_t g = 0; g < G; ++g) {
        const double ftilde = fa[g] * inv_n, stilde = sa[g] * inv_n;
        d.fhat[g] = rn * (run.population.fbar[g] - flln.fbar[g]);
        d.fhat1[g] = rn * (run.population.fbar[g] - ftilde);
        d.fhat2[g] = rn * (ftilde - flln.fbar[g]);
        d.shat[g] = rn * (run.population.sbar[g] - flln.sbar[g]);
        d.shat1[g] = rn * (run.population.sbar[g] - stilde);
        d.shat2[g] = rn * (stilde - flln.sbar[g]);
    }
    return run;
}

QuarantineRun simulate_quarantine(const InitialLaw& init, const ProfileLaw& law, std::size_t n, const TimeGrid& grid,
                                  std::span<const std::uint32_t> quarantined, std::uint64_t seed,
                                  const SimulationOptions& options)
{
    if (quarantined.empty() || quarantined.size() > 2)
        throw InvalidParameter("quarantined", "quarantine one or two individuals");
    if (quarantined.size() == 2 && quarantined[0] == quarantined[1])
        throw InvalidParameter("quarantined", "indices must be distinct");
    for (auto k : quarantined)
        if (k >= n)
            throw InvalidParameter("quarantined", "index " + std::to_string(k) + " out of range");

    SimulationOptions opt = options;
    opt.record_events = true;
    QuarantineRun run;
    run.baseline = run_population(init, law, n, grid, seed, opt, {});
    run.variant = run_population(init, law, n, grid, seed, opt, quarantined);

    const auto a = events_by_individual(run.baseline);
    const auto b = events_by_individual(run.variant);
    std::vector<double> split; // first time the two histories differ
    for (std::size_t k = 0; k < n; ++k) {
        if (std::find(quarantined.begin(), quarantined.end(), k) != quarantined.end())
            continue;
        const auto& x = a[k];
        const auto& y = b[k];
        std::size_t i = 0;
        while (i < x.size() && i < y.size() && x[i] == y[i])
            ++i;
        if (i < x.size() || i < y.size())
            split.push_back(std::min(i < x.size() ? x[i] : INFINITY, i < y.size() ? y[i] : INFINITY));
    }
    std::sort(split.begin(), split.end());

    auto& d = run.diagnostics;
    d.quarantined.assign(quarantined.begin(), quarantined.end());
    d.lambda_star = thinning_bound(law, init);
    const std::size_t G = grid.size();
    d.diverged.resize(G);
    d.f_gap.resize(G);
    d.s_gap.resize(G);
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t g = 0; g < G; ++g) {
        const auto before = std::lower_bound(split.begin(), split.end(), grid.at(g)) - split.begin();
        d.diverged[g] = static_cast<std::uint32_t>(quarantined.size() + static_cast<std::size_t>(before));
        d.f_gap[g] = std::abs(run.baseline.fbar[g] - run.variant.fbar[g]);
        d.s_gap[g] = std::abs(run.baseline.sbar[g] - run.variant.sbar[g]);
        const double slack = 1e-12;
        if (d.f_gap[g] > d.lambda_star * d.diverged[g] * inv_n + slack || d.s_gap[g] > d.diverged[g] * inv_n + slack)
            ++d.violations;
    }
    return run;
}

} // namespace epiwane
