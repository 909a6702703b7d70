#pragma once

// Exact event-driven simulation of the N-individual model, mean-field agents
// driven by a deterministic force of infection, and the two couplings.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "epiwane/flln.hpp"
#include "epiwane/grid.hpp"
#include "epiwane/profiles.hpp"

namespace epiwane {

enum class InitialAssignment {
    Deterministic, ///< individuals 0 .. floor(N p) - 1 start infected
    Bernoulli,     ///< each individual independently with probability p
};

struct SimulationOptions {
    InitialAssignment assignment = InitialAssignment::Deterministic;
    double candidate_cap = 2e9; ///< limit on N * lambda_star * T
    bool record_events = true;
};

struct Event {
    double t = 0.0;
    std::uint32_t k = 0; ///< infectee
    std::uint32_t i = 0; ///< infection index after the event
    bool operator==(const Event&) const = default;
};

/// Grid samples of one population run. Values at t_g include every event
/// strictly before t_g.
struct Trajectory {
    TimeGrid grid;
    std::size_t n = 0;      ///< population size used for the averages
    std::size_t counted = 0; ///< individuals in I + U (n minus quarantined)
    std::vector<double> fbar;
    std::vector<double> sbar;
    std::vector<std::int64_t> infected;   ///< I
    std::vector<std::int64_t> uninfected; ///< U
    std::vector<Event> events;
};

/// Bound on lambda used for thinning: the larger of the two laws' lambda_star.
double thinning_bound(const ProfileLaw& law, const InitialLaw& init) noexcept;

/// Whether individual k starts infected.
bool initially_infected(const InitialLaw& init, std::size_t n, std::size_t k, std::uint64_t seed,
                        InitialAssignment assignment) noexcept;

Trajectory simulate_population(const InitialLaw& init, const ProfileLaw& law, std::size_t n, const TimeGrid& grid,
                               std::uint64_t seed, const SimulationOptions& options = {});

/// Mean-field agent: grid samples of gamma, lambda and the two indicators.
struct AgentPath {
    std::vector<double> events;     ///< accepted infection times
    std::vector<double> gamma;      ///< X(t)
    std::vector<double> lambda;     ///< Y(t)
    std::vector<double> infectious; ///< 1{age < eta}
    std::vector<double> recovered;  ///< 1{age >= eta}
};

/// Agent k of the run keyed by `seed`; shares streams with individual k of
/// simulate_population(seed).
AgentPath simulate_auxiliary_agent(const ProfileLaw& law, const InitialLaw& init, const LimitSolution& flln,
                                   std::uint64_t seed, std::size_t k, bool infected_at_start);
/// Same with the initial state drawn as Bernoulli(p) from the agent's own stream.
AgentPath simulate_auxiliary_agent(const ProfileLaw& law, const InitialLaw& init, const LimitSolution& flln,
                                   std::uint64_t seed, std::size_t k);

/// Writes the four functionals of one agent into caller buffers (no event list).
void sample_agent_functionals(const ProfileLaw& law, const InitialLaw& init, const LimitSolution& flln,
                              std::uint64_t seed, std::size_t k, bool infected_at_start, std::span<double> gamma,
                              std::span<double> lambda, std::span<double> infectious, std::span<double> recovered);

struct CouplingDiagnostics {
    std::vector<std::uint32_t> sup_gap; ///< per k: sup_t |A_k^N(t) - A_k(t)|
    double mean_sup_gap = 0.0;
    /// sqrt(N)-scaled deviations on the grid: hat = hat1 + hat2 with
    /// hat1 = sqrt(N)(pop - agents), hat2 = sqrt(N)(agents - limit).
    std::vector<double> fhat, fhat1, fhat2;
    std::vector<double> shat, shat1, shat2;
};

struct CoupledRun {
    Trajectory population;
    std::vector<AgentPath> agents;
    CouplingDiagnostics diagnostics;
};

CoupledRun simulate_coupled(const InitialLaw& init, const ProfileLaw& law, std::size_t n, const LimitSolution& flln,
                            std::uint64_t seed, const SimulationOptions& options = {});

struct QuarantineDiagnostics {
    std::vector<std::uint32_t> quarantined;
    std::vector<std::uint32_t> diverged; ///< |D(t_g)|: quarantined plus individuals whose history differs
    std::vector<double> f_gap;           ///< |fbar^N - fbar^N_(k)|
    std::vector<double> s_gap;           ///< |sbar^N - sbar^N_(k)|
    double lambda_star = 0.0;
    std::size_t violations = 0; ///< grid points where a difference bound fails
};

struct QuarantineRun {
    Trajectory baseline;
    Trajectory variant;
    QuarantineDiagnostics diagnostics;
};

/// The variant reuses the baseline's streams; quarantined individuals are
/// removed from both population sums and never infect or get infected.
QuarantineRun simulate_quarantine(const InitialLaw& init, const ProfileLaw& law, std::size_t n, const TimeGrid& grid,
                                  std::span<const std::uint32_t> quarantined, std::uint64_t seed,
                                  const SimulationOptions& options = {});

/// sup_t |a(t) - b(t)| for two counting processes given by sorted jump times.
std::uint32_t counting_sup_gap(std::span<const double> a, std::span<const double> b) noexcept;

/// Event times per individual, in order.
std::vector<std::vector<double>> events_by_individual(const Trajectory& traj);

} // namespace epiwane
