#pragma once

// Experiment configuration: strict JSON in, validated struct out.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "epiwane/flln.hpp"
#include "epiwane/profiles.hpp"
#include "epiwane/simulator.hpp"

namespace epiwane {

struct FcltConfig {
    double dt = 0.05; ///< grid of the covariance model and of the compared ensembles
    std::size_t agents = 20000;
    std::size_t driver_samples = 2000;
    bool corollary_literal = false;
    std::vector<double> probes; ///< empty: T/4, T/2, 3T/4, T
    double variance_tol = 0.2;
};

// Sections of `verify`; an absent section is skipped.
struct FllnCheck {
    double lambda = 2.0;
    double mu = 1.0;
    double tol = 1e-3;
    double endemic_tol = 0.01;
};
struct RateCheck {
    std::vector<std::size_t> population_sizes{100, 400, 1600, 6400};
    std::size_t replicates = 200;
    double t = 5.0;
    double slope_min = -0.65;
    double slope_max = -0.35;
};
struct FcltCheck {
    double horizon = 10.0;
    std::size_t n = 2000;
    std::size_t replicates = 500;
    std::vector<double> probes{2.0, 5.0, 10.0};
};
struct SurvivalCheck {
    std::size_t replicates = 100000;
};
struct CouplingCheck {
    std::size_t n = 1000;
    std::size_t replicates = 50;
    std::optional<double> horizon; ///< default 3 / lambda_star
};
struct QuarantineCheck {
    std::size_t n = 1000;
    std::size_t replicates = 100;
    std::vector<std::uint32_t> quarantined{0};
    std::optional<double> horizon; ///< default 3 / lambda_star
};
struct SolverCheck {
    double dt = 0.1; ///< coarsest step of the refinement triple dt, dt/2, dt/4
    double horizon = 5.0;
};
struct CovarianceCheck {
    std::size_t agents = 2000;
};

struct VerifyConfig {
    std::optional<FllnCheck> flln;
    std::optional<RateCheck> rate;
    std::optional<FcltCheck> fclt;
    std::optional<SurvivalCheck> survival;
    std::optional<CouplingCheck> coupling;
    std::optional<QuarantineCheck> quarantine;
    std::optional<SolverCheck> solver;
    std::optional<CovarianceCheck> covariance;
};

struct ExperimentConfig {
    ProfileLaw profile = ProfileLaw::sis_indicator(1.0, Exponential{1.0});
    bool initial_profile_given = false;
    InitialLaw initial = InitialLaw::from(0.0, profile);
    InitialAssignment assignment = InitialAssignment::Deterministic;
    double horizon = 20.0;
    double dt = 0.01;
    std::vector<std::size_t> population_sizes{1000};
    std::size_t replicates = 100;
    std::uint64_t seed = 1;
    FllnOptions flln{};
    FcltConfig fclt{};
    double candidate_cap = 2e9;
    VerifyConfig verify{};
    std::string output_dir = "out";

    TimeGrid grid() const { return TimeGrid(dt, horizon); }
    SimulationOptions simulation() const { return {assignment, candidate_cap, true}; }
};

/// Throws InvalidParameter with the dotted field path.
ExperimentConfig parse_config_string(const std::string& text);
ExperimentConfig parse_config(const std::filesystem::path& path);

/// Canonical JSON with every default filled in.
std::string to_json_string(const ExperimentConfig& config);

/// Hash of the canonical JSON excluding seed and output_dir (16 hex digits).
std::string fingerprint(const ExperimentConfig& config);

} // namespace epiwane
