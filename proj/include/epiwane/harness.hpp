#pragma once

// End-to-end experiments behind the command line tool.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "epiwane/config.hpp"
#include "epiwane/verify.hpp"

namespace epiwane {

inline const std::vector<std::string> kSubcommands{"simulate", "flln", "fclt", "ensemble", "verify", "compare"};

struct RunOptions {
    std::optional<std::filesystem::path> out; ///< overrides config.output_dir
    std::optional<std::uint64_t> seed;        ///< overrides config.seed
    std::size_t threads = 1;
};

struct RunResult {
    int exit_code = 0; ///< 0 ok, 1 a metric failed
    std::optional<ComparisonReport> report;
    std::vector<std::filesystem::path> artifacts;
};

/// Runs one subcommand and writes its artifacts. Errors propagate as exceptions.
RunResult run_subcommand(const std::string& command, const ExperimentConfig& config, const RunOptions& options);

/// Checks of the `verify` sections present in the config.
ComparisonReport verify_flln(const ExperimentConfig& config, const FllnCheck& check);
ComparisonReport verify_rate(const ExperimentConfig& config, const RateCheck& check, std::uint64_t seed,
                             std::size_t threads);
ComparisonReport verify_fclt(const ExperimentConfig& config, const FcltCheck& check, std::uint64_t seed,
                             std::size_t threads);
ComparisonReport verify_survival(const SurvivalCheck& check, std::uint64_t seed, std::size_t threads);
ComparisonReport verify_coupling(const ExperimentConfig& config, const CouplingCheck& check, std::uint64_t seed,
                                 std::size_t threads);
ComparisonReport verify_quarantine(const ExperimentConfig& config, const QuarantineCheck& check, std::uint64_t seed,
                                   std::size_t threads);
ComparisonReport verify_solver(const ExperimentConfig& config, const SolverCheck& check, std::uint64_t seed);
ComparisonReport verify_covariance(const ExperimentConfig& config, const CovarianceCheck& check, std::uint64_t seed,
                                   std::size_t threads);
ComparisonReport run_verify(const ExperimentConfig& config, std::uint64_t seed, std::size_t threads);

/// Ensemble samples restricted to a coarser grid whose step is a multiple of the ensemble's.
EnsembleSummary restrict_to_grid(const EnsembleSummary& e, const TimeGrid& grid);

/// Seed of an independent phase (covariance agents, drivers, ...) of one run.
std::uint64_t phase_seed(std::uint64_t seed, std::uint64_t phase) noexcept;

} // namespace epiwane
