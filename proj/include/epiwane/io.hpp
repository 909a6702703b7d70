#pragma once

// CSV and JSON artifacts. Every file starts with a tag line
//   # epiwane fingerprint=<hex> seed=<n>
// (JSON reports carry the same pair as top-level fields).

#include <cstdint>
#include <filesystem>
#include <string>

#include "epiwane/fclt.hpp"
#include "epiwane/flln.hpp"
#include "epiwane/simulator.hpp"
#include "epiwane/verify.hpp"

namespace epiwane {

struct ArtifactTag {
    std::string fingerprint;
    std::uint64_t seed = 0;
    bool operator==(const ArtifactTag&) const = default;
};

/// Shortest decimal that reads back to the same double.
std::string format_double(double x);

void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& traj, const ArtifactTag& tag);
void write_events_csv(const std::filesystem::path& path, const Trajectory& traj, const ArtifactTag& tag);
void write_flln_csv(const std::filesystem::path& path, const LimitSolution& sol, const ArtifactTag& tag);
void write_flln_report(const std::filesystem::path& path, const LimitSolution& sol, const ArtifactTag& tag);
/// Lower triangle, one entry per line: a,b,cov,se with a = 4 i + c.
void write_covariance_csv(const std::filesystem::path& path, const CovarianceModel& cov, const ArtifactTag& tag);
/// sample,t,shat,fhat,uhat,ihat
void write_fluctuations_csv(const std::filesystem::path& path, const ModelEnsemble& model, const ArtifactTag& tag);
/// Per grid point: ensemble mean and variance of each average and each scaled deviation.
void write_ensemble_csv(const std::filesystem::path& path, const EnsembleSummary& e, const ArtifactTag& tag);
/// replicate,t,shat,fhat,uhat,ihat
void write_ensemble_samples_csv(const std::filesystem::path& path, const EnsembleSummary& e, const ArtifactTag& tag);
void write_report_json(const std::filesystem::path& path, const ComparisonReport& report, const ArtifactTag& tag);

std::string report_to_json(const ComparisonReport& report, const ArtifactTag& tag);

/// Tag line of an artifact; throws InvalidParameter when absent.
ArtifactTag read_tag(const std::filesystem::path& path);

/// Read back what the writers above produced.
ModelEnsemble read_fluctuations_csv(const std::filesystem::path& path, ArtifactTag* tag = nullptr);
/// Only hat_samples, grid, replicates (and n from the tag-less header) are restored.
EnsembleSummary read_ensemble_samples_csv(const std::filesystem::path& path, ArtifactTag* tag = nullptr);

} // namespace epiwane
