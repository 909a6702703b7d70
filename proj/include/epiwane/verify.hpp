#pragma once

// Ensembles of simulations and their comparison with the limit theorems.

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "epiwane/fclt.hpp"
#include "epiwane/flln.hpp"
#include "epiwane/simulator.hpp"

namespace epiwane {

/// Observables tracked by ensembles, in storage order.
enum Observable : std::size_t { kF = 0, kS = 1, kI = 2, kU = 3 };
inline constexpr std::array<const char*, 4> kObservableNames{"fbar", "sbar", "ibar", "ubar"};
inline constexpr std::array<const char*, 4> kHatNames{"fhat", "shat", "ihat", "uhat"};

struct EnsembleSummary {
    std::string fingerprint;
    std::uint64_t seed = 0;
    std::size_t n = 0;
    std::size_t replicates = 0;
    TimeGrid grid;
    /// Per observable, per grid point: ensemble mean and (M-1)-normalised variance of the averages.
    std::array<std::vector<double>, 4> mean, var;
    /// Same for the sqrt(N)-scaled deviations from the limit.
    std::array<std::vector<double>, 4> hat_mean, hat_var;
    /// Scaled deviations per replicate, row-major [replicate][grid point].
    std::array<std::vector<double>, 4> hat_samples;

    bool has_variance() const noexcept { return replicates >= 2; }
    double hat(Observable q, std::size_t r, std::size_t g) const noexcept { return hat_samples[q][r * grid.size() + g]; }
};

struct EnsembleOptions {
    std::size_t threads = 1;
    SimulationOptions simulation{};
};

/// Seed of replicate r.
std::uint64_t replicate_seed(std::uint64_t master, std::size_t r) noexcept;

/// M independent population runs. Aggregation follows replicate order, so
/// the summary is the same for any thread count.
EnsembleSummary run_ensemble(const ProfileLaw& law, const InitialLaw& init, const LimitSolution& flln, std::size_t n,
                             std::size_t replicates, std::uint64_t seed, const EnsembleOptions& options = {});

/// Mean over replicates of |fbar^N(t) - fbar(t)| at the grid point nearest t.
double mean_abs_deviation(const EnsembleSummary& e, Observable q, double t);

struct RateFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
};

/// Least squares of log(error) on log(N).
RateFit fit_convergence_rate(std::span<const std::pair<double, double>> errors);

/// Solved model fluctuation paths, row-major [sample][grid point] per observable.
struct ModelEnsemble {
    TimeGrid grid;
    std::size_t samples = 0;
    std::array<std::vector<double>, 4> paths;

    double at(Observable q, std::size_t s, std::size_t g) const noexcept { return paths[q][s * grid.size() + g]; }
};

struct ModelEnsembleOptions {
    std::size_t threads = 1;
    std::size_t batch = 64; ///< drivers drawn per factor product; fixes the arithmetic
};

ModelEnsemble run_fclt_ensemble(const FluctuationSolver& solver, const DriverSampler& sampler, std::size_t samples,
                                std::uint64_t seed, const ModelEnsembleOptions& options = {});

struct Metric {
    std::string name;
    double target = 0.0;
    double value = 0.0;
    double tol = 0.0;
    bool pass = false;
    std::string paper_ref;
};

struct KsRecord {
    std::string name;
    double t = 0.0;
    double statistic = 0.0;
    double p_value = 0.0;
    std::size_t n1 = 0, n2 = 0;
};

struct ComparisonReport {
    std::vector<Metric> metrics;
    std::optional<RateFit> rate_fit;
    std::vector<KsRecord> ks;

    bool passed() const noexcept;
    void append(const ComparisonReport& other);
};

/// Two-sample Kolmogorov-Smirnov statistic and asymptotic p-value.
std::pair<double, double> ks_two_sample(std::vector<double> a, std::vector<double> b);

/// Unbiased sample variance and covariance.
double sample_variance(std::span<const double> x);
double sample_covariance(std::span<const double> x, std::span<const double> y);

struct CompareOptions {
    std::vector<double> probes;             ///< empty: T/4, T/2, 3T/4, T
    std::vector<Observable> observables{kF, kS, kI, kU};
    double variance_tol = 0.2;
};

std::vector<double> default_probes(const TimeGrid& grid);

/// Variance, lag-covariance and KS comparison at the probe times.
ComparisonReport compare_fclt(const EnsembleSummary& ensemble, const ModelEnsemble& model,
                              const CompareOptions& options = {});

/// Count-gap and deviation bounds on coupled runs.
ComparisonReport check_coupling_bounds(std::span<const CouplingDiagnostics> runs, double lambda_star, double horizon,
                                       std::size_t n);
/// Path-wise difference bounds and the mean diverged count at the horizon.
ComparisonReport check_quarantine_bounds(std::span<const QuarantineDiagnostics> runs, double horizon);

} // namespace epiwane
