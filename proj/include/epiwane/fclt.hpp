#pragma once

// Gaussian drivers and the linear stochastic Volterra system for the
// sqrt(N)-scaled fluctuations around the limit.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "epiwane/flln.hpp"
#include "epiwane/profiles.hpp"

namespace epiwane {

/// Functional index within the stacked driver vector (index 4 * i + c).
enum DriverComponent : std::size_t {
    kJ = 0,  ///< gamma_{A(t)}(age)
    kM = 1,  ///< lambda_{A(t)}(age)
    kJ1 = 2, ///< 1{age >= eta}
    kM1 = 3, ///< 1{age < eta}
};

struct CovarianceModel {
    TimeGrid grid;
    std::size_t samples = 0;
    std::vector<double> cov;    ///< 4G x 4G, row-major, symmetric
    std::vector<double> standard_error; ///< per entry, of the estimate
    std::vector<double> mean;   ///< sample means of the 4G functionals

    std::size_t dim() const noexcept { return 4 * grid.size(); }
    double at(std::size_t a, std::size_t b) const noexcept { return cov[a * dim() + b]; }
    double se(std::size_t a, std::size_t b) const noexcept { return standard_error[a * dim() + b]; }
    static std::size_t index(std::size_t i, DriverComponent c) noexcept { return 4 * i + c; }
};

struct CovarianceOptions {
    std::size_t agents = 20000;
    std::size_t threads = 1;
    std::size_t chunk = 512; ///< agents per accumulation block; fixes the summation order
};

/// Largest stacked dimension accepted by the covariance estimator.
inline constexpr std::size_t kMaxCovarianceDim = 6000;

/// Sample covariance of the agents' stacked functionals. Agents draw their
/// initial state as Bernoulli(p). Result does not depend on `threads`.
CovarianceModel estimate_driver_covariance(const ProfileLaw& law, const InitialLaw& init, const LimitSolution& flln,
                                           std::uint64_t seed, const CovarianceOptions& options = {});

struct DriverSample {
    std::vector<double> jhat, mhat, jhat1, mhat1;

    DriverSample() = default;
    explicit DriverSample(std::size_t n) : jhat(n, 0.0), mhat(n, 0.0), jhat1(n, 0.0), mhat1(n, 0.0) {}
    std::size_t size() const noexcept { return jhat.size(); }
};

/// Cholesky factor of the covariance with the smallest relative jitter
/// (0, then 1e-12 .. 1e-8 times the mean diagonal) that factorises.
class DriverSampler {
public:
    explicit DriverSampler(const CovarianceModel& cov);

    /// Sample number `index` of the stream keyed by `seed`.
    DriverSample sample(std::uint64_t seed, std::size_t index) const;
    /// Samples first .. first + count - 1.
    std::vector<DriverSample> sample_batch(std::uint64_t seed, std::size_t first, std::size_t count) const;

    double jitter() const noexcept { return jitter_; }
    const TimeGrid& grid() const noexcept { return grid_; }

private:
    TimeGrid grid_;
    std::size_t dim_ = 0;
    std::vector<double> factor_; ///< lower triangular, row-major
    double jitter_ = 0.0;
};

DriverSample sample_driver(const CovarianceModel& cov, std::uint64_t seed);

struct FluctuationPath {
    std::vector<double> shat, fhat, uhat, ihat;
};

struct FcltOptions {
    /// Use J1 instead of J inside the U-hat integrand.
    bool corollary_literal = false;
    KernelOptions kernel{};
};

/// Forward-marching solver. Kernels are folded into lower-triangular
/// coefficient matrices once; each path then costs O(G^2).
class FluctuationSolver {
public:
    FluctuationSolver(const ProfileLaw& law, const InitialLaw& init, const LimitSolution& flln, FcltOptions options = {});
    /// Coefficients from materialised kernel tables with trapezoid rules in
    /// every variable. Grid limited to kTripleTableMaxGrid.
    static FluctuationSolver from_tables(const ProfileLaw& law, const InitialLaw& init, const LimitSolution& flln,
                                         FcltOptions options = {});

    const TimeGrid& grid() const noexcept { return grid_; }
    FluctuationPath solve(const DriverSample& driver) const;
    /// sup-norm residual of the discrete equations for a solved path.
    double residual(const FluctuationPath& path, const DriverSample& driver) const;

private:
    struct Packed {
        std::vector<double> v;
        double operator()(std::size_t i, std::size_t l) const noexcept { return v[i * (i + 1) / 2 + l]; }
        double& operator()(std::size_t i, std::size_t l) noexcept { return v[i * (i + 1) / 2 + l]; }
    };

    FluctuationSolver() = default;
    void allocate(const TimeGrid& grid);
    void check(const DriverSample& driver) const;

    TimeGrid grid_;
    bool literal_ = false;
    // x = S-hat, y = F-hat; coefficients of (x - J) and of y
    Packed px_, py_, qx_, qy_, ux_, uy_, ix_, iy_;
};

FluctuationPath solve_fluctuation_path(const DriverSample& driver, const LimitSolution& flln, const ProfileLaw& law,
                                       const InitialLaw& init, FcltOptions options = {});

FluctuationPath solve_fluctuation_path_tables(const DriverSample& driver, const LimitSolution& flln,
                                              const ProfileLaw& law, const InitialLaw& init, FcltOptions options = {});

} // namespace epiwane
