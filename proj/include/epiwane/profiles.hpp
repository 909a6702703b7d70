#pragma once

// Random infectivity/susceptibility profiles and the expectation kernels
// the limit equations are built from.

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "epiwane/grid.hpp"
#include "epiwane/random.hpp"

namespace epiwane {

enum class Family { SisIndicator, SisGradual, PiecewiseConstant };

std::string to_string(Family f);
Family family_from_string(const std::string& s);

struct Exponential {
    double rate = 1.0;
    bool operator==(const Exponential&) const = default;
};
struct Deterministic {
    double value = 1.0;
    bool operator==(const Deterministic&) const = default;
};
struct GammaLaw {
    double shape = 1.0;
    double scale = 1.0;
    bool operator==(const GammaLaw&) const = default;
};

/// Law of an infectious duration (or of one piecewise segment).
using DurationLaw = std::variant<Exponential, Deterministic, GammaLaw>;

double duration_mean(const DurationLaw& d);
double duration_cdf(const DurationLaw& d, double t);
double duration_density(const DurationLaw& d, double t);
double duration_quantile(const DurationLaw& d, double p);
double sample_duration(const DurationLaw& d, Stream& stream);
/// Throws InvalidParameter naming `field` (or a sub-field of it).
void validate_duration(const DurationLaw& d, const std::string& field);

struct Segment {
    double level = 1.0; ///< infectivity on the segment
    DurationLaw duration = Exponential{};
    bool operator==(const Segment&) const = default;
};

inline constexpr std::size_t kMaxSegments = 8;

/// Joint law of (lambda, gamma): infectivity lambda(t) on [0, eta) and a
/// susceptibility gamma that is zero before eta and recovers afterwards,
/// either as an indicator or as 1 - exp(-theta (t - eta)).
class ProfileLaw {
public:
    /// lambda(t) = lambda 1{t < eta}, gamma(t) = 1{t >= eta}
    static ProfileLaw sis_indicator(double lambda, DurationLaw duration, std::optional<double> lambda_star = {});
    /// lambda(t) = lambda 1{t < eta}, gamma(t) = (1 - e^{-theta (t - eta)}) 1{t >= eta}
    static ProfileLaw sis_gradual(double lambda, DurationLaw duration, double waning_rate,
                                  std::optional<double> lambda_star = {});
    /// lambda piecewise constant over consecutive random segments; eta is their total length.
    /// waning_rate == 0 gives an indicator susceptibility.
    static ProfileLaw piecewise_constant(std::vector<Segment> segments, double waning_rate,
                                         std::optional<double> lambda_star = {});

    Family family() const noexcept { return family_; }
    double lambda_base() const noexcept { return lambda_base_; }
    const DurationLaw& duration() const noexcept { return duration_; }
    double waning_rate() const noexcept { return waning_rate_; }
    double lambda_star() const noexcept { return lambda_star_; }
    const std::vector<Segment>& segments() const noexcept { return segments_; }

    /// True when gamma recovers gradually after eta.
    bool gradual() const noexcept { return waning_rate_ > 0; }
    /// Laws whose kernels have closed forms / deterministic quadrature.
    bool semi_analytic() const noexcept { return family_ != Family::PiecewiseConstant; }

    bool operator==(const ProfileLaw&) const = default;

private:
    ProfileLaw() = default;
    void validate() const;

    Family family_ = Family::SisIndicator;
    double lambda_base_ = 1.0;
    DurationLaw duration_ = Exponential{};
    double waning_rate_ = 0.0;
    double lambda_star_ = 1.0;
    std::vector<Segment> segments_;
};

/// Initial condition: each individual is infected at time 0 with
/// probability p_infected (profile drawn from `infected_profile`), otherwise
/// never infected (lambda = 0, eta = 0, gamma = 1).
struct InitialLaw {
    double p_infected = 0.0;
    ProfileLaw infected_profile;

    /// Infected profile defaults to the fresh-infection law.
    static InitialLaw from(double p_infected, const ProfileLaw& infected_profile);
    void validate() const;
    bool operator==(const InitialLaw&) const = default;
};

/// One draw of (lambda, gamma), evaluated at elapsed time `age` since infection.
struct ProfileRealization {
    double eta = 0.0;
    double waning = 0.0;
    bool never_infected = false;
    std::uint8_t segment_count = 0;
    std::array<double, kMaxSegments> ends{};   ///< cumulative segment end times
    std::array<double, kMaxSegments> levels{}; ///< infectivity on each segment

    static ProfileRealization never() noexcept
    {
        ProfileRealization r;
        r.never_infected = true;
        return r;
    }

    double lambda(double age) const noexcept
    {
        if (age < 0 || age >= eta)
            return 0.0;
        for (std::uint8_t s = 0; s < segment_count; ++s)
            if (age < ends[s])
                return levels[s];
        return 0.0;
    }

    double gamma(double age) const noexcept
    {
        if (never_infected)
            return 1.0;
        if (age < eta)
            return 0.0;
        return waning > 0 ? -std::expm1(-waning * (age - eta)) : 1.0;
    }

    bool infectious(double age) const noexcept { return age < eta; }

    /// Smallest elapsed time > age at which lambda changes; +inf if none.
    double next_lambda_change(double age) const noexcept
    {
        for (std::uint8_t s = 0; s < segment_count; ++s)
            if (age < ends[s])
                return ends[s];
        return std::numeric_limits<double>::infinity();
    }
};

ProfileRealization sample_pair(const ProfileLaw& law, Stream& stream);
ProfileRealization sample_initial(const InitialLaw& init, Stream& stream);
/// Profile of an individual known to be infected at time 0.
inline ProfileRealization sample_initial_infected(const InitialLaw& init, Stream& stream)
{
    return sample_pair(init.infected_profile, stream);
}

/// lambda-bar(t) = E[lambda(t)] for a fresh infection.
/// Closed form for indicator/gradual families, Monte-Carlo (fixed seed) otherwise.
double mean_infectivity(const ProfileLaw& law, double t, std::size_t mc_samples = 200000);
/// lambda-bar_0(t) = E[lambda_0(t) | eta_0 > 0].
double mean_infectivity(const InitialLaw& init, double t, std::size_t mc_samples = 200000);

/// F(t) = P(eta <= t).
double duration_cdf(const ProfileLaw& law, double t, std::size_t mc_samples = 200000);
/// F_0(t) = P(eta_0 <= t), including the never-infected mass at 0.
double duration_cdf(const InitialLaw& init, double t, std::size_t mc_samples = 200000);

// ---------------------------------------------------------------------------
// Kernels

/// Quadrature node for expectations over eta restricted to eta <= lag*dt.
struct EtaNode {
    double x = 0.0;     ///< eta value
    double w = 0.0;     ///< probability weight
    std::int32_t cell = 0;
    double frac = 0.0;  ///< x = (cell + frac) * dt
    double p0 = 0.0;    ///< (1 - frac)^2 / 2
    double p1 = 0.0;    ///< (1 - frac^2) / 2
};

/// Per-lag quadrature rules approximating E[h(eta) 1{eta <= L dt}] by sum w h(x).
class EtaRule {
public:
    std::span<const EtaNode> at(std::size_t lag) const noexcept
    {
        const auto [b, n] = spans_[lag];
        return {nodes_.data() + b, n};
    }
    std::size_t lags() const noexcept { return spans_.size(); }

    static EtaRule gauss_legendre(const DurationLaw& law, const TimeGrid& grid, std::size_t points = 64,
                                  double tail_quantile = 0.9999);
    static EtaRule point_mass(double eta, const TimeGrid& grid);
    /// Equal-weight atoms (Monte-Carlo bank).
    static EtaRule empirical(std::vector<double> etas, const TimeGrid& grid);

private:
    std::vector<EtaNode> nodes_;
    std::vector<std::pair<std::size_t, std::size_t>> spans_;
};

struct KernelOptions {
    std::size_t gl_points = 64;
    double tail_quantile = 0.9999;
    std::size_t mc_samples = 512; ///< bank size for PiecewiseConstant laws
    std::uint64_t mc_seed = 0x6b65726e656cULL;
};

enum class KernelKind {
    GammaSurv,          ///< E[gamma(t-s) surv(s,t)]
    GammaPairSurv,      ///< E[gamma(t-s) gamma(r-s) surv(s,t)], s <= r <= t
    IndSurv,            ///< E[1{t-s >= eta} surv(s,t)]
    IndGammaSurv,       ///< E[1{t-s >= eta} gamma(r-s) surv(s,t)]
    InitGammaSurv,      ///< E[gamma_0(t) surv_0(t)]
    InitGammaPairSurv,  ///< E[gamma_0(t) gamma_0(s) surv_0(t)]
    InitIndSurv,        ///< E[1{t >= eta_0} surv_0(t)]
    InitIndGammaSurv,   ///< E[1{t >= eta_0} gamma_0(s) surv_0(t)]
};

std::string to_string(KernelKind k);
/// 1 for K(t), 2 for K(t, s), 3 for K(t, s, r).
int kernel_rank(KernelKind k) noexcept;

/// Kernel values on a grid. Rank-2 tables are lower triangular (j <= i),
/// rank-3 tables hold (i, j, l) with j <= l <= i.
struct KernelTable {
    TimeGrid grid;
    KernelKind kind = KernelKind::GammaSurv;
    std::vector<double> values;

    double operator()(std::size_t i) const noexcept { return values[i]; }
    double operator()(std::size_t i, std::size_t j) const noexcept { return values[i * (i + 1) / 2 + j]; }
    double operator()(std::size_t i, std::size_t j, std::size_t l) const noexcept
    {
        return values[tetra_offset(i) + row_offset(i, j) + (l - j)];
    }

    static std::size_t tetra_offset(std::size_t i) noexcept { return i * (i + 1) * (i + 2) / 6; }
    static std::size_t row_offset(std::size_t i, std::size_t j) noexcept
    {
        // entries (j', l) with j' < j, j' <= l <= i
        return j * (i + 1) - j * (j - 1) / 2;
    }
};

/// Largest grid for which rank-3 tables are materialised.
inline constexpr std::size_t kTripleTableMaxGrid = 400;

class ForceHistory;

/// Precomputed per-law quantities on a grid plus the row-wise kernel
/// evaluation used by the limit solvers. Immutable after construction.
class KernelEngine {
public:
    KernelEngine(ProfileLaw law, InitialLaw init, TimeGrid grid, KernelOptions options = {});

    const ProfileLaw& law() const noexcept { return law_; }
    const InitialLaw& init() const noexcept { return init_; }
    const TimeGrid& grid() const noexcept { return grid_; }
    double p_infected() const noexcept { return init_.p_infected; }

    double lambda_bar(std::size_t lag) const noexcept { return lambda_bar_[lag]; }
    double lambda0_bar(std::size_t i) const noexcept { return lambda0_bar_[i]; }
    /// F^c(lag dt)
    double survival(std::size_t lag) const noexcept { return survival_[lag]; }
    /// P(eta_0 > t_i | eta_0 > 0)
    double initial_survival(std::size_t i) const noexcept { return initial_survival_[i]; }
    const EtaRule& fresh_rule() const noexcept { return fresh_rule_; }
    const EtaRule& initial_rule() const noexcept { return initial_rule_; }
    double fresh_waning() const noexcept { return law_.waning_rate(); }
    double initial_waning() const noexcept { return init_.infected_profile.waning_rate(); }

    /// Row i of GammaSurv / IndSurv, j = 0..i. Requires history rows <= i.
    void fresh_row(const ForceHistory& h, std::size_t i, std::span<double> gamma_surv,
                   std::span<double> ind_surv) const;
    /// InitGammaSurv(t_i), InitIndSurv(t_i), mixture over the never-infected branch included.
    std::pair<double, double> initial_values(const ForceHistory& h, std::size_t i) const;
    /// Row i of InitGammaPairSurv / InitIndGammaSurv, l = 0..i.
    void initial_pair_row(const ForceHistory& h, std::size_t i, std::span<double> gamma_pair,
                          std::span<double> ind_gamma) const;
    /// Row i of GammaPairSurv / IndGammaSurv as an (i+1)x(i+1) block, entry (j, l) for j <= l.
    void fresh_pair_row(const ForceHistory& h, std::size_t i, std::span<double> gamma_pair,
                        std::span<double> ind_gamma) const;

private:
    ProfileLaw law_;
    InitialLaw init_;
    TimeGrid grid_;
    KernelOptions options_;
    EtaRule fresh_rule_;
    EtaRule initial_rule_;
    std::vector<double> lambda_bar_;
    std::vector<double> lambda0_bar_;
    std::vector<double> survival_;
    std::vector<double> initial_survival_;
};

/// Force of infection on the grid with the cumulative tables needed for
/// survival exponents. Rows are filled in increasing order: set(i, f)
/// may be called repeatedly for the current row, commit() closes it.
class ForceHistory {
public:
    ForceHistory(const TimeGrid& grid, double fresh_waning, double initial_waning);
    ForceHistory(const KernelEngine& engine) : ForceHistory(engine.grid(), engine.fresh_waning(), engine.initial_waning()) {}

    /// Set fbar(t_i) for the row under construction (i == committed()).
    void set(std::size_t i, double f);
    void commit(std::size_t i);

    double f(std::size_t i) const noexcept { return f_[i]; }
    double cumulative(std::size_t i) const noexcept { return c_[i]; }
    std::size_t committed() const noexcept { return committed_; }
    const TimeGrid& grid() const noexcept { return grid_; }

    /// Survival exponent int_v^{t_i} g(r - v) fbar(r) dr of a susceptibility
    /// switching on at v = t_m + frac dt, with g = 1 (indicator) or
    /// 1 - e^{-theta u} (gradual). Row i must be the row under construction.
    double exponent(bool initial, std::size_t i, std::size_t m, double frac, double p0, double p1) const noexcept;
    double exponent(bool initial, std::size_t i, const EtaNode& node, std::size_t j) const noexcept
    {
        return exponent(initial, i, j + static_cast<std::size_t>(node.cell), node.frac, node.p0, node.p1);
    }

private:
    struct Discount {
        double theta = 0.0;
        std::vector<double> decay; ///< e^{-theta n dt}
        std::vector<double> base;  ///< D_{row}[k] for the last committed row
        double a0 = 0.0, a1 = 0.0; ///< moments over one full cell
    };
    double cell_integral(const Discount& d, std::size_t c) const noexcept;
    double discounted_tail(const Discount& d, std::size_t i, std::size_t k) const noexcept;

    TimeGrid grid_;
    std::vector<double> f_;
    std::vector<double> c_;
    Discount fresh_;
    Discount initial_;
    std::size_t committed_ = 0; ///< number of committed rows
};

/// Full table of one kernel kind for a given force of infection.
KernelTable eval_kernel(const KernelEngine& engine, KernelKind kind, std::span<const double> fbar);
KernelTable eval_kernel(const ProfileLaw& law, const InitialLaw& init, KernelKind kind,
                        std::span<const double> fbar, const TimeGrid& grid, KernelOptions options = {});

/// Moments int_0^len e^{-theta u} du and int_0^len u e^{-theta u} du.
std::pair<double, double> exp_moments(double theta, double len) noexcept;

} // namespace epiwane
