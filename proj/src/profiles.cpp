#include "epiwane/profiles.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <boost/math/distributions/gamma.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/special_functions/legendre.hpp>

#include "epiwane/error.hpp"

namespace epiwane {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

bool positive(double x) { return x > 0 && std::isfinite(x); }

// Bank of draws used wherever a law has no closed form.
std::vector<ProfileRealization> draw_bank(const ProfileLaw& law, std::size_t n, std::uint64_t seed, std::uint64_t k)
{
    Stream stream(seed, k, kBankStream);
    std::vector<ProfileRealization> bank;
    bank.reserve(n);
    for (std::size_t m = 0; m < n; ++m)
        bank.push_back(sample_pair(law, stream));
    return bank;
}

constexpr std::uint64_t kFreeFunctionSeed = 0x6d65616e2d696e66ULL;

EtaNode make_node(double x, double w, double dt)
{
    EtaNode n;
    n.x = x;
    n.w = w;
    const double q = x / dt;
    const double cell = std::floor(q + 1e-9);
    n.cell = static_cast<std::int32_t>(cell);
    n.frac = std::clamp(q - cell, 0.0, 1.0);
    n.p0 = 0.5 * (1.0 - n.frac) * (1.0 - n.frac);
    n.p1 = 0.5 * (1.0 - n.frac * n.frac);
    return n;
}

// lag * dt with a relative slack so that atoms sitting on grid points are included
double lag_length(std::size_t lag, double dt) { return static_cast<double>(lag) * dt * (1.0 + 1e-12); }

} // namespace

std::string to_string(Family f)
{
    switch (f) {
    case Family::SisIndicator:
        return "sis_indicator";
    case Family::SisGradual:
        return "sis_gradual";
    case Family::PiecewiseConstant:
        return "piecewise_constant";
    }
    return "?";
}

Family family_from_string(const std::string& s)
{
    if (s == "sis_indicator")
        return Family::SisIndicator;
    if (s == "sis_gradual")
        return Family::SisGradual;
    if (s == "piecewise_constant")
        return Family::PiecewiseConstant;
    throw InvalidParameter("family", "unknown family '" + s + "' (expected sis_indicator, sis_gradual, piecewise_constant)");
}

// ---------------------------------------------------------------------------
// Duration laws

double duration_mean(const DurationLaw& d)
{
    return std::visit(overloaded{[](const Exponential& e) { return 1.0 / e.rate; },
                                 [](const Deterministic& e) { return e.value; },
                                 [](const GammaLaw& g) { return g.shape * g.scale; }},
                      d);
}

double duration_cdf(const DurationLaw& d, double t)
{
    if (t < 0)
        return 0.0;
    return std::visit(overloaded{[t](const Exponential& e) { return -std::expm1(-e.rate * t); },
                                 [t](const Deterministic& e) { return t >= e.value ? 1.0 : 0.0; },
                                 [t](const GammaLaw& g) { return boost::math::gamma_p(g.shape, t / g.scale); }},
                      d);
}

double duration_density(const DurationLaw& d, double t)
{
    if (t < 0)
        return 0.0;
    return std::visit(overloaded{[t](const Exponential& e) { return e.rate * std::exp(-e.rate * t); },
                                 [](const Deterministic&) { return 0.0; },
                                 [t](const GammaLaw& g) {
                                     if (t == 0)
                                         return g.shape == 1.0 ? 1.0 / g.scale : (g.shape < 1 ? INFINITY : 0.0);
                                     return boost::math::pdf(boost::math::gamma_distribution<double>(g.shape, g.scale), t);
                                 }},
                      d);
}

double duration_quantile(const DurationLaw& d, double p)
{
    return std::visit(overloaded{[p](const Exponential& e) { return -std::log1p(-p) / e.rate; },
                                 [](const Deterministic& e) { return e.value; },
                                 [p](const GammaLaw& g) { return boost::math::gamma_p_inv(g.shape, p) * g.scale; }},
                      d);
}

double sample_duration(const DurationLaw& d, Stream& stream)
{
    return std::visit(overloaded{[&](const Exponential& e) { return stream.exponential(e.rate); },
                                 [](const Deterministic& e) { return e.value; },
                                 [&](const GammaLaw& g) {
                                     std::gamma_distribution<double> dist(g.shape, g.scale);
                                     double x = dist(stream);
                                     return x > 0 ? x : std::numeric_limits<double>::min();
                                 }},
                      d);
}

void validate_duration(const DurationLaw& d, const std::string& field)
{
    std::visit(overloaded{[&](const Exponential& e) {
                              if (!positive(e.rate))
                                  throw InvalidParameter(field + ".rate", "must be positive");
                          },
                          [&](const Deterministic& e) {
                              if (!positive(e.value))
                                  throw InvalidParameter(field + ".value", "must be positive");
                          },
                          [&](const GammaLaw& g) {
                              if (!positive(g.shape))
                                  throw InvalidParameter(field + ".shape", "must be positive");
                              if (!positive(g.scale))
                                  throw InvalidParameter(field + ".scale", "must be positive");
                          }},
               d);
}

// ---------------------------------------------------------------------------
// Laws

ProfileLaw ProfileLaw::sis_indicator(double lambda, DurationLaw duration, std::optional<double> lambda_star)
{
    ProfileLaw law;
    law.family_ = Family::SisIndicator;
    law.lambda_base_ = lambda;
    law.duration_ = duration;
    law.waning_rate_ = 0.0;
    law.lambda_star_ = lambda_star.value_or(lambda);
    law.validate();
    return law;
}

ProfileLaw ProfileLaw::sis_gradual(double lambda, DurationLaw duration, double waning_rate,
                                   std::optional<double> lambda_star)
{
    ProfileLaw law;
    law.family_ = Family::SisGradual;
    law.lambda_base_ = lambda;
    law.duration_ = duration;
    law.waning_rate_ = waning_rate;
    law.lambda_star_ = lambda_star.value_or(lambda);
    law.validate();
    return law;
}

ProfileLaw ProfileLaw::piecewise_constant(std::vector<Segment> segments, double waning_rate,
                                          std::optional<double> lambda_star)
{
    ProfileLaw law;
    law.family_ = Family::PiecewiseConstant;
    law.segments_ = std::move(segments);
    law.waning_rate_ = waning_rate;
    double top = 0.0;
    for (const auto& s : law.segments_)
        top = std::max(top, s.level);
    law.lambda_base_ = top;
    law.lambda_star_ = lambda_star.value_or(top);
    law.validate();
    return law;
}

void ProfileLaw::validate() const
{
    if (family_ == Family::PiecewiseConstant) {
        if (segments_.empty() || segments_.size() > kMaxSegments)
            throw InvalidParameter("segments", "need between 1 and 8 segments");
        for (std::size_t j = 0; j < segments_.size(); ++j) {
            const std::string f = "segments[" + std::to_string(j) + "]";
            if (!positive(segments_[j].level))
                throw InvalidParameter(f + ".level", "must be positive");
            if (std::holds_alternative<Deterministic>(segments_[j].duration))
                throw InvalidParameter(f + ".duration", "segment durations need a continuous law (exponential or gamma)");
            validate_duration(segments_[j].duration, f + ".duration");
        }
        if (!(waning_rate_ >= 0) || !std::isfinite(waning_rate_))
            throw InvalidParameter("waning_rate", "must be nonnegative");
    }
    else {
        if (!positive(lambda_base_))
            throw InvalidParameter("lambda_base", "must be positive");
        validate_duration(duration_, "duration");
        if (family_ == Family::SisGradual && !positive(waning_rate_))
            throw InvalidParameter("waning_rate", "must be positive for sis_gradual");
    }
    if (!positive(lambda_star_))
        throw InvalidParameter("lambda_star", "must be positive");
    if (lambda_star_ < lambda_base_)
        throw InvalidParameter("lambda_star", "must bound the infectivity (>= " + std::to_string(lambda_base_) + ")");
}

InitialLaw InitialLaw::from(double p_infected, const ProfileLaw& infected_profile)
{
    InitialLaw init{p_infected, infected_profile};
    init.validate();
    return init;
}

void InitialLaw::validate() const
{
    if (!(p_infected >= 0.0 && p_infected <= 1.0))
        throw InvalidParameter("p_infected", "must lie in [0, 1]");
}

// ---------------------------------------------------------------------------
// Sampling

ProfileRealization sample_pair(const ProfileLaw& law, Stream& stream)
{
    ProfileRealization r;
    r.waning = law.waning_rate();
    if (law.family() == Family::PiecewiseConstant) {
        double end = 0.0;
        const auto& segs = law.segments();
        for (std::size_t j = 0; j < segs.size(); ++j) {
            end += sample_duration(segs[j].duration, stream);
            r.ends[j] = end;
            r.levels[j] = segs[j].level;
        }
        r.segment_count = static_cast<std::uint8_t>(segs.size());
        r.eta = end;
    }
    else {
        r.eta = sample_duration(law.duration(), stream);
        r.segment_count = 1;
        r.ends[0] = r.eta;
        r.levels[0] = law.lambda_base();
    }
    return r;
}

ProfileRealization sample_initial(const InitialLaw& init, Stream& stream)
{
    if (stream.bernoulli(init.p_infected))
        return sample_pair(init.infected_profile, stream);
    return ProfileRealization::never();
}

double mean_infectivity(const ProfileLaw& law, double t, std::size_t mc_samples)
{
    if (t < 0)
        return 0.0;
    if (law.semi_analytic())
        return law.lambda_base() * (1.0 - duration_cdf(law.duration(), t));
    const auto bank = draw_bank(law, mc_samples, kFreeFunctionSeed, 0);
    double sum = 0.0;
    for (const auto& r : bank)
        sum += r.lambda(t);
    return sum / static_cast<double>(bank.size());
}

double mean_infectivity(const InitialLaw& init, double t, std::size_t mc_samples)
{
    return mean_infectivity(init.infected_profile, t, mc_samples);
}

double duration_cdf(const ProfileLaw& law, double t, std::size_t mc_samples)
{
    if (t < 0)
        return 0.0;
    if (law.semi_analytic())
        return duration_cdf(law.duration(), t);
    const auto bank = draw_bank(law, mc_samples, kFreeFunctionSeed, 0);
    const auto n = std::count_if(bank.begin(), bank.end(), [t](const ProfileRealization& r) { return r.eta <= t; });
    return static_cast<double>(n) / static_cast<double>(bank.size());
}

double duration_cdf(const InitialLaw& init, double t, std::size_t mc_samples)
{
    if (t < 0)
        return 0.0;
    return (1.0 - init.p_infected) + init.p_infected * duration_cdf(init.infected_profile, t, mc_samples);
}

// ---------------------------------------------------------------------------
// Quadrature over eta

EtaRule EtaRule::gauss_legendre(const DurationLaw& law, const TimeGrid& grid, std::size_t points, double tail_quantile)
{
    if (std::holds_alternative<Deterministic>(law))
        return point_mass(std::get<Deterministic>(law).value, grid);

    // abscissae on [-1, 1]; boost returns the nonnegative half
    const auto half = boost::math::legendre_p_zeros<double>(static_cast<int>(points));
    std::vector<double> xi, wi;
    for (double z : half) {
        const double dp = boost::math::legendre_p_prime(static_cast<int>(points), z);
        const double w = 2.0 / ((1.0 - z * z) * dp * dp);
        xi.push_back(z);
        wi.push_back(w);
        if (z != 0.0) {
            xi.push_back(-z);
            wi.push_back(w);
        }
    }

    const double dt = grid.dt();
    const double q = duration_quantile(law, tail_quantile);
    const double fq = duration_cdf(law, q);
    EtaRule rule;
    rule.spans_.reserve(grid.size());
    for (std::size_t lag = 0; lag < grid.size(); ++lag) {
        const std::size_t begin = rule.nodes_.size();
        const double len = static_cast<double>(lag) * dt;
        const double upper = std::min(len, q);
        if (upper > 0) {
            for (std::size_t k = 0; k < xi.size(); ++k) {
                const double x = 0.5 * upper * (1.0 + xi[k]);
                rule.nodes_.push_back(make_node(x, 0.5 * upper * wi[k] * duration_density(law, x), dt));
            }
        }
        if (len > q) {
            const double mass = duration_cdf(law, len) - fq;
            if (mass > 0)
                rule.nodes_.push_back(make_node(0.5 * (q + len), mass, dt));
        }
        rule.spans_.emplace_back(begin, rule.nodes_.size() - begin);
    }
    return rule;
}

EtaRule EtaRule::point_mass(double eta, const TimeGrid& grid)
{
    EtaRule rule;
    rule.nodes_.push_back(make_node(eta, 1.0, grid.dt()));
    for (std::size_t lag = 0; lag < grid.size(); ++lag)
        rule.spans_.emplace_back(0, eta <= lag_length(lag, grid.dt()) ? 1 : 0);
    return rule;
}

EtaRule EtaRule::empirical(std::vector<double> etas, const TimeGrid& grid)
{
    std::sort(etas.begin(), etas.end());
    EtaRule rule;
    const double w = 1.0 / static_cast<double>(etas.size());
    for (double x : etas)
        rule.nodes_.push_back(make_node(x, w, grid.dt()));
    for (std::size_t lag = 0; lag < grid.size(); ++lag) {
        const auto n = std::upper_bound(etas.begin(), etas.end(), lag_length(lag, grid.dt())) - etas.begin();
        rule.spans_.emplace_back(0, static_cast<std::size_t>(n));
    }
    return rule;
}

// ---------------------------------------------------------------------------
// Kernel engine

std::pair<double, double> exp_moments(double theta, double len) noexcept
{
    if (theta * len < 1e-4) {
        // series; avoids cancellation for tiny theta*len
        const double h = theta * len;
        return {len * (1.0 - h / 2.0 + h * h / 6.0 - h * h * h / 24.0),
                len * len * (0.5 - h / 3.0 + h * h / 8.0 - h * h * h / 30.0)};
    }
    const double e = std::exp(-theta * len);
    const double a0 = -std::expm1(-theta * len) / theta;
    const double a1 = (-std::expm1(-theta * len) - theta * len * e) / (theta * theta);
    return {a0, a1};
}

namespace {

struct LawTables {
    EtaRule rule;
    std::vector<double> lambda_bar;
    std::vector<double> survival;
};

LawTables build_tables(const ProfileLaw& law, const TimeGrid& grid, const KernelOptions& opt, std::uint64_t k)
{
    LawTables t;
    t.lambda_bar.resize(grid.size());
    t.survival.resize(grid.size());
    if (law.semi_analytic()) {
        t.rule = EtaRule::gauss_legendre(law.duration(), grid, opt.gl_points, opt.tail_quantile);
        for (std::size_t i = 0; i < grid.size(); ++i) {
            const double fc = 1.0 - duration_cdf(law.duration(), grid.at(i));
            t.survival[i] = fc;
            t.lambda_bar[i] = law.lambda_base() * fc;
        }
    }
    else {
        const auto bank = draw_bank(law, opt.mc_samples, opt.mc_seed, k);
        std::vector<double> etas;
        etas.reserve(bank.size());
        for (const auto& r : bank)
            etas.push_back(r.eta);
        const double inv = 1.0 / static_cast<double>(bank.size());
        for (std::size_t i = 0; i < grid.size(); ++i) {
            const double t_i = grid.at(i);
            double lam = 0.0, alive = 0.0;
            for (const auto& r : bank) {
                lam += r.lambda(t_i);
                alive += r.eta > t_i ? 1.0 : 0.0;
            }
            t.lambda_bar[i] = lam * inv;
            t.survival[i] = alive * inv;
        }
        t.rule = EtaRule::empirical(std::move(etas), grid);
    }
    return t;
}

} // namespace

KernelEngine::KernelEngine(ProfileLaw law, InitialLaw init, TimeGrid grid, KernelOptions options)
    : law_(std::move(law))
    , init_(std::move(init))
    , grid_(grid)
    , options_(options)
{
    init_.validate();
    auto fresh = build_tables(law_, grid_, options_, 0);
    fresh_rule_ = std::move(fresh.rule);
    lambda_bar_ = std::move(fresh.lambda_bar);
    survival_ = std::move(fresh.survival);
    if (init_.infected_profile == law_) {
        initial_rule_ = fresh_rule_;
        lambda0_bar_ = lambda_bar_;
        initial_survival_ = survival_;
    }
    else {
        auto initial = build_tables(init_.infected_profile, grid_, options_, 1);
        initial_rule_ = std::move(initial.rule);
        lambda0_bar_ = std::move(initial.lambda_bar);
        initial_survival_ = std::move(initial.survival);
    }
}

void KernelEngine::fresh_row(const ForceHistory& h, std::size_t i, std::span<double> gamma_surv,
                             std::span<double> ind_surv) const
{
    const double dt = grid_.dt();
    const double theta = fresh_waning();
    for (std::size_t j = 0; j <= i; ++j) {
        const std::size_t lag = i - j;
        const double len = static_cast<double>(lag) * dt;
        double gs = 0.0, is = 0.0;
        for (const EtaNode& n : fresh_rule_.at(lag)) {
            const double surv = n.w * std::exp(-h.exponent(false, i, n, j));
            is += surv;
            gs += theta > 0 ? surv * -std::expm1(-theta * (len - n.x)) : surv;
        }
        gamma_surv[j] = gs;
        ind_surv[j] = is;
    }
}

std::pair<double, double> KernelEngine::initial_values(const ForceHistory& h, std::size_t i) const
{
    const double p = init_.p_infected;
    const double never = (1.0 - p) * std::exp(-h.cumulative(i));
    if (p == 0.0)
        return {never, never};
    const double theta = initial_waning();
    const double t = grid_.at(i);
    double gs = 0.0, is = 0.0;
    for (const EtaNode& n : initial_rule_.at(i)) {
        const double surv = n.w * std::exp(-h.exponent(true, i, n, 0));
        is += surv;
        gs += theta > 0 ? surv * -std::expm1(-theta * (t - n.x)) : surv;
    }
    return {never + p * gs, never + p * is};
}

void KernelEngine::initial_pair_row(const ForceHistory& h, std::size_t i, std::span<double> gamma_pair,
                                    std::span<double> ind_gamma) const
{
    const double p = init_.p_infected;
    const double never = (1.0 - p) * std::exp(-h.cumulative(i));
    const double theta = initial_waning();
    const double t = grid_.at(i);
    for (std::size_t l = 0; l <= i; ++l) {
        double gp = 0.0, ig = 0.0;
        if (p > 0.0) {
            const double s = grid_.at(l);
            for (const EtaNode& n : initial_rule_.at(l)) {
                const double surv = n.w * std::exp(-h.exponent(true, i, n, 0));
                if (theta > 0) {
                    const double gs = -std::expm1(-theta * (s - n.x));
                    ig += surv * gs;
                    gp += surv * gs * -std::expm1(-theta * (t - n.x));
                }
                else {
                    ig += surv;
                    gp += surv;
                }
            }
        }
        gamma_pair[l] = never + p * gp;
        ind_gamma[l] = never + p * ig;
    }
}

void KernelEngine::fresh_pair_row(const ForceHistory& h, std::size_t i, std::span<double> gamma_pair,
                                  std::span<double> ind_gamma) const
{
    const double dt = grid_.dt();
    const double theta = fresh_waning();
    for (std::size_t j = 0; j <= i; ++j) {
        const double len_t = static_cast<double>(i - j) * dt;
        for (std::size_t l = j; l <= i; ++l) {
            const double len_r = static_cast<double>(l - j) * dt;
            double gp = 0.0, ig = 0.0;
            // gamma(r - s) vanishes unless eta <= r - s
            for (const EtaNode& n : fresh_rule_.at(l - j)) {
                const double surv = n.w * std::exp(-h.exponent(false, i, n, j));
                if (theta > 0) {
                    const double gr = -std::expm1(-theta * (len_r - n.x));
                    ig += surv * gr;
                    gp += surv * gr * -std::expm1(-theta * (len_t - n.x));
                }
                else {
                    ig += surv;
                    gp += surv;
                }
            }
            const std::size_t k = KernelTable::row_offset(i, j) + (l - j);
            gamma_pair[k] = gp;
            ind_gamma[k] = ig;
        }
    }
}

// ---------------------------------------------------------------------------
// Force history

ForceHistory::ForceHistory(const TimeGrid& grid, double fresh_waning, double initial_waning)
    : grid_(grid)
    , f_(grid.size(), 0.0)
    , c_(grid.size(), 0.0)
{
    const double dt = grid.dt();
    for (auto* d : {&fresh_, &initial_}) {
        d->theta = d == &fresh_ ? fresh_waning : initial_waning;
        if (d->theta > 0) {
            d->decay.resize(grid.size());
            for (std::size_t n = 0; n < grid.size(); ++n)
                d->decay[n] = std::exp(-d->theta * static_cast<double>(n) * dt);
            d->base.assign(grid.size(), 0.0);
            std::tie(d->a0, d->a1) = exp_moments(d->theta, dt);
        }
    }
}

void ForceHistory::set(std::size_t i, double f)
{
    f_[i] = f;
    c_[i] = i == 0 ? 0.0 : c_[i - 1] + 0.5 * grid_.dt() * (f_[i - 1] + f);
}

void ForceHistory::commit(std::size_t i)
{
    for (auto* d : {&fresh_, &initial_}) {
        if (d->theta <= 0 || i == 0)
            continue;
        const double cell = cell_integral(*d, i - 1);
        for (std::size_t k = 0; k < i; ++k)
            d->base[k] += d->decay[i - 1 - k] * cell;
    }
    committed_ = i + 1;
}

double ForceHistory::cell_integral(const Discount& d, std::size_t c) const noexcept
{
    return f_[c] * d.a0 + (f_[c + 1] - f_[c]) * d.a1 / grid_.dt();
}

double ForceHistory::discounted_tail(const Discount& d, std::size_t i, std::size_t k) const noexcept
{
    // sum_{c=k}^{i-1} e^{-theta (t_c - t_k)} int_{cell c} e^{-theta (r - t_c)} f(r) dr
    if (k >= i)
        return 0.0;
    return d.base[k] + d.decay[i - 1 - k] * cell_integral(d, i - 1);
}

double ForceHistory::exponent(bool initial, std::size_t i, std::size_t m, double frac, double p0, double p1) const noexcept
{
    if (m >= i)
        return 0.0;
    const double dt = grid_.dt();
    const double plain = (c_[i] - c_[m + 1]) + dt * (f_[m] * p0 + f_[m + 1] * p1);
    const Discount& d = initial ? initial_ : fresh_;
    if (d.theta <= 0)
        return plain;
    const double len = (1.0 - frac) * dt;
    const auto [a0, a1] = exp_moments(d.theta, len);
    const double fv = f_[m] + frac * (f_[m + 1] - f_[m]);
    const double partial = fv * a0 + (f_[m + 1] - f_[m]) / dt * a1;
    const double discounted = partial + std::exp(-d.theta * len) * discounted_tail(d, i, m + 1);
    return std::max(0.0, plain - discounted);
}

// ---------------------------------------------------------------------------

std::string to_string(KernelKind k)
{
    switch (k) {
    case KernelKind::GammaSurv:
        return "GammaSurv";
    case KernelKind::GammaPairSurv:
        return "GammaPairSurv";
    case KernelKind::IndSurv:
        return "IndSurv";
    case KernelKind::IndGammaSurv:
        return "IndGammaSurv";
    case KernelKind::InitGammaSurv:
        return "InitGammaSurv";
    case KernelKind::InitGammaPairSurv:
        return "InitGammaPairSurv";
    case KernelKind::InitIndSurv:
        return "InitIndSurv";
    case KernelKind::InitIndGammaSurv:
        return "InitIndGammaSurv";
    }
    return "?";
}

int kernel_rank(KernelKind k) noexcept
{
    switch (k) {
    case KernelKind::InitGammaSurv:
    case KernelKind::InitIndSurv:
        return 1;
    case KernelKind::GammaPairSurv:
    case KernelKind::IndGammaSurv:
        return 3;
    default:
        return 2;
    }
}

KernelTable eval_kernel(const KernelEngine& engine, KernelKind kind, std::span<const double> fbar)
{
    const TimeGrid& grid = engine.grid();
    const std::size_t n = grid.size();
    if (fbar.size() != n)
        throw InvalidParameter("fbar", "grid mismatch: " + std::to_string(fbar.size()) + " values for " +
                                           std::to_string(n) + " grid points");
    for (double f : fbar)
        if (!(f >= 0) || !std::isfinite(f))
            throw InvalidParameter("fbar", "entries must be finite and nonnegative");
    const int rank = kernel_rank(kind);
    if (rank == 3 && n > kTripleTableMaxGrid)
        throw InvalidParameter("grid", "triple-index tables are limited to " + std::to_string(kTripleTableMaxGrid) +
                                           " grid points");

    KernelTable table;
    table.grid = grid;
    table.kind = kind;
    table.values.resize(rank == 1 ? n : rank == 2 ? n * (n + 1) / 2 : KernelTable::tetra_offset(n));

    ForceHistory h(engine);
    std::vector<double> a(rank == 3 ? (n + 1) * (n + 2) / 2 : n + 1), b(a.size());
    for (std::size_t i = 0; i < n; ++i) {
        h.set(i, fbar[i]);
        switch (kind) {
        case KernelKind::InitGammaSurv:
            table.values[i] = engine.initial_values(h, i).first;
            break;
        case KernelKind::InitIndSurv:
            table.values[i] = engine.initial_values(h, i).second;
            break;
        case KernelKind::GammaSurv:
        case KernelKind::IndSurv:
            engine.fresh_row(h, i, a, b);
            std::copy_n((kind == KernelKind::GammaSurv ? a : b).begin(), i + 1, table.values.begin() + i * (i + 1) / 2);
            break;
        case KernelKind::InitGammaPairSurv:
        case KernelKind::InitIndGammaSurv:
            engine.initial_pair_row(h, i, a, b);
            std::copy_n((kind == KernelKind::InitGammaPairSurv ? a : b).begin(), i + 1,
                        table.values.begin() + i * (i + 1) / 2);
            break;
        case KernelKind::GammaPairSurv:
        case KernelKind::IndGammaSurv:
            engine.fresh_pair_row(h, i, a, b);
            std::copy_n((kind == KernelKind::GammaPairSurv ? a : b).begin(), (i + 1) * (i + 2) / 2,
                        table.values.begin() + KernelTable::tetra_offset(i));
            break;
        }
        h.commit(i);
    }
    return table;
}

KernelTable eval_kernel(const ProfileLaw& law, const InitialLaw& init, KernelKind kind, std::span<const double> fbar,
                        const TimeGrid& grid, KernelOptions options)
{
    return eval_kernel(KernelEngine(law, init, grid, options), kind, fbar);
}

} // namespace epiwane
