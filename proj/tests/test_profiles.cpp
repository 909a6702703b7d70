#include <cmath>
#include <random>
#include <vector>

#include <doctest.h>

#include "epiwane/profiles.hpp"

using namespace epiwane;

TEST_SUITE("profiles") {

TEST_CASE("deterministic indicator profile")
{
    const auto law = ProfileLaw::sis_indicator(2.0, Deterministic{1.0});
    Stream s(1);
    const auto r = sample_pair(law, s);
    CHECK(r.lambda(0.5) == 2.0);
    CHECK(r.lambda(1.5) == 0.0);
    CHECK(r.gamma(0.5) == 0.0);
    CHECK(r.gamma(1.5) == 1.0);
}

TEST_CASE("gradual susceptibility closed form")
{
    const auto law = ProfileLaw::sis_gradual(2.0, Deterministic{1.0}, 1.0);
    Stream s(2);
    const auto r = sample_pair(law, s);
    CHECK(r.gamma(2.0) == doctest::Approx(1 - std::exp(-1.0)).epsilon(1e-14));
    CHECK(r.gamma(1.0) == 0.0);
}

TEST_CASE("exponential durations have the right mean")
{
    const auto law = ProfileLaw::sis_indicator(2.0, Exponential{1.0});
    Stream s(3);
    double sum = 0.0;
    const int n = 100000;
    for (int k = 0; k < n; ++k)
        sum += sample_pair(law, s).eta;
    CHECK(std::abs(sum / n - 1.0) < 0.02);
}

TEST_CASE("initial profiles")
{
    const auto law = ProfileLaw::sis_indicator(2.0, Deterministic{1.0});
    Stream s(4);
    const auto none = InitialLaw::from(0.0, law);
    for (int k = 0; k < 100; ++k) {
        const auto r = sample_initial(none, s);
        CHECK(r.never_infected);
        CHECK(r.gamma(0.0) == 1.0);
        CHECK(r.gamma(7.5) == 1.0);
        CHECK(r.lambda(0.0) == 0.0);
    }
    const auto all = InitialLaw::from(1.0, law);
    CHECK(sample_initial(all, s).lambda(0.0) == 2.0);

    const auto some = InitialLaw::from(0.1, law);
    int infected = 0;
    const int n = 100000;
    for (int k = 0; k < n; ++k)
        infected += !sample_initial(some, s).never_infected;
    CHECK(std::abs(infected / double(n) - 0.1) < 0.003);
}

TEST_CASE("mean infectivity")
{
    const auto law = ProfileLaw::sis_indicator(2.0, Exponential{1.0});
    for (double t : {0.0, 0.3, 1.0, 4.0})
        CHECK(mean_infectivity(law, t) == doctest::Approx(2 * std::exp(-t)).epsilon(1e-13));
    CHECK(mean_infectivity(ProfileLaw::sis_indicator(2.0, Deterministic{1.0}), 1.5) == 0.0);

    // gamma(2, 0.5) duration against plain Monte Carlo with the standard library
    const auto g = ProfileLaw::sis_indicator(1.5, GammaLaw{2.0, 0.5});
    std::mt19937_64 rng(99);
    std::gamma_distribution<double> eta(2.0, 0.5);
    const int n = 1000000;
    double hits = 0;
    for (int k = 0; k < n; ++k)
        hits += eta(rng) > 1.0;
    const double p = hits / n;
    const double se = 1.5 * std::sqrt(p * (1 - p) / n);
    CHECK(std::abs(mean_infectivity(g, 1.0) - 1.5 * p) < 3 * se);
    // closed form: P(eta > 1) = (1 + 2) e^{-2}
    CHECK(mean_infectivity(g, 1.0) == doctest::Approx(1.5 * 3 * std::exp(-2.0)).epsilon(1e-12));
}

TEST_CASE("duration cdf")
{
    const auto e = ProfileLaw::sis_indicator(2.0, Exponential{1.0});
    CHECK(duration_cdf(e, 1.0) == doctest::Approx(1 - std::exp(-1.0)).epsilon(1e-14));
    CHECK(duration_cdf(InitialLaw::from(0.3, e), 0.0) == doctest::Approx(0.7));
    const auto d = ProfileLaw::sis_indicator(2.0, Deterministic{1.0});
    CHECK(duration_cdf(d, 0.999) == 0.0);
    CHECK(duration_cdf(d, 1.0) == 1.0);
}

TEST_CASE("invalid laws name the offending field")
{
    try {
        ProfileLaw::sis_indicator(-1.0, Exponential{1.0});
        FAIL("accepted a negative rate");
    }
    catch (const InvalidParameter& e) {
        CHECK(e.field() == "lambda_base");
    }
    try {
        ProfileLaw::sis_indicator(1.0, Exponential{0.0});
        FAIL("accepted a zero rate");
    }
    catch (const InvalidParameter& e) {
        CHECK(e.field() == "duration.rate");
    }
    CHECK_THROWS_AS(ProfileLaw::sis_gradual(1.0, Exponential{1.0}, 0.0), InvalidParameter);
    CHECK_THROWS_AS(ProfileLaw::sis_indicator(2.0, Exponential{1.0}, 1.5), InvalidParameter);
    CHECK_THROWS_AS(ProfileLaw::piecewise_constant({{1.0, Deterministic{1.0}}}, 0.0), InvalidParameter);
    CHECK_THROWS_AS(ProfileLaw::piecewise_constant({}, 0.0), InvalidParameter);
    CHECK_THROWS_AS(InitialLaw::from(1.5, ProfileLaw::sis_indicator(1.0, Exponential{1.0})), InvalidParameter);
}

TEST_CASE("sampled profiles respect bounds and support ordering")
{
    const std::vector<ProfileLaw> laws{
        ProfileLaw::sis_indicator(2.0, Exponential{1.0}),
        ProfileLaw::sis_gradual(1.0, GammaLaw{2.0, 0.5}, 0.3),
        ProfileLaw::piecewise_constant({{3.0, Exponential{2.0}}, {1.0, GammaLaw{2.0, 0.5}}, {0.5, Exponential{1.0}}}, 0.5),
    };
    Stream s(5);
    for (const auto& law : laws) {
        bool ok = true;
        for (int k = 0; k < 100000 && ok; ++k) {
            const auto r = sample_pair(law, s);
            ok = r.eta > 0 && r.lambda(r.eta) == 0.0 && r.gamma(std::nextafter(r.eta, 0.0)) == 0.0;
            for (double a : {0.0, 0.5 * r.eta, r.eta, 2 * r.eta + 1}) {
                ok = ok && r.lambda(a) >= 0 && r.lambda(a) <= law.lambda_star();
                ok = ok && r.gamma(a) >= 0 && r.gamma(a) <= 1;
                ok = ok && !(r.lambda(a) > 0 && r.gamma(a) > 0);
            }
        }
        CHECK(ok);
    }
}

TEST_CASE("kernel with zero force is the duration cdf")
{
    const auto law = ProfileLaw::sis_indicator(2.0, Exponential{1.0});
    const auto init = InitialLaw::from(0.0, law);
    const TimeGrid grid(0.1, 3.0);
    const std::vector<double> zero(grid.size(), 0.0);
    const auto k = eval_kernel(law, init, KernelKind::GammaSurv, zero, grid);
    const auto ind = eval_kernel(law, init, KernelKind::IndSurv, zero, grid);
    double err = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i)
        for (std::size_t j = 0; j <= i; ++j) {
            const double f = 1 - std::exp(-grid.at(i - j));
            err = std::max({err, std::abs(k(i, j) - f), std::abs(ind(i, j) - f)});
        }
    CHECK(err < 1e-12);
}

TEST_CASE("kernel with constant force matches the closed-form integral")
{
    // GammaSurv(t, s) = int_0^a e^{-c (a - x)} e^{-x} dx = (e^{-a} - e^{-c a}) / (c - 1), a = t - s
    const double c = 0.7;
    const auto law = ProfileLaw::sis_indicator(2.0, Exponential{1.0});
    const auto init = InitialLaw::from(0.0, law);
    const TimeGrid grid(0.05, 5.0);
    const std::vector<double> f(grid.size(), c);
    const auto k = eval_kernel(law, init, KernelKind::GammaSurv, f, grid);
    double rel = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i)
        for (std::size_t j = 0; j < i; ++j) {
            const double a = grid.at(i - j);
            const double exact = (std::exp(-a) - std::exp(-c * a)) / (c - 1);
            rel = std::max(rel, std::abs(k(i, j) - exact) / exact);
        }
    CHECK(rel < 1e-8);
}

TEST_CASE("gamma-weighted kernels lie in [0, 1] and vanish on the diagonal")
{
    const auto law = ProfileLaw::sis_gradual(2.0, GammaLaw{2.0, 0.5}, 0.8);
    const auto init = InitialLaw::from(0.2, law);
    const TimeGrid grid(0.1, 4.0);
    std::vector<double> f(grid.size());
    for (std::size_t i = 0; i < f.size(); ++i)
        f[i] = 1.0 + std::sin(grid.at(i));
    for (auto kind : {KernelKind::GammaSurv, KernelKind::IndSurv}) {
        const auto k = eval_kernel(law, init, kind, f, grid);
        for (double v : k.values) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
    const auto k = eval_kernel(law, init, KernelKind::GammaSurv, f, grid);
    for (std::size_t i = 0; i < grid.size(); ++i)
        CHECK(k(i, i) == 0.0);

    // larger force, smaller kernel
    std::vector<double> g(f);
    for (double& x : g)
        x += 0.5;
    const auto kg = eval_kernel(law, init, KernelKind::GammaSurv, g, grid);
    bool monotone = true;
    for (std::size_t n = 0; n < k.values.size(); ++n)
        monotone = monotone && kg.values[n] <= k.values[n] + 1e-15;
    CHECK(monotone);
}

TEST_CASE("Monte Carlo backend agrees with the semi-analytic one")
{
    // a single exponential segment is the indicator family in disguise
    const auto exact = ProfileLaw::sis_indicator(2.0, Exponential{1.0});
    const auto mc = ProfileLaw::piecewise_constant({{2.0, Exponential{1.0}}}, 0.0);
    const TimeGrid grid(0.25, 2.5);
    const std::vector<double> f(grid.size(), 0.8);
    KernelOptions opts;
    opts.mc_samples = 20000;
    const auto a = eval_kernel(exact, InitialLaw::from(0.0, exact), KernelKind::GammaSurv, f, grid, opts);
    const auto b = eval_kernel(mc, InitialLaw::from(0.0, mc), KernelKind::GammaSurv, f, grid, opts);
    for (std::size_t n = 0; n < a.values.size(); ++n) {
        const double v = a.values[n];
        const double se = std::sqrt(std::max(v * (1 - v), 1e-6) / 20000.0);
        CHECK(std::abs(a.values[n] - b.values[n]) < 3 * se + 1e-3);
    }
}

TEST_CASE("exponential moments")
{
    for (double theta : {0.0, 1e-9, 1e-3, 0.5, 3.0}) {
        const double len = 0.7;
        const auto [m0, m1] = exp_moments(theta, len);
        // composite Simpson as the reference
        const int n = 2000;
        double s0 = 0, s1 = 0;
        for (int k = 0; k <= n; ++k) {
            const double u = len * k / n;
            const double w = (k == 0 || k == n) ? 1 : (k % 2 ? 4 : 2);
            s0 += w * std::exp(-theta * u);
            s1 += w * u * std::exp(-theta * u);
        }
        s0 *= len / (3 * n);
        s1 *= len / (3 * n);
        CHECK(m0 == doctest::Approx(s0).epsilon(1e-10));
        CHECK(m1 == doctest::Approx(s1).epsilon(1e-10));
    }
}

} // TEST_SUITE
