#include <cmath>
#include <vector>

#include <doctest.h>

#include "epiwane/flln.hpp"

using namespace epiwane;

namespace {

// I' = lambda (1 - I) I - mu I
double logistic(double lambda, double mu, double i0, double t)
{
    const double r = lambda - mu, k = 1 - mu / lambda;
    return k / (1 + (k / i0 - 1) * std::exp(-r * t));
}

double sup_diff_coarse(const std::vector<double>& coarse, const std::vector<double>& fine, std::size_t stride)
{
    double m = 0.0;
    for (std::size_t g = 0; g < coarse.size(); ++g)
        m = std::max(m, std::abs(coarse[g] - fine[g * stride]));
    return m;
}

const ProfileLaw kSis = ProfileLaw::sis_indicator(2.0, Exponential{1.0});

} // namespace

TEST_SUITE("flln") {

TEST_CASE("no infection source")
{
    const TimeGrid grid(0.05, 5.0);
    const auto s = solve_flln(kSis, InitialLaw::from(0.0, kSis), grid);
    for (std::size_t g = 0; g < grid.size(); ++g) {
        CHECK(s.fbar[g] == 0.0);
        CHECK(s.sbar[g] == 1.0);
        CHECK(s.ibar[g] == 0.0);
        CHECK(s.ubar[g] == 1.0);
    }
}

TEST_CASE("ODE oracle is the logistic curve")
{
    const TimeGrid grid(0.01, 20.0);
    const auto ode = solve_markovian_ode(2.0, 1.0, 0.1, grid);
    double err = 0.0;
    for (std::size_t g = 0; g < grid.size(); ++g)
        err = std::max(err, std::abs(ode[g] - logistic(2.0, 1.0, 0.1, grid.at(g))));
    CHECK(err < 1e-9);
    CHECK(ode.back() >= 0.49);
    CHECK(ode.back() <= 0.51);

    const auto zero = solve_markovian_ode(2.0, 1.0, 0.0, grid);
    for (double x : zero)
        CHECK(x == 0.0);
    const auto sub = solve_markovian_ode(1.0, 2.0, 0.3, grid);
    for (std::size_t g = 1; g < sub.size(); ++g)
        CHECK(sub[g] < sub[g - 1]);
}

TEST_CASE("Markovian SIS reduces to the ODE")
{
    const TimeGrid grid(0.01, 20.0);
    const auto init = InitialLaw::from(0.1, kSis);
    const auto s = solve_flln(kSis, init, grid);
    double err = 0.0, identity = 0.0;
    for (std::size_t g = 0; g < grid.size(); ++g) {
        err = std::max(err, std::abs(s.ibar[g] - logistic(2.0, 1.0, 0.1, grid.at(g))));
        identity = std::max(identity, std::abs(s.ubar[g] + s.ibar[g] - 1));
        REQUIRE(s.sbar[g] >= 0.0);
        REQUIRE(s.sbar[g] <= 1.0);
        REQUIRE(s.fbar[g] >= 0.0);
        REQUIRE(s.fbar[g] <= 2.0);
    }
    CHECK(err < 1e-3);
    CHECK(std::abs(s.ibar.back() - 0.5) < 0.01);
    CHECK(identity < 5e-5);
    CHECK(s.ibar[0] == doctest::Approx(0.1).epsilon(1e-14));
    CHECK(s.residual < 1e-8);

    const auto c = derive_compartments(s, kSis, init);
    CHECK(c.ibar == s.ibar);
    CHECK(c.ubar == s.ubar);
}

TEST_CASE("second order in dt")
{
    const auto law = ProfileLaw::sis_gradual(2.0, GammaLaw{2.0, 0.5}, 0.5);
    const auto init = InitialLaw::from(0.1, law);
    std::vector<LimitSolution> sols;
    for (double dt : {0.04, 0.02, 0.01})
        sols.push_back(solve_flln(law, init, TimeGrid(dt, 8.0)));
    const double e1 = std::max(sup_diff_coarse(sols[0].fbar, sols[1].fbar, 2), sup_diff_coarse(sols[0].sbar, sols[1].sbar, 2));
    const double e2 = std::max(sup_diff_coarse(sols[1].fbar, sols[2].fbar, 2), sup_diff_coarse(sols[1].sbar, sols[2].sbar, 2));
    MESSAGE("refinement ratio " << e1 / e2);
    CHECK(e1 / e2 > 3.0);
    CHECK(e1 / e2 < 5.0);
}

TEST_CASE("fixed point is reached")
{
    const TimeGrid grid(0.05, 10.0);
    const auto init = InitialLaw::from(0.1, kSis);
    FllnOptions a;
    a.max_iter = 50;
    FllnOptions b;
    b.max_iter = 100;
    const auto x = solve_flln(kSis, init, grid, a);
    const auto y = solve_flln(kSis, init, grid, b);
    CHECK(x.fbar == y.fbar);
    CHECK(x.sbar == y.sbar);

    FllnOptions starved;
    starved.max_iter = 1;
    CHECK_THROWS_AS(solve_flln(kSis, init, grid, starved), ConvergenceError);
}

TEST_CASE("other families stay within bounds")
{
    const TimeGrid grid(0.02, 10.0);
    const std::vector<ProfileLaw> laws{
        ProfileLaw::sis_indicator(1.5, Deterministic{1.2}),
        ProfileLaw::sis_gradual(3.0, Exponential{2.0}, 0.2),
        ProfileLaw::piecewise_constant({{3.0, Exponential{3.0}}, {1.0, GammaLaw{2.0, 0.5}}}, 0.4),
    };
    for (std::size_t l = 0; l < laws.size(); ++l) {
        const auto& law = laws[l];
        const auto s = solve_flln(law, InitialLaw::from(0.05, law), grid);
        double identity = 0.0;
        for (std::size_t g = 0; g < grid.size(); ++g) {
            CHECK(s.sbar[g] >= 0.0);
            CHECK(s.sbar[g] <= 1.0 + 1e-12);
            CHECK(s.fbar[g] >= 0.0);
            CHECK(s.fbar[g] <= law.lambda_star());
            identity = std::max(identity, std::abs(s.ubar[g] + s.ibar[g] - 1));
        }
        // a fixed duration puts a jump into the integrands, which the trapezoid rule only resolves to O(dt)
        CHECK(identity < (l == 0 ? 0.05 : 1e-4));
    }
}

TEST_CASE("a fixed duration converges at first order")
{
    const auto law = ProfileLaw::sis_indicator(1.5, Deterministic{1.2});
    const auto init = InitialLaw::from(0.05, law);
    std::vector<double> identity;
    for (double dt : {0.04, 0.02, 0.01}) {
        const TimeGrid grid(dt, 10.0);
        const auto s = solve_flln(law, init, grid);
        double m = 0.0;
        for (std::size_t g = 0; g < grid.size(); ++g)
            m = std::max(m, std::abs(s.ubar[g] + s.ibar[g] - 1));
        identity.push_back(m);
    }
    CHECK(identity[0] / identity[1] > 1.8);
    CHECK(identity[0] / identity[1] < 2.2);
    CHECK(identity[1] / identity[2] > 1.8);
    CHECK(identity[1] / identity[2] < 2.2);
}

} // TEST_SUITE
