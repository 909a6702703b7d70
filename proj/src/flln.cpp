#include "epiwane/flln.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "epiwane/error.hpp"

namespace epiwane {

namespace {

// sum_{j<i} w_ij k_j phi_j with the trapezoid weights of [0, t_i], excluding j = i
double history_sum(std::span<const double> kernel_row, std::span<const double> phi, std::size_t i, double dt)
{
    double acc = 0.0;
    for (std::size_t j = 0; j < i; ++j)
        acc += trapezoid_weight(i, j, dt) * kernel_row[j] * phi[j];
    return acc;
}

double fresh_infectivity_sum(const KernelEngine& e, std::span<const double> phi, std::size_t i, double dt)
{
    double acc = 0.0;
    for (std::size_t j = 0; j < i; ++j)
        acc += trapezoid_weight(i, j, dt) * e.lambda_bar(i - j) * phi[j];
    return acc;
}

void fill_compartments(const KernelEngine& e, const ForceHistory& h, std::size_t i, std::span<const double> ind_row,
                       std::span<const double> phi, double& u, double& ib)
{
    const double dt = e.grid().dt();
    u = e.initial_values(h, i).second;
    ib = e.p_infected() * e.initial_survival(i);
    for (std::size_t j = 0; j <= i; ++j) {
        const double w = trapezoid_weight(i, j, dt) * phi[j];
        u += w * ind_row[j];
        ib += w * e.survival(i - j);
    }
}

} // namespace

LimitSolution solve_flln(const ProfileLaw& law, const InitialLaw& init, const TimeGrid& grid, FllnOptions options)
{
    return solve_flln(KernelEngine(law, init, grid, options.kernel), options);
}

LimitSolution solve_flln(const KernelEngine& e, FllnOptions options)
{
    if (!(options.tol > 0))
        throw InvalidParameter("flln.tol", "must be positive");
    if (options.max_iter == 0)
        throw InvalidParameter("flln.max_iter", "must be at least 1");

    const TimeGrid& grid = e.grid();
    const std::size_t n = grid.size();
    const double dt = grid.dt();
    const double p = e.p_infected();
    const double lambda_star = std::max(e.law().lambda_star(), e.init().infected_profile.lambda_star());

    LimitSolution sol;
    sol.grid = grid;
    sol.tol = options.tol;
    sol.sbar.assign(n, 0.0);
    sol.fbar.assign(n, 0.0);
    sol.ubar.assign(n, 0.0);
    sol.ibar.assign(n, 0.0);
    std::vector<double> phi(n, 0.0); // sbar * fbar
    std::vector<double> gs(n + 1), is(n + 1);

    ForceHistory h(e);
    for (std::size_t i = 0; i < n; ++i) {
        const double source = p * e.lambda0_bar(i) + fresh_infectivity_sum(e, phi, i, dt);
        const double diag = i == 0 ? 0.0 : 0.5 * dt * e.lambda_bar(0);

        // linear extrapolation is accurate to O(dt^2), so few sweeps are needed
        double f = i == 0 ? p * e.lambda0_bar(0) : i == 1 ? sol.fbar[0] : 2 * sol.fbar[i - 1] - sol.fbar[i - 2];
        f = std::clamp(f, 0.0, lambda_star);
        double s = 0.0;
        double change = INFINITY;
        std::size_t it = 0;
        while (it < options.max_iter) {
            ++it;
            h.set(i, f);
            e.fresh_row(h, i, gs, is);
            s = e.initial_values(h, i).first + history_sum(gs, phi, i, dt);
            const double denom = 1.0 - diag * s;
            const double next = source / denom;
            change = std::abs(next - f);
            if (change <= 0.1 * options.tol)
                break;
            f = next;
        }
        if (change > 0.1 * options.tol)
            throw ConvergenceError("flln: step " + std::to_string(i) + " did not converge in " +
                                       std::to_string(options.max_iter) + " iterations",
                                   change);
        sol.iterations = std::max(sol.iterations, it);
        sol.residual = std::max(sol.residual, change);
        sol.sbar[i] = s;
        sol.fbar[i] = f;
        phi[i] = s * f;
        fill_compartments(e, h, i, is, phi, sol.ubar[i], sol.ibar[i]);
        h.commit(i);
    }
    return sol;
}

Compartments derive_compartments(const LimitSolution& solution, const KernelEngine& e)
{
    if (!(solution.grid == e.grid()))
        throw InvalidParameter("grid", "solution and kernels use different grids");
    if (!(solution.residual <= solution.tol))
        throw ConvergenceError("flln: solution is not converged", solution.residual);
    const std::size_t n = solution.grid.size();
    Compartments c{std::vector<double>(n), std::vector<double>(n)};
    std::vector<double> phi(n), gs(n + 1), is(n + 1);
    ForceHistory h(e);
    for (std::size_t i = 0; i < n; ++i) {
        phi[i] = solution.sbar[i] * solution.fbar[i];
        h.set(i, solution.fbar[i]);
        e.fresh_row(h, i, gs, is);
        fill_compartments(e, h, i, is, phi, c.ubar[i], c.ibar[i]);
        h.commit(i);
    }
    return c;
}

Compartments derive_compartments(const LimitSolution& solution, const ProfileLaw& law, const InitialLaw& init,
                                 KernelOptions options)
{
    return derive_compartments(solution, KernelEngine(law, init, solution.grid, options));
}

std::vector<double> solve_markovian_ode(double lambda, double mu, double i0, const TimeGrid& grid)
{
    if (!(lambda > 0))
        throw InvalidParameter("lambda", "must be positive");
    if (!(mu > 0))
        throw InvalidParameter("mu", "must be positive");
    auto rhs = [=](double x) { return lambda * (1.0 - x) * x - mu * x; };
    std::vector<double> out(grid.size());
    out[0] = i0;
    const double h = grid.dt();
    for (std::size_t i = 1; i < grid.size(); ++i) {
        const double x = out[i - 1];
        const double k1 = rhs(x);
        const double k2 = rhs(x + 0.5 * h * k1);
        const double k3 = rhs(x + 0.5 * h * k2);
        const double k4 = rhs(x + h * k3);
        out[i] = x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
    }
    return out;
}

} // namespace epiwane
