#pragma once

// Deterministic limit of the population averages.

#include <cstddef>
#include <span>
#include <vector>

#include "epiwane/grid.hpp"
#include "epiwane/profiles.hpp"

namespace epiwane {

struct FllnOptions {
    double tol = 1e-10;
    std::size_t max_iter = 200;
    KernelOptions kernel{};
};

struct LimitSolution {
    TimeGrid grid;
    std::vector<double> sbar; ///< average susceptibility
    std::vector<double> fbar; ///< force of infection
    std::vector<double> ubar; ///< fraction not infectious
    std::vector<double> ibar; ///< fraction infectious
    std::size_t iterations = 0; ///< largest number of inner iterations over the steps
    double residual = 0.0;      ///< sup-norm residual of the discrete equations
    double tol = 0.0;
};

/// Solves the (sbar, fbar) system by implicit trapezoid marching; each step
/// is a scalar fixed point in fbar(t_i). Compartments are filled in as well.
/// Throws ConvergenceError if a step does not converge within max_iter.
LimitSolution solve_flln(const ProfileLaw& law, const InitialLaw& init, const TimeGrid& grid, FllnOptions options = {});
LimitSolution solve_flln(const KernelEngine& engine, FllnOptions options = {});

struct Compartments {
    std::vector<double> ubar;
    std::vector<double> ibar;
};

/// Recomputes (ubar, ibar) from a converged (sbar, fbar).
Compartments derive_compartments(const LimitSolution& solution, const KernelEngine& engine);
Compartments derive_compartments(const LimitSolution& solution, const ProfileLaw& law, const InitialLaw& init,
                                 KernelOptions options = {});

/// RK4 for I' = lambda (1 - I) I - mu I.
std::vector<double> solve_markovian_ode(double lambda, double mu, double i0, const TimeGrid& grid);

} // namespace epiwane
