#include "epiwane/fclt.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "epiwane/error.hpp"
#include "epiwane/parallel.hpp"
#include "epiwane/simulator.hpp"

namespace epiwane {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// ---------------------------------------------------------------------------
// Driver covariance

CovarianceModel estimate_driver_covariance(const ProfileLaw& law, const InitialLaw& init, const LimitSolution& flln,
                                           std::uint64_t seed, const CovarianceOptions& options)
{
    if (options.agents < 100)
        throw InvalidParameter("fclt.agents", "need at least 100 agents");
    const TimeGrid& grid = flln.grid;
    const std::size_t G = grid.size();
    const std::size_t dim = 4 * G;
    if (dim > kMaxCovarianceDim)
        throw InvalidParameter("dt", "grid too fine for the driver covariance (" + std::to_string(G) + " points, limit " +
                                         std::to_string(kMaxCovarianceDim / 4) + ")");
    if (flln.sbar.size() != G || flln.fbar.size() != G || flln.ubar.size() != G || flln.ibar.size() != G)
        throw InvalidParameter("flln", "grid mismatch");

    // shifting by the limit means keeps the one-pass moments well conditioned
    Eigen::VectorXd shift(dim);
    for (std::size_t i = 0; i < G; ++i) {
        shift[4 * i + kJ] = flln.sbar[i];
        shift[4 * i + kM] = flln.fbar[i];
        shift[4 * i + kJ1] = flln.ubar[i];
        shift[4 * i + kM1] = flln.ibar[i];
    }

    const std::size_t M = options.agents;
    const std::size_t chunk = std::max<std::size_t>(1, options.chunk);
    Eigen::MatrixXd cross = Eigen::MatrixXd::Zero(dim, dim);
    Eigen::MatrixXd fourth = Eigen::MatrixXd::Zero(dim, dim);
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(dim);
    RowMatrix block;
    for (std::size_t first = 0; first < M; first += chunk) {
        const std::size_t rows = std::min(chunk, M - first);
        block.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(dim));
        parallel_for(rows, options.threads, [&](std::size_t r) {
            const std::size_t k = first + r;
            std::vector<double> g(G), l(G), inf(G), rec(G);
            const bool infected = initially_infected(init, M, k, seed, InitialAssignment::Bernoulli);
            sample_agent_functionals(law, init, flln, seed, k, infected, g, l, inf, rec);
            double* row = block.row(static_cast<Eigen::Index>(r)).data();
            for (std::size_t i = 0; i < G; ++i) {
                row[4 * i + kJ] = g[i] - shift[4 * i + kJ];
                row[4 * i + kM] = l[i] - shift[4 * i + kM];
                row[4 * i + kJ1] = rec[i] - shift[4 * i + kJ1];
                row[4 * i + kM1] = inf[i] - shift[4 * i + kM1];
            }
        });
        sum += block.colwise().sum().transpose();
        cross.selfadjointView<Eigen::Lower>().rankUpdate(block.transpose());
        const RowMatrix squared = block.array().square().matrix();
        fourth.selfadjointView<Eigen::Lower>().rankUpdate(squared.transpose());
    }

    const double m = static_cast<double>(M);
    const Eigen::VectorXd centre = sum / m;
    CovarianceModel out;
    out.grid = grid;
    out.samples = M;
    out.cov.resize(dim * dim);
    out.standard_error.resize(dim * dim);
    out.mean.resize(dim);
    for (std::size_t a = 0; a < dim; ++a)
        out.mean[a] = shift[a] + centre[a];
    for (std::size_t a = 0; a < dim; ++a) {
        for (std::size_t b = 0; b <= a; ++b) {
            const auto ia = static_cast<Eigen::Index>(a), ib = static_cast<Eigen::Index>(b);
            const double c = (cross(ia, ib) - m * centre[ia] * centre[ib]) / (m - 1.0);
            const double second = cross(ia, ib) / m;
            const double spread = std::max(0.0, fourth(ia, ib) / m - second * second);
            const double se = std::sqrt(spread / m);
            out.cov[a * dim + b] = out.cov[b * dim + a] = c;
            out.standard_error[a * dim + b] = out.standard_error[b * dim + a] = se;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Driver sampling

DriverSampler::DriverSampler(const CovarianceModel& cov)
    : grid_(cov.grid)
    , dim_(cov.dim())
{
    if (cov.cov.size() != dim_ * dim_)
        throw InvalidParameter("covariance", "size does not match its grid");
    const Eigen::Index n = static_cast<Eigen::Index>(dim_);
    Eigen::Map<const RowMatrix> sigma(cov.cov.data(), n, n);
    const double mean_diag = sigma.diagonal().mean();
    factor_.assign(dim_ * dim_, 0.0);
    if (!(mean_diag > 0))
        return; // degenerate: every sample is zero

    const double levels[] = {0.0, 1e-12, 1e-11, 1e-10, 1e-9, 1e-8};
    for (double eps : levels) {
        Eigen::MatrixXd a = sigma;
        a.diagonal().array() += eps * mean_diag;
        Eigen::LLT<Eigen::MatrixXd> llt(a);
        if (llt.info() != Eigen::Success)
            continue;
        jitter_ = eps;
        Eigen::Map<RowMatrix> l(factor_.data(), n, n);
        l = llt.matrixL();
        return;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sigma, Eigen::EigenvaluesOnly);
    throw Error("driver covariance is not positive semidefinite within jitter 1e-8 (smallest eigenvalue " +
                std::to_string(eig.eigenvalues().minCoeff()) + ", mean diagonal " + std::to_string(mean_diag) + ")");
}

namespace {

void fill_normals(std::uint64_t seed, std::size_t index, double* out, std::size_t n)
{
    Stream s(seed, index, kDriverStream);
    std::normal_distribution<double> normal;
    for (std::size_t a = 0; a < n; ++a)
        out[a] = normal(s);
}

DriverSample unstack(const double* z, std::size_t G)
{
    DriverSample d(G);
    for (std::size_t i = 0; i < G; ++i) {
        d.jhat[i] = z[4 * i + kJ];
        d.mhat[i] = z[4 * i + kM];
        d.jhat1[i] = z[4 * i + kJ1];
        d.mhat1[i] = z[4 * i + kM1];
    }
    return d;
}

} // namespace

DriverSample DriverSampler::sample(std::uint64_t seed, std::size_t index) const
{
    return std::move(sample_batch(seed, index, 1).front());
}

std::vector<DriverSample> DriverSampler::sample_batch(std::uint64_t seed, std::size_t first, std::size_t count) const
{
    const Eigen::Index n = static_cast<Eigen::Index>(dim_);
    Eigen::MatrixXd xi(n, static_cast<Eigen::Index>(count));
    for (std::size_t c = 0; c < count; ++c)
        fill_normals(seed, first + c, xi.col(static_cast<Eigen::Index>(c)).data(), dim_);
    Eigen::Map<const RowMatrix> l(factor_.data(), n, n);
    const Eigen::MatrixXd z = l.triangularView<Eigen::Lower>() * xi;
    std::vector<DriverSample> out;
    out.reserve(count);
    for (std::size_t c = 0; c < count; ++c)
        out.push_back(unstack(z.col(static_cast<Eigen::Index>(c)).data(), grid_.size()));
    return out;
}

DriverSample sample_driver(const CovarianceModel& cov, std::uint64_t seed)
{
    return DriverSampler(cov).sample(seed, 0);
}

// ---------------------------------------------------------------------------
// Coefficients

namespace {

// Coefficients c_l of  sum_nodes W int_v^{t_i} g(r - v) y(r) dr  for
// piecewise-linear y, v = t_m + frac dt, g = 1 or 1 - e^{-theta u}.
// Constant interior weights go through a difference array, the discounted
// part through a decaying running sum, so a row costs O(i + nodes).
class RowAccumulator {
public:
    RowAccumulator(std::size_t n, double dt, double theta)
        : dt_(dt)
        , theta_(theta)
        , diff_(n + 1, 0.0)
        , point_(n + 1, 0.0)
        , start_(n + 1, 0.0)
    {
        if (theta > 0) {
            std::tie(a0_, a1_) = exp_moments(theta, dt);
            decay_ = std::exp(-theta * dt);
        }
    }

    void reset(std::size_t i)
    {
        std::fill_n(diff_.begin(), i + 1, 0.0);
        std::fill_n(point_.begin(), i + 1, 0.0);
        std::fill_n(start_.begin(), i + 1, 0.0);
        i_ = i;
    }

    void add(double w, std::size_t m, double frac, bool gradual)
    {
        if (m >= i_ || w == 0.0)
            return;
        const double p0 = 0.5 * (1.0 - frac) * (1.0 - frac);
        const double p1 = 0.5 * (1.0 - frac * frac);
        point_[m] += w * dt_ * p0;
        point_[m + 1] += w * dt_ * (p1 - 0.5);
        diff_[m + 1] += w * dt_;
        diff_[i_] -= w * dt_;
        point_[i_] += 0.5 * w * dt_;
        if (!gradual)
            return;
        const double len = (1.0 - frac) * dt_;
        const auto [b0, b1] = exp_moments(theta_, len);
        point_[m] -= w * ((1.0 - frac) * b0 - b1 / dt_);
        point_[m + 1] -= w * (frac * b0 + b1 / dt_);
        if (m + 1 < i_)
            start_[m + 1] += w * std::exp(-theta_ * len);
    }

    void finish(std::span<double> coef) const
    {
        double range = 0.0, run = 0.0, prev = 0.0;
        for (std::size_t l = 0; l <= i_; ++l) {
            range += diff_[l];
            double c = point_[l] + range;
            if (theta_ > 0) {
                if (l < i_) {
                    run = run * decay_ + start_[l];
                    c -= run * (a0_ - a1_ / dt_) + prev * a1_ / dt_;
                    prev = run;
                }
                else {
                    c -= prev * a1_ / dt_;
                }
            }
            coef[l] = c;
        }
    }

private:
    double dt_, theta_;
    double a0_ = 0.0, a1_ = 0.0, decay_ = 1.0;
    std::vector<double> diff_, point_, start_;
    std::size_t i_ = 0;
};

double waning_gain(double theta, double u) noexcept { return theta > 0 ? -std::expm1(-theta * u) : 1.0; }

} // namespace

void FluctuationSolver::allocate(const TimeGrid& grid)
{
    grid_ = grid;
    const std::size_t n = grid.size() * (grid.size() + 1) / 2;
    for (Packed* p : {&px_, &py_, &qx_, &qy_, &ux_, &uy_, &ix_, &iy_})
        p->v.assign(n, 0.0);
}

FluctuationSolver::FluctuationSolver(const ProfileLaw& law, const InitialLaw& init, const LimitSolution& flln,
                                     FcltOptions options)
{
    allocate(flln.grid);
    literal_ = options.corollary_literal;
    const KernelEngine e(law, init, flln.grid, options.kernel);
    const std::size_t G = grid_.size();
    const double dt = grid_.dt();
    const double p = init.p_infected;
    const double th = e.fresh_waning();
    const double th0 = e.initial_waning();

    RowAccumulator x_fresh(G, dt, th), u_fresh(G, dt, th), x_init(G, dt, th0), u_init(G, dt, th0);
    std::vector<double> gs(G), is(G), cxf(G), cuf(G), cx0(G), cu0(G);
    ForceHistory h(e);
    for (std::size_t i = 0; i < G; ++i) {
        h.set(i, flln.fbar[i]);
        for (RowAccumulator* a : {&x_fresh, &u_fresh, &x_init, &u_init})
            a->reset(i);

        // initial profiles; the never-infected branch has gamma_0 = 1 from time 0
        const double never = (1.0 - p) * std::exp(-h.cumulative(i));
        x_init.add(never, 0, 0.0, false);
        u_init.add(never, 0, 0.0, false);
        if (p > 0) {
            for (const EtaNode& n : e.initial_rule().at(i)) {
                const double surv = p * n.w * std::exp(-h.exponent(true, i, n, 0));
                const auto m = static_cast<std::size_t>(n.cell);
                x_init.add(surv * waning_gain(th0, grid_.at(i) - n.x), m, n.frac, th0 > 0);
                u_init.add(surv, m, n.frac, th0 > 0);
            }
        }

        for (std::size_t j = 0; j <= i; ++j) {
            const double lag = grid_.at(i - j);
            const double w = trapezoid_weight(i, j, dt) * flln.sbar[j] * flln.fbar[j];
            double g = 0.0, ind = 0.0;
            for (const EtaNode& n : e.fresh_rule().at(i - j)) {
                const double surv = n.w * std::exp(-h.exponent(false, i, n, j));
                const double gain = waning_gain(th, lag - n.x);
                g += surv * gain;
                ind += surv;
                const std::size_t m = j + static_cast<std::size_t>(n.cell);
                x_fresh.add(w * surv * gain, m, n.frac, th > 0);
                u_fresh.add(w * surv, m, n.frac, th > 0);
            }
            gs[j] = g;
            is[j] = ind;
        }
        x_fresh.finish(cxf);
        u_fresh.finish(cuf);
        x_init.finish(cx0);
        u_init.finish(cu0);

        for (std::size_t l = 0; l <= i; ++l) {
            const double w = trapezoid_weight(i, l, dt);
            const double f = flln.fbar[l], s = flln.sbar[l];
            px_(i, l) = w * gs[l] * f;
            py_(i, l) = w * gs[l] * s - cx0[l] - cxf[l];
            qx_(i, l) = w * e.lambda_bar(i - l) * f;
            qy_(i, l) = w * e.lambda_bar(i - l) * s;
            ux_(i, l) = w * is[l] * f;
            uy_(i, l) = w * is[l] * s - cu0[l] - cuf[l];
            ix_(i, l) = w * e.survival(i - l) * f;
            iy_(i, l) = w * e.survival(i - l) * s;
        }
        h.commit(i);
    }
}

FluctuationSolver FluctuationSolver::from_tables(const ProfileLaw& law, const InitialLaw& init,
                                                 const LimitSolution& flln, FcltOptions options)
{
    const TimeGrid& grid = flln.grid;
    const std::size_t G = grid.size();
    if (G > kTripleTableMaxGrid)
        throw InvalidParameter("grid", "table route is limited to " + std::to_string(kTripleTableMaxGrid) + " points");
    const KernelEngine e(law, init, grid, options.kernel);
    const auto gs = eval_kernel(e, KernelKind::GammaSurv, flln.fbar);
    const auto is = eval_kernel(e, KernelKind::IndSurv, flln.fbar);
    const auto gp = eval_kernel(e, KernelKind::GammaPairSurv, flln.fbar);
    const auto ig = eval_kernel(e, KernelKind::IndGammaSurv, flln.fbar);
    const auto igp = eval_kernel(e, KernelKind::InitGammaPairSurv, flln.fbar);
    const auto iig = eval_kernel(e, KernelKind::InitIndGammaSurv, flln.fbar);

    FluctuationSolver out;
    out.allocate(grid);
    out.literal_ = options.corollary_literal;
    const double dt = grid.dt();
    for (std::size_t i = 0; i < G; ++i) {
        for (std::size_t l = 0; l <= i; ++l) {
            const double w = trapezoid_weight(i, l, dt);
            const double f = flln.fbar[l], s = flln.sbar[l];
            // double integral: outer trapezoid in s = t_j, inner trapezoid in r = t_l over [t_j, t_i]
            double dx = 0.0, du = 0.0;
            for (std::size_t j = 0; j <= l; ++j) {
                const double outer = trapezoid_weight(i, j, dt) * flln.sbar[j] * flln.fbar[j];
                const double inner = trapezoid_weight(i - j, l - j, dt);
                dx += outer * inner * gp(i, j, l);
                du += outer * inner * ig(i, j, l);
            }
            out.px_(i, l) = w * gs(i, l) * f;
            out.py_(i, l) = w * gs(i, l) * s - w * igp(i, l) - dx;
            out.qx_(i, l) = w * e.lambda_bar(i - l) * f;
            out.qy_(i, l) = w * e.lambda_bar(i - l) * s;
            out.ux_(i, l) = w * is(i, l) * f;
            out.uy_(i, l) = w * is(i, l) * s - w * iig(i, l) - du;
            out.ix_(i, l) = w * e.survival(i - l) * f;
            out.iy_(i, l) = w * e.survival(i - l) * s;
        }
    }
    return out;
}

void FluctuationSolver::check(const DriverSample& d) const
{
    const std::size_t G = grid_.size();
    if (d.jhat.size() != G || d.mhat.size() != G || d.jhat1.size() != G || d.mhat1.size() != G)
        throw InvalidParameter("driver", "grid mismatch: driver has " + std::to_string(d.size()) + " points, solver " +
                                             std::to_string(G));
}

FluctuationPath FluctuationSolver::solve(const DriverSample& d) const
{
    check(d);
    const std::size_t G = grid_.size();
    FluctuationPath out{std::vector<double>(G), std::vector<double>(G), std::vector<double>(G), std::vector<double>(G)};
    auto& x = out.shat;
    auto& y = out.fhat;
    const auto& jstar = literal_ ? d.jhat1 : d.jhat;
    for (std::size_t i = 0; i < G; ++i) {
        double rx = d.jhat[i], ry = d.mhat[i];
        for (std::size_t l = 0; l < i; ++l) {
            const double dev = x[l] - d.jhat[l];
            rx += px_(i, l) * dev + py_(i, l) * y[l];
            ry += qx_(i, l) * dev + qy_(i, l) * y[l];
        }
        rx -= px_(i, i) * d.jhat[i];
        ry -= qx_(i, i) * d.jhat[i];
        const double a = 1.0 - px_(i, i), b = -py_(i, i);
        const double c = -qx_(i, i), e = 1.0 - qy_(i, i);
        const double det = a * e - b * c;
        if (!(std::abs(det) > 1e-12))
            throw Error("fclt: singular step system at t = " + std::to_string(grid_.at(i)));
        x[i] = (rx * e - b * ry) / det;
        y[i] = (a * ry - c * rx) / det;

        double u = d.jhat1[i], in = d.mhat1[i];
        for (std::size_t l = 0; l <= i; ++l) {
            u += ux_(i, l) * (x[l] - jstar[l]) + uy_(i, l) * y[l];
            in += ix_(i, l) * (x[l] - d.jhat[l]) + iy_(i, l) * y[l];
        }
        out.uhat[i] = u;
        out.ihat[i] = in;
    }
    return out;
}

double FluctuationSolver::residual(const FluctuationPath& p, const DriverSample& d) const
{
    check(d);
    const auto& jstar = literal_ ? d.jhat1 : d.jhat;
    double worst = 0.0;
    for (std::size_t i = 0; i < grid_.size(); ++i) {
        double x = d.jhat[i], y = d.mhat[i], u = d.jhat1[i], in = d.mhat1[i];
        for (std::size_t l = 0; l <= i; ++l) {
            const double dev = p.shat[l] - d.jhat[l];
            x += px_(i, l) * dev + py_(i, l) * p.fhat[l];
            y += qx_(i, l) * dev + qy_(i, l) * p.fhat[l];
            u += ux_(i, l) * (p.shat[l] - jstar[l]) + uy_(i, l) * p.fhat[l];
            in += ix_(i, l) * dev + iy_(i, l) * p.fhat[l];
        }
        worst = std::max({worst, std::abs(x - p.shat[i]), std::abs(y - p.fhat[i]), std::abs(u - p.uhat[i]),
                          std::abs(in - p.ihat[i])});
    }
    return worst;
}

FluctuationPath solve_fluctuation_path(const DriverSample& driver, const LimitSolution& flln, const ProfileLaw& law,
                                       const InitialLaw& init, FcltOptions options)
{
    return FluctuationSolver(law, init, flln, options).solve(driver);
}

FluctuationPath solve_fluctuation_path_tables(const DriverSample& driver, const LimitSolution& flln,
                                              const ProfileLaw& law, const InitialLaw& init, FcltOptions options)
{
    return FluctuationSolver::from_tables(law, init, flln, options).solve(driver);
}

} // namespace epiwane
