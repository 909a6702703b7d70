#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "epiwane/config.hpp"
#include "epiwane/flln.hpp"
#include "epiwane/harness.hpp"
#include "epiwane/io.hpp"
#include "epiwane/simulator.hpp"

namespace py = pybind11;
using namespace epiwane;

namespace {

std::vector<double> times(const TimeGrid& grid)
{
    std::vector<double> t(grid.size());
    for (std::size_t i = 0; i < t.size(); ++i)
        t[i] = grid.at(i);
    return t;
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "epiwane core: simulation, limit equations and their checks";

    auto base = py::register_exception<Error>(m, "Error");
    py::register_exception<InvalidParameter>(m, "InvalidParameter", base.ptr());
    py::register_exception<ConvergenceError>(m, "ConvergenceError", base.ptr());

    m.def("canonical_config", [](const std::string& text) { return to_json_string(parse_config_string(text)); },
          py::arg("text"), "Parse a JSON config and return it with every default filled in.");

    m.def("fingerprint", [](const std::string& text) { return fingerprint(parse_config_string(text)); },
          py::arg("text"));

    m.def("solve_flln", [](const std::string& text) {
        const auto c = parse_config_string(text);
        LimitSolution s;
        {
            py::gil_scoped_release release;
            s = solve_flln(c.profile, c.initial, c.grid(), c.flln);
        }
        py::dict d;
        d["t"] = times(s.grid);
        d["sbar"] = s.sbar;
        d["fbar"] = s.fbar;
        d["ubar"] = s.ubar;
        d["ibar"] = s.ibar;
        d["iterations"] = s.iterations;
        d["residual"] = s.residual;
        return d;
    }, py::arg("text"), "Limit averages on the config grid.");

    m.def("simulate", [](const std::string& text, std::size_t n, std::uint64_t seed) {
        const auto c = parse_config_string(text);
        Trajectory tr;
        {
            py::gil_scoped_release release;
            tr = simulate_population(c.initial, c.profile, n, c.grid(), seed, c.simulation());
        }
        py::dict d;
        d["t"] = times(tr.grid);
        d["fbar"] = tr.fbar;
        d["sbar"] = tr.sbar;
        d["infected"] = tr.infected;
        d["uninfected"] = tr.uninfected;
        d["events"] = tr.events.size();
        return d;
    }, py::arg("text"), py::arg("n"), py::arg("seed"), "One population run of size n.");

    m.def("markovian_ode", [](double lambda, double mu, double i0, double dt, double horizon) {
        return solve_markovian_ode(lambda, mu, i0, TimeGrid(dt, horizon));
    }, py::arg("lambda_"), py::arg("mu"), py::arg("i0"), py::arg("dt"), py::arg("horizon"));

    m.def("run", [](const std::string& command, const std::string& text, std::optional<std::filesystem::path> out,
                    std::optional<std::uint64_t> seed, std::size_t threads) {
        const auto c = parse_config_string(text);
        RunResult r;
        {
            py::gil_scoped_release release;
            r = run_subcommand(command, c, {out, seed, threads});
        }
        std::vector<std::string> files;
        for (const auto& p : r.artifacts)
            files.push_back(p.string());
        std::optional<std::string> report;
        if (r.report)
            report = report_to_json(*r.report, {fingerprint(c), seed.value_or(c.seed)});
        return py::make_tuple(r.exit_code, files, report);
    }, py::arg("command"), py::arg("text"), py::arg("out") = py::none(), py::arg("seed") = py::none(),
       py::arg("threads") = 1, "Run a subcommand; returns (exit code, artifact paths, report JSON or None).");

    m.attr("subcommands") = kSubcommands;
}
