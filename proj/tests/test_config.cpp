#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <string>

#include <doctest.h>
#include <json.hpp>

#include "epiwane/config.hpp"
#include "epiwane/io.hpp"

using namespace epiwane;

namespace {

const char* kMinimal = R"({
  "profile": {"family": "sis_indicator", "lambda_base": 2.0, "duration": {"law": "exponential", "rate": 1.0}},
  "initial": {"p_infected": 0.1}
})";

std::string field_of(const std::string& text)
{
    try {
        parse_config_string(text);
    }
    catch (const InvalidParameter& e) {
        return e.field();
    }
    return "";
}

std::string edit(const std::string& text, const std::function<void(nlohmann::json&)>& f)
{
    auto j = nlohmann::json::parse(text);
    f(j);
    return j.dump();
}

std::filesystem::path scratch(const std::string& name)
{
    const auto dir = std::filesystem::temp_directory_path() / "epiwane_test_config";
    std::filesystem::create_directories(dir);
    return dir / name;
}

} // namespace

TEST_SUITE("config") {

TEST_CASE("defaults")
{
    const auto c = parse_config_string(kMinimal);
    CHECK(c.dt == 0.01);
    CHECK(c.flln.tol == 1e-10);
    CHECK(c.horizon == 20.0);
    CHECK(c.assignment == InitialAssignment::Deterministic);
    CHECK(c.profile.lambda_star() == 2.0);
    CHECK(c.initial.p_infected == 0.1);
    CHECK_FALSE(c.verify.flln.has_value());
}

TEST_CASE("errors name the offending field")
{
    CHECK(field_of(edit(kMinimal, [](auto& j) { j["profile"]["lambda_base"] = -1.0; })) == "profile.lambda_base");
    CHECK(field_of(edit(kMinimal, [](auto& j) { j["profile"]["duration"]["rate"] = 0.0; })) == "profile.duration.rate");
    CHECK(field_of(edit(kMinimal, [](auto& j) { j["horizon_days"] = 3; })) == "horizon_days");
    CHECK(field_of(edit(kMinimal, [](auto& j) { j["fclt"] = {{"agentz", 5}}; })) == "fclt.agentz");
    CHECK(field_of(edit(kMinimal, [](auto& j) { j["initial"]["p_infected"] = 1.5; })) == "initial.p_infected");
    CHECK(field_of(edit(kMinimal, [](auto& j) { j["dt"] = 0.3; })) == "dt");
    CHECK(field_of(edit(kMinimal, [](auto& j) { j["dt"] = "small"; })) == "dt");
    CHECK(field_of(edit(kMinimal, [](auto& j) { j["population_sizes"] = {100, 0}; })) == "population_sizes[1]");
    CHECK(field_of(edit(kMinimal, [](auto& j) { j["fclt"] = {{"dt", 0.001}}; })) == "fclt.dt");
    CHECK(field_of(edit(kMinimal, [](auto& j) { j["profile"]["duration"]["law"] = "weibull"; })) ==
          "profile.duration.law");
    CHECK(field_of(edit(kMinimal, [](auto& j) { j.erase("profile"); })) == "profile");
    CHECK(field_of("{ not json") == "<root>");
}

TEST_CASE("canonical form round trips")
{
    const std::string text = edit(kMinimal, [](auto& j) {
        j["profile"] = {{"family", "piecewise_constant"},
                        {"waning_rate", 0.4},
                        {"segments",
                         {{{"level", 3.0}, {"duration", {{"law", "exponential"}, {"rate", 3.0}}}},
                          {{"level", 1.0}, {"duration", {{"law", "gamma"}, {"shape", 2.0}, {"scale", 0.5}}}}}}};
        j["fclt"] = {{"probes", {1.0, 2.0}}, {"corollary_literal", true}};
        j["verify"] = {{"flln", nlohmann::json::object()}, {"quarantine", {{"quarantined", {0, 3}}}}};
    });
    const auto a = parse_config_string(text);
    const auto canon = to_json_string(a);
    const auto b = parse_config_string(canon);
    CHECK(to_json_string(b) == canon);
    CHECK(b.profile == a.profile);
    CHECK(b.fclt.probes == a.fclt.probes);
    CHECK(b.fclt.corollary_literal);
    REQUIRE(b.verify.quarantine.has_value());
    CHECK(b.verify.quarantine->quarantined == std::vector<std::uint32_t>{0, 3});
}

TEST_CASE("fingerprint ignores seed and output directory only")
{
    const auto a = parse_config_string(kMinimal);
    const auto fp = fingerprint(a);
    CHECK(fp.size() == 16);
    CHECK(fp.find_first_not_of("0123456789abcdef") == std::string::npos);
    CHECK(fingerprint(parse_config_string(edit(kMinimal, [](auto& j) { j["seed"] = 99; }))) == fp);
    CHECK(fingerprint(parse_config_string(edit(kMinimal, [](auto& j) { j["output_dir"] = "elsewhere"; }))) == fp);
    CHECK(fingerprint(parse_config_string(edit(kMinimal, [](auto& j) { j["dt"] = 0.02; }))) != fp);
    // an explicit default is the same experiment
    CHECK(fingerprint(parse_config_string(edit(kMinimal, [](auto& j) { j["dt"] = 0.01; }))) == fp);
}

TEST_CASE("shipped configs parse")
{
    for (const char* name : {"reference_sis.json", "quick_sis.json", "gradual_gamma.json"}) {
        CAPTURE(name);
        CHECK_NOTHROW(parse_config(std::filesystem::path(EPIWANE_SOURCE_DIR) / "configs" / name));
    }
}

TEST_CASE("number formatting reads back exactly")
{
    for (double x : {0.1, 1.0 / 3, 2e-300, -7.25, 123456789.125, 0.0}) {
        CHECK(std::stod(format_double(x)) == x);
    }
    CHECK(format_double(0.5) == "0.5");
    CHECK(format_double(std::numeric_limits<double>::quiet_NaN()) == "nan");
}

TEST_CASE("artifacts round trip")
{
    const ArtifactTag tag{"0123456789abcdef", 42};
    const TimeGrid grid(0.5, 2.0);

    ModelEnsemble m;
    m.grid = grid;
    m.samples = 3;
    for (std::size_t q = 0; q < 4; ++q)
        for (std::size_t s = 0; s < 3; ++s)
            for (std::size_t g = 0; g < grid.size(); ++g)
                m.paths[q].push_back(std::sin(1.0 + q + 7.0 * s + 0.3 * g) / 3);
    const auto fl = scratch("fluctuations.csv");
    write_fluctuations_csv(fl, m, tag);
    ArtifactTag back;
    const auto m2 = read_fluctuations_csv(fl, &back);
    CHECK(back == tag);
    CHECK(read_tag(fl) == tag);
    CHECK(m2.grid == grid);
    CHECK(m2.samples == 3);
    for (std::size_t q = 0; q < 4; ++q)
        CHECK(m2.paths[q] == m.paths[q]);

    EnsembleSummary e;
    e.n = 250;
    e.replicates = 3;
    e.grid = grid;
    e.hat_samples = m.paths;
    const auto es = scratch("samples.csv");
    write_ensemble_samples_csv(es, e, tag);
    const auto e2 = read_ensemble_samples_csv(es);
    CHECK(e2.n == 250);
    CHECK(e2.replicates == 3);
    CHECK(e2.grid == grid);
    for (std::size_t q = 0; q < 4; ++q)
        CHECK(e2.hat_samples[q] == e.hat_samples[q]);

    ComparisonReport rep;
    rep.metrics.push_back({"x", 1.0, 1.1, 0.2, true, "FLLN"});
    rep.rate_fit = RateFit{-0.5, 0.1, 0.99};
    rep.ks.push_back({"fhat(t=2)", 2.0, 0.04, 0.7, 500, 2000});
    const auto j = nlohmann::json::parse(report_to_json(rep, tag));
    CHECK(j["fingerprint"] == tag.fingerprint);
    CHECK(j["seed"] == 42);
    CHECK(j["passed"] == true);
    CHECK(j["metrics"][0]["value"] == 1.1);
    CHECK(j["metrics"][0]["paper_ref"] == "FLLN");
    CHECK(j["rate_fit"]["slope"] == -0.5);
    CHECK(j["ks"][0]["p_value"] == 0.7);

    const auto plain = scratch("plain.csv");
    std::ofstream(plain) << "t,x\n0,1\n";
    CHECK_THROWS_AS(read_tag(plain), InvalidParameter);
}

} // TEST_SUITE
