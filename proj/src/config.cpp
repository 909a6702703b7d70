#include "epiwane/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "epiwane/error.hpp"
#include "epiwane/fclt.hpp"

namespace epiwane {

using json = nlohmann::json;

namespace {

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

// Strict view of one JSON object: every key must be consumed.
class Reader {
public:
    Reader(const json& j, std::string path)
        : j_(j)
        , path_(std::move(path))
    {
        if (!j.is_object())
            throw InvalidParameter(path_.empty() ? "<root>" : path_, "expected an object");
    }

    bool has(const std::string& key) const { return j_.contains(key); }
    std::string field(const std::string& key) const { return join(path_, key); }

    const json* raw(const std::string& key)
    {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    std::optional<double> number(const std::string& key)
    {
        const json* v = raw(key);
        if (!v)
            return std::nullopt;
        if (!v->is_number())
            throw InvalidParameter(field(key), "expected a number");
        return v->get<double>();
    }

    double number(const std::string& key, double fallback) { return number(key).value_or(fallback); }

    double required_number(const std::string& key)
    {
        auto v = number(key);
        if (!v)
            throw InvalidParameter(field(key), "required");
        return *v;
    }

    std::optional<std::uint64_t> count(const std::string& key)
    {
        const json* v = raw(key);
        if (!v)
            return std::nullopt;
        if (v->is_number_unsigned())
            return v->get<std::uint64_t>();
        if (v->is_number_integer() && v->get<std::int64_t>() >= 0)
            return static_cast<std::uint64_t>(v->get<std::int64_t>());
        throw InvalidParameter(field(key), "expected a nonnegative integer");
    }

    std::size_t count(const std::string& key, std::size_t fallback)
    {
        return static_cast<std::size_t>(count(key).value_or(fallback));
    }

    std::optional<bool> boolean(const std::string& key)
    {
        const json* v = raw(key);
        if (!v)
            return std::nullopt;
        if (!v->is_boolean())
            throw InvalidParameter(field(key), "expected true or false");
        return v->get<bool>();
    }

    std::optional<std::string> string(const std::string& key)
    {
        const json* v = raw(key);
        if (!v)
            return std::nullopt;
        if (!v->is_string())
            throw InvalidParameter(field(key), "expected a string");
        return v->get<std::string>();
    }

    std::optional<std::vector<double>> numbers(const std::string& key)
    {
        const json* v = raw(key);
        if (!v)
            return std::nullopt;
        if (!v->is_array())
            throw InvalidParameter(field(key), "expected an array of numbers");
        std::vector<double> out;
        for (std::size_t i = 0; i < v->size(); ++i) {
            if (!(*v)[i].is_number())
                throw InvalidParameter(field(key) + "[" + std::to_string(i) + "]", "expected a number");
            out.push_back((*v)[i].get<double>());
        }
        return out;
    }

    std::optional<std::vector<std::uint64_t>> counts(const std::string& key)
    {
        auto v = numbers(key);
        if (!v)
            return std::nullopt;
        std::vector<std::uint64_t> out;
        for (std::size_t i = 0; i < v->size(); ++i) {
            const double x = (*v)[i];
            if (!(x >= 0) || x != std::floor(x) || x > 1e15)
                throw InvalidParameter(field(key) + "[" + std::to_string(i) + "]", "expected a nonnegative integer");
            out.push_back(static_cast<std::uint64_t>(x));
        }
        return out;
    }

    std::optional<Reader> object(const std::string& key)
    {
        const json* v = raw(key);
        if (!v)
            return std::nullopt;
        return Reader(*v, field(key));
    }

    void finish() const
    {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key()))
                throw InvalidParameter(field(it.key()), "unknown field");
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

DurationLaw read_duration(Reader r)
{
    const auto law = r.string("law");
    if (!law)
        throw InvalidParameter(r.field("law"), "required (exponential, deterministic or gamma)");
    DurationLaw out;
    if (*law == "exponential")
        out = Exponential{r.required_number("rate")};
    else if (*law == "deterministic")
        out = Deterministic{r.required_number("value")};
    else if (*law == "gamma")
        out = GammaLaw{r.required_number("shape"), r.required_number("scale")};
    else
        throw InvalidParameter(r.field("law"), "unknown law '" + *law + "' (expected exponential, deterministic or gamma)");
    r.finish();
    return out;
}

json write_duration(const DurationLaw& d)
{
    if (auto* e = std::get_if<Exponential>(&d))
        return {{"law", "exponential"}, {"rate", e->rate}};
    if (auto* e = std::get_if<Deterministic>(&d))
        return {{"law", "deterministic"}, {"value", e->value}};
    const auto& g = std::get<GammaLaw>(d);
    return {{"law", "gamma"}, {"shape", g.shape}, {"scale", g.scale}};
}

ProfileLaw read_profile(Reader r, const std::string& path)
{
    const auto family_name = r.string("family");
    if (!family_name)
        throw InvalidParameter(r.field("family"), "required");
    Family family;
    try {
        family = family_from_string(*family_name);
    }
    catch (const InvalidParameter& e) {
        throw e.prefixed(path);
    }
    const auto lambda_star = r.number("lambda_star");
    const double waning = r.number("waning_rate", 0.0);
    try {
        if (family == Family::PiecewiseConstant) {
            const json* segs = r.raw("segments");
            if (!segs || !segs->is_array())
                throw InvalidParameter("segments", "required: array of {level, duration}");
            std::vector<Segment> segments;
            for (std::size_t i = 0; i < segs->size(); ++i) {
                const std::string f = r.field("segments[" + std::to_string(i) + "]");
                Reader s((*segs)[i], f);
                Segment seg;
                seg.level = s.required_number("level");
                auto d = s.object("duration");
                if (!d)
                    throw InvalidParameter(f + ".duration", "required");
                seg.duration = read_duration(*d);
                s.finish();
                segments.push_back(seg);
            }
            r.finish();
            return ProfileLaw::piecewise_constant(std::move(segments), waning, lambda_star);
        }
        const double lambda = r.required_number("lambda_base");
        auto d = r.object("duration");
        if (!d)
            throw InvalidParameter(r.field("duration"), "required");
        const DurationLaw duration = read_duration(*d);
        r.finish();
        if (family == Family::SisGradual)
            return ProfileLaw::sis_gradual(lambda, duration, waning, lambda_star);
        return ProfileLaw::sis_indicator(lambda, duration, lambda_star);
    }
    catch (const InvalidParameter& e) {
        // fields already carrying the path are passed through
        if (e.field().rfind(path + ".", 0) == 0)
            throw;
        throw e.prefixed(path);
    }
}

json write_profile(const ProfileLaw& p)
{
    json j{{"family", to_string(p.family())}, {"lambda_star", p.lambda_star()}};
    if (p.family() == Family::PiecewiseConstant) {
        json segs = json::array();
        for (const auto& s : p.segments())
            segs.push_back({{"level", s.level}, {"duration", write_duration(s.duration)}});
        j["segments"] = segs;
        j["waning_rate"] = p.waning_rate();
    }
    else {
        j["lambda_base"] = p.lambda_base();
        j["duration"] = write_duration(p.duration());
        if (p.family() == Family::SisGradual)
            j["waning_rate"] = p.waning_rate();
    }
    return j;
}

std::vector<std::size_t> to_sizes(const std::vector<std::uint64_t>& v)
{
    return {v.begin(), v.end()};
}

void require_positive(double x, const std::string& field)
{
    if (!(x > 0) || !std::isfinite(x))
        throw InvalidParameter(field, "must be positive");
}

} // namespace

ExperimentConfig parse_config_string(const std::string& text)
{
    json root;
    try {
        root = json::parse(text);
    }
    catch (const json::parse_error& e) {
        throw InvalidParameter("<root>", std::string("malformed JSON: ") + e.what());
    }
    Reader r(root, "");
    ExperimentConfig c;

    auto prof = r.object("profile");
    if (!prof)
        throw InvalidParameter("profile", "required");
    c.profile = read_profile(*prof, "profile");

    double p = 0.0;
    std::optional<ProfileLaw> initial_profile;
    if (auto ini = r.object("initial")) {
        p = ini->number("p_infected", 0.0);
        if (!(p >= 0 && p <= 1))
            throw InvalidParameter("initial.p_infected", "must lie in [0, 1]");
        if (auto ip = ini->object("profile"))
            initial_profile = read_profile(*ip, "initial.profile");
        if (auto a = ini->string("assignment")) {
            if (*a == "deterministic")
                c.assignment = InitialAssignment::Deterministic;
            else if (*a == "bernoulli")
                c.assignment = InitialAssignment::Bernoulli;
            else
                throw InvalidParameter("initial.assignment", "expected deterministic or bernoulli");
        }
        ini->finish();
    }
    c.initial_profile_given = initial_profile.has_value();
    c.initial = InitialLaw::from(p, initial_profile.value_or(c.profile));

    c.horizon = r.number("horizon", c.horizon);
    require_positive(c.horizon, "horizon");
    c.dt = r.number("dt", c.dt);
    require_positive(c.dt, "dt");
    if (auto v = r.counts("population_sizes")) {
        if (v->empty())
            throw InvalidParameter("population_sizes", "must not be empty");
        for (std::size_t i = 0; i < v->size(); ++i)
            if ((*v)[i] == 0)
                throw InvalidParameter("population_sizes[" + std::to_string(i) + "]", "must be at least 1");
        c.population_sizes = to_sizes(*v);
    }
    c.replicates = r.count("replicates", c.replicates);
    if (c.replicates == 0)
        throw InvalidParameter("replicates", "must be at least 1");
    c.seed = r.count("seed").value_or(c.seed);

    if (auto f = r.object("flln")) {
        c.flln.tol = f->number("tol", c.flln.tol);
        require_positive(c.flln.tol, "flln.tol");
        c.flln.max_iter = f->count("max_iter", c.flln.max_iter);
        if (c.flln.max_iter == 0)
            throw InvalidParameter("flln.max_iter", "must be at least 1");
        f->finish();
    }
    if (auto k = r.object("kernel")) {
        c.flln.kernel.gl_points = k->count("gl_points", c.flln.kernel.gl_points);
        if (c.flln.kernel.gl_points < 2 || c.flln.kernel.gl_points > 200)
            throw InvalidParameter("kernel.gl_points", "must lie in [2, 200]");
        c.flln.kernel.tail_quantile = k->number("tail_quantile", c.flln.kernel.tail_quantile);
        if (!(c.flln.kernel.tail_quantile > 0.5 && c.flln.kernel.tail_quantile < 1))
            throw InvalidParameter("kernel.tail_quantile", "must lie in (0.5, 1)");
        c.flln.kernel.mc_samples = k->count("mc_samples", c.flln.kernel.mc_samples);
        if (c.flln.kernel.mc_samples < 16)
            throw InvalidParameter("kernel.mc_samples", "must be at least 16");
        c.flln.kernel.mc_seed = k->count("mc_seed").value_or(c.flln.kernel.mc_seed);
        k->finish();
    }
    if (auto f = r.object("fclt")) {
        c.fclt.dt = f->number("dt", c.fclt.dt);
        require_positive(c.fclt.dt, "fclt.dt");
        c.fclt.agents = f->count("agents", c.fclt.agents);
        if (c.fclt.agents < 100)
            throw InvalidParameter("fclt.agents", "need at least 100 agents");
        c.fclt.driver_samples = f->count("driver_samples", c.fclt.driver_samples);
        if (c.fclt.driver_samples < 2)
            throw InvalidParameter("fclt.driver_samples", "need at least 2 samples");
        c.fclt.corollary_literal = f->boolean("corollary_literal").value_or(false);
        c.fclt.probes = f->numbers("probes").value_or(std::vector<double>{});
        for (std::size_t i = 0; i < c.fclt.probes.size(); ++i)
            if (!(c.fclt.probes[i] >= 0 && c.fclt.probes[i] <= c.horizon))
                throw InvalidParameter("fclt.probes[" + std::to_string(i) + "]", "must lie in [0, horizon]");
        c.fclt.variance_tol = f->number("variance_tol", c.fclt.variance_tol);
        require_positive(c.fclt.variance_tol, "fclt.variance_tol");
        f->finish();
    }
    if (auto s = r.object("simulation")) {
        c.candidate_cap = s->number("candidate_cap", c.candidate_cap);
        require_positive(c.candidate_cap, "simulation.candidate_cap");
        s->finish();
    }
    if (auto v = r.object("verify")) {
        if (auto s = v->object("flln")) {
            FllnCheck x;
            x.lambda = s->number("lambda", x.lambda);
            x.mu = s->number("mu", x.mu);
            x.tol = s->number("tol", x.tol);
            x.endemic_tol = s->number("endemic_tol", x.endemic_tol);
            require_positive(x.lambda, "verify.flln.lambda");
            require_positive(x.mu, "verify.flln.mu");
            s->finish();
            c.verify.flln = x;
        }
        if (auto s = v->object("rate")) {
            RateCheck x;
            if (auto n = s->counts("population_sizes"))
                x.population_sizes = to_sizes(*n);
            x.replicates = s->count("replicates", x.replicates);
            x.t = s->number("t", x.t);
            x.slope_min = s->number("slope_min", x.slope_min);
            x.slope_max = s->number("slope_max", x.slope_max);
            if (x.population_sizes.size() < 3)
                throw InvalidParameter("verify.rate.population_sizes", "need at least 3 sizes");
            if (x.replicates < 2)
                throw InvalidParameter("verify.rate.replicates", "need at least 2 replicates");
            s->finish();
            c.verify.rate = x;
        }
        if (auto s = v->object("fclt")) {
            FcltCheck x;
            x.horizon = s->number("horizon", x.horizon);
            require_positive(x.horizon, "verify.fclt.horizon");
            x.n = s->count("n", x.n);
            x.replicates = s->count("replicates", x.replicates);
            if (auto pr = s->numbers("probes"))
                x.probes = *pr;
            if (x.n == 0)
                throw InvalidParameter("verify.fclt.n", "must be at least 1");
            if (x.replicates < 2)
                throw InvalidParameter("verify.fclt.replicates", "need at least 2 replicates");
            s->finish();
            c.verify.fclt = x;
        }
        if (auto s = v->object("survival")) {
            SurvivalCheck x;
            x.replicates = s->count("replicates", x.replicates);
            if (x.replicates < 100)
                throw InvalidParameter("verify.survival.replicates", "need at least 100 replicates");
            s->finish();
            c.verify.survival = x;
        }
        if (auto s = v->object("coupling")) {
            CouplingCheck x;
            x.n = s->count("n", x.n);
            x.replicates = s->count("replicates", x.replicates);
            x.horizon = s->number("horizon");
            if (x.n == 0 || x.replicates == 0)
                throw InvalidParameter("verify.coupling", "n and replicates must be positive");
            s->finish();
            c.verify.coupling = x;
        }
        if (auto s = v->object("quarantine")) {
            QuarantineCheck x;
            x.n = s->count("n", x.n);
            x.replicates = s->count("replicates", x.replicates);
            if (auto q = s->counts("quarantined")) {
                x.quarantined.clear();
                for (auto k : *q)
                    x.quarantined.push_back(static_cast<std::uint32_t>(k));
            }
            x.horizon = s->number("horizon");
            if (x.quarantined.empty() || x.quarantined.size() > 2)
                throw InvalidParameter("verify.quarantine.quarantined", "one or two indices");
            for (auto k : x.quarantined)
                if (k >= x.n)
                    throw InvalidParameter("verify.quarantine.quarantined", "index out of range");
            s->finish();
            c.verify.quarantine = x;
        }
        if (auto s = v->object("solver")) {
            SolverCheck x;
            x.dt = s->number("dt", x.dt);
            x.horizon = s->number("horizon", x.horizon);
            require_positive(x.dt, "verify.solver.dt");
            require_positive(x.horizon, "verify.solver.horizon");
            s->finish();
            c.verify.solver = x;
        }
        if (auto s = v->object("covariance")) {
            CovarianceCheck x;
            x.agents = s->count("agents", x.agents);
            if (x.agents < 100)
                throw InvalidParameter("verify.covariance.agents", "need at least 100 agents");
            s->finish();
            c.verify.covariance = x;
        }
        v->finish();
    }
    if (auto o = r.string("output_dir"))
        c.output_dir = *o;
    r.finish();

    const double lstar = thinning_bound(c.profile, c.initial);
    if (!(c.dt * lstar < 0.5))
        throw InvalidParameter("dt", "dt * lambda_star must be below 0.5 (got " + std::to_string(c.dt * lstar) + ")");
    if (c.dt > c.horizon)
        throw InvalidParameter("dt", "must not exceed the horizon");
    if (4 * TimeGrid(c.fclt.dt, c.horizon).size() > kMaxCovarianceDim)
        throw InvalidParameter("fclt.dt", "too fine for the covariance model (4 G must not exceed " +
                                              std::to_string(kMaxCovarianceDim) + ")");
    return c;
}

ExperimentConfig parse_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw InvalidParameter("config", "cannot open " + path.string());
    std::stringstream s;
    s << in.rdbuf();
    return parse_config_string(s.str());
}

namespace {

json to_json(const ExperimentConfig& c)
{
    json j;
    j["profile"] = write_profile(c.profile);
    json ini{{"p_infected", c.initial.p_infected},
             {"assignment", c.assignment == InitialAssignment::Bernoulli ? "bernoulli" : "deterministic"}};
    if (c.initial_profile_given)
        ini["profile"] = write_profile(c.initial.infected_profile);
    j["initial"] = ini;
    j["horizon"] = c.horizon;
    j["dt"] = c.dt;
    j["population_sizes"] = c.population_sizes;
    j["replicates"] = c.replicates;
    j["seed"] = c.seed;
    j["flln"] = {{"tol", c.flln.tol}, {"max_iter", c.flln.max_iter}};
    j["kernel"] = {{"gl_points", c.flln.kernel.gl_points},
                   {"tail_quantile", c.flln.kernel.tail_quantile},
                   {"mc_samples", c.flln.kernel.mc_samples},
                   {"mc_seed", c.flln.kernel.mc_seed}};
    j["fclt"] = {{"dt", c.fclt.dt},
                 {"agents", c.fclt.agents},
                 {"driver_samples", c.fclt.driver_samples},
                 {"corollary_literal", c.fclt.corollary_literal},
                 {"probes", c.fclt.probes},
                 {"variance_tol", c.fclt.variance_tol}};
    j["simulation"] = {{"candidate_cap", c.candidate_cap}};
    json v = json::object();
    if (const auto& x = c.verify.flln)
        v["flln"] = {{"lambda", x->lambda}, {"mu", x->mu}, {"tol", x->tol}, {"endemic_tol", x->endemic_tol}};
    if (const auto& x = c.verify.rate)
        v["rate"] = {{"population_sizes", x->population_sizes},
                     {"replicates", x->replicates},
                     {"t", x->t},
                     {"slope_min", x->slope_min},
                     {"slope_max", x->slope_max}};
    if (const auto& x = c.verify.fclt)
        v["fclt"] = {{"horizon", x->horizon}, {"n", x->n}, {"replicates", x->replicates}, {"probes", x->probes}};
    if (const auto& x = c.verify.survival)
        v["survival"] = {{"replicates", x->replicates}};
    if (const auto& x = c.verify.coupling) {
        v["coupling"] = {{"n", x->n}, {"replicates", x->replicates}};
        if (x->horizon)
            v["coupling"]["horizon"] = *x->horizon;
    }
    if (const auto& x = c.verify.quarantine) {
        v["quarantine"] = {{"n", x->n}, {"replicates", x->replicates}, {"quarantined", x->quarantined}};
        if (x->horizon)
            v["quarantine"]["horizon"] = *x->horizon;
    }
    if (const auto& x = c.verify.solver)
        v["solver"] = {{"dt", x->dt}, {"horizon", x->horizon}};
    if (const auto& x = c.verify.covariance)
        v["covariance"] = {{"agents", x->agents}};
    if (!v.empty())
        j["verify"] = v;
    j["output_dir"] = c.output_dir;
    return j;
}

} // namespace

std::string to_json_string(const ExperimentConfig& config) { return to_json(config).dump(2); }

std::string fingerprint(const ExperimentConfig& config)
{
    json j = to_json(config);
    j.erase("seed");
    j.erase("output_dir");
    const std::string text = j.dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

} // namespace epiwane
