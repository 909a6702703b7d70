#include "epiwane/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "epiwane/error.hpp"

namespace epiwane {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string format_double(double x)
{
    if (std::isnan(x))
        return "nan";
    if (std::isinf(x))
        return x > 0 ? "inf" : "-inf";
    char buf[32];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, end);
}

namespace {

class CsvWriter {
public:
    CsvWriter(const fs::path& path, const ArtifactTag& tag)
        : path_(path)
    {
        out_ += "# epiwane fingerprint=" + tag.fingerprint + " seed=" + std::to_string(tag.seed) + "\n";
    }

    CsvWriter& raw(const std::string& s)
    {
        out_ += s;
        return *this;
    }
    CsvWriter& num(double x)
    {
        sep();
        out_ += format_double(x);
        return *this;
    }
    CsvWriter& integer(long long x)
    {
        sep();
        out_ += std::to_string(x);
        return *this;
    }
    void end()
    {
        out_ += '\n';
        first_ = true;
    }

    ~CsvWriter() noexcept(false)
    {
        if (std::uncaught_exceptions())
            return;
        if (path_.has_parent_path())
            fs::create_directories(path_.parent_path());
        std::ofstream f(path_, std::ios::binary);
        f << out_;
        if (!f)
            throw Error("cannot write " + path_.string());
    }

private:
    void sep()
    {
        if (!first_)
            out_ += ',';
        first_ = false;
    }

    fs::path path_;
    std::string out_;
    bool first_ = true;
};

void write_text(const fs::path& path, const std::string& text)
{
    if (path.has_parent_path())
        fs::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    f << text;
    if (!f)
        throw Error("cannot write " + path.string());
}

json number_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

} // namespace

void write_trajectory_csv(const fs::path& path, const Trajectory& traj, const ArtifactTag& tag)
{
    CsvWriter w(path, tag);
    w.raw("t,fbar,sbar,I,U\n");
    for (std::size_t g = 0; g < traj.grid.size(); ++g) {
        w.num(traj.grid.at(g)).num(traj.fbar[g]).num(traj.sbar[g]).integer(traj.infected[g]).integer(traj.uninfected[g]);
        w.end();
    }
}

void write_events_csv(const fs::path& path, const Trajectory& traj, const ArtifactTag& tag)
{
    CsvWriter w(path, tag);
    w.raw("t,k,i\n");
    for (const Event& e : traj.events) {
        w.num(e.t).integer(e.k).integer(e.i);
        w.end();
    }
}

void write_flln_csv(const fs::path& path, const LimitSolution& sol, const ArtifactTag& tag)
{
    CsvWriter w(path, tag);
    w.raw("t,sbar,fbar,ubar,ibar\n");
    for (std::size_t g = 0; g < sol.grid.size(); ++g) {
        w.num(sol.grid.at(g)).num(sol.sbar[g]).num(sol.fbar[g]).num(sol.ubar[g]).num(sol.ibar[g]);
        w.end();
    }
}

void write_flln_report(const fs::path& path, const LimitSolution& sol, const ArtifactTag& tag)
{
    json j{{"fingerprint", tag.fingerprint},
           {"seed", tag.seed},
           {"dt", sol.grid.dt()},
           {"horizon", sol.grid.horizon()},
           {"iterations", sol.iterations},
           {"residual", sol.residual},
           {"tol", sol.tol}};
    write_text(path, j.dump(2) + "\n");
}

void write_covariance_csv(const fs::path& path, const CovarianceModel& cov, const ArtifactTag& tag)
{
    CsvWriter w(path, tag);
    w.raw("# dt=" + format_double(cov.grid.dt()) + " points=" + std::to_string(cov.grid.size()) +
          " agents=" + std::to_string(cov.samples) + "\n");
    w.raw("a,b,cov,se\n");
    for (std::size_t a = 0; a < cov.dim(); ++a)
        for (std::size_t b = 0; b <= a; ++b) {
            w.integer(static_cast<long long>(a)).integer(static_cast<long long>(b)).num(cov.at(a, b)).num(cov.se(a, b));
            w.end();
        }
}

void write_fluctuations_csv(const fs::path& path, const ModelEnsemble& model, const ArtifactTag& tag)
{
    CsvWriter w(path, tag);
    w.raw("sample,t,shat,fhat,uhat,ihat\n");
    for (std::size_t s = 0; s < model.samples; ++s)
        for (std::size_t g = 0; g < model.grid.size(); ++g) {
            w.integer(static_cast<long long>(s)).num(model.grid.at(g));
            w.num(model.at(kS, s, g)).num(model.at(kF, s, g)).num(model.at(kU, s, g)).num(model.at(kI, s, g));
            w.end();
        }
}

void write_ensemble_csv(const fs::path& path, const EnsembleSummary& e, const ArtifactTag& tag)
{
    CsvWriter w(path, tag);
    w.raw("# n=" + std::to_string(e.n) + " replicates=" + std::to_string(e.replicates) + "\n");
    w.raw("t");
    for (auto* name : kObservableNames)
        w.raw(std::string(",") + name + "_mean," + name + "_var");
    for (auto* name : kHatNames)
        w.raw(std::string(",") + name + "_mean," + name + "_var");
    w.raw("\n");
    for (std::size_t g = 0; g < e.grid.size(); ++g) {
        w.num(e.grid.at(g));
        for (std::size_t q = 0; q < 4; ++q)
            w.num(e.mean[q][g]).num(e.var[q][g]);
        for (std::size_t q = 0; q < 4; ++q)
            w.num(e.hat_mean[q][g]).num(e.hat_var[q][g]);
        w.end();
    }
}

void write_ensemble_samples_csv(const fs::path& path, const EnsembleSummary& e, const ArtifactTag& tag)
{
    CsvWriter w(path, tag);
    w.raw("# n=" + std::to_string(e.n) + " replicates=" + std::to_string(e.replicates) + "\n");
    w.raw("replicate,t,shat,fhat,uhat,ihat\n");
    for (std::size_t r = 0; r < e.replicates; ++r)
        for (std::size_t g = 0; g < e.grid.size(); ++g) {
            w.integer(static_cast<long long>(r)).num(e.grid.at(g));
            w.num(e.hat(kS, r, g)).num(e.hat(kF, r, g)).num(e.hat(kU, r, g)).num(e.hat(kI, r, g));
            w.end();
        }
}

std::string report_to_json(const ComparisonReport& report, const ArtifactTag& tag)
{
    json metrics = json::array();
    for (const Metric& m : report.metrics)
        metrics.push_back({{"name", m.name},
                           {"target", number_or_null(m.target)},
                           {"value", number_or_null(m.value)},
                           {"tol", number_or_null(m.tol)},
                           {"pass", m.pass},
                           {"paper_ref", m.paper_ref}});
    json ks = json::array();
    for (const KsRecord& k : report.ks)
        ks.push_back({{"name", k.name},
                      {"t", k.t},
                      {"statistic", k.statistic},
                      {"p_value", k.p_value},
                      {"n1", k.n1},
                      {"n2", k.n2}});
    json j{{"fingerprint", tag.fingerprint}, {"seed", tag.seed}, {"passed", report.passed()}, {"metrics", metrics}};
    if (report.rate_fit)
        j["rate_fit"] = {{"slope", report.rate_fit->slope},
                         {"intercept", report.rate_fit->intercept},
                         {"r_squared", report.rate_fit->r_squared}};
    else
        j["rate_fit"] = nullptr;
    j["ks"] = ks;
    return j.dump(2) + "\n";
}

void write_report_json(const fs::path& path, const ComparisonReport& report, const ArtifactTag& tag)
{
    write_text(path, report_to_json(report, tag));
}

namespace {

ArtifactTag parse_tag(const std::string& line, const fs::path& path)
{
    std::istringstream s(line);
    std::string hash, name, fp, seed;
    s >> hash >> name >> fp >> seed;
    if (hash != "#" || name != "epiwane" || fp.rfind("fingerprint=", 0) != 0 || seed.rfind("seed=", 0) != 0)
        throw InvalidParameter(path.string(), "missing epiwane tag line");
    ArtifactTag tag;
    tag.fingerprint = fp.substr(12);
    tag.seed = std::stoull(seed.substr(5));
    return tag;
}

std::size_t header_value(const std::string& line, const std::string& key)
{
    const auto pos = line.find(key + "=");
    if (pos == std::string::npos)
        throw InvalidParameter(key, "missing from artifact header");
    return std::stoull(line.substr(pos + key.size() + 1));
}

double parse_double(std::string_view s, const fs::path& path)
{
    double x = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw InvalidParameter(path.string(), "malformed number '" + std::string(s) + "'");
    return x;
}

// Rows of "index,t,shat,fhat,uhat,ihat" grouped by index.
struct PathTable {
    TimeGrid grid;
    std::size_t count = 0;
    std::array<std::vector<double>, 4> paths;
};

PathTable read_path_table(std::istream& in, const fs::path& path)
{
    std::vector<std::size_t> idx;
    std::vector<double> times;
    std::array<std::vector<double>, 4> cols;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#')
            continue;
        std::array<std::string_view, 6> f;
        std::size_t start = 0, k = 0;
        for (std::size_t pos = 0; pos <= line.size() && k < 6; ++pos)
            if (pos == line.size() || line[pos] == ',') {
                f[k++] = std::string_view(line).substr(start, pos - start);
                start = pos + 1;
            }
        if (k != 6)
            throw InvalidParameter(path.string(), "expected 6 columns");
        idx.push_back(static_cast<std::size_t>(parse_double(f[0], path)));
        times.push_back(parse_double(f[1], path));
        // file order shat,fhat,uhat,ihat; storage order follows Observable
        cols[kS].push_back(parse_double(f[2], path));
        cols[kF].push_back(parse_double(f[3], path));
        cols[kU].push_back(parse_double(f[4], path));
        cols[kI].push_back(parse_double(f[5], path));
    }
    if (idx.empty())
        throw InvalidParameter(path.string(), "no rows");
    std::size_t g = 0;
    while (g < idx.size() && idx[g] == idx[0])
        ++g;
    if (g < 2 || idx.size() % g != 0)
        throw InvalidParameter(path.string(), "ragged sample blocks");
    PathTable t;
    t.grid = TimeGrid(times[1] - times[0], times[g - 1]);
    if (t.grid.size() != g)
        throw InvalidParameter(path.string(), "time column is not a uniform grid");
    t.count = idx.size() / g;
    for (std::size_t r = 0; r < idx.size(); ++r)
        if (idx[r] != r / g)
            throw InvalidParameter(path.string(), "sample indices out of order");
    t.paths = std::move(cols);
    return t;
}

std::ifstream open(const fs::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw InvalidParameter(path.string(), "cannot open");
    return in;
}

} // namespace

ArtifactTag read_tag(const fs::path& path)
{
    auto in = open(path);
    std::string line;
    std::getline(in, line);
    if (!line.empty() && line[0] == '{') {
        std::stringstream s;
        s << line << '\n' << in.rdbuf();
        const json j = json::parse(s.str());
        if (!j.contains("fingerprint") || !j.contains("seed"))
            throw InvalidParameter(path.string(), "missing fingerprint");
        return {j["fingerprint"].get<std::string>(), j["seed"].get<std::uint64_t>()};
    }
    return parse_tag(line, path);
}

ModelEnsemble read_fluctuations_csv(const fs::path& path, ArtifactTag* tag)
{
    auto in = open(path);
    std::string line;
    std::getline(in, line);
    const ArtifactTag t = parse_tag(line, path);
    if (tag)
        *tag = t;
    std::getline(in, line);
    if (line != "sample,t,shat,fhat,uhat,ihat")
        throw InvalidParameter(path.string(), "unexpected header");
    PathTable table = read_path_table(in, path);
    ModelEnsemble m;
    m.grid = table.grid;
    m.samples = table.count;
    m.paths = std::move(table.paths);
    return m;
}

EnsembleSummary read_ensemble_samples_csv(const fs::path& path, ArtifactTag* tag)
{
    auto in = open(path);
    std::string line;
    std::getline(in, line);
    const ArtifactTag t = parse_tag(line, path);
    if (tag)
        *tag = t;
    std::getline(in, line);
    const std::size_t n = header_value(line, "n");
    std::getline(in, line);
    if (line != "replicate,t,shat,fhat,uhat,ihat")
        throw InvalidParameter(path.string(), "unexpected header");
    PathTable table = read_path_table(in, path);
    EnsembleSummary e;
    e.fingerprint = t.fingerprint;
    e.seed = t.seed;
    e.n = n;
    e.replicates = table.count;
    e.grid = table.grid;
    e.hat_samples = std::move(table.paths);
    return e;
}

} // namespace epiwane
