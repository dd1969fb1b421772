#include "safeflow/cli.hpp"

#include "safeflow/io.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <iostream>
#include <numbers>
#include <set>
#include <sstream>

#ifndef SAFEFLOW_VERSION
#define SAFEFLOW_VERSION "0.0.0"
#endif

namespace safeflow::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct IoFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string join_path(const std::string& parent, const std::string& key) {
    return parent.empty() ? key : parent + "." + key;
}

// Typed access to one JSON object; remembers which keys were read so the
// rest can be rejected as unknown.
class Section {
public:
    Section(const json& node, std::string path) : node_(node), path_(std::move(path)) {
        if (!node_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
    }

    const std::string& path() const { return path_; }
    std::string child(const std::string& key) const { return join_path(path_, key); }

    const json* find(const std::string& key) {
        seen_.insert(key);
        const auto it = node_.find(key);
        return it == node_.end() ? nullptr : &*it;
    }

    const json& require(const std::string& key) {
        const json* v = find(key);
        if (!v) throw ConfigError(child(key), "missing required key");
        return *v;
    }

    std::optional<double> number(const std::string& key) {
        const json* v = find(key);
        if (!v) return std::nullopt;
        return as_number(*v, child(key));
    }
    double number(const std::string& key, double fallback) { return number(key).value_or(fallback); }

    std::optional<long long> integer(const std::string& key) {
        const json* v = find(key);
        if (!v) return std::nullopt;
        if (!v->is_number_integer()) throw ConfigError(child(key), "expected an integer");
        return v->get<long long>();
    }
    int integer(const std::string& key, int fallback, int minimum) {
        const auto v = integer(key);
        if (!v) return fallback;
        if (*v < minimum || *v > std::numeric_limits<int>::max())
            throw ConfigError(child(key), "must be an integer >= " + std::to_string(minimum));
        return static_cast<int>(*v);
    }

    std::optional<std::uint64_t> seed(const std::string& key) {
        const json* v = find(key);
        if (!v) return std::nullopt;
        if (!v->is_number_unsigned()) throw ConfigError(child(key), "expected a non-negative integer");
        return v->get<std::uint64_t>();
    }

    bool boolean(const std::string& key, bool fallback) {
        const json* v = find(key);
        if (!v) return fallback;
        if (!v->is_boolean()) throw ConfigError(child(key), "expected true or false");
        return v->get<bool>();
    }

    std::optional<std::string> string(const std::string& key) {
        const json* v = find(key);
        if (!v) return std::nullopt;
        if (!v->is_string()) throw ConfigError(child(key), "expected a string");
        return v->get<std::string>();
    }

    std::optional<Vector> vector(const std::string& key) {
        const json* v = find(key);
        if (!v) return std::nullopt;
        return as_vector(*v, child(key));
    }

    std::optional<Matrix> matrix(const std::string& key) {
        const json* v = find(key);
        if (!v) return std::nullopt;
        const std::string p = child(key);
        if (!v->is_array() || v->empty()) throw ConfigError(p, "expected a non-empty array of rows");
        Matrix m;
        for (std::size_t i = 0; i < v->size(); ++i) {
            const Vector row = as_vector((*v)[i], p + "[" + std::to_string(i) + "]");
            if (i == 0) m.resize(static_cast<Eigen::Index>(v->size()), row.size());
            if (row.size() != m.cols()) throw ConfigError(p, "rows have different lengths");
            m.row(static_cast<Eigen::Index>(i)) = row.transpose();
        }
        return m;
    }

    std::optional<Section> section(const std::string& key) {
        const json* v = find(key);
        if (!v) return std::nullopt;
        return Section(*v, child(key));
    }

    void finish() const {
        for (const auto& item : node_.items()) {
            if (!seen_.count(item.key())) throw ConfigError(child(item.key()), "unknown key");
        }
    }

    static double as_number(const json& v, const std::string& path) {
        if (!v.is_number()) throw ConfigError(path, "expected a number");
        const double d = v.get<double>();
        if (!std::isfinite(d)) throw ConfigError(path, "must be finite");
        return d;
    }

    static Vector as_vector(const json& v, const std::string& path) {
        if (!v.is_array() || v.empty()) throw ConfigError(path, "expected a non-empty array of numbers");
        Vector out(static_cast<Eigen::Index>(v.size()));
        for (std::size_t i = 0; i < v.size(); ++i)
            out[static_cast<Eigen::Index>(i)] = as_number(v[i], path + "[" + std::to_string(i) + "]");
        return out;
    }

private:
    const json& node_;
    std::string path_;
    std::set<std::string> seen_;
};

// Runs `make`, turning library argument errors into ConfigError at `path`.
template <class F>
auto guarded(const std::string& path, F&& make) {
    try {
        return make();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(path, e.what());
    }
}

json to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json to_json(const Matrix& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(to_json(Vector(m.row(i).transpose())));
    return rows;
}

void parse_flow(Section s, SafeFlowConfig& c) {
    c.alpha_g = s.number("alpha_g", c.alpha_g);
    c.bandwidth = s.number("bandwidth", c.bandwidth);
    if (auto v = s.string("kernel_convention"))
        c.kernel_convention = guarded(s.child("kernel_convention"), [&] { return bandwidth_convention_from_string(*v); });
    c.dt = s.number("dt", c.dt);
    c.horizon = s.number("horizon", c.horizon);
    c.particles = s.integer("particles", c.particles, 1);
    if (auto v = s.seed("seed")) c.seed = *v;
    if (auto v = s.string("integrator"))
        c.integrator = guarded(s.child("integrator"), [&] { return integrator_from_string(*v); });
    c.workers = s.integer("workers", c.workers, 1);
    if (auto v = s.string("infeasibility"))
        c.infeasibility = guarded(s.child("infeasibility"), [&] { return infeasibility_policy_from_string(*v); });
    s.finish();
}

std::optional<Likelihood> parse_likelihood(Section s, const std::optional<Likelihood>& current, int dim,
                                           std::optional<Vector>& truth, std::optional<std::uint64_t>& noise_seed) {
    const std::string type = [&] {
        const json& t = s.require("type");
        if (!t.is_string()) throw ConfigError(s.child("type"), "expected a string");
        return t.get<std::string>();
    }();
    if (auto t = s.vector("truth")) {
        if (t->size() != dim) throw ConfigError(s.child("truth"), "dimension does not match the prior");
        truth = *t;
    }
    noise_seed = s.seed("noise_seed");

    if (type == "none") {
        s.finish();
        truth.reset();
        return std::nullopt;
    }
    if (type == "range") {
        const auto* prev = current ? std::get_if<RangeLikelihood>(&*current) : nullptr;
        RangeLikelihood r;
        r.noise_variance = s.number("noise_variance", prev ? prev->noise_variance : 1.0);
        if (!(r.noise_variance > 0.0)) throw ConfigError(s.child("noise_variance"), "must be positive");
        if (auto z = s.number("observation")) {
            r.observation = *z;
        } else if (truth) {
            r.observation = range_observation(*truth, r.noise_variance, noise_seed);
        } else if (prev) {
            r.observation = prev->observation;
        } else {
            throw ConfigError(s.child("observation"), "missing required key (or give truth)");
        }
        s.finish();
        return r;
    }
    if (type == "linear_gaussian") {
        const auto* prev = current ? std::get_if<LinearGaussianLikelihood>(&*current) : nullptr;
        Matrix h = s.matrix("matrix").value_or(prev ? prev->observation_matrix() : Matrix::Identity(dim, dim));
        if (h.cols() != dim) throw ConfigError(s.child("matrix"), "column count does not match the prior");
        Matrix r;
        if (auto m = s.matrix("noise_covariance"))
            r = *m;
        else if (prev)
            r = prev->noise_covariance();
        else
            throw ConfigError(s.child("noise_covariance"), "missing required key");
        Vector z;
        if (auto obs = s.vector("observation")) {
            z = *obs;
        } else if (truth) {
            z = h * *truth;
            if (noise_seed) z += sample_gaussian(Vector::Zero(h.rows()), r, 1, *noise_seed).col(0);
        } else if (prev) {
            z = prev->observation();
        } else {
            throw ConfigError(s.child("observation"), "missing required key (or give truth)");
        }
        s.finish();
        return guarded(s.path(), [&] { return Likelihood(LinearGaussianLikelihood(h, r, z)); });
    }
    throw ConfigError(s.child("type"), "unknown likelihood type '" + type + "' (expected range, linear_gaussian or none)");
}

void parse_model(Section s, Scenario& sc, std::optional<std::uint64_t>& noise_seed) {
    StateSpace space = sc.prior.truncation();
    if (auto ss = s.section("state_space")) {
        const auto half = ss->number("half_width");
        const auto lower = ss->vector("lower");
        const auto upper = ss->vector("upper");
        ss->finish();
        if (half && (lower || upper))
            throw ConfigError(ss->path(), "give either half_width or lower/upper, not both");
        if (half) {
            space = guarded(ss->child("half_width"), [&] { return StateSpace::cube(space.dim(), *half); });
        } else if (lower || upper) {
            if (!lower || !upper) throw ConfigError(ss->path(), "lower and upper must be given together");
            space = guarded(ss->path(), [&] { return StateSpace(*lower, *upper); });
        }
    }
    Vector mean = sc.prior.mean();
    Matrix cov = sc.prior.covariance();
    if (auto p = s.section("prior")) {
        if (auto m = p->vector("mean")) mean = *m;
        if (auto c = p->matrix("covariance")) cov = *c;
        p->finish();
    }
    if (mean.size() != space.dim() || cov.rows() != space.dim() || cov.cols() != space.dim())
        throw ConfigError(s.child("prior"), "mean, covariance and state space dimensions disagree");
    sc.prior = guarded(s.child("prior"), [&] { return GaussianPrior(mean, cov, space); });

    if (auto l = s.section("likelihood"))
        sc.likelihood = parse_likelihood(std::move(*l), sc.likelihood, sc.prior.dim(), sc.truth, noise_seed);
    s.finish();
}

std::vector<Constraint> parse_constraints(const json& node, const std::string& path, int dim) {
    if (!node.is_array()) throw ConfigError(path, "expected an array");
    std::vector<Constraint> out;
    for (std::size_t i = 0; i < node.size(); ++i) {
        Section s(node[i], path + "[" + std::to_string(i) + "]");
        const json& t = s.require("type");
        if (!t.is_string()) throw ConfigError(s.child("type"), "expected a string");
        const std::string type = t.get<std::string>();
        auto dim_check = [&](const Vector& v, const std::string& key) {
            if (v.size() != dim) throw ConfigError(s.child(key), "dimension does not match the state space");
        };
        if (type == "cone") {
            const Vector d = Section::as_vector(s.require("direction"), s.child("direction"));
            dim_check(d, "direction");
            const double angle = Section::as_number(s.require("half_angle"), s.child("half_angle"));
            s.finish();
            out.push_back(guarded(s.path(), [&] { return cone_constraint(d, angle); }));
        } else if (type == "sphere_equality") {
            const double r = Section::as_number(s.require("radius"), s.child("radius"));
            s.finish();
            if (!(r > 0.0)) throw ConfigError(s.child("radius"), "must be positive");
            out.push_back(sphere_equality(r));
        } else if (type == "halfspace") {
            const Vector n = Section::as_vector(s.require("normal"), s.child("normal"));
            dim_check(n, "normal");
            const double offset = Section::as_number(s.require("offset"), s.child("offset"));
            s.finish();
            out.push_back(guarded(s.path(), [&] { return halfspace(n, offset); }));
        } else {
            throw ConfigError(s.child("type"),
                              "unknown constraint type '" + type + "' (expected cone, sphere_equality or halfspace)");
        }
    }
    return out;
}

json constraint_json(const Constraint& c) {
    if (const auto* cone = std::get_if<ConeShape>(&c.shape))
        return {{"type", "cone"}, {"direction", to_json(cone->direction)}, {"half_angle", cone->half_angle}};
    if (const auto* sphere = std::get_if<SphereShape>(&c.shape))
        return {{"type", "sphere_equality"}, {"radius", sphere->radius}};
    if (const auto* half = std::get_if<HalfspaceShape>(&c.shape))
        return {{"type", "halfspace"}, {"normal", to_json(half->normal)}, {"offset", half->offset}};
    throw std::invalid_argument("constraint '" + c.label + "' has no serializable form");
}

json likelihood_json(const std::optional<Likelihood>& lik, const std::optional<Vector>& truth,
                     const std::optional<std::uint64_t>& noise_seed) {
    json out;
    if (!lik) {
        out["type"] = "none";
        return out;
    }
    if (const auto* r = std::get_if<RangeLikelihood>(&*lik)) {
        out = {{"type", "range"}, {"noise_variance", r->noise_variance}, {"observation", r->observation}};
    } else {
        const auto& lg = std::get<LinearGaussianLikelihood>(*lik);
        out = {{"type", "linear_gaussian"},
               {"matrix", to_json(lg.observation_matrix())},
               {"noise_covariance", to_json(lg.noise_covariance())},
               {"observation", to_json(lg.observation())}};
    }
    if (truth) out["truth"] = to_json(*truth);
    if (noise_seed) out["noise_seed"] = *noise_seed;
    return out;
}

std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string padded(std::size_t i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04zu", i);
    return buf;
}

void write_output(const fs::path& dir, const std::string& rel, std::string_view content, RunManifest& manifest) {
    try {
        io::write_file_atomic(dir / rel, content);
    } catch (const std::exception& e) {
        throw IoFailure(e.what());
    }
    manifest.files.push_back(rel);
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoFailure("cannot create " + dir.string() + ": " + ec.message());
}

json nullable(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::optional<Matrix> reference_samples(const ExperimentConfig& config) {
    const Scenario& sc = config.scenario;
    if (config.output.reference_samples <= config.output.divergence_k || sc.prior.dim() != 2) return std::nullopt;
    try {
        return reference_posterior_samples(sc, config.output.reference_samples, sc.config.seed + 1);
    } catch (const std::exception& e) {
        std::cerr << "warning: divergence proxy disabled: " << e.what() << '\n';
        return std::nullopt;
    }
}

// Barrier trace at snapshot times; used for runs that carry no constraints.
BarrierTrace snapshot_trace(const FlowRun& run, const ConstraintSet& set, double tol_violation) {
    BarrierTrace trace;
    trace.labels = set.labels();
    SafetyStats none;
    for (const auto& snap : run.snapshots) {
        none.particles = static_cast<std::size_t>(snap.size());
        record_trace_point(trace, snap, set, tol_violation, none);
    }
    if (run.snapshots.empty() || run.snapshots.back().time != run.final.time) {
        none.particles = static_cast<std::size_t>(run.final.size());
        record_trace_point(trace, run.final, set, tol_violation, none);
    }
    return trace;
}

void write_manifest(const fs::path& dir, RunManifest& manifest) {
    manifest.finished = utc_now();
    manifest.files.push_back("manifest.json");
    io::write_file_atomic(dir / "manifest.json", manifest.to_json().dump(2) + "\n");
}

RunManifest start_manifest(const ExperimentConfig& config) {
    RunManifest m;
    m.config_hash = config.hash();
    m.scenario = config.scenario.name;
    m.seed = config.scenario.config.seed;
    m.version = SAFEFLOW_VERSION;
    m.started = utc_now();
    return m;
}

void warn_if_infeasible(const ExperimentConfig& config) {
    if (config.scenario.constraints.empty()) return;
    const FeasibilityScan scan = feasibility_scan(config.scenario);
    if (!scan.nonempty())
        std::cerr << "warning: no feasible point found among " << scan.scanned
                  << " scanned candidates; the safe set may be empty\n";
}

bool safe_check(const RunSummary& s) { return s.relaxed_events == 0 && s.decay_pass && s.violation_fraction <= 0.01; }

// Runs `body` and finalizes the manifest with the matching status and exit code.
template <class F>
CommandResult guarded_command(const ExperimentConfig& config, const fs::path& dir, F&& body) {
    CommandResult res;
    res.dir = dir;
    res.manifest = start_manifest(config);
    try {
        ensure_dir(dir);
        write_output(dir, "config.resolved.json", config.resolved().dump(2) + "\n", res.manifest);
        body(res);
        if (!res.check_passed) {
            res.manifest.status = "check_failed";
            res.exit_code = exit_check_failed;
        }
    } catch (const NumericalAbort& e) {
        res.manifest.status = "numerical_abort";
        res.manifest.error = e.what();
        res.exit_code = exit_numerical_abort;
        std::cerr << "numerical abort at step " << e.step();
        if (e.particle() >= 0) std::cerr << ", particle " << e.particle();
        std::cerr << ": " << e.what() << '\n';
    } catch (const IoFailure& e) {
        res.manifest.status = "io_error";
        res.manifest.error = e.what();
        res.exit_code = exit_io_error;
        std::cerr << "io error: " << e.what() << '\n';
    } catch (const std::exception& e) {
        res.manifest.status = "error";
        res.manifest.error = e.what();
        res.exit_code = exit_io_error;
        std::cerr << "error: " << e.what() << '\n';
    }
    try {
        write_manifest(dir, res.manifest);
    } catch (const std::exception& e) {
        std::cerr << "io error: cannot write manifest: " << e.what() << '\n';
        res.exit_code = exit_io_error;
    }
    return res;
}

}  // namespace

json ExperimentConfig::resolved() const {
    const Scenario& sc = scenario;
    const SafeFlowConfig& c = sc.config;
    json constraints = json::array();
    for (const Constraint& con : sc.constraints) constraints.push_back(constraint_json(con));
    return {
        {"scenario", sc.name},
        {"flow",
         {{"alpha_g", c.alpha_g},
          {"bandwidth", c.bandwidth},
          {"kernel_convention", std::string(to_string(c.kernel_convention))},
          {"dt", c.dt},
          {"horizon", c.horizon},
          {"particles", c.particles},
          {"seed", c.seed},
          {"integrator", std::string(to_string(c.integrator))},
          {"workers", c.workers},
          {"infeasibility", std::string(to_string(c.infeasibility))}}},
        {"tolerances", {{"qp", c.tol_qp}, {"violation", c.tol_violation}}},
        {"output",
         {{"snapshot_every", c.snapshot_every},
          {"trace_every", c.trace_every},
          {"svg", output.svg},
          {"reference_samples", output.reference_samples},
          {"divergence_k", output.divergence_k}}},
        {"model",
         {{"state_space",
           {{"lower", to_json(sc.prior.truncation().lower())}, {"upper", to_json(sc.prior.truncation().upper())}}},
          {"prior", {{"mean", to_json(sc.prior.mean())}, {"covariance", to_json(sc.prior.covariance())}}},
          {"likelihood", likelihood_json(sc.likelihood, sc.truth, noise_seed)}}},
        {"constraints", std::move(constraints)},
        {"baselines", {{"unconstrained", sc.unconstrained_baseline}, {"projection", sc.projection_baseline}}},
    };
}

std::string ExperimentConfig::hash() const { return io::fnv1a_hex(resolved().dump()); }

ExperimentConfig parse_config(const json& doc) {
    Section root(doc, "");
    const json& name_node = root.require("scenario");
    if (!name_node.is_string()) throw ConfigError("scenario", "expected a string");
    const std::string name = name_node.get<std::string>();

    ExperimentConfig out{guarded("scenario", [&] { return scenario_by_name(name); }), {}, std::nullopt};
    Scenario& sc = out.scenario;

    if (auto s = root.section("flow")) parse_flow(std::move(*s), sc.config);
    if (auto s = root.section("tolerances")) {
        sc.config.tol_qp = s->number("qp", sc.config.tol_qp);
        sc.config.tol_violation = s->number("violation", sc.config.tol_violation);
        s->finish();
    }
    if (auto s = root.section("output")) {
        sc.config.snapshot_every = s->integer("snapshot_every", sc.config.snapshot_every, 1);
        sc.config.trace_every = s->integer("trace_every", sc.config.trace_every, 1);
        out.output.svg = s->boolean("svg", out.output.svg);
        out.output.reference_samples = s->integer("reference_samples", out.output.reference_samples, 0);
        out.output.divergence_k = s->integer("divergence_k", out.output.divergence_k, 1);
        if (auto d = s->string("dir")) out.output.dir = fs::path(*d);
        s->finish();
    }
    if (auto s = root.section("model")) parse_model(std::move(*s), sc, out.noise_seed);
    if (const json* c = root.find("constraints")) sc.constraints = parse_constraints(*c, "constraints", sc.prior.dim());
    for (const Constraint& c : sc.constraints) {
        if (const auto* cone = std::get_if<ConeShape>(&c.shape); cone && cone->direction.size() != sc.prior.dim())
            throw ConfigError("constraints", "constraint dimension does not match the state space");
        if (const auto* half = std::get_if<HalfspaceShape>(&c.shape); half && half->normal.size() != sc.prior.dim())
            throw ConfigError("constraints", "constraint dimension does not match the state space");
    }
    if (auto s = root.section("baselines")) {
        sc.unconstrained_baseline = s->boolean("unconstrained", sc.unconstrained_baseline);
        sc.projection_baseline = s->boolean("projection", sc.projection_baseline);
        s->finish();
    }
    root.finish();
    sc.config.validate();
    return out;
}

ExperimentConfig parse_config_text(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError("", std::string("malformed JSON: ") + e.what());
    }
    return parse_config(doc);
}

ExperimentConfig parse_config_file(const fs::path& path) {
    std::string text;
    try {
        text = io::read_file(path);
    } catch (const std::exception& e) {
        throw ConfigError("", e.what());
    }
    return parse_config_text(text);
}

ExperimentConfig default_config(const std::string& scenario) { return parse_config(json{{"scenario", scenario}}); }

std::vector<ConfigKeyDoc> config_reference() {
    const SafeFlowConfig d;
    const OutputOptions o;
    auto num = [](double v) { return io::format_double(v); };
    return {
        {"scenario", "string", "(required)", "base scenario: " + [] {
             std::string names;
             for (const auto& n : scenario_names()) names += (names.empty() ? "" : ", ") + n;
             return names;
         }()},
        {"flow.alpha_g", "number > 0", num(d.alpha_g) + " (scenario value)", "barrier decay rate alpha_g"},
        {"flow.bandwidth", "number > 0", num(d.bandwidth) + " (scenario value)", "RBF kernel bandwidth sigma"},
        {"flow.kernel_convention", "string", std::string(to_string(d.kernel_convention)),
         "half_inverse_square: exp(-|x-y|^2/(2 sigma^2)); inverse_square: exp(-|x-y|^2/sigma^2)"},
        {"flow.dt", "number > 0", num(d.dt) + " (scenario value)", "integration step; must not exceed horizon"},
        {"flow.horizon", "number >= 0", num(d.horizon) + " (scenario value)", "final flow time T"},
        {"flow.particles", "integer >= 1", std::to_string(d.particles) + " (scenario value)", "ensemble size M"},
        {"flow.seed", "integer >= 0", "scenario value", "seed of the initial ensemble draw"},
        {"flow.integrator", "string", std::string(to_string(d.integrator)), "euler or rk4"},
        {"flow.workers", "integer >= 1", std::to_string(d.workers), "worker threads for drift and safety filter"},
        {"flow.infeasibility", "string", std::string(to_string(d.infeasibility)),
         "relax: minimally relaxed QP and count the event; abort: stop the run"},
        {"tolerances.qp", "number > 0", num(d.tol_qp), "QP feasibility and multiplier tolerance"},
        {"tolerances.violation", "number >= 0", num(d.tol_violation),
         "g < -violation counts as a constraint violation"},
        {"output.snapshot_every", "integer >= 1", std::to_string(d.snapshot_every) + " (scenario value)",
         "steps between snapshots; must divide the step count"},
        {"output.trace_every", "integer >= 1", std::to_string(d.trace_every), "steps between barrier trace samples"},
        {"output.svg", "boolean", o.svg ? "true" : "false", "write one SVG scatter plot per snapshot"},
        {"output.reference_samples", "integer >= 0", std::to_string(o.reference_samples),
         "reference posterior draws for the divergence proxy (2-D only; 0 disables)"},
        {"output.divergence_k", "integer >= 1", std::to_string(o.divergence_k), "neighbour count k of the proxy"},
        {"output.dir", "string", "$SAFEFLOW_OUTPUT_ROOT/<scenario>-<hash>", "output directory; excluded from the hash"},
        {"model.state_space.half_width", "number > 0", "scenario value", "state space |x|_inf <= half_width"},
        {"model.state_space.lower", "array", "scenario value", "box lower corner (with upper)"},
        {"model.state_space.upper", "array", "scenario value", "box upper corner (with lower)"},
        {"model.prior.mean", "array", "scenario value", "prior mean"},
        {"model.prior.covariance", "array of rows", "scenario value", "prior covariance (symmetric positive definite)"},
        {"model.likelihood.type", "string", "(required in section)", "range, linear_gaussian or none"},
        {"model.likelihood.noise_variance", "number > 0", "1 (range)", "range noise variance R"},
        {"model.likelihood.matrix", "array of rows", "identity (linear_gaussian)", "observation matrix H"},
        {"model.likelihood.noise_covariance", "array of rows", "scenario value", "observation noise covariance R"},
        {"model.likelihood.observation", "number or array", "derived from truth", "observed z"},
        {"model.likelihood.truth", "array", "scenario value", "true state; z is generated from it when no observation is given"},
        {"model.likelihood.noise_seed", "integer >= 0", "none (noise-free)", "seed for a noisy observation draw"},
        {"constraints", "array", "scenario value", "replaces the scenario constraints"},
        {"constraints[].type", "string", "(required)", "cone, sphere_equality or halfspace"},
        {"constraints[].direction, half_angle", "array, number", "(required for cone)",
         "unit axis d and half-angle in (0, pi/2)"},
        {"constraints[].radius", "number > 0", "(required for sphere_equality)", "equality |x|^2 = r^2"},
        {"constraints[].normal, offset", "array, number", "(required for halfspace)", "n^T x >= offset"},
        {"baselines.unconstrained", "boolean", "scenario value", "run the unconstrained flow in compare"},
        {"baselines.projection", "boolean", "scenario value", "run the simplified projection baseline in compare"},
    };
}

std::string render_config_reference() {
    std::ostringstream os;
    os << "Config keys (JSON). Omitted keys keep the scenario or built-in default.\n\n";
    for (const auto& k : config_reference()) {
        os << k.path << "\n    type: " << k.type << "\n    default: " << k.default_value << "\n    " << k.description
           << "\n";
    }
    return os.str();
}

json RunManifest::to_json() const {
    return {{"config_hash", config_hash}, {"scenario", scenario}, {"seed", seed},   {"version", version},
            {"started", started},         {"finished", finished}, {"status", status}, {"error", error},
            {"files", files}};
}

RunSummary emit_outputs(const FlowRun& run, const ExperimentConfig& config, const std::string& method,
                        const fs::path& dir, const std::string& subdir, const std::optional<Matrix>& reference,
                        RunManifest& manifest) {
    const Scenario& sc = config.scenario;
    const ConstraintSet set = sc.constraint_set();
    const std::vector<std::string> labels = set.labels();
    auto rel = [&subdir](const std::string& name) { return subdir.empty() ? name : subdir + "/" + name; };
    ensure_dir(dir / subdir);

    json snapshots = json::array();
    const io::Viewport view = io::compute_viewport(run.snapshots, sc.prior.truncation());
    for (std::size_t i = 0; i < run.snapshots.size(); ++i) {
        const ParticleEnsemble& snap = run.snapshots[i];
        const std::string stem = "snapshot_" + padded(i);
        write_output(dir, rel(stem + ".csv"), io::render_csv(snap), manifest);
        json entry{{"index", i}, {"time", snap.time}, {"csv", rel(stem + ".csv")}};
        if (config.output.svg) {
            const std::string title = sc.name + " / " + method + "  t = " + io::format_double(snap.time);
            write_output(dir, rel(stem + ".svg"),
                         io::render_svg(snap, run.snapshots.front(), sc.constraints, view, title), manifest);
            entry["svg"] = rel(stem + ".svg");
        }
        snapshots.push_back(std::move(entry));
    }

    RunSummary summary;
    summary.method = method;
    summary.violation_fraction = violation_fraction(run.final, set, sc.config.tol_violation);
    summary.terminal_barrier = barrier_estimate(run.final, set);
    summary.relaxed_events = run.totals.relaxed_events;

    const DecayReport decay =
        decay_check(run.trace, sc.config.alpha_g, default_decay_slack(run.trace));
    summary.decay_pass = decay.pass;

    json divergence = nullptr;
    if (reference && run.final.size() > config.output.divergence_k) {
        try {
            summary.divergence = divergence_proxy(run.final.states, *reference, config.output.divergence_k,
                                                  intrinsic_dimension(sc));
            divergence = {{"estimator", "k-nearest-neighbour KL estimate against grid posterior samples"},
                          {"value", *summary.divergence},
                          {"k", config.output.divergence_k},
                          {"intrinsic_dim", intrinsic_dimension(sc)},
                          {"reference_samples", reference->cols()}};
        } catch (const std::invalid_argument& e) {
            std::cerr << "warning: divergence proxy skipped: " << e.what() << '\n';
        }
    }

    json barrier = json::object();
    json satisfied = json::object();
    for (std::size_t i = 0; i < set.size(); ++i) {
        barrier[labels[i]] = summary.terminal_barrier[static_cast<Eigen::Index>(i)];
        Eigen::Index ok = 0;
        for (Eigen::Index j = 0; j < run.final.size(); ++j) ok += set[i].value(run.final.particle(j)) >= -sc.config.tol_violation;
        satisfied[labels[i]] = static_cast<double>(ok) / static_cast<double>(std::max<Eigen::Index>(run.final.size(), 1));
    }

    const json metrics{
        {"method", method},
        {"scenario", sc.name},
        {"config_hash", config.hash()},
        {"particles", run.final.size()},
        {"dimension", run.final.dim()},
        {"totals",
         {{"steps", run.totals.steps},
          {"rhs_evaluations", run.totals.rhs_evaluations},
          {"relaxed_events", run.totals.relaxed_events},
          {"max_slack", run.totals.max_slack},
          {"min_cbf_margin", nullable(run.totals.min_cbf_margin)},
          {"max_nonzero_controls", run.totals.max_nonzero_controls}}},
        {"terminal",
         {{"time", run.final.time},
          {"violation_fraction", summary.violation_fraction},
          {"barrier", std::move(barrier)},
          {"satisfied_fraction", std::move(satisfied)}}},
        {"trace", io::trace_to_json(run.trace)},
        {"decay", io::decay_to_json(decay, labels)},
        {"divergence_proxy", std::move(divergence)},
        {"snapshots", std::move(snapshots)},
    };
    write_output(dir, rel("metrics.json"), metrics.dump(2) + "\n", manifest);

    std::ostringstream report;
    report << "decay check (" << sc.name << " / " << method << ", alpha_g = " << io::format_double(sc.config.alpha_g)
           << ")\n"
           << decay.summary(labels) << "\n";
    write_output(dir, rel("decay_report.txt"), report.str(), manifest);
    return summary;
}

fs::path default_output_dir(const ExperimentConfig& config) {
    if (config.output.dir) return *config.output.dir;
    const char* root = std::getenv("SAFEFLOW_OUTPUT_ROOT");
    const fs::path base = root && *root ? fs::path(root) : fs::path("safeflow-output");
    return base / (config.scenario.name + "-" + config.hash().substr(0, 8));
}

CommandResult run_command(const ExperimentConfig& config, const fs::path& dir, bool check) {
    return guarded_command(config, dir, [&](CommandResult& res) {
        const Scenario& sc = config.scenario;
        warn_if_infeasible(config);
        const ParticleEnsemble initial = sample_prior(sc.prior, sc.config.particles, sc.config.seed);
        const FlowRun flow = run(sc.config, sc.target(), sc.constraint_set(), initial);
        const std::optional<Matrix> reference = reference_samples(config);
        res.summaries.push_back(emit_outputs(flow, config, "safe", dir, "", reference, res.manifest));

        const RunSummary& s = res.summaries.front();
        const DecayReport decay = decay_check(flow.trace, sc.config.alpha_g, default_decay_slack(flow.trace));
        std::cout << "scenario " << sc.name << ": " << flow.totals.steps << " steps, " << flow.final.size()
                  << " particles, relaxed QP events " << s.relaxed_events << ", final violation fraction "
                  << s.violation_fraction << '\n'
                  << decay.summary(flow.trace.labels) << '\n';
        if (check) res.check_passed = safe_check(s);
    });
}

CommandResult compare_command(const ExperimentConfig& config, const fs::path& dir, bool check) {
    return guarded_command(config, dir, [&](CommandResult& res) {
        const Scenario& sc = config.scenario;
        warn_if_infeasible(config);
        const TargetModel model = sc.target();
        const ConstraintSet set = sc.constraint_set();
        const ParticleEnsemble initial = sample_prior(sc.prior, sc.config.particles, sc.config.seed);
        const std::string initial_hash = io::fnv1a_hex(io::render_csv(initial));
        const std::optional<Matrix> reference = reference_samples(config);

        const FlowRun safe = run(sc.config, model, set, initial);
        res.summaries.push_back(emit_outputs(safe, config, "safe", dir, "safe", reference, res.manifest));

        FlowRun unconstrained = run(sc.config, model, ConstraintSet{}, initial);
        unconstrained.trace = snapshot_trace(unconstrained, set, sc.config.tol_violation);
        res.summaries.push_back(
            emit_outputs(unconstrained, config, "unconstrained", dir, "unconstrained", reference, res.manifest));

        std::size_t unprojected = 0;
        const FlowRun projected = run_projection_baseline(sc.config, model, sc.constraints, initial, &unprojected);
        res.summaries.push_back(emit_outputs(projected, config, "projection (simplified)", dir, "projection",
                                             reference, res.manifest));

        json rows = json::array();
        std::ostringstream table;
        char line[256];
        std::snprintf(line, sizeof line, "%-26s %12s %16s %14s %8s\n", "method", "violation", "max terminal h",
                      "divergence", "relaxed");
        table << "initial ensemble " << initial_hash << " shared by all methods\n" << line;
        for (const RunSummary& s : res.summaries) {
            const double hmax = s.terminal_barrier.size() ? s.terminal_barrier.maxCoeff() : 0.0;
            std::snprintf(line, sizeof line, "%-26s %12.6g %16.6g %14s %8zu\n", s.method.c_str(), s.violation_fraction,
                          hmax, s.divergence ? io::format_double(*s.divergence).substr(0, 10).c_str() : "n/a",
                          s.relaxed_events);
            table << line;
            rows.push_back({{"method", s.method},
                            {"violation_fraction", s.violation_fraction},
                            {"terminal_barrier", to_json(s.terminal_barrier)},
                            {"divergence_proxy", s.divergence ? json(*s.divergence) : json(nullptr)},
                            {"relaxed_events", s.relaxed_events},
                            {"decay_pass", s.decay_pass}});
        }
        const json comparison{{"scenario", sc.name},
                              {"config_hash", config.hash()},
                              {"initial_ensemble_hash", initial_hash},
                              {"constraint_labels", set.labels()},
                              {"unprojected_particles", unprojected},
                              {"methods", std::move(rows)}};
        write_output(dir, "comparison.json", comparison.dump(2) + "\n", res.manifest);
        write_output(dir, "comparison.txt", table.str(), res.manifest);
        std::cout << table.str();

        if (check) {
            const RunSummary& s = res.summaries[0];
            res.check_passed = safe_check(s) && s.violation_fraction <= res.summaries[1].violation_fraction &&
                               s.violation_fraction <= res.summaries[2].violation_fraction;
        }
    });
}

int cli_main(int argc, char** argv) {
    CLI::App app{"safeflow: safe particle flow for constrained variational inference"};
    app.set_version_flag("--version", SAFEFLOW_VERSION);
    app.require_subcommand(1);

    struct RunArgs {
        std::string config;
        std::string scenario;
        std::string output;
        int workers = 0;
        bool check = false;
    };
    RunArgs run_args;
    RunArgs compare_args;
    auto add_run_options = [](CLI::App* sub, RunArgs& a) {
        auto* cfg = sub->add_option("-c,--config", a.config, "JSON config file")->check(CLI::ExistingFile);
        sub->add_option("-s,--scenario", a.scenario, "built-in scenario name (instead of --config)")->excludes(cfg);
        sub->add_option("-o,--output", a.output, "output directory");
        sub->add_option("-w,--workers", a.workers, "worker threads (overrides flow.workers)")
            ->check(CLI::PositiveNumber);
        sub->add_flag("--check", a.check, "exit 4 if the acceptance checks fail");
    };
    auto* run_cmd = app.add_subcommand("run", "run the safe particle flow and write snapshots and metrics");
    add_run_options(run_cmd, run_args);
    auto* compare_cmd =
        app.add_subcommand("compare", "run safe, unconstrained and projection flows from one initial ensemble");
    add_run_options(compare_cmd, compare_args);

    std::string validate_config;
    std::string validate_scenario;
    bool reference = false;
    auto* validate_cmd = app.add_subcommand("validate-config", "parse and validate a config, print the resolved form");
    auto* vcfg = validate_cmd->add_option("-c,--config", validate_config, "JSON config file");
    validate_cmd->add_option("-s,--scenario", validate_scenario, "built-in scenario name")->excludes(vcfg);
    validate_cmd->add_flag("--reference", reference, "print every config key with its default");

    app.add_subcommand("list-scenarios", "list built-in scenarios");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? exit_ok : exit_config_error;
    }

    auto load = [](const std::string& path, const std::string& scenario) {
        if (!path.empty()) return parse_config_file(path);
        if (!scenario.empty()) return default_config(scenario);
        throw ConfigError("", "give --config or --scenario");
    };

    try {
        if (app.got_subcommand("list-scenarios")) {
            for (const auto& name : scenario_names()) {
                std::cout << name << "  " << scenario_by_name(name).description << '\n';
            }
            return exit_ok;
        }
        if (app.got_subcommand(validate_cmd)) {
            if (reference && validate_config.empty() && validate_scenario.empty()) {
                std::cout << render_config_reference();
                return exit_ok;
            }
            const ExperimentConfig cfg = load(validate_config, validate_scenario);
            std::cout << cfg.resolved().dump(2) << "\nconfig hash " << cfg.hash() << '\n';
            if (reference) std::cout << '\n' << render_config_reference();
            if (!cfg.scenario.constraints.empty()) {
                const FeasibilityScan scan = feasibility_scan(cfg.scenario);
                std::cout << "feasibility scan: " << scan.feasible << " of " << scan.scanned
                          << " candidates feasible\n";
                if (!scan.nonempty()) {
                    std::cerr << "constraints: no feasible point found; the safe set may be empty\n";
                    return exit_config_error;
                }
            }
            return exit_ok;
        }
        const bool comparing = app.got_subcommand(compare_cmd);
        const RunArgs& a = comparing ? compare_args : run_args;
        ExperimentConfig cfg = load(a.config, a.scenario);
        if (a.workers > 0) cfg.scenario.config.workers = a.workers;
        const fs::path dir = a.output.empty() ? default_output_dir(cfg) : fs::path(a.output);
        const CommandResult res = comparing ? compare_command(cfg, dir, a.check) : run_command(cfg, dir, a.check);
        std::cout << "wrote " << res.manifest.files.size() << " files to " << res.dir.string() << " (status "
                  << res.manifest.status << ")\n";
        return res.exit_code;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return exit_config_error;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return exit_config_error;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_io_error;
    }
}

}  // namespace safeflow::cli
