#include "safeflow/cli.hpp"
#include "safeflow/constraints.hpp"
#include "safeflow/diagnostics.hpp"
#include "safeflow/drift.hpp"
#include "safeflow/experiments.hpp"
#include "safeflow/integrate.hpp"
#include "safeflow/io.hpp"
#include "safeflow/kernels.hpp"
#include "safeflow/models.hpp"
#include "safeflow/safety.hpp"

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace safeflow;

namespace {

ConstraintSet make_set(const std::vector<Constraint>& constraints) { return expand(constraints); }

// Column-per-particle matrix from an (M, n) array, the layout numpy users expect.
ParticleEnsemble ensemble_from_rows(const Matrix& rows, double time) { return ParticleEnsemble(rows.transpose(), time); }

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Safe particle flow: Stein drift filtered through per-particle CBF quadratic programs";

    py::register_exception<ModelError>(m, "ModelError", PyExc_RuntimeError);
    py::register_exception<ConstraintError>(m, "ConstraintError", PyExc_ValueError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<NumericalAbort>(m, "NumericalAbort", PyExc_RuntimeError);

    py::class_<StateSpace>(m, "StateSpace")
        .def(py::init<Vector, Vector>(), py::arg("lower"), py::arg("upper"))
        .def_static("cube", &StateSpace::cube, py::arg("dim"), py::arg("half_width"))
        .def_property_readonly("dim", &StateSpace::dim)
        .def_property_readonly("lower", &StateSpace::lower)
        .def_property_readonly("upper", &StateSpace::upper)
        .def("contains", [](const StateSpace& s, const Vector& x, double slack) { return s.contains(x, slack); },
             py::arg("x"), py::arg("slack") = 0.0)
        .def("boundary_tolerance", &StateSpace::boundary_tolerance)
        .def("tangentialize", [](const StateSpace& s, const Vector& x, const Vector& v) { return s.tangentialize(x, v); },
             py::arg("x"), py::arg("v"));

    py::class_<GaussianPrior>(m, "GaussianPrior")
        .def(py::init<Vector, Matrix, StateSpace>(), py::arg("mean"), py::arg("covariance"), py::arg("truncation"))
        .def_property_readonly("mean", &GaussianPrior::mean)
        .def_property_readonly("covariance", &GaussianPrior::covariance)
        .def_property_readonly("truncation", &GaussianPrior::truncation)
        .def("log_density", [](const GaussianPrior& p, const Vector& x) { return p.log_density(x); })
        .def("grad_log_density", [](const GaussianPrior& p, const Vector& x) { return p.grad_log_density(x); });

    py::class_<RangeLikelihood>(m, "RangeLikelihood")
        .def(py::init([](double noise_variance, double observation) { return RangeLikelihood{noise_variance, observation}; }),
             py::arg("noise_variance"), py::arg("observation"))
        .def_readonly("noise_variance", &RangeLikelihood::noise_variance)
        .def_readonly("observation", &RangeLikelihood::observation)
        .def("grad_log_density", [](const RangeLikelihood& l, const Vector& x) { return l.grad_log_density(x); });

    py::class_<LinearGaussianLikelihood>(m, "LinearGaussianLikelihood")
        .def(py::init<Matrix, Matrix, Vector>(), py::arg("matrix"), py::arg("noise_covariance"), py::arg("observation"))
        .def("grad_log_density", [](const LinearGaussianLikelihood& l, const Vector& x) { return l.grad_log_density(x); });

    py::class_<TargetModel>(m, "TargetModel")
        .def_property_readonly("dim", &TargetModel::dim)
        .def_property_readonly("space", &TargetModel::space)
        .def("log_joint", [](const TargetModel& t, const Vector& x) { return t.log_joint(x); })
        .def("log_joint_grad", [](const TargetModel& t, const Vector& x) { return t.log_joint_grad(x); });

    m.def("make_target",
          [](const GaussianPrior& prior, std::optional<std::variant<RangeLikelihood, LinearGaussianLikelihood>> lik) {
              return make_target(prior, lik ? std::optional<Likelihood>(*lik) : std::nullopt);
          },
          py::arg("prior"), py::arg("likelihood") = py::none());
    m.def("conjugate_posterior",
          [](const GaussianPrior& prior, const LinearGaussianLikelihood& lik) {
              const GaussianPosterior post = conjugate_posterior(prior, lik);
              return py::make_tuple(post.mean, post.covariance);
          },
          "closed-form posterior (mean, covariance)");

    py::enum_<ConstraintKind>(m, "ConstraintKind")
        .value("inequality", ConstraintKind::inequality)
        .value("equality_generator", ConstraintKind::equality_generator);

    py::class_<Constraint>(m, "Constraint")
        .def_readonly("label", &Constraint::label)
        .def_readonly("kind", &Constraint::kind)
        .def("value", [](const Constraint& c, const Vector& x) { return c.value(x); })
        .def("gradient", [](const Constraint& c, const Vector& x) { return c.gradient(x); });

    m.def("cone_constraint", &cone_constraint, py::arg("direction"), py::arg("half_angle"));
    m.def("sphere_equality", &sphere_equality, py::arg("radius"));
    m.def("halfspace", &halfspace, py::arg("normal"), py::arg("offset"));

    py::class_<ConstraintSet>(m, "ConstraintSet")
        .def(py::init(&make_set), py::arg("constraints"), "expands equality generators into (+g, -g) pairs")
        .def("__len__", &ConstraintSet::size)
        .def("__getitem__",
             [](const ConstraintSet& s, std::size_t i) {
                 if (i >= s.size()) throw py::index_error();
                 return s[i];
             })
        .def("labels", &ConstraintSet::labels)
        .def("values", [](const ConstraintSet& s, const Vector& x) { return s.values(x); });

    py::enum_<BandwidthConvention>(m, "BandwidthConvention")
        .value("half_inverse_square", BandwidthConvention::half_inverse_square)
        .value("inverse_square", BandwidthConvention::inverse_square);

    py::class_<RbfKernel>(m, "RbfKernel")
        .def(py::init<double, BandwidthConvention>(), py::arg("bandwidth"),
             py::arg("convention") = BandwidthConvention::half_inverse_square)
        .def("__call__", [](const RbfKernel& k, const Vector& x, const Vector& y) { return k.eval(x, y); })
        .def("grad_first", [](const RbfKernel& k, const Vector& x, const Vector& y) { return k.grad_first(x, y); });

    py::class_<ParticleEnsemble>(m, "ParticleEnsemble")
        .def(py::init(&ensemble_from_rows), py::arg("particles"), py::arg("time") = 0.0,
             "particles: array of shape (M, n)")
        .def_property_readonly("particles", [](const ParticleEnsemble& e) { return Matrix(e.states.transpose()); })
        .def_readonly("time", &ParticleEnsemble::time)
        .def("__len__", &ParticleEnsemble::size);

    m.def("stein_drift",
          [](const ParticleEnsemble& ens, const TargetModel& model, const RbfKernel& kernel, int workers) {
              return Matrix(stein_drift(ens, model, kernel, workers).vectors.transpose());
          },
          py::arg("ensemble"), py::arg("model"), py::arg("kernel"), py::arg("workers") = 1,
          "Stein drift as an (M, n) array");

    py::enum_<QpStatus>(m, "QpStatus").value("optimal", QpStatus::optimal).value("infeasible", QpStatus::infeasible);

    py::class_<QpSolution>(m, "QpSolution")
        .def_readonly("u", &QpSolution::u)
        .def_readonly("active_set", &QpSolution::active_set)
        .def_readonly("multipliers", &QpSolution::multipliers)
        .def_readonly("status", &QpSolution::status)
        .def_readonly("diagnostic", &QpSolution::diagnostic)
        .def("optimal", &QpSolution::optimal);

    m.def("solve_min_norm",
          [](const Matrix& a, const Vector& b, double tol) {
              if (a.rows() != b.size()) throw std::invalid_argument("A and b row counts differ");
              QpProblem qp;
              qp.dim = a.cols();
              for (Eigen::Index i = 0; i < a.rows(); ++i) qp.rows.push_back({a.row(i).transpose(), b[i]});
              return solve_min_norm(qp, tol);
          },
          py::arg("a"), py::arg("b"), py::arg("tol") = kDefaultQpTolerance,
          "min |u|^2 subject to A u >= b");

    py::enum_<IntegratorKind>(m, "IntegratorKind").value("euler", IntegratorKind::euler).value("rk4", IntegratorKind::rk4);
    py::enum_<InfeasibilityPolicy>(m, "InfeasibilityPolicy")
        .value("relax", InfeasibilityPolicy::relax)
        .value("abort", InfeasibilityPolicy::abort);

    py::class_<SafeFlowConfig>(m, "SafeFlowConfig")
        .def(py::init<>())
        .def_readwrite("alpha_g", &SafeFlowConfig::alpha_g)
        .def_readwrite("bandwidth", &SafeFlowConfig::bandwidth)
        .def_readwrite("kernel_convention", &SafeFlowConfig::kernel_convention)
        .def_readwrite("dt", &SafeFlowConfig::dt)
        .def_readwrite("horizon", &SafeFlowConfig::horizon)
        .def_readwrite("particles", &SafeFlowConfig::particles)
        .def_readwrite("seed", &SafeFlowConfig::seed)
        .def_readwrite("integrator", &SafeFlowConfig::integrator)
        .def_readwrite("snapshot_every", &SafeFlowConfig::snapshot_every)
        .def_readwrite("trace_every", &SafeFlowConfig::trace_every)
        .def_readwrite("workers", &SafeFlowConfig::workers)
        .def_readwrite("tol_qp", &SafeFlowConfig::tol_qp)
        .def_readwrite("tol_violation", &SafeFlowConfig::tol_violation)
        .def_readwrite("infeasibility", &SafeFlowConfig::infeasibility)
        .def("validate", &SafeFlowConfig::validate)
        .def("step_count", &SafeFlowConfig::step_count);

    py::class_<BarrierTrace>(m, "BarrierTrace")
        .def_readonly("labels", &BarrierTrace::labels)
        .def_readonly("times", &BarrierTrace::times)
        .def_readonly("h", &BarrierTrace::h)
        .def_readonly("violation_fraction", &BarrierTrace::violation_fraction)
        .def_readonly("nonzero_control_fraction", &BarrierTrace::nonzero_control_fraction);

    py::class_<FlowTotals>(m, "FlowTotals")
        .def_readonly("steps", &FlowTotals::steps)
        .def_readonly("rhs_evaluations", &FlowTotals::rhs_evaluations)
        .def_readonly("relaxed_events", &FlowTotals::relaxed_events)
        .def_readonly("max_slack", &FlowTotals::max_slack);

    py::class_<FlowRun>(m, "FlowRun")
        .def_readonly("snapshots", &FlowRun::snapshots)
        .def_readonly("final", &FlowRun::final)
        .def_readonly("trace", &FlowRun::trace)
        .def_readonly("totals", &FlowRun::totals);

    m.def("run", &safeflow::run, py::arg("config"), py::arg("model"), py::arg("constraints"), py::arg("initial"),
          py::call_guard<py::gil_scoped_release>());
    m.def("sample_prior", &sample_prior, py::arg("prior"), py::arg("count"), py::arg("seed"));

    py::class_<DecayReport>(m, "DecayReport")
        .def_readonly("passed", &DecayReport::pass)
        .def_readonly("intervals_checked", &DecayReport::intervals_checked)
        .def("summary", &DecayReport::summary, py::arg("labels") = std::vector<std::string>{});

    m.def("barrier_estimate", &barrier_estimate, py::arg("ensemble"), py::arg("constraints"));
    m.def("violation_fraction", &safeflow::violation_fraction, py::arg("ensemble"), py::arg("constraints"),
          py::arg("tolerance"));
    m.def("decay_check", [](const BarrierTrace& t, double alpha) { return decay_check(t, alpha, default_decay_slack(t)); },
          py::arg("trace"), py::arg("alpha"), "decay check with slack 0.05 h(0) + 1e-4");
    m.def("divergence_proxy",
          [](const Matrix& samples, const Matrix& reference, int k, int intrinsic_dim) {
              return divergence_proxy(samples.transpose(), reference.transpose(), k, intrinsic_dim);
          },
          py::arg("samples"), py::arg("reference"), py::arg("k") = 5, py::arg("intrinsic_dim") = -1,
          "k-NN KL estimate; inputs are (count, n) arrays");

    py::class_<Scenario>(m, "Scenario")
        .def_readonly("name", &Scenario::name)
        .def_readonly("description", &Scenario::description)
        .def_readonly("prior", &Scenario::prior)
        .def_readonly("truth", &Scenario::truth)
        .def_readonly("constraints", &Scenario::constraints)
        .def_readonly("config", &Scenario::config)
        .def("target", &Scenario::target)
        .def("constraint_set", &Scenario::constraint_set);

    m.def("scenario_names", &scenario_names);
    m.def("scenario", &scenario_by_name, py::arg("name"));

    m.def("render_csv", &io::render_csv, py::arg("ensemble"));
    m.def("parse_csv", [](const std::string& text) { return io::parse_csv(text); }, py::arg("text"));

    m.def("config_hash", [](const std::string& text) { return cli::parse_config_text(text).hash(); },
          py::arg("config_json"), "hash of the resolved form of a JSON config");
    m.def("resolved_config", [](const std::string& text) { return cli::parse_config_text(text).resolved().dump(); },
          py::arg("config_json"), "resolved JSON config with every default filled in");
    m.def("run_config",
          [](const std::string& text, const std::filesystem::path& dir, bool check) {
              const cli::CommandResult res = cli::run_command(cli::parse_config_text(text), dir, check);
              return py::make_tuple(res.exit_code, res.manifest.files);
          },
          py::arg("config_json"), py::arg("output_dir"), py::arg("check") = false,
          "runs the config like `safeflow run`; returns (exit code, written files)");

    m.attr("__version__") = SAFEFLOW_VERSION;
}
