#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <string>

#include "wzreg/error.hpp"
#include "wzreg/experiments/config.hpp"
#include "wzreg/experiments/runners.hpp"
#include "wzreg/finite_blocklength.hpp"
#include "wzreg/regression.hpp"
#include "wzreg/source_model.hpp"
#include "wzreg/test_channel.hpp"

namespace py = pybind11;
using namespace wzreg;
namespace ex = wzreg::experiments;

namespace {

using Release = py::call_guard<py::gil_scoped_release>;

PolynomialSource make_source(const Eigen::VectorXd& beta, double sigma2,
                             std::optional<double> uniform_half_width,
                             std::optional<double> gaussian_variance) {
  PolynomialSource s;
  s.beta = beta;
  s.sigma2 = sigma2;
  if (uniform_half_width && gaussian_variance) {
    fail(ErrorCode::rejected_input, "give either a uniform half-width or a Gaussian variance");
  }
  if (gaussian_variance) {
    s.y_law = GaussianY{*gaussian_variance};
  } else {
    s.y_law = UniformSymmetric{uniform_half_width.value_or(1.0)};
  }
  s.validate();
  return s;
}

py::array_t<double> info_loss_array(const InfoLossBatch& batch) {
  py::array_t<double> out({static_cast<py::ssize_t>(batch.samples.size()), py::ssize_t{3}});
  auto view = out.mutable_unchecked<2>();
  for (std::size_t i = 0; i < batch.samples.size(); ++i) {
    view(i, 0) = batch.samples[i].v1;
    view(i, 1) = batch.samples[i].v2;
    view(i, 2) = batch.samples[i].v3;
  }
  return out;
}

ex::ExperimentConfig config_from_json(const std::string& text) {
  nlohmann::json document;
  try {
    document = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error&) {
    throw ex::ConfigError({"config: not valid JSON"});
  }
  return ex::parse_config(document);
}

template <typename F>
py::array_t<double> map_array(const py::array_t<double>& in, F&& f) {
  const auto flat = py::array_t<double, py::array::c_style | py::array::forcecast>::ensure(in);
  py::array_t<double> out(std::vector<py::ssize_t>(flat.shape(), flat.shape() + flat.ndim()));
  const double* src = flat.data();
  double* dst = out.mutable_data();
  for (py::ssize_t i = 0; i < flat.size(); ++i) dst[i] = f(src[i]);
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Wyner-Ziv regression toolkit core";
  m.attr("__version__") = std::string(ex::tool_version());

  static py::exception<Error> error_type(m, "Error", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object type = py::reinterpret_borrow<py::object>(error_type.ptr());
      py::object instance = type(std::string(code_name(e.code())) + ": " + e.what());
      instance.attr("code") = std::string(code_name(e.code()));
      instance.attr("exit_status") = exit_status(e.code());
      PyErr_SetObject(error_type.ptr(), instance.ptr());
    }
  });

  py::class_<Stream>(m, "Stream")
      .def(py::init<std::uint64_t, std::uint64_t>(), py::arg("seed"), py::arg("stream_id") = 0)
      .def_property_readonly("seed", &Stream::seed)
      .def_property_readonly("stream_id", &Stream::id)
      .def("substream", &Stream::substream)
      .def("uniform", &Stream::uniform)
      .def("normal", &Stream::normal);

  py::class_<PolynomialSource>(m, "PolynomialSource")
      .def(py::init(&make_source), py::arg("beta"), py::arg("sigma2"),
           py::arg("uniform_half_width") = py::none(), py::arg("gaussian_variance") = py::none())
      .def_readonly("beta", &PolynomialSource::beta)
      .def_readonly("sigma2", &PolynomialSource::sigma2)
      .def_property_readonly("k", &PolynomialSource::k);

  py::class_<TestChannelParams>(m, "TestChannelParams")
      .def_readonly("alpha", &TestChannelParams::alpha)
      .def_readonly("sigma_phi2", &TestChannelParams::sigma_phi2)
      .def_readonly("distortion", &TestChannelParams::distortion)
      .def("__repr__", [](const TestChannelParams& c) {
        return "TestChannelParams(alpha=" + std::to_string(c.alpha) +
               ", sigma_phi2=" + std::to_string(c.sigma_phi2) +
               ", distortion=" + std::to_string(c.distortion) + ")";
      });

  py::class_<RateSummary>(m, "RateSummary")
      .def_readonly("r_conditional", &RateSummary::r_conditional)
      .def_readonly("r_wz", &RateSummary::r_wz)
      .def_readonly("r_b", &RateSummary::r_b);

  m.def("params_from_distortion", &params_from_distortion, py::arg("sigma2"), py::arg("distortion"));
  m.def("params_from_alpha", &params_from_alpha, py::arg("sigma2"), py::arg("alpha"),
        py::arg("sigma_phi2"));
  m.def("params_from_rate", &params_from_rate, py::arg("sigma2"), py::arg("rate"));
  m.def("rates", &rates, py::arg("sigma2"), py::arg("channel"));
  m.def("raginsky_sqrt_bound", &raginsky_sqrt_bound, py::arg("rate"), py::arg("sigma2"));

  m.def("features", &features, py::arg("y"), py::arg("k"));
  m.def("moment_matrix", [](const PolynomialSource& s) { return moment_matrix(s).sigma_tilde; });
  m.def(
      "density_v",
      [](const PolynomialSource& s, const py::array_t<double>& v) {
        return map_array(v, [&](double x) { return density_v(s, x); });
      },
      py::arg("source"), py::arg("v"));
  m.def(
      "density_u",
      [](const PolynomialSource& s, const TestChannelParams& c, const py::array_t<double>& u) {
        return map_array(u, [&](double x) { return density_u(s, c, x); });
      },
      py::arg("source"), py::arg("channel"), py::arg("u"));
  m.def(
      "sample_pairs",
      [](const PolynomialSource& s, std::size_t n, Stream& rng) {
        SampleBatch b = sample_pairs(s, n, rng);
        return py::make_tuple(py::array(py::cast(b.x)), py::array(py::cast(b.y)));
      },
      py::arg("source"), py::arg("n"), py::arg("rng"));
  m.def(
      "apply_channel",
      [](const std::vector<double>& x, const TestChannelParams& c, Stream& rng) {
        return py::array(py::cast(apply(x, c, rng)));
      },
      py::arg("x"), py::arg("channel"), py::arg("rng"));

  m.def(
      "ols_fit",
      [](const std::vector<double>& u, const std::vector<double>& y, const TestChannelParams& c,
         std::size_t k) { return ols_fit(u, y, c, k).beta_hat; },
      py::arg("u"), py::arg("y"), py::arg("channel"), py::arg("k"));
  m.def(
      "gen_error_conditional",
      [](const Eigen::VectorXd& beta_hat, const PolynomialSource& s) {
        TrainedPredictor p;
        p.beta_hat = beta_hat;
        return gen_error_conditional(p, s.beta, moment_matrix(s), s.sigma2);
      },
      py::arg("beta_hat"), py::arg("source"));
  m.def(
      "gen_error_upper_bound",
      [](std::size_t n, const PolynomialSource& s, const TestChannelParams& c) {
        return gen_error_upper_bound(n, s.k(), s.sigma2, c, moment_matrix(s));
      },
      py::arg("n"), py::arg("source"), py::arg("channel"));
  m.def("ruhe_check", &ruhe_check, py::arg("a"), py::arg("b"));
  m.def("min_eig_bound_check", &min_eig_bound_check, py::arg("a"), py::arg("b"));
  m.def(
      "simulate_gen_error",
      [](const PolynomialSource& s, const TestChannelParams& c, std::size_t n,
         std::size_t replicates, std::uint64_t seed, unsigned threads) {
        const ReplicateStudy study = simulate_gen_error(s, c, n, replicates, Stream(seed), threads);
        py::dict out;
        out["mc_estimate"] = study.report.mc_estimate;
        out["mc_std_error"] = study.report.mc_std_error;
        out["closed_form"] = study.report.closed_form_conditional;
        out["closed_form_std_error"] = study.report.closed_form_std_error;
        out["expected_closed_form"] = study.report.expected_closed_form;
        out["upper_bound"] = study.report.upper_bound;
        out["gen_error"] = py::array(py::cast(study.gen_error));
        return out;
      },
      py::arg("source"), py::arg("channel"), py::arg("n"), py::arg("replicates"), py::arg("seed"),
      py::arg("threads") = 1);

  m.def(
      "sample_info_loss",
      [](const PolynomialSource& s, const TestChannelParams& c, std::size_t n, std::size_t count,
         std::uint64_t seed, const std::string& loss_mode, unsigned threads) {
        InfoLossOptions options;
        if (loss_mode == "conditional") {
          options.loss_mode = LossMode::conditional;
        } else if (loss_mode != "per_sample") {
          fail(ErrorCode::rejected_input, "loss_mode must be per_sample or conditional");
        }
        options.threads = threads;
        InfoLossBatch batch;
        {
          py::gil_scoped_release release;
          batch = sample_info_loss(s, c, n, count, Stream(seed), options);
        }
        return info_loss_array(batch);
      },
      py::arg("source"), py::arg("channel"), py::arg("n"), py::arg("m"), py::arg("seed"),
      py::arg("loss_mode") = "per_sample", py::arg("threads") = 1);
  m.def(
      "estimate_moments",
      [](py::array_t<double, py::array::c_style | py::array::forcecast> samples) {
        if (samples.ndim() != 2 || samples.shape(1) != 3) {
          fail(ErrorCode::rejected_input, "samples must have shape (m, 3)");
        }
        const auto view = samples.unchecked<2>();
        std::vector<InfoLossSample> rows(static_cast<std::size_t>(samples.shape(0)));
        for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = {view(i, 0), view(i, 1), view(i, 2)};
        const MomentSummary s = estimate_moments(rows);
        py::dict out;
        out["j"] = Eigen::VectorXd(s.j);
        out["v"] = Eigen::MatrixXd(s.v);
        out["j_std_error"] = Eigen::VectorXd(s.j_std_error);
        out["rate_std_error"] = s.rate_std_error;
        return out;
      },
      py::arg("samples"));

  py::class_<GaussianCache>(m, "GaussianCache")
      .def(py::init([](const Eigen::Matrix3d& v, std::size_t count, std::uint64_t seed) {
             return GaussianCache(v, count, Stream(seed));
           }),
           py::arg("v"), py::arg("count") = kDefaultCacheSize, py::arg("seed"), Release())
      .def_property_readonly("size", &GaussianCache::size)
      .def("probability", &GaussianCache::probability, py::arg("b"));
  m.def("dispersion_prob", &dispersion_prob, py::arg("v"), py::arg("b"), py::arg("cache"));

  py::class_<RateLossPoint>(m, "RateLossPoint")
      .def_readonly("l", &RateLossPoint::l)
      .def_readonly("rate", &RateLossPoint::rate)
      .def_readonly("n", &RateLossPoint::n)
      .def_readonly("epsilon", &RateLossPoint::epsilon)
      .def_readonly("feasible", &RateLossPoint::feasible)
      .def_readonly("b", &RateLossPoint::b)
      .def_readonly("boundary_probability", &RateLossPoint::boundary_probability);
  m.def(
      "rate_loss_bound",
      [](const Eigen::Vector3d& j, const Eigen::Matrix3d& v, std::size_t n, double epsilon,
         double l, const GaussianCache& cache, double loss_floor, unsigned directions) {
        BoundarySearch search;
        search.loss_floor = loss_floor;
        search.directions = directions;
        return rate_loss_bound(j, v, n, epsilon, l, cache, search);
      },
      py::arg("j"), py::arg("v"), py::arg("n"), py::arg("epsilon"), py::arg("l"), py::arg("cache"),
      py::arg("loss_floor") = 0.0, py::arg("directions") = 64, Release());

  m.def(
      "canonical_config",
      [](const std::string& text) { return ex::to_json(config_from_json(text)).dump(); },
      py::arg("config_json"), "Validate a config (or manifest) and return its canonical JSON.");
  m.def(
      "config_hash", [](const std::string& text) { return ex::config_hash(config_from_json(text)); },
      py::arg("config_json"));
  m.def(
      "run_experiment",
      [](const std::string& text, const std::string& out_dir, unsigned threads, bool plot) {
        const ex::ExperimentConfig config = config_from_json(text);
        ex::RunOptions options;
        options.out_dir = out_dir;
        options.threads = threads;
        options.plot = plot;
        ex::RunSummary summary;
        {
          py::gil_scoped_release release;
          summary = ex::run_experiment(config, options);
        }
        py::dict out;
        out["out_dir"] = summary.out_dir.string();
        out["manifest"] = summary.manifest.string();
        py::list outputs;
        for (const auto& p : summary.outputs) outputs.append(p.string());
        out["outputs"] = outputs;
        out["exit_status"] = summary.exit_status;
        return out;
      },
      py::arg("config_json"), py::arg("out_dir") = "", py::arg("threads") = 1,
      py::arg("plot") = true);
}
