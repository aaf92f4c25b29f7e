#include <pybind11/complex.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "holoprop/estimators.hpp"
#include "holoprop/experiments.hpp"
#include "holoprop/model.hpp"
#include "holoprop/oracle.hpp"
#include "holoprop/parallel.hpp"
#include "holoprop/trainer.hpp"

namespace py = pybind11;
using namespace holoprop;

namespace {

RealTensor real_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  RealTensor t;
  for (py::ssize_t d = 0; d < a.ndim(); ++d) t.shape.push_back(static_cast<std::size_t>(a.shape(d)));
  t.data.assign(a.data(), a.data() + a.size());
  return t;
}

py::array real_to_array(const RealTensor& t) {
  std::vector<py::ssize_t> shape(t.shape.begin(), t.shape.end());
  py::array_t<double> out(shape);
  std::copy(t.data.begin(), t.data.end(), out.mutable_data());
  return out;
}

py::array complex_to_array(const ComplexTensor& t) {
  std::vector<py::ssize_t> shape(t.shape.begin(), t.shape.end());
  py::array_t<std::complex<double>> out(shape);
  std::copy(t.data.begin(), t.data.end(), out.mutable_data());
  return out;
}

std::vector<py::array> grads_to_arrays(const std::vector<RealTensor>& grads) {
  std::vector<py::array> out;
  for (const auto& g : grads) out.push_back(real_to_array(g));
  return out;
}

std::vector<RealTensor> grads_from_arrays(const std::vector<py::array_t<double>>& arrays) {
  std::vector<RealTensor> out;
  for (const auto& a : arrays) out.push_back(real_from_array(a));
  return out;
}

SettleConfig settle_config(std::size_t max_steps, double tol, double noise_std,
                           std::uint64_t seed) {
  SettleConfig cfg;
  cfg.max_steps = max_steps;
  cfg.residual_tol = tol;
  cfg.noise_std = noise_std;
  cfg.rng_seed = seed;
  return cfg;
}

py::dict estimate_to_dict(const GradientEstimate& est) {
  py::dict d;
  d["grads"] = grads_to_arrays(est.grads);
  d["kind"] = est.estimator_kind;
  d["n_points"] = est.n_points;
  d["radius"] = est.radius;
  d["imag_residual"] = est.imag_residual;
  d["imag_ratio"] = est.imag_ratio;
  return d;
}

class PyNet {
 public:
  explicit PyNet(LayeredNet net) : net_(std::move(net)) {}

  static PyNet mlp(std::vector<std::size_t> layers, const std::string& activation,
                   std::uint64_t init_seed, double noise_std) {
    NetworkSpec spec;
    spec.kind = NetworkSpec::Kind::Mlp;
    spec.layer_sizes = std::move(layers);
    spec.activation = activation_from_name(activation);
    spec.noise_std = noise_std;
    return PyNet(LayeredNet::glorot(spec, init_seed));
  }

  static PyNet cnn(std::size_t in_channels, std::size_t in_height, std::size_t in_width,
                   std::vector<std::size_t> conv_channels, std::size_t kernel, std::size_t padding,
                   std::size_t pool, std::vector<std::size_t> fc_sizes, double tau,
                   const std::string& activation, std::uint64_t init_seed) {
    NetworkSpec spec;
    spec.kind = NetworkSpec::Kind::Cnn;
    spec.in_channels = in_channels;
    spec.in_height = in_height;
    spec.in_width = in_width;
    for (std::size_t c : conv_channels)
      spec.conv_layers.push_back({c, kernel, 1, padding, pool, pool});
    spec.fc_sizes = std::move(fc_sizes);
    spec.tau = tau;
    spec.activation = activation_from_name(activation);
    return PyNet(LayeredNet::glorot(spec, init_seed));
  }

  std::vector<py::array> params() const { return grads_to_arrays(net_.param_tensors()); }
  void set_params(const std::vector<py::array_t<double>>& arrays) {
    auto tensors = grads_from_arrays(arrays);
    auto& mine = net_.param_tensors();
    if (tensors.size() != mine.size()) throw std::invalid_argument("wrong number of tensors");
    for (std::size_t p = 0; p < mine.size(); ++p) {
      if (tensors[p].shape != mine[p].shape)
        throw std::invalid_argument("parameter " + std::to_string(p) + " has the wrong shape");
      mine[p] = tensors[p];
    }
  }
  std::vector<std::string> param_names() const { return net_.param_names(); }

  py::dict settle(const py::array_t<double>& x, std::complex<double> beta,
                  const py::array_t<double>& y, std::size_t max_steps, double tol,
                  double noise_std, std::uint64_t seed) const {
    auto res = holoprop::settle(net_, real_from_array(x), beta, real_from_array(y),
                                settle_config(max_steps, tol, noise_std, seed));
    py::dict d;
    std::vector<py::array> layers;
    for (const auto& l : res.state) layers.push_back(complex_to_array(l));
    d["state"] = layers;
    d["converged"] = res.converged;
    d["diverged"] = res.diverged;
    d["steps_used"] = res.steps_used;
    d["residual"] = res.final_residual();
    d["residual_trace"] = res.residual_trace;
    return d;
  }

  py::dict classic_ep(const py::array_t<double>& x, const py::array_t<double>& y, double beta,
                      std::size_t t_free, std::size_t t_nudge, double tol, double noise_std,
                      std::uint64_t seed) const {
    auto est = holoprop::classic_ep(net_, real_from_array(x), real_from_array(y), beta,
                                    settle_config(t_free, tol, noise_std, seed),
                                    settle_config(t_nudge, tol, noise_std, seed));
    return estimate_to_dict(est);
  }

  py::dict hep_estimate(const py::array_t<double>& x, const py::array_t<double>& y, double radius,
                        std::size_t n_points, std::size_t t_free, std::size_t t_nudge, double tol,
                        double noise_std, std::uint64_t seed, bool cold_start) const {
    auto est = holoprop::hep_estimate(net_, real_from_array(x), real_from_array(y),
                                      NudgePath::circle(radius, n_points),
                                      settle_config(t_free, tol, noise_std, seed),
                                      settle_config(t_nudge, tol, noise_std, seed), cold_start);
    return estimate_to_dict(est);
  }

  py::dict online_estimate(const py::array_t<double>& x, const py::array_t<double>& y,
                           double radius, std::size_t t_osc, std::size_t t_plas,
                           std::size_t equilibrate_steps, double noise_std,
                           std::uint64_t seed) const {
    OnlineConfig ocfg;
    ocfg.radius = radius;
    ocfg.t_osc = t_osc;
    ocfg.t_plas = t_plas;
    ocfg.equilibrate_steps = equilibrate_steps;
    auto est = holoprop::online_estimate(net_, real_from_array(x), real_from_array(y), ocfg,
                                         settle_config(t_plas, 0.0, noise_std, seed));
    return estimate_to_dict(est);
  }

  std::vector<py::array> adjoint_gradient(const py::array_t<double>& x,
                                          const py::array_t<double>& y,
                                          std::size_t t_free) const {
    return grads_to_arrays(unrolled_adjoint_gradient(net_, real_from_array(x),
                                                     real_from_array(y), t_free)
                               .grads);
  }

  std::vector<py::array> finite_difference(const py::array_t<double>& x,
                                           const py::array_t<double>& y, double h,
                                           std::size_t max_steps, double tol,
                                           unsigned workers) const {
    return grads_to_arrays(finite_difference_gradient(net_, real_from_array(x),
                                                      real_from_array(y), h,
                                                      settle_config(max_steps, tol, 0.0, 0),
                                                      nullptr, false, workers)
                               .grads);
  }

  py::dict stability_map(const py::array_t<double>& x, const py::array_t<double>& y,
                         double re_min, double re_max, double im_min, double im_max,
                         std::size_t resolution, std::size_t t_steps, unsigned workers) const {
    GridSpec grid{re_min, re_max, im_min, im_max, resolution};
    auto map = holoprop::stability_map(net_, real_from_array(x), real_from_array(y), grid,
                                       t_steps, workers);
    py::dict d;
    d["residuals"] = real_to_array(map.residuals);
    py::array_t<bool> div({static_cast<py::ssize_t>(resolution),
                           static_cast<py::ssize_t>(resolution)});
    for (std::size_t i = 0; i < map.diverged.size(); ++i)
      div.mutable_data()[i] = map.diverged[i] != 0;
    d["diverged"] = div;
    return d;
  }

  const LayeredNet& net() const { return net_; }

 private:
  LayeredNet net_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "equilibrium propagation with complex teaching signals";

  py::register_exception<DivergenceError>(m, "DivergenceError");

  py::class_<PyNet>(m, "Net")
      .def_static("mlp", &PyNet::mlp, py::arg("layers"),
                  py::arg("activation") = "shifted_sigmoid", py::arg("init_seed") = 1,
                  py::arg("noise_std") = 0.0)
      .def_static("cnn", &PyNet::cnn, py::arg("in_channels"), py::arg("in_height"),
                  py::arg("in_width"), py::arg("conv_channels"), py::arg("kernel") = 3,
                  py::arg("padding") = 1, py::arg("pool") = 2, py::arg("fc_sizes"),
                  py::arg("tau") = 1.0, py::arg("activation") = "dsilu",
                  py::arg("init_seed") = 1)
      .def("params", &PyNet::params)
      .def("set_params", &PyNet::set_params)
      .def("param_names", &PyNet::param_names)
      .def("settle", &PyNet::settle, py::arg("x"), py::arg("beta"), py::arg("y"),
           py::arg("max_steps") = 200, py::arg("tol") = 0.0, py::arg("noise_std") = 0.0,
           py::arg("seed") = 0)
      .def("classic_ep", &PyNet::classic_ep, py::arg("x"), py::arg("y"), py::arg("beta"),
           py::arg("t_free") = 200, py::arg("t_nudge") = 200, py::arg("tol") = 1e-10,
           py::arg("noise_std") = 0.0, py::arg("seed") = 0)
      .def("hep_estimate", &PyNet::hep_estimate, py::arg("x"), py::arg("y"),
           py::arg("radius") = 0.1, py::arg("n_points") = 24, py::arg("t_free") = 200,
           py::arg("t_nudge") = 200, py::arg("tol") = 1e-10, py::arg("noise_std") = 0.0,
           py::arg("seed") = 0, py::arg("cold_start") = false)
      .def("online_estimate", &PyNet::online_estimate, py::arg("x"), py::arg("y"),
           py::arg("radius") = 0.4, py::arg("t_osc") = 300, py::arg("t_plas") = 900,
           py::arg("equilibrate_steps") = 0, py::arg("noise_std") = 0.0, py::arg("seed") = 0)
      .def("adjoint_gradient", &PyNet::adjoint_gradient, py::arg("x"), py::arg("y"),
           py::arg("t_free") = 500)
      .def("finite_difference", &PyNet::finite_difference, py::arg("x"), py::arg("y"),
           py::arg("h") = 1e-5, py::arg("max_steps") = 1000, py::arg("tol") = 1e-11,
           py::arg("workers") = 1)
      .def("stability_map", &PyNet::stability_map, py::arg("x"), py::arg("y"),
           py::arg("re_min") = -0.6, py::arg("re_max") = 0.6, py::arg("im_min") = -0.6,
           py::arg("im_max") = 0.6, py::arg("resolution") = 101, py::arg("t_steps") = 200,
           py::arg("workers") = 0);

  m.def(
      "cosine_similarity",
      [](const std::vector<py::array_t<double>>& a, const std::vector<py::array_t<double>>& b) {
        auto rep = cosine_similarity(grads_from_arrays(a), grads_from_arrays(b));
        py::dict d;
        d["total"] = rep.total;
        d["per_layer"] = rep.per_layer;
        d["total_defined"] = rep.total_defined;
        return d;
      },
      py::arg("a"), py::arg("b"));

  m.def(
      "toy_estimates",
      [](double theta, double yv, double radius, std::size_t n_points) {
        ToyModel toy(theta);
        RealTensor x;
        RealTensor y(Shape{1});
        y[0] = yv;
        auto cfg = settle_config(4000, 1e-14, 0.0, 0);
        auto classic = classic_ep(toy, x, y, radius, cfg, cfg);
        auto hep = hep_estimate(toy, x, y, NudgePath::circle(radius, n_points), cfg, cfg);
        py::dict d;
        d["classic"] = classic.grads[0][0];
        d["hep"] = hep.grads[0][0];
        return d;
      },
      py::arg("theta") = 2.0, py::arg("y") = 1.0, py::arg("radius") = 0.5,
      py::arg("n_points") = 2);

  m.def(
      "synth_dataset",
      [](std::size_t n, std::size_t dim, std::size_t classes, std::uint64_t seed) {
        auto ds = synth_dataset(n, dim, classes, seed);
        py::dict d;
        d["images"] = real_to_array(ds.images);
        d["labels"] = ds.labels;
        return d;
      },
      py::arg("n"), py::arg("dim"), py::arg("classes"), py::arg("seed") = 7);

  m.def(
      "load_mnist",
      [](const std::string& dir) {
        auto ds = load_mnist(dir);
        py::dict d;
        d["images"] = real_to_array(ds.images);
        d["labels"] = ds.labels;
        return d;
      },
      py::arg("dir") = "data/mnist");

  m.attr("__version__") = "0.1.0";
}
