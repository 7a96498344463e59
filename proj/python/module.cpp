// Python bindings for the main library operations: corpus synthesis, the
// flow primitives and losses, metrics, and checkpointed model inference.
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "fsr/config.hpp"
#include "fsr/eval.hpp"
#include "fsr/train.hpp"

namespace py = pybind11;

namespace {

fsr::TensorD to_tensor(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  std::vector<int64_t> shape(a.ndim());
  for (py::ssize_t i = 0; i < a.ndim(); ++i) shape[static_cast<size_t>(i)] = a.shape(i);
  fsr::TensorD t(shape);
  std::copy(a.data(), a.data() + a.size(), t.data.begin());
  return t;
}

py::array_t<double> to_array(const fsr::TensorD& t) {
  std::vector<py::ssize_t> shape(t.shape.begin(), t.shape.end());
  py::array_t<double> a(shape);
  std::copy(t.data.begin(), t.data.end(), a.mutable_data());
  return a;
}

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

/// checkpointed velocity model plus the sampler, for SR inference
struct Model {
  fsr::VelocityField<float> net;
  fsr::FlowVariant variant;
  uint64_t step = 0;

  explicit Model(const std::string& path) {
    const fsr::CheckpointData d = fsr::load_checkpoint(path);
    net.cfg = fsr::detail::net_from_meta(d);
    net.params = fsr::detail::get_blobs<float>(d, "theta");
    variant = fsr::variant_from_checkpoint(d);
    step = d.step;
  }

  py::array_t<double> predict(const Array& lr, int steps, double shift_s, uint64_t seed) const {
    const fsr::TensorF x_lr = to_tensor(lr).cast<float>();
    const fsr::Scheduler grid = fsr::shift_grid(fsr::uniform_grid(steps), shift_s);
    return to_array(fsr::sr_predict(net, variant, x_lr, grid, seed).cast<double>());
  }
};

}  // namespace

PYBIND11_MODULE(_fsr, m) {
  m.doc() = "flow-matching super-resolution core (C++ engine bindings)";

  m.def(
      "make_pair",
      [](uint64_t seed, int size) {
        const fsr::ImagePair p = fsr::make_pair(seed, size, fsr::DegradeConfig{});
        return py::make_tuple(to_array(p.x_hr), to_array(p.x_lr));
      },
      py::arg("seed"), py::arg("size") = 32,
      "procedural texture HR/LR pair as (hr, lr) arrays of shape [1,3,H,W]");

  m.def(
      "interp", [](const Array& hr, const Array& x1, double t) {
        return to_array(fsr::interp(to_tensor(hr), to_tensor(x1), t));
      },
      py::arg("x_hr"), py::arg("x1"), py::arg("t"), "linear path point (1-t)*x_hr + t*x1");
  m.def(
      "velocity_target",
      [](const Array& hr, const Array& x1) {
        return to_array(fsr::velocity_target(to_tensor(hr), to_tensor(x1)));
      },
      py::arg("x_hr"), py::arg("x1"), "constant straight-path velocity x1 - x_hr");
  m.def(
      "consistency_fn",
      [](const Array& x_t, double t, const Array& v) {
        return to_array(fsr::consistency_fn(to_tensor(x_t), t, to_tensor(v)));
      },
      py::arg("x_t"), py::arg("t"), py::arg("v"), "origin prediction x_t - t*v");

  m.def(
      "mse", [](const Array& a, const Array& b) { return fsr::mse_value(to_tensor(a), to_tensor(b)); },
      py::arg("a"), py::arg("b"));
  m.def(
      "perceptual_surrogate",
      [](const Array& a, const Array& b) {
        return fsr::perceptual_surrogate(to_tensor(a), to_tensor(b));
      },
      py::arg("a"), py::arg("b"), "Sobel gradient-difference stand-in for LPIPS");
  m.def(
      "flow_loss",
      [](const Array& x_hat, const Array& x_hr, double lambda_p) {
        return fsr::flow_loss_value(to_tensor(x_hat), to_tensor(x_hr), lambda_p);
      },
      py::arg("x_hat"), py::arg("x_hr"), py::arg("lambda_p") = 2.0);

  m.def(
      "psnr",
      [](const Array& a, const Array& b, bool y) { return fsr::psnr(to_tensor(a), to_tensor(b), y); },
      py::arg("a"), py::arg("b"), py::arg("y_channel") = true);
  m.def(
      "ssim", [](const Array& a, const Array& b) { return fsr::ssim(to_tensor(a), to_tensor(b)); },
      py::arg("a"), py::arg("b"));

  m.def("shift_time", &fsr::shift_time, py::arg("t"), py::arg("s"),
        "timestep shift s*t / (1 + (s-1)*t)");
  m.def(
      "uniform_grid", [](int n) { return fsr::uniform_grid(n).grid; }, py::arg("n"));
  m.def(
      "shifted_grid",
      [](int n, double s) { return fsr::shift_grid(fsr::uniform_grid(n), s).grid; }, py::arg("n"),
      py::arg("s") = 3.0);

  py::class_<Model>(m, "Model", "velocity model loaded from an fsr checkpoint")
      .def(py::init<const std::string&>(), py::arg("path"))
      .def_readonly("step", &Model::step)
      .def("predict", &Model::predict, py::arg("lr"), py::arg("steps") = 4,
           py::arg("shift_s") = 3.0, py::arg("seed") = 0,
           "reverse-ODE super-resolution of an [1,3,H,W] input in [0,1]");

  py::register_exception<fsr::CheckpointError>(m, "CheckpointError");
  py::register_exception<fsr::ConfigError>(m, "ConfigError");
}
