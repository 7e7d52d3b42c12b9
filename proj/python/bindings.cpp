#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "gdd/checkpoint.hpp"
#include "gdd/error.hpp"
#include "gdd/train.hpp"

namespace py = pybind11;
using namespace gdd;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Vector to_vector(const Array& a) { return Vector(a.data(), a.data() + a.size()); }

Array to_array(const Vector& v) { return Array(static_cast<py::ssize_t>(v.size()), v.data()); }

Array to_array(const Vector& v, py::ssize_t rows, py::ssize_t cols) {
  Array out({rows, cols});
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

// A square patch may come in flat (n,) or as (side, side).
std::pair<Vector, int> patch_arg(const Array& a) {
  if (a.ndim() == 2) {
    if (a.shape(0) != a.shape(1)) throw InvalidInput("patch must be square");
    return {to_vector(a), static_cast<int>(a.shape(0))};
  }
  if (a.ndim() != 1) throw InvalidInput("patch must be 1-D or 2-D");
  return {to_vector(a), patch_side_of(static_cast<std::size_t>(a.size()))};
}

GrayImage image_from(const Array& a) {
  if (a.ndim() != 2) throw InvalidInput("image must be a 2-D array");
  GrayImage img(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
  img.pixels = to_vector(a);
  return img;
}

Array image_to(const GrayImage& img) { return to_array(img.pixels, img.height, img.width); }

std::vector<PatchPair> batch_from(const std::vector<std::pair<Array, Array>>& pairs) {
  std::vector<PatchPair> batch;
  for (const auto& [noisy, clean] : pairs) batch.push_back({to_vector(noisy), to_vector(clean)});
  return batch;
}

std::vector<GrayImage> images_from(const std::vector<Array>& arrays) {
  std::vector<GrayImage> out;
  for (const Array& a : arrays) out.push_back(image_from(a));
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Graph-based deep denoiser core";

  py::register_exception<InvalidInput>(m, "InvalidInput", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<DegenerateMatrix>(m, "DegenerateMatrix", PyExc_ArithmeticError);

  py::enum_<CgMode>(m, "CgMode").value("analytic", CgMode::analytic).value("learned", CgMode::learned);

  py::class_<Hyper>(m, "Hyper")
      .def(py::init<>())
      .def_readwrite("window_radius", &Hyper::window_radius)
      .def_readwrite("tse_degree", &Hyper::tse_degree)
      .def_readwrite("expansion_point", &Hyper::expansion_point)
      .def_readwrite("cg_depth", &Hyper::cg_depth)
      .def_readwrite("cg_mode", &Hyper::cg_mode)
      .def_readwrite("mu", &Hyper::mu)
      .def_readwrite("diagonal_loading", &Hyper::diagonal_loading)
      .def_readwrite("feature_dim", &Hyper::feature_dim);

  py::class_<MetricInit>(m, "MetricInit")
      .def(py::init<>())
      .def_readwrite("sigma_spatial", &MetricInit::sigma_spatial)
      .def_readwrite("sigma_range", &MetricInit::sigma_range)
      .def_readwrite("gradient_scale", &MetricInit::gradient_scale);

  py::class_<ParamVector>(m, "ParamVector")
      .def_static("initial", &ParamVector::initial, py::arg("hyper") = Hyper{}, py::arg("init") = MetricInit{})
      .def_static("unpack", [](const Array& packed, const Hyper& h) { return ParamVector::unpack(to_vector(packed), h); },
                  py::arg("packed"), py::arg("hyper") = Hyper{})
      .def("pack", [](const ParamVector& p) { return to_array(p.pack()); })
      .def("__len__", &ParamVector::size)
      .def("__eq__", [](const ParamVector& a, const ParamVector& b) { return a == b; })
      .def_readwrite("metric_factor", &ParamVector::metric_factor)
      .def_readwrite("tse_coeffs", &ParamVector::tse_coeffs)
      .def_readwrite("cg_alpha", &ParamVector::cg_alpha)
      .def_readwrite("cg_beta", &ParamVector::cg_beta)
      .def("metric", [](const ParamVector& p, int dim) { return to_array(p.metric(dim).metric(), dim, dim); },
           py::arg("feature_dim") = kDefaultFeatureDim, "M = C^T C as a dense array");

  m.def("extract_features", [](const Array& patch) {
    const auto [v, side] = patch_arg(patch);
    const FeatureField f = extract_features(v, side);
    return to_array(f.features, static_cast<py::ssize_t>(f.size()), f.feature_dim);
  });

  m.def(
      "denoiser_matrix",
      [](const ParamVector& p, const Array& patch, const Hyper& h) {
        const auto [v, side] = patch_arg(patch);
        const DenoiserOperator psi = build_denoiser(p.metric(h.feature_dim), v, side, h);
        const auto n = static_cast<py::ssize_t>(psi.size());
        return to_array(psi.to_dense(), n, n);
      },
      py::arg("params"), py::arg("patch"), py::arg("hyper") = Hyper{}, "Dense Psi for one noisy patch");

  m.def(
      "spectrum",
      [](const ParamVector& p, const Array& patch, const Hyper& h, int iterations) {
        const auto [v, side] = patch_arg(patch);
        const SpectrumEstimate e = estimate_spectrum(build_denoiser(p.metric(h.feature_dim), v, side, h), iterations);
        return std::make_pair(e.lambda_min, e.lambda_max);
      },
      py::arg("params"), py::arg("patch"), py::arg("hyper") = Hyper{}, py::arg("iterations") = 300);

  m.def(
      "forward",
      [](const ParamVector& p, const Array& patch, const Hyper& h) {
        const auto [v, side] = patch_arg(patch);
        const Vector x = forward(p, v, side, h);
        return patch.ndim() == 2 ? to_array(x, side, side) : to_array(x);
      },
      py::arg("params"), py::arg("patch"), py::arg("hyper") = Hyper{});

  m.def(
      "calibrate",
      [](const ParamVector& p, const std::vector<Array>& patches, const Hyper& h) {
        std::vector<Vector> v;
        for (const Array& a : patches) v.push_back(to_vector(a));
        return calibrate(p, v, h);
      },
      py::arg("params"), py::arg("noisy_patches"), py::arg("hyper") = Hyper{});

  m.def(
      "loss",
      [](const ParamVector& p, const std::vector<std::pair<Array, Array>>& batch, const Hyper& h) {
        return loss(p, batch_from(batch), h);
      },
      py::arg("params"), py::arg("batch"), py::arg("hyper") = Hyper{});
  m.def(
      "grad_reverse",
      [](const ParamVector& p, const std::vector<std::pair<Array, Array>>& batch, const Hyper& h) {
        const LossGradient lg = grad_reverse(p, batch_from(batch), h);
        return std::make_pair(lg.loss, to_array(lg.gradient));
      },
      py::arg("params"), py::arg("batch"), py::arg("hyper") = Hyper{});
  m.def(
      "grad_fd",
      [](const ParamVector& p, const std::vector<std::pair<Array, Array>>& batch, const Hyper& h, double step) {
        return to_array(grad_fd(p, batch_from(batch), h, step));
      },
      py::arg("params"), py::arg("batch"), py::arg("hyper") = Hyper{}, py::arg("h_rel") = 1e-5);

  m.def("load_image", [](const std::filesystem::path& p) { return image_to(load_image(p)); });
  m.def("save_image", [](const Array& img, const std::filesystem::path& p) { save_image(image_from(img), p); });
  m.def("add_awgn", [](const Array& img, double sigma, std::uint64_t seed) { return image_to(add_awgn(image_from(img), sigma, seed)); },
        py::arg("image"), py::arg("sigma"), py::arg("seed"));
  m.def("psnr", [](const Array& a, const Array& b) { return psnr(image_from(a), image_from(b)); });
  m.def("make_synthetic_image", [](int w, int h, std::uint64_t seed) { return image_to(make_synthetic_image(w, h, seed)); },
        py::arg("width"), py::arg("height"), py::arg("seed"));
  m.def(
      "partition",
      [](const Array& img, int side) {
        std::vector<Array> out;
        for (const Vector& p : partition(image_from(img), side).patches) out.push_back(to_array(p, side, side));
        return out;
      },
      py::arg("image"), py::arg("patch_side"));
  m.def(
      "denoise_image",
      [](const ParamVector& p, const Array& img, int side, const Hyper& h) {
        return image_to(denoise_image(p, image_from(img), side, h));
      },
      py::arg("params"), py::arg("image"), py::arg("patch_side") = 64, py::arg("hyper") = Hyper{});
  m.def(
      "bilateral_filter_image",
      [](const ParamVector& p, const Array& img, int side, const Hyper& h) {
        return image_to(bilateral_filter_image(p.metric(h.feature_dim), image_from(img), side, h));
      },
      py::arg("params"), py::arg("image"), py::arg("patch_side") = 64, py::arg("hyper") = Hyper{});

  py::class_<TrainOptions>(m, "TrainOptions")
      .def(py::init<>())
      .def_readwrite("hyper", &TrainOptions::hyper)
      .def_readwrite("init", &TrainOptions::init)
      .def_readwrite("epochs", &TrainOptions::epochs)
      .def_readwrite("batch_size", &TrainOptions::batch_size)
      .def_readwrite("learning_rate", &TrainOptions::learning_rate)
      .def_readwrite("seed", &TrainOptions::seed)
      .def_readwrite("patch_side", &TrainOptions::patch_side);

  m.def(
      "train",
      [](const std::vector<Array>& train_images, const std::vector<Array>& val_images, double sigma,
         const TrainOptions& options, std::uint64_t noise_seed, const std::function<void(int, double, double)>& on_epoch) {
        const Dataset data = make_dataset(images_from(train_images), images_from(val_images), sigma,
                                          options.patch_side, noise_seed);
        TrainResult r;
        {
          py::gil_scoped_release release;
          r = train_loop(data, options, [&on_epoch](const EpochRecord& e) {
            if (!on_epoch) return;
            py::gil_scoped_acquire acquire;
            on_epoch(e.epoch, e.train_loss, e.val_psnr);
          });
        }
        py::list history;
        for (const EpochRecord& e : r.history) history.append(py::make_tuple(e.epoch, e.train_loss, e.val_psnr));
        py::dict out;
        out["params"] = r.state.params;
        out["initial_params"] = r.initial_params;
        out["initial_val_psnr"] = r.initial_val_psnr;
        out["history"] = history;
        return out;
      },
      py::arg("train_images"), py::arg("val_images"), py::arg("sigma"), py::arg("options") = TrainOptions{},
      py::arg("noise_seed") = 0, py::arg("on_epoch") = nullptr,
      "Trains on clean images noised at sigma; history rows are (epoch, train_loss, val_psnr).");

  m.def(
      "write_checkpoint",
      [](const ParamVector& p, const Hyper& h, const std::filesystem::path& path) { write_checkpoint({h, p}, path); },
      py::arg("params"), py::arg("hyper"), py::arg("path"));
  m.def("read_checkpoint", [](const std::filesystem::path& path) {
    const Checkpoint cp = read_checkpoint(path);
    return std::make_pair(cp.params, cp.hyper);
  });
}
