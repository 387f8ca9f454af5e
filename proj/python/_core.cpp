#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "cli.hpp"
#include "gazevit/encoder.hpp"
#include "gazevit/errors.hpp"
#include "gazevit/fovea.hpp"
#include "gazevit/gaze.hpp"
#include "gazevit/policy.hpp"
#include "gazevit/sync.hpp"
#include "gazevit/tasks.hpp"

namespace py = pybind11;
using namespace gazevit;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

ImageBuffer to_image(const Array& a) {
    if (a.ndim() == 2) {
        std::vector<double> data(a.data(), a.data() + a.size());
        return ImageBuffer(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)), 1, std::move(data));
    }
    if (a.ndim() != 3) throw InvalidInput("image must be H x W or H x W x C");
    std::vector<double> data(a.data(), a.data() + a.size());
    return ImageBuffer(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)), static_cast<int>(a.shape(2)),
                       std::move(data));
}

Array from_image(const ImageBuffer& img) {
    Array out({img.height(), img.width(), img.channels()});
    std::copy(img.data().begin(), img.data().end(), out.mutable_data());
    return out;
}

std::optional<GazePoint> to_gaze(const std::optional<std::pair<double, double>>& g) {
    if (!g) return std::nullopt;
    return GazePoint(g->first, g->second);
}

py::tuple from_gaze(const GazePoint& g) { return py::make_tuple(g.x(), g.y()); }

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Foveated tokenization, flow-matching policy, gaze prediction and stream sync.";

    py::register_exception<InvalidInput>(m, "InvalidInput", PyExc_ValueError);
    py::register_exception<DivergenceError>(m, "DivergenceError", PyExc_ArithmeticError);
    py::register_exception<IoError>(m, "IoError", PyExc_OSError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<PolicyStall>(m, "PolicyStall", PyExc_RuntimeError);

    // fovea
    py::enum_<fovea::PatternKind>(m, "PatternKind")
        .value("Foveated", fovea::PatternKind::Foveated)
        .value("Fine", fovea::PatternKind::Fine)
        .value("Coarse", fovea::PatternKind::Coarse);

    py::class_<fovea::PatchSpec>(m, "PatchSpec")
        .def_readonly("x", &fovea::PatchSpec::origin_x)
        .def_readonly("y", &fovea::PatchSpec::origin_y)
        .def_readonly("size", &fovea::PatchSpec::size)
        .def_readonly("level", &fovea::PatchSpec::level)
        .def("__repr__", [](const fovea::PatchSpec& p) {
            std::ostringstream s;
            s << "PatchSpec(level=" << p.level << ", x=" << p.origin_x << ", y=" << p.origin_y << ", size=" << p.size
              << ")";
            return s.str();
        });

    py::class_<fovea::TokenizationPattern>(m, "TokenizationPattern")
        .def_readonly("kind", &fovea::TokenizationPattern::kind)
        .def_readonly("canvas_width", &fovea::TokenizationPattern::canvas_width)
        .def_readonly("canvas_height", &fovea::TokenizationPattern::canvas_height)
        .def_readonly("base_patch", &fovea::TokenizationPattern::base_patch)
        .def_readonly("patches", &fovea::TokenizationPattern::patches)
        .def_property_readonly("token_count", &fovea::TokenizationPattern::token_count)
        .def_property_readonly("token_values", &fovea::TokenizationPattern::token_values)
        .def(py::self == py::self)
        .def("__len__", &fovea::TokenizationPattern::token_count);

    m.def("build_pattern", [](const std::string& kind) { return fovea::build_pattern(fovea::parse_kind(kind)); },
          py::arg("kind"), "Pattern for 'foveated', 'fine' or 'coarse'.");
    m.def("serialize_pattern", &fovea::serialize_pattern);
    m.def("parse_pattern", [](const std::string& text) { return fovea::parse_pattern(text); });
    m.def("coverage_counts", &fovea::coverage_counts);
    m.def(
        "gaze_offset",
        [](std::pair<double, double> g, const fovea::TokenizationPattern& p) {
            const auto o = fovea::gaze_offset(GazePoint(g.first, g.second), p);
            return py::make_tuple(o.x, o.y);
        },
        py::arg("gaze"), py::arg("pattern"));

    py::class_<fovea::TokenizedImage>(m, "TokenizedImage")
        .def_readonly("pattern", &fovea::TokenizedImage::pattern)
        .def_readwrite("tokens", &fovea::TokenizedImage::tokens)
        .def_property_readonly("gaze", [](const fovea::TokenizedImage& t) -> py::object {
            if (!t.gaze) return py::none();
            return from_gaze(*t.gaze);
        });

    m.def(
        "tokenize",
        [](const Array& image, const fovea::TokenizationPattern& pattern,
           std::optional<std::pair<double, double>> gaze) {
            return fovea::tokenize(fovea::fit_to_canvas(to_image(image), pattern), pattern, to_gaze(gaze));
        },
        py::arg("image"), py::arg("pattern"), py::arg("gaze") = py::none(),
        "Tokenize an H x W x 3 float image in [0,1]; resized to the canvas if needed.");
    m.def("assemble", [](const fovea::TokenizedImage& t) { return from_image(fovea::assemble(t)); });
    m.def("toy_images", [](int n, std::uint64_t seed) {
        py::list out;
        for (const auto& img : tasks::toy_images(n, seed)) out.append(from_image(img));
        return out;
    });

    // encoder
    m.def(
        "count_flops",
        [](const std::string& kind, const std::string& preset, long batch) {
            const auto k = fovea::parse_kind(kind);
            encoder::EncoderConfig cfg;
            if (preset == "vit-b") cfg = encoder::EncoderConfig::vit_b(k);
            else if (preset == "desk") cfg = encoder::EncoderConfig::desk(k);
            else throw InvalidInput("preset must be 'vit-b' or 'desk'");
            const auto r = encoder::count_flops(cfg, cfg.n_tokens, cfg.embed_input, batch);
            py::dict d;
            d["tokens"] = cfg.n_tokens;
            d["patch_embed_macs"] = r.patch_embed_macs;
            d["attention_macs"] = r.attention_macs;
            d["mlp_macs"] = r.mlp_macs;
            d["total_macs"] = r.total_macs;
            d["gflops"] = r.gflops;
            return d;
        },
        py::arg("kind"), py::arg("preset") = "vit-b", py::arg("batch") = 64);
    m.def(
        "mae_mask",
        [](int n, double ratio, std::uint64_t seed) {
            const auto p = encoder::mae_mask(n, ratio, seed);
            return py::make_tuple(p.visible, p.masked);
        },
        py::arg("n"), py::arg("mask_ratio"), py::arg("seed"), "Returns (visible, masked) index lists.");

    // policy
    m.def("flow_interpolate", &policy::flow_interpolate, py::arg("z0"), py::arg("actions"), py::arg("t"));
    m.def(
        "train_mixture",
        [](int steps, int per_class, int eval_samples, std::uint64_t seed) {
            const auto task = tasks::MixtureTask::standard();
            nn::Rng rng(seed);
            const auto data = task.dataset(per_class, rng);
            auto cfg = task.policy_config(seed);
            cfg.steps = steps;
            policy::FlowPolicy pol(cfg);
            std::vector<double> losses;
            {
                py::gil_scoped_release release;
                losses = policy::train_policy(pol, data).losses;
            }
            py::dict out;
            out["losses"] = losses;
            py::list classes;
            nn::Rng srng(seed + 1);
            for (int k = 0; k < static_cast<int>(task.classes.size()); ++k) {
                std::vector<policy::Observation> obs(static_cast<std::size_t>(eval_samples),
                                                     pol.encode(nullptr, task.one_hot(k)));
                const auto chunks = policy::euler_sample_batch(pol, obs, cfg.flow_steps, srng);
                Mat s(static_cast<Eigen::Index>(chunks.size()), 2);
                for (std::size_t i = 0; i < chunks.size(); ++i)
                    s.row(static_cast<Eigen::Index>(i)) = chunks[i].actions.row(0);
                py::dict c;
                c["samples"] = s;
                c["target_mean"] = Mat(task.classes[static_cast<std::size_t>(k)].mean);
                c["target_cov"] = task.classes[static_cast<std::size_t>(k)].cov;
                classes.append(c);
            }
            out["classes"] = classes;
            return out;
        },
        py::arg("steps") = 2000, py::arg("per_class") = 2000, py::arg("eval_samples") = 1000, py::arg("seed") = 0,
        "Train the flow policy on the conditional 2-D mixture and draw samples per class.");

    // gaze
    m.def(
        "spatial_softmax",
        [](const Mat& values, double temperature) {
            return from_gaze(gaze::spatial_softmax(gaze::Heatmap{values}, temperature));
        },
        py::arg("heatmap"), py::arg("temperature") = 1.0);
    m.def(
        "inside_fovea",
        [](std::pair<double, double> fixation, std::pair<double, double> point) {
            return gaze::inside_fovea({fixation.first, fixation.second}, {point.first, point.second});
        },
        py::arg("fixation"), py::arg("point"));

    // sync
    m.def(
        "align_gaze",
        [](int n_frames, double fps, const std::vector<std::tuple<long, double, double, double, double>>& samples) {
            const auto frames = sync::make_frames(n_frames, fps);
            std::vector<sync::GazeSample> s;
            for (const auto& [id, lx, ly, rx, ry] : samples) s.push_back({id, GazePoint(lx, ly), GazePoint(rx, ry), 0.0});
            py::list out;
            for (const auto& a : sync::align_gaze(frames, s))
                out.append(py::make_tuple(a.frame_id, from_gaze(a.left), from_gaze(a.right),
                                          a.provenance == sync::Provenance::Measured));
            return out;
        },
        py::arg("n_frames"), py::arg("fps"), py::arg("samples"),
        "samples: (frame_id, left_x, left_y, right_x, right_y). Returns (frame_id, left, right, measured) per frame.");
    m.def(
        "sync_demo",
        [](int n_frames, double fps, double drop, double base_delay, const std::string& jitter, double jitter_scale,
           std::uint64_t seed) {
            const auto frames = sync::make_frames(n_frames, fps);
            const auto truth = sync::SinusoidGaze{}.function();
            sync::LatencyModel lat;
            lat.drop_probability = drop;
            lat.base_delay = base_delay;
            lat.jitter = sync::parse_jitter(jitter);
            lat.jitter_scale = jitter_scale;
            const auto samples = sync::simulate_stream(frames, truth, lat, seed);
            const auto e = sync::alignment_error(frames, sync::align_gaze(frames, samples), truth);
            py::dict d;
            d["samples"] = samples.size();
            d["max_error"] = e.max_error;
            d["mean_error"] = e.mean_error;
            d["max_hold_error"] = e.max_hold_error;
            d["max_gap"] = e.max_gap;
            return d;
        },
        py::arg("n_frames") = 100, py::arg("fps") = 25.0, py::arg("drop") = 0.5, py::arg("base_delay") = 0.0,
        py::arg("jitter") = "none", py::arg("jitter_scale") = 0.0, py::arg("seed") = 0,
        "Simulate a 0.5 Hz sinusoidal gaze stream, align it and report the error.");

    // cli
    m.def(
        "run_cli",
        [](const std::vector<std::string>& args) {
            std::ostringstream out, err;
            int code;
            {
                py::gil_scoped_release release;
                code = cli::run_cli(args, out, err);
            }
            return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"), "Run one CLI verb in-process; returns (exit_code, stdout, stderr).");
}
