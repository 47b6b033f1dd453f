// Python bindings for the core operations: encoding, alignment scoring,
// retrieval metrics, synthetic data, and the gradient audit. Matrices cross
// the boundary as float64 numpy arrays, levelled features as lists of them.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>
#include <string>
#include <vector>

#include "hat/align.hpp"
#include "hat/config.hpp"
#include "hat/data.hpp"
#include "hat/encoders.hpp"
#include "hat/errors.hpp"
#include "hat/eval.hpp"
#include "hat/objective.hpp"
#include "hat/params.hpp"
#include "hat/runner.hpp"

namespace py = pybind11;
using hat::Mat;
using hat::Real;

namespace {

Mat to_mat(const py::array& array) {
  const auto a = py::array_t<double, py::array::c_style | py::array::forcecast>::ensure(array);
  if (!a || a.ndim() != 2) throw hat::InputError("expected a 2-d float array");
  Mat m(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
  const double* src = a.data();
  std::copy(src, src + m.size(), m.data());
  return m;
}

py::array_t<double> to_numpy(const Mat& m) {
  py::array_t<double> a({m.rows(), m.cols()});
  std::copy(m.data(), m.data() + m.size(), a.mutable_data());
  return a;
}

hat::LevelledFeatures to_levels(const py::sequence& seq) {
  hat::LevelledFeatures out;
  for (const auto& item : seq) out.push_back(to_mat(py::cast<py::array>(item)));
  return out;
}

py::list from_levels(const hat::LevelledFeatures& levels) {
  py::list out;
  for (const Mat& m : levels) out.append(to_numpy(m));
  return out;
}

hat::AlignmentConfig make_align(double lambda, const std::string& direction,
                                const py::object& levels, bool per_level_mean, double eps) {
  hat::AlignmentConfig cfg;
  cfg.lambda = lambda;
  cfg.direction = hat::parse_direction(direction);
  if (!levels.is_none()) cfg.levels_enabled = py::cast<std::vector<bool>>(levels);
  cfg.per_level_mean = per_level_mean;
  cfg.eps = eps;
  return cfg;
}

py::dict metrics_dict(const hat::TaskMetrics& m) {
  py::dict d;
  d["r1"] = m.r1;
  d["r5"] = m.r5;
  d["r10"] = m.r10;
  d["mean_rank"] = m.mean_rank;
  d["median_rank"] = m.median_rank;
  return d;
}

py::dict report_dict(const hat::RetrievalReport& report) {
  py::dict d;
  d["i2t"] = metrics_dict(report.i2t);
  d["t2i"] = metrics_dict(report.t2i);
  py::list folds;
  for (const auto& fold : report.folds) {
    py::dict f;
    f["i2t"] = metrics_dict(fold.i2t);
    f["t2i"] = metrics_dict(fold.t2i);
    folds.append(f);
  }
  d["folds"] = folds;
  return d;
}

// Wraps the model together with the configuration that built it, so a
// checkpoint round-trips through Python without outside bookkeeping.
struct PyModel {
  std::unique_ptr<hat::Model> model;
  std::string config_text;

  static PyModel fresh(const std::string& config_text, uint64_t seed) {
    hat::RunConfig cfg = hat::layer_config(config_text, {});
    cfg.seed = seed;
    PyModel out;
    out.model = std::make_unique<hat::Model>(cfg.text, cfg.image, cfg.align_dim, seed);
    out.config_text = hat::serialize_config(cfg);
    return out;
  }

  static PyModel from_checkpoint(const std::string& path) {
    const hat::Checkpoint ck = hat::load_checkpoint(hat::resolve_checkpoint_path(path));
    const hat::RunConfig cfg = hat::layer_config(ck.config_text, {});
    PyModel out;
    out.model = std::make_unique<hat::Model>(cfg.text, cfg.image, cfg.align_dim, ck.params);
    out.config_text = ck.config_text;
    return out;
  }
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "hierarchical cross-modal retrieval core";

  const py::object base = py::register_exception<hat::Error>(m, "Error");
  py::register_exception<hat::ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<hat::InputError>(m, "InputError", base.ptr());
  py::register_exception<hat::ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<hat::ParseError>(m, "ParseError", base.ptr());
  py::register_exception<hat::IoError>(m, "IoError", base.ptr());
  py::register_exception<hat::TapeError>(m, "TapeError", base.ptr());
  py::register_exception<hat::TrainError>(m, "TrainError", base.ptr());

  m.def(
      "similarity",
      [](const py::sequence& image_levels, const py::sequence& text_levels, double lambda,
         const std::string& direction, const py::object& levels, bool per_level_mean,
         double eps) {
        return hat::hierarchical_similarity(
            to_levels(image_levels), to_levels(text_levels),
            make_align(lambda, direction, levels, per_level_mean, eps));
      },
      py::arg("image_levels"), py::arg("text_levels"), py::kw_only(), py::arg("lambda_") = 9.0,
      py::arg("direction") = "ensemble", py::arg("levels") = py::none(),
      py::arg("per_level_mean") = false, py::arg("eps") = 1e-8,
      "Summed stacked-cross-attention similarity of one image/text pair.");

  m.def(
      "score_matrix",
      [](const py::sequence& images, const py::sequence& texts, double lambda,
         const std::string& direction, const py::object& levels, bool per_level_mean,
         double eps) {
        std::vector<hat::LevelledFeatures> imgs, txts;
        for (const auto& item : images) imgs.push_back(to_levels(py::cast<py::sequence>(item)));
        for (const auto& item : texts) txts.push_back(to_levels(py::cast<py::sequence>(item)));
        return to_numpy(hat::score_all_pairs(
            imgs, txts, make_align(lambda, direction, levels, per_level_mean, eps)));
      },
      py::arg("images"), py::arg("texts"), py::kw_only(), py::arg("lambda_") = 9.0,
      py::arg("direction") = "ensemble", py::arg("levels") = py::none(),
      py::arg("per_level_mean") = false, py::arg("eps") = 1e-8,
      "All-pairs similarity matrix, images along rows.");

  m.def("triplet_loss", &hat::triplet_loss, py::arg("s_pos"), py::arg("s_neg_text"),
        py::arg("s_neg_img"), py::arg("margin") = 0.2,
        "Bidirectional hinge ranking loss for one triplet.");

  m.def("recall_at_k", &hat::recall_at_k, py::arg("ranks"), py::arg("k"),
        "Fraction of 1-based ranks that are <= k.");

  m.def(
      "evaluate",
      [](const py::array& scores, int captions_per_image, int num_folds, int fold_size) {
        const Mat s = to_mat(scores);
        const hat::GroundTruth gt = hat::GroundTruth::contiguous(s.rows(), captions_per_image);
        if (num_folds == 1 && fold_size == 0) return report_dict(hat::evaluate(s, gt));
        if (fold_size == 0) fold_size = s.rows() / num_folds;
        return report_dict(hat::folded_eval(s, gt, fold_size, num_folds));
      },
      py::arg("scores"), py::arg("captions_per_image") = 1, py::kw_only(),
      py::arg("num_folds") = 1, py::arg("fold_size") = 0,
      "Recall@K and rank statistics in both retrieval directions.");

  m.def(
      "generate_corpus",
      [](int num_pairs, int vocab_size, int concept_count, int concepts_per_pair,
         int captions_per_image, double noise_level, int sentence_len_min, int sentence_len_max,
         int grid_side, int patch_dim, uint64_t seed) {
        hat::SyntheticSpec spec;
        spec.num_pairs = num_pairs;
        spec.vocab_size = vocab_size;
        spec.concept_count = concept_count;
        spec.concepts_per_pair = concepts_per_pair;
        spec.captions_per_image = captions_per_image;
        spec.noise_level = noise_level;
        spec.sentence_len_min = sentence_len_min;
        spec.sentence_len_max = sentence_len_max;
        spec.grid_side = grid_side;
        spec.patch_dim = patch_dim;
        spec.seed = seed;
        const hat::Corpus corpus = hat::generate_corpus(spec);
        py::dict d;
        py::list images;
        for (const Mat& img : corpus.images) images.append(to_numpy(img));
        d["images"] = images;
        d["captions"] = corpus.captions;
        d["captions_per_image"] = spec.captions_per_image;
        d["manifest"] = hat::serialize_manifest(corpus);
        return d;
      },
      py::kw_only(), py::arg("num_pairs") = 32, py::arg("vocab_size") = 64,
      py::arg("concept_count") = 12, py::arg("concepts_per_pair") = 3,
      py::arg("captions_per_image") = 5, py::arg("noise_level") = 0.0,
      py::arg("sentence_len_min") = 6, py::arg("sentence_len_max") = 10,
      py::arg("grid_side") = 16, py::arg("patch_dim") = 48, py::arg("seed") = 1,
      "Synthetic paired corpus; images are patch grids, captions token lists.");

  m.def(
      "grad_check",
      [](uint64_t seed) {
        const hat::GradCheckReport report = hat::grad_check(seed);
        py::dict d;
        d["max_rel_error"] = report.max_rel_error;
        d["worst"] = report.worst;
        d["rows"] = report.rows.size();
        return d;
      },
      py::arg("seed") = 1, "Finite-difference audit of every parameter group.");

  py::class_<PyModel>(m, "Model")
      .def(py::init([](const std::string& config_text, uint64_t seed) {
             return PyModel::fresh(config_text, seed);
           }),
           py::arg("config_text") = "", py::arg("seed") = 1,
           "Fresh model; config_text uses the run-config key=value format.")
      .def_static("from_checkpoint", &PyModel::from_checkpoint, py::arg("path"),
                  "Load a trained model from model.ckpt or its directory.")
      .def_property_readonly("config_text",
                             [](const PyModel& self) { return self.config_text; })
      .def(
          "encode_image",
          [](const PyModel& self, const py::array& grid) {
            return from_levels(self.model->encode_image(to_mat(grid)));
          },
          py::arg("grid"), "Patch grid (tokens x patch_dim) to per-level features.")
      .def(
          "encode_text",
          [](const PyModel& self, const std::vector<int>& tokens) {
            return from_levels(self.model->encode_text(tokens));
          },
          py::arg("tokens"), "Token ids to per-level features.");
}
