// bindings/python_module.cc

// Copyright 2026  The lidkit authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lid/classifier.h"
#include "lid/common.h"
#include "lid/features.h"
#include "lid/gmm.h"
#include "lid/ivector.h"
#include "lid/pipeline.h"
#include "lid/stats.h"
#include "lid/synth.h"

namespace py = pybind11;

namespace {

lid::FrontEndConfig ConfigByName(const std::string &name, double vtln_warp) {
  lid::FrontEndConfig cfg;
  if (name == "sdc_static") {
    cfg = lid::FrontEndConfig::SdcStatic();
  } else if (name == "mfcc60_static") {
    cfg = lid::FrontEndConfig::Mfcc60Static();
  } else if (name == "hires") {
    cfg = lid::FrontEndConfig::HighRes();
  } else {
    throw lid::Error("unknown front end '" + name +
                     "' (expected sdc_static, mfcc60_static or hires)");
  }
  cfg.vtln_warp = vtln_warp;
  return cfg;
}

lid::SuffStats MakeStats(const lid::Vector &n, const lid::Matrix &f,
                         bool centered) {
  lid::SuffStats stats;
  stats.n = n;
  stats.f = f;
  stats.centered = centered;
  stats.Check();
  return stats;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Core operations of the lidkit language recognizer";

  py::register_exception<lid::Error>(m, "LidError", PyExc_RuntimeError);

  // ---- synthesis ----
  m.def(
      "synth_utterance",
      [](int num_languages, int language_index, double duration_s,
         uint64_t seed, double noise_level, double formant_scale,
         int sample_rate_hz) {
        auto specs = lid::DefaultLanguageSpecs(num_languages, seed, noise_level);
        if (language_index < 0 || language_index >= num_languages)
          throw lid::Error("language_index out of range");
        lid::RenderedUtterance utt = lid::RenderUtterance(
            specs[language_index], duration_s, sample_rate_hz, seed + 1,
            formant_scale);
        return py::make_tuple(utt.samples, utt.labels);
      },
      py::arg("num_languages"), py::arg("language_index"),
      py::arg("duration_s"), py::arg("seed"), py::arg("noise_level") = 0.05,
      py::arg("formant_scale") = 1.0, py::arg("sample_rate_hz") = 8000,
      "Render one synthetic utterance; returns (samples, frame_labels)");

  // ---- front end ----
  m.def(
      "compute_cepstra",
      [](const std::vector<double> &samples, int sample_rate_hz,
         const std::string &front_end, uint64_t seed, double vtln_warp) {
        lid::AudioSegment audio;
        audio.samples = samples;
        audio.sample_rate_hz = sample_rate_hz;
        return lid::ComputeCepstra(audio, ConfigByName(front_end, vtln_warp),
                                   seed)
            .values;
      },
      py::arg("samples"), py::arg("sample_rate_hz") = 8000,
      py::arg("front_end") = "sdc_static", py::arg("seed") = 0,
      py::arg("vtln_warp") = 1.0);

  m.def(
      "compute_sdc",
      [](const lid::Matrix &statics) {
        lid::FeatureMatrix f;
        f.values = statics;
        return lid::ComputeSdc(f, lid::SdcConfig()).values;
      },
      py::arg("static_cepstra"));

  m.def(
      "add_deltas",
      [](const lid::Matrix &statics, int order, int window) {
        lid::FeatureMatrix f;
        f.values = statics;
        return lid::AddDeltas(f, order, window).values;
      },
      py::arg("static_cepstra"), py::arg("order") = 2, py::arg("window") = 2);

  m.def(
      "sliding_cmn",
      [](const lid::Matrix &feats, double window_s) {
        lid::FeatureMatrix f;
        f.values = feats;
        return lid::SlidingCmn(f, window_s).values;
      },
      py::arg("feats"), py::arg("window_s") = 3.0);

  m.def(
      "energy_vad",
      [](const lid::Matrix &feats, double threshold_offset, int context,
         double proportion) {
        lid::FeatureMatrix f;
        f.values = feats;
        lid::VadOptions opts;
        opts.threshold_offset = threshold_offset;
        opts.context = context;
        opts.proportion = proportion;
        lid::VadMask mask = lid::EnergyVad(f, opts);
        return std::vector<int>(mask.begin(), mask.end());
      },
      py::arg("feats"), py::arg("threshold_offset") = 0.0,
      py::arg("context") = 2, py::arg("proportion") = 0.6);

  // ---- GMM ----
  py::class_<lid::DiagGmm>(m, "DiagGmm")
      .def_readonly("weights", &lid::DiagGmm::weights)
      .def_readonly("means", &lid::DiagGmm::means)
      .def_readonly("vars", &lid::DiagGmm::vars)
      .def("log_likelihood",
           py::overload_cast<const lid::Vector &>(
               &lid::DiagGmm::LogLikelihood, py::const_));

  py::class_<lid::FullGmm>(m, "FullGmm")
      .def_property_readonly("weights", &lid::FullGmm::weights)
      .def_property_readonly("means", &lid::FullGmm::means)
      .def("log_likelihood", &lid::FullGmm::LogLikelihood);

  m.def(
      "train_diag_ubm",
      [](const std::vector<lid::Matrix> &data, int num_components,
         int num_iters, uint64_t seed, int jobs) {
        lid::UbmTrainOptions opts;
        opts.num_iters = num_iters;
        opts.seed = seed;
        opts.jobs = jobs;
        return lid::TrainDiagUbm(data, num_components, opts);
      },
      py::arg("data"), py::arg("num_components"), py::arg("num_iters") = 10,
      py::arg("seed") = 0, py::arg("jobs") = 1,
      py::call_guard<py::gil_scoped_release>());

  m.def("diag_to_full", &lid::DiagToFull, py::arg("diag"), py::arg("data"),
        py::arg("jobs") = 1, py::call_guard<py::gil_scoped_release>());

  m.def("tandem_posteriors", &lid::TandemPosteriorMatrix, py::arg("diag"),
        py::arg("full"), py::arg("frames"), py::arg("top_n") = 20,
        py::arg("jobs") = 1, py::call_guard<py::gil_scoped_release>());

  // ---- stats and i-vectors ----
  m.def(
      "accumulate_stats",
      [](const lid::Matrix &posteriors, const lid::Matrix &feats,
         std::optional<lid::Matrix> means) {
        lid::VadMask mask(feats.rows(), 1);
        lid::SuffStats stats = lid::AccumulateStats(
            posteriors, feats, mask, means ? &*means : nullptr);
        return py::make_tuple(stats.n, stats.f);
      },
      py::arg("posteriors"), py::arg("feats"),
      py::arg("center_means") = std::nullopt);

  m.def("prune_posteriors", &lid::PrunePosteriors, py::arg("posteriors"),
        py::arg("min_posterior") = 1e-5);

  py::class_<lid::IvectorExtractor>(m, "IvectorExtractor")
      .def_property_readonly("rank", &lid::IvectorExtractor::Rank)
      .def_property_readonly("num_classes", &lid::IvectorExtractor::NumClasses)
      .def_property_readonly("dim", &lid::IvectorExtractor::Dim)
      .def_readonly("means", &lid::IvectorExtractor::means)
      .def_readonly("vars", &lid::IvectorExtractor::vars);

  m.def(
      "init_extractor",
      [](const lid::Matrix &means, const lid::Matrix &vars,
         const lid::Vector &priors, int rank, uint64_t seed) {
        lid::SupervisedGmm gmm;
        gmm.means = means;
        gmm.vars = vars;
        gmm.priors = priors;
        gmm.Check();
        return lid::InitExtractor(gmm, rank, seed);
      },
      py::arg("means"), py::arg("vars"), py::arg("priors"), py::arg("rank"),
      py::arg("seed") = 0);

  m.def(
      "em_iteration",
      [](lid::IvectorExtractor *ext,
         const std::vector<std::pair<lid::Vector, lid::Matrix>> &stats,
         int jobs) {
        std::vector<lid::SuffStats> all;
        all.reserve(stats.size());
        for (const auto &[n, f] : stats) all.push_back(MakeStats(n, f, true));
        return lid::EmIteration(ext, all, jobs);
      },
      py::arg("extractor"), py::arg("stats"), py::arg("jobs") = 1,
      py::call_guard<py::gil_scoped_release>());

  m.def(
      "extract_ivector",
      [](const lid::IvectorExtractor &ext, const lid::Vector &n,
         const lid::Matrix &f) {
        return lid::ExtractIvector(ext, MakeStats(n, f, true));
      },
      py::arg("extractor"), py::arg("n"), py::arg("f_centered"));

  m.def("read_extractor", &lid::ReadExtractor, py::arg("path"));
  m.def("write_extractor", &lid::WriteExtractor, py::arg("path"),
        py::arg("extractor"));

  // ---- classifier ----
  py::class_<lid::LogRegModel>(m, "LogRegModel")
      .def_readonly("weights", &lid::LogRegModel::weights)
      .def_readonly("labels", &lid::LogRegModel::labels)
      .def("predict",
           py::overload_cast<const lid::Matrix &>(
               &lid::LogRegModel::PredictPosteriors, py::const_),
           py::arg("ivectors"));

  m.def(
      "train_logreg",
      [](const lid::Matrix &ivectors, const std::vector<std::string> &labels,
         double l2_lambda, int max_iters, double tolerance) {
        lid::LogRegTrainOptions opts;
        opts.l2_lambda = l2_lambda;
        opts.max_iters = max_iters;
        opts.tolerance = tolerance;
        return lid::TrainLogReg(ivectors, labels, opts);
      },
      py::arg("ivectors"), py::arg("labels"), py::arg("l2_lambda") = 1e-3,
      py::arg("max_iters") = 500, py::arg("tolerance") = 1e-6,
      py::call_guard<py::gil_scoped_release>());

  m.def(
      "add_language",
      [](const lid::LogRegModel &model, const lid::Matrix &ivectors,
         const std::vector<std::string> &labels, double l2_lambda,
         int max_iters, double tolerance) {
        lid::LogRegTrainOptions opts;
        opts.l2_lambda = l2_lambda;
        opts.max_iters = max_iters;
        opts.tolerance = tolerance;
        return lid::AddLanguage(model, ivectors, labels, opts);
      },
      py::arg("model"), py::arg("ivectors"), py::arg("labels"),
      py::arg("l2_lambda") = 1e-3, py::arg("max_iters") = 500,
      py::arg("tolerance") = 1e-6, py::call_guard<py::gil_scoped_release>());

  // ---- pipeline ----
  m.def("preset_config", &lid::PresetConfig, py::arg("name"),
        py::arg("workdir"));

  m.def(
      "run_stage",
      [](const std::string &stage, const std::string &config_text, int jobs,
         bool force, std::optional<uint64_t> seed) {
        lid::RunConfig cfg = lid::RunConfig::ParseText(config_text);
        lid::RunStage(stage, cfg, jobs, force, seed);
      },
      py::arg("stage"), py::arg("config_text"), py::arg("jobs") = 1,
      py::arg("force") = false, py::arg("seed") = std::nullopt,
      py::call_guard<py::gil_scoped_release>());

  m.def("stage_names", [] { return lid::StageNames(); });
}
