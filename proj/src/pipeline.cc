// src/pipeline.cc

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

#include "lid/pipeline.h"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "lid/classifier.h"
#include "lid/common.h"
#include "lid/eval.h"
#include "lid/features.h"
#include "lid/gmm.h"
#include "lid/io.h"
#include "lid/ivector.h"
#include "lid/nnet.h"
#include "lid/stats.h"
#include "lid/synth.h"

namespace lid {

namespace fs = std::filesystem;

namespace {

std::string Trim(const std::string &s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string ReadTextFile(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path, 0);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void WriteTextFile(const std::string &path, const std::string &text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing", 0);
  out << text;
  if (!out) throw IoError("failed writing " + path, 0);
}

std::string HashHex(uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

uint64_t UttSeed(uint64_t base_seed, const std::string &utt_id) {
  uint64_t h = HashBytes(utt_id.data(), utt_id.size());
  return h ^ (base_seed * 0x9e3779b97f4a7c15ull + 0x100000001b3ull);
}

}  // namespace

// ---------------------------------------------------------------------------
// RunConfig

RunConfig RunConfig::Parse(const std::string &path) {
  return ParseText(ReadTextFile(path));
}

RunConfig RunConfig::ParseText(const std::string &text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    lineno++;
    std::size_t cut = line.find_first_of("#;");
    if (cut != std::string::npos) line = line.substr(0, cut);
    line = Trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        LID_ERR << "config line " << lineno << ": unterminated section header";
      section = Trim(line.substr(1, line.size() - 2));
      if (section.empty())
        LID_ERR << "config line " << lineno << ": empty section name";
      cfg.sections_[section];
      continue;
    }
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      LID_ERR << "config line " << lineno << ": expected key = value";
    if (section.empty())
      LID_ERR << "config line " << lineno << ": key outside any [section]";
    std::string key = Trim(line.substr(0, eq));
    std::string value = Trim(line.substr(eq + 1));
    if (key.empty()) LID_ERR << "config line " << lineno << ": empty key";
    cfg.sections_[section][key] = value;
  }
  return cfg;
}

bool RunConfig::Has(const std::string &section, const std::string &key) const {
  auto sit = sections_.find(section);
  return sit != sections_.end() && sit->second.count(key) > 0;
}

std::string RunConfig::Get(const std::string &section, const std::string &key,
                           const std::string &fallback) const {
  auto sit = sections_.find(section);
  if (sit == sections_.end()) return fallback;
  auto kit = sit->second.find(key);
  return kit == sit->second.end() ? fallback : kit->second;
}

std::string RunConfig::GetRequired(const std::string &section,
                                   const std::string &key) const {
  if (!Has(section, key))
    LID_ERR << "config is missing required key " << section << "." << key;
  return Get(section, key, "");
}

int RunConfig::GetInt(const std::string &section, const std::string &key,
                      int fallback) const {
  if (!Has(section, key)) return fallback;
  const std::string v = Get(section, key, "");
  try {
    std::size_t pos = 0;
    int out = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception &) {
    LID_ERR << section << "." << key << " = '" << v << "' is not an integer";
  }
}

double RunConfig::GetDouble(const std::string &section, const std::string &key,
                            double fallback) const {
  if (!Has(section, key)) return fallback;
  const std::string v = Get(section, key, "");
  try {
    std::size_t pos = 0;
    double out = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception &) {
    LID_ERR << section << "." << key << " = '" << v << "' is not a number";
  }
}

bool RunConfig::GetOnOff(const std::string &section, const std::string &key,
                         bool fallback) const {
  if (!Has(section, key)) return fallback;
  std::string v = Get(section, key, "");
  std::transform(v.begin(), v.end(), v.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (v == "on" || v == "true" || v == "yes" || v == "1") return true;
  if (v == "off" || v == "false" || v == "no" || v == "0") return false;
  LID_ERR << section << "." << key << " = '" << v << "' is not on/off";
}

std::vector<double> RunConfig::GetDoubleList(
    const std::string &section, const std::string &key,
    const std::vector<double> &fallback) const {
  if (!Has(section, key)) return fallback;
  const std::string v = Get(section, key, "");
  std::vector<double> out;
  std::istringstream is(v);
  std::string item;
  while (std::getline(is, item, ',')) {
    item = Trim(item);
    if (item.empty()) continue;
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception &) {
      LID_ERR << section << "." << key << ": '" << item << "' is not a number";
    }
  }
  if (out.empty()) LID_ERR << section << "." << key << " is an empty list";
  return out;
}

void RunConfig::Set(const std::string &section, const std::string &key,
                    const std::string &value) {
  sections_[section][key] = value;
}

std::string RunConfig::Canonical() const {
  std::ostringstream out;
  for (const auto &[section, kv] : sections_)
    for (const auto &[key, value] : kv)
      out << section << "." << key << "=" << value << "\n";
  return out.str();
}

// ---------------------------------------------------------------------------
// Presets

std::string PresetConfig(const std::string &name, const std::string &workdir) {
  std::string source, feature_type, vtln;
  if (name == "a") {
    source = "gmm";
    feature_type = "sdc";
    vtln = "on";
  } else if (name == "b") {
    source = "dnn";
    feature_type = "sdc";
    vtln = "on";
  } else if (name == "c") {
    source = "dnn";
    feature_type = "sdc";
    vtln = "off";
  } else if (name == "d") {
    source = "dnn";
    feature_type = "mfcc60";
    vtln = "off";
  } else {
    LID_ERR << "unknown preset '" << name << "' (expected a, b, c or d)";
  }
  std::ostringstream out;
  out << "[paths]\n"
      << "workdir = " << workdir << "\n"
      << "\n"
      << "[pipeline]\n"
      << "seed = 42\n"
      << "posterior_source = " << source << "\n"
      << "feature_type = " << feature_type << "\n"
      << "vtln = " << vtln << "\n"
      << "\n"
      << "[corpus]\n"
      << "num_languages = 5\n"
      << "languages_used = 5\n"
      << "train_per_language = 200\n"
      << "test_per_language = 100\n"
      << "durations = 3,10,30\n"
      << "noise_level = 0.05\n"
      << "warp_jitter = 0.08\n"
      << "sample_rate_hz = 8000\n"
      << "\n"
      << "[features]\n"
      << "cmn_window_s = 3.0\n"
      << "hires_cmn_window_s = 6.0\n"
      << "delta_window = 2\n"
      << "vad_threshold_offset = 0.0\n"
      << "vad_context = 2\n"
      << "vad_proportion = 0.6\n"
      << "vtln_train_utts = 200\n"
      << "vtln_gmm_size = 64\n"
      << "vtln_gmm_iters = 4\n"
      << "\n"
      << "[ubm]\n"
      << "num_components = 64\n"
      << "stage1_utts = 250\n"
      << "stage1_iters = 6\n"
      << "stage2_iters = 4\n"
      << "top_n = 20\n"
      << "\n"
      << "[nnet]\n"
      << "hidden_dim = 256\n"
      << "pnorm_group_size = 8\n"
      << "pnorm_p = 2\n"
      << "num_classes = 64\n"
      << "epochs = 6\n"
      << "minibatch = 128\n"
      << "initial_lr = 0.0015\n"
      << "final_lr = 0.00015\n"
      << "train_utts = 0\n"
      << "\n"
      << "[ivector]\n"
      << "rank = 50\n"
      << "num_iters = 5\n"
      << "min_posterior = 1e-5\n"
      << "anchor_utts = 500\n"
      << "\n"
      << "[classifier]\n"
      << "l2_lambda = 0.001\n"
      << "max_iters = 500\n"
      << "tolerance = 1e-6\n";
  return out.str();
}

const std::vector<std::string> &StageNames() {
  static const std::vector<std::string> names = {
      "synth-corpus",    "features",         "train-ubm",
      "train-dnn",       "train-ivector",    "extract-ivectors",
      "train-classifier", "score",           "evaluate"};
  return names;
}

// ---------------------------------------------------------------------------
// Stage context and artifact layout

namespace {

struct StageContext {
  RunConfig cfg;
  fs::path workdir;
  int jobs = 1;
  bool force = false;
  uint64_t seed = 0;

  std::string TrainManifest() const {
    return cfg.Get("paths", "train_manifest", (workdir / "train.tsv").string());
  }
  std::string TestManifest() const {
    return cfg.Get("paths", "test_manifest", (workdir / "test.tsv").string());
  }
  static std::string ExtraVariant(const std::string &manifest) {
    fs::path p(manifest);
    fs::path stem = p.stem();
    return (p.parent_path() / (stem.string() + "_extra" + p.extension().string()))
        .string();
  }
  std::string CorpusDir() const { return (workdir / "corpus").string(); }
  std::string FeatsDir() const { return (workdir / "feats").string(); }
  std::string StatsDir() const { return (workdir / "stats").string(); }
  std::string StatsFeatPath(const std::string &utt) const {
    return (fs::path(FeatsDir()) / (utt + ".stats.fvm")).string();
  }
  std::string HiresFeatPath(const std::string &utt) const {
    return (fs::path(FeatsDir()) / (utt + ".hires.fvm")).string();
  }
  std::string VadPath(const std::string &utt) const {
    return (fs::path(FeatsDir()) / (utt + ".vad")).string();
  }
  std::string StatsPath(const std::string &utt) const {
    return (fs::path(StatsDir()) / (utt + ".stt")).string();
  }
  std::string WarpsPath() const { return (workdir / "warps.tsv").string(); }
  std::string WarpGmmPath() const { return (workdir / "warp_gmm.mdl").string(); }
  std::string UbmPath() const { return (workdir / "ubm.mdl").string(); }
  std::string DnnPath() const { return (workdir / "dnn.mdl").string(); }
  std::string ExtractorPath() const { return (workdir / "extractor.mdl").string(); }
  std::string IvectorsPath(const std::string &split) const {
    return (workdir / ("ivectors_" + split + ".fvm")).string();
  }
  std::string IdsPath(const std::string &split) const {
    return (workdir / ("ivectors_" + split + ".ids")).string();
  }
  std::string ClassifierPath() const { return (workdir / "classifier.mdl").string(); }
  std::string ScoresPath() const { return (workdir / "scores.tsv").string(); }
  std::string ReportPath() const { return (workdir / "report.txt").string(); }
  std::string ReportTsvPath() const { return (workdir / "report.tsv").string(); }
  std::string MarkerPath(const std::string &stage) const {
    return (workdir / (".done-" + stage)).string();
  }

  bool UseDnn() const {
    const std::string s = cfg.Get("pipeline", "posterior_source", "gmm");
    if (s != "gmm" && s != "dnn")
      LID_ERR << "pipeline.posterior_source must be gmm or dnn, got '" << s << "'";
    return s == "dnn";
  }
  bool UseSdc() const {
    const std::string s = cfg.Get("pipeline", "feature_type", "sdc");
    if (s != "sdc" && s != "mfcc60")
      LID_ERR << "pipeline.feature_type must be sdc or mfcc60, got '" << s << "'";
    return s == "sdc";
  }
  bool VtlnOn() const { return cfg.GetOnOff("pipeline", "vtln", true); }

  FrontEndConfig StaticConfig() const {
    return UseSdc() ? FrontEndConfig::SdcStatic() : FrontEndConfig::Mfcc60Static();
  }
  VadOptions Vad() const {
    VadOptions opts;
    opts.threshold_offset = cfg.GetDouble("features", "vad_threshold_offset", 0.0);
    opts.context = cfg.GetInt("features", "vad_context", 2);
    opts.proportion = cfg.GetDouble("features", "vad_proportion", 0.6);
    return opts;
  }
};

// Three-way state of a stage marker against the current inputs.
enum class MarkerState { kMissing, kMatch, kMismatch };

struct StageInputs {
  uint64_t config_hash = 0;
  std::vector<std::pair<std::string, uint64_t>> files;  // path, content hash
};

void RequireInput(const std::string &path, const std::string &producer) {
  if (!fs::exists(path))
    LID_ERR << "required input " << path << " is missing; run the '"
            << producer << "' stage first";
}

// Keys whose values feed a stage's computation; anything else can change
// without invalidating its outputs.
std::string StageConfigText(const StageContext &ctx, const std::string &stage) {
  const RunConfig &cfg = ctx.cfg;
  std::vector<std::string> sections;
  std::vector<std::pair<std::string, std::string>> keys;
  keys.emplace_back("pipeline", "seed");
  if (stage == "synth-corpus") {
    sections = {"corpus"};
  } else if (stage == "features") {
    sections = {"features"};
    keys.emplace_back("pipeline", "feature_type");
    keys.emplace_back("pipeline", "vtln");
  } else if (stage == "train-ubm") {
    sections = {"ubm"};
  } else if (stage == "train-dnn") {
    sections = {"nnet"};
  } else if (stage == "train-ivector" || stage == "extract-ivectors") {
    sections = {"ivector"};
    keys.emplace_back("pipeline", "posterior_source");
    keys.emplace_back("ubm", "top_n");
  } else if (stage == "train-classifier") {
    sections = {"classifier"};
  }
  std::ostringstream out;
  out << "stage=" << stage << "\n";
  const std::string canonical = cfg.Canonical();
  for (const std::string &sec : sections) {
    std::istringstream canon(canonical);
    std::string line;
    while (std::getline(canon, line))
      if (line.rfind(sec + ".", 0) == 0) out << line << "\n";
  }
  for (const auto &[sec, key] : keys)
    if (cfg.Has(sec, key)) out << sec << "." << key << "=" << cfg.Get(sec, key, "") << "\n";
  return out.str();
}

uint64_t StageConfigHash(const StageContext &ctx, const std::string &stage) {
  const std::string text = StageConfigText(ctx, stage);
  return HashBytes(text.data(), text.size());
}

StageInputs CollectInputs(const StageContext &ctx, const std::string &stage) {
  StageInputs in;
  in.config_hash = StageConfigHash(ctx, stage);
  std::vector<std::pair<std::string, std::string>> files;  // path, producer
  const std::string train = ctx.TrainManifest();
  const std::string test = ctx.TestManifest();
  if (stage == "features") {
    files = {{train, "synth-corpus"}, {test, "synth-corpus"}};
    for (const std::string &extra :
         {StageContext::ExtraVariant(train), StageContext::ExtraVariant(test)})
      if (fs::exists(extra)) files.emplace_back(extra, "synth-corpus");
  } else if (stage == "train-ubm" || stage == "train-dnn") {
    files = {{train, "synth-corpus"}, {ctx.MarkerPath("features"), "features"}};
  } else if (stage == "train-ivector") {
    files = {{train, "synth-corpus"}, {ctx.MarkerPath("features"), "features"}};
    if (ctx.UseDnn())
      files.emplace_back(ctx.DnnPath(), "train-dnn");
    else
      files.emplace_back(ctx.UbmPath(), "train-ubm");
  } else if (stage == "extract-ivectors") {
    files = {{train, "synth-corpus"},
             {test, "synth-corpus"},
             {ctx.MarkerPath("features"), "features"},
             {ctx.ExtractorPath(), "train-ivector"}};
    if (ctx.UseDnn())
      files.emplace_back(ctx.DnnPath(), "train-dnn");
    else
      files.emplace_back(ctx.UbmPath(), "train-ubm");
  } else if (stage == "train-classifier") {
    files = {{train, "synth-corpus"},
             {ctx.IvectorsPath("train"), "extract-ivectors"},
             {ctx.IdsPath("train"), "extract-ivectors"}};
  } else if (stage == "score") {
    files = {{test, "synth-corpus"},
             {ctx.IvectorsPath("test"), "extract-ivectors"},
             {ctx.IdsPath("test"), "extract-ivectors"},
             {ctx.ClassifierPath(), "train-classifier"}};
  } else if (stage == "evaluate") {
    files = {{ctx.ScoresPath(), "score"}};
  }
  for (const auto &[path, producer] : files) {
    RequireInput(path, producer);
    in.files.emplace_back(path, HashFile(path));
  }
  return in;
}

std::vector<std::string> StageOutputs(const StageContext &ctx,
                                      const std::string &stage) {
  if (stage == "synth-corpus")
    return {ctx.TrainManifest(), ctx.TestManifest()};
  if (stage == "features") return {};  // per-utterance files, checked lazily
  if (stage == "train-ubm") return {ctx.UbmPath()};
  if (stage == "train-dnn") return {ctx.DnnPath()};
  if (stage == "train-ivector") return {ctx.ExtractorPath()};
  if (stage == "extract-ivectors")
    return {ctx.IvectorsPath("train"), ctx.IdsPath("train"),
            ctx.IvectorsPath("test"), ctx.IdsPath("test")};
  if (stage == "train-classifier") return {ctx.ClassifierPath()};
  if (stage == "score") return {ctx.ScoresPath()};
  if (stage == "evaluate") return {ctx.ReportPath(), ctx.ReportTsvPath()};
  return {};
}

MarkerState CheckMarker(const StageContext &ctx, const std::string &stage,
                        const StageInputs &inputs) {
  const std::string path = ctx.MarkerPath(stage);
  if (!fs::exists(path)) return MarkerState::kMissing;
  for (const std::string &out : StageOutputs(ctx, stage))
    if (!fs::exists(out)) return MarkerState::kMissing;
  std::istringstream in(ReadTextFile(path));
  std::string line;
  std::map<std::string, std::string> recorded;
  std::string config;
  while (std::getline(in, line)) {
    if (line.rfind("config=", 0) == 0) {
      config = line.substr(7);
    } else if (line.rfind("input\t", 0) == 0) {
      std::size_t tab = line.find('\t', 6);
      if (tab == std::string::npos) return MarkerState::kMismatch;
      recorded[line.substr(tab + 1)] = line.substr(6, tab - 6);
    }
  }
  if (config != HashHex(inputs.config_hash)) return MarkerState::kMismatch;
  if (recorded.size() != inputs.files.size()) return MarkerState::kMismatch;
  for (const auto &[file, hash] : inputs.files) {
    auto it = recorded.find(file);
    if (it == recorded.end() || it->second != HashHex(hash))
      return MarkerState::kMismatch;
  }
  return MarkerState::kMatch;
}

void WriteMarker(const StageContext &ctx, const std::string &stage,
                 const StageInputs &inputs) {
  std::ostringstream out;
  out << "stage=" << stage << "\n";
  out << "config=" << HashHex(inputs.config_hash) << "\n";
  for (const auto &[file, hash] : inputs.files)
    out << "input\t" << HashHex(hash) << "\t" << file << "\n";
  WriteTextFile(ctx.MarkerPath(stage), out.str());
}

// ---------------------------------------------------------------------------
// Shared loading helpers

std::vector<ManifestRow> AllRows(const StageContext &ctx, bool with_extra) {
  std::vector<ManifestRow> rows;
  auto append = [&rows](const std::string &path) {
    if (!fs::exists(path)) return;
    Manifest m = ReadManifest(path);
    rows.insert(rows.end(), m.rows.begin(), m.rows.end());
  };
  append(ctx.TrainManifest());
  append(ctx.TestManifest());
  if (with_extra) {
    append(StageContext::ExtraVariant(ctx.TrainManifest()));
    append(StageContext::ExtraVariant(ctx.TestManifest()));
  }
  std::set<std::string> seen;
  for (const auto &row : rows)
    if (!seen.insert(row.utt_id).second)
      LID_ERR << "utterance id " << row.utt_id << " appears in more than one manifest";
  return rows;
}

std::vector<Matrix> LoadStatsFeats(const StageContext &ctx,
                                   const std::vector<ManifestRow> &rows) {
  std::vector<Matrix> feats(rows.size());
  ParallelFor(static_cast<int>(rows.size()), ctx.jobs, [&](int i) {
    const std::string path = ctx.StatsFeatPath(rows[i].utt_id);
    RequireInput(path, "features");
    feats[i] = ReadMatrix(path);
  });
  return feats;
}

std::string LabelsPathFor(const ManifestRow &row) {
  fs::path audio(row.path);
  return (audio.parent_path().parent_path() / "labels" /
          (row.utt_id + ".labels"))
      .string();
}

struct PosteriorModels {
  bool use_dnn = false;
  DiagGmm diag;
  FullGmm full;
  int top_n = 20;
  TddnnModel dnn;
};

PosteriorModels LoadPosteriorModels(const StageContext &ctx) {
  PosteriorModels models;
  models.use_dnn = ctx.UseDnn();
  models.top_n = ctx.cfg.GetInt("ubm", "top_n", 20);
  if (models.use_dnn) {
    RequireInput(ctx.DnnPath(), "train-dnn");
    models.dnn = ReadTddnn(ctx.DnnPath());
  } else {
    RequireInput(ctx.UbmPath(), "train-ubm");
    ReadGmms(ctx.UbmPath(), &models.diag, &models.full);
  }
  return models;
}

// Class posteriors for the speech frames of one utterance, aligned with the
// rows of its stats-stream feature file.
Matrix SpeechPosteriors(const StageContext &ctx, const PosteriorModels &models,
                        const ManifestRow &row, const Matrix &stats_feats,
                        double min_posterior) {
  Matrix post;
  if (models.use_dnn) {
    const std::string hires_path = ctx.HiresFeatPath(row.utt_id);
    const std::string vad_path = ctx.VadPath(row.utt_id);
    RequireInput(hires_path, "features");
    RequireInput(vad_path, "features");
    Matrix hires = ReadMatrix(hires_path);
    std::vector<int> vad_ints = ReadLabels(vad_path);
    VadMask vad(vad_ints.begin(), vad_ints.end());
    if (static_cast<int>(vad.size()) != hires.rows())
      LID_ERR << row.utt_id << ": VAD mask has " << vad.size()
              << " frames but the high-resolution stream has " << hires.rows();
    post = SelectRows(models.dnn.Forward(hires), vad);
  } else {
    post = TandemPosteriorMatrix(models.diag, models.full, stats_feats,
                                 models.top_n);
  }
  if (post.rows() != stats_feats.rows())
    LID_ERR << row.utt_id << ": " << post.rows() << " posterior rows for "
            << stats_feats.rows() << " stats-stream frames";
  return PrunePosteriors(post, min_posterior);
}

SuffStats UttStats(const StageContext &ctx, const PosteriorModels &models,
                   const ManifestRow &row, const Matrix &anchor_means,
                   double min_posterior) {
  const std::string path = ctx.StatsFeatPath(row.utt_id);
  RequireInput(path, "features");
  Matrix feats = ReadMatrix(path);
  Matrix post = SpeechPosteriors(ctx, models, row, feats, min_posterior);
  VadMask ones(feats.rows(), 1);
  return AccumulateStats(post, feats, ones, &anchor_means);
}

// Computes (or reuses) the cached centered stats of every row, in row order.
std::vector<SuffStats> EnsureStats(const StageContext &ctx,
                                   const PosteriorModels &models,
                                   const std::vector<ManifestRow> &rows,
                                   const Matrix &anchor_means,
                                   double min_posterior, bool overwrite) {
  fs::create_directories(ctx.StatsDir());
  std::vector<SuffStats> stats(rows.size());
  ParallelFor(static_cast<int>(rows.size()), ctx.jobs, [&](int i) {
    const std::string path = ctx.StatsPath(rows[i].utt_id);
    if (!overwrite && fs::exists(path)) {
      stats[i] = ReadStats(path);
      return;
    }
    stats[i] = UttStats(ctx, models, rows[i], anchor_means, min_posterior);
    WriteStats(path, stats[i]);
  });
  return stats;
}

std::vector<std::string> ReadIds(const std::string &path) {
  std::istringstream in(ReadTextFile(path));
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    line = Trim(line);
    if (!line.empty()) ids.push_back(line);
  }
  return ids;
}

void WriteIds(const std::string &path, const std::vector<ManifestRow> &rows) {
  std::ostringstream out;
  for (const auto &row : rows) out << row.utt_id << "\n";
  WriteTextFile(path, out.str());
}

// ---------------------------------------------------------------------------
// Stages

std::vector<int> SpreadCounts(int total, int parts) {
  std::vector<int> out(parts, total / parts);
  for (int i = 0; i < total % parts; i++) out[i]++;
  return out;
}

void StageSynthCorpus(const StageContext &ctx) {
  const int num_languages = ctx.cfg.GetInt("corpus", "num_languages", 5);
  int languages_used = ctx.cfg.GetInt("corpus", "languages_used", num_languages);
  if (languages_used < 2 || languages_used > num_languages)
    LID_ERR << "corpus.languages_used must be in [2, num_languages]";
  const int train_total = ctx.cfg.GetInt("corpus", "train_per_language", 200);
  const int test_total = ctx.cfg.GetInt("corpus", "test_per_language", 100);
  std::vector<double> durations =
      ctx.cfg.GetDoubleList("corpus", "durations", {3.0, 10.0, 30.0});
  const int ndur = static_cast<int>(durations.size());
  const std::vector<int> train_counts = SpreadCounts(train_total, ndur);
  const std::vector<int> test_counts = SpreadCounts(test_total, ndur);

  SynthOptions opts;
  opts.durations_s = durations;
  opts.utts_per_duration.resize(ndur);
  for (int d = 0; d < ndur; d++)
    opts.utts_per_duration[d] = train_counts[d] + test_counts[d];
  opts.sample_rate_hz = ctx.cfg.GetInt("corpus", "sample_rate_hz", 8000);
  opts.seed = ctx.seed;
  opts.warp_jitter = ctx.cfg.GetDouble("corpus", "warp_jitter", 0.0);
  opts.jobs = ctx.jobs;

  auto specs = DefaultLanguageSpecs(
      num_languages, ctx.seed, ctx.cfg.GetDouble("corpus", "noise_level", 0.05));
  Manifest all = SynthesizeCorpus(specs, opts, ctx.CorpusDir());

  Manifest train, test, train_extra, test_extra;
  std::size_t pos = 0;
  for (int lang = 0; lang < num_languages; lang++) {
    const bool used = lang < languages_used;
    for (int d = 0; d < ndur; d++) {
      for (int i = 0; i < opts.utts_per_duration[d]; i++, pos++) {
        const ManifestRow &row = all.rows.at(pos);
        Manifest &dest = i < train_counts[d] ? (used ? train : train_extra)
                                             : (used ? test : test_extra);
        dest.rows.push_back(row);
      }
    }
  }
  LID_ASSERT(pos == all.rows.size());
  WriteManifest(ctx.TrainManifest(), train);
  WriteManifest(ctx.TestManifest(), test);
  if (!train_extra.rows.empty())
    WriteManifest(StageContext::ExtraVariant(ctx.TrainManifest()), train_extra);
  if (!test_extra.rows.empty())
    WriteManifest(StageContext::ExtraVariant(ctx.TestManifest()), test_extra);
  LID_LOG << "synth-corpus: " << train.rows.size() << " train + "
          << test.rows.size() << " test utterances over " << languages_used
          << " languages (" << train_extra.rows.size() + test_extra.rows.size()
          << " held-out rows)";
}

void StageFeatures(const StageContext &ctx) {
  const std::vector<ManifestRow> rows = AllRows(ctx, /*with_extra=*/true);
  if (rows.empty()) LID_ERR << "manifests contain no utterances";
  fs::create_directories(ctx.FeatsDir());

  const FrontEndConfig static_cfg = ctx.StaticConfig();
  const bool use_sdc = ctx.UseSdc();
  const double cmn_window = ctx.cfg.GetDouble("features", "cmn_window_s", 3.0);
  const double hires_cmn_window =
      ctx.cfg.GetDouble("features", "hires_cmn_window_s", 6.0);
  const int delta_window = ctx.cfg.GetInt("features", "delta_window", 2);
  const VadOptions vad_opts = ctx.Vad();

  // Warp factors come from a maximum-likelihood grid search against a GMM
  // trained on unwarped static cepstra of a training subset.
  std::vector<double> warps(rows.size(), 1.0);
  if (ctx.VtlnOn()) {
    Manifest train = ReadManifest(ctx.TrainManifest());
    const int warp_utts =
        std::min<int>(ctx.cfg.GetInt("features", "vtln_train_utts", 200),
                      static_cast<int>(train.rows.size()));
    if (warp_utts < 1) LID_ERR << "no training utterances for the warp model";
    std::vector<Matrix> warp_feats(warp_utts);
    ParallelFor(warp_utts, ctx.jobs, [&](int i) {
      const ManifestRow &row = train.rows[i];
      AudioSegment audio = ReadAudio(row.path);
      warp_feats[i] =
          ComputeCepstra(audio, static_cfg, UttSeed(ctx.seed, row.utt_id)).values;
    });
    UbmTrainOptions warp_opts;
    warp_opts.num_iters = ctx.cfg.GetInt("features", "vtln_gmm_iters", 4);
    warp_opts.seed = ctx.seed + 11;
    warp_opts.jobs = ctx.jobs;
    DiagGmm warp_gmm = TrainDiagUbm(
        warp_feats, ctx.cfg.GetInt("features", "vtln_gmm_size", 64), warp_opts);
    WriteDiagGmm(ctx.WarpGmmPath(), warp_gmm);

    const std::vector<double> grid = DefaultVtlnGrid();
    ParallelFor(static_cast<int>(rows.size()), ctx.jobs, [&](int i) {
      AudioSegment audio = ReadAudio(rows[i].path);
      warps[i] = EstimateVtlnWarp(audio, static_cfg, warp_gmm, grid,
                                  UttSeed(ctx.seed, rows[i].utt_id));
    });
    std::ostringstream warp_out;
    warp_out << "utt_id\tvtln_warp\n";
    for (std::size_t i = 0; i < rows.size(); i++) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.2f", warps[i]);
      warp_out << rows[i].utt_id << "\t" << buf << "\n";
    }
    WriteTextFile(ctx.WarpsPath(), warp_out.str());
  }

  const FrontEndConfig hires_cfg = FrontEndConfig::HighRes();
  ParallelFor(static_cast<int>(rows.size()), ctx.jobs, [&](int i) {
    const ManifestRow &row = rows[i];
    AudioSegment audio = ReadAudio(row.path);
    const uint64_t seed = UttSeed(ctx.seed, row.utt_id);

    FrontEndConfig warped_cfg = static_cfg;
    warped_cfg.vtln_warp = warps[i];
    FeatureMatrix statics = ComputeCepstra(audio, warped_cfg, seed);
    FeatureMatrix hires = ComputeCepstra(audio, hires_cfg, seed);

    // The high-resolution stream uses a longer window, so it has the fewest
    // frames; every per-frame artifact is cut to its length to keep the
    // streams, the VAD mask and the synthesis labels index-aligned.
    const int num_frames = hires.NumRows();
    if (num_frames < 1)
      LID_ERR << row.utt_id << " is too short for a single analysis window";
    LID_ASSERT(statics.NumRows() >= num_frames);
    statics.values.conservativeResize(num_frames, Eigen::NoChange);

    VadMask vad = EnergyVad(statics, vad_opts);
    int num_speech = 0;
    for (uint8_t m : vad) num_speech += m;
    if (num_speech == 0) {
      LID_WARN << row.utt_id << ": no frames passed the energy VAD; keeping all";
      std::fill(vad.begin(), vad.end(), uint8_t{1});
    }

    FeatureMatrix stream;
    if (use_sdc) {
      stream = ComputeSdc(statics, SdcConfig());
    } else {
      stream = AddDeltas(statics, 2, delta_window);
    }
    FeatureMatrix speech = SelectFrames(stream, vad);
    speech = SlidingCmn(speech, cmn_window);

    FeatureMatrix hires_cmn = SlidingCmn(hires, hires_cmn_window);

    WriteMatrix(ctx.StatsFeatPath(row.utt_id), speech.values);
    WriteMatrix(ctx.HiresFeatPath(row.utt_id), hires_cmn.values);
    std::vector<int> vad_ints(vad.begin(), vad.end());
    WriteLabels(ctx.VadPath(row.utt_id), vad_ints);
  });
  LID_LOG << "features: processed " << rows.size() << " utterances ("
          << (use_sdc ? "sdc" : "mfcc60") << ", vtln "
          << (ctx.VtlnOn() ? "on" : "off") << ")";
}

void StageTrainUbm(const StageContext &ctx) {
  Manifest train = ReadManifest(ctx.TrainManifest());
  std::vector<Matrix> feats = LoadStatsFeats(ctx, train.rows);

  UbmTrainOptions opts;
  opts.seed = ctx.seed + 23;
  opts.jobs = ctx.jobs;
  const int num_components = ctx.cfg.GetInt("ubm", "num_components", 64);
  const int stage1_utts =
      std::min<int>(ctx.cfg.GetInt("ubm", "stage1_utts", 250),
                    static_cast<int>(feats.size()));
  opts.num_iters = ctx.cfg.GetInt("ubm", "stage1_iters", 6);
  std::vector<Matrix> subset(feats.begin(), feats.begin() + stage1_utts);
  std::vector<double> loglikes;
  DiagGmm diag = TrainDiagUbm(subset, num_components, opts, &loglikes);
  const int stage2_iters = ctx.cfg.GetInt("ubm", "stage2_iters", 4);
  std::vector<double> more = RunDiagEm(&diag, feats, stage2_iters, opts);
  loglikes.insert(loglikes.end(), more.begin(), more.end());
  for (std::size_t i = 0; i < loglikes.size(); i++)
    LID_LOG << "train-ubm: iteration " << i << " avg loglike " << loglikes[i];

  FullGmm full = DiagToFull(diag, feats, ctx.jobs);
  WriteGmms(ctx.UbmPath(), diag, full);
  LID_LOG << "train-ubm: wrote " << num_components << "-component model to "
          << ctx.UbmPath();
}

void StageTrainDnn(const StageContext &ctx) {
  Manifest train = ReadManifest(ctx.TrainManifest());
  const int n = static_cast<int>(train.rows.size());
  const int limit = ctx.cfg.GetInt("nnet", "train_utts", 0);
  std::vector<int> picks;
  if (limit > 0 && limit < n) {
    // Stride through the manifest so every language block contributes.
    for (int i = 0; i < limit; i++)
      picks.push_back(static_cast<int>(static_cast<int64_t>(i) * n / limit));
  } else {
    for (int i = 0; i < n; i++) picks.push_back(i);
  }

  const int num_classes = ctx.cfg.GetInt("nnet", "num_classes", kGlobalNumPhones);
  std::vector<Matrix> feats(picks.size());
  std::vector<std::vector<int>> labels(picks.size());
  ParallelFor(static_cast<int>(picks.size()), ctx.jobs, [&](int i) {
    const ManifestRow &row = train.rows[picks[i]];
    const std::string hires_path = ctx.HiresFeatPath(row.utt_id);
    RequireInput(hires_path, "features");
    feats[i] = ReadMatrix(hires_path);
    std::vector<int> utt_labels = ReadLabels(LabelsPathFor(row));
    if (static_cast<int>(utt_labels.size()) < feats[i].rows())
      LID_ERR << row.utt_id << ": " << utt_labels.size() << " labels for "
              << feats[i].rows() << " frames";
    utt_labels.resize(feats[i].rows());
    for (int label : utt_labels)
      if (label < 0 || label >= num_classes)
        LID_ERR << row.utt_id << ": label " << label << " outside [0, "
                << num_classes << ")";
    labels[i] = std::move(utt_labels);
  });

  TddnnConfig cfg = TddnnConfig::Default(40, num_classes);
  cfg.hidden_dim = ctx.cfg.GetInt("nnet", "hidden_dim", cfg.hidden_dim);
  cfg.pnorm_group_size =
      ctx.cfg.GetInt("nnet", "pnorm_group_size", cfg.pnorm_group_size);
  cfg.pnorm_p = ctx.cfg.GetDouble("nnet", "pnorm_p", cfg.pnorm_p);
  TddnnModel model = BuildTddnn(cfg, ctx.seed + 29);

  SgdSchedule sched;
  sched.initial_lr = ctx.cfg.GetDouble("nnet", "initial_lr", sched.initial_lr);
  sched.final_lr = ctx.cfg.GetDouble("nnet", "final_lr", sched.final_lr);
  sched.num_epochs = ctx.cfg.GetInt("nnet", "epochs", sched.num_epochs);
  sched.minibatch_size = ctx.cfg.GetInt("nnet", "minibatch", sched.minibatch_size);
  sched.seed = ctx.seed + 37;
  NnetTrainLog log;
  TrainSgd(&model, feats, labels, sched, &log);
  for (std::size_t e = 0; e < log.epoch_cross_entropy.size(); e++)
    LID_LOG << "train-dnn: epoch " << e << " lr " << log.epoch_lr[e]
            << " avg cross-entropy " << log.epoch_cross_entropy[e];

  WriteTddnn(ctx.DnnPath(), model);
  LID_LOG << "train-dnn: trained on " << picks.size() << " utterances, wrote "
          << ctx.DnnPath();
}

void StageTrainIvector(const StageContext &ctx) {
  Manifest train = ReadManifest(ctx.TrainManifest());
  PosteriorModels models = LoadPosteriorModels(ctx);
  const double min_post = ctx.cfg.GetDouble("ivector", "min_posterior", 1e-5);

  SupervisedGmm anchor;
  if (models.use_dnn) {
    // Class means and variances come from network posteriors over a training
    // subset; they anchor the stats the extractor is trained on.
    const int anchor_utts =
        std::min<int>(std::max(1, ctx.cfg.GetInt("ivector", "anchor_utts", 500)),
                      static_cast<int>(train.rows.size()));
    std::vector<Matrix> posts(anchor_utts);
    std::vector<Matrix> feats(anchor_utts);
    std::vector<VadMask> masks(anchor_utts);
    ParallelFor(anchor_utts, ctx.jobs, [&](int i) {
      const ManifestRow &row = train.rows[i];
      feats[i] = ReadMatrix(ctx.StatsFeatPath(row.utt_id));
      posts[i] = SpeechPosteriors(ctx, models, row, feats[i], min_post);
      masks[i].assign(feats[i].rows(), 1);
    });
    anchor = InitSupervisedGmm(posts, feats, masks);
  } else {
    anchor = SupervisedGmmFromFull(models.full);
  }

  std::vector<SuffStats> stats =
      EnsureStats(ctx, models, train.rows, anchor.means, min_post,
                  /*overwrite=*/true);

  const int rank = ctx.cfg.GetInt("ivector", "rank", 50);
  IvectorExtractor ext = InitExtractor(anchor, rank, ctx.seed + 31);
  const int num_iters = ctx.cfg.GetInt("ivector", "num_iters", 5);
  double prev = -std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < num_iters; iter++) {
    double objective = EmIteration(&ext, stats, ctx.jobs);
    LID_LOG << "train-ivector: iteration " << iter << " objective "
            << objective;
    if (objective + 1e-6 * std::abs(objective) < prev)
      LID_WARN << "train-ivector: objective decreased at iteration " << iter;
    prev = objective;
  }
  WriteExtractor(ctx.ExtractorPath(), ext);
  LID_LOG << "train-ivector: wrote rank-" << rank << " extractor to "
          << ctx.ExtractorPath();
}

void StageExtractIvectors(const StageContext &ctx) {
  Manifest train = ReadManifest(ctx.TrainManifest());
  Manifest test = ReadManifest(ctx.TestManifest());
  PosteriorModels models = LoadPosteriorModels(ctx);
  IvectorExtractor ext = ReadExtractor(ctx.ExtractorPath());
  const double min_post = ctx.cfg.GetDouble("ivector", "min_posterior", 1e-5);

  for (const auto &[split, manifest] :
       {std::pair<std::string, const Manifest *>{"train", &train},
        {"test", &test}}) {
    std::vector<SuffStats> stats =
        EnsureStats(ctx, models, manifest->rows, ext.means, min_post,
                    /*overwrite=*/false);
    Matrix ivectors = ExtractIvectors(ext, stats, ctx.jobs);
    WriteMatrix(ctx.IvectorsPath(split), ivectors);
    WriteIds(ctx.IdsPath(split), manifest->rows);
    LID_LOG << "extract-ivectors: " << split << " split, " << ivectors.rows()
            << " vectors of rank " << ivectors.cols();
  }
}

void StageTrainClassifier(const StageContext &ctx) {
  Manifest train = ReadManifest(ctx.TrainManifest());
  Matrix ivectors = ReadMatrix(ctx.IvectorsPath("train"));
  std::vector<std::string> ids = ReadIds(ctx.IdsPath("train"));
  if (ids.size() != train.rows.size() ||
      static_cast<int>(ids.size()) != ivectors.rows())
    LID_ERR << "train ivectors do not match the train manifest; rerun "
               "extract-ivectors";
  std::vector<std::string> labels(ids.size());
  for (std::size_t i = 0; i < ids.size(); i++) {
    if (ids[i] != train.rows[i].utt_id)
      LID_ERR << "ivector order mismatch at row " << i << ": " << ids[i]
              << " vs " << train.rows[i].utt_id;
    labels[i] = train.rows[i].language;
  }
  LogRegTrainOptions opts;
  opts.l2_lambda = ctx.cfg.GetDouble("classifier", "l2_lambda", opts.l2_lambda);
  opts.max_iters = ctx.cfg.GetInt("classifier", "max_iters", opts.max_iters);
  opts.tolerance = ctx.cfg.GetDouble("classifier", "tolerance", opts.tolerance);
  LogRegModel model = TrainLogReg(ivectors, labels, opts);
  WriteLogReg(ctx.ClassifierPath(), model);
  LID_LOG << "train-classifier: " << model.NumClasses() << " languages, wrote "
          << ctx.ClassifierPath();
}

void StageScore(const StageContext &ctx) {
  Manifest test = ReadManifest(ctx.TestManifest());
  Matrix ivectors = ReadMatrix(ctx.IvectorsPath("test"));
  std::vector<std::string> ids = ReadIds(ctx.IdsPath("test"));
  if (ids.size() != test.rows.size() ||
      static_cast<int>(ids.size()) != ivectors.rows())
    LID_ERR << "test ivectors do not match the test manifest; rerun "
               "extract-ivectors";
  LogRegModel model = ReadLogReg(ctx.ClassifierPath());
  Matrix posteriors = model.PredictPosteriors(ivectors);

  TrialSet set;
  set.languages = model.labels;
  set.trials.resize(ids.size());
  for (std::size_t i = 0; i < ids.size(); i++) {
    if (ids[i] != test.rows[i].utt_id)
      LID_ERR << "ivector order mismatch at row " << i << ": " << ids[i]
              << " vs " << test.rows[i].utt_id;
    Trial &trial = set.trials[i];
    trial.utt_id = ids[i];
    trial.true_language = test.rows[i].language;
    trial.duration_s = static_cast<int>(test.rows[i].duration_s);
    trial.posteriors = posteriors.row(i).transpose();
  }
  set.Check();
  WriteTrials(ctx.ScoresPath(), set);
  LID_LOG << "score: wrote " << set.trials.size() << " trials to "
          << ctx.ScoresPath();
}

void StageEvaluate(const StageContext &ctx) {
  TrialSet set = ReadTrials(ctx.ScoresPath());
  EvalReport report = Evaluate(set);
  const std::string text = FormatReport(report);
  WriteTextFile(ctx.ReportPath(), text);
  WriteTextFile(ctx.ReportTsvPath(), ReportToTsv(report));
  std::cout << text;
}

}  // namespace

// ---------------------------------------------------------------------------

void RunStage(const std::string &stage, const RunConfig &config, int jobs,
              bool force, std::optional<uint64_t> seed_override) {
  const auto &names = StageNames();
  if (std::find(names.begin(), names.end(), stage) == names.end()) {
    std::ostringstream known;
    for (const auto &n : names) known << " " << n;
    LID_ERR << "unknown stage '" << stage << "'; stages are:" << known.str();
  }

  StageContext ctx;
  ctx.cfg = config;
  if (seed_override)
    ctx.cfg.Set("pipeline", "seed", std::to_string(*seed_override));
  const std::string seed_str = ctx.cfg.Get("pipeline", "seed", "42");
  try {
    std::size_t pos = 0;
    ctx.seed = std::stoull(seed_str, &pos);
    if (pos != seed_str.size()) throw std::invalid_argument(seed_str);
  } catch (const std::exception &) {
    LID_ERR << "pipeline.seed = '" << seed_str << "' is not an integer";
  }
  ctx.workdir = fs::path(ctx.cfg.GetRequired("paths", "workdir"));
  ctx.jobs = std::max(1, jobs);
  ctx.force = force;
  fs::create_directories(ctx.workdir);

  StageInputs inputs = CollectInputs(ctx, stage);
  switch (CheckMarker(ctx, stage, inputs)) {
    case MarkerState::kMatch:
      if (!ctx.force) {
        LID_LOG << stage << ": up to date, skipping (use --force to rebuild)";
        return;
      }
      break;
    case MarkerState::kMismatch:
      if (!ctx.force)
        LID_ERR << stage << " was already completed but its configuration or "
                << "inputs changed; pass --force to rebuild";
      break;
    case MarkerState::kMissing:
      break;
  }

  if (stage == "synth-corpus") StageSynthCorpus(ctx);
  else if (stage == "features") StageFeatures(ctx);
  else if (stage == "train-ubm") StageTrainUbm(ctx);
  else if (stage == "train-dnn") StageTrainDnn(ctx);
  else if (stage == "train-ivector") StageTrainIvector(ctx);
  else if (stage == "extract-ivectors") StageExtractIvectors(ctx);
  else if (stage == "train-classifier") StageTrainClassifier(ctx);
  else if (stage == "score") StageScore(ctx);
  else if (stage == "evaluate") StageEvaluate(ctx);

  // synth-corpus writes the manifests CollectInputs could not hash yet; for
  // downstream stages the input set is unchanged, so refresh is cheap.
  inputs = CollectInputs(ctx, stage);
  WriteMarker(ctx, stage, inputs);
}

}  // namespace lid
