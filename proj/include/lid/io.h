// include/lid/io.h

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

#ifndef LID_IO_H_
#define LID_IO_H_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lid/common.h"

namespace lid {

// Binary matrix file: magic "FVM1", then format version (u32), rows (u32),
// cols (u32), then rows*cols little-endian IEEE-754 f64 values, row major.
// Readers fail with an IoError carrying the byte offset of the problem.
void WriteMatrix(const std::string &path, const Matrix &mat);
Matrix ReadMatrix(const std::string &path);

// Model container: magic "LRMD", version (u32), metadata block (u32 length +
// UTF-8 bytes), then named tensors until end of file.  Each tensor is
// name length (u16) + UTF-8 name, rank (u8), one u32 per dimension, and the
// f64 payload in row-major order.  All integers and floats little endian.
struct NamedTensor {
  std::string name;
  std::vector<uint32_t> dims;
  std::vector<double> data;

  std::size_t NumElements() const;
};

class ModelContainer {
 public:
  std::string metadata;

  void Add(const std::string &name, const Matrix &mat);
  void Add(const std::string &name, const Vector &vec);
  void Add(NamedTensor tensor);
  void AddScalar(const std::string &name, double value);

  bool Has(const std::string &name) const;
  const NamedTensor &Get(const std::string &name) const;
  Matrix GetMatrix(const std::string &name) const;
  Vector GetVector(const std::string &name) const;
  double GetScalar(const std::string &name) const;

  const std::vector<NamedTensor> &tensors() const { return tensors_; }

  // Metadata convenience: the block holds "key=value" lines.
  void SetMeta(const std::string &key, const std::string &value);
  std::string GetMeta(const std::string &key) const;
  std::optional<std::string> FindMeta(const std::string &key) const;

 private:
  std::vector<NamedTensor> tensors_;
};

void WriteContainer(const std::string &path, const ModelContainer &container);
ModelContainer ReadContainer(const std::string &path);

// Corpus manifest, a UTF-8 TSV with a header line:
// utt_id <TAB> path <TAB> language <TAB> duration_s <TAB> vtln_warp
// The warp column may be empty.
struct ManifestRow {
  std::string utt_id;
  std::string path;
  std::string language;
  double duration_s = 0.0;
  std::optional<double> vtln_warp;
};

struct Manifest {
  std::vector<ManifestRow> rows;

  void CheckUnique() const;
  std::vector<std::string> Languages() const;  // distinct, in first-seen order
};

void WriteManifest(const std::string &path, const Manifest &manifest);
Manifest ReadManifest(const std::string &path);

// Audio.  WAV is PCM16 mono; .ulaw/.mulaw files are headerless 8-bit mu-law
// (G.711 decode, 8 kHz assumed unless given).  ReadAudio dispatches on the
// file extension.
struct AudioSegment {
  std::vector<double> samples;  // amplitudes in [-1, 1]
  int sample_rate_hz = 8000;
  std::string utt_id;
};

void WriteWav(const std::string &path, const std::vector<double> &samples,
              int sample_rate_hz);
AudioSegment ReadWav(const std::string &path);
AudioSegment ReadMuLaw(const std::string &path, int sample_rate_hz = 8000);
AudioSegment ReadAudio(const std::string &path, int mulaw_sample_rate_hz = 8000);
int16_t MuLawDecodeByte(uint8_t byte);

// Frame labels, one integer per line.
void WriteLabels(const std::string &path, const std::vector<int> &labels);
std::vector<int> ReadLabels(const std::string &path);

// FNV-1a over the file bytes; used for stage markers and immutability checks.
uint64_t HashFile(const std::string &path);
uint64_t HashBytes(const void *data, std::size_t size, uint64_t seed = 0xcbf29ce484222325ull);

}  // namespace lid

#endif  // LID_IO_H_
