// src/io.cc

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

#include "lid/io.h"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

namespace lid {

namespace {

constexpr uint32_t kMatrixVersion = 1;
constexpr uint32_t kContainerVersion = 1;

// All on-disk integers and doubles are little endian.
template <class T>
T ByteSwap(T v) {
  auto *p = reinterpret_cast<unsigned char *>(&v);
  for (std::size_t i = 0; i < sizeof(T) / 2; i++)
    std::swap(p[i], p[sizeof(T) - 1 - i]);
  return v;
}

template <class T>
T ToLittle(T v) {
  if constexpr (std::endian::native == std::endian::big) return ByteSwap(v);
  return v;
}

template <class T>
T FromLittle(T v) {
  return ToLittle(v);
}

class BinaryWriter {
 public:
  explicit BinaryWriter(const std::string &path)
      : path_(path), os_(path, std::ios::binary) {
    if (!os_) throw IoError("cannot open for writing: " + path, 0);
  }
  void Bytes(const void *p, std::size_t n) {
    os_.write(reinterpret_cast<const char *>(p), static_cast<std::streamsize>(n));
  }
  template <class T>
  void Scalar(T v) {
    v = ToLittle(v);
    Bytes(&v, sizeof(T));
  }
  void Doubles(const double *p, std::size_t n) {
    if constexpr (std::endian::native == std::endian::little) {
      Bytes(p, n * sizeof(double));
    } else {
      for (std::size_t i = 0; i < n; i++) Scalar(p[i]);
    }
  }
  void Close() {
    os_.close();
    if (!os_) throw IoError("write failed: " + path_, 0);
  }

 private:
  std::string path_;
  std::ofstream os_;
};

class BinaryReader {
 public:
  explicit BinaryReader(const std::string &path)
      : path_(path), is_(path, std::ios::binary) {
    if (!is_) throw IoError("cannot open for reading: " + path, 0);
    is_.seekg(0, std::ios::end);
    size_ = static_cast<std::size_t>(is_.tellg());
    is_.seekg(0, std::ios::beg);
  }
  std::size_t offset() const { return offset_; }
  std::size_t size() const { return size_; }
  bool AtEnd() const { return offset_ >= size_; }
  void Bytes(void *p, std::size_t n, const char *what) {
    if (offset_ + n > size_) {
      std::ostringstream ss;
      ss << path_ << ": truncated while reading " << what << " at byte offset "
         << offset_ << " (need " << n << " bytes, file has " << (size_ - offset_)
         << " left of " << size_ << ")";
      throw IoError(ss.str(), offset_);
    }
    is_.read(reinterpret_cast<char *>(p), static_cast<std::streamsize>(n));
    if (!is_) throw IoError(path_ + ": read failed", offset_);
    offset_ += n;
  }
  template <class T>
  T Scalar(const char *what) {
    T v;
    Bytes(&v, sizeof(T), what);
    return FromLittle(v);
  }
  void Doubles(double *p, std::size_t n, const char *what) {
    Bytes(p, n * sizeof(double), what);
    if constexpr (std::endian::native == std::endian::big) {
      for (std::size_t i = 0; i < n; i++) p[i] = ByteSwap(p[i]);
    }
  }
  void ExpectMagic(const char *magic) {
    char got[4];
    std::size_t at = offset_;
    Bytes(got, 4, "magic");
    if (std::memcmp(got, magic, 4) != 0) {
      std::ostringstream ss;
      ss << path_ << ": bad magic at byte offset " << at << " (expected \""
         << magic << "\", got \"" << std::string(got, 4) << "\")";
      throw IoError(ss.str(), at);
    }
  }

 private:
  std::string path_;
  std::ifstream is_;
  std::size_t size_ = 0;
  std::size_t offset_ = 0;
};

std::vector<std::string> SplitTabs(const std::string &line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    std::size_t tab = line.find('\t', start);
    if (tab == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
}

}  // namespace

void WriteMatrix(const std::string &path, const Matrix &mat) {
  if (mat.rows() < 0 || mat.cols() < 0) LID_ERR << "negative matrix shape";
  BinaryWriter w(path);
  w.Bytes("FVM1", 4);
  w.Scalar<uint32_t>(kMatrixVersion);
  w.Scalar<uint32_t>(static_cast<uint32_t>(mat.rows()));
  w.Scalar<uint32_t>(static_cast<uint32_t>(mat.cols()));
  // Row-major payload; Eigen default storage is column major.
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = mat;
  w.Doubles(rm.data(), static_cast<std::size_t>(mat.rows()) * mat.cols());
  w.Close();
}

Matrix ReadMatrix(const std::string &path) {
  BinaryReader r(path);
  r.ExpectMagic("FVM1");
  uint32_t version = r.Scalar<uint32_t>("version");
  if (version != kMatrixVersion)
    throw IoError(path + ": unsupported matrix version " + std::to_string(version),
                  r.offset() - 4);
  uint32_t rows = r.Scalar<uint32_t>("rows");
  uint32_t cols = r.Scalar<uint32_t>("cols");
  uint64_t count = static_cast<uint64_t>(rows) * cols;
  if (count > (1ull << 32))
    throw IoError(path + ": matrix dims overflow sanity bound", r.offset() - 8);
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(rows, cols);
  r.Doubles(rm.data(), count, "matrix payload");
  return rm;
}

std::size_t NamedTensor::NumElements() const {
  std::size_t n = 1;
  for (uint32_t d : dims) n *= d;
  return n;
}

void ModelContainer::Add(const std::string &name, const Matrix &mat) {
  NamedTensor t;
  t.name = name;
  t.dims = {static_cast<uint32_t>(mat.rows()), static_cast<uint32_t>(mat.cols())};
  t.data.resize(static_cast<std::size_t>(mat.rows()) * mat.cols());
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = mat;
  std::copy(rm.data(), rm.data() + t.data.size(), t.data.begin());
  Add(std::move(t));
}

void ModelContainer::Add(const std::string &name, const Vector &vec) {
  NamedTensor t;
  t.name = name;
  t.dims = {static_cast<uint32_t>(vec.size())};
  t.data.assign(vec.data(), vec.data() + vec.size());
  Add(std::move(t));
}

void ModelContainer::Add(NamedTensor tensor) {
  if (Has(tensor.name)) LID_ERR << "duplicate tensor name: " << tensor.name;
  tensors_.push_back(std::move(tensor));
}

void ModelContainer::AddScalar(const std::string &name, double value) {
  NamedTensor t;
  t.name = name;
  t.dims = {1};
  t.data = {value};
  Add(std::move(t));
}

bool ModelContainer::Has(const std::string &name) const {
  for (const auto &t : tensors_)
    if (t.name == name) return true;
  return false;
}

const NamedTensor &ModelContainer::Get(const std::string &name) const {
  for (const auto &t : tensors_)
    if (t.name == name) return t;
  LID_ERR << "container has no tensor named '" << name << "'";
}

Matrix ModelContainer::GetMatrix(const std::string &name) const {
  const NamedTensor &t = Get(name);
  if (t.dims.size() != 2)
    LID_ERR << "tensor '" << name << "' has rank " << t.dims.size() << ", want 2";
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
      m(t.data.data(), t.dims[0], t.dims[1]);
  return m;
}

Vector ModelContainer::GetVector(const std::string &name) const {
  const NamedTensor &t = Get(name);
  if (t.dims.size() != 1)
    LID_ERR << "tensor '" << name << "' has rank " << t.dims.size() << ", want 1";
  return Eigen::Map<const Vector>(t.data.data(), t.dims[0]);
}

double ModelContainer::GetScalar(const std::string &name) const {
  const NamedTensor &t = Get(name);
  if (t.NumElements() != 1)
    LID_ERR << "tensor '" << name << "' is not a scalar";
  return t.data[0];
}

void ModelContainer::SetMeta(const std::string &key, const std::string &value) {
  LID_ASSERT(key.find('=') == std::string::npos &&
             key.find('\n') == std::string::npos &&
             value.find('\n') == std::string::npos);
  if (FindMeta(key)) LID_ERR << "duplicate metadata key: " << key;
  metadata += key + "=" + value + "\n";
}

std::optional<std::string> ModelContainer::FindMeta(const std::string &key) const {
  std::istringstream is(metadata);
  std::string line;
  while (std::getline(is, line)) {
    auto eq = line.find('=');
    if (eq != std::string::npos && line.substr(0, eq) == key)
      return line.substr(eq + 1);
  }
  return std::nullopt;
}

std::string ModelContainer::GetMeta(const std::string &key) const {
  auto v = FindMeta(key);
  if (!v) LID_ERR << "container metadata has no key '" << key << "'";
  return *v;
}

void WriteContainer(const std::string &path, const ModelContainer &container) {
  BinaryWriter w(path);
  w.Bytes("LRMD", 4);
  w.Scalar<uint32_t>(kContainerVersion);
  w.Scalar<uint32_t>(static_cast<uint32_t>(container.metadata.size()));
  w.Bytes(container.metadata.data(), container.metadata.size());
  for (const auto &t : container.tensors()) {
    if (t.name.size() > 0xffff) LID_ERR << "tensor name too long: " << t.name;
    if (t.data.size() != t.NumElements())
      LID_ERR << "tensor '" << t.name << "' dims do not match payload size";
    w.Scalar<uint16_t>(static_cast<uint16_t>(t.name.size()));
    w.Bytes(t.name.data(), t.name.size());
    w.Scalar<uint8_t>(static_cast<uint8_t>(t.dims.size()));
    for (uint32_t d : t.dims) w.Scalar<uint32_t>(d);
    w.Doubles(t.data.data(), t.data.size());
  }
  w.Close();
}

ModelContainer ReadContainer(const std::string &path) {
  BinaryReader r(path);
  r.ExpectMagic("LRMD");
  uint32_t version = r.Scalar<uint32_t>("version");
  if (version != kContainerVersion)
    throw IoError(path + ": unsupported container version " + std::to_string(version),
                  r.offset() - 4);
  uint32_t meta_len = r.Scalar<uint32_t>("metadata length");
  ModelContainer c;
  c.metadata.resize(meta_len);
  if (meta_len > 0) r.Bytes(c.metadata.data(), meta_len, "metadata");
  while (!r.AtEnd()) {
    NamedTensor t;
    uint16_t name_len = r.Scalar<uint16_t>("tensor name length");
    t.name.resize(name_len);
    if (name_len > 0) r.Bytes(t.name.data(), name_len, "tensor name");
    uint8_t rank = r.Scalar<uint8_t>("tensor rank");
    uint64_t count = 1;
    for (int i = 0; i < rank; i++) {
      uint32_t d = r.Scalar<uint32_t>("tensor dim");
      t.dims.push_back(d);
      count *= d;
      if (count > (1ull << 32))
        throw IoError(path + ": tensor '" + t.name + "' dims overflow sanity bound",
                      r.offset() - 4);
    }
    t.data.resize(count);
    r.Doubles(t.data.data(), count, "tensor payload");
    c.Add(std::move(t));
  }
  return c;
}

void Manifest::CheckUnique() const {
  std::set<std::string> seen;
  for (const auto &row : rows)
    if (!seen.insert(row.utt_id).second)
      LID_ERR << "duplicate utt_id in manifest: " << row.utt_id;
}

std::vector<std::string> Manifest::Languages() const {
  std::vector<std::string> langs;
  for (const auto &row : rows) {
    bool found = false;
    for (const auto &l : langs)
      if (l == row.language) { found = true; break; }
    if (!found) langs.push_back(row.language);
  }
  return langs;
}

void WriteManifest(const std::string &path, const Manifest &manifest) {
  std::ofstream os(path);
  if (!os) LID_ERR << "cannot open manifest for writing: " << path;
  os << "utt_id\tpath\tlanguage\tduration_s\tvtln_warp\n";
  for (const auto &row : manifest.rows) {
    os << row.utt_id << '\t' << row.path << '\t' << row.language << '\t';
    std::ostringstream dur;
    dur.precision(17);
    dur << row.duration_s;
    os << dur.str() << '\t';
    if (row.vtln_warp) {
      std::ostringstream warp;
      warp.precision(17);
      warp << *row.vtln_warp;
      os << warp.str();
    }
    os << '\n';
  }
  if (!os) LID_ERR << "manifest write failed: " << path;
}

Manifest ReadManifest(const std::string &path) {
  std::ifstream is(path);
  if (!is) LID_ERR << "cannot open manifest: " << path;
  Manifest m;
  std::string line;
  if (!std::getline(is, line)) LID_ERR << "manifest is empty: " << path;
  int lineno = 1;
  while (std::getline(is, line)) {
    lineno++;
    if (line.empty()) continue;
    auto fields = SplitTabs(line);
    if (fields.size() != 5)
      LID_ERR << path << ":" << lineno << ": expected 5 tab-separated fields, got "
              << fields.size();
    ManifestRow row;
    row.utt_id = fields[0];
    row.path = fields[1];
    row.language = fields[2];
    row.duration_s = std::stod(fields[3]);
    if (!fields[4].empty()) row.vtln_warp = std::stod(fields[4]);
    m.rows.push_back(std::move(row));
  }
  m.CheckUnique();
  return m;
}

void WriteWav(const std::string &path, const std::vector<double> &samples,
              int sample_rate_hz) {
  LID_ASSERT(sample_rate_hz > 0);
  BinaryWriter w(path);
  uint32_t data_bytes = static_cast<uint32_t>(samples.size() * 2);
  w.Bytes("RIFF", 4);
  w.Scalar<uint32_t>(36 + data_bytes);
  w.Bytes("WAVE", 4);
  w.Bytes("fmt ", 4);
  w.Scalar<uint32_t>(16);
  w.Scalar<uint16_t>(1);  // PCM
  w.Scalar<uint16_t>(1);  // mono
  w.Scalar<uint32_t>(static_cast<uint32_t>(sample_rate_hz));
  w.Scalar<uint32_t>(static_cast<uint32_t>(sample_rate_hz) * 2);
  w.Scalar<uint16_t>(2);
  w.Scalar<uint16_t>(16);
  w.Bytes("data", 4);
  w.Scalar<uint32_t>(data_bytes);
  for (double s : samples) {
    // Same 1/32768 scale as the reader, so a roundtrip is off by at most
    // half a quantization step (full-scale positive clips to 32767).
    long q = std::lrint(std::max(-1.0, std::min(1.0, s)) * 32768.0);
    w.Scalar<int16_t>(static_cast<int16_t>(std::min(q, 32767l)));
  }
  w.Close();
}

AudioSegment ReadWav(const std::string &path) {
  BinaryReader r(path);
  r.ExpectMagic("RIFF");
  r.Scalar<uint32_t>("riff size");
  r.ExpectMagic("WAVE");
  AudioSegment seg;
  uint16_t bits = 0, channels = 0;
  bool have_fmt = false;
  while (!r.AtEnd()) {
    char id[4];
    r.Bytes(id, 4, "chunk id");
    uint32_t chunk_size = r.Scalar<uint32_t>("chunk size");
    if (std::memcmp(id, "fmt ", 4) == 0) {
      std::size_t at = r.offset();
      uint16_t format = r.Scalar<uint16_t>("wav format");
      channels = r.Scalar<uint16_t>("channels");
      seg.sample_rate_hz = static_cast<int>(r.Scalar<uint32_t>("sample rate"));
      r.Scalar<uint32_t>("byte rate");
      r.Scalar<uint16_t>("block align");
      bits = r.Scalar<uint16_t>("bits per sample");
      if (format != 1)
        throw IoError(path + ": only PCM wav supported (format " +
                          std::to_string(format) + ")", at);
      if (channels != 1)
        throw IoError(path + ": only mono wav supported (channels " +
                          std::to_string(channels) + ")", at);
      if (bits != 16)
        throw IoError(path + ": only 16-bit wav supported (bits " +
                          std::to_string(bits) + ")", at);
      std::size_t consumed = r.offset() - at;
      for (std::size_t i = consumed; i < chunk_size; i++) r.Scalar<uint8_t>("fmt pad");
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      if (!have_fmt) throw IoError(path + ": data chunk before fmt chunk", r.offset());
      std::size_t n = chunk_size / 2;
      seg.samples.resize(n);
      for (std::size_t i = 0; i < n; i++)
        seg.samples[i] = r.Scalar<int16_t>("sample") / 32768.0;
      return seg;
    } else {
      for (uint32_t i = 0; i < chunk_size; i++) r.Scalar<uint8_t>("chunk skip");
    }
  }
  throw IoError(path + ": no data chunk found", r.offset());
}

int16_t MuLawDecodeByte(uint8_t byte) {
  // ITU-T G.711 mu-law expansion.
  uint8_t u = static_cast<uint8_t>(~byte);
  int sign = u & 0x80;
  int exponent = (u >> 4) & 0x07;
  int mantissa = u & 0x0f;
  int magnitude = (((mantissa << 3) + 0x84) << exponent) - 0x84;
  return static_cast<int16_t>(sign ? -magnitude : magnitude);
}

AudioSegment ReadMuLaw(const std::string &path, int sample_rate_hz) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open for reading: " + path, 0);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(is)),
                             std::istreambuf_iterator<char>());
  AudioSegment seg;
  seg.sample_rate_hz = sample_rate_hz;
  seg.samples.resize(bytes.size());
  for (std::size_t i = 0; i < bytes.size(); i++)
    seg.samples[i] = MuLawDecodeByte(bytes[i]) / 32768.0;
  return seg;
}

AudioSegment ReadAudio(const std::string &path, int mulaw_sample_rate_hz) {
  auto dot = path.rfind('.');
  std::string ext = dot == std::string::npos ? "" : path.substr(dot + 1);
  if (ext == "ulaw" || ext == "mulaw")
    return ReadMuLaw(path, mulaw_sample_rate_hz);
  return ReadWav(path);
}

void WriteLabels(const std::string &path, const std::vector<int> &labels) {
  std::ofstream os(path);
  if (!os) LID_ERR << "cannot open labels for writing: " << path;
  for (int l : labels) os << l << '\n';
  if (!os) LID_ERR << "label write failed: " << path;
}

std::vector<int> ReadLabels(const std::string &path) {
  std::ifstream is(path);
  if (!is) LID_ERR << "cannot open labels: " << path;
  std::vector<int> labels;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    labels.push_back(std::stoi(line));
  }
  return labels;
}

uint64_t HashBytes(const void *data, std::size_t size, uint64_t seed) {
  const auto *p = static_cast<const unsigned char *>(data);
  uint64_t h = seed;
  for (std::size_t i = 0; i < size; i++) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

uint64_t HashFile(const std::string &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open for hashing: " + path, 0);
  uint64_t h = 0xcbf29ce484222325ull;
  char buf[1 << 16];
  while (is) {
    is.read(buf, sizeof(buf));
    h = HashBytes(buf, static_cast<std::size_t>(is.gcount()), h);
  }
  return h;
}

}  // namespace lid
