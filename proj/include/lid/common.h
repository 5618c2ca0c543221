// include/lid/common.h

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

#ifndef LID_COMMON_H_
#define LID_COMMON_H_

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>

namespace lid {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

// Base class for all toolkit errors (bad inputs, shape mismatches, broken
// files).  NumericError is reserved for failures of the math itself
// (non-finite values, factorizations that cannot be repaired).
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string &msg) : std::runtime_error(msg) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string &msg) : Error(msg) {}
};

class IoError : public Error {
 public:
  IoError(const std::string &msg, std::size_t byte_offset)
      : Error(msg), byte_offset_(byte_offset) {}
  std::size_t byte_offset() const { return byte_offset_; }

 private:
  std::size_t byte_offset_ = 0;
};

namespace internal {

// Stream that throws when it goes out of scope, so call sites can write
// LID_ERR << "bad thing " << value;
template <class E>
class ThrowStream {
 public:
  ThrowStream() = default;
  [[noreturn]] ~ThrowStream() noexcept(false) { throw E(ss_.str()); }
  template <class T>
  ThrowStream &operator<<(const T &v) {
    ss_ << v;
    return *this;
  }

 private:
  std::ostringstream ss_;
};

void LogLine(const char *level, const std::string &msg);

class LogStream {
 public:
  explicit LogStream(const char *level) : level_(level) {}
  ~LogStream() { LogLine(level_, ss_.str()); }
  template <class T>
  LogStream &operator<<(const T &v) {
    ss_ << v;
    return *this;
  }

 private:
  const char *level_;
  std::ostringstream ss_;
};

}  // namespace internal

// Runs fn(i) for i in [0, n).  With jobs <= 1 this is a plain loop; otherwise
// the index range is split into contiguous blocks, one thread per block.
// Each call must write only to its own slot so results do not depend on the
// number of jobs.
void ParallelFor(int n, int jobs, const std::function<void(int)> &fn);

}  // namespace lid

#define LID_ERR ::lid::internal::ThrowStream<::lid::Error>()
#define LID_NUMERIC_ERR ::lid::internal::ThrowStream<::lid::NumericError>()
#define LID_LOG ::lid::internal::LogStream("LOG")
#define LID_WARN ::lid::internal::LogStream("WARNING")

#define LID_ASSERT(cond)                                        \
  do {                                                          \
    if (!(cond)) LID_ERR << "Assertion failed: " << #cond;      \
  } while (0)

#endif  // LID_COMMON_H_
