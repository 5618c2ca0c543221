// src/common.cc

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

#include "lid/common.h"

#include <iostream>
#include <mutex>
#include <thread>
#include <vector>

namespace lid {
namespace internal {

namespace {
std::mutex log_mutex;
}

void LogLine(const char *level, const std::string &msg) {
  std::lock_guard<std::mutex> lock(log_mutex);
  std::cerr << level << " (lid): " << msg << "\n";
}

}  // namespace internal

void ParallelFor(int n, int jobs, const std::function<void(int)> &fn) {
  if (n <= 0) return;
  if (jobs <= 1 || n == 1) {
    for (int i = 0; i < n; i++) fn(i);
    return;
  }
  int num_threads = std::min(jobs, n);
  std::vector<std::thread> threads;
  threads.reserve(num_threads);
  std::vector<std::exception_ptr> errors(num_threads);
  // Contiguous static split keeps the work assignment deterministic.
  for (int w = 0; w < num_threads; w++) {
    int begin = static_cast<int>(static_cast<int64_t>(n) * w / num_threads);
    int end = static_cast<int>(static_cast<int64_t>(n) * (w + 1) / num_threads);
    threads.emplace_back([&, w, begin, end]() {
      try {
        for (int i = begin; i < end; i++) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto &t : threads) t.join();
  for (auto &e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace lid
