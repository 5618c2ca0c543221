// include/lid/pipeline.h

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

#ifndef LID_PIPELINE_H_
#define LID_PIPELINE_H_

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace lid {

// INI-style run configuration: [section] headers, key = value lines, # or ;
// comments.  Values are kept as strings; typed getters parse on demand.
class RunConfig {
 public:
  static RunConfig Parse(const std::string &path);
  static RunConfig ParseText(const std::string &text);

  bool Has(const std::string &section, const std::string &key) const;
  std::string Get(const std::string &section, const std::string &key,
                  const std::string &fallback) const;
  std::string GetRequired(const std::string &section,
                          const std::string &key) const;
  int GetInt(const std::string &section, const std::string &key,
             int fallback) const;
  double GetDouble(const std::string &section, const std::string &key,
                   double fallback) const;
  bool GetOnOff(const std::string &section, const std::string &key,
                bool fallback) const;
  std::vector<double> GetDoubleList(const std::string &section,
                                    const std::string &key,
                                    const std::vector<double> &fallback) const;
  void Set(const std::string &section, const std::string &key,
           const std::string &value);

  // Sorted section.key=value lines; the form that gets checksummed.
  std::string Canonical() const;

 private:
  std::map<std::string, std::map<std::string, std::string>> sections_;
};

// The four reported conditions as ready-made configs:
//   a: gmm posteriors, sdc features, vtln on
//   b: dnn posteriors, sdc features, vtln on
//   c: dnn posteriors, sdc features, vtln off
//   d: dnn posteriors, mfcc60 features, vtln off
std::string PresetConfig(const std::string &name, const std::string &workdir);

const std::vector<std::string> &StageNames();

// Runs one stage.  Completed stages short-circuit when the recorded input
// checksums still match; a mismatch is an error unless force is set.  Throws
// Error/IoError on data problems and NumericError on numeric failure; the
// command line maps these to exit codes.
void RunStage(const std::string &stage, const RunConfig &config, int jobs,
              bool force, std::optional<uint64_t> seed_override);

}  // namespace lid

#endif  // LID_PIPELINE_H_
