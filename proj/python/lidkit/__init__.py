# Copyright 2026  The lidkit authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Python surface of the lidkit language recognizer."""

from lidkit._core import (  # noqa: F401
    DiagGmm,
    FullGmm,
    IvectorExtractor,
    LidError,
    LogRegModel,
    accumulate_stats,
    add_deltas,
    add_language,
    compute_cepstra,
    compute_sdc,
    diag_to_full,
    em_iteration,
    energy_vad,
    extract_ivector,
    init_extractor,
    preset_config,
    prune_posteriors,
    read_extractor,
    run_stage,
    sliding_cmn,
    stage_names,
    synth_utterance,
    tandem_posteriors,
    train_diag_ubm,
    train_logreg,
    write_extractor,
)

__version__ = "0.1.0"
