# Copyright 2026 The LMF Authors
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

"""Python access to the lmf core: permutation, factorization and benchmarks."""

import json

from ._core import (
    DegenerateError,
    DivergenceError,
    Factors,
    FactorizerSpec,
    LmfError,
    LocalizedModel,
    RatingMatrix,
    Tree,
    factorize,
    fit_localized,
    load_model,
    load_ratings,
    permute,
    rmse,
    run_benchmark_json,
)

__all__ = [
    "DegenerateError",
    "DivergenceError",
    "Factors",
    "FactorizerSpec",
    "LmfError",
    "LocalizedModel",
    "RatingMatrix",
    "Tree",
    "factorize",
    "fit_localized",
    "load_model",
    "load_ratings",
    "permute",
    "rmse",
    "run_benchmark",
]


def run_benchmark(config):
    """Runs the cross-validated benchmark; `config` is a dict of config keys."""
    return json.loads(run_benchmark_json(json.dumps(config)))
