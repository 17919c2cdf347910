#!/usr/bin/env python3
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

"""Downloads MovieLens 100K into data/ml-100k (u.data is all the tests need)."""

import argparse
import io
import pathlib
import urllib.request
import zipfile

URL = "https://files.grouplens.org/datasets/movielens/ml-100k.zip"


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    root = pathlib.Path(__file__).resolve().parent.parent
    parser.add_argument("--dest", type=pathlib.Path, default=root / "data")
    parser.add_argument("--url", default=URL)
    args = parser.parse_args()

    target = args.dest / "ml-100k" / "u.data"
    if target.exists():
        print(f"{target} already present")
        return
    with urllib.request.urlopen(args.url) as resp:
        payload = resp.read()
    with zipfile.ZipFile(io.BytesIO(payload)) as archive:
        archive.extractall(args.dest)
    lines = sum(1 for _ in target.open())
    print(f"wrote {target} ({lines} ratings)")


if __name__ == "__main__":
    main()
