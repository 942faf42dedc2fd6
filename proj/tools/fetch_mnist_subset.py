#!/usr/bin/env python3
# Copyright 2026 The lexpyr Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#      http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Converts the 5000-image MNIST subset shipped inside the mlxtend wheel to
gzipped IDX files (the format read by `lexpyr::load_mnist`).

Usage:
  pip download mlxtend --no-deps -d /tmp/mlx
  python3 tools/fetch_mnist_subset.py /tmp/mlx/mlxtend-*.whl data/mnist5k
"""

import gzip
import struct
import sys
import zipfile
from pathlib import Path


def main() -> int:
    if len(sys.argv) != 3:
        print(__doc__, file=sys.stderr)
        return 2
    wheel, out_dir = Path(sys.argv[1]), Path(sys.argv[2])
    with zipfile.ZipFile(wheel) as zf:
        raw = gzip.decompress(zf.read("mlxtend/data/data/mnist_5k.csv.gz"))
    rows = [line.split(",") for line in raw.decode().splitlines() if line]
    images = bytearray()
    labels = bytearray()
    for row in rows:
        if len(row) != 785:
            raise ValueError(f"unexpected row width {len(row)}")
        images.extend(int(float(v)) for v in row[:784])
        labels.append(int(float(row[784])))
    out_dir.mkdir(parents=True, exist_ok=True)
    n = len(rows)
    # gzip mtime pinned so regenerated files are byte-identical.
    with gzip.GzipFile(out_dir / "images-idx3-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 0x00000803, n, 28, 28) + bytes(images))
    with gzip.GzipFile(out_dir / "labels-idx1-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">II", 0x00000801, n) + bytes(labels))
    print(f"wrote {n} images to {out_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
