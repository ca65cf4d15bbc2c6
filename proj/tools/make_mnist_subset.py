#!/usr/bin/env python3
# Copyright 2026 The FedPass Lab Authors
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
"""Writes the 5000-image MNIST subset bundled with mlxtend as IDX files.

Usage: make_mnist_subset.py <path-to-mnist_5k.csv.gz> <out-dir>

The rows are shuffled with a fixed seed, then split 4000 train / 1000 test.
"""
import gzip
import struct
import sys

import numpy as np


def write_idx(path, magic, array):
    with open(path, "wb") as f:
        f.write(struct.pack(">I", magic))
        for dim in array.shape:
            f.write(struct.pack(">I", dim))
        f.write(array.astype(np.uint8).tobytes())


def main():
    src, out = sys.argv[1], sys.argv[2]
    with gzip.open(src, "rt") as f:
        data = np.loadtxt(f, delimiter=",")
    images = data[:, :-1].reshape(-1, 28, 28)
    labels = data[:, -1].astype(np.int64)
    order = np.random.RandomState(20230214).permutation(len(labels))
    images, labels = images[order], labels[order]
    write_idx(f"{out}/train-images-idx3-ubyte", 0x00000803, images[:4000])
    write_idx(f"{out}/train-labels-idx1-ubyte", 0x00000801, labels[:4000])
    write_idx(f"{out}/t10k-images-idx3-ubyte", 0x00000803, images[4000:])
    write_idx(f"{out}/t10k-labels-idx1-ubyte", 0x00000801, labels[4000:])


if __name__ == "__main__":
    main()
