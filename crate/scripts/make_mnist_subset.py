#!/usr/bin/env python3
"""Build a small MNIST directory in IDX format from package-bundled digits.

Sources (both fetched through the normal package managers):
  * mlxtend wheel, mlxtend/data/data/mnist_5k.csv.gz  (5000 digits, 500 per class)
  * npm package `mnist`, src/digits/<d>.json           (10000 digits, 3-decimal floats)

The 5000 mlxtend digits become the training split. The npm digits that do not
appear in the mlxtend set become the test split, so the two are disjoint.

Usage:
  pip download --no-deps mlxtend -d /tmp/pkgs
  (cd /tmp && npm pack mnist && tar xzf mnist-*.tgz)
  python3 scripts/make_mnist_subset.py /tmp/pkgs/mlxtend-*.whl /tmp/package data/mnist
"""
import gzip
import io
import json
import os
import struct
import sys
import zipfile

import numpy as np


def write_idx(path, arr):
    arr = np.ascontiguousarray(arr, dtype=np.uint8)
    header = struct.pack(">BBBB", 0, 0, 0x08, arr.ndim)
    header += b"".join(struct.pack(">I", d) for d in arr.shape)
    with open(path, "wb") as f:
        f.write(header)
        f.write(arr.tobytes())


def main(wheel, npm_dir, out):
    z = zipfile.ZipFile(wheel)
    raw = gzip.decompress(z.read("mlxtend/data/data/mnist_5k.csv.gz"))
    table = np.loadtxt(io.BytesIO(raw), delimiter=",")
    train_x = table[:, :-1].astype(np.uint8).reshape(-1, 28, 28)
    train_y = table[:, -1].astype(np.uint8)
    seen = {bytes(r) for r in train_x.reshape(len(train_x), -1)}

    test_x, test_y = [], []
    for d in range(10):
        with open(os.path.join(npm_dir, "src", "digits", f"{d}.json")) as f:
            v = np.array(json.load(f)["data"]).reshape(-1, 784)
        u = np.rint(v * 255).astype(np.uint8)
        for row in u:
            if bytes(row) not in seen:
                test_x.append(row.reshape(28, 28))
                test_y.append(d)
    order = np.random.default_rng(0).permutation(len(test_x))
    test_x = np.stack(test_x)[order]
    test_y = np.array(test_y, dtype=np.uint8)[order]

    os.makedirs(out, exist_ok=True)
    write_idx(os.path.join(out, "train-images-idx3-ubyte"), train_x)
    write_idx(os.path.join(out, "train-labels-idx1-ubyte"), train_y)
    write_idx(os.path.join(out, "t10k-images-idx3-ubyte"), test_x)
    write_idx(os.path.join(out, "t10k-labels-idx1-ubyte"), test_y)
    print(f"train {len(train_x)}  test {len(test_x)}  -> {out}")


if __name__ == "__main__":
    main(*sys.argv[1:4])
