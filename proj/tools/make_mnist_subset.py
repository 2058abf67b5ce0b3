#!/usr/bin/env python3
"""Build IDX files from the digits bundled in the npm `mnist` package.

Usage:
    npm pack mnist            # fetches mnist-<ver>.tgz
    python3 tools/make_mnist_subset.py mnist-1.1.0.tgz data/mnist

The package stores ~1,000 real MNIST digits per class as flattened 28x28
arrays in [0, 1] (256 gray levels).  The last `--test-per-class` digits of each
class form the test split, the rest the train split.  Output files use the
standard IDX names so `ilx --config` presets can point at the directory.
"""
import argparse
import json
import struct
import tarfile
from pathlib import Path


def write_images(path, images):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        for img in images:
            f.write(bytes(img))


def write_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("tarball")
    ap.add_argument("out_dir")
    ap.add_argument("--test-per-class", type=int, default=100)
    args = ap.parse_args()

    train, test = [], []
    with tarfile.open(args.tarball) as tar:
        for digit in range(10):
            member = tar.getmember(f"package/src/digits/{digit}.json")
            flat = json.load(tar.extractfile(member))["data"]
            count = len(flat) // 784
            for i in range(count):
                px = [min(255, max(0, round(v * 255))) for v in flat[i * 784:(i + 1) * 784]]
                split = test if i >= count - args.test_per_class else train
                split.append((px, digit))

    # interleave classes so file order is not sorted by label
    def interleave(rows):
        by_class = [[r for r in rows if r[1] == d] for d in range(10)]
        out = []
        while any(by_class):
            for bucket in by_class:
                if bucket:
                    out.append(bucket.pop(0))
        return out

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, rows in (("train", interleave(train)), ("t10k", interleave(test))):
        write_images(out / f"{name}-images-idx3-ubyte", [r[0] for r in rows])
        write_labels(out / f"{name}-labels-idx1-ubyte", [r[1] for r in rows])
        print(f"{name}: {len(rows)} samples")


if __name__ == "__main__":
    main()
