#!/usr/bin/env python3
"""Build IDX files from the digit JSON bundled in the `mnist` npm package.

The npm package ships ~10k MNIST digits as per-class JSON arrays with pixels
scaled to [0, 1] (three decimals). This script restores 8-bit pixels, splits
each class into a training part (first TRAIN_PER_CLASS digits) and a test part
(the rest), shuffles each part with a fixed seed, and writes the four standard
IDX files:

    train-images-idx3-ubyte  train-labels-idx1-ubyte
    t10k-images-idx3-ubyte   t10k-labels-idx1-ubyte

Usage: mnist_from_npm.py <package/src/digits dir> <out dir> [train_per_class]
"""
import json
import os
import random
import struct
import sys


def write_idx(out_dir, prefix, samples):
    with open(os.path.join(out_dir, f"{prefix}-images-idx3-ubyte"), "wb") as f:
        f.write(struct.pack(">IIII", 0x803, len(samples), 28, 28))
        for pixels, _ in samples:
            f.write(bytes(pixels))
    with open(os.path.join(out_dir, f"{prefix}-labels-idx1-ubyte"), "wb") as f:
        f.write(struct.pack(">II", 0x801, len(samples)))
        f.write(bytes(label for _, label in samples))


def main():
    digits_dir, out_dir = sys.argv[1], sys.argv[2]
    train_per_class = int(sys.argv[3]) if len(sys.argv) > 3 else 500
    os.makedirs(out_dir, exist_ok=True)
    train, test = [], []
    for digit in range(10):
        with open(os.path.join(digits_dir, f"{digit}.json")) as f:
            flat = json.load(f)["data"]
        images = [
            [min(255, max(0, round(v * 255))) for v in flat[i : i + 784]]
            for i in range(0, len(flat), 784)
        ]
        train += [(img, digit) for img in images[:train_per_class]]
        test += [(img, digit) for img in images[train_per_class:]]
    rng = random.Random(20220711)
    rng.shuffle(train)
    rng.shuffle(test)
    write_idx(out_dir, "train", train)
    write_idx(out_dir, "t10k", test)
    print(f"train={len(train)} test={len(test)} -> {out_dir}")


if __name__ == "__main__":
    main()
