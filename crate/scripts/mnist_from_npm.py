"""Build a desk-scale MNIST subset in IDX format from the `mnist` npm package.

The npm package (https://www.npmjs.com/package/mnist, v1.1.0) ships 10,000
MNIST digits as per-class JSON arrays of pixel intensities in [0, 1] rounded to
three decimals. This script reconstructs 8-bit pixels, draws a seeded, disjoint
train/test selection and writes gzip-compressed IDX files.

usage: python3 scripts/mnist_from_npm.py <package/src/digits> <out_dir> [train] [test]
"""
import gzip
import json
import random
import struct
import sys
from pathlib import Path


def main():
    digits_dir = Path(sys.argv[1])
    out = Path(sys.argv[2])
    n_train = int(sys.argv[3]) if len(sys.argv) > 3 else 2000
    n_test = int(sys.argv[4]) if len(sys.argv) > 4 else 500
    samples = []
    for label in range(10):
        raw = json.loads((digits_dir / f"{label}.json").read_text())["data"]
        for k in range(len(raw) // 784):
            px = bytes(min(255, max(0, round(v * 255))) for v in raw[k * 784:(k + 1) * 784])
            samples.append((px, label))
    random.Random(20180101).shuffle(samples)
    out.mkdir(parents=True, exist_ok=True)
    for name, part in (("train", samples[:n_train]), ("t10k", samples[n_train:n_train + n_test])):
        with gzip.GzipFile(out / f"{name}-images-idx3-ubyte.gz", "wb", mtime=0) as f:
            f.write(struct.pack(">IIII", 0x803, len(part), 28, 28))
            for px, _ in part:
                f.write(px)
        with gzip.GzipFile(out / f"{name}-labels-idx1-ubyte.gz", "wb", mtime=0) as f:
            f.write(struct.pack(">II", 0x801, len(part)))
            f.write(bytes(lbl for _, lbl in part))
    print(f"{len(samples)} digits available; wrote {n_train} train / {n_test} test to {out}")


if __name__ == "__main__":
    main()
