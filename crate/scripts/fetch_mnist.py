#!/usr/bin/env python3
"""Build the desk-scale MNIST subset in data/mnist/ as IDX files.

Source: the `mnist` npm package (v1.1.0, MIT), which ships 10 000 MNIST
digits as JSON arrays of 784 intensities in [0, 1], rounded to three
decimals. Pixels are mapped back to bytes with round(255 * x).

    python3 scripts/fetch_mnist.py [--train 2000] [--test 1000] [--seed 0]
"""

import argparse
import json
import random
import struct
import subprocess
import tarfile
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def load_digits(pkg_dir):
    items = []
    for label in range(10):
        flat = json.loads((pkg_dir / "src" / "digits" / f"{label}.json").read_text())["data"]
        for i in range(0, len(flat), 784):
            items.append((bytes(max(0, min(255, round(v * 255))) for v in flat[i : i + 784]), label))
    return items


def write_idx(items, images, labels):
    with open(images, "wb") as f:
        f.write(struct.pack(">IIII", 0x803, len(items), 28, 28))
        for px, _ in items:
            f.write(px)
    with open(labels, "wb") as f:
        f.write(struct.pack(">II", 0x801, len(items)))
        f.write(bytes(label for _, label in items))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--train", type=int, default=2000)
    ap.add_argument("--test", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", type=Path, default=ROOT / "data" / "mnist")
    args = ap.parse_args()

    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run(["npm", "pack", "mnist@1.1.0"], cwd=tmp, check=True, capture_output=True)
        with tarfile.open(Path(tmp) / "mnist-1.1.0.tgz") as t:
            t.extractall(tmp)
        items = load_digits(Path(tmp) / "package")

    random.Random(args.seed).shuffle(items)
    if args.train + args.test > len(items):
        raise SystemExit(f"only {len(items)} digits available")
    args.out.mkdir(parents=True, exist_ok=True)
    write_idx(items[: args.train], args.out / "train-images-idx3-ubyte", args.out / "train-labels-idx1-ubyte")
    test = items[args.train : args.train + args.test]
    write_idx(test, args.out / "t10k-images-idx3-ubyte", args.out / "t10k-labels-idx1-ubyte")
    print(f"wrote {args.train} train and {args.test} test digits to {args.out}")


if __name__ == "__main__":
    main()
