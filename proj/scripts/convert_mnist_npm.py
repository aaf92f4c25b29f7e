#!/usr/bin/env python3
"""Convert the digit JSON files bundled in the npm `mnist` package into IDX files.

Usage: convert_mnist_npm.py <npm-package-dir> <output-dir>

The package ships 10,000 MNIST digits as per-class JSON arrays of pixel
intensities in [0, 1] (three-decimal quantization of byte/255). This script
reconstructs bytes, interleaves the classes with a fixed shuffle, and writes
mnist_subset-images-idx3-ubyte / mnist_subset-labels-idx1-ubyte.
"""

import json
import random
import struct
import sys
from pathlib import Path


def main() -> None:
    src = Path(sys.argv[1])
    out = Path(sys.argv[2])
    out.mkdir(parents=True, exist_ok=True)

    samples = []
    for digit in range(10):
        with open(src / "src" / "digits" / f"{digit}.json") as f:
            flat = json.load(f)["data"]
        assert len(flat) % 784 == 0
        for i in range(0, len(flat), 784):
            pixels = bytes(min(255, max(0, round(v * 255))) for v in flat[i : i + 784])
            samples.append((digit, pixels))

    rng = random.Random(20240901)
    rng.shuffle(samples)

    n = len(samples)
    with open(out / "mnist_subset-images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">iiii", 0x00000803, n, 28, 28))
        for _, pixels in samples:
            f.write(pixels)
    with open(out / "mnist_subset-labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">ii", 0x00000801, n))
        f.write(bytes(label for label, _ in samples))
    print(f"wrote {n} samples to {out}")


if __name__ == "__main__":
    main()
