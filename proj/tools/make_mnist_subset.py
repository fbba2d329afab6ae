#!/usr/bin/env python3
"""Rebuild data/mnist-0v8 IDX files from the `mnist` npm package.

The npm package (MIT, github.com/cazala/mnist) ships the 10k MNIST test
digits as JSON arrays of pixel/255 rounded to three decimals; rounding back
to bytes is exact. Only the requested digits are kept.

    npm pack mnist && tar xzf mnist-*.tgz
    python3 tools/make_mnist_subset.py package/src/digits data/mnist-0v8 0 8
"""
import json
import pathlib
import struct
import sys


def main() -> int:
    if len(sys.argv) < 4:
        print(__doc__)
        return 1
    src = pathlib.Path(sys.argv[1])
    out = pathlib.Path(sys.argv[2])
    digits = [int(d) for d in sys.argv[3:]]
    images = bytearray()
    labels = bytearray()
    count = 0
    for d in digits:
        flat = json.loads((src / f"{d}.json").read_text())["data"]
        assert len(flat) % 784 == 0
        images.extend(int(round(v * 255)) for v in flat)
        n = len(flat) // 784
        labels.extend([d] * n)
        count += n
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, count, 28, 28))
        f.write(images)
    with open(out / "labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x00000801, count))
        f.write(labels)
    print(f"wrote {count} images to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
