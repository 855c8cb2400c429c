#!/usr/bin/env python3
"""Build the bundled 10k-digit MNIST subset as gzip IDX files.

Source: the `mnist` npm package (MIT), which ships 10 000 MNIST digits as
JSON arrays of intensities scaled to [0, 1].

    npm pack mnist && tar xzf mnist-*.tgz
    python3 scripts/make_mnist_subset.py package/src/digits data/mnist-subset
"""
import gzip
import json
import random
import struct
import sys
from pathlib import Path

N_TRAIN = 8000


def write_idx(path, magic, dims, payload):
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(struct.pack(">i", magic))
        for d in dims:
            f.write(struct.pack(">i", d))
        f.write(bytes(payload))


def main():
    src, dst = Path(sys.argv[1]), Path(sys.argv[2])
    dst.mkdir(parents=True, exist_ok=True)
    items = []
    for digit in range(10):
        data = json.loads((src / f"{digit}.json").read_text())["data"]
        for start in range(0, len(data), 784):
            pixels = [int(round(v * 255)) for v in data[start:start + 784]]
            items.append((pixels, digit))
    random.Random(0).shuffle(items)
    for name, part in (("train", items[:N_TRAIN]), ("t10k", items[N_TRAIN:])):
        images = [p for pixels, _ in part for p in pixels]
        labels = [label for _, label in part]
        write_idx(dst / f"{name}-images-idx3-ubyte.gz", 2051, (len(part), 28, 28), images)
        write_idx(dst / f"{name}-labels-idx1-ubyte.gz", 2049, (len(part),), labels)
        print(name, len(part))


if __name__ == "__main__":
    main()
