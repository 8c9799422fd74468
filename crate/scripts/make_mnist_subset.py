#!/usr/bin/env python3
"""Build a stratified MNIST subset in IDX format.

Source: the digit JSON files shipped in the `mnist` npm package
(`npm pack mnist`, files package/src/digits/<d>.json). Each file holds
flattened 28x28 digits with pixels stored as round(v/255, 3); the
original byte is recovered exactly by round(p * 255).

Usage: make_mnist_subset.py <digits-dir> <out-dir> [per-class]
"""
import json
import struct
import sys
from pathlib import Path

digits_dir, out_dir = Path(sys.argv[1]), Path(sys.argv[2])
per_class = int(sys.argv[3]) if len(sys.argv) > 3 else 512

by_class = []
for d in range(10):
    flat = json.loads((digits_dir / f"{d}.json").read_text())["data"]
    n = len(flat) // 784
    imgs = []
    for i in range(n):
        px = flat[i * 784:(i + 1) * 784]
        b = bytes(int(round(p * 255)) for p in px)
        assert all(abs(q / 255 - p) < 6e-4 for q, p in zip(b, px))
        imgs.append(b)
    by_class.append(imgs[:per_class])

images, labels = [], []
for i in range(per_class):
    for d in range(10):
        images.append(by_class[d][i])
        labels.append(d)

out_dir.mkdir(parents=True, exist_ok=True)
with open(out_dir / "images-idx3-ubyte", "wb") as f:
    f.write(struct.pack(">IIII", 0x803, len(images), 28, 28))
    for b in images:
        f.write(b)
with open(out_dir / "labels-idx1-ubyte", "wb") as f:
    f.write(struct.pack(">II", 0x801, len(labels)))
    f.write(bytes(labels))
print(f"wrote {len(images)} examples to {out_dir}")
