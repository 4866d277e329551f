#!/usr/bin/env python3
"""Write the scikit-learn digits set (8x8, 10 classes) as IDX file pairs.

Produces train/test pairs under the given directory so the full
idx_dataset pipeline can be exercised without downloading MNIST:

    python3 scripts/make_digits_idx.py data/digits
    evomix run --config configs/split_digits.json
"""

import argparse
import os
import struct

import numpy as np
from sklearn.datasets import load_digits


def write_idx(images: np.ndarray, labels: np.ndarray, images_path: str, labels_path: str):
    n, rows, cols = images.shape
    with open(images_path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, n, rows, cols))
        f.write(images.astype(np.uint8).tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, n))
        f.write(labels.astype(np.uint8).tobytes())


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("out_dir", nargs="?", default="data/digits")
    parser.add_argument("--test-fraction", type=float, default=0.25)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    digits = load_digits()
    # 0..16 pixel range scaled to the 0..255 byte range IDX readers expect
    images = np.round(digits.images * (255.0 / 16.0)).astype(np.uint8)
    labels = digits.target.astype(np.uint8)

    rng = np.random.default_rng(args.seed)
    order = rng.permutation(len(labels))
    n_test = int(len(labels) * args.test_fraction)
    test_idx, train_idx = order[:n_test], order[n_test:]

    os.makedirs(args.out_dir, exist_ok=True)
    write_idx(
        images[train_idx], labels[train_idx],
        os.path.join(args.out_dir, "train-images-idx3-ubyte"),
        os.path.join(args.out_dir, "train-labels-idx1-ubyte"),
    )
    write_idx(
        images[test_idx], labels[test_idx],
        os.path.join(args.out_dir, "t10k-images-idx3-ubyte"),
        os.path.join(args.out_dir, "t10k-labels-idx1-ubyte"),
    )
    print(f"wrote {len(train_idx)} train / {len(test_idx)} test digits to {args.out_dir}")


if __name__ == "__main__":
    main()
