#!/usr/bin/env python3
"""Convert the upstream SVHN cropped-digit .mat files into the flat container
this project reads (magic "SVHNRAW1", little-endian u32 {N, H, W, C}, N*H*W*C
pixel bytes row-major channel-interleaved, then N label bytes).

Upstream files: http://ufldl.stanford.edu/housenumbers/{train,test}_32x32.mat
Labels arrive as 1..10 with 10 meaning digit 0; the container stores 0..9.

    python3 tools/svhn_convert.py train_32x32.mat data/svhn/train.svhnraw
    python3 tools/svhn_convert.py --self-test
"""

import struct
import sys
import tempfile
from pathlib import Path

import numpy as np

MAGIC = b"SVHNRAW1"


def convert_array(images: np.ndarray, labels: np.ndarray, out_path: Path) -> None:
    """images: uint8 [N, H, W, C]; labels: int [N] with values 0..9."""
    if images.dtype != np.uint8:
        raise ValueError(f"expected uint8 pixels, got {images.dtype}")
    n, h, w, c = images.shape
    labels = labels.astype(np.int64).reshape(-1)
    if labels.shape[0] != n:
        raise ValueError(f"count mismatch: {n} images vs {labels.shape[0]} labels")
    if labels.min() < 0 or labels.max() > 9:
        raise ValueError("labels must be 0..9 after remapping")
    with open(out_path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<IIII", n, h, w, c))
        f.write(images.tobytes(order="C"))
        f.write(labels.astype(np.uint8).tobytes())


def convert_mat(mat_path: Path, out_path: Path) -> int:
    from scipy.io import loadmat

    mat = loadmat(str(mat_path))
    x = mat["X"]  # H x W x C x N
    y = mat["y"].reshape(-1)
    images = np.ascontiguousarray(np.transpose(x, (3, 0, 1, 2)))
    labels = np.where(y == 10, 0, y)
    convert_array(images, labels, out_path)
    return images.shape[0]


def read_raw(path: Path):
    data = path.read_bytes()
    if data[:8] != MAGIC:
        raise ValueError("bad magic")
    n, h, w, c = struct.unpack("<IIII", data[8:24])
    pixels = np.frombuffer(data[24 : 24 + n * h * w * c], dtype=np.uint8).reshape(n, h, w, c)
    labels = np.frombuffer(data[24 + n * h * w * c :], dtype=np.uint8)
    return pixels, labels


def self_test() -> int:
    """Round-trip a small synthetic .mat through the converter and require the
    pixel bytes to come back identical."""
    from scipy.io import savemat

    rng = np.random.default_rng(7)
    images = rng.integers(0, 256, size=(10, 32, 32, 3), dtype=np.uint8)
    labels_upstream = rng.integers(1, 11, size=(10, 1), dtype=np.uint8)  # 1..10
    x = np.transpose(images, (1, 2, 3, 0))  # upstream layout H x W x C x N

    with tempfile.TemporaryDirectory() as tmp:
        mat_path = Path(tmp) / "synthetic_32x32.mat"
        raw_path = Path(tmp) / "synthetic.svhnraw"
        savemat(str(mat_path), {"X": x, "y": labels_upstream})
        convert_mat(mat_path, raw_path)
        pixels, labels = read_raw(raw_path)

        if not np.array_equal(pixels, images):
            print("self-test FAILED: pixel bytes differ", file=sys.stderr)
            return 1
        expected_labels = np.where(labels_upstream.reshape(-1) == 10, 0, labels_upstream.reshape(-1))
        if not np.array_equal(labels, expected_labels.astype(np.uint8)):
            print("self-test FAILED: labels differ", file=sys.stderr)
            return 1
    print("self-test OK: 10 images round-tripped bit-exactly")
    return 0


def main(argv):
    if len(argv) == 2 and argv[1] == "--self-test":
        return self_test()
    if len(argv) != 3:
        print(__doc__, file=sys.stderr)
        return 1
    n = convert_mat(Path(argv[1]), Path(argv[2]))
    print(f"wrote {n} images to {argv[2]}")
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))
