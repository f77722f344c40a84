"""Rebuild the bundled MNIST subset as gzipped IDX files.

The 5000 digits (500 per class) come from ``mnist_5k.csv.gz`` shipped inside
the mlxtend wheel, itself a copy of the original MNIST training images.
Rows are shuffled with a fixed seed, then split 4000 train / 1000 test.

    pip download --no-deps -d /tmp/dl mlxtend==0.24.0
    python data/build_mnist_subset.py /tmp/dl/mlxtend-0.24.0-py3-none-any.whl
"""
import gzip
import io
import sys
import zipfile
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))
from sqntr.idx import write_idx  # noqa: E402

OUT = Path(__file__).resolve().parent / "mnist5k"


def main(wheel):
    raw = zipfile.ZipFile(wheel).read("mlxtend/data/data/mnist_5k.csv.gz")
    table = np.loadtxt(io.BytesIO(gzip.decompress(raw)), delimiter=",").astype(np.uint8)
    order = np.random.default_rng(20240601).permutation(len(table))
    table = table[order]
    images = table[:, :-1].reshape(-1, 28, 28)
    labels = table[:, -1]
    OUT.mkdir(parents=True, exist_ok=True)
    for prefix, sl in (("train", slice(0, 4000)), ("t10k", slice(4000, 5000))):
        for kind, arr in (("images-idx3-ubyte", images[sl]), ("labels-idx1-ubyte", labels[sl])):
            with gzip.GzipFile(OUT / f"{prefix}-{kind}.gz", "wb", mtime=0) as fh:
                fh.write(write_idx(arr))


if __name__ == "__main__":
    main(sys.argv[1])
