#!/usr/bin/env python3
"""Build gzipped IDX files from the 5,000-digit MNIST sample shipped in mlxtend.

The sample is the only MNIST data reachable through a plain package index,
so it is what the desk-scale experiments and acceptance suite run on.

    python3 tools/make_mnist_sample.py [--wheel mlxtend-*.whl] [--out data/mnist-5k]
"""
import argparse
import glob
import gzip
import io
import os
import struct
import subprocess
import sys
import tempfile
import zipfile

MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"


def fetch_wheel(workdir):
    subprocess.run([sys.executable, "-m", "pip", "download", "--no-deps",
                    "--only-binary=:all:", "-d", workdir, "mlxtend"], check=True)
    return glob.glob(os.path.join(workdir, "mlxtend-*.whl"))[0]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--wheel")
    ap.add_argument("--out", default=os.path.join(os.path.dirname(__file__), "..", "data", "mnist-5k"))
    args = ap.parse_args()

    with tempfile.TemporaryDirectory() as tmp:
        wheel = args.wheel or fetch_wheel(tmp)
        raw = zipfile.ZipFile(wheel).read(MEMBER)
    rows = [line.split(",") for line in gzip.decompress(raw).decode().splitlines() if line]

    images = io.BytesIO()
    labels = io.BytesIO()
    images.write(struct.pack(">IIII", 0x00000803, len(rows), 28, 28))
    labels.write(struct.pack(">II", 0x00000801, len(rows)))
    for r in rows:
        pixels = [int(float(v)) for v in r[:784]]
        images.write(bytes(pixels))
        labels.write(bytes([int(float(r[784]))]))

    os.makedirs(args.out, exist_ok=True)
    # mtime=0 keeps the archives byte-stable across regenerations
    for name, buf in (("images-idx3-ubyte.gz", images), ("labels-idx1-ubyte.gz", labels)):
        with open(os.path.join(args.out, name), "wb") as f:
            with gzip.GzipFile(fileobj=f, mode="wb", mtime=0, filename="") as gz:
                gz.write(buf.getvalue())
    print(f"wrote {len(rows)} examples to {args.out}")


if __name__ == "__main__":
    main()
