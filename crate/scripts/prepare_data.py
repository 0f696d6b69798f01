#!/usr/bin/env python3
"""Build the IDX3 image files under data/ used by the acceptance suite.

Sources (fetched with `npm pack`, which works behind package mirrors):
  * mnist-data@1.2.6     raw MNIST IDX files (handwritten digits)
  * fashion-mnist@1.1.0  Fashion-MNIST as per-class JSON arrays

The third set is rendered locally: isolated Arabic letters drawn with
DejaVu Sans, randomly rotated/sheared/thickened/blurred and then centered
the way MNIST is (20x20 box, center of mass at the middle of 28x28).

Usage: scripts/prepare_data.py [--workdir DIR]
"""
import argparse
import json
import os
import subprocess
import tarfile

import numpy as np
from PIL import Image, ImageDraw, ImageFilter, ImageFont

HERE = os.path.dirname(os.path.abspath(__file__))
DATA = os.path.join(HERE, "..", "data")
FONT = "/usr/share/fonts/truetype/dejavu/DejaVuSans.ttf"
ARABIC = [c for c in range(0x0627, 0x063B)] + [c for c in range(0x0641, 0x064B)]


def write_idx3(path, images):
    images = np.asarray(images, dtype=np.uint8)
    n, rows, cols = images.shape
    with open(path, "wb") as f:
        f.write((0x00000803).to_bytes(4, "big"))
        for v in (n, rows, cols):
            f.write(int(v).to_bytes(4, "big"))
        f.write(images.tobytes())


def read_idx3(path):
    b = open(path, "rb").read()
    assert int.from_bytes(b[:4], "big") == 0x803
    n, r, c = (int.from_bytes(b[4 * i : 4 * i + 4], "big") for i in (1, 2, 3))
    return np.frombuffer(b[16:], np.uint8).reshape(n, r, c)


def npm_unpack(pkg, workdir):
    subprocess.run(["npm", "pack", pkg], cwd=workdir, check=True, stdout=subprocess.DEVNULL)
    name = pkg.replace("@", "-") + ".tgz"
    out = os.path.join(workdir, pkg.split("@")[0])
    with tarfile.open(os.path.join(workdir, name)) as t:
        t.extractall(out)
    return os.path.join(out, "package")


def mnist_style(img):
    """Fit the ink into a 20x20 box and center its mass in 28x28."""
    a = np.asarray(img, dtype=np.float64)
    ys, xs = np.nonzero(a > 8)
    a = a[ys.min() : ys.max() + 1, xs.min() : xs.max() + 1]
    h, w = a.shape
    s = 20.0 / max(h, w)
    nh, nw = max(1, round(h * s)), max(1, round(w * s))
    a = np.asarray(Image.fromarray(a.astype(np.uint8)).resize((nw, nh), Image.LANCZOS), dtype=np.float64)
    a = np.clip(a, 0, 255)
    out = np.zeros((28, 28))
    tot = a.sum()
    cy = (a.sum(1) * np.arange(nh)).sum() / tot
    cx = (a.sum(0) * np.arange(nw)).sum() / tot
    oy = int(round(14 - cy))
    ox = int(round(14 - cx))
    oy = min(max(oy, 0), 28 - nh)
    ox = min(max(ox, 0), 28 - nw)
    out[oy : oy + nh, ox : ox + nw] = a
    out *= 255.0 / out.max()
    return np.round(out).astype(np.uint8)


def glyphs(count, seed):
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        ch = chr(ARABIC[rng.integers(len(ARABIC))])
        font = ImageFont.truetype(FONT, int(rng.integers(44, 60)))
        canvas = Image.new("L", (128, 128))
        ImageDraw.Draw(canvas).text((30, 20), ch, font=font, fill=255)
        shear = rng.uniform(-0.25, 0.25)
        canvas = canvas.transform((128, 128), Image.AFFINE, (1, shear, -shear * 64, 0, 1, 0), Image.BILINEAR)
        canvas = canvas.rotate(rng.uniform(-15, 15), Image.BILINEAR, center=(64, 64))
        for _ in range(int(rng.integers(0, 3))):
            canvas = canvas.filter(ImageFilter.MaxFilter(3))
        canvas = canvas.filter(ImageFilter.GaussianBlur(rng.uniform(0.6, 1.4)))
        if np.asarray(canvas).max() < 64:
            continue
        out.append(mnist_style(canvas))
    return np.stack(out)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--workdir", default="/tmp/vortex-data")
    args = ap.parse_args()
    os.makedirs(args.workdir, exist_ok=True)
    os.makedirs(DATA, exist_ok=True)
    rng = np.random.default_rng(20201)

    mnist = read_idx3(os.path.join(npm_unpack("mnist-data@1.2.6", args.workdir), "data", "train-images-idx3-ubyte"))
    pick = rng.permutation(len(mnist))[:4500]
    write_idx3(os.path.join(DATA, "mnist-digits-4500-idx3-ubyte"), mnist[np.sort(pick)])

    fm_dir = npm_unpack("fashion-mnist@1.1.0", args.workdir)
    per_class = []
    for c in range(10):
        rows = json.load(open(os.path.join(fm_dir, "src", "clothes", f"{c}.json")))["data"]
        rows = np.array([r for r in rows if len(r) == 784], dtype=np.uint8)
        per_class.append(rows[np.sort(rng.permutation(len(rows))[:500])])
    fashion = np.stack(per_class, 1).reshape(-1, 28, 28)  # classes interleaved
    write_idx3(os.path.join(DATA, "fashion-mnist-5000-idx3-ubyte"), fashion)

    write_idx3(os.path.join(DATA, "arabic-glyphs-500-idx3-ubyte"), glyphs(500, seed=7))


if __name__ == "__main__":
    main()
