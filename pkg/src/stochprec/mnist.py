"""MNIST-format ingestion (IDX files) and a procedural stand-in dataset.

load_idx/save_idx speak the canonical big-endian IDX container (magic 2051
for images, 2049 for labels). synthesize_digits renders a deterministic
digit-classification dataset in the same 28x28 format for environments
where the real MNIST files are not available; it is written through the
same IDX files so the whole pipeline is exercised identically.
"""

import os
import struct
from dataclasses import dataclass

import numpy as np

IMAGES_MAGIC = 2051
LABELS_MAGIC = 2049

TRAIN_IMAGES = "train-images-idx3-ubyte"
TRAIN_LABELS = "train-labels-idx1-ubyte"
TEST_IMAGES = "t10k-images-idx3-ubyte"
TEST_LABELS = "t10k-labels-idx1-ubyte"


@dataclass
class MnistSet:
    images: np.ndarray  # (n, 1, 28, 28) float64 in [0, 1]
    labels: np.ndarray  # (n,) int64 in [0, 10)

    def __len__(self):
        return len(self.labels)


def _read_exact(fh, n, path):
    buf = fh.read(n)
    if len(buf) != n:
        raise ValueError(f"{path}: truncated file (wanted {n} bytes, got {len(buf)})")
    return buf


def load_idx(images_path, labels_path):
    """Parse an IDX image/label file pair into an MnistSet."""
    with open(images_path, "rb") as fh:
        magic, n, rows, cols = struct.unpack(">iiii", _read_exact(fh, 16, images_path))
        if magic != IMAGES_MAGIC:
            raise ValueError(f"{images_path}: bad image magic {magic} (expected {IMAGES_MAGIC})")
        raw = _read_exact(fh, n * rows * cols, images_path)
        if fh.read(1):
            raise ValueError(f"{images_path}: trailing bytes after {n} images")
    images = np.frombuffer(raw, dtype=np.uint8).reshape(n, 1, rows, cols)

    with open(labels_path, "rb") as fh:
        magic, n_labels = struct.unpack(">ii", _read_exact(fh, 8, labels_path))
        if magic != LABELS_MAGIC:
            raise ValueError(f"{labels_path}: bad label magic {magic} (expected {LABELS_MAGIC})")
        raw = _read_exact(fh, n_labels, labels_path)
    labels = np.frombuffer(raw, dtype=np.uint8).astype(np.int64)

    if n != n_labels:
        raise ValueError(f"image count {n} does not match label count {n_labels}")
    return MnistSet(images=images.astype(np.float64) / 255.0, labels=labels)


def save_idx(dataset, images_path, labels_path):
    """Serialize an MnistSet back to a pair of IDX files (round-trip exact)."""
    images = np.round(dataset.images * 255.0).astype(np.uint8)
    n, _, rows, cols = images.shape
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">iiii", IMAGES_MAGIC, n, rows, cols))
        fh.write(images.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">ii", LABELS_MAGIC, n))
        fh.write(dataset.labels.astype(np.uint8).tobytes())


def load_dir(dataset_dir, split="train"):
    if split == "train":
        return load_idx(os.path.join(dataset_dir, TRAIN_IMAGES),
                        os.path.join(dataset_dir, TRAIN_LABELS))
    if split == "test":
        return load_idx(os.path.join(dataset_dir, TEST_IMAGES),
                        os.path.join(dataset_dir, TEST_LABELS))
    raise ValueError(f"unknown split {split!r}")


def check_dir(dataset_dir):
    """Validate the four canonical IDX files; returns (n_train, n_test)."""
    train = load_dir(dataset_dir, "train")
    test = load_dir(dataset_dir, "test")
    return len(train), len(test)


# ----------------------------------------------------------------------
# procedural stand-in dataset


def _digit_templates(size=28):
    """Render digit glyphs 0..9 in a few font styles to (styles, 10, 28, 28)."""
    from PIL import Image, ImageDraw, ImageFont
    import matplotlib

    font_dir = os.path.join(matplotlib.get_data_path(), "fonts", "ttf")
    faces = [
        "DejaVuSans.ttf", "DejaVuSans-Bold.ttf", "DejaVuSans-Oblique.ttf",
        "DejaVuSansMono.ttf", "DejaVuSerif.ttf", "DejaVuSerif-Italic.ttf",
        "STIXGeneral.ttf", "STIXGeneralBol.ttf", "STIXGeneralItalic.ttf",
        "cmr10.ttf", "cmss10.ttf", "cmtt10.ttf",
    ]
    out = []
    for face in faces:
        font = ImageFont.truetype(os.path.join(font_dir, face), 22)
        row = []
        for d in range(10):
            img = Image.new("L", (size * 2, size * 2), 0)
            draw = ImageDraw.Draw(img)
            left, top, right, bottom = draw.textbbox((0, 0), str(d), font=font)
            draw.text(
                (size - (right + left) / 2, size - (bottom + top) / 2),
                str(d), fill=255, font=font,
            )
            arr = np.asarray(img, dtype=np.float64) / 255.0
            row.append(arr[size // 2 : size // 2 + size, size // 2 : size // 2 + size])
        out.append(row)
    return np.asarray(out)


def _distort(img, rng):
    """Random affine + elastic deformation + blur + noise for one 28x28 image."""
    from scipy import ndimage

    size = img.shape[0]
    angle = rng.uniform(-13, 13)
    scale = rng.uniform(0.78, 1.18)
    shear = rng.uniform(-0.2, 0.2)
    theta = np.deg2rad(angle)
    mat = np.array(
        [[np.cos(theta), -np.sin(theta) + shear], [np.sin(theta), np.cos(theta)]]
    ) / scale
    center = (size - 1) / 2.0
    shift = rng.uniform(-3.0, 3.0, size=2)
    offset = center - mat @ (center + shift)
    out = ndimage.affine_transform(img, mat, offset=offset, order=1, mode="constant")

    # elastic wobble
    alpha, sigma = rng.uniform(1.5, 4.2), 3.5
    dx = ndimage.gaussian_filter(rng.uniform(-1, 1, (size, size)), sigma) * alpha
    dy = ndimage.gaussian_filter(rng.uniform(-1, 1, (size, size)), sigma) * alpha
    yy, xx = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    out = ndimage.map_coordinates(out, [yy + dy, xx + dx], order=1, mode="constant")

    # stroke thickness jitter
    r = rng.random()
    if r < 0.3:
        out = ndimage.grey_dilation(out, size=(2, 2))
    elif r < 0.5:
        out = ndimage.grey_erosion(out, size=(2, 2))

    out = ndimage.gaussian_filter(out, rng.uniform(0.32, 0.9))
    out = out * rng.uniform(0.78, 1.0) + rng.normal(0.0, 0.035, out.shape)
    return np.clip(out, 0.0, 1.0)


def synthesize_digits(n, seed):
    """Deterministic rendered-digit dataset shaped like MNIST."""
    rng = np.random.default_rng(seed)
    templates = _digit_templates()
    n_styles = templates.shape[0]
    labels = rng.integers(0, 10, size=n)
    styles = rng.integers(0, n_styles, size=n)
    images = np.empty((n, 1, 28, 28))
    for i in range(n):
        images[i, 0] = _distort(templates[styles[i], labels[i]], rng)
    return MnistSet(images=images, labels=labels.astype(np.int64))


def ensure_dataset(dataset_dir, n_train=20000, n_test=5000, seed=12345):
    """Create the stand-in dataset as canonical IDX files if not present."""
    os.makedirs(dataset_dir, exist_ok=True)
    paths = [os.path.join(dataset_dir, p)
             for p in (TRAIN_IMAGES, TRAIN_LABELS, TEST_IMAGES, TEST_LABELS)]
    if all(os.path.exists(p) for p in paths):
        return dataset_dir
    train = synthesize_digits(n_train, seed)
    test = synthesize_digits(n_test, seed + 1)
    save_idx(train, paths[0], paths[1])
    save_idx(test, paths[2], paths[3])
    return dataset_dir
