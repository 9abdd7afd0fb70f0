"""Dataset construction: synthetic noise experiments, simple regression
targets, a symmetric binary-classification task, and IDX image ingestion.

Every generator is a pure function of (parameters, seed) and records its
provenance in the dataset's meta dict.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .estimators import ExactPmf, SampleMatrix


class DataError(ValueError):
    pass


@dataclass
class NoiseSpec:
    p_flip: float
    n: int

    def __post_init__(self):
        if not 0.0 <= self.p_flip <= 1.0:
            raise DataError("p_flip must lie in [0, 1]")
        if self.n < 1:
            raise DataError("n must be >= 1")


@dataclass
class LabeledDataset:
    x: SampleMatrix
    y: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.y = np.asarray(self.y)
        if self.y.shape[0] != self.x.n_samples:
            raise DataError("x and y lengths differ")

    def to_csv(self, path, target_name="target"):
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(self.x.column_names + [target_name])
            for row, t in zip(self.x.values, self.y):
                w.writerow([repr(float(v)) for v in row] + [repr(t.item())])


# --- force-to-1 noise ----------------------------------------------------

def gen_force_to_one(noise: NoiseSpec, n_samples: int, seed: int):
    """Sample clean binary inputs and their force-to-1 corruptions.

    Returns (x_clean, x_noisy, eps) where eps is 0 for untouched samples
    and i in 1..n when coordinate i was forced to 1.
    """
    rng = np.random.default_rng(seed)
    x_clean = rng.integers(0, 2, size=(n_samples, noise.n), dtype=np.int64)
    flip = rng.random(n_samples) < noise.p_flip
    coord = rng.integers(0, noise.n, size=n_samples)
    eps = np.where(flip, coord + 1, 0).astype(np.int64)
    x_noisy = x_clean.copy()
    x_noisy[flip, coord[flip]] = 1
    return x_clean, x_noisy, eps


def enumerate_force_to_one(noise: NoiseSpec) -> ExactPmf:
    """Exact joint pmf over (clean bits..., noisy bits..., eps).

    The table has 2^n * (n+1) rows; n is capped at 16 to keep it tractable.
    """
    n = noise.n
    if n > 16:
        raise DataError("enumeration limited to n <= 16")
    p = noise.p_flip
    base = 1.0 / (1 << n)
    support, probs = [], []
    for code in range(1 << n):
        bits = tuple((code >> k) & 1 for k in range(n))
        support.append(bits + bits + (0,))
        probs.append(base * (1.0 - p))
        for i in range(n):
            noisy = tuple(1 if k == i else bits[k] for k in range(n))
            support.append(bits + noisy + (i + 1,))
            probs.append(base * p / n)
    return ExactPmf(support, np.array(probs))


SYNERGY_FUNCTIONS = ("f1", "f2", "f3")


def apply_synergy_function(x_noisy: np.ndarray, which: str) -> np.ndarray:
    """f1: first coordinate; f2: XOR of first two; f3: XOR of all."""
    x_noisy = np.asarray(x_noisy, dtype=np.int64)
    if which == "f1":
        return x_noisy[:, 0].copy()
    if which == "f2":
        if x_noisy.shape[1] < 2:
            raise DataError("f2 requires at least 2 coordinates")
        return x_noisy[:, 0] ^ x_noisy[:, 1]
    if which == "f3":
        return np.bitwise_xor.reduce(x_noisy, axis=1)
    raise DataError(f"unknown synergy function {which!r}")


# --- simple regression targets ------------------------------------------

SIMPLE_FUNCTIONS = {
    "add": (2, lambda v: v[0] + v[1]),
    "mul": (2, lambda v: v[0] * v[1]),
    "sp1": (3, lambda v: v[0] * v[1] + v[1] * v[2] + v[2] * v[0]),
    "sp2": (3, lambda v: v[0] ** 2 + v[1] ** 2 + v[2] ** 2),
    "sp3": (4, lambda v: v[0] * v[1] + v[1] * v[2] + v[2] * v[3] + v[3] * v[0]),
}

SIMPLE_DEFAULT_RANGES = {"add": (0.0, 10.0)}


def gen_simple_function(which: str, n_samples: int = 1500,
                        value_range: Optional[tuple] = None,
                        seed: int = 0) -> LabeledDataset:
    """Uniform inputs on range^arity with targets from the closed form."""
    if which not in SIMPLE_FUNCTIONS:
        raise DataError(f"unknown simple function {which!r}")
    arity, fn = SIMPLE_FUNCTIONS[which]
    if value_range is None:
        value_range = SIMPLE_DEFAULT_RANGES.get(which, (-10.0, 10.0))
    lo, hi = value_range
    if not lo < hi:
        raise DataError("invalid range")
    rng = np.random.default_rng(seed)
    x = rng.uniform(lo, hi, size=(n_samples, arity))
    y = fn([x[:, j] for j in range(arity)])
    names = [chr(ord("a") + j) for j in range(arity)]
    meta = {"generator": "simple_function", "which": which,
            "range": [lo, hi], "n_samples": n_samples, "seed": seed}
    return LabeledDataset(SampleMatrix(x, names), y, meta)


# --- symmetric binary classification ------------------------------------

N_CLASS_BITS = 12


def _orbit_representative(code: int, n: int) -> int:
    best = code
    for _ in range(n - 1):
        code = ((code << 1) | (code >> (n - 1))) & ((1 << n) - 1)
        best = min(best, code)
    return best


def gen_binary_classification(seed: int = 0) -> LabeledDataset:
    """All 4096 12-bit patterns with an exactly balanced symmetric label.

    The label is constant on cyclic-rotation orbits: orbits are scored by
    popcount plus a seeded jitter and accumulated greedily, whole orbits at
    a time, until exactly half of the patterns are labeled 1. Rotating any
    pattern therefore never changes its label.
    """
    n = N_CLASS_BITS
    codes = np.arange(1 << n)
    reps = np.array([_orbit_representative(int(c), n) for c in codes])
    orbit_ids = {r: i for i, r in enumerate(sorted(set(reps.tolist())))}
    orbit_of = np.array([orbit_ids[r] for r in reps])
    n_orbits = len(orbit_ids)
    sizes = np.bincount(orbit_of, minlength=n_orbits)

    rng = np.random.default_rng(seed)
    jitter = rng.uniform(-1.0, 1.0, size=n_orbits)
    popcount = np.array([bin(r).count("1") for r in sorted(orbit_ids)])
    score = popcount + 0.75 * jitter
    order = np.argsort(score, kind="stable")[::-1]

    target = (1 << n) // 2
    chosen = np.zeros(n_orbits, dtype=bool)
    remaining = target
    for o in order:
        if sizes[o] <= remaining:
            chosen[o] = True
            remaining -= sizes[o]
        if remaining == 0:
            break
    if remaining != 0:
        raise DataError("could not balance labels exactly")  # pragma: no cover

    labels = chosen[orbit_of].astype(np.int64)
    bits = ((codes[:, None] >> np.arange(n)) & 1).astype(np.float64)
    names = [f"x{j + 1}" for j in range(n)]
    meta = {"generator": "binary_classification", "seed": seed,
            "rule": "cyclic-orbit popcount+jitter threshold, exact balance"}
    return LabeledDataset(SampleMatrix(bits, names), labels, meta)


# --- IDX ingestion -------------------------------------------------------

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


def _read_be32(f, path):
    data = f.read(4)
    if len(data) != 4:
        raise DataError(f"{path}: truncated header at byte {f.tell() - len(data)}")
    return struct.unpack(">I", data)[0]


def load_idx(images_path, labels_path) -> LabeledDataset:
    """Load big-endian IDX image/label files; pixels scaled to [0,1]."""
    with open(images_path, "rb") as f:
        magic = _read_be32(f, images_path)
        if magic != IDX_IMAGE_MAGIC:
            raise DataError(f"{images_path}: bad magic 0x{magic:08x} at byte 0")
        count = _read_be32(f, images_path)
        rows = _read_be32(f, images_path)
        cols = _read_be32(f, images_path)
        payload = f.read()
        expected = count * rows * cols
        if len(payload) != expected:
            raise DataError(
                f"{images_path}: payload {len(payload)} bytes at byte 16, expected {expected}")
        images = np.frombuffer(payload, dtype=np.uint8).reshape(count, rows * cols)
    with open(labels_path, "rb") as f:
        magic = _read_be32(f, labels_path)
        if magic != IDX_LABEL_MAGIC:
            raise DataError(f"{labels_path}: bad magic 0x{magic:08x} at byte 0")
        lcount = _read_be32(f, labels_path)
        payload = f.read()
        if len(payload) != lcount:
            raise DataError(
                f"{labels_path}: payload {len(payload)} bytes at byte 8, expected {lcount}")
        labels = np.frombuffer(payload, dtype=np.uint8).astype(np.int64)
    if count != lcount:
        raise DataError(f"image count {count} != label count {lcount}")
    x = images.astype(np.float64) / 255.0
    names = [f"px{j}" for j in range(rows * cols)]
    meta = {"generator": "idx", "images": str(images_path),
            "labels": str(labels_path), "rows": int(rows), "cols": int(cols)}
    return LabeledDataset(SampleMatrix(x, names), labels, meta)


def write_idx(images: np.ndarray, labels: np.ndarray, images_path, labels_path):
    """Write uint8 images (n, rows, cols) and labels to IDX files."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    n, rows, cols = images.shape
    with open(images_path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGE_MAGIC, n, rows, cols))
        f.write(images.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABEL_MAGIC, n))
        f.write(labels.tobytes())
