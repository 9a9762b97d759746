"""Labeled I/Q trace datasets: binary container I/O and a synthetic generator.

On-disk format (little-endian):
  magic "LUNADS01" (8 bytes), u32 record count, u32 trace length T,
  then per record: T x i16 I samples, T x i16 Q samples, u8 label.

Samples occupy 16-bit slots for alignment but must lie in the 14-bit
two's-complement range [-8192, 8191].  The default train/test split is
the first 90% / last 10% of records; a sidecar JSON split file with
"train" and "test" index lists overrides it.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, UsageError, ValidationError

MAGIC = b"LUNADS01"
HEADER_SIZE = 16
SAMPLE_MIN = -8192
SAMPLE_MAX = 8191
DEFAULT_TRACE_LEN = 500


@dataclass(frozen=True)
class TraceRecord:
    """One labeled readout shot."""

    i_samples: np.ndarray
    q_samples: np.ndarray
    label: int


@dataclass
class Dataset:
    """All records of one capture plus its train/test partition."""

    i: np.ndarray          # (n, T) int16
    q: np.ndarray          # (n, T) int16
    labels: np.ndarray     # (n,) uint8
    train_idx: np.ndarray  # indices into records
    test_idx: np.ndarray
    source: str = "synthetic"
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.i.shape[0]

    @property
    def trace_len(self) -> int:
        return self.i.shape[1]

    def record(self, idx: int) -> TraceRecord:
        return TraceRecord(self.i[idx], self.q[idx], int(self.labels[idx]))

    def subset(self, idx: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(I, Q, labels) arrays for the given record indices."""
        return self.i[idx], self.q[idx], self.labels[idx]

    def validate(self) -> None:
        n = len(self)
        if self.q.shape != self.i.shape:
            raise ValidationError("I and Q arrays have mismatched shapes")
        if self.labels.shape != (n,):
            raise ValidationError("label array length does not match record count")
        bad = np.nonzero((self.labels != 0) & (self.labels != 1))[0]
        if bad.size:
            raise ValidationError(f"record {bad[0]}: label {self.labels[bad[0]]} not in {{0, 1}}")
        for name, arr in (("I", self.i), ("Q", self.q)):
            out = (arr < SAMPLE_MIN) | (arr > SAMPLE_MAX)
            if out.any():
                rec = int(np.nonzero(out.any(axis=1))[0][0])
                val = int(arr[rec][out[rec]][0])
                raise ValidationError(
                    f"record {rec}: {name} sample {val} outside 14-bit range "
                    f"[{SAMPLE_MIN}, {SAMPLE_MAX}]"
                )
        both = np.intersect1d(self.train_idx, self.test_idx)
        if both.size:
            raise ValidationError(f"train/test splits overlap at record {int(both[0])}")
        for idx in (self.train_idx, self.test_idx):
            if idx.size and (idx.min() < 0 or idx.max() >= n):
                raise ValidationError("split index out of range")


def default_split(n: int) -> tuple[np.ndarray, np.ndarray]:
    """First 90% train, last 10% test."""
    n_train = (n * 9) // 10
    return np.arange(n_train), np.arange(n_train, n)


def write_dataset(ds: Dataset, path) -> None:
    """Serialize to the binary container; inverse of load_dataset."""
    ds.validate()
    path = Path(path)
    n, T = ds.i.shape
    i16 = ds.i.astype("<i2", copy=False)
    q16 = ds.q.astype("<i2", copy=False)
    try:
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<II", n, T))
            for r in range(n):
                fh.write(i16[r].tobytes())
                fh.write(q16[r].tobytes())
                fh.write(struct.pack("<B", int(ds.labels[r])))
    except OSError as exc:
        raise FormatError(f"failed to write dataset to {path}: {exc}") from exc


def load_dataset(path, split_path=None) -> Dataset:
    """Load and validate a binary dataset file."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise FormatError(f"failed to read dataset {path}: {exc}") from exc
    if len(raw) < HEADER_SIZE or raw[:8] != MAGIC:
        raise FormatError(f"{path}: missing {MAGIC.decode()} header")
    n, T = struct.unpack_from("<II", raw, 8)
    rec_bytes = 4 * T + 1
    expected = HEADER_SIZE + n * rec_bytes
    if len(raw) != expected:
        raise FormatError(f"{path}: expected {expected} bytes for n={n}, T={T}, got {len(raw)}")

    i = np.empty((n, T), dtype=np.int16)
    q = np.empty((n, T), dtype=np.int16)
    labels = np.empty(n, dtype=np.uint8)
    off = HEADER_SIZE
    for r in range(n):
        i[r] = np.frombuffer(raw, dtype="<i2", count=T, offset=off)
        q[r] = np.frombuffer(raw, dtype="<i2", count=T, offset=off + 2 * T)
        labels[r] = raw[off + 4 * T]
        off += rec_bytes

    if split_path is not None:
        spec = json.loads(Path(split_path).read_text())
        train_idx = np.asarray(spec["train"], dtype=np.int64)
        test_idx = np.asarray(spec["test"], dtype=np.int64)
    else:
        train_idx, test_idx = default_split(n)

    ds = Dataset(i=i, q=q, labels=labels, train_idx=train_idx, test_idx=test_idx,
                 source="file", meta={"path": str(path), "n": n, "T": T})
    ds.validate()
    return ds


def synth_dataset(n: int, T: int, separation: float, noise_sd: float, seed: int) -> Dataset:
    """Constant-offset-plus-Gaussian two-class generator.

    Class c has mean +/- separation/2 in both channels, so the class
    means differ by exactly `separation` per channel before rounding.
    Labels alternate 0,1,0,1,... which keeps the counts balanced and
    puts both classes into any contiguous split.
    """
    if n <= 0 or T <= 0:
        raise UsageError("n and T must be positive")
    if noise_sd < 0:
        raise UsageError("noise_sd must be non-negative")
    rng = np.random.default_rng(seed)
    labels = (np.arange(n) % 2).astype(np.uint8)
    offset = np.where(labels == 1, separation / 2.0, -separation / 2.0)[:, None]

    def channel() -> np.ndarray:
        vals = offset + rng.normal(0.0, noise_sd, size=(n, T)) if noise_sd > 0 \
            else np.broadcast_to(offset, (n, T)).copy()
        return np.clip(np.rint(vals), SAMPLE_MIN, SAMPLE_MAX).astype(np.int16)

    i = channel()
    q = channel()
    train_idx, test_idx = default_split(n)
    return Dataset(i=i, q=q, labels=labels, train_idx=train_idx, test_idx=test_idx,
                   source="synthetic", seed=seed,
                   meta={"n": n, "T": T, "separation": separation,
                         "noise_sd": noise_sd, "seed": seed})
