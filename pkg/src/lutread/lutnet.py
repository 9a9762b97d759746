"""Fan-in-constrained quantized network with truth-table extraction.

Training uses a differentiable surrogate per neuron: a sparse dot product
over the selected predecessor elements, an affine normalization, and a
uniform symmetric quantizer with a straight-through gradient.  Internal
values are bipolar; quantizer codes map to evenly spaced levels in
[-r, +r].  Because every neuron reads a bounded number of bounded-width
elements, its quantized function can be enumerated exhaustively into a
truth table whose lookup is bit-exact against the surrogate.

Input encoding: integrator feature words are flattened to bits
(two's complement, LSB-first per word); bit b enters the network as the
bipolar value 2*b - 1.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import Dataset
from .design import DesignPoint, LayerSpec, layer_specs
from .errors import (FormatError, InfeasibleTopologyError, InterfaceError,
                     MetricError, TableSizeError, TrainingError)
from .integrator import IntegratorConfig, flatten_to_bits, integrate_batch

MAX_TABLE_INPUT_BITS = 16
RANGE_FLOOR = 1e-6


@dataclass
class NetTopology:
    """Static structure: layer shapes plus frozen random connectivity."""

    specs: list[LayerSpec]
    connectivity: list[np.ndarray]  # per layer: (width, fan_in) indices
    feature_bits: int
    word_width: int
    num_words: int
    seed: int

    @property
    def num_layers(self) -> int:
        return len(self.specs)

    @property
    def output_bits(self) -> int:
        return self.specs[-1].out_bits


@dataclass
class TrainedNet:
    topology: NetTopology
    weights: list[np.ndarray]   # per layer: (width, fan_in)
    scale: list[np.ndarray]     # per layer: (width,)
    offset: list[np.ndarray]    # per layer: (width,)
    ranges: list[float]         # per layer quantizer half-range
    epochs_trained: int = 0
    batch_size: int = 0
    train_seed: int = 0


@dataclass
class TruthTableNet:
    """Extracted tables; evaluation is pure integer lookup."""

    specs: list[LayerSpec]
    connectivity: list[np.ndarray]
    tables: list[np.ndarray]    # per layer: (width, 2**X) uint8 output codes
    feature_bits: int
    word_width: int
    num_words: int

    @property
    def output_bits(self) -> int:
        return self.specs[-1].out_bits

    @property
    def decision_threshold(self) -> int:
        """Output codes at or above this midpoint mean class 1."""
        return 1 << (self.output_bits - 1)


def build_topology(dp: DesignPoint, feature_bits: int, seed: int,
                   word_width: int | None = None) -> NetTopology:
    """Draw per-neuron connectivity uniformly without replacement.

    Fan-in is capped at the predecessor layer width (narrow layers are
    read densely); the input layer has no such fallback and raising is
    the contract when the feature vector is too small.
    """
    specs = layer_specs(dp, feature_bits)
    in_need = dp.gamma_in * dp.beta_in
    if feature_bits < in_need:
        raise InfeasibleTopologyError(
            f"input layer needs {in_need} distinct feature bits, only {feature_bits} available"
        )
    for j, spec in enumerate(specs):
        if spec.table_input_bits > MAX_TABLE_INPUT_BITS:
            raise InfeasibleTopologyError(
                f"layer {j}: table input width {spec.table_input_bits} exceeds "
                f"{MAX_TABLE_INPUT_BITS} bits"
            )
    rng = np.random.default_rng(seed)
    conn = []
    for spec in specs:
        rows = np.empty((spec.width, spec.fan_in), dtype=np.int64)
        for i in range(spec.width):
            rows[i] = np.sort(rng.choice(spec.in_elems, size=spec.fan_in, replace=False))
        conn.append(rows)
    if word_width is None:
        word_width = feature_bits  # single-word fallback for hand-built nets
    num_words = feature_bits // word_width
    return NetTopology(specs=specs, connectivity=conn, feature_bits=feature_bits,
                       word_width=word_width, num_words=num_words, seed=seed)


# --- quantizer -------------------------------------------------------------

def quantize_codes(a: np.ndarray, r: float, bits: int) -> np.ndarray:
    """Uniform symmetric quantizer: activations -> integer codes."""
    levels = (1 << bits) - 1
    codes = np.rint((a + r) * (levels / (2.0 * r)))
    return np.clip(codes, 0, levels).astype(np.int64)


def code_values(r: float, bits: int) -> np.ndarray:
    """Level value for each code: evenly spaced over [-r, +r]."""
    levels = (1 << bits) - 1
    return -r + np.arange(levels + 1, dtype=np.float64) * (2.0 * r / levels)


def _neuron_dot(gathered: np.ndarray, w: np.ndarray) -> np.ndarray:
    """sum_e gathered[..., n, e] * w[n, e], accumulated in a fixed order.

    Shared by training, the quantized-forward oracle, and extraction so
    that all paths produce bit-identical floating-point sums.
    """
    acc = gathered[..., 0] * w[:, 0]
    for e in range(1, w.shape[1]):
        acc = acc + gathered[..., e] * w[:, e]
    return acc


# --- training --------------------------------------------------------------

def _forward(tn: TrainedNet, bits: np.ndarray, update_ranges: bool = False):
    """Surrogate forward pass over a (B, feature_bits) bit matrix.

    Returns per-layer caches and the output neuron's pre-quantization
    activation (the training logit).
    """
    x = bits.astype(np.float64) * 2.0 - 1.0
    caches = []
    for j, spec in enumerate(tn.topology.specs):
        gathered = x[:, tn.topology.connectivity[j]]         # (B, width, fan)
        with np.errstate(over="ignore", invalid="ignore"):
            z = _neuron_dot(gathered, tn.weights[j])
            a = tn.scale[j] * z + tn.offset[j]
        if not np.all(np.isfinite(a)):
            raise TrainingError(f"training diverged in layer {j} (non-finite activation)")
        if update_ranges:
            amax = float(np.max(np.abs(a)))
            tn.ranges[j] = max(RANGE_FLOOR, 0.9 * tn.ranges[j] + 0.1 * amax)
        r = tn.ranges[j]
        codes = quantize_codes(a, r, spec.out_bits)
        x_next = code_values(r, spec.out_bits)[codes]
        caches.append((x, gathered, z, a))
        x = x_next
    logit = caches[-1][3][:, 0]  # pre-quantization activation of the output neuron
    return caches, logit


def train(topology: NetTopology, ds: Dataset, cfg: IntegratorConfig,
          epochs: int, batch_size: int, lr: float = 0.01,
          seed: int = 0) -> TrainedNet:
    """Mini-batch SGD with straight-through gradients through the quantizers.

    Loss is binary cross-entropy on the output neuron's pre-quantization
    activation.  Deterministic in (seed, dataset bytes, hyperparameters).
    """
    if epochs < 1:
        raise TrainingError("epochs must be >= 1")
    i_tr, q_tr, y_tr = ds.subset(ds.train_idx)
    words, ww = integrate_batch(i_tr, q_tr, cfg)
    if ww != topology.word_width or words.shape[1] * ww != topology.feature_bits:
        raise InterfaceError(
            f"feature shape ({words.shape[1]} words x {ww} bits) does not match "
            f"topology ({topology.num_words} x {topology.word_width})"
        )
    bits = flatten_to_bits(words, ww)
    y = y_tr.astype(np.float64)

    rng = np.random.default_rng(seed)
    tn = TrainedNet(
        topology=topology,
        weights=[rng.normal(0.0, 1.0 / np.sqrt(s.fan_in), size=(s.width, s.fan_in))
                 for s in topology.specs],
        scale=[np.ones(s.width) for s in topology.specs],
        offset=[np.zeros(s.width) for s in topology.specs],
        ranges=[1.0] * topology.num_layers,
        epochs_trained=epochs, batch_size=batch_size, train_seed=seed,
    )
    # Input-layer init follows two's-complement bit significance (sign bit
    # negative) with a random polarity per neuron, so each input neuron
    # starts as a scaled partial reconstruction of its feature word.
    conn0 = topology.connectivity[0]
    bitpos = conn0 % ww
    significance = (2.0 ** bitpos) / (2.0 ** (ww - 1))
    significance = np.where(bitpos == ww - 1, -significance, significance)
    polarity = rng.choice([-1.0, 1.0], size=(conn0.shape[0], 1))
    tn.weights[0] = polarity * significance

    n = bits.shape[0]
    for epoch in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            sel = order[start:start + batch_size]
            xb, yb = bits[sel], y[sel]
            caches, logit = _forward(tn, xb, update_ranges=True)
            if not np.all(np.isfinite(logit)):
                raise TrainingError("training diverged (non-finite logit)", epoch=epoch)
            p = 1.0 / (1.0 + np.exp(-np.clip(logit, -60.0, 60.0)))
            dlogit = (p - yb) / len(sel)

            # backprop; straight-through estimator clips gradients outside
            # [-r, r].  Overflow here just means the next forward pass will
            # fail its finite check, so the warnings are suppressed.
            grad_x = None
            err = np.errstate(over="ignore", invalid="ignore")
            err.__enter__()
            for j in reversed(range(topology.num_layers)):
                x_in, gathered, z, a = caches[j]
                if j == topology.num_layers - 1:
                    da = dlogit[:, None]
                else:
                    da = grad_x * (np.abs(a) <= tn.ranges[j])
                dz = da * tn.scale[j]
                if j > 0:
                    contrib = dz[:, :, None] * tn.weights[j][None, :, :]
                    dx = np.zeros_like(x_in)
                    flat_idx = topology.connectivity[j].ravel()
                    np.add.at(dx, (slice(None), flat_idx),
                              contrib.reshape(len(sel), -1))
                    grad_x = dx
                tn.scale[j] -= lr * np.einsum("bn,bn->n", da, z)
                tn.offset[j] -= lr * da.sum(axis=0)
                tn.weights[j] -= lr * np.einsum("bn,bnf->nf", dz, gathered)
            err.__exit__(None, None, None)
    return tn


def quantized_forward(tn: TrainedNet, bits: np.ndarray) -> np.ndarray:
    """Reference integer-code forward pass: (B, feature_bits) -> (B,) codes.

    Uses the same accumulation order as extraction, so table lookup must
    agree bit-exactly.
    """
    x = bits.astype(np.float64) * 2.0 - 1.0
    codes = None
    for j, spec in enumerate(tn.topology.specs):
        gathered = x[:, tn.topology.connectivity[j]]
        z = _neuron_dot(gathered, tn.weights[j])
        a = tn.scale[j] * z + tn.offset[j]
        codes = quantize_codes(a, tn.ranges[j], spec.out_bits)
        x = code_values(tn.ranges[j], spec.out_bits)[codes]
    return codes[:, 0]


# --- extraction and lookup inference ---------------------------------------

def _pattern_inputs(spec: LayerSpec, prev_range: float | None) -> np.ndarray:
    """(2**X, fan_in) decoded element values for every input pattern.

    Pattern index packs element e's code into bits [e*b, (e+1)*b).
    Layer-0 elements are single feature bits decoded as bipolar +/-1.
    """
    X = spec.table_input_bits
    patterns = np.arange(1 << X, dtype=np.int64)
    shifts = np.arange(spec.fan_in, dtype=np.int64) * spec.in_bits
    codes = (patterns[:, None] >> shifts) & ((1 << spec.in_bits) - 1)
    if prev_range is None:
        return codes.astype(np.float64) * 2.0 - 1.0
    return code_values(prev_range, spec.in_bits)[codes]


def extract_tables(tn: TrainedNet) -> TruthTableNet:
    """Enumerate every neuron's quantized function into a truth table."""
    topo = tn.topology
    tables = []
    for j, spec in enumerate(topo.specs):
        if spec.table_input_bits > MAX_TABLE_INPUT_BITS:
            raise TableSizeError(
                f"layer {j}: 2**{spec.table_input_bits} table entries unsupported"
            )
        prev_range = None if j == 0 else tn.ranges[j - 1]
        values = _pattern_inputs(spec, prev_range)          # (2**X, fan)
        gathered = values[:, None, :]                        # broadcast over neurons
        z = _neuron_dot(np.broadcast_to(gathered, (values.shape[0], spec.width, spec.fan_in)),
                        tn.weights[j])
        a = tn.scale[j] * z + tn.offset[j]
        codes = quantize_codes(a, tn.ranges[j], spec.out_bits)
        tables.append(codes.T.astype(np.uint8).copy())       # (width, 2**X)
    return TruthTableNet(specs=topo.specs, connectivity=topo.connectivity,
                         tables=tables, feature_bits=topo.feature_bits,
                         word_width=topo.word_width, num_words=topo.num_words)


def infer_bits(ttn: TruthTableNet, bits: np.ndarray) -> np.ndarray:
    """(B, feature_bits) bit matrix -> (B,) class bits via table lookups."""
    if bits.shape[-1] != ttn.feature_bits:
        raise InterfaceError(
            f"expected {ttn.feature_bits} feature bits, got {bits.shape[-1]}"
        )
    x = bits.astype(np.int64)
    for j, spec in enumerate(ttn.specs):
        sel = x[:, ttn.connectivity[j]]                      # (B, width, fan)
        shifts = np.arange(spec.fan_in, dtype=np.int64) * spec.in_bits
        idx = (sel << shifts).sum(axis=-1)
        x = ttn.tables[j][np.arange(spec.width), idx].astype(np.int64)
    return (x[:, 0] >= ttn.decision_threshold).astype(np.int64)


def infer(ttn: TruthTableNet, fv) -> int:
    """Classify one feature vector (class bit 0 or 1)."""
    words = np.asarray(fv.words, dtype=np.int64)[None, :]
    if fv.word_width != ttn.word_width or words.shape[1] != ttn.num_words:
        raise InterfaceError(
            f"feature vector ({words.shape[1]} x {fv.word_width} bits) does not "
            f"match network ({ttn.num_words} x {ttn.word_width})"
        )
    bits = flatten_to_bits(words, fv.word_width)
    return int(infer_bits(ttn, bits)[0])


def classify_batch(ttn: TruthTableNet, i: np.ndarray, q: np.ndarray,
                   cfg: IntegratorConfig) -> np.ndarray:
    words, ww = integrate_batch(i, q, cfg)
    if ww != ttn.word_width or words.shape[1] != ttn.num_words:
        raise InterfaceError("integrator output shape does not match network")
    return infer_bits(ttn, flatten_to_bits(words, ww))


def fidelity_from_rates(p01: float, p10: float) -> float:
    """1 - 0.5 * (P(0|1) + P(1|0))."""
    return 1.0 - 0.5 * (p01 + p10)


def fidelity(ttn: TruthTableNet, cfg: IntegratorConfig, ds: Dataset,
             idx: np.ndarray | None = None) -> float:
    """Balanced assignment fidelity on the test split (or given indices)."""
    if idx is None:
        idx = ds.test_idx
    i, q, y = ds.subset(idx)
    if y.size == 0 or not (np.any(y == 0) and np.any(y == 1)):
        raise MetricError("fidelity needs both classes present in the evaluation set")
    pred = classify_batch(ttn, i, q, cfg)
    p01 = float(np.mean(pred[y == 1] == 0))
    p10 = float(np.mean(pred[y == 0] == 1))
    return fidelity_from_rates(p01, p10)


# --- serialization ---------------------------------------------------------

TTN_MAGIC = b"LUNATT01"


def save_tables(ttn: TruthTableNet, json_path, blob_path) -> None:
    """JSON descriptor plus a raw blob of concatenated table bytes."""
    offsets = []
    blob = bytearray(TTN_MAGIC)
    for layer_tables in ttn.tables:
        layer_offsets = []
        for row in layer_tables:
            layer_offsets.append(len(blob))
            blob.extend(row.tobytes())
        offsets.append(layer_offsets)
    meta = {
        "feature_bits": ttn.feature_bits,
        "word_width": ttn.word_width,
        "num_words": ttn.num_words,
        "layers": [
            {
                "width": s.width, "in_elems": s.in_elems, "in_bits": s.in_bits,
                "fan_in": s.fan_in, "out_bits": s.out_bits,
                "connectivity": ttn.connectivity[j].tolist(),
                "table_offsets": offsets[j],
            }
            for j, s in enumerate(ttn.specs)
        ],
        "blob_file": Path(blob_path).name,
    }
    Path(json_path).write_text(json.dumps(meta, indent=2) + "\n")
    Path(blob_path).write_bytes(bytes(blob))


def load_tables(json_path, blob_path=None) -> TruthTableNet:
    json_path = Path(json_path)
    meta = json.loads(json_path.read_text())
    if blob_path is None:
        blob_path = json_path.parent / meta["blob_file"]
    blob = Path(blob_path).read_bytes()
    if blob[:8] != TTN_MAGIC:
        raise FormatError(f"{blob_path}: missing {TTN_MAGIC.decode()} header")
    specs, conn, tables = [], [], []
    for layer in meta["layers"]:
        spec = LayerSpec(width=layer["width"], in_elems=layer["in_elems"],
                         in_bits=layer["in_bits"], fan_in=layer["fan_in"],
                         out_bits=layer["out_bits"])
        n_entries = 1 << spec.table_input_bits
        rows = np.empty((spec.width, n_entries), dtype=np.uint8)
        for i, off in enumerate(layer["table_offsets"]):
            if off + n_entries > len(blob):
                raise FormatError(f"{blob_path}: table blob truncated")
            rows[i] = np.frombuffer(blob, dtype=np.uint8, count=n_entries, offset=off)
        max_code = (1 << spec.out_bits) - 1
        if rows.max(initial=0) > max_code:
            raise FormatError(f"{blob_path}: table code exceeds {spec.out_bits} bits")
        specs.append(spec)
        conn.append(np.asarray(layer["connectivity"], dtype=np.int64))
        tables.append(rows)
    return TruthTableNet(specs=specs, connectivity=conn, tables=tables,
                         feature_bits=meta["feature_bits"],
                         word_width=meta["word_width"], num_words=meta["num_words"])
