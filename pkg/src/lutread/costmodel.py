"""Analytic latency/area estimators and the composite search objective.

Latency counts adder-tree pipeline depth plus one cycle per network
layer; the deployed figure adds a fixed 2-cycle prediction-save term.
Area counts LUT-equivalents only (flip-flops are ignored): an analytic
adder-tree model for the integrator and a closed-form per-neuron LUT
cost for the network, each adjustable through a calibration file.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from .design import DesignPoint, layer_specs
from .errors import CalibrationError, UsageError
from .integrator import ADC_BITS, integrator_cycles, tree_depth, window_length

A_MAX_DEFAULT = 20_000.0
L_MAX_DEFAULT = 14.0
FIDELITY_FLOOR = 0.90
SAVE_CYCLES = 2  # fixed cost of committing the prediction to memory


@dataclass(frozen=True)
class CostWeights:
    w_area: float
    w_latency: float
    w_fidelity: float

    def __post_init__(self):
        if min(self.w_area, self.w_latency, self.w_fidelity) < 0:
            raise UsageError("cost weights must be non-negative")
        if abs(self.w_area + self.w_latency + self.w_fidelity - 1.0) > 1e-9:
            raise UsageError("cost weights must sum to 1")


WEIGHT_PRESETS = {
    "area": CostWeights(0.8, 0.1, 0.1),
    "latency": CostWeights(0.1, 0.8, 0.1),
    "fidelity": CostWeights(0.1, 0.1, 0.8),
}


@dataclass
class CalibrationModel:
    """Overrides for the default analytic area model.

    integrator_coeffs: (intercept, per-input, per-bit) linear model over
    (adder-tree input count, operand bitwidth); None selects the analytic
    tree model.  network_factor scales the closed-form neuron cost.
    """

    integrator_coeffs: tuple[float, float, float] | None = None
    network_factor: float = 1.0

    def tree_luts(self, n_inputs: int, bitwidth: int) -> float:
        if self.integrator_coeffs is None:
            return float(adder_tree_luts(n_inputs, bitwidth))
        a0, an, ab = self.integrator_coeffs
        return max(0.0, a0 + an * n_inputs + ab * bitwidth)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2) + "\n"

    @classmethod
    def load(cls, path) -> "CalibrationModel":
        data = json.loads(Path(path).read_text())
        coeffs = data.get("integrator_coeffs")
        return cls(integrator_coeffs=tuple(coeffs) if coeffs else None,
                   network_factor=float(data.get("network_factor", 1.0)))


@dataclass
class CostReport:
    area_luts: float
    latency_cycles: int
    fidelity: float
    composite: float
    integrator_luts: float = 0.0
    network_luts: float = 0.0
    integrator_cycles: int = 0
    network_cycles: int = 0
    feasible: bool = True

    CSV_FIELDS = ("cost", "area", "latency", "fidelity",
                  "integrator_luts", "network_luts",
                  "integrator_cycles", "network_cycles")

    def csv_row(self) -> list:
        return [f"{self.composite:.6f}", f"{self.area_luts:.1f}",
                self.latency_cycles, f"{self.fidelity:.6f}",
                f"{self.integrator_luts:.1f}", f"{self.network_luts:.1f}",
                self.integrator_cycles, self.network_cycles]

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2) + "\n"


def lut_cost(x_bits: int, y_bits: int) -> float:
    """LUT-equivalents of one X:Y truth-table neuron, floored at Y.

    (2**(X-4) - (-1)**X) / 3 per output bit; a 6:1 function costs one
    6-input LUT and nothing physical costs zero.
    """
    per_bit = (2.0 ** (x_bits - 4) - (-1.0) ** x_bits) / 3.0
    return y_bits * max(1.0, per_bit)


def adder_tree_luts(n_inputs: int, bitwidth: int) -> int:
    """Analytic cost of one balanced adder tree.

    A b-bit add stage costs about b LUTs; operand width grows one bit
    per level while the node count halves.
    """
    total = 0
    nodes = n_inputs
    width = bitwidth
    for _ in range(tree_depth(n_inputs)):
        nodes = (nodes + 1) // 2
        width += 1
        total += nodes * width
    return total


def network_luts(dp: DesignPoint, feature_bits: int) -> float:
    """Closed-form LUT cost summed over all neurons (correction factor excluded)."""
    total = 0.0
    for spec in layer_specs(dp, feature_bits):
        total += spec.width * lut_cost(spec.table_input_bits, spec.out_bits)
    return total


def feature_bits_for(dp: DesignPoint, T: int) -> int:
    from .integrator import feature_word_width
    return 2 * dp.num_windows * feature_word_width(dp.integrator, T)


def area_estimate(dp: DesignPoint, calib: CalibrationModel, T: int) -> tuple[float, float, float]:
    """(total, integrator, network) estimated LUTs."""
    cfg = dp.integrator
    L = window_length(cfg, T)
    per_tree = calib.tree_luts(L, ADC_BITS - cfg.shift_m)
    integ = 2 * cfg.num_windows * per_tree
    net = calib.network_factor * network_luts(dp, feature_bits_for(dp, T))
    return integ + net, integ, net


def latency_estimate(dp: DesignPoint, T: int) -> int:
    """Adder-tree depth plus one pipelined cycle per network layer."""
    return integrator_cycles(dp.integrator, T) + dp.num_stages


def deployed_latency(dp: DesignPoint, T: int) -> int:
    return latency_estimate(dp, T) + SAVE_CYCLES


def composite_cost(area: float, latency: float, fidelity: float, w: CostWeights,
                   a_max: float = A_MAX_DEFAULT, l_max: float = L_MAX_DEFAULT) -> float:
    """Weighted sum of normalized area, latency, and infidelity (unclamped)."""
    return (w.w_area * (area / a_max)
            + w.w_latency * (latency / l_max)
            + w.w_fidelity * (1.0 - fidelity) / (1.0 - FIDELITY_FLOOR))


def calibrate(integrator_samples, network_samples=()) -> CalibrationModel:
    """Fit the calibration model from measured LUT counts.

    integrator_samples: [((n_inputs, bitwidth), measured_luts), ...], >= 2 rows.
    network_samples: [(analytic_luts, measured_luts), ...]; the correction
    factor is the mean measured/analytic ratio (1.0 when empty).
    """
    if len(integrator_samples) < 2:
        raise CalibrationError("need at least 2 integrator samples for the regression")
    X = np.array([[1.0, n, b] for (n, b), _ in integrator_samples])
    y = np.array([m for _, m in integrator_samples], dtype=np.float64)
    coeffs, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    if rank < min(X.shape):
        raise CalibrationError("integrator regression design matrix is rank-deficient")
    factor = 1.0
    if network_samples:
        ratios = [meas / analytic for analytic, meas in network_samples]
        factor = float(np.mean(ratios))
    return CalibrationModel(integrator_coeffs=tuple(float(c) for c in coeffs),
                            network_factor=factor)
