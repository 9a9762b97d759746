"""Design-point encoding and the discrete parameter grids it lives on.

A candidate design is a fixed-length integer vector covering both the
integrator settings and the network architecture.  The ell3 slot is
carried in the encoding even when num_hidden = 2 so that vector
arithmetic in the search always operates on equal-length vectors.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict

from .errors import UsageError
from .integrator import IntegratorConfig

FIELD_NAMES = (
    "start_sample", "num_windows", "shift_m", "shift_n",
    "ell0", "num_hidden", "ell1", "ell2", "ell3",
    "beta_in", "beta_hidden", "beta_out",
    "gamma_in", "gamma_hidden", "gamma_out",
)

VECTOR_LEN = len(FIELD_NAMES)


@dataclass(frozen=True)
class Grids:
    """Allowed values per field.  Defaults cover the full search space.

    gamma_hidden / gamma_out grids depend on the corresponding bitwidth:
    {6..16} at bitwidth 1, {6, 7, 8} at bitwidth 2.
    """

    start_sample: tuple = (0, 50, 100)
    num_windows: tuple = (1, 2, 3, 4)
    shift_m: tuple = tuple(range(2, 8))
    shift_n: tuple = tuple(range(0, 7))
    ell0: tuple = tuple(range(25, 150, 5))
    num_hidden: tuple = (2, 3)
    ell_hidden: tuple = tuple(range(5, 50, 5))
    beta: tuple = (1, 2)
    gamma_in: tuple = (6, 7)
    gamma_narrow: tuple = tuple(range(6, 17))   # fan-in grid when bitwidth = 1
    gamma_wide: tuple = (6, 7, 8)               # fan-in grid when bitwidth = 2

    def gamma_grid(self, beta: int) -> tuple:
        return self.gamma_narrow if beta == 1 else self.gamma_wide

    def grid_for(self, name: str, beta: int | None = None) -> tuple:
        if name in ("ell1", "ell2", "ell3"):
            return self.ell_hidden
        if name in ("beta_in", "beta_hidden", "beta_out"):
            return self.beta
        if name in ("gamma_hidden", "gamma_out"):
            return self.gamma_grid(beta)
        return getattr(self, name)


DEFAULT_GRIDS = Grids()


@dataclass(frozen=True)
class DesignPoint:
    start_sample: int
    num_windows: int
    shift_m: int
    shift_n: int
    ell0: int
    num_hidden: int
    ell1: int
    ell2: int
    ell3: int
    beta_in: int
    beta_hidden: int
    beta_out: int
    gamma_in: int
    gamma_hidden: int
    gamma_out: int

    @property
    def integrator(self) -> IntegratorConfig:
        return IntegratorConfig(self.start_sample, self.num_windows,
                                self.shift_m, self.shift_n)

    @property
    def layer_widths(self) -> tuple[int, ...]:
        """Input layer, hidden layers, and the single output neuron."""
        hidden = (self.ell1, self.ell2, self.ell3) if self.num_hidden == 3 \
            else (self.ell1, self.ell2)
        return (self.ell0, *hidden, 1)

    @property
    def num_stages(self) -> int:
        """Pipeline stages in the network: one per neuron layer."""
        return len(self.layer_widths)

    def to_vector(self) -> list[int]:
        return [getattr(self, name) for name in FIELD_NAMES]

    @classmethod
    def from_vector(cls, vec) -> "DesignPoint":
        if len(vec) != VECTOR_LEN:
            raise UsageError(f"design vector must have {VECTOR_LEN} fields, got {len(vec)}")
        return cls(**{name: int(v) for name, v in zip(FIELD_NAMES, vec)})

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=False) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "DesignPoint":
        data = json.loads(text)
        missing = [n for n in FIELD_NAMES if n not in data]
        if missing:
            raise UsageError(f"design JSON missing fields: {missing}")
        return cls(**{n: int(data[n]) for n in FIELD_NAMES})

    def on_grids(self, grids: Grids = DEFAULT_GRIDS) -> bool:
        for name in FIELD_NAMES:
            beta = None
            if name == "gamma_hidden":
                beta = self.beta_hidden
            elif name == "gamma_out":
                beta = self.beta_out
            if getattr(self, name) not in grids.grid_for(name, beta):
                return False
        return True


def snap_to_grid(value: float, grid: tuple) -> int:
    """Clip to the grid range, then pick the nearest value (ties go low)."""
    best = grid[0]
    best_d = abs(value - best)
    for g in grid[1:]:
        d = abs(value - g)
        if d < best_d:
            best, best_d = g, d
    return int(best)


def sanitize(raw, grids: Grids = DEFAULT_GRIDS) -> DesignPoint:
    """Project an arbitrary real vector onto the nearest valid design point.

    Bitwidth fields are resolved first because the fan-in grids depend on
    them; fan-ins are then snapped onto the matching grid.
    """
    if len(raw) != VECTOR_LEN:
        raise UsageError(f"design vector must have {VECTOR_LEN} fields, got {len(raw)}")
    vals = dict(zip(FIELD_NAMES, raw))
    out = {}
    for name in ("beta_in", "beta_hidden", "beta_out"):
        out[name] = snap_to_grid(vals[name], grids.beta)
    for name in FIELD_NAMES:
        if name in out:
            continue
        beta = None
        if name == "gamma_hidden":
            beta = out["beta_hidden"]
        elif name == "gamma_out":
            beta = out["beta_out"]
        out[name] = snap_to_grid(vals[name], grids.grid_for(name, beta))
    return DesignPoint(**out)


# Layer-shape bookkeeping shared by the network builder, the area model,
# and the HDL emitter.

@dataclass(frozen=True)
class LayerSpec:
    width: int          # neurons in this layer
    in_elems: int       # selectable predecessor elements (bits for layer 0)
    in_bits: int        # bits per input element
    fan_in: int         # elements actually read per neuron
    out_bits: int       # bits per output element

    @property
    def table_input_bits(self) -> int:
        return self.in_bits * self.fan_in


def layer_specs(dp: DesignPoint, feature_bits: int) -> list[LayerSpec]:
    """Per-layer shapes for a design point driving `feature_bits` input bits.

    Fan-in is capped at the number of available predecessor elements: a
    layer narrower than the requested fan-in is simply read densely.
    The layer feeding the output neuron emits beta_out-bit codes because
    that is the output neuron's input bitwidth.
    """
    widths = dp.layer_widths
    k = len(widths)
    specs = []
    for j, w in enumerate(widths):
        if j == 0:
            in_elems, in_bits = feature_bits, 1
            fan = dp.gamma_in * dp.beta_in
        else:
            in_elems = widths[j - 1]
            in_bits = specs[j - 1].out_bits
            gamma = dp.gamma_out if j == k - 1 else dp.gamma_hidden
            fan = min(gamma, in_elems)
        out_bits = dp.beta_out if j >= k - 2 else dp.beta_hidden
        specs.append(LayerSpec(width=w, in_elems=in_elems, in_bits=in_bits,
                               fan_in=fan, out_bits=out_bits))
    return specs
