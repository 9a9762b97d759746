"""Synthesizable HDL emission plus a built-in netlist interpreter.

The emitted text is a deliberately restricted synchronous Verilog subset:
wires, registers, adds, arithmetic right shifts, bit selects, concats,
and exhaustive case blocks for the truth tables.  The interpreter is
complete for exactly this dialect, which lets the repository verify
functional and cycle equivalence without any EDA tool.

Pipeline contract: one register level per adder-tree stage and one per
network layer, so the simulated cycle count equals the analytic latency.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .design import DesignPoint, layer_specs
from .errors import ConsistencyError, HdlParseError
from .integrator import (ADC_BITS, IntegratorConfig, feature_word_width,
                         tree_depth, window_length)
from .lutnet import TruthTableNet


@dataclass
class HdlDesign:
    name: str
    integrator_text: str
    lutnet_text: str
    manifest: dict

    @property
    def full_text(self) -> str:
        return self.integrator_text + "\n" + self.lutnet_text

    def write(self, out_dir) -> dict:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        paths = {
            "integrator": out_dir / f"{self.name}_integrator.v",
            "lutnet": out_dir / f"{self.name}_lutnet.v",
            "manifest": out_dir / f"{self.name}_hdl_manifest.json",
        }
        paths["integrator"].write_text(self.integrator_text)
        paths["lutnet"].write_text(self.lutnet_text)
        paths["manifest"].write_text(json.dumps(self.manifest, indent=2) + "\n")
        return paths


def _emit_integrator(name: str, cfg: IntegratorConfig, T: int) -> tuple[str, int]:
    L = window_length(cfg, T)
    D = tree_depth(L)
    b0 = ADC_BITS - cfg.shift_m
    ww = feature_word_width(cfg, T)
    W = cfg.num_windows

    lines = [f"module {name}_integrator ("]
    lines.append("  input wire clk,")
    lines.append("  input wire valid_in,")
    for ch in ("i", "q"):
        for s in range(T):
            lines.append(f"  input wire signed [{ADC_BITS - 1}:0] {ch}_s{s},")
    for j in range(2 * W):
        lines.append(f"  output wire signed [{ww - 1}:0] feat_{j},")
    lines.append("  output wire valid_feat")
    lines.append(");")
    lines.append("")

    wire_decls, reg_decls, assigns, clocked = [], [], [], []
    for w in range(W):
        for ch in ("i", "q"):
            base = cfg.start_sample + w * L
            # level 0: pre-accumulation shift, combinational
            for k in range(L):
                net = f"t_{ch}_w{w}_l0_n{k}"
                wire_decls.append(f"  wire signed [{b0 - 1}:0] {net};")
                assigns.append(f"  assign {net} = {ch}_s{base + k} >>> {cfg.shift_m};")
            # registered adder tree
            nodes = L
            for d in range(1, D + 1):
                nxt = (nodes + 1) // 2
                width = b0 + d
                for k in range(nxt):
                    net = f"t_{ch}_w{w}_l{d}_n{k}"
                    reg_decls.append(f"  reg signed [{width - 1}:0] {net};")
                    lo = f"t_{ch}_w{w}_l{d - 1}_n{2 * k}"
                    if 2 * k + 1 < nodes:
                        clocked.append(f"    {net} <= {lo} + t_{ch}_w{w}_l{d - 1}_n{2 * k + 1};")
                    else:
                        clocked.append(f"    {net} <= {lo};")
                nodes = nxt

    for j in range(2 * W):
        w, ch = j // 2, ("i", "q")[j % 2]
        assigns.append(f"  assign feat_{j} = t_{ch}_w{w}_l{D}_n0 >>> {cfg.shift_n};")

    for d in range(1, D + 1):
        reg_decls.append(f"  reg [0:0] t_v{d};")
        clocked.append(f"    t_v{d} <= {'valid_in' if d == 1 else f't_v{d - 1}'};")
    if D == 0:
        assigns.append("  assign valid_feat = valid_in;")
    else:
        assigns.append(f"  assign valid_feat = t_v{D};")

    lines.extend(wire_decls)
    lines.extend(reg_decls)
    lines.extend(assigns)
    if clocked:
        lines.append("  always @(posedge clk) begin")
        lines.extend(clocked)
        lines.append("  end")
    lines.append("endmodule")
    return "\n".join(lines) + "\n", D


def _emit_lutnet(name: str, ttn: TruthTableNet) -> tuple[str, int]:
    ww = ttn.word_width
    S = len(ttn.specs)
    lines = [f"module {name}_lutnet ("]
    lines.append("  input wire clk,")
    lines.append("  input wire valid_feat,")
    for j in range(ttn.num_words):
        lines.append(f"  input wire signed [{ww - 1}:0] feat_{j},")
    lines.append("  output wire class_out,")
    lines.append("  output wire valid_out")
    lines.append(");")
    lines.append("")

    # feature bit flattening: LSB-first per word, window-major word order
    for k in range(ttn.feature_bits):
        lines.append(f"  wire [0:0] nb_{k};")
    for k in range(ttn.feature_bits):
        lines.append(f"  assign nb_{k} = feat_{k // ww}[{k % ww}];")
    lines.append("")

    for j, spec in enumerate(ttn.specs):
        for i in range(spec.width):
            lines.append(f"  reg [{spec.out_bits - 1}:0] n_l{j}_{i};")
    for s in range(1, S + 1):
        lines.append(f"  reg [0:0] nv{s};")
    lines.append("")

    for j, spec in enumerate(ttn.specs):
        X = spec.table_input_bits
        for i in range(spec.width):
            sel_bits = []
            for e in reversed(range(spec.fan_in)):
                src = ttn.connectivity[j][i, e]
                for t in reversed(range(spec.in_bits)):
                    if j == 0:
                        sel_bits.append(f"nb_{src}[0]")
                    else:
                        sel_bits.append(f"n_l{j - 1}_{src}[{t}]")
            table = ttn.tables[j][i]
            lines.append("  always @(posedge clk) begin")
            lines.append(f"    case ({{{', '.join(sel_bits)}}})")
            for p in range(1 << X):
                lines.append(f"      {X}'d{p}: n_l{j}_{i} <= {spec.out_bits}'d{int(table[p])};")
            lines.append("    endcase")
            lines.append("  end")

    lines.append("  always @(posedge clk) begin")
    lines.append("    nv1 <= valid_feat;")
    for s in range(2, S + 1):
        lines.append(f"    nv{s} <= nv{s - 1};")
    lines.append("  end")
    lines.append(f"  assign class_out = n_l{S - 1}_0[{ttn.output_bits - 1}];")
    lines.append(f"  assign valid_out = nv{S};")
    lines.append("endmodule")
    return "\n".join(lines) + "\n", S


def table_checksum(ttn: TruthTableNet) -> str:
    h = hashlib.sha256()
    for layer in ttn.tables:
        h.update(layer.tobytes())
    return h.hexdigest()


def emit(dp: DesignPoint, ttn: TruthTableNet, cfg: IntegratorConfig,
         T: int = 500, name: str = "design") -> HdlDesign:
    """Deterministic HDL text for one verified design point."""
    if cfg != dp.integrator:
        raise ConsistencyError("integrator config does not match the design point")
    ww = feature_word_width(cfg, T)
    if ttn.word_width != ww or ttn.num_words != 2 * cfg.num_windows:
        raise ConsistencyError(
            f"table network expects {ttn.num_words} x {ttn.word_width}-bit features, "
            f"design produces {2 * cfg.num_windows} x {ww}"
        )
    if ttn.specs != layer_specs(dp, ttn.feature_bits):
        raise ConsistencyError("table network layers do not match the design point")
    integ_text, depth = _emit_integrator(name, cfg, T)
    lut_text, stages = _emit_lutnet(name, ttn)
    from dataclasses import asdict
    manifest = {
        "name": name,
        "design_point": asdict(dp),
        "trace_len": T,
        "word_width": ww,
        "table_checksum": table_checksum(ttn),
        "integrator_stages": depth,
        "network_stages": stages,
        "total_stages": depth + stages,
    }
    return HdlDesign(name=name, integrator_text=integ_text,
                     lutnet_text=lut_text, manifest=manifest)


# --- interpreter -----------------------------------------------------------

_RE_WIRE = re.compile(r"^(wire|reg)\s+(signed\s+)?\[(\d+):0\]\s+(\w+);$")
_RE_PORT = re.compile(r"^(input|output)\s+wire\s+(signed\s+)?(?:\[(\d+):0\]\s+)?(\w+),?$")
_RE_ASSIGN = re.compile(r"^assign\s+(\w+)\s*=\s*(.+);$")
_RE_NB = re.compile(r"^(\w+)\s*<=\s*(.+);$")
_RE_CASE_ITEM = re.compile(r"^(\d+)'d(\d+):\s*(\w+)\s*<=\s*(\d+)'d(\d+);$")
_RE_SHIFT = re.compile(r"^(\w+)\s*>>>\s*(\d+)$")
_RE_ADD = re.compile(r"^(\w+)\s*\+\s*(\w+)$")
_RE_BITSEL = re.compile(r"^(\w+)\[(\d+)\]$")
_RE_IDENT = re.compile(r"^(\w+)$")


@dataclass
class _Net:
    width: int
    signed: bool
    is_input: bool = False
    driven: bool = False


@dataclass
class _Case:
    selector: list[tuple[str, int]]  # (net, bit) MSB-first
    target: str
    table: list[int]


class HdlModel:
    """Parsed netlist for the emitted dialect; reusable across traces."""

    def __init__(self, text: str):
        self.nets: dict[str, _Net] = {}
        self.assigns: list[tuple[str, tuple]] = []  # (target, parsed expr)
        self.regs: list[tuple[str, tuple]] = []     # simple clocked updates
        self.cases: list[_Case] = []
        self._parse(text)
        self.values: dict[str, int] = {}
        self.reset()

    # parsing ---------------------------------------------------------------

    def _parse(self, text: str):
        lines = [ln.strip() for ln in text.splitlines()]
        i = 0
        in_ports = False
        in_always = False
        pending_case: _Case | None = None
        for raw in lines:
            ln = raw.split("//")[0].strip()
            i += 1
            if not ln:
                continue
            if ln.startswith("module "):
                in_ports = True
                continue
            if in_ports:
                if ln == ");":
                    in_ports = False
                    continue
                m = _RE_PORT.match(ln)
                if not m:
                    raise HdlParseError(f"line {i}: bad port declaration: {raw!r}")
                direction, signed, msb, name_ = m.groups()
                width = int(msb) + 1 if msb else 1
                net = self.nets.get(name_)
                if net is None:
                    self.nets[name_] = _Net(width=width, signed=bool(signed),
                                            is_input=(direction == "input"))
                elif direction == "input":
                    pass  # already driven by another module's output
                continue
            if ln == "endmodule":
                continue
            m = _RE_WIRE.match(ln)
            if m:
                _, signed, msb, name_ = m.groups()
                if name_ not in self.nets:
                    self.nets[name_] = _Net(width=int(msb) + 1, signed=bool(signed))
                continue
            m = _RE_ASSIGN.match(ln)
            if m:
                target, expr = m.groups()
                self._mark_driven(target, i)
                self.assigns.append((target, self._parse_expr(expr, i)))
                continue
            if ln == "always @(posedge clk) begin":
                in_always = True
                continue
            if in_always:
                if ln == "end":
                    in_always = False
                    continue
                if ln.startswith("case ("):
                    inner = ln[len("case ("):]
                    if not (inner.startswith("{") and inner.endswith("})")):
                        raise HdlParseError(f"line {i}: bad case selector: {raw!r}")
                    sel = []
                    for part in inner[1:-2].split(","):
                        m2 = _RE_BITSEL.match(part.strip())
                        if not m2:
                            raise HdlParseError(f"line {i}: bad selector bit: {part!r}")
                        sel.append((m2.group(1), int(m2.group(2))))
                    pending_case = _Case(selector=sel, target="", table=[])
                    continue
                if ln == "endcase":
                    if pending_case is None:
                        raise HdlParseError(f"line {i}: endcase without case")
                    want = 1 << len(pending_case.selector)
                    if len(pending_case.table) != want:
                        raise HdlParseError(
                            f"line {i}: case block has {len(pending_case.table)} "
                            f"entries, expected {want}"
                        )
                    self._mark_driven(pending_case.target, i)
                    self.cases.append(pending_case)
                    pending_case = None
                    continue
                if pending_case is not None:
                    m = _RE_CASE_ITEM.match(ln)
                    if not m:
                        raise HdlParseError(f"line {i}: bad case item: {raw!r}")
                    _, idx, target, _, val = m.groups()
                    if int(idx) != len(pending_case.table):
                        raise HdlParseError(f"line {i}: case items out of order")
                    pending_case.target = target
                    pending_case.table.append(int(val))
                    continue
                m = _RE_NB.match(ln)
                if m:
                    target, expr = m.groups()
                    self._mark_driven(target, i)
                    self.regs.append((target, self._parse_expr(expr, i)))
                    continue
                raise HdlParseError(f"line {i}: unsupported clocked statement: {raw!r}")
            raise HdlParseError(f"line {i}: unsupported statement: {raw!r}")
        if in_ports or in_always or pending_case is not None:
            raise HdlParseError("unterminated block at end of text")

    def _mark_driven(self, name_: str, lineno: int):
        net = self.nets.get(name_)
        if net is None:
            raise HdlParseError(f"line {lineno}: assignment to undeclared net {name_!r}")
        net.driven = True

    def _parse_expr(self, expr: str, lineno: int) -> tuple:
        expr = expr.strip()
        m = _RE_SHIFT.match(expr)
        if m:
            return ("sra", m.group(1), int(m.group(2)))
        m = _RE_ADD.match(expr)
        if m:
            return ("add", m.group(1), m.group(2))
        m = _RE_BITSEL.match(expr)
        if m:
            return ("bit", m.group(1), int(m.group(2)))
        m = _RE_IDENT.match(expr)
        if m:
            return ("id", m.group(1))
        raise HdlParseError(f"line {lineno}: unsupported expression: {expr!r}")

    # simulation ------------------------------------------------------------

    def reset(self):
        self.values = {name: 0 for name in self.nets}

    def _signed(self, name_: str) -> int:
        net = self.nets[name_]
        v = self.values[name_]
        if net.signed and v >= (1 << (net.width - 1)):
            v -= 1 << net.width
        return v

    def _eval(self, expr: tuple, target: str) -> int:
        op = expr[0]
        if op == "id":
            v = self._signed(expr[1])
        elif op == "sra":
            v = self._signed(expr[1]) >> expr[2]
        elif op == "add":
            v = self._signed(expr[1]) + self._signed(expr[2])
        elif op == "bit":
            v = (self.values[expr[1]] >> expr[2]) & 1
        else:  # pragma: no cover
            raise HdlParseError(f"unknown op {op}")
        return v & ((1 << self.nets[target].width) - 1)

    def settle(self):
        """Propagate combinational assigns (emitted in topological order)."""
        for target, expr in self.assigns:
            self.values[target] = self._eval(expr, target)

    def clock(self):
        """One rising edge: sample all register inputs, then commit."""
        updates = {}
        for target, expr in self.regs:
            updates[target] = self._eval(expr, target)
        for case in self.cases:
            idx = 0
            for name_, bit in case.selector:
                idx = (idx << 1) | ((self.values[name_] >> bit) & 1)
            updates[case.target] = case.table[idx]
        self.values.update(updates)
        self.settle()

    def set_input(self, name_: str, value: int):
        net = self.nets.get(name_)
        if net is None or not net.is_input or net.driven:
            raise HdlParseError(f"{name_!r} is not an external input")
        self.values[name_] = value & ((1 << net.width) - 1)


def interpret(hdl_text, trace, max_cycles: int = 10_000) -> tuple[int, int]:
    """Run one trace through the emitted design.

    Accepts the combined HDL text (or a pre-parsed HdlModel).  Returns
    (class bit, cycles from asserting valid_in to seeing valid_out).
    """
    model = hdl_text if isinstance(hdl_text, HdlModel) else HdlModel(hdl_text)
    model.reset()
    i_samples = np.asarray(trace.i_samples, dtype=np.int64)
    q_samples = np.asarray(trace.q_samples, dtype=np.int64)
    for s, v in enumerate(i_samples):
        model.set_input(f"i_s{s}", int(v))
    for s, v in enumerate(q_samples):
        model.set_input(f"q_s{s}", int(v))
    model.set_input("valid_in", 1)
    model.settle()
    if model.values.get("valid_out"):
        return int(model.values["class_out"]), 0
    for cycle in range(1, max_cycles + 1):
        model.clock()
        if cycle == 1:
            model.set_input("valid_in", 0)
            model.settle()
        if model.values.get("valid_out"):
            return int(model.values["class_out"]), cycle
    raise HdlParseError(f"valid_out never asserted within {max_cycles} cycles")
