"""Acceptance suite: one test per criterion, one printed verdict line each.

Verdict lines are written to the real stdout so they survive pytest's
capture; run with plain `pytest -v` and the summary appears inline.
"""

import math
import os
import sys

import numpy as np
import pytest

from lutread.cli import main as cli_main
from lutread.costmodel import (CalibrationModel, CostWeights, composite_cost,
                               deployed_latency, latency_estimate, lut_cost)
from lutread.dataset import load_dataset, synth_dataset
from lutread.errors import FeatureOverflowError
from lutread.integrator import (IntegratorConfig, feature_word_width,
                                flatten_to_bits, integrate_batch, window_length)
from lutread.lutnet import (build_topology, code_values, extract_tables,
                            fidelity, infer_bits, quantized_forward, train)
from lutread.rtl import HdlModel, emit, interpret
from lutread.search import SearchConfig, run_search

from conftest import SMALL_GRIDS, make_dp

# Published configurations used by criteria 1 and 9.
FIDELITY_ROW = make_dp(start_sample=100, num_windows=2, shift_m=7, shift_n=1,
                       ell0=145, num_hidden=2, ell1=40, ell2=15,
                       beta_in=1, beta_hidden=2, beta_out=2,
                       gamma_in=7, gamma_hidden=6, gamma_out=8)
AREA_ROW = make_dp(start_sample=100, num_windows=1, shift_m=7, shift_n=0,
                   ell0=25, num_hidden=2, ell1=5, ell2=5,
                   beta_in=1, beta_hidden=1, beta_out=1,
                   gamma_in=6, gamma_hidden=6, gamma_out=6)
LATENCY_ROW = make_dp(start_sample=100, num_windows=2, shift_m=7, shift_n=1,
                      ell0=145, num_hidden=2, ell1=35, ell2=15,
                      beta_in=1, beta_hidden=1, beta_out=1,
                      gamma_in=7, gamma_hidden=7, gamma_out=7)


_CAPFD = None


@pytest.fixture(autouse=True)
def _route_verdicts(capfd):
    # pytest's default fd-level capture also swallows sys.__stdout__, so
    # verdict lines go through capfd.disabled() to reach the real stdout.
    global _CAPFD
    _CAPFD = capfd
    yield
    _CAPFD = None


def verdict(num, ok, detail):
    line = f"ACCEPTANCE {num:2d}: {'PASS' if ok else 'FAIL'} - {detail}"
    if _CAPFD is not None:
        with _CAPFD.disabled():
            print(line, flush=True)
    else:
        print(line, file=sys.__stdout__, flush=True)
    assert ok, line


def _oracle_neuron_codes(net, layer, neuron, patterns):
    """Big-float oracle for one neuron's table rows: independent accumulation
    order (math.fsum) and an independent quantizer evaluation."""
    spec = net.topology.specs[layer]
    prev_r = None if layer == 0 else net.ranges[layer - 1]
    w = net.weights[layer][neuron]
    levels = (1 << spec.out_bits) - 1
    r = net.ranges[layer]
    out = np.empty(len(patterns), dtype=np.int64)
    decode = None if prev_r is None else code_values(prev_r, spec.in_bits)
    mask = (1 << spec.in_bits) - 1
    for k, p in enumerate(patterns):
        terms = []
        for e in range(spec.fan_in):
            code = (p >> (e * spec.in_bits)) & mask
            v = (code * 2.0 - 1.0) if decode is None else decode[code]
            terms.append(v * w[e])
        a = net.scale[layer][neuron] * math.fsum(terms) + net.offset[layer][neuron]
        out[k] = int(np.clip(np.rint((a + r) * (levels / (2.0 * r))), 0, levels))
    return out


def test_criterion_01_latency_reproduction():
    lats = [latency_estimate(dp, 500) for dp in (FIDELITY_ROW, AREA_ROW, LATENCY_ROW)]
    deps = [deployed_latency(dp, 500) for dp in (FIDELITY_ROW, AREA_ROW, LATENCY_ROW)]
    ok = lats == [12, 13, 12] and deps == [14, 15, 14]
    verdict(1, ok, f"latency {lats} (want [12, 13, 12]), deployed {deps} "
                   f"(want [14, 15, 14])")


def test_criterion_02_cost_formula_fixture():
    c = composite_cost(8226, 12, 0.95995, CostWeights(0.1, 0.1, 0.8))
    ok = abs(c - 0.44725) < 1e-4
    verdict(2, ok, f"composite {c:.6f} vs 0.44725 +/- 1e-4")


def test_criterion_03_truth_table_equivalence(trained_small, small_ds):
    mismatches = 0
    total = 0
    # design A: every layer X <= 12 -> exhaustive per-neuron enumeration
    _, _, _, net, ttn = trained_small
    for j, spec in enumerate(net.topology.specs):
        patterns = np.arange(1 << spec.table_input_bits)
        for n in range(spec.width):
            ref = _oracle_neuron_codes(net, j, n, patterns)
            total += len(patterns)
            mismatches += int(np.sum(ref != ttn.tables[j][n, patterns]))
    # design B: hidden X = 16 -> >= 10,000 random patterns per wide layer
    dp_wide = make_dp(ell0=12, ell1=6, ell2=5, beta_in=1, beta_hidden=2,
                      beta_out=2, gamma_in=6, gamma_hidden=8, gamma_out=8)
    ww = feature_word_width(dp_wide.integrator, small_ds.trace_len)
    topo = build_topology(dp_wide, feature_bits=2 * dp_wide.num_windows * ww,
                          seed=2, word_width=ww)
    net_b = train(topo, small_ds, dp_wide.integrator, epochs=2, batch_size=256,
                  lr=0.1, seed=2)
    ttn_b = extract_tables(net_b)
    rng = np.random.default_rng(0)
    for j, spec in enumerate(topo.specs):
        X = spec.table_input_bits
        if X <= 12:
            patterns = np.arange(1 << X)
        else:
            patterns = rng.integers(0, 1 << X, size=10_000)
        for n in range(spec.width):
            ref = _oracle_neuron_codes(net_b, j, n, patterns)
            total += len(patterns)
            mismatches += int(np.sum(ref != ttn_b.tables[j][n, patterns]))
    # end-to-end: lookup network equals the surrogate's quantized pass
    bits = rng.integers(0, 2, size=(10_000, ttn_b.feature_bits)).astype(np.uint8)
    ref_codes = quantized_forward(net_b, bits)
    total += len(bits)
    mismatches += int(np.sum(infer_bits(ttn_b, bits)
                             != (ref_codes >= ttn_b.decision_threshold)))
    verdict(3, mismatches == 0,
            f"{mismatches} mismatches over {total} table/surrogate comparisons")


def test_criterion_04_emission_equivalence(trained_small, small_ds):
    dp, cfg, _, _, ttn = trained_small
    design = emit(dp, ttn, cfg, T=small_ds.trace_len)
    model = HdlModel(design.full_text)
    lat = latency_estimate(dp, small_ds.trace_len)
    n = 1000
    rng = np.random.default_rng(4)
    idx = rng.integers(0, len(small_ds), size=n)
    words, ww = integrate_batch(small_ds.i[idx], small_ds.q[idx], cfg)
    expected = infer_bits(ttn, flatten_to_bits(words, ww))
    bad = cycles_bad = 0
    for k, row in enumerate(idx):
        got, cycles = interpret(model, small_ds.record(int(row)))
        bad += got != int(expected[k])
        cycles_bad += cycles != lat
    verdict(4, bad == 0 and cycles_bad == 0,
            f"{bad}/{n} class mismatches, {cycles_bad}/{n} cycle mismatches "
            f"(latency {lat})")


def test_criterion_05_trajectory_monotonicity(small_ds):
    failures = []
    for seed in range(5):
        cfg = SearchConfig(np_size=16, g_max=20, patience=20,
                           weights=CostWeights(0.1, 0.1, 0.8),
                           search_epochs=2, search_batch=256,
                           master_seed=seed, grids=SMALL_GRIDS)
        res = run_search(small_ds, cfg)
        mono = all(b <= a for a, b in zip(res.trajectory, res.trajectory[1:]))
        if not mono:
            failures.append(seed)
    verdict(5, not failures,
            f"5 seeded runs (NP=16, G=20); non-monotone seeds: {failures or 'none'}")


@pytest.mark.slow
def test_criterion_06_desk_scale_search_efficacy():
    ds = synth_dataset(n=10_000, T=500, separation=60, noise_sd=300, seed=7)
    # brute-force threshold oracle on per-trace summed channels bounds what
    # any integrator+classifier can do on this data
    s = ds.i.sum(axis=1, dtype=np.int64) + ds.q.sum(axis=1, dtype=np.int64)
    order = np.argsort(s)
    y_sorted = ds.labels[order]
    ones = int(y_sorted.sum())
    zeros = len(y_sorted) - ones
    # sweep every cut position; fidelity of predicting 1 above the cut
    cum_ones = np.concatenate([[0], np.cumsum(y_sorted)])
    cum_zeros = np.arange(len(y_sorted) + 1) - cum_ones
    p01 = cum_ones / ones                   # ones below the cut
    p10 = (zeros - cum_zeros) / zeros       # zeros above the cut
    oracle = float(np.max(1.0 - 0.5 * (p01 + p10)))

    cfg = SearchConfig(np_size=16, g_max=20, patience=20,
                       weights=CostWeights(0.1, 0.1, 0.8),
                       search_epochs=5, search_batch=512, master_seed=0)
    res = run_search(ds, cfg)
    fid = res.best_report.fidelity
    ok = oracle >= 0.99 and fid >= 0.99
    verdict(6, ok, f"threshold oracle {oracle:.4f}, search fidelity {fid:.4f} "
                   f"(need >= 0.99), best cost {res.best_report.composite:.4f}")


@pytest.mark.slow
def test_criterion_07_determinism_across_jobs(tmp_path):
    data = tmp_path / "d.bin"
    rc = cli_main(["gen-data", "--n", "2000", "--T", "64", "--separation",
                   "200", "--noise-sd", "100", "--seed", "3",
                   "--out", str(data)])
    assert rc == 0
    outputs = {}
    for jobs in (1, 8):
        out = tmp_path / f"run_j{jobs}"
        rc = cli_main(["search", "--data", str(data), "--target", "fidelity",
                       "--np", "8", "--gmax", "2", "--patience", "2",
                       "--epochs", "2", "--batch", "128", "--seed", "0",
                       "--jobs", str(jobs), "--out-dir", str(out)])
        assert rc == 0
        outputs[jobs] = ((out / "best.json").read_bytes(),
                         (out / "trajectory.csv").read_bytes())
    ok = outputs[1] == outputs[8]
    verdict(7, ok, "jobs=1 and jobs=8 best.json + trajectory.csv byte-identical"
            if ok else "jobs=1 vs jobs=8 outputs differ")


def test_criterion_08_area_formula_fixtures():
    got = (lut_cost(6, 1), lut_cost(16, 1), lut_cost(12, 2))
    want = (1.0, 1365.0, 170.0)
    verdict(8, got == want, f"lut_cost fixtures {got} (want {want})")


@pytest.mark.skipif("LUTREAD_REFERENCE_DATA" not in os.environ,
                    reason="reference dataset not supplied "
                           "(set LUTREAD_REFERENCE_DATA)")
def test_criterion_09_reference_fidelity():
    ds = load_dataset(os.environ["LUTREAD_REFERENCE_DATA"])
    dp = FIDELITY_ROW
    T = ds.trace_len
    ww = feature_word_width(dp.integrator, T)
    topo = build_topology(dp, feature_bits=2 * dp.num_windows * ww, seed=0,
                          word_width=ww)
    net = train(topo, ds, dp.integrator, epochs=30, batch_size=1024, lr=0.1,
                seed=0)
    fid = fidelity(extract_tables(net), dp.integrator, ds)
    ok = abs(fid - 0.96) <= 0.005
    verdict(9, ok, f"reference-data fidelity {fid:.5f} vs 0.96 +/- 0.005")


def test_criterion_10_integrator_oracle():
    rng = np.random.default_rng(10)
    mismatches = 0
    checked = 0
    while checked < 10_000:
        T = int(rng.integers(4, 96))
        cfg = IntegratorConfig(int(rng.integers(0, 4)), int(rng.integers(1, 4)),
                               int(rng.integers(0, 8)), int(rng.integers(0, 7)))
        if window_length(cfg, T) < 1:
            continue
        i = rng.integers(-8192, 8192, size=(1, T)).astype(np.int16)
        q = rng.integers(-8192, 8192, size=(1, T)).astype(np.int16)
        L = window_length(cfg, T)
        ref = []
        for w in range(cfg.num_windows):
            lo = cfg.start_sample + w * L
            for ch in (i[0], q[0]):
                acc = sum(int(v) >> cfg.shift_m for v in ch[lo:lo + L])
                ref.append(acc >> cfg.shift_n)
        ww = feature_word_width(cfg, T)
        fits = all(-(1 << (ww - 1)) <= v < (1 << (ww - 1)) for v in ref)
        try:
            words, _ = integrate_batch(i, q, cfg)
        except FeatureOverflowError:
            mismatches += fits  # only legitimate when the oracle overflows too
            checked += 1
            continue
        mismatches += int(words[0].tolist() != ref)
        checked += 1
    verdict(10, mismatches == 0,
            f"{mismatches}/10000 disagreements with the big-integer oracle")
