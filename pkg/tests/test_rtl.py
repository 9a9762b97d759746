import numpy as np
import pytest

from lutread.costmodel import latency_estimate
from lutread.errors import ConsistencyError, HdlParseError
from lutread.integrator import feature_word_width, flatten_to_bits, integrate_batch
from lutread.lutnet import build_topology, extract_tables, infer_bits
from lutread.rtl import HdlModel, emit, interpret, table_checksum

from conftest import make_dp, random_traces


@pytest.fixture(scope="module")
def emitted(trained_small, small_ds):
    dp, cfg, _, _, ttn = trained_small
    return dp, cfg, ttn, emit(dp, ttn, cfg, T=small_ds.trace_len, name="t")


def test_emission_deterministic(trained_small, small_ds):
    dp, cfg, _, _, ttn = trained_small
    a = emit(dp, ttn, cfg, T=small_ds.trace_len)
    b = emit(dp, ttn, cfg, T=small_ds.trace_len)
    assert a.full_text == b.full_text
    assert a.manifest == b.manifest


def test_manifest_stage_accounting(emitted, small_ds):
    dp, _, ttn, design = emitted
    m = design.manifest
    assert m["network_stages"] == dp.num_stages
    assert m["total_stages"] == latency_estimate(dp, small_ds.trace_len)
    assert m["table_checksum"] == table_checksum(ttn)
    from collections import Counter
    widths_by_x = Counter()
    for spec in ttn.specs:
        widths_by_x[spec.table_input_bits] += spec.width
    for x, total in widths_by_x.items():
        assert design.lutnet_text.count(f"{x}'d0:") == total


def test_write_files(tmp_path, emitted):
    _, _, _, design = emitted
    paths = design.write(tmp_path)
    assert paths["integrator"].name == "t_integrator.v"
    assert paths["lutnet"].name == "t_lutnet.v"
    assert paths["manifest"].exists()
    assert paths["integrator"].read_text() == design.integrator_text


def test_interpret_matches_software_pipeline(emitted, small_ds):
    dp, cfg, ttn, design = emitted
    model = HdlModel(design.full_text)
    lat = latency_estimate(dp, small_ds.trace_len)
    idx = np.arange(60)
    words, ww = integrate_batch(small_ds.i[idx], small_ds.q[idx], cfg)
    expected = infer_bits(ttn, flatten_to_bits(words, ww))
    for k in idx:
        got, cycles = interpret(model, small_ds.record(int(k)))
        assert got == int(expected[k])
        assert cycles == lat


def test_interpret_random_traces(emitted):
    dp, cfg, ttn, design = emitted
    model = HdlModel(design.full_text)
    rng = np.random.default_rng(11)
    i, q = random_traces(rng, 25, 64)
    words, ww = integrate_batch(i, q, cfg)
    expected = infer_bits(ttn, flatten_to_bits(words, ww))
    from lutread.dataset import TraceRecord
    for k in range(25):
        got, _ = interpret(model, TraceRecord(i[k], q[k], 0))
        assert got == int(expected[k])


def test_constant_network_constant_output(trained_small, small_ds):
    dp, cfg, _, _, ttn = trained_small
    import copy
    const = copy.deepcopy(ttn)
    const.tables[-1][:] = (1 << ttn.output_bits) - 1  # saturated output code
    design = emit(dp, const, cfg, T=small_ds.trace_len)
    model = HdlModel(design.full_text)
    outs = {interpret(model, small_ds.record(k))[0] for k in range(5)}
    assert outs == {1}
    zero = small_ds.record(0)
    zi = np.zeros_like(zero.i_samples)
    from lutread.dataset import TraceRecord
    got, cycles = interpret(model, TraceRecord(zi, zi, 0))
    assert got == 1 and cycles == latency_estimate(dp, small_ds.trace_len)


def test_consistency_errors(trained_small, small_ds):
    dp, cfg, _, _, ttn = trained_small
    other = make_dp(ell0=15)
    with pytest.raises(ConsistencyError):
        emit(other, ttn, cfg, T=small_ds.trace_len)
    with pytest.raises(ConsistencyError):
        emit(dp, ttn, make_dp(shift_n=4).integrator, T=small_ds.trace_len)
    with pytest.raises(ConsistencyError):
        emit(dp, ttn, cfg, T=small_ds.trace_len + 32)  # word width changes


def test_parse_error_on_foreign_text():
    with pytest.raises(HdlParseError):
        HdlModel("module x (input wire clk); initial $display(1); endmodule")


def test_table_checksum_sensitivity(trained_small):
    _, _, _, _, ttn = trained_small
    import copy
    other = copy.deepcopy(ttn)
    other.tables[0][0, 0] ^= 1
    assert table_checksum(other) != table_checksum(ttn)


def test_published_pipeline_depth_without_training():
    """The Table-shaped 2-window, 4-layer design at T=500 emits a
    12-stage pipeline (8 tree levels + 4 layer registers)."""
    dp = make_dp(start_sample=100, num_windows=2, shift_m=7, shift_n=1,
                 ell0=145, ell1=40, ell2=15, beta_in=1, beta_hidden=2,
                 beta_out=2, gamma_in=7, gamma_hidden=6, gamma_out=8)
    ww = feature_word_width(dp.integrator, 500)
    topo = build_topology(dp, feature_bits=2 * dp.num_windows * ww, seed=0,
                          word_width=ww)
    rng = np.random.default_rng(0)
    # any valid tables work for a structural check
    from lutread.lutnet import TruthTableNet
    tables = [rng.integers(0, 1 << s.out_bits,
                           size=(s.width, 1 << s.table_input_bits)).astype(np.uint8)
              for s in topo.specs]
    ttn = TruthTableNet(specs=topo.specs, connectivity=topo.connectivity,
                        tables=tables, feature_bits=topo.feature_bits,
                        word_width=ww, num_words=topo.num_words)
    design = emit(dp, ttn, dp.integrator, T=500)
    assert design.manifest["integrator_stages"] == 8
    assert design.manifest["network_stages"] == 4
    assert design.manifest["total_stages"] == 12 == latency_estimate(dp, 500)
