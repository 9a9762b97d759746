import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lutread.design import (DEFAULT_GRIDS, FIELD_NAMES, VECTOR_LEN, DesignPoint,
                            layer_specs, sanitize, snap_to_grid)
from lutread.errors import UsageError

from conftest import SMALL_GRIDS, make_dp


def test_field_order_stable():
    assert FIELD_NAMES[0] == "start_sample"
    assert FIELD_NAMES[-1] == "gamma_out"
    assert VECTOR_LEN == 15


def test_vector_round_trip():
    dp = make_dp()
    assert DesignPoint.from_vector(dp.to_vector()) == dp


def test_json_round_trip_and_missing_field():
    dp = make_dp()
    assert DesignPoint.from_json(dp.to_json()) == dp
    data = json.loads(dp.to_json())
    del data["ell0"]
    with pytest.raises(UsageError, match="ell0"):
        DesignPoint.from_json(json.dumps(data))


def test_snap_nearest_and_tie_low():
    grid = tuple(range(25, 150, 5))
    assert snap_to_grid(101.3, grid) == 100
    assert snap_to_grid(27.5, grid) == 25   # tie rounds toward the smaller value
    assert snap_to_grid(-4.0, grid) == 25   # clipped to range
    assert snap_to_grid(999.0, grid) == 145


def test_sanitize_examples():
    dp = make_dp()
    raw = np.array(dp.to_vector(), dtype=float)
    raw[FIELD_NAMES.index("ell0")] = 101.3
    out = sanitize(raw, DEFAULT_GRIDS)
    assert out.ell0 == 100

    # gamma snapped onto the beta-dependent grid after beta resolves to 2
    raw = np.array(dp.to_vector(), dtype=float)
    raw[FIELD_NAMES.index("beta_hidden")] = 1.9
    raw[FIELD_NAMES.index("gamma_hidden")] = 12.0
    out = sanitize(raw, DEFAULT_GRIDS)
    assert out.beta_hidden == 2 and out.gamma_hidden == 8


def test_sanitize_idempotent_on_valid_points():
    dp = sanitize(np.array(make_dp().to_vector(), dtype=float), DEFAULT_GRIDS)
    again = sanitize(np.array(dp.to_vector(), dtype=float), DEFAULT_GRIDS)
    assert again == dp
    assert dp.on_grids(DEFAULT_GRIDS)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1000, 1000, allow_nan=False), min_size=VECTOR_LEN,
                max_size=VECTOR_LEN))
def test_sanitize_total_and_idempotent(raw):
    dp = sanitize(raw, SMALL_GRIDS)
    assert dp.on_grids(SMALL_GRIDS)
    assert sanitize(np.array(dp.to_vector(), dtype=float), SMALL_GRIDS) == dp


def test_sanitize_wrong_length():
    with pytest.raises(UsageError):
        sanitize([1.0] * (VECTOR_LEN - 1))


def test_layer_widths_num_hidden():
    dp2 = make_dp(num_hidden=2, ell1=8, ell2=5, ell3=45)
    assert dp2.layer_widths == (20, 8, 5, 1)   # ell3 inert
    assert dp2.num_stages == 4
    dp3 = make_dp(num_hidden=3, ell1=8, ell2=5, ell3=10)
    assert dp3.layer_widths == (20, 8, 5, 10, 1)
    assert dp3.num_stages == 5


def test_layer_specs_shapes():
    dp = make_dp(ell0=20, ell1=8, ell2=5, beta_in=1, beta_hidden=2, beta_out=2,
                 gamma_in=6, gamma_hidden=6, gamma_out=6)
    specs = layer_specs(dp, feature_bits=48)
    assert [s.width for s in specs] == [20, 8, 5, 1]
    # input layer reads gamma_in * beta_in individual bits
    assert specs[0].in_elems == 48 and specs[0].in_bits == 1 and specs[0].fan_in == 6
    # hidden fan-in capped at predecessor width
    assert specs[2].in_elems == 8 and specs[2].fan_in == 6
    assert specs[3].in_elems == 5 and specs[3].fan_in == 5  # capped (5 < 6)
    # the layer feeding the output emits beta_out-bit codes
    assert specs[-2].out_bits == dp.beta_out and specs[-1].out_bits == dp.beta_out
    assert specs[1].out_bits == dp.beta_hidden
    # table width X = in_bits * fan_in
    assert specs[1].table_input_bits == 2 * 6


def test_gamma_grid_depends_on_beta():
    assert DEFAULT_GRIDS.gamma_grid(1) == tuple(range(6, 17))
    assert DEFAULT_GRIDS.gamma_grid(2) == (6, 7, 8)


def test_default_grids_match_search_space():
    g = DEFAULT_GRIDS
    assert g.start_sample == (0, 50, 100)
    assert g.num_windows == (1, 2, 3, 4)
    assert g.shift_m == tuple(range(2, 8))
    assert g.shift_n == tuple(range(0, 7))
    assert g.ell0 == tuple(range(25, 150, 5))
    assert g.num_hidden == (2, 3)
    assert g.ell_hidden == tuple(range(5, 50, 5))
    assert g.beta == (1, 2)
    assert g.gamma_in == (6, 7)
