import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from uavlora import channel as ch

P = ch.ChannelParams()


def test_threshold_table_cells():
    expected = {
        125: (-7.5, -10, -12.5, -15, -18, -21),
        250: (-9, -12, -14.5, -17, -20, -23),
        500: (-11, -13.8, -16.5, -19, -21.8, -25),
    }
    for bw, row in expected.items():
        for sf, thr in zip(range(7, 13), row):
            assert ch.snr_threshold_db(sf, bw) == thr


def test_threshold_lookup_unknown_pair():
    with pytest.raises(KeyError):
        ch.DEFAULT_THRESHOLDS.lookup(6, 125)
    with pytest.raises(KeyError):
        ch.DEFAULT_THRESHOLDS.lookup(7, 200)


def test_threshold_file_roundtrip(tmp_path):
    path = tmp_path / "thr.csv"
    path.write_text("# rows SF7..12\n" + "\n".join(",".join(str(x) for x in row) for row in ch.LORA_SNR_THRESHOLDS_DB))
    assert ch.SnrThresholdTable.from_file(path) == ch.DEFAULT_THRESHOLDS


def test_threshold_file_wrong_shape(tmp_path):
    path = tmp_path / "thr.txt"
    path.write_text("1 2 3\n4 5 6\n")
    with pytest.raises(ValueError):
        ch.SnrThresholdTable.from_file(path)


def test_fspl_known_value():
    assert ch.fspl_db(1000.0, 868e6) == pytest.approx(91.21, abs=0.01)
    # independent: 20log10(d) + 20log10(f) - 147.55 for d in m, f in Hz (c = 3e8)
    k = 20 * math.log10(4 * math.pi / 3e8)
    assert ch.fspl_db(250.0, 868e6) == pytest.approx(20 * math.log10(250) + 20 * math.log10(868e6) + k, abs=1e-12)


def test_plos_at_a_equals_one_over_one_plus_a():
    assert ch.p_los(4.88, P) == pytest.approx(1.0 / 5.88, abs=1e-9)


def test_plos_monotone_grid():
    theta = np.arange(0.0, 90.0001, 0.1)
    p = ch.p_los(theta, P)
    assert np.all(np.diff(p) >= 0)
    # strictly increasing until float64 saturates at 1
    unsat = p < 1.0 - 1e-12
    assert np.all(np.diff(p)[unsat[1:]] > 0)
    assert np.all((p > 0) & (p <= 1))


def test_elevation_angle_directly_below_is_clamped():
    assert ch.elevation_angle(0.0, 90.0) == pytest.approx(math.degrees(math.atan(90.0)))
    assert ch.elevation_angle(90.0, 90.0) == pytest.approx(45.0)


def test_path_loss_hand_computed():
    d, h = 300.0, 90.0
    theta = math.degrees(math.atan(h / d))
    pl = 1 / (1 + 4.88 * math.exp(-0.43 * (theta - 4.88)))
    slant = math.hypot(d, h)
    fspl = 20 * math.log10(4 * math.pi * 868e6 * slant / 3e8)
    expected = fspl + 0.1 * pl + 21 * (1 - pl)
    assert ch.path_loss_db(d, P) == pytest.approx(expected, abs=1e-10)
    literal = ch.ChannelParams(paper_literal_fspl=True)
    fspl_h = 20 * math.log10(4 * math.pi * 868e6 * d / 3e8)
    assert ch.path_loss_db(d, literal) == pytest.approx(fspl_h + 0.1 * pl + 21 * (1 - pl), abs=1e-10)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.0, 5000.0), st.floats(0.0, 5000.0))
def test_gain_decreasing_in_distance(d1, d2):
    lo, hi = sorted((d1, d2))
    assert ch.channel_gain(lo, P) >= ch.channel_gain(hi, P)


def test_snr_and_rate():
    g = 1e-9
    snr = ch.snr_linear(14.0, g, -120.0)
    assert snr == pytest.approx(10 ** 1.4 * g / 10 ** -12)
    assert ch.sinr_linear(snr, []) == pytest.approx(snr / 1.0)
    assert ch.sinr_linear(8.0, [1.0, 2.0]) == pytest.approx(2.0)
    assert ch.rate_bps(125e3, 3.0) == pytest.approx(250e3)


@settings(max_examples=100, deadline=None)
@given(st.floats(-30, 30), st.floats(-30, 30))
def test_dbm_roundtrip(a, b):
    assert ch.mw_to_dbm(ch.dbm_to_mw(a)) == pytest.approx(a, abs=1e-9)
    assert ch.dbm_to_mw(a) * ch.dbm_to_mw(b) == pytest.approx(ch.dbm_to_mw(a + b), rel=1e-9)


def test_horizontal_distances():
    d = ch.horizontal_distances([[0, 0], [3, 4]], [[0, 0], [6, 8]])
    np.testing.assert_allclose(d, [[0, 10], [5, 5]])


def test_channel_params_validate():
    with pytest.raises(ValueError):
        ch.ChannelParams(uav_altitude_m=0.0).validate()
