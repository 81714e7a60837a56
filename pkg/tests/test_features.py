import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from btprint.errors import InsufficientData
from btprint.features import (DEFAULT_FILTERS, N_BINS, DensityCurve, FilterSpec, IatVector,
                              apply_filter, density_distribution, extract_iat,
                              generate_signature, signatures_from_json, signatures_to_json,
                              silverman_bandwidth, t_max_from_iats, to_features)
from btprint.records import Direction, PacketRecord, Protocol

from conftest import packets


def iat(values):
    return IatVector(np.asarray(values, dtype=float), "s")


def test_filter_names_and_grid():
    assert FilterSpec("RFCOMM", 10).name == "RFCOMM-10"
    assert FilterSpec("all", 0).name == "all-all"
    assert FilterSpec.parse("SDP-400") == FilterSpec("SDP", 400)
    assert len(DEFAULT_FILTERS) == 35 and len(set(DEFAULT_FILTERS)) == 35


def test_identity_filter():
    s = packets([0, 1, 2], proto=Protocol.OTHER, length=0)
    assert apply_filter(s, FilterSpec("all", 0)) == s


def test_length_filter_is_strict():
    s = [PacketRecord(i, Direction.SENT, Protocol.RFCOMM, n, "s") for i, n in enumerate([5, 10, 11])]
    assert [r.length_bytes for r in apply_filter(s, FilterSpec("all", 10))] == [11]


def test_hierarchical_protocol_match():
    protos = [Protocol.RFCOMM, Protocol.SDP, Protocol.L2CAP, Protocol.OTHER]
    s = [PacketRecord(i, Direction.SENT, p, 20, "s") for i, p in enumerate(protos)]
    assert [r.protocol for r in apply_filter(s, FilterSpec("L2CAP", 0))] == protos[:3]
    assert [r.protocol for r in apply_filter(s, FilterSpec("RFCOMM", 0))] == protos[:1]


def test_extract_iat_cases():
    assert len(extract_iat(packets([7]))) == 0
    np.testing.assert_allclose(extract_iat(packets([0, 100, 350])).values, [1.0e-4, 2.5e-4])
    np.testing.assert_allclose(extract_iat(packets([0, 0, 50])).values, [5.0e-5])


def test_too_few_iats():
    with pytest.raises(InsufficientData):
        density_distribution(iat([0.1]), 1.0)


def test_unimodal_concentration():
    rng = np.random.default_rng(1)
    dd = density_distribution(iat(0.5 + rng.normal(0, 0.005, 100)), 1.0)
    k = int(np.argmax(dd.heights))
    assert dd.edges[k] <= 0.5 <= dd.edges[k + 1] + 1e-12


def _kde_oracle(x, t_max):
    # trapezoid integration of the Gaussian KDE pdf on a 10x finer grid
    h = silverman_bandwidth(x)
    fine = np.linspace(0.0, t_max, 10 * N_BINS + 1)
    pdf = np.zeros_like(fine)
    for chunk in np.array_split(x, max(1, len(x) // 500)):
        pdf += np.exp(-0.5 * ((fine[:, None] - chunk[None, :]) / h) ** 2).sum(axis=1)
    pdf /= len(x) * h * np.sqrt(2 * np.pi)
    seg = 0.5 * (pdf[1:] + pdf[:-1]) * np.diff(fine)
    mass = seg.reshape(N_BINS, 10).sum(axis=1)
    return mass / mass.sum()


def test_uniform_iats_match_numerical_integration():
    rng = np.random.default_rng(2)
    x = rng.uniform(0, 1.0, 20000)
    feats = to_features(density_distribution(iat(x), 1.0), None, FilterSpec("all", 0)).features
    np.testing.assert_allclose(feats, _kde_oracle(x, 1.0), rtol=0, atol=1e-6)
    interior = feats[15:-15]
    np.testing.assert_allclose(interior, 1 / N_BINS, rtol=0.1)


def test_flat_density_and_point_mass_features():
    edges = np.linspace(0, 1, N_BINS + 1)
    flat = to_features(DensityCurve(edges, np.ones(N_BINS), 1.0), None, FilterSpec("all", 0))
    np.testing.assert_allclose(flat.features, 1 / N_BINS, rtol=1e-12)
    spike = np.zeros(N_BINS)
    spike[0] = N_BINS
    feats = to_features(DensityCurve(edges, spike, 1.0), None, FilterSpec("all", 0)).features
    assert feats[0] == 1.0 and not feats[1:].any()


def test_bandwidth_rule_by_hand():
    x = np.array([0.1, 0.2, 0.3, 0.4, 1.0])
    sigma = np.std(x, ddof=1)
    iqr = 0.4 - 0.2
    assert silverman_bandwidth(x) == pytest.approx(0.9 * min(sigma, iqr / 1.34) * 5 ** -0.2)


def test_all_mass_outside_grid_is_clamped():
    dd = density_distribution(iat([5.0, 5.1, 5.2]), 1.0)
    areas = dd.heights * dd.widths
    assert areas[-1] == pytest.approx(1.0)


def test_histogram_method():
    dd = density_distribution(iat([0.001, 0.001, 0.5]), 1.0, method="histogram")
    areas = dd.heights * dd.widths
    assert areas[0] == pytest.approx(2 / 3) and areas.sum() == pytest.approx(1.0)


iat_lists = st.lists(st.floats(1e-6, 2.0), min_size=2, max_size=60)


@settings(max_examples=150)
@given(iat_lists, st.floats(0.01, 3.0))
def test_features_sum_to_one(values, t_max):
    sig = to_features(density_distribution(iat(values), t_max), None, FilterSpec("all", 0))
    assert sig.features.shape == (N_BINS,)
    assert abs(sig.features.sum() - 1.0) <= 1e-9
    assert (sig.features >= 0).all()


@given(st.lists(st.integers(1, 10**6), min_size=3, max_size=40), st.integers(0, 10**9))
def test_time_shift_invariance(gaps, shift):
    ts = np.cumsum([0] + gaps)
    f = FilterSpec("all", 0)
    a = generate_signature(packets(ts), f, 0.5)
    b = generate_signature(packets(ts + shift), f, 0.5)
    np.testing.assert_array_equal(a.features, b.features)


def test_deterministic_bit_identical():
    ts = np.cumsum(np.random.default_rng(3).integers(1, 5000, 100))
    f = FilterSpec("RFCOMM", 10)
    a = generate_signature(packets(ts), f, 0.01)
    b = generate_signature(packets(ts), f, 0.01)
    assert a.features.tobytes() == b.features.tobytes()


@given(st.lists(st.floats(1e-4, 1.0), min_size=1, max_size=50))
def test_t_max_monotone_in_percentile(values):
    v = [iat(values)]
    assert t_max_from_iats(v, 50) <= t_max_from_iats(v, 99) <= max(values) + 1e-15


def test_signature_json_round_trip():
    ts = np.cumsum(np.random.default_rng(4).integers(1, 5000, 50))
    sig = generate_signature(packets(ts, sid="x"), FilterSpec("all", 0), 0.01, label="A")
    (back,) = signatures_from_json(signatures_to_json([sig]))
    assert back.label == "A" and back.session_id == "x" and back.t_max == sig.t_max
    np.testing.assert_array_equal(back.features, sig.features)
