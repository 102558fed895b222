"""Receiver-pair distance: triangle pruning vs the two-step baseline."""

import math

import numpy as np
import pytest

from bprp.contact_tracing import (
    DEFAULT_MAX_BEACONS,
    BeaconDistanceResult,
    PairQuery,
    build_pair_query,
    estimate_pair_distance,
    infer_beacon_distances,
    infer_pair_distance,
    triangle_log_potential,
    two_step_pair_distance,
)
from bprp.errors import (
    DataMismatchError,
    InsufficientGeometryError,
    InvalidInputError,
)
from bprp.geometry import element_map
from bprp.inference import McmcConfig
from bprp.prp_model import ObservationWindow
from bprp.simulator import SimConfig, simulate_packets, stationary_trajectory


def test_triangle_potential_oracle():
    # degenerate triangle 2-3-5: the tight inequality sits exactly at 0
    val = triangle_log_potential(2.0, 3.0, 5.0, sharpness=10.0)
    assert val == pytest.approx(-math.log(2.0), abs=1e-12)


def test_triangle_potential_properties():
    # comfortably valid triple: essentially no penalty
    assert triangle_log_potential(3.0, 4.0, 5.0, sharpness=10.0) > -1e-6
    # symmetric in all three sides
    perms = [(2.0, 3.0, 4.0), (3.0, 4.0, 2.0), (4.0, 2.0, 3.0)]
    vals = [triangle_log_potential(*p, sharpness=10.0) for p in perms]
    assert max(vals) - min(vals) < 1e-12
    # deeper violations are strictly worse
    v1 = triangle_log_potential(1.0, 1.0, 3.0, sharpness=10.0)
    v2 = triangle_log_potential(1.0, 1.0, 5.0, sharpness=10.0)
    assert v2 < v1 < -5.0


def test_triangle_potential_validation():
    with pytest.raises(InvalidInputError):
        triangle_log_potential(1.0, 1.0, 1.0, sharpness=0.0)
    with pytest.raises(InvalidInputError):
        triangle_log_potential(-1.0, 1.0, 1.0)


def test_pair_query_validation(small_layout, toy_model):
    rows = tuple(
        simulate_packets(
            small_layout,
            stationary_trajectory((4.0, 2.0), 10.0),
            toy_model,
            SimConfig(seed=0, delta=10.0),
            receiver_id="ra",
        )
    )
    with pytest.raises(InvalidInputError):
        PairQuery(
            receiver_a="ra", receiver_b="ra", window_start=0.0,
            rows_a=rows, rows_b=rows, beacon_ids=("a", "b"),
            beacon_pairs=(), delta=10.0,
        )
    with pytest.raises(InsufficientGeometryError):
        PairQuery(
            receiver_a="ra", receiver_b="rb", window_start=0.0,
            rows_a=rows, rows_b=rows, beacon_ids=("a",),
            beacon_pairs=(), delta=10.0,
        )
    with pytest.raises(InvalidInputError):
        PairQuery(
            receiver_a="ra", receiver_b="rb", window_start=0.0,
            rows_a=rows, rows_b=rows, beacon_ids=("a", "b"),
            beacon_pairs=(), delta=0.0,
        )


def _pair_rows(small_layout, toy_model, pa, pb, seed=0):
    rows_a = tuple(
        simulate_packets(
            small_layout, stationary_trajectory(pa, 10.0), toy_model,
            SimConfig(seed=1000 + seed, delta=10.0), receiver_id="ra",
        )
    )
    rows_b = tuple(
        simulate_packets(
            small_layout, stationary_trajectory(pb, 10.0), toy_model,
            SimConfig(seed=2000 + seed, delta=10.0), receiver_id="rb",
        )
    )
    return rows_a, rows_b


def test_build_pair_query(small_layout, toy_model):
    rows_a, rows_b = _pair_rows(small_layout, toy_model, (3.0, 2.0), (7.0, 4.0))
    q = build_pair_query(small_layout, rows_a, rows_b, 10.0)
    assert q.receiver_a == "ra" and q.receiver_b == "rb"
    assert q.beacon_ids == ("a", "b", "c", "d")
    # one known distance per unordered beacon pair
    assert len(q.beacon_pairs) == 6
    for bi, bj, d in q.beacon_pairs:
        assert d > 0
    with pytest.raises(InvalidInputError):
        build_pair_query(small_layout, (), rows_b, 10.0)
    with pytest.raises(InvalidInputError):
        build_pair_query(small_layout, rows_a, rows_b, 10.0, max_beacons=1)


def test_build_pair_query_trims_to_strongest(small_layout, toy_model):
    rows_a, rows_b = _pair_rows(small_layout, toy_model, (2.2, 1.2), (2.5, 4.8))
    q = build_pair_query(small_layout, rows_a, rows_b, 10.0, max_beacons=2)
    assert len(q.beacon_ids) == 2
    assert len(q.beacon_pairs) == 1
    totals = {}
    for r in rows_a + rows_b:
        totals[r.beacon_id] = totals.get(r.beacon_id, 0) + r.packets_received
    kept = set(q.beacon_ids)
    dropped = set(small_layout.beacon_ids()) - kept
    assert min(totals[b] for b in kept) >= max(totals[b] for b in dropped)


def test_build_pair_query_window_mismatch(small_layout, toy_model):
    rows_a, rows_b = _pair_rows(small_layout, toy_model, (3.0, 2.0), (7.0, 4.0))
    shifted = tuple(
        ObservationWindow(
            "rb", 10.0, r.beacon_id, r.packets_received,
            t_first=None if r.t_first is None else r.t_first + 10.0,
            t_last=None if r.t_last is None else r.t_last + 10.0,
            mean_rssi=r.mean_rssi,
        )
        for r in rows_b
    )
    with pytest.raises(DataMismatchError):
        build_pair_query(small_layout, rows_a, shifted, 10.0)


def test_infer_beacon_distances(small_layout, toy_model, fast_config):
    pos = (4.0, 2.0)
    rows_a, _ = _pair_rows(small_layout, toy_model, pos, pos, seed=3)
    res = infer_beacon_distances(
        small_layout, toy_model, rows_a, 10.0,
        elements=element_map(pos, small_layout),
        config=fast_config, seed_path=("bd",),
    )
    assert isinstance(res, BeaconDistanceResult)
    assert res.receiver_id == "ra"
    assert res.beacon_ids == ("a", "b", "c", "d")
    assert res.d_max == pytest.approx(small_layout.diagonal)
    assert res.warnings == ()
    # posterior distances should sit in the right neighbourhood
    mean = res.posterior.mean()
    for j, b in enumerate(small_layout.beacons):
        true_d = math.hypot(pos[0] - b.x, pos[1] - b.y)
        assert abs(mean[j] - true_d) < 2.5


def test_infer_beacon_distances_element_fallback(small_layout, toy_model, fast_config):
    rows_a, _ = _pair_rows(small_layout, toy_model, (4.0, 2.0), (4.0, 2.0), seed=4)
    res = infer_beacon_distances(
        small_layout, toy_model, rows_a, 10.0, config=fast_config, seed_path=("fb",)
    )
    assert any("free space" in w for w in res.warnings)


def test_infer_beacon_distances_validation(small_layout, toy_model, fast_config):
    rows_a, _ = _pair_rows(small_layout, toy_model, (4.0, 2.0), (4.0, 2.0))
    with pytest.raises(InsufficientGeometryError):
        infer_beacon_distances(
            small_layout, toy_model, rows_a, 10.0,
            beacon_ids=("a",), config=fast_config,
        )
    with pytest.raises(DataMismatchError):
        infer_beacon_distances(
            small_layout, toy_model, rows_a, 10.0,
            beacon_ids=("a", "zz"), config=fast_config,
        )
    with pytest.raises(DataMismatchError):
        infer_beacon_distances(
            small_layout, toy_model, rows_a, 10.0,
            beacon_ids=("a", "b"), beacon_pairs=(("a", "d", 1.0),),
            config=fast_config,
        )
    with pytest.raises(InvalidInputError):
        infer_beacon_distances(
            small_layout, toy_model, rows_a, 10.0,
            beacon_ids=("a", "b"), beacon_pairs=(("a", "b", -2.0),),
            config=fast_config,
        )


def test_infer_pair_distance_needs_shared_beacons(small_layout, toy_model, fast_config):
    rows_a, rows_b = _pair_rows(small_layout, toy_model, (3.0, 2.0), (7.0, 4.0))
    ra = infer_beacon_distances(
        small_layout, toy_model, rows_a, 10.0,
        beacon_ids=("a", "b"), config=fast_config, seed_path=("x",),
    )
    rb = infer_beacon_distances(
        small_layout, toy_model, rows_b, 10.0,
        beacon_ids=("c", "d"), config=fast_config, seed_path=("y",),
    )
    with pytest.raises(InsufficientGeometryError):
        infer_pair_distance(ra, rb, config=fast_config)


def test_estimate_pair_distance_end_to_end(small_layout, toy_model, fast_config):
    pa, pb = (3.0, 2.0), (7.0, 4.0)
    rows_a, rows_b = _pair_rows(small_layout, toy_model, pa, pb, seed=5)
    q = build_pair_query(small_layout, rows_a, rows_b, 10.0)
    tri = estimate_pair_distance(
        small_layout, toy_model, q, config=fast_config,
        elements_a=element_map(pa, small_layout),
        elements_b=element_map(pb, small_layout),
        seed_path=("tri",),
    )
    assert tri.method == "triangle"
    assert tri.n_triangles == 4
    assert tri.receiver_a == "ra" and tri.receiver_b == "rb"
    assert 0.0 < tri.mean_m <= small_layout.diagonal
    assert tri.sd_m > 0
    assert tri.draws.ndim == 1
    # same inputs, same seed path: identical output
    tri2 = estimate_pair_distance(
        small_layout, toy_model, q, config=fast_config,
        elements_a=element_map(pa, small_layout),
        elements_b=element_map(pb, small_layout),
        seed_path=("tri",),
    )
    np.testing.assert_array_equal(tri.draws, tri2.draws)


def test_two_step_pair_distance(small_layout, toy_model, fast_config):
    pa, pb = (3.0, 2.0), (7.0, 4.0)
    rows_a, rows_b = _pair_rows(small_layout, toy_model, pa, pb, seed=6)
    q = build_pair_query(small_layout, rows_a, rows_b, 10.0)
    two = two_step_pair_distance(small_layout, toy_model, q, config=fast_config, seed_path=("two",))
    assert two.method == "two_step"
    assert two.n_triangles == 0
    assert 0.0 < two.mean_m <= small_layout.diagonal
    true_d = math.hypot(pa[0] - pb[0], pa[1] - pb[1])
    # generous sanity bound; tight accuracy is covered by the acceptance suite
    assert abs(two.mean_m - true_d) < 3.5
    with pytest.raises(InvalidInputError):
        two_step_pair_distance(
            small_layout, toy_model, q, config=fast_config, n_pair_draws=0
        )
