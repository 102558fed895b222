"""Time the numpy kernels against their jitted twins.

Each hot function ships in two interchangeable versions; this script
runs both on realistic problem sizes (the 60-beacon library scene) and
prints per-call times plus the speedup.  JIT compilation happens during
an untimed warmup pass, so the numbers reflect steady-state cost.

Usage:
    python3 benchmarks/bench_kernels.py [--target-seconds 0.2]
"""

import argparse
import time

import numpy as np

from bprp import _kernels as K


def _scene(rng, n_beacons):
    w, l = 14.0, 8.0
    bx = rng.uniform(0.5, w - 0.5, n_beacons)
    by = rng.uniform(0.5, l - 0.5, n_beacons)
    stacks = np.array(
        [
            [1.5, 2.55, 12.5, 3.05],
            [1.5, 3.75, 12.5, 4.25],
            [1.5, 4.95, 12.5, 5.45],
        ]
    )
    corridors = np.array([[0.0, 0.0, 1.2, 8.0], [12.8, 0.0, 14.0, 8.0]])
    return w, l, bx, by, stacks, corridors


def _link_inputs(rng, n):
    counts = rng.integers(0, 80, n).astype(np.int64)
    n_sent = np.maximum(counts + rng.integers(0, 40, n), 1).astype(np.int64)
    rates = np.full(n, 10.0)
    powers = np.full(n, -15.0)
    coef = rng.normal(0.0, 0.5, (4, 10))
    sm = np.array([4.0, 10.0, -15.0])
    ss = np.array([2.5, 1.0, 1.0])
    return counts, n_sent, rates, powers, coef, sm, ss


def build_cases():
    rng = np.random.default_rng(0)

    w, l, bx, by, stacks, corridors = _scene(rng, 60)
    yield (
        "classify_codes (60 beacons)",
        K.classify_codes_np,
        K.classify_codes_nb,
        (7.0, 4.0, bx, by, stacks, corridors),
    )

    counts, n_sent, rates, powers, coef, sm, ss = _link_inputs(rng, 60)
    mean_rssi = rng.uniform(-90.0, -60.0, 60)
    rssi_n = counts.astype(np.float64)
    yield (
        "position_logpdf (60 links)",
        K.position_logpdf_np,
        K.position_logpdf_nb,
        (
            7.0, 4.0, bx, by, rates, powers, counts, n_sent,
            mean_rssi, rssi_n, coef, sm, ss, stacks, corridors,
            w, l, True, 0.5, -60.0, 2.0, 4.0,
        ),
    )

    # training scale: 12 spots x 6 windows x 60 beacons
    n_rec, n_bcn, n_obs = 12, 60, 4320
    obs_rec = rng.integers(0, n_rec, n_obs)
    obs_bcn = rng.integers(0, n_bcn, n_obs)
    tcounts, tn_sent, _, _, tcoef, _, _ = _link_inputs(rng, n_obs)
    trates = np.full(n_bcn, 10.0)
    tpowers = np.full(n_bcn, -15.0)
    rec_xy = rng.uniform(1.0, 7.0, (n_rec, 2))
    b_xy = np.column_stack([bx, by])
    rec_slot = np.full(n_rec, -1, dtype=np.int64)
    rec_slot[11] = 0
    b_slot = np.full(n_bcn, -1, dtype=np.int64)
    b_slot[0], b_slot[1] = 0, 1
    precodes = rng.integers(0, 4, n_obs)
    precodes[(b_slot[obs_bcn] >= 0) | (rec_slot[obs_rec] >= 0)] = -1
    theta = np.concatenate([rng.normal(0.0, 0.5, 40), rng.uniform(1.0, 7.0, 6)])
    yield (
        "train_logpdf (4320 obs)",
        K.train_logpdf_np,
        K.train_logpdf_nb,
        (
            theta, obs_rec, obs_bcn, tcounts, tn_sent, rec_xy, rec_slot,
            b_xy, b_slot, trates, tpowers, precodes, sm, ss, stacks,
            corridors, w, l, 10.0, 2, 1,
        ),
    )

    n = 12
    bcounts, bn_sent, brates, bpowers, bcoef, _, _ = _link_inputs(rng, n)
    codes = rng.integers(0, 4, n)
    pair_i, pair_j = np.triu_indices(n, k=1)
    pair_d = rng.uniform(0.5, 10.0, pair_i.shape[0])
    dvec = rng.uniform(0.5, 12.0, n)
    yield (
        "beacon_distance_logpdf (12 beacons)",
        K.beacon_distance_logpdf_np,
        K.beacon_distance_logpdf_nb,
        (
            dvec, bcounts, bn_sent, codes, brates, bpowers, bcoef, sm, ss,
            pair_i.astype(np.int64), pair_j.astype(np.int64), pair_d,
            10.0, 16.124,
        ),
    )

    da = rng.uniform(0.5, 12.0, (256, 12))
    db = rng.uniform(0.5, 12.0, (256, 12))
    yield (
        "pair_distance_logpdf (256 x 12 draws)",
        K.pair_distance_logpdf_np,
        K.pair_distance_logpdf_nb,
        (3.0, da, db, 10.0, 16.124),
    )


def bench(fn, args, target_s):
    fn(*args)  # warmup; JIT compiles here on the first numba call
    t0 = time.perf_counter()
    fn(*args)
    once = max(time.perf_counter() - t0, 1e-9)
    reps = max(5, int(target_s / once))
    best = float("inf")
    for _ in range(3):
        t0 = time.perf_counter()
        for _ in range(reps):
            fn(*args)
        best = min(best, (time.perf_counter() - t0) / reps)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument(
        "--target-seconds",
        type=float,
        default=0.2,
        help="approximate wall time per timing loop",
    )
    opts = ap.parse_args()

    if not K.HAS_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")

    rows = []
    for name, fn_np, fn_nb, args in build_cases():
        t_np = bench(fn_np, args, opts.target_seconds)
        t_nb = bench(fn_nb, args, opts.target_seconds)
        rows.append((name, t_np, t_nb))

    width = max(len(r[0]) for r in rows)
    print(f"{'kernel':<{width}}  {'numpy':>12}  {'numba':>12}  {'speedup':>8}")
    for name, t_np, t_nb in rows:
        print(
            f"{name:<{width}}  {t_np * 1e6:>10.1f}us  {t_nb * 1e6:>10.1f}us"
            f"  {t_np / t_nb:>7.1f}x"
        )


if __name__ == "__main__":
    main()
