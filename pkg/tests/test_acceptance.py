"""Acceptance suite: eleven primary behavioral criteria.

Each test covers one criterion end to end on synthetic data and reports
one PASS/FAIL line through the terminal-summary hook in conftest.  The
suite is slow by design (several minutes); every stochastic piece runs
on fixed seeds, so results are reproducible bit for bit.

A module-level warmup pulls all compiled kernels through the JIT cache
before any stopwatch starts; the timed budgets measure the algorithms,
not compiler startup.
"""

import dataclasses
import hashlib
import math
import os
import time

import numpy as np
import pytest
from conftest import record_criterion

from bprp import (
    McmcConfig,
    RssiPathModel,
    SimConfig,
    TrainingDataset,
    TrainingSpot,
    bayesian_rssi_localize,
    build_pair_query,
    estimate_pair_distance,
    fused_localize,
    get_preset,
    localize,
    mcmc_sample,
    select_beacons,
    select_spots,
    simulate_packets,
    simulate_truncated_rssi,
    stationary_trajectory,
    track,
    train,
    two_step_pair_distance,
    with_known_beacons,
)
from bprp.eval_cli import main as cli_main
from bprp.geometry import Beacon, Layout, distance, element_map
from bprp.inference import (
    assemble_window_data,
    grid_map,
    layout_with_recovered,
    position_log_density,
)
from bprp.prp_model import ELEMENT_ORDER, rebase_link_params, truncated_rssi_mean
from bprp.rng import substream


@pytest.fixture(scope="module", autouse=True)
def _warmup():
    """Touch every jitted kernel once so timed tests exclude JIT load."""
    preset = get_preset("library")
    lay = select_beacons(preset.layout, 6)
    model = preset.true_model
    cfg = McmcConfig(draws=30, burn_in=30, chains=1, seed=0)
    rows = tuple(
        simulate_packets(
            lay, stationary_trajectory((7.0, 4.0), 10.0), model,
            SimConfig(seed=0, delta=10.0), receiver_id="w",
        )
    )
    localize(lay, model, rows, 10.0, config=cfg, seed_path=("warm", "loc"))
    rows_b = tuple(
        simulate_packets(
            lay, stationary_trajectory((8.0, 4.5), 10.0), model,
            SimConfig(seed=1, delta=10.0), receiver_id="w2",
        )
    )
    q = build_pair_query(lay, rows, rows_b, 10.0, max_beacons=4)
    estimate_pair_distance(lay, model, q, config=cfg, seed_path=("warm", "pair"))
    spots = tuple(
        TrainingSpot(
            receiver_id=f"w{i}",
            windows=tuple(
                simulate_packets(
                    lay, stationary_trajectory(p, 10.0), model,
                    SimConfig(seed=2 + i, delta=10.0), receiver_id=f"w{i}",
                )
            ),
            position=p,
        )
        for i, p in enumerate(((3.0, 2.0), (10.0, 6.0)))
    )
    train(lay, TrainingDataset(spots=spots, delta=10.0), config=cfg, seed_path=("warm", "train"))


def _group_by_window(rows):
    by_w = {}
    for r in rows:
        by_w.setdefault(r.window_start, []).append(r)
    return sorted(by_w.items())


def _err(position, truth):
    return float(math.hypot(position[0] - truth[0], position[1] - truth[1]))


# ---------------------------------------------------------------------------


def test_criterion_01_truncated_rssi_bias():
    """MC mean of threshold-surviving RSSI matches the analytic mean."""
    t0 = time.perf_counter()
    n = 100_000
    worst = 0.0
    cells = 0
    for mu in (-80.0, -70.0):
        for sigma in (2.0, 5.0, 8.0):
            for z in (-3.0, -2.0, -1.0, 0.0, 1.0, 2.0):
                alpha = mu + z * sigma
                rng = substream(901, "acc1", repr(mu), repr(sigma), repr(z))
                draws = simulate_truncated_rssi(mu, sigma, alpha, n, rng)
                want = truncated_rssi_mean(mu, sigma, alpha)
                se = float(draws.std(ddof=1)) / math.sqrt(n)
                worst = max(worst, abs(float(draws.mean()) - want) / se)
                cells += 1
    elapsed = time.perf_counter() - t0
    ok = worst <= 3.0 and elapsed < 5.0
    record_criterion(
        1, "truncated-RSSI simulation matches the analytic truncated mean",
        ok, f"worst deviation {worst:.2f} se over {cells} grid cells, {elapsed:.1f} s",
    )
    assert worst <= 3.0
    assert elapsed < 5.0


def test_criterion_02_sampler_conjugate_checks():
    """Beta-Binomial and correlated-Gaussian targets recover closed forms."""
    t0 = time.perf_counter()

    def beta_logd(theta):
        p = float(theta[0])
        if not 0.0 < p < 1.0:
            return -math.inf
        return 7.0 * math.log(p) + 3.0 * math.log1p(-p)

    post = mcmc_sample(
        beta_logd,
        np.array([0.5]),
        McmcConfig(draws=6000, burn_in=3000, chains=4, seed=11),
        names=("p",),
        scales=np.array([0.15]),
        seed_path=("acc2", "beta"),
    )
    # 7 successes in 10 under a flat prior: Beta(8, 4)
    true_mean = 8.0 / 12.0
    true_sd = math.sqrt(8.0 * 4.0 / (12.0 ** 2 * 13.0))
    mean_rel = abs(float(post.mean()[0]) - true_mean) / true_mean
    sd_rel = abs(float(post.sd()[0]) - true_sd) / true_sd

    cov = np.array([[2.0, 1.2], [1.2, 1.5]])
    prec = np.linalg.inv(cov)

    def gauss_logd(theta):
        return -0.5 * float(theta @ prec @ theta)

    post2 = mcmc_sample(
        gauss_logd,
        np.zeros(2),
        McmcConfig(draws=8000, burn_in=4000, chains=4, seed=12),
        names=("x", "y"),
        seed_path=("acc2", "gauss"),
    )
    sample_cov = np.cov(post2.draws.T)
    cov_rel = float(np.max(np.abs(sample_cov - cov) / np.abs(cov)))

    elapsed = time.perf_counter() - t0
    ok = mean_rel <= 0.02 and sd_rel <= 0.05 and cov_rel <= 0.10 and elapsed < 30.0
    record_criterion(
        2, "sampler recovers Beta-Binomial and 2-D Gaussian posteriors",
        ok,
        f"mean {mean_rel * 100:.2f}%, sd {sd_rel * 100:.2f}%, cov {cov_rel * 100:.1f}%, {elapsed:.1f} s",
    )
    assert mean_rel <= 0.02
    assert sd_rel <= 0.05
    assert cov_rel <= 0.10
    assert elapsed < 30.0


def test_criterion_03_parameter_recovery():
    """Training on preset-truth data recovers every link coefficient."""
    t0 = time.perf_counter()
    preset = get_preset("library")
    model = preset.true_model
    lay = preset.layout
    spots = []
    for i, p in enumerate(preset.training_spots):
        rows = simulate_packets(
            lay, stationary_trajectory(p, 60.0), model,
            SimConfig(seed=42 + i, delta=10.0), receiver_id=f"s{i:02d}",
        )
        spots.append(
            TrainingSpot(receiver_id=f"s{i:02d}", windows=tuple(rows), position=p)
        )
    res = train(
        lay,
        TrainingDataset(spots=tuple(spots), delta=10.0),
        config=McmcConfig(draws=5000, burn_in=5000, chains=4, seed=0),
        seed_path=("c3",),
    )
    mean, sd = res.posterior.mean(), res.posterior.sd()
    worst_z = 0.0
    for ei, e in enumerate(ELEMENT_ORDER):
        true_lp = rebase_link_params(
            model.elements[e], model.standardization, res.standardization
        )
        tv = np.array([true_lp.w0, *true_lp.w, *true_lp.w_pair])
        z = np.abs(mean[ei * 10 : (ei + 1) * 10] - tv) / sd[ei * 10 : (ei + 1) * 10]
        worst_z = max(worst_z, float(np.max(z)))
    ds = np.arange(0.5, 12.01, 0.25)
    maes = []
    for e in ELEMENT_ORDER:
        gt = np.array([model.prp(e, d, 10.0, -15.0) for d in ds])
        gh = np.array([res.model.prp(e, d, 10.0, -15.0) for d in ds])
        maes.append(float(np.mean(np.abs(gh - gt))))
    mae = float(np.mean(maes))
    elapsed = time.perf_counter() - t0
    ok = worst_z < 3.0 and mae < 0.05 and elapsed < 300.0
    record_criterion(
        3, "every link coefficient within 3 posterior sds; g-curve MAE < 0.05",
        ok, f"worst |z| {worst_z:.2f}, g MAE {mae:.4f}, {elapsed:.0f} s",
    )
    assert worst_z < 3.0
    assert mae < 0.05
    assert elapsed < 300.0


def test_criterion_04_mcmc_map_matches_grid_map():
    """Sampled MAP position agrees with an exhaustive 0.1 m grid search."""
    t0 = time.perf_counter()
    preset = get_preset("library")
    model = preset.true_model
    lay = preset.layout
    rng = np.random.default_rng(123)
    worst = 0.0
    for s in range(20):
        p = (
            float(rng.uniform(0.5, lay.width - 0.5)),
            float(rng.uniform(0.5, lay.length - 0.5)),
        )
        rows = tuple(
            simulate_packets(
                lay, stationary_trajectory(p, 10.0), model,
                SimConfig(seed=900 + s, delta=10.0), receiver_id="w",
            )
        )
        lr = localize(
            lay, model, rows, 10.0,
            config=McmcConfig(draws=2000, burn_in=2000, chains=2, seed=4),
            seed_path=("c4", s),
        )
        logd = position_log_density(lay, model, assemble_window_data(lay, rows, 10.0))
        gx, gy, _ = grid_map(logd, lay.width, lay.length, 0.1)
        worst = max(worst, _err(lr.map_position, (gx, gy)))
    elapsed = time.perf_counter() - t0
    ok = worst <= 0.2 and elapsed < 120.0
    record_criterion(
        4, "MCMC MAP within 0.2 m of the 0.1 m grid MAP on 20 windows",
        ok, f"worst gap {worst:.3f} m, {elapsed:.0f} s",
    )
    assert worst <= 0.2
    assert elapsed < 120.0


def test_criterion_05_range_regimes():
    """Counts beat truncated RSSI at range; RSSI keeps the near field."""
    preset = get_preset("library")
    base = preset.layout
    cfg = McmcConfig(draws=500, burn_in=500, chains=2, seed=0)

    # far regime: every beacon > 6 m away, heavy noise, truncation active
    far_pos = (1.2, 1.0)
    far_model = preset.true_model.with_rssi(
        RssiPathModel(p_ref=-60.0, path_exponent=2.0, noise_sigma=8.0, decode_threshold=-78.0)
    )
    far_beacons = tuple(
        b for b in base.beacons if distance((b.x, b.y), far_pos) > 6.0
    )
    far_lay = Layout(
        width=base.width, length=base.length, stacks=base.stacks,
        corridors=base.corridors, beacons=far_beacons,
    )
    wins = 0
    for s in range(50):
        rows = tuple(
            simulate_packets(
                far_lay, stationary_trajectory(far_pos, 10.0), far_model,
                SimConfig(seed=s, delta=10.0), receiver_id="r",
            )
        )
        ep = localize(far_lay, far_model, rows, 10.0, config=cfg, seed_path=("p", s))
        er = bayesian_rssi_localize(far_lay, far_model, rows, 10.0, config=cfg, seed_path=("r", s))
        wins += _err(ep.mean_position, far_pos) < _err(er.mean_position, far_pos)

    # near regime: a ring of beacons all closer than 2 m, mild noise
    near_pos = (7.0, 3.45)
    near_model = preset.true_model.with_rssi(
        RssiPathModel(p_ref=-60.0, path_exponent=2.0, noise_sigma=4.0, decode_threshold=-78.0)
    )
    ring = [(0.9, 0.3), (1.4, 1.8), (1.1, 3.1), (1.7, 4.4), (0.7, 5.6), (1.6, 0.9)]
    near_beacons = tuple(
        Beacon(id=f"n{i}", x=near_pos[0] + r * math.cos(t), y=near_pos[1] + r * math.sin(t))
        for i, (r, t) in enumerate(ring)
    )
    near_lay = Layout(
        width=base.width, length=base.length, stacks=base.stacks,
        corridors=base.corridors, beacons=near_beacons,
    )
    prp_e, rssi_e, fused_e = [], [], []
    for s in range(20):
        rows = tuple(
            simulate_packets(
                near_lay, stationary_trajectory(near_pos, 10.0), near_model,
                SimConfig(seed=s, delta=10.0), receiver_id="r",
            )
        )
        ep = localize(near_lay, near_model, rows, 10.0, config=cfg, seed_path=("np", s))
        er = bayesian_rssi_localize(near_lay, near_model, rows, 10.0, config=cfg, seed_path=("nr", s))
        ef = fused_localize(near_lay, near_model, rows, 10.0, config=cfg, seed_path=("nf", s))
        prp_e.append(_err(ep.mean_position, near_pos))
        rssi_e.append(_err(er.mean_position, near_pos))
        fused_e.append(_err(ef.mean_position, near_pos))
    prp_med = float(np.median(prp_e))
    rssi_med = float(np.median(rssi_e))
    fused_med = float(np.median(fused_e))

    far_ok = wins >= 40
    near_ok = rssi_med <= prp_med + 0.1 and fused_med <= prp_med + 0.1
    record_criterion(
        5, "count model wins at range; RSSI and fused hold the near field",
        far_ok and near_ok,
        f"far wins {wins}/50; near medians prp {prp_med:.2f} rssi {rssi_med:.2f} fused {fused_med:.2f}",
    )
    assert far_ok, f"count model won only {wins}/50 far-regime seeds"
    assert near_ok


def test_criterion_06_beacon_count_robustness():
    """Error grows as beacons thin out; counts still beat RSSI at 5."""
    preset = get_preset("library")
    model = preset.true_model.with_rssi(
        RssiPathModel(p_ref=-60.0, path_exponent=2.0, noise_sigma=8.0, decode_threshold=-78.0)
    )
    lay60 = preset.layout
    evpts = [
        (4.0, 1.8), (10.0, 2.2), (6.0, 3.0), (12.5, 3.5),
        (3.0, 5.0), (9.5, 5.5), (6.5, 6.0), (1.5, 3.8),
    ]
    counts = (60, 30, 10, 5)

    def spearman(xs, ys):
        rx = np.argsort(np.argsort(xs)).astype(float)
        ry = np.argsort(np.argsort(ys)).astype(float)
        rx -= rx.mean()
        ry -= ry.mean()
        return float(np.sum(rx * ry) / np.sqrt(np.sum(rx * rx) * np.sum(ry * ry)))

    rhos = []
    at5_prp, at5_rssi = [], []
    for seed in range(10):
        meds = []
        for nb in counts:
            lay = select_beacons(lay60, nb)
            errs = []
            for k, p in enumerate(evpts):
                rows = simulate_packets(
                    lay, stationary_trajectory(p, 20.0), model,
                    SimConfig(seed=3000 + seed * 40 + k, delta=10.0), receiver_id="e",
                )
                for ws, wrows in _group_by_window(rows):
                    lr = localize(
                        lay, model, tuple(wrows), 10.0,
                        config=McmcConfig(draws=600, burn_in=600, chains=2, seed=2),
                        seed_path=("c6", seed, nb, k, repr(float(ws))),
                    )
                    errs.append(_err(lr.mean_position, p))
                    if nb == 5:
                        lrr = localize(
                            lay, model, tuple(wrows), 10.0,
                            config=McmcConfig(draws=600, burn_in=600, chains=2, seed=2),
                            use_prp=False, rssi_weight=1.0,
                            seed_path=("c6r", seed, k, repr(float(ws))),
                        )
                        at5_rssi.append(_err(lrr.mean_position, p))
            meds.append(float(np.median(errs)))
            if nb == 5:
                at5_prp.extend(errs)
        rhos.append(spearman(np.array(counts, float), np.array(meds)))
    avg_rho = float(np.mean(rhos))
    prp5 = float(np.median(at5_prp))
    rssi5 = float(np.median(at5_rssi))
    ok = avg_rho <= -0.8 and prp5 < rssi5
    record_criterion(
        6, "error is monotone in beacon count and beats RSSI at 5 beacons",
        ok, f"avg Spearman rho {avg_rho:.2f}; at 5 beacons prp {prp5:.2f} m vs rssi {rssi5:.2f} m",
    )
    assert avg_rho <= -0.8
    assert prp5 < rssi5


def _c7_dataset(lay, model, spot_list, dwell):
    spots = []
    for i, p in enumerate(spot_list):
        rows = simulate_packets(
            lay, stationary_trajectory(p, dwell), model,
            SimConfig(seed=500 + i, delta=60.0), receiver_id=f"s{i:02d}",
        )
        spots.append(TrainingSpot(receiver_id=f"s{i:02d}", windows=tuple(rows), position=p))
    return TrainingDataset(spots=tuple(spots), delta=60.0)


_C7_EVAL_POINTS = [
    (4.0, 1.8), (10.0, 2.2), (6.0, 3.0), (12.5, 3.5), (3.0, 5.0), (9.5, 5.5),
    (6.5, 6.0), (1.5, 3.8), (5.0, 2.5), (11.5, 6.0), (2.0, 4.5), (8.5, 4.0),
]


def _c7_downstream(lay60, truth_model, eval_lay, trained_model, tag):
    errs = []
    for k, p in enumerate(_C7_EVAL_POINTS):
        rows = simulate_packets(
            lay60, stationary_trajectory(p, 3.0), truth_model,
            SimConfig(seed=8800 + k, delta=1.0), receiver_id="e",
        )
        for ws, wrows in _group_by_window(rows):
            lr = localize(
                eval_lay, trained_model, tuple(wrows), 1.0,
                config=McmcConfig(draws=600, burn_in=600, chains=2, seed=9),
                seed_path=("c7e", tag, k, repr(float(ws))),
            )
            errs.append(_err(lr.mean_position, p))
    return float(np.median(errs))


def test_criterion_07_semi_supervised_beacon_budget():
    """6 of 60 known beacons nearly match all-known; 1 of 60 degrades."""
    preset = get_preset("library")
    model = preset.true_model
    lay60 = preset.layout
    cfg = McmcConfig(draws=4000, burn_in=4000, chains=2, seed=5)

    ds12 = _c7_dataset(lay60, model, preset.training_spots, 300.0)
    r60 = train(lay60, ds12, config=cfg, seed_path=("c7", 60))
    m60 = _c7_downstream(lay60, model, lay60, r60.model, 60)

    lay6 = with_known_beacons(lay60, 6)
    r6 = train(lay6, ds12, config=cfg, seed_path=("c7", 6))
    lay6r = layout_with_recovered(lay6, r6.recovered_beacons)
    m6 = _c7_downstream(lay60, model, lay6r, r6.model, 6)

    spots4 = select_spots(preset.training_spots, 4)
    ds4 = _c7_dataset(lay60, model, spots4, 300.0)
    lay1 = with_known_beacons(lay60, 1)
    r1 = train(lay1, ds4, config=cfg, seed_path=("c7", 1))
    lay1r = layout_with_recovered(lay1, r1.recovered_beacons)
    m1 = _c7_downstream(lay60, model, lay1r, r1.model, 1)

    ratio = m6 / m60
    ok = ratio <= 1.10 and m1 > m60
    record_criterion(
        7, "b=6 of 60 known beacons within 10% downstream; b=1 of 60 degrades",
        ok, f"b60 {m60:.3f} m, b6 {m6:.3f} m (ratio {ratio:.3f}), b1 {m1:.3f} m",
    )
    assert ratio <= 1.10, f"b=6 downstream {m6:.3f} vs b=60 {m60:.3f}"
    assert m1 > m60


def test_criterion_08_unlabeled_data_gain():
    """Adding 4 unlabeled dwell points beats 8 labeled spots alone."""
    preset = get_preset("library")
    model = preset.true_model
    lay0 = select_beacons(preset.layout, 12)
    # halved advertising rate: fewer packets per window keeps the link
    # likelihood from swamping the extra geometric information
    lay = dataclasses.replace(
        lay0,
        beacons=tuple(dataclasses.replace(b, rate_hz=b.rate_hz * 0.5) for b in lay0.beacons),
    )
    sp = preset.training_spots
    lab8 = (sp[0], sp[2], sp[3], sp[5], sp[8], sp[9], sp[10], sp[11])
    unl4 = ((7.0, 1.5), (4.5, 6.3), (10.5, 6.4), (5.0, 1.2))
    cfg = McmcConfig(draws=2500, burn_in=2500, chains=2, seed=0)

    wins = 0
    per_seed = []
    for seed in range(20):
        def mk(pos, i, labeled, dwell):
            rows = simulate_packets(
                lay, stationary_trajectory(pos, dwell), model,
                SimConfig(seed=seed * 100 + i, delta=10.0), receiver_id=f"s{i:02d}",
            )
            return TrainingSpot(
                receiver_id=f"s{i:02d}",
                windows=tuple(rows),
                position=pos if labeled else None,
            )

        sup = [mk(p, i, True, 10.0) for i, p in enumerate(lab8)]
        semi = sup + [mk(p, 8 + i, False, 480.0) for i, p in enumerate(unl4)]
        rs = train(lay, TrainingDataset(spots=tuple(sup), delta=10.0), config=cfg, seed_path=("sup", seed))
        rm = train(lay, TrainingDataset(spots=tuple(semi), delta=10.0), config=cfg, seed_path=("semi", seed))
        med = {}
        for name, res in (("sup", rs), ("semi", rm)):
            errs = []
            for k, p in enumerate(_C7_EVAL_POINTS):
                rows = simulate_packets(
                    lay, stationary_trajectory(p, 90.0), model,
                    SimConfig(seed=7000 + seed * 50 + k, delta=30.0), receiver_id="e",
                )
                for ws, wrows in _group_by_window(rows):
                    lr = localize(
                        lay, res.model, tuple(wrows), 30.0,
                        config=McmcConfig(draws=800, burn_in=800, chains=2, seed=1),
                        seed_path=("ev", seed, k, repr(float(ws))),
                    )
                    errs.append(_err(lr.mean_position, p))
            med[name] = float(np.median(errs))
        wins += med["semi"] < med["sup"]
        per_seed.append((med["sup"], med["semi"]))
    ok = wins >= 16
    record_criterion(
        8, "8 labeled + 4 unlabeled beats 8 labeled alone in >= 80% of seeds",
        ok, f"{wins}/20 seeds improved",
    )
    assert wins >= 16, f"semi-supervised won only {wins}/20 seeds: {per_seed}"


def test_criterion_09_triangle_vs_two_step():
    """Distance-domain fusion is at least as good as localize-then-diff."""
    preset = get_preset("library")
    base = preset.layout
    # one mid-aisle row of beacons: strong north/south mirror ambiguity
    beacons = tuple(Beacon(id=f"m{i}", x=2.0 + 1.4 * i, y=3.4) for i in range(8))
    lay = Layout(
        width=base.width, length=base.length, stacks=base.stacks,
        corridors=base.corridors, beacons=beacons,
    )
    model = preset.true_model
    cfg = McmcConfig(draws=600, burn_in=600, chains=2, seed=0)
    rng = np.random.default_rng(3)
    tri_err, two_err = [], []
    for trial in range(100):
        pa = (float(rng.uniform(2.0, 12.0)), float(rng.uniform(1.2, 2.2)))
        if trial % 3 == 0:
            pb = (float(rng.uniform(2.0, 12.0)), float(rng.uniform(1.2, 2.2)))
        else:
            pb = (float(rng.uniform(2.0, 12.0)), float(rng.uniform(4.4, 5.0)))
        true_d = _err(pa, pb)
        rows_a = simulate_packets(
            lay, stationary_trajectory(pa, 10.0), model,
            SimConfig(seed=5000 + trial, delta=10.0), receiver_id="ra",
        )
        rows_b = simulate_packets(
            lay, stationary_trajectory(pb, 10.0), model,
            SimConfig(seed=6000 + trial, delta=10.0), receiver_id="rb",
        )
        q = build_pair_query(lay, rows_a, rows_b, 10.0)
        tri = estimate_pair_distance(
            lay, model, q, config=cfg,
            elements_a=element_map(pa, lay), elements_b=element_map(pb, lay),
            seed_path=("t", trial),
        )
        two = two_step_pair_distance(lay, model, q, config=cfg, seed_path=("t", trial))
        tri_err.append(abs(tri.mean_m - true_d))
        two_err.append(abs(two.mean_m - true_d))
    tri_med = float(np.median(tri_err))
    two_med = float(np.median(two_err))
    margin = 100.0 * (two_med - tri_med) / two_med
    ok = tri_med <= two_med
    record_criterion(
        9, "triangle pair distance <= two-step baseline over 100 pairs",
        ok, f"triangle {tri_med:.3f} m vs two-step {two_med:.3f} m, margin {margin:.0f}%",
    )
    assert tri_med <= two_med


def test_criterion_10_mobility_prior():
    """Tracking a still receiver never hurts, and steps obey the cap."""
    preset = get_preset("library")
    model = preset.true_model
    lay = select_beacons(preset.layout, 10)
    s_max = 0.2
    rng = np.random.default_rng(55)
    track_errs, perwin_errs = [], []
    violations = 0
    for seed in range(20):
        p = (
            float(rng.uniform(1.0, lay.width - 1.0)),
            float(rng.uniform(1.0, lay.length - 1.0)),
        )
        rows = tuple(
            simulate_packets(
                lay, stationary_trajectory(p, 60.0), model,
                SimConfig(seed=4000 + seed, delta=10.0), receiver_id="t",
            )
        )
        tk = track(
            lay, model, rows, 10.0, s_max=s_max,
            config=McmcConfig(draws=3000, burn_in=3000, chains=2, seed=6),
            seed_path=("c10", seed),
        )
        mp = np.asarray(tk.map_positions)
        steps = np.hypot(np.diff(mp[:, 0]), np.diff(mp[:, 1]))
        violations += int(np.sum(steps > s_max * 10.0 + 1e-9))
        for q in np.asarray(tk.mean_positions):
            track_errs.append(_err(q, p))
        for ws, wrows in _group_by_window(rows):
            lr = localize(
                lay, model, tuple(wrows), 10.0,
                config=McmcConfig(draws=1000, burn_in=1000, chains=2, seed=6),
                seed_path=("c10l", seed, repr(float(ws))),
            )
            perwin_errs.append(_err(lr.mean_position, p))
    track_med = float(np.median(track_errs))
    perwin_med = float(np.median(perwin_errs))
    ok = track_med <= perwin_med and violations == 0
    record_criterion(
        10, "tracking <= per-window error on still receivers; steps capped",
        ok, f"track {track_med:.3f} m vs per-window {perwin_med:.3f} m, {violations} cap violations",
    )
    assert track_med <= perwin_med
    assert violations == 0


def _dir_digest(root):
    h = hashlib.sha256()
    for name in sorted(os.listdir(root)):
        h.update(name.encode())
        with open(os.path.join(root, name), "rb") as f:
            h.update(f.read())
    return h.hexdigest()


def test_criterion_11_pipeline_determinism(tmp_path):
    """The full preset pipeline is byte-reproducible and fast enough."""
    args = [
        "pipeline", "--preset", "library", "--seed", "7",
        "--draws", "400", "--burn-in", "400", "--chains", "2",
        "--methods", "bprp,rssi,fused,track,contact", "--smax", "1.0",
    ]
    out1, out2 = tmp_path / "run1", tmp_path / "run2"
    t0 = time.perf_counter()
    rc1 = cli_main(args + ["--out", str(out1)])
    elapsed = time.perf_counter() - t0
    rc2 = cli_main(args + ["--out", str(out2)])
    assert rc1 == 0 and rc2 == 0
    digest1, digest2 = _dir_digest(out1), _dir_digest(out2)

    import json

    truth = json.loads((out1 / "truth.json").read_text())
    n_windows = sum(len(v["windows"]) for v in truth["receivers"].values())
    per_window = elapsed / n_windows
    ok = digest1 == digest2 and elapsed < 900.0 and per_window <= 10.0
    record_criterion(
        11, "pipeline is byte-identical across reruns and within budget",
        ok, f"{n_windows} windows, {elapsed:.0f} s total, {per_window:.2f} s/window",
    )
    assert digest1 == digest2, "pipeline reruns differ"
    assert elapsed < 900.0
    assert per_window <= 10.0
