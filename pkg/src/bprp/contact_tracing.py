"""Receiver-to-receiver distance estimation.

Distances are inferred without ever fixing coordinates.  Stage one
turns each receiver's packet counts into a joint posterior over its
distances to a set of beacons, softly regularized by the triangle
inequality against the known beacon-to-beacon distances.  Stage two
scores a candidate receiver-to-receiver distance by how well it closes
triangles with paired draws from the two stage-one posteriors.

The soft triangle constraint on a triple (a, b, c) of side lengths is

    sum over the three cyclic inequalities of log sigmoid(k * slack)

with slack = (sum of two sides) - (third side) and k the sharpness in
1/m.  Violated inequalities are penalized smoothly instead of being
forbidden, which keeps the posterior well defined under noisy counts.

The two-step baseline localizes both receivers independently and reads
the distance off paired position draws; its blind spot is that it
commits to coordinates even when the counts only constrain ranges.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import (
    DataMismatchError,
    InsufficientGeometryError,
    InvalidInputError,
)
from .geometry import GeometricElement, Layout, distance
from .inference import (
    McmcConfig,
    PosteriorSamples,
    assemble_window_data,
    localize,
    mcmc_sample,
)
from .prp_model import PrpModel

DEFAULT_SHARPNESS = 10.0
DEFAULT_PAIR_DRAWS = 256
DEFAULT_MAX_BEACONS = 12


def triangle_log_potential(a: float, b: float, c: float, sharpness: float = DEFAULT_SHARPNESS) -> float:
    """Soft log-probability that side lengths a, b, c close a triangle."""
    if sharpness <= 0:
        raise InvalidInputError(f"sharpness must be positive, got {sharpness}")
    if min(a, b, c) < 0:
        raise InvalidInputError("side lengths must be non-negative")
    return float(
        _log_sigmoid(sharpness * (a + b - c))
        + _log_sigmoid(sharpness * (b + c - a))
        + _log_sigmoid(sharpness * (c + a - b))
    )


def _log_sigmoid(z: float) -> float:
    if z >= 0.0:
        return -math.log1p(math.exp(-z))
    return z - math.log1p(math.exp(z))


@dataclass(frozen=True)
class PairQuery:
    """One co-observed window for a pair of receivers.

    ``beacon_ids`` is the beacon set both stage-one posteriors use and
    ``beacon_pairs`` the known beacon-to-beacon distances among them as
    (id_i, id_j, meters) triples.
    """

    receiver_a: str
    receiver_b: str
    window_start: float
    rows_a: tuple
    rows_b: tuple
    beacon_ids: tuple
    beacon_pairs: tuple
    delta: float

    def __post_init__(self):
        if self.receiver_a == self.receiver_b:
            raise InvalidInputError("a pair needs two distinct receivers")
        if len(self.beacon_ids) < 2:
            raise InsufficientGeometryError(
                "pair distance needs at least two shared beacons"
            )
        if self.delta <= 0:
            raise InvalidInputError("delta must be positive")


def build_pair_query(
    layout: Layout,
    rows_a,
    rows_b,
    delta: float,
    max_beacons: int = DEFAULT_MAX_BEACONS,
) -> PairQuery:
    """Assemble a PairQuery from two receivers' rows for one window.

    Beacons are ranked by the pair's combined packet count (layout
    order breaking ties) and the top ``max_beacons`` kept, bounding the
    stage-one dimensionality.
    """
    rows_a = tuple(rows_a)
    rows_b = tuple(rows_b)
    if not rows_a or not rows_b:
        raise InvalidInputError("both receivers need observation rows")
    da = assemble_window_data(layout, rows_a, delta)
    db = assemble_window_data(layout, rows_b, delta)
    if da.window_start != db.window_start:
        raise DataMismatchError(
            f"window starts differ: {da.window_start!r} vs {db.window_start!r}"
        )
    if da.receiver_id == db.receiver_id:
        raise InvalidInputError("a pair needs two distinct receivers")
    if max_beacons < 2:
        raise InvalidInputError("max_beacons must be at least 2")
    total = da.counts + db.counts
    order = np.lexsort((np.arange(total.shape[0]), -total))
    keep = sorted(order[:max_beacons])
    ids = tuple(layout.beacons[int(j)].id for j in keep)
    pairs = []
    for ii in range(len(keep)):
        for jj in range(ii + 1, len(keep)):
            bi = layout.beacons[int(keep[ii])]
            bj = layout.beacons[int(keep[jj])]
            pairs.append((bi.id, bj.id, distance(bi.position, bj.position)))
    return PairQuery(
        receiver_a=da.receiver_id,
        receiver_b=db.receiver_id,
        window_start=da.window_start,
        rows_a=rows_a,
        rows_b=rows_b,
        beacon_ids=ids,
        beacon_pairs=tuple(pairs),
        delta=delta,
    )


@dataclass
class BeaconDistanceResult:
    """Stage-one posterior over one receiver's beacon distances."""

    receiver_id: str
    beacon_ids: tuple
    posterior: PosteriorSamples
    d_max: float
    warnings: tuple


@dataclass
class DistancePosterior:
    """Posterior summary of one receiver-to-receiver distance."""

    receiver_a: str
    receiver_b: str
    window_start: float
    method: str
    map_m: float
    mean_m: float
    sd_m: float
    draws: np.ndarray
    n_triangles: int
    warnings: tuple


def infer_beacon_distances(
    layout: Layout,
    model: PrpModel,
    rows,
    delta: float,
    beacon_ids=None,
    beacon_pairs=None,
    elements: dict = None,
    config: McmcConfig = None,
    sharpness: float = DEFAULT_SHARPNESS,
    seed_path: tuple = (),
) -> BeaconDistanceResult:
    """Joint posterior over the distances from one receiver to beacons.

    ``elements`` maps beacon id to the geometric element of that link;
    links without an entry fall back to free space, with a warning,
    since the receiver's position (hence its element) is unknown here.
    ``beacon_pairs`` supplies known beacon-to-beacon distances as
    (id_i, id_j, meters); by default all pairs among ``beacon_ids`` are
    taken from the layout.
    """
    if config is None:
        config = McmcConfig()
    data = assemble_window_data(layout, rows, delta)
    if beacon_ids is None:
        beacon_ids = tuple(layout.beacon_ids())
    else:
        beacon_ids = tuple(beacon_ids)
    if len(beacon_ids) < 2:
        raise InsufficientGeometryError("need at least two beacons")
    bindex = {b: j for j, b in enumerate(layout.beacon_ids())}
    stray = sorted(set(beacon_ids) - set(bindex))
    if stray:
        raise DataMismatchError(f"beacons not in the layout: {stray}")
    cols = np.array([bindex[b] for b in beacon_ids], dtype=np.int64)

    warnings = []
    codes = np.empty(len(beacon_ids), dtype=np.int64)
    missing = []
    for j, bid in enumerate(beacon_ids):
        e = (elements or {}).get(bid)
        if e is None:
            codes[j] = GeometricElement.FREE_SPACE.code
            missing.append(bid)
        else:
            codes[j] = e.code
    if missing:
        warnings.append(
            f"no element given for {len(missing)} beacon(s); assuming free space"
        )

    if beacon_pairs is None:
        beacon_pairs = []
        for ii in range(len(beacon_ids)):
            for jj in range(ii + 1, len(beacon_ids)):
                bi = layout.beacon_by_id(beacon_ids[ii])
                bj = layout.beacon_by_id(beacon_ids[jj])
                beacon_pairs.append((bi.id, bj.id, distance(bi.position, bj.position)))
    local = {b: j for j, b in enumerate(beacon_ids)}
    pair_i, pair_j, pair_d = [], [], []
    for bi, bj, dij in beacon_pairs:
        if bi not in local or bj not in local:
            raise DataMismatchError(f"pair ({bi!r}, {bj!r}) outside the beacon set")
        if dij <= 0 or not math.isfinite(dij):
            raise InvalidInputError(f"pair distance must be positive, got {dij}")
        pair_i.append(local[bi])
        pair_j.append(local[bj])
        pair_d.append(float(dij))
    pair_i = np.asarray(pair_i, dtype=np.int64)
    pair_j = np.asarray(pair_j, dtype=np.int64)
    pair_d = np.asarray(pair_d)

    counts = data.counts[cols]
    n_sent = data.n_sent[cols]
    rates = data.rates[cols]
    powers = data.powers[cols]
    coef = model.coef_table()
    sm = model.standardization.mean_array()
    ss = model.standardization.sd_array()
    d_max = layout.diagonal

    def logd(dvec):
        return _kernels.beacon_distance_logpdf(
            dvec,
            counts,
            n_sent,
            codes,
            rates,
            powers,
            coef,
            sm,
            ss,
            pair_i,
            pair_j,
            pair_d,
            float(sharpness),
            d_max,
        )

    init = _per_beacon_grid_init(
        counts, n_sent, codes, rates, powers, coef, sm, ss, d_max
    )
    scales = np.full(len(beacon_ids), d_max / 8.0)
    post = mcmc_sample(
        logd,
        init,
        config,
        names=tuple(f"d[{b}]" for b in beacon_ids),
        scales=scales,
        seed_path=seed_path
        + ("beacon-distances", data.receiver_id, repr(float(data.window_start))),
    )
    warnings.extend(post.warnings)
    return BeaconDistanceResult(
        receiver_id=data.receiver_id,
        beacon_ids=beacon_ids,
        posterior=post,
        d_max=d_max,
        warnings=tuple(warnings),
    )


def _per_beacon_grid_init(counts, n_sent, codes, rates, powers, coef, sm, ss, d_max):
    """Independent per-beacon MAP distances on a coarse grid."""
    ds = np.linspace(d_max / 200.0, d_max, 128)
    z1 = (ds[:, None] - sm[0]) / ss[0]
    z2 = np.broadcast_to((rates - sm[1]) / ss[1], (ds.shape[0], rates.shape[0]))
    z3 = np.broadcast_to((powers - sm[2]) / ss[2], (ds.shape[0], powers.shape[0]))
    z1 = np.broadcast_to(z1, z2.shape)
    eta = _kernels._eta_np(coef[codes][None, :, :], z1, z2, z3)
    ll = counts * _kernels._log_sigmoid_np(eta) + (n_sent - counts) * _kernels._log_sigmoid_np(-eta)
    return ds[np.argmax(ll, axis=0)].copy()


def infer_pair_distance(
    result_a: BeaconDistanceResult,
    result_b: BeaconDistanceResult,
    config: McmcConfig = None,
    sharpness: float = DEFAULT_SHARPNESS,
    n_pair_draws: int = DEFAULT_PAIR_DRAWS,
    seed_path: tuple = (),
    window_start: float = 0.0,
) -> DistancePosterior:
    """Stage two: the one-dimensional receiver-distance posterior.

    For each shared beacon the candidate distance must close a triangle
    with the two receivers' beacon distances; the log density averages
    the triangle potential over ``n_pair_draws`` paired draws from the
    stage-one posteriors (equally spaced through each pooled chain, so
    the reduction is deterministic).
    """
    if config is None:
        config = McmcConfig()
    if n_pair_draws < 1:
        raise InvalidInputError("n_pair_draws must be positive")
    common = [b for b in result_a.beacon_ids if b in set(result_b.beacon_ids)]
    if len(common) < 2:
        raise InsufficientGeometryError(
            f"receivers share {len(common)} beacon(s); need at least 2"
        )
    cols_a = [result_a.beacon_ids.index(b) for b in common]
    cols_b = [result_b.beacon_ids.index(b) for b in common]
    na = result_a.posterior.draws.shape[0]
    nb = result_b.posterior.draws.shape[0]
    m = min(n_pair_draws, na, nb)
    ia = np.linspace(0, na - 1, m).astype(np.int64)
    ib = np.linspace(0, nb - 1, m).astype(np.int64)
    da = np.ascontiguousarray(result_a.posterior.draws[np.ix_(ia, cols_a)])
    db = np.ascontiguousarray(result_b.posterior.draws[np.ix_(ib, cols_b)])
    d_max = min(result_a.d_max, result_b.d_max)

    def logd(theta):
        return _kernels.pair_distance_logpdf(
            float(theta[0]), da, db, float(sharpness), d_max
        )

    grid = np.linspace(d_max / 256.0, d_max, 128)
    vals = [logd(np.array([g])) for g in grid]
    init = np.array([grid[int(np.argmax(vals))]])
    post = mcmc_sample(
        logd,
        init,
        config,
        names=("pair_distance",),
        scales=np.array([d_max / 16.0]),
        seed_path=seed_path
        + ("pair-distance", result_a.receiver_id, result_b.receiver_id),
    )
    draws = post.draws[:, 0]
    map_d, _ = post.map_draw()
    return DistancePosterior(
        receiver_a=result_a.receiver_id,
        receiver_b=result_b.receiver_id,
        window_start=window_start,
        method="triangle",
        map_m=float(map_d[0]),
        mean_m=float(draws.mean()),
        sd_m=float(draws.std(ddof=1)),
        draws=draws.copy(),
        n_triangles=len(common),
        warnings=tuple(post.warnings),
    )


def estimate_pair_distance(
    layout: Layout,
    model: PrpModel,
    query: PairQuery,
    config: McmcConfig = None,
    sharpness: float = DEFAULT_SHARPNESS,
    n_pair_draws: int = DEFAULT_PAIR_DRAWS,
    elements_a: dict = None,
    elements_b: dict = None,
    seed_path: tuple = (),
) -> DistancePosterior:
    """Run both stages of the triangle method on a pair query."""
    result_a = infer_beacon_distances(
        layout,
        model,
        query.rows_a,
        query.delta,
        beacon_ids=query.beacon_ids,
        beacon_pairs=query.beacon_pairs,
        elements=elements_a,
        config=config,
        sharpness=sharpness,
        seed_path=seed_path,
    )
    result_b = infer_beacon_distances(
        layout,
        model,
        query.rows_b,
        query.delta,
        beacon_ids=query.beacon_ids,
        beacon_pairs=query.beacon_pairs,
        elements=elements_b,
        config=config,
        sharpness=sharpness,
        seed_path=seed_path,
    )
    out = infer_pair_distance(
        result_a,
        result_b,
        config=config,
        sharpness=sharpness,
        n_pair_draws=n_pair_draws,
        seed_path=seed_path,
        window_start=query.window_start,
    )
    out.warnings = tuple(
        dict.fromkeys(result_a.warnings + result_b.warnings + out.warnings)
    )
    return out


def two_step_pair_distance(
    layout: Layout,
    model: PrpModel,
    query: PairQuery,
    config: McmcConfig = None,
    n_pair_draws: int = DEFAULT_PAIR_DRAWS,
    use_prp: bool = True,
    rssi_weight: float = 0.0,
    seed_path: tuple = (),
) -> DistancePosterior:
    """Baseline: localize each receiver, then difference the positions.

    Paired position draws (equally spaced through the pooled chains)
    give the distance distribution; the point estimate is the distance
    between the two MAP positions.
    """
    if config is None:
        config = McmcConfig()
    if n_pair_draws < 1:
        raise InvalidInputError("n_pair_draws must be positive")
    loc_a = localize(
        layout,
        model,
        query.rows_a,
        query.delta,
        config=config,
        use_prp=use_prp,
        rssi_weight=rssi_weight,
        seed_path=seed_path,
    )
    loc_b = localize(
        layout,
        model,
        query.rows_b,
        query.delta,
        config=config,
        use_prp=use_prp,
        rssi_weight=rssi_weight,
        seed_path=seed_path,
    )
    na = loc_a.posterior.draws.shape[0]
    nb = loc_b.posterior.draws.shape[0]
    m = min(n_pair_draws, na, nb)
    ia = np.linspace(0, na - 1, m).astype(np.int64)
    ib = np.linspace(0, nb - 1, m).astype(np.int64)
    pa = loc_a.posterior.draws[ia]
    pb = loc_b.posterior.draws[ib]
    draws = np.hypot(pa[:, 0] - pb[:, 0], pa[:, 1] - pb[:, 1])
    return DistancePosterior(
        receiver_a=loc_a.receiver_id,
        receiver_b=loc_b.receiver_id,
        window_start=query.window_start,
        method="two_step",
        map_m=distance(loc_a.map_position, loc_b.map_position),
        mean_m=float(draws.mean()),
        sd_m=float(draws.std(ddof=1)),
        draws=draws,
        n_triangles=0,
        warnings=tuple(
            dict.fromkeys(loc_a.posterior.warnings + loc_b.posterior.warnings)
        ),
    )
