"""Posterior sampling and the estimation tasks built on it.

The sampler is an adaptive random-walk Metropolis scheme: a diagonal
proposal whose per-dimension spread tracks the running posterior
variance (Welford) and whose global scale follows a Robbins-Monro
recursion toward the 0.234 acceptance target.  Both adaptations freeze
at the end of burn-in so the retained chain is a proper Markov chain.
Chains run sequentially on labeled substreams, which keeps pooled
draws byte-stable for a given seed.

On top of it sit the three estimation tasks:

* ``train``     joint posterior over link coefficients and any unknown
                beacon or receiver positions from labeled/unlabeled
                training spots
* ``localize``  single-window receiver posterior
* ``track``     whole-trajectory posterior with the random-walk
                mobility prior tying consecutive windows together
"""

import dataclasses
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from . import _kernels
from .errors import (
    DataMismatchError,
    GaugeError,
    InitializationError,
    InsufficientGeometryError,
    InvalidInputError,
)
from .geometry import (
    ELEMENT_ORDER,
    Layout,
    classify_element,
    corridor_array,
    element_map,
    stack_array,
)
from .prp_model import LinkParams, PrpModel, Standardization, packets_sent
from .rng import substream

SCHEMA_POSTERIOR = "posterior_v1"

PSRF_WARN = 1.05
MIN_ACCEPT = 0.01


@dataclass(frozen=True)
class McmcConfig:
    """Sampler settings.

    ``draws`` counts retained draws per chain, so the default four
    chains of 5000 pool to 20000 draws after a 5000-step burn-in.
    """

    draws: int = 5000
    burn_in: int = 5000
    chains: int = 4
    seed: int = 0
    target_accept: float = 0.234
    init_scale: float = 1.0
    init_jitter: float = 0.1

    def __post_init__(self):
        if self.draws < 1 or self.burn_in < 0 or self.chains < 1:
            raise InvalidInputError("draws must be >= 1, burn_in >= 0, chains >= 1")
        if not 0.0 < self.target_accept < 1.0:
            raise InvalidInputError("target_accept must be in (0, 1)")
        if self.init_scale <= 0 or self.init_jitter < 0:
            raise InvalidInputError("init_scale must be positive, init_jitter >= 0")
        if not 0 <= int(self.seed) < 2**64:
            raise InvalidInputError("seed must fit in an unsigned 64-bit integer")


@dataclass
class PosteriorSamples:
    """Pooled MCMC output, chain-major."""

    names: tuple
    draws: np.ndarray
    log_densities: np.ndarray
    acceptance_rate: float
    chains: int
    draws_per_chain: int
    psrf: np.ndarray
    warnings: tuple = ()

    def mean(self) -> np.ndarray:
        return self.draws.mean(axis=0)

    def sd(self) -> np.ndarray:
        return self.draws.std(axis=0, ddof=1)

    def map_draw(self) -> tuple:
        """(argmax draw, its log density)."""
        i = int(np.argmax(self.log_densities))
        return self.draws[i].copy(), float(self.log_densities[i])

    def extract(self, name: str) -> np.ndarray:
        try:
            j = self.names.index(name)
        except ValueError:
            raise KeyError(name) from None
        return self.draws[:, j]

    def sidecar(self) -> dict:
        return {
            "schema": SCHEMA_POSTERIOR,
            "names": list(self.names),
            "chains": int(self.chains),
            "draws_per_chain": int(self.draws_per_chain),
            "acceptance_rate": float(self.acceptance_rate),
            "psrf": {n: float(v) for n, v in zip(self.names, self.psrf)},
            "warnings": list(self.warnings),
        }

    def save(self, csv_path, sidecar_path):
        with open(csv_path, "w", encoding="utf-8", newline="") as f:
            f.write(",".join(self.names + ("log_density",)) + "\n")
            for i in range(self.draws.shape[0]):
                vals = [repr(float(v)) for v in self.draws[i]]
                vals.append(repr(float(self.log_densities[i])))
                f.write(",".join(vals) + "\n")
        with open(sidecar_path, "w", encoding="utf-8") as f:
            json.dump(self.sidecar(), f, indent=2, sort_keys=True)
            f.write("\n")


def _split_psrf(chain_draws) -> np.ndarray:
    """Potential scale reduction over split half-chains."""
    half = chain_draws.shape[1] // 2
    if half < 2:
        return np.ones(chain_draws.shape[2])
    seqs = []
    for c in range(chain_draws.shape[0]):
        seqs.append(chain_draws[c, :half])
        seqs.append(chain_draws[c, half : 2 * half])
    seqs = np.asarray(seqs)
    w = seqs.var(axis=1, ddof=1).mean(axis=0)
    b = half * seqs.mean(axis=1).var(axis=0, ddof=1)
    out = np.ones(chain_draws.shape[2])
    ok = w > 0
    var_plus = (half - 1) / half * w[ok] + b[ok] / half
    out[ok] = np.sqrt(var_plus / w[ok])
    return out


def _finite_init(log_density, start, anchor, scales, config: McmcConfig, rng) -> tuple:
    """Finite-density starting point: the (possibly jittered) start, else
    the exact anchor, else a widening search around the anchor.

    The anchor fallback matters when the anchor sits near a support
    boundary; jitter then routinely lands outside and a random walk
    around the bad point would not recover.
    """
    x = np.array(start, dtype=np.float64)
    lp = float(log_density(x))
    if math.isfinite(lp):
        return x, lp
    x = np.array(anchor, dtype=np.float64)
    lp = float(log_density(x))
    if math.isfinite(lp):
        return x, lp
    spread = config.init_jitter
    for _ in range(40):
        cand = anchor + rng.standard_normal(x.shape[0]) * spread * scales
        lp = float(log_density(cand))
        if math.isfinite(lp):
            return cand, lp
        spread *= 1.5
    raise InitializationError(
        "no finite-density start found near the supplied initial point"
    )


def mcmc_sample(
    log_density,
    init,
    config: McmcConfig,
    names: tuple = None,
    scales=None,
    seed_path: tuple = (),
) -> PosteriorSamples:
    """Sample a log density with adaptive random-walk Metropolis.

    ``scales`` sets per-dimension initial proposal spreads (defaults to
    ``config.init_scale`` everywhere); adaptation takes over from
    there during burn-in.  A density returning NaN is treated as an
    immediate rejection.
    """
    init = np.asarray(init, dtype=np.float64)
    if init.ndim != 1 or init.shape[0] < 1:
        raise InvalidInputError("init must be a 1-D parameter vector")
    if not np.all(np.isfinite(init)):
        raise InitializationError("initial point contains non-finite values")
    k = init.shape[0]
    if scales is None:
        scales = np.full(k, config.init_scale, dtype=np.float64)
    else:
        scales = np.asarray(scales, dtype=np.float64)
        if scales.shape != (k,) or np.any(scales <= 0):
            raise InvalidInputError("scales must be positive and match init")
    if names is None:
        names = tuple(f"p{i}" for i in range(k))
    else:
        names = tuple(names)
        if len(names) != k:
            raise InvalidInputError("names must match the parameter count")

    chain_draws = np.empty((config.chains, config.draws, k))
    chain_logd = np.empty((config.chains, config.draws))
    accept_counts = 0
    for ci in range(config.chains):
        jrng = substream(config.seed, *seed_path, "init", ci)
        start = init if ci == 0 else init + jrng.standard_normal(k) * config.init_jitter * scales
        x, lp = _finite_init(log_density, start, init, scales, config, jrng)
        rng = substream(config.seed, *seed_path, "chain", ci)

        log_scale = math.log(2.38 / math.sqrt(k))
        mean = x.copy()
        m2 = np.zeros(k)
        n_seen = 1
        prop_sd = scales.copy()

        total = config.burn_in + config.draws
        for t in range(total):
            adapting = t < config.burn_in
            step = np.exp(log_scale) * prop_sd
            cand = x + rng.standard_normal(k) * step
            lp_cand = float(log_density(cand))
            if math.isnan(lp_cand):
                lp_cand = -math.inf
            accept = lp_cand - lp > math.log(rng.random())
            if accept:
                x = cand
                lp = lp_cand
            if adapting:
                gamma = (t + 1) ** -0.6
                log_scale += gamma * ((1.0 if accept else 0.0) - config.target_accept)
                n_seen += 1
                delta = x - mean
                mean += delta / n_seen
                m2 += delta * (x - mean)
                if n_seen > 10:
                    var = m2 / (n_seen - 1)
                    prop_sd = np.sqrt(np.maximum(var, 1e-12 * scales * scales))
            else:
                i = t - config.burn_in
                chain_draws[ci, i] = x
                chain_logd[ci, i] = lp
                if accept:
                    accept_counts += 1

    accept_rate = accept_counts / (config.chains * config.draws)
    psrf = _split_psrf(chain_draws)
    warnings = []
    if float(np.max(psrf)) > PSRF_WARN:
        bad = [names[i] for i in np.nonzero(psrf > PSRF_WARN)[0]]
        warnings.append(
            f"psrf above {PSRF_WARN} for {', '.join(bad)}; chains may not have mixed"
        )
    if accept_rate < MIN_ACCEPT:
        warnings.append(
            f"acceptance rate {accept_rate:.4f} below {MIN_ACCEPT}; sampler failed to mix"
        )
    return PosteriorSamples(
        names=names,
        draws=chain_draws.reshape(-1, k),
        log_densities=chain_logd.reshape(-1),
        acceptance_rate=float(accept_rate),
        chains=config.chains,
        draws_per_chain=config.draws,
        psrf=psrf,
        warnings=tuple(warnings),
    )


def grid_map(log_density_xy, width: float, length: float, step: float) -> tuple:
    """Exhaustive MAP over a square grid; (x, y, log density)."""
    if step <= 0:
        raise InvalidInputError("grid step must be positive")
    xs = np.arange(step / 2, width, step)
    ys = np.arange(step / 2, length, step)
    best = (math.nan, math.nan, -math.inf)
    for gx in xs:
        for gy in ys:
            lp = float(log_density_xy(float(gx), float(gy)))
            if lp > best[2]:
                best = (float(gx), float(gy), lp)
    return best


# ---------------------------------------------------------------------------
# window data assembly


@dataclass(frozen=True)
class WindowData:
    """One receiver-window's observations in canonical beacon order."""

    receiver_id: str
    window_start: float
    bx: np.ndarray
    by: np.ndarray
    rates: np.ndarray
    powers: np.ndarray
    counts: np.ndarray
    n_sent: np.ndarray
    mean_rssi: np.ndarray
    rssi_n: np.ndarray
    log_comb: float

    @property
    def total_count(self) -> int:
        return int(self.counts.sum())


def assemble_window_data(layout: Layout, rows, delta: float) -> WindowData:
    """Align one window's rows with the layout's beacon order.

    Beacons without a row contribute a zero count against the full
    packet budget, which in this model is information, not absence of
    it.  Rows are validated to belong to a single receiver and window
    and to beacons the layout knows about.
    """
    if delta <= 0:
        raise InvalidInputError(f"delta must be positive, got {delta}")
    rows = list(rows)
    if not rows:
        raise InvalidInputError("no observation rows supplied")
    rid = rows[0].receiver_id
    ws = rows[0].window_start
    by_beacon = {}
    for r in rows:
        if r.receiver_id != rid:
            raise DataMismatchError(
                f"rows mix receivers {rid!r} and {r.receiver_id!r}"
            )
        if r.window_start != ws:
            raise DataMismatchError(
                f"rows mix window starts {ws!r} and {r.window_start!r}"
            )
        if r.beacon_id in by_beacon:
            raise DataMismatchError(f"duplicate row for beacon {r.beacon_id!r}")
        by_beacon[r.beacon_id] = r
    known_ids = set(layout.beacon_ids())
    stray = sorted(set(by_beacon) - known_ids)
    if stray:
        raise DataMismatchError(f"log references beacons not in the layout: {stray}")
    nb = len(layout.beacons)
    bx = np.empty(nb)
    by = np.empty(nb)
    rates = np.empty(nb)
    powers = np.empty(nb)
    counts = np.zeros(nb)
    n_sent = np.empty(nb)
    mean_rssi = np.full(nb, np.nan)
    rssi_n = np.ones(nb)
    for j, b in enumerate(layout.beacons):
        bx[j], by[j] = b.x, b.y
        rates[j], powers[j] = b.rate_hz, b.power_dbm
        n_sent[j] = packets_sent(b.rate_hz, delta)
        r = by_beacon.get(b.id)
        if r is None:
            continue
        if r.packets_received > n_sent[j]:
            raise DataMismatchError(
                f"beacon {b.id!r}: {r.packets_received} decodes exceed the "
                f"{int(n_sent[j])} packets sent in {delta} s"
            )
        counts[j] = r.packets_received
        if r.mean_rssi is not None:
            mean_rssi[j] = r.mean_rssi
            rssi_n[j] = r.packets_received
    log_comb = float(
        np.sum(gammaln(n_sent + 1) - gammaln(counts + 1) - gammaln(n_sent - counts + 1))
    )
    return WindowData(
        receiver_id=rid,
        window_start=float(ws),
        bx=bx,
        by=by,
        rates=rates,
        powers=powers,
        counts=counts,
        n_sent=n_sent,
        mean_rssi=mean_rssi,
        rssi_n=rssi_n,
        log_comb=log_comb,
    )


def position_log_density(
    layout: Layout,
    model: PrpModel,
    data: WindowData,
    use_prp: bool = True,
    rssi_weight: float = 0.0,
):
    """Closure mapping (x, y) to the window's log posterior density.

    The flat position prior over the floorplan contributes only the
    support bound, so this is the count likelihood plus, when weighted,
    the RSSI likelihood.
    """
    if rssi_weight < 0:
        raise InvalidInputError("rssi_weight must be non-negative")
    if not use_prp and rssi_weight == 0.0:
        raise InvalidInputError("at least one likelihood component must be active")
    if rssi_weight > 0 and model.rssi is None:
        raise InvalidInputError("model carries no rssi block but rssi_weight > 0")
    stacks = stack_array(layout)
    corridors = corridor_array(layout)
    coef = model.coef_table()
    sm = model.standardization.mean_array()
    ss = model.standardization.sd_array()
    if model.rssi is not None:
        p_ref = model.rssi.p_ref
        path_exp = model.rssi.path_exponent
        noise_sigma = model.rssi.noise_sigma
    else:
        p_ref, path_exp, noise_sigma = 0.0, 1.0, 1.0
    log_comb = data.log_comb if use_prp else 0.0

    def logd(x: float, y: float) -> float:
        return log_comb + _kernels.position_logpdf(
            float(x),
            float(y),
            data.bx,
            data.by,
            data.rates,
            data.powers,
            data.counts,
            data.n_sent,
            data.mean_rssi,
            data.rssi_n,
            coef,
            sm,
            ss,
            stacks,
            corridors,
            layout.width,
            layout.length,
            use_prp,
            float(rssi_weight),
            p_ref,
            path_exp,
            noise_sigma,
        )

    return logd


@dataclass
class LocalizationResult:
    receiver_id: str
    window_start: float
    map_position: tuple
    mean_position: tuple
    sd: tuple
    posterior: PosteriorSamples
    elements: dict
    low_information: bool


def localize(
    layout: Layout,
    model: PrpModel,
    rows,
    delta: float,
    config: McmcConfig = None,
    use_prp: bool = True,
    rssi_weight: float = 0.0,
    seed_path: tuple = (),
) -> LocalizationResult:
    """Posterior over one receiver's position in one window.

    The default likelihood is the packet-count model alone; callers can
    add the RSSI term with a positive weight or drop the count term for
    a pure signal-strength baseline.  Identical seeds and seed paths
    make runs with the same likelihood reproducible draw for draw.
    """
    if config is None:
        config = McmcConfig()
    data = assemble_window_data(layout, rows, delta)
    logd_xy = position_log_density(
        layout, model, data, use_prp=use_prp, rssi_weight=rssi_weight
    )

    def logd(theta):
        return logd_xy(theta[0], theta[1])

    # multimodal ring geometries trap a random walk started far away, so
    # seed the chains from a coarse scan of the density itself
    gx, gy, _ = grid_map(
        logd_xy, layout.width, layout.length, max(layout.width, layout.length) / 24.0
    )
    init = np.array([gx, gy])
    scales = np.array([layout.width / 8.0, layout.length / 8.0])
    post = mcmc_sample(
        logd,
        init,
        config,
        names=("x", "y"),
        scales=scales,
        seed_path=seed_path + (data.receiver_id, "window", _window_label(data.window_start)),
    )
    map_xy, _ = post.map_draw()
    mean_xy = post.mean()
    sd_xy = post.sd()
    return LocalizationResult(
        receiver_id=data.receiver_id,
        window_start=data.window_start,
        map_position=(float(map_xy[0]), float(map_xy[1])),
        mean_position=(float(mean_xy[0]), float(mean_xy[1])),
        sd=(float(sd_xy[0]), float(sd_xy[1])),
        posterior=post,
        elements=element_map((map_xy[0], map_xy[1]), layout),
        low_information=data.total_count == 0,
    )


def _window_label(window_start: float) -> str:
    # label substreams by the exact float bits so distinct windows never collide
    return repr(float(window_start))


# ---------------------------------------------------------------------------
# training


@dataclass(frozen=True)
class TrainingSpot:
    """Windows collected by one stationary receiver, maybe labeled."""

    receiver_id: str
    windows: tuple
    position: tuple = None

    def __post_init__(self):
        object.__setattr__(self, "windows", tuple(self.windows))
        if not self.windows:
            raise InvalidInputError(f"spot {self.receiver_id!r} has no windows")
        for w in self.windows:
            if w.receiver_id != self.receiver_id:
                raise DataMismatchError(
                    f"spot {self.receiver_id!r} contains a window from "
                    f"{w.receiver_id!r}"
                )
        if self.position is not None:
            px, py = float(self.position[0]), float(self.position[1])
            if not (math.isfinite(px) and math.isfinite(py)):
                raise InvalidInputError("spot position must be finite")
            object.__setattr__(self, "position", (px, py))


@dataclass(frozen=True)
class TrainingDataset:
    spots: tuple
    delta: float

    def __post_init__(self):
        object.__setattr__(self, "spots", tuple(self.spots))
        if not self.spots:
            raise InvalidInputError("training dataset has no spots")
        if self.delta <= 0:
            raise InvalidInputError("delta must be positive")


@dataclass
class TrainResult:
    model: PrpModel
    posterior: PosteriorSamples
    recovered_beacons: dict
    recovered_locations: dict
    standardization: Standardization
    warnings: tuple


def derive_standardization(layout: Layout, dataset: TrainingDataset) -> Standardization:
    """Feature z-scoring constants from the training configuration.

    Distance statistics come from labeled-spot-to-known-beacon pairs;
    when those are too few or degenerate, the floorplan diagonal
    provides the fallback scale.  A zero spread (all beacons share a
    rate, say) falls back to a unit sd so the feature is simply
    centered.
    """
    rates = np.array([b.rate_hz for b in layout.beacons])
    powers = np.array([b.power_dbm for b in layout.beacons])
    dists = []
    for spot in dataset.spots:
        if spot.position is None:
            continue
        for b in layout.beacons:
            if b.known:
                dists.append(math.hypot(b.x - spot.position[0], b.y - spot.position[1]))
    dists = np.asarray(dists)
    if dists.size >= 2 and float(dists.std()) > 0:
        d_mean, d_sd = float(dists.mean()), float(dists.std())
    else:
        d_mean, d_sd = layout.diagonal / 2.0, layout.diagonal / 4.0
    r_sd = float(rates.std())
    p_sd = float(powers.std())
    return Standardization(
        mean=(d_mean, float(rates.mean()), float(powers.mean())),
        sd=(d_sd, r_sd if r_sd > 0 else 1.0, p_sd if p_sd > 0 else 1.0),
    )


def train(
    layout: Layout,
    dataset: TrainingDataset,
    config: McmcConfig = None,
    prior_sigma: float = 10.0,
    seed_path: tuple = (),
) -> TrainResult:
    """Fit the per-element links, optionally recovering unknown positions.

    Unknown-position beacons (``known=False``) and unlabeled spots
    enter the parameter vector with uniform priors over the floorplan.
    At least one known beacon or one labeled spot must pin the frame.
    """
    if config is None:
        config = McmcConfig()
    if len(layout.beacons) < 3:
        raise InsufficientGeometryError(
            f"training needs at least 3 beacons, layout has {len(layout.beacons)}"
        )
    if not any(b.known for b in layout.beacons) and all(
        s.position is None for s in dataset.spots
    ):
        raise GaugeError(
            "no known beacon and no labeled spot: the floorplan frame is free"
        )
    std = derive_standardization(layout, dataset)

    bindex = {b.id: j for j, b in enumerate(layout.beacons)}
    nb = len(layout.beacons)
    b_xy = np.zeros((nb, 2))
    b_slot = np.full(nb, -1, dtype=np.int64)
    unknown_beacons = []
    for j, b in enumerate(layout.beacons):
        if b.known:
            b_xy[j] = (b.x, b.y)
        else:
            b_slot[j] = len(unknown_beacons)
            unknown_beacons.append(b.id)
    rates = np.array([b.rate_hz for b in layout.beacons])
    powers = np.array([b.power_dbm for b in layout.beacons])

    nr = len(dataset.spots)
    rec_xy = np.zeros((nr, 2))
    rec_slot = np.full(nr, -1, dtype=np.int64)
    unknown_spots = []
    for si, spot in enumerate(dataset.spots):
        if spot.position is not None:
            rec_xy[si] = spot.position
        else:
            rec_slot[si] = len(unknown_spots)
            unknown_spots.append(si)

    obs_rec, obs_bcn, counts, n_sent, precodes = [], [], [], [], []
    for si, spot in enumerate(dataset.spots):
        groups = {}
        for w in spot.windows:
            groups.setdefault(w.window_start, {})
            if w.beacon_id in groups[w.window_start]:
                raise DataMismatchError(
                    f"spot {spot.receiver_id!r}: duplicate beacon {w.beacon_id!r} "
                    f"in window {w.window_start!r}"
                )
            if w.beacon_id not in bindex:
                raise DataMismatchError(
                    f"spot {spot.receiver_id!r} references unknown beacon {w.beacon_id!r}"
                )
            groups[w.window_start][w.beacon_id] = w
        for ws in sorted(groups):
            seen = groups[ws]
            for j, b in enumerate(layout.beacons):
                n = packets_sent(b.rate_hz, dataset.delta)
                row = seen.get(b.id)
                c = row.packets_received if row is not None else 0
                if c > n:
                    raise DataMismatchError(
                        f"beacon {b.id!r}: {c} decodes exceed {n} packets sent"
                    )
                obs_rec.append(si)
                obs_bcn.append(j)
                counts.append(float(c))
                n_sent.append(float(n))
                if spot.position is not None and b.known:
                    precodes.append(
                        classify_element(spot.position, (b.x, b.y), layout).code
                    )
                else:
                    precodes.append(-1)
    obs_rec = np.asarray(obs_rec, dtype=np.int64)
    obs_bcn = np.asarray(obs_bcn, dtype=np.int64)
    counts = np.asarray(counts)
    n_sent = np.asarray(n_sent)
    precodes = np.asarray(precodes, dtype=np.int64)

    stacks = stack_array(layout)
    corridors = corridor_array(layout)
    sm, ssd = std.mean_array(), std.sd_array()
    n_unk_b, n_unk_r = len(unknown_beacons), len(unknown_spots)

    def logd(theta):
        return _kernels.train_logpdf(
            theta,
            obs_rec,
            obs_bcn,
            counts,
            n_sent,
            rec_xy,
            rec_slot,
            b_xy,
            b_slot,
            rates,
            powers,
            precodes,
            sm,
            ssd,
            stacks,
            corridors,
            layout.width,
            layout.length,
            float(prior_sigma),
            n_unk_b,
            n_unk_r,
        )

    names = []
    for e in ELEMENT_ORDER:
        tag = e.value
        names.append(f"w0[{tag}]")
        for s in ("d", "R", "p"):
            names.append(f"w_{s}[{tag}]")
        for s in ("dd", "dR", "dp", "RR", "Rp", "pp"):
            names.append(f"w_{s}[{tag}]")
    for bid in unknown_beacons:
        names.append(f"bx[{bid}]")
        names.append(f"by[{bid}]")
    for si in unknown_spots:
        names.append(f"rx[{dataset.spots[si].receiver_id}#{si}]")
        names.append(f"ry[{dataset.spots[si].receiver_id}#{si}]")

    k = 40 + 2 * n_unk_b + 2 * n_unk_r
    init = np.zeros(k)
    init[40:] = np.tile((layout.width / 2.0, layout.length / 2.0), n_unk_b + n_unk_r)
    if n_unk_b + n_unk_r > 0:
        _init_unknown_positions(
            init,
            logd,
            layout,
            dataset,
            config,
            obs_rec,
            obs_bcn,
            counts,
            n_sent,
            rec_xy,
            rec_slot,
            b_xy,
            b_slot,
            rates,
            powers,
            precodes,
            sm,
            ssd,
            stacks,
            corridors,
            float(prior_sigma),
            unknown_beacons,
            unknown_spots,
            seed_path,
        )
    scales = np.ones(k)
    scales[40:] = max(layout.width, layout.length) / 8.0

    post = mcmc_sample(
        logd,
        init,
        config,
        names=tuple(names),
        scales=scales,
        seed_path=seed_path + ("train",),
    )

    mean = post.mean()
    sd = post.sd()
    elements = {}
    for ei, e in enumerate(ELEMENT_ORDER):
        row = mean[ei * 10 : (ei + 1) * 10]
        elements[e] = LinkParams(float(row[0]), tuple(row[1:4]), tuple(row[4:10]))
    model = PrpModel(
        elements=elements, standardization=std, prior_sigma=float(prior_sigma)
    )
    recovered_beacons = {}
    for u, bid in enumerate(unknown_beacons):
        o = 40 + 2 * u
        recovered_beacons[bid] = {
            "mean": (float(mean[o]), float(mean[o + 1])),
            "sd": (float(sd[o]), float(sd[o + 1])),
        }
    recovered_locations = {}
    for u, si in enumerate(unknown_spots):
        o = 40 + 2 * n_unk_b + 2 * u
        recovered_locations[si] = {
            "receiver_id": dataset.spots[si].receiver_id,
            "mean": (float(mean[o]), float(mean[o + 1])),
            "sd": (float(sd[o]), float(sd[o + 1])),
        }

    warnings = list(post.warnings)
    seen_codes = _observed_elements(
        precodes, obs_rec, obs_bcn, rec_xy, rec_slot, b_xy, b_slot, mean, n_unk_b, layout
    )
    for e in ELEMENT_ORDER:
        if e.code not in seen_codes:
            warnings.append(
                f"element {e.value} has no training observations; its link follows the prior"
            )
    return TrainResult(
        model=model,
        posterior=post,
        recovered_beacons=recovered_beacons,
        recovered_locations=recovered_locations,
        standardization=std,
        warnings=tuple(warnings),
    )


def _init_unknown_positions(
    init,
    joint_logd,
    layout,
    dataset,
    config,
    obs_rec,
    obs_bcn,
    counts,
    n_sent,
    rec_xy,
    rec_slot,
    b_xy,
    b_slot,
    rates,
    powers,
    precodes,
    sm,
    ssd,
    stacks,
    corridors,
    prior_sigma,
    unknown_beacons,
    unknown_spots,
    seed_path,
):
    """Data-driven starts for the unknown coordinates, in place.

    A short pilot run over the fully observed block (known beacons at
    labeled spots) estimates the link; every unknown position then gets
    an independent coarse-grid scan under that link, followed by two
    refinement rounds where the link is refit on all observations with
    the unknowns frozen at their scan estimates and the scans repeat
    under the refit link.  The whole loop restarts from a few distinct
    pilot draws and the candidate with the highest joint density wins.

    The restarts are not decoration.  When the labeled block is small
    the pilot link is noisy, a scan under a noisy link can drop a
    position into the wrong aisle, and the refinement then converges to
    a self-consistent but shifted solution; the joint sampler never
    escapes that basin because the walk is local.  Restarting from
    different pilot draws reaches different basins and the joint
    density picks out the right one.  Without a fully observed block
    the centers already written to ``init`` stay.
    """
    known_mask = precodes >= 0
    if not np.any(known_mask):
        return
    sel = np.nonzero(known_mask)[0]
    no_slot_r = np.full(rec_slot.shape, -1, dtype=np.int64)
    no_slot_b = np.full(b_slot.shape, -1, dtype=np.int64)

    def pilot_logd(theta):
        return _kernels.train_logpdf(
            theta,
            obs_rec[sel],
            obs_bcn[sel],
            counts[sel],
            n_sent[sel],
            rec_xy,
            no_slot_r,
            b_xy,
            no_slot_b,
            rates,
            powers,
            precodes[sel],
            sm,
            ssd,
            stacks,
            corridors,
            layout.width,
            layout.length,
            prior_sigma,
            0,
            0,
        )

    pilot_config = McmcConfig(
        draws=min(500, config.draws),
        burn_in=min(1000, config.burn_in),
        chains=1,
        seed=config.seed,
    )
    pilot = mcmc_sample(
        pilot_logd,
        np.zeros(40),
        pilot_config,
        seed_path=seed_path + ("train", "pilot-link"),
    )

    step = max(layout.width, layout.length) / 96.0
    xs = np.arange(step / 2.0, layout.width, step)
    ys = np.arange(step / 2.0, layout.length, step)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    cx, cy = gx.ravel(), gy.ravel()

    n_unk_b = len(unknown_beacons)
    labeled = rec_slot[obs_rec] < 0
    known_b = b_slot[obs_bcn] < 0

    def scan_positions():
        coef = init[:40].reshape(4, 10)
        for j in range(b_xy.shape[0]):
            u = b_slot[j]
            if u < 0:
                continue
            rows = np.nonzero((obs_bcn == j) & labeled)[0]
            if rows.size == 0:
                continue
            ll = np.zeros(cx.shape[0])
            z2 = (rates[j] - sm[1]) / ssd[1]
            z3 = (powers[j] - sm[2]) / ssd[2]
            for i in rows:
                rxy = rec_xy[obs_rec[i]]
                codes = _kernels.classify_codes(
                    rxy[0], rxy[1], cx, cy, stacks, corridors
                )
                z1 = (np.hypot(cx - rxy[0], cy - rxy[1]) - sm[0]) / ssd[0]
                eta = _kernels._eta_np(coef[codes], z1, z2, z3)
                ll += counts[i] * _kernels._log_sigmoid_np(eta)
                ll += (n_sent[i] - counts[i]) * _kernels._log_sigmoid_np(-eta)
            best = int(np.argmax(ll))
            init[40 + 2 * u] = cx[best]
            init[40 + 2 * u + 1] = cy[best]

        for u, si in enumerate(unknown_spots):
            rows = np.nonzero((obs_rec == si) & known_b)[0]
            if rows.size == 0:
                continue
            bxs = b_xy[obs_bcn[rows], 0]
            bys = b_xy[obs_bcn[rows], 1]
            z2 = (rates[obs_bcn[rows]] - sm[1]) / ssd[1]
            z3 = (powers[obs_bcn[rows]] - sm[2]) / ssd[2]
            cs = counts[rows]
            ns = n_sent[rows]
            ll = np.empty(cx.shape[0])
            for m in range(cx.shape[0]):
                codes = _kernels.classify_codes(
                    cx[m], cy[m], bxs, bys, stacks, corridors
                )
                z1 = (np.hypot(bxs - cx[m], bys - cy[m]) - sm[0]) / ssd[0]
                eta = _kernels._eta_np(coef[codes], z1, z2, z3)
                ll[m] = float(
                    np.sum(
                        cs * _kernels._log_sigmoid_np(eta)
                        + (ns - cs) * _kernels._log_sigmoid_np(-eta)
                    )
                )
            best = int(np.argmax(ll))
            o = 40 + 2 * n_unk_b + 2 * u
            init[o] = cx[best]
            init[o + 1] = cy[best]

    refit_rec = rec_xy.copy()
    refit_b = b_xy.copy()

    def refit_logd(theta):
        return _kernels.train_logpdf(
            theta,
            obs_rec,
            obs_bcn,
            counts,
            n_sent,
            refit_rec,
            no_slot_r,
            refit_b,
            no_slot_b,
            rates,
            powers,
            precodes,
            sm,
            ssd,
            stacks,
            corridors,
            layout.width,
            layout.length,
            prior_sigma,
            0,
            0,
        )

    refit_config = McmcConfig(
        draws=min(400, config.draws),
        burn_in=min(800, config.burn_in),
        chains=1,
        seed=config.seed,
    )
    pd = np.asarray(pilot.draws)
    starts = [pilot.mean(), pd[pd.shape[0] // 3], pd[(2 * pd.shape[0]) // 3]]
    best_cand = None
    for s_no, w0 in enumerate(starts):
        init[:40] = w0
        scan_positions()
        for round_no in (1, 2):
            for j in range(b_xy.shape[0]):
                u = b_slot[j]
                if u >= 0:
                    refit_b[j, 0] = init[40 + 2 * u]
                    refit_b[j, 1] = init[40 + 2 * u + 1]
            for u, si in enumerate(unknown_spots):
                o = 40 + 2 * n_unk_b + 2 * u
                refit_rec[si, 0] = init[o]
                refit_rec[si, 1] = init[o + 1]
            refit = mcmc_sample(
                refit_logd,
                init[:40].copy(),
                refit_config,
                seed_path=seed_path + ("train", f"pilot-refit-{s_no}-{round_no}"),
            )
            init[:40] = refit.mean()
            scan_positions()
        score = joint_logd(init)
        if best_cand is None or score > best_cand[0]:
            best_cand = (score, init.copy())
    init[:] = best_cand[1]


def layout_with_recovered(layout: Layout, recovered_beacons: dict) -> Layout:
    """Pin recovered beacon positions back into the floorplan.

    Takes the ``recovered_beacons`` mapping from a :class:`TrainResult`
    and returns a layout where those beacons sit at their posterior
    means and are marked known, so downstream localization can use
    them.  Positions are clamped to the floorplan, which matters only
    for very diffuse posteriors.
    """
    replaced = []
    stray = set(recovered_beacons) - set(layout.beacon_ids())
    if stray:
        raise DataMismatchError(f"recovered beacons {sorted(stray)} are not in the layout")
    for b in layout.beacons:
        rec = recovered_beacons.get(b.id)
        if rec is None:
            replaced.append(b)
            continue
        x, y = rec["mean"]
        replaced.append(
            dataclasses.replace(
                b,
                x=min(max(float(x), 0.0), layout.width),
                y=min(max(float(y), 0.0), layout.length),
                known=True,
            )
        )
    return dataclasses.replace(layout, beacons=tuple(replaced))


def _observed_elements(
    precodes, obs_rec, obs_bcn, rec_xy, rec_slot, b_xy, b_slot, mean, n_unk_b, layout
) -> set:
    """Element codes touched by the data, resolving unknowns at the posterior mean."""
    seen = set(int(c) for c in precodes[precodes >= 0])
    dyn = np.nonzero(precodes < 0)[0]
    if dyn.size == 0:
        return seen
    off_r = 40 + 2 * n_unk_b
    for i in dyn:
        r = obs_rec[i]
        b = obs_bcn[i]
        s = rec_slot[r]
        rxy = (mean[off_r + 2 * s], mean[off_r + 2 * s + 1]) if s >= 0 else rec_xy[r]
        s = b_slot[b]
        bxy = (mean[40 + 2 * s], mean[40 + 2 * s + 1]) if s >= 0 else b_xy[b]
        seen.add(classify_element(rxy, bxy, layout).code)
    return seen


# ---------------------------------------------------------------------------
# tracking


GAP_FACTOR = 10.0


@dataclass
class TrackResult:
    receiver_id: str
    window_starts: np.ndarray
    map_positions: np.ndarray
    mean_positions: np.ndarray
    sd: np.ndarray
    posteriors: tuple
    segments: tuple
    warnings: tuple


def track(
    layout: Layout,
    model: PrpModel,
    rows,
    delta: float,
    s_max: float,
    config: McmcConfig = None,
    use_prp: bool = True,
    rssi_weight: float = 0.0,
    seed_path: tuple = (),
) -> TrackResult:
    """Joint posterior over a receiver's positions across windows.

    Consecutive windows are tied by the mobility prior: each step is a
    zero-mean Gaussian whose per-axis sd is the window speed times the
    gap, with speeds uniform on (0, s_max].  Runs of windows separated
    by more than ten window lengths are inferred independently.

    The reported MAP path is the best pooled draw whose every step
    also satisfies the hard physical bound s_max * gap; if no draw
    does, the unconstrained best is used and a warning is attached.
    """
    if config is None:
        config = McmcConfig()
    if s_max <= 0 or not math.isfinite(s_max):
        raise InvalidInputError(f"s_max must be positive, got {s_max}")
    rows = list(rows)
    if not rows:
        raise InvalidInputError("no observation rows supplied")
    rid = rows[0].receiver_id
    grouped = {}
    for r in rows:
        if r.receiver_id != rid:
            raise DataMismatchError(f"rows mix receivers {rid!r} and {r.receiver_id!r}")
        grouped.setdefault(r.window_start, []).append(r)
    starts = sorted(grouped)
    datas = [assemble_window_data(layout, grouped[ws], delta) for ws in starts]

    segments = [[0]]
    for i in range(1, len(starts)):
        if starts[i] - starts[i - 1] > GAP_FACTOR * delta:
            segments.append([i])
        else:
            segments[-1].append(i)
    warnings = []
    if len(segments) > 1:
        warnings.append(
            f"{len(segments)} window runs separated by more than "
            f"{GAP_FACTOR:g} windows; tracked independently"
        )

    n_win = len(starts)
    map_pos = np.empty((n_win, 2))
    mean_pos = np.empty((n_win, 2))
    sd_pos = np.empty((n_win, 2))
    posteriors = []
    s_floor = max(1e-3 * s_max, 1e-4)
    for seg_i, seg in enumerate(segments):
        seg_datas = [datas[i] for i in seg]
        seg_starts = np.array([starts[i] for i in seg])
        post = _track_segment(
            layout,
            model,
            seg_datas,
            seg_starts,
            s_max,
            s_floor,
            config,
            use_prp,
            rssi_weight,
            seed_path + (rid, "segment", seg_i),
            warnings,
        )
        posteriors.append(post)
        t_count = len(seg)
        gaps = np.diff(seg_starts)
        xy = post.draws[:, : 2 * t_count].reshape(-1, t_count, 2)
        if t_count > 1:
            steps = np.linalg.norm(np.diff(xy, axis=1), axis=2)
            feasible = np.all(steps <= s_max * gaps[None, :] * (1 + 1e-9), axis=1)
        else:
            feasible = np.ones(xy.shape[0], dtype=bool)
        if np.any(feasible):
            idx = np.nonzero(feasible)[0]
            best = idx[np.argmax(post.log_densities[idx])]
        else:
            best = int(np.argmax(post.log_densities))
            warnings.append(
                f"segment {seg_i}: no draw satisfies the s_max step bound; "
                "using the unconstrained best draw"
            )
        for k_local, i in enumerate(seg):
            map_pos[i] = xy[best, k_local]
            mean_pos[i] = xy[:, k_local].mean(axis=0)
            sd_pos[i] = xy[:, k_local].std(axis=0, ddof=1)
        warnings.extend(w for w in post.warnings if w not in warnings)

    return TrackResult(
        receiver_id=rid,
        window_starts=np.asarray(starts, dtype=np.float64),
        map_positions=map_pos,
        mean_positions=mean_pos,
        sd=sd_pos,
        posteriors=tuple(posteriors),
        segments=tuple(tuple(s) for s in segments),
        warnings=tuple(dict.fromkeys(warnings)),
    )


def _track_segment(
    layout,
    model,
    datas,
    starts,
    s_max,
    s_floor,
    config,
    use_prp,
    rssi_weight,
    seed_path,
    warnings,
):
    t_count = len(datas)
    densities = [
        position_log_density(layout, model, d, use_prp=use_prp, rssi_weight=rssi_weight)
        for d in datas
    ]
    gaps = np.diff(starts)
    log_2pi = math.log(2.0 * math.pi)
    speed_norm = math.log(s_max - s_floor)

    def logd(theta):
        total = 0.0
        for t in range(t_count):
            total += densities[t](theta[2 * t], theta[2 * t + 1])
            if not math.isfinite(total):
                return -math.inf
        off = 2 * t_count
        for t in range(t_count - 1):
            s = theta[off + t]
            if not s_floor < s <= s_max:
                return -math.inf
            sd = s * gaps[t]
            dx = theta[2 * (t + 1)] - theta[2 * t]
            dy = theta[2 * (t + 1) + 1] - theta[2 * t + 1]
            total += -0.5 * (dx * dx + dy * dy) / (sd * sd) - 2.0 * math.log(sd) - log_2pi
            total -= speed_norm
        return total

    init = np.empty(2 * t_count + (t_count - 1))
    scales = np.empty_like(init)
    # independent coarse scans seed each window; the joint sampler then
    # only has to smooth, which a random walk in this many dimensions
    # can do where it could not cross the floor from a central start
    step = max(layout.width, layout.length) / 24.0
    for t, d in enumerate(datas):
        if d.counts.sum() > 0:
            gx, gy, _ = grid_map(densities[t], layout.width, layout.length, step)
            init[2 * t], init[2 * t + 1] = gx, gy
        else:
            init[2 * t] = layout.width / 2.0
            init[2 * t + 1] = layout.length / 2.0
        scales[2 * t] = step / 2.0
        scales[2 * t + 1] = step / 2.0
    init[2 * t_count :] = 0.5 * (s_floor + s_max)
    scales[2 * t_count :] = max(s_max / 4.0, 1e-3)
    names = []
    for t in range(t_count):
        names.append(f"x[{t}]")
        names.append(f"y[{t}]")
    names.extend(f"s[{t}]" for t in range(t_count - 1))
    return mcmc_sample(
        logd, init, config, names=tuple(names), scales=scales, seed_path=seed_path
    )
