"""Numeric kernels for the posterior densities.

Every hot density has two implementations: a vectorized numpy one
(``*_np``) and a scalar-loop one compiled with numba (``*_nb``).  The
module-level names without a suffix are bound to whichever path is
active; set the environment variable ``BPRP_NUMBA=0`` before import to
force the numpy path.  ``benchmarks/bench_kernels.py`` times the two
against each other.

The two paths are algebraically identical but may differ in the last
couple of ulps because numpy reduces sums pairwise while the compiled
loops accumulate sequentially.  The equivalence tests pin the paths to
within 1e-10 relative.

All kernels share conventions:

* element codes: 0 free space, 1 one stack, 2 two stacks, 3 corridor
* coefficient rows: (w0, w_d, w_R, w_p, w_dd, w_dR, w_dp, w_RR, w_Rp,
  w_pp) against z-scored (distance, rate, power) features
* stacks/corridors: (n, 4) float arrays of (xlo, ylo, xhi, yhi)
* a missing RSSI summary is NaN
"""

import math
import os

import numpy as np

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAS_NUMBA = False


def _env_enabled() -> bool:
    v = os.environ.get("BPRP_NUMBA", "1").strip().lower()
    return v not in ("0", "false", "off", "no")


USE_NUMBA = HAS_NUMBA and _env_enabled()

_NEG_INF = float("-inf")


# ---------------------------------------------------------------------------
# numpy path


def _log_sigmoid_np(z):
    return -np.logaddexp(0.0, -z)


def classify_codes_np(rx, ry, bx, by, stacks, corridors):
    """Element codes for one receiver against every beacon."""
    nb = bx.shape[0]
    for k in range(corridors.shape[0]):
        if (
            corridors[k, 0] <= rx <= corridors[k, 2]
            and corridors[k, 1] <= ry <= corridors[k, 3]
        ):
            return np.full(nb, 3, dtype=np.int64)
    crossings = np.zeros(nb, dtype=np.int64)
    dx = bx - rx
    dy = by - ry
    for k in range(stacks.shape[0]):
        xlo, ylo, xhi, yhi = stacks[k]
        t_lo = np.zeros(nb)
        t_hi = np.ones(nb)
        ok = np.ones(nb, dtype=bool)
        for p0, d, lo, hi in ((rx, dx, xlo, xhi), (ry, dy, ylo, yhi)):
            zero = d == 0.0
            ok &= ~zero | ((lo < p0) & (p0 < hi))
            with np.errstate(divide="ignore", invalid="ignore"):
                ta = np.where(zero, 0.0, (lo - p0) / d)
                tb = np.where(zero, 1.0, (hi - p0) / d)
            swap = ta > tb
            ta2 = np.where(swap, tb, ta)
            tb2 = np.where(swap, ta, tb)
            t_lo = np.where(zero, t_lo, np.maximum(t_lo, ta2))
            t_hi = np.where(zero, t_hi, np.minimum(t_hi, tb2))
        crossings += (ok & (t_hi > t_lo)).astype(np.int64)
    return np.minimum(crossings, 2)


def _eta_np(coef_rows, z1, z2, z3):
    z1, z2, z3 = np.broadcast_arrays(
        np.asarray(z1, dtype=np.float64),
        np.asarray(z2, dtype=np.float64),
        np.asarray(z3, dtype=np.float64),
    )
    feats = np.stack(
        [
            np.ones_like(z1),
            z1,
            z2,
            z3,
            z1 * z1,
            z1 * z2,
            z1 * z3,
            z2 * z2,
            z2 * z3,
            z3 * z3,
        ],
        axis=-1,
    )
    return np.sum(coef_rows * feats, axis=-1)


def position_logpdf_np(
    x,
    y,
    bx,
    by,
    rates,
    powers,
    counts,
    n_sent,
    mean_rssi,
    rssi_n,
    coef,
    std_mean,
    std_sd,
    stacks,
    corridors,
    width,
    length,
    use_prp,
    rssi_weight,
    p_ref,
    path_exp,
    noise_sigma,
):
    if not (0.0 <= x <= width and 0.0 <= y <= length):
        return _NEG_INF
    d = np.hypot(bx - x, by - y)
    total = 0.0
    if use_prp:
        codes = classify_codes_np(x, y, bx, by, stacks, corridors)
        z1 = (d - std_mean[0]) / std_sd[0]
        z2 = (rates - std_mean[1]) / std_sd[1]
        z3 = (powers - std_mean[2]) / std_sd[2]
        eta = _eta_np(coef[codes], z1, z2, z3)
        total += float(
            np.sum(
                counts * _log_sigmoid_np(eta)
                + (n_sent - counts) * _log_sigmoid_np(-eta)
            )
        )
    if rssi_weight != 0.0:
        have = ~np.isnan(mean_rssi)
        if np.any(have):
            dc = np.maximum(d[have], 1e-9)
            pred = p_ref - 10.0 * path_exp * np.log10(dc)
            sd = noise_sigma / np.sqrt(rssi_n[have])
            resid = (mean_rssi[have] - pred) / sd
            total += rssi_weight * float(
                np.sum(-0.5 * resid * resid - np.log(sd) - 0.5 * math.log(2.0 * math.pi))
            )
    return total


def train_logpdf_np(
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
    std_mean,
    std_sd,
    stacks,
    corridors,
    width,
    length,
    prior_sigma,
    n_unk_b,
    n_unk_r,
):
    coef = theta[:40].reshape(4, 10)
    off_b = 40
    off_r = 40 + 2 * n_unk_b
    unk_b = theta[off_b:off_r].reshape(n_unk_b, 2)
    unk_r = theta[off_r : off_r + 2 * n_unk_r].reshape(n_unk_r, 2)
    for xy in (unk_b, unk_r):
        if xy.size and not (
            np.all((0.0 <= xy[:, 0]) & (xy[:, 0] <= width))
            and np.all((0.0 <= xy[:, 1]) & (xy[:, 1] <= length))
        ):
            return _NEG_INF
    total = float(
        np.sum(
            -0.5 * (coef / prior_sigma) ** 2
            - math.log(prior_sigma)
            - 0.5 * math.log(2.0 * math.pi)
        )
    )
    rxy = rec_xy.copy()
    if n_unk_r:
        rxy[rec_slot >= 0] = unk_r[rec_slot[rec_slot >= 0]]
    bxy = b_xy.copy()
    if n_unk_b:
        bxy[b_slot >= 0] = unk_b[b_slot[b_slot >= 0]]
    rp = rxy[obs_rec]
    bp = bxy[obs_bcn]
    d = np.hypot(bp[:, 0] - rp[:, 0], bp[:, 1] - rp[:, 1])
    codes = precodes.copy()
    dyn = np.nonzero(precodes < 0)[0]
    for i in dyn:
        codes[i] = _classify_point_py(
            rp[i, 0], rp[i, 1], bp[i, 0], bp[i, 1], stacks, corridors
        )
    z1 = (d - std_mean[0]) / std_sd[0]
    z2 = (rates[obs_bcn] - std_mean[1]) / std_sd[1]
    z3 = (powers[obs_bcn] - std_mean[2]) / std_sd[2]
    eta = _eta_np(coef[codes], z1, z2, z3)
    total += float(
        np.sum(
            counts * _log_sigmoid_np(eta) + (n_sent - counts) * _log_sigmoid_np(-eta)
        )
    )
    return total


def _triangle_np(a, b, c, sharpness):
    return (
        _log_sigmoid_np(sharpness * (a + b - c))
        + _log_sigmoid_np(sharpness * (b + c - a))
        + _log_sigmoid_np(sharpness * (c + a - b))
    )


def beacon_distance_logpdf_np(
    dvec,
    counts,
    n_sent,
    codes,
    rates,
    powers,
    coef,
    std_mean,
    std_sd,
    pair_i,
    pair_j,
    pair_d,
    sharpness,
    d_max,
):
    if not (np.all(dvec > 0.0) and np.all(dvec <= d_max)):
        return _NEG_INF
    z1 = (dvec - std_mean[0]) / std_sd[0]
    z2 = (rates - std_mean[1]) / std_sd[1]
    z3 = (powers - std_mean[2]) / std_sd[2]
    eta = _eta_np(coef[codes], z1, z2, z3)
    total = float(
        np.sum(
            counts * _log_sigmoid_np(eta) + (n_sent - counts) * _log_sigmoid_np(-eta)
        )
    )
    if pair_i.shape[0]:
        total += float(
            np.sum(_triangle_np(dvec[pair_i], dvec[pair_j], pair_d, sharpness))
        )
    return total


def pair_distance_logpdf_np(d, da, db, sharpness, d_max):
    if not (0.0 < d <= d_max):
        return _NEG_INF
    # mean over paired posterior draws (axis 0), summed over beacons
    return float(np.sum(np.mean(_triangle_np(d, da, db, sharpness), axis=0)))


# ---------------------------------------------------------------------------
# scalar helpers shared by the numpy fallback (classification only) and
# the compiled path


def _classify_point_py(rx, ry, bx, by, stacks, corridors):
    for k in range(corridors.shape[0]):
        if (
            corridors[k, 0] <= rx
            and rx <= corridors[k, 2]
            and corridors[k, 1] <= ry
            and ry <= corridors[k, 3]
        ):
            return 3
    n = 0
    for k in range(stacks.shape[0]):
        t_lo = 0.0
        t_hi = 1.0
        inside = True
        for ax in range(2):
            if ax == 0:
                p0 = rx
                dd = bx - rx
            else:
                p0 = ry
                dd = by - ry
            lo = stacks[k, ax]
            hi = stacks[k, ax + 2]
            if dd == 0.0:
                if not (lo < p0 and p0 < hi):
                    inside = False
                    break
            else:
                ta = (lo - p0) / dd
                tb = (hi - p0) / dd
                if ta > tb:
                    ta, tb = tb, ta
                if ta > t_lo:
                    t_lo = ta
                if tb < t_hi:
                    t_hi = tb
                if t_hi <= t_lo:
                    inside = False
                    break
        if inside and t_hi > t_lo:
            n += 1
    if n == 0:
        return 0
    if n == 1:
        return 1
    return 2


# ---------------------------------------------------------------------------
# compiled path

if HAS_NUMBA:

    @njit(cache=True)
    def _log_sigmoid(z):
        if z >= 0.0:
            return -math.log1p(math.exp(-z))
        return z - math.log1p(math.exp(z))

    @njit(cache=True)
    def _classify_point(rx, ry, bx, by, stacks, corridors):
        for k in range(corridors.shape[0]):
            if (
                corridors[k, 0] <= rx
                and rx <= corridors[k, 2]
                and corridors[k, 1] <= ry
                and ry <= corridors[k, 3]
            ):
                return 3
        n = 0
        for k in range(stacks.shape[0]):
            t_lo = 0.0
            t_hi = 1.0
            inside = True
            for ax in range(2):
                if ax == 0:
                    p0 = rx
                    dd = bx - rx
                else:
                    p0 = ry
                    dd = by - ry
                lo = stacks[k, ax]
                hi = stacks[k, ax + 2]
                if dd == 0.0:
                    if not (lo < p0 and p0 < hi):
                        inside = False
                        break
                else:
                    ta = (lo - p0) / dd
                    tb = (hi - p0) / dd
                    if ta > tb:
                        ta, tb = tb, ta
                    if ta > t_lo:
                        t_lo = ta
                    if tb < t_hi:
                        t_hi = tb
                    if t_hi <= t_lo:
                        inside = False
                        break
            if inside and t_hi > t_lo:
                n += 1
        if n == 0:
            return 0
        if n == 1:
            return 1
        return 2

    @njit(cache=True)
    def classify_codes_nb(rx, ry, bx, by, stacks, corridors):
        nb = bx.shape[0]
        out = np.empty(nb, dtype=np.int64)
        for j in range(nb):
            out[j] = _classify_point(rx, ry, bx[j], by[j], stacks, corridors)
        return out

    @njit(cache=True)
    def _eta_scalar(coef, code, z1, z2, z3):
        return (
            coef[code, 0]
            + coef[code, 1] * z1
            + coef[code, 2] * z2
            + coef[code, 3] * z3
            + coef[code, 4] * z1 * z1
            + coef[code, 5] * z1 * z2
            + coef[code, 6] * z1 * z3
            + coef[code, 7] * z2 * z2
            + coef[code, 8] * z2 * z3
            + coef[code, 9] * z3 * z3
        )

    @njit(cache=True)
    def position_logpdf_nb(
        x,
        y,
        bx,
        by,
        rates,
        powers,
        counts,
        n_sent,
        mean_rssi,
        rssi_n,
        coef,
        std_mean,
        std_sd,
        stacks,
        corridors,
        width,
        length,
        use_prp,
        rssi_weight,
        p_ref,
        path_exp,
        noise_sigma,
    ):
        if not (0.0 <= x and x <= width and 0.0 <= y and y <= length):
            return _NEG_INF
        total = 0.0
        log_2pi = math.log(2.0 * math.pi)
        for j in range(bx.shape[0]):
            d = math.hypot(bx[j] - x, by[j] - y)
            if use_prp:
                code = _classify_point(x, y, bx[j], by[j], stacks, corridors)
                z1 = (d - std_mean[0]) / std_sd[0]
                z2 = (rates[j] - std_mean[1]) / std_sd[1]
                z3 = (powers[j] - std_mean[2]) / std_sd[2]
                eta = _eta_scalar(coef, code, z1, z2, z3)
                total += counts[j] * _log_sigmoid(eta)
                total += (n_sent[j] - counts[j]) * _log_sigmoid(-eta)
            if rssi_weight != 0.0 and not np.isnan(mean_rssi[j]):
                dc = d if d > 1e-9 else 1e-9
                pred = p_ref - 10.0 * path_exp * math.log10(dc)
                sd = noise_sigma / math.sqrt(rssi_n[j])
                resid = (mean_rssi[j] - pred) / sd
                total += rssi_weight * (
                    -0.5 * resid * resid - math.log(sd) - 0.5 * log_2pi
                )
        return total

    @njit(cache=True)
    def train_logpdf_nb(
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
        std_mean,
        std_sd,
        stacks,
        corridors,
        width,
        length,
        prior_sigma,
        n_unk_b,
        n_unk_r,
    ):
        off_b = 40
        off_r = 40 + 2 * n_unk_b
        for j in range(n_unk_b):
            px = theta[off_b + 2 * j]
            py = theta[off_b + 2 * j + 1]
            if not (0.0 <= px and px <= width and 0.0 <= py and py <= length):
                return _NEG_INF
        for j in range(n_unk_r):
            px = theta[off_r + 2 * j]
            py = theta[off_r + 2 * j + 1]
            if not (0.0 <= px and px <= width and 0.0 <= py and py <= length):
                return _NEG_INF
        coef = theta[:40].copy().reshape(4, 10)
        log_2pi = math.log(2.0 * math.pi)
        total = 0.0
        for k in range(40):
            w = theta[k] / prior_sigma
            total += -0.5 * w * w - math.log(prior_sigma) - 0.5 * log_2pi
        for i in range(obs_rec.shape[0]):
            r = obs_rec[i]
            b = obs_bcn[i]
            s = rec_slot[r]
            if s >= 0:
                rx = theta[off_r + 2 * s]
                ry = theta[off_r + 2 * s + 1]
            else:
                rx = rec_xy[r, 0]
                ry = rec_xy[r, 1]
            s = b_slot[b]
            if s >= 0:
                px = theta[off_b + 2 * s]
                py = theta[off_b + 2 * s + 1]
            else:
                px = b_xy[b, 0]
                py = b_xy[b, 1]
            code = precodes[i]
            if code < 0:
                code = _classify_point(rx, ry, px, py, stacks, corridors)
            d = math.hypot(px - rx, py - ry)
            z1 = (d - std_mean[0]) / std_sd[0]
            z2 = (rates[b] - std_mean[1]) / std_sd[1]
            z3 = (powers[b] - std_mean[2]) / std_sd[2]
            eta = _eta_scalar(coef, code, z1, z2, z3)
            total += counts[i] * _log_sigmoid(eta)
            total += (n_sent[i] - counts[i]) * _log_sigmoid(-eta)
        return total

    @njit(cache=True)
    def _triangle_scalar(a, b, c, sharpness):
        return (
            _log_sigmoid(sharpness * (a + b - c))
            + _log_sigmoid(sharpness * (b + c - a))
            + _log_sigmoid(sharpness * (c + a - b))
        )

    @njit(cache=True)
    def beacon_distance_logpdf_nb(
        dvec,
        counts,
        n_sent,
        codes,
        rates,
        powers,
        coef,
        std_mean,
        std_sd,
        pair_i,
        pair_j,
        pair_d,
        sharpness,
        d_max,
    ):
        nb = dvec.shape[0]
        for j in range(nb):
            if not (0.0 < dvec[j] and dvec[j] <= d_max):
                return _NEG_INF
        total = 0.0
        for j in range(nb):
            z1 = (dvec[j] - std_mean[0]) / std_sd[0]
            z2 = (rates[j] - std_mean[1]) / std_sd[1]
            z3 = (powers[j] - std_mean[2]) / std_sd[2]
            eta = _eta_scalar(coef, codes[j], z1, z2, z3)
            total += counts[j] * _log_sigmoid(eta)
            total += (n_sent[j] - counts[j]) * _log_sigmoid(-eta)
        for k in range(pair_i.shape[0]):
            total += _triangle_scalar(
                dvec[pair_i[k]], dvec[pair_j[k]], pair_d[k], sharpness
            )
        return total

    @njit(cache=True)
    def pair_distance_logpdf_nb(d, da, db, sharpness, d_max):
        if not (0.0 < d and d <= d_max):
            return _NEG_INF
        m = da.shape[0]
        nb = da.shape[1]
        total = 0.0
        for j in range(nb):
            s = 0.0
            for i in range(m):
                s += _triangle_scalar(d, da[i, j], db[i, j], sharpness)
            total += s / m
        return total


# ---------------------------------------------------------------------------
# dispatch

if USE_NUMBA:
    classify_point = _classify_point
    classify_codes = classify_codes_nb
    position_logpdf = position_logpdf_nb
    train_logpdf = train_logpdf_nb
    beacon_distance_logpdf = beacon_distance_logpdf_nb
    pair_distance_logpdf = pair_distance_logpdf_nb
else:  # pragma: no cover - depends on environment
    classify_point = _classify_point_py
    classify_codes = classify_codes_np
    position_logpdf = position_logpdf_np
    train_logpdf = train_logpdf_np
    beacon_distance_logpdf = beacon_distance_logpdf_np
    pair_distance_logpdf = pair_distance_logpdf_np


def active_path() -> str:
    """Name of the kernel path selected at import time."""
    return "numba" if USE_NUMBA else "numpy"
