"""Signal-strength baselines.

The classical alternative to modeling packet counts is to model the
logged mean RSSI with a log-distance path-loss curve and a Gaussian
error whose sd shrinks with the packet count.  Its structural weakness
is built in deliberately: beacons that delivered zero packets produce
no RSSI row and therefore contribute nothing to the posterior, whereas
the count model treats silence as evidence.  The fused variant simply
adds the two log likelihoods.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientDataError, InvalidInputError, SingularDistanceError
from .geometry import Layout, distance
from .inference import LocalizationResult, McmcConfig, localize, mcmc_sample
from .prp_model import PrpModel


@dataclass(frozen=True)
class RssiPathModel:
    """Log-distance path loss: mean RSSI at d is p_ref - 10 n log10(d).

    ``p_ref`` is the mean at one meter, ``path_exponent`` the decay n,
    ``noise_sigma`` the per-packet reading sd, and ``decode_threshold``
    the weakest reading the radio can decode at all.
    """

    p_ref: float
    path_exponent: float
    noise_sigma: float
    decode_threshold: float = -95.0

    def __post_init__(self):
        for name in ("p_ref", "path_exponent", "noise_sigma", "decode_threshold"):
            if not math.isfinite(getattr(self, name)):
                raise InvalidInputError(f"{name} must be finite")
        if self.path_exponent <= 0:
            raise InvalidInputError(
                f"path_exponent must be positive, got {self.path_exponent}"
            )
        if self.noise_sigma <= 0:
            raise InvalidInputError(
                f"noise_sigma must be positive, got {self.noise_sigma}"
            )

    def predicted_mean(self, d: float) -> float:
        if d <= 0:
            raise SingularDistanceError(
                f"path loss is undefined at distance {d}; the model needs d > 0"
            )
        return self.p_ref - 10.0 * self.path_exponent * math.log10(d)


def rssi_log_likelihood(
    model: RssiPathModel, mean_rssi: float, d: float, n_packets: int
) -> float:
    """Gaussian log likelihood of a window's mean RSSI at distance d.

    Averaging n readings shrinks the noise sd by sqrt(n).  Truncation
    by the decode threshold is deliberately ignored; that omission is
    the bias this baseline carries.
    """
    if n_packets < 1:
        raise InvalidInputError("a mean RSSI needs at least one packet")
    if not math.isfinite(mean_rssi):
        raise InvalidInputError("mean_rssi must be finite")
    mu = model.predicted_mean(d)
    sd = model.noise_sigma / math.sqrt(n_packets)
    z = (mean_rssi - mu) / sd
    return -0.5 * z * z - math.log(sd) - 0.5 * math.log(2.0 * math.pi)


def bayesian_rssi_localize(
    layout: Layout,
    model: PrpModel,
    rows,
    delta: float,
    config: McmcConfig = None,
    seed_path: tuple = (),
) -> LocalizationResult:
    """Position posterior from RSSI rows alone.

    Windows whose beacons delivered no packets carry no RSSI and are
    invisible to this method; when nothing at all carries RSSI the
    result is flagged low-information (the posterior is just the
    floorplan prior).
    """
    if model.rssi is None:
        raise InvalidInputError("model carries no rssi block")
    return localize(
        layout,
        model,
        rows,
        delta,
        config=config,
        use_prp=False,
        rssi_weight=1.0,
        seed_path=seed_path,
    )


def fused_localize(
    layout: Layout,
    model: PrpModel,
    rows,
    delta: float,
    config: McmcConfig = None,
    rssi_weight: float = 1.0,
    seed_path: tuple = (),
) -> LocalizationResult:
    """Count likelihood plus weighted RSSI likelihood.

    With weight zero this is draw-for-draw identical to the plain
    count-based localization: the same sampler runs on the same
    substream, only the density differs when the weight is positive.
    """
    return localize(
        layout,
        model,
        rows,
        delta,
        config=config,
        use_prp=True,
        rssi_weight=rssi_weight,
        seed_path=seed_path,
    )


_PREF_LO, _PREF_HI = -120.0, 0.0
_EXP_LO, _EXP_HI = 0.1, 10.0
_SIG_LO, _SIG_HI = 0.1, 50.0


def fit_rssi_model(
    layout: Layout,
    dataset,
    config: McmcConfig = None,
    decode_threshold: float = -95.0,
    seed_path: tuple = (),
) -> tuple:
    """Fit (p_ref, path_exponent, noise_sigma) from labeled training spots.

    Uses rows with an RSSI summary at known spot-to-beacon distances
    and flat priors over generous ranges; returns the posterior-mean
    model and the posterior itself.  The fit, like the localization
    likelihood, pretends the readings are untruncated.
    """
    if config is None:
        config = McmcConfig()
    bindex = {b.id: b for b in layout.beacons}
    ds, ys, ns = [], [], []
    for spot in dataset.spots:
        if spot.position is None:
            continue
        for w in spot.windows:
            if w.mean_rssi is None:
                continue
            b = bindex.get(w.beacon_id)
            if b is None or not b.known:
                continue
            d = distance(spot.position, b.position)
            if d <= 0:
                continue
            ds.append(d)
            ys.append(w.mean_rssi)
            ns.append(w.packets_received)
    if len(ds) < 3:
        raise InsufficientDataError(
            f"path-loss fit needs at least 3 usable RSSI rows, got {len(ds)}"
        )
    log10_d = np.log10(np.asarray(ds))
    ys = np.asarray(ys)
    sqrt_n = np.sqrt(np.asarray(ns, dtype=np.float64))
    log_2pi = math.log(2.0 * math.pi)

    def logd(theta):
        p_ref, n_exp, sigma = theta
        if not (_PREF_LO <= p_ref <= _PREF_HI):
            return -math.inf
        if not (_EXP_LO <= n_exp <= _EXP_HI):
            return -math.inf
        if not (_SIG_LO <= sigma <= _SIG_HI):
            return -math.inf
        mu = p_ref - 10.0 * n_exp * log10_d
        sd = sigma / sqrt_n
        z = (ys - mu) / sd
        return float(np.sum(-0.5 * z * z - np.log(sd) - 0.5 * log_2pi))

    init = np.array([np.mean(ys) + 10.0 * 2.0 * np.mean(log10_d), 2.0, 4.0])
    init[0] = min(max(init[0], _PREF_LO), _PREF_HI)
    post = mcmc_sample(
        logd,
        init,
        config,
        names=("p_ref", "path_exponent", "noise_sigma"),
        scales=np.array([2.0, 0.25, 0.5]),
        seed_path=seed_path + ("fit-rssi",),
    )
    mean = post.mean()
    fitted = RssiPathModel(
        p_ref=float(mean[0]),
        path_exponent=float(mean[1]),
        noise_sigma=float(mean[2]),
        decode_threshold=decode_threshold,
    )
    return fitted, post
