"""V2V sidelink channel: link classes, large-scale loss, fading, achievable rate.

Path loss follows the urban sidelink model form ``A + B log10(d) + C log10(f_GHz)``.
Shadowing is a per-link Gauss-Markov process in relative displacement,
vehicle blockage adds one truncated-normal loss per blocking vehicle, and
fast fading is Rician (LOS, NLOSv) or Rayleigh (NLOS) with unit mean power.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .config import ChannelParams
from .geometry import hit_matrix
from .world import BUILDING, WorldState


class LinkClass(str, Enum):
    LOS = "LOS"
    NLOSV = "NLOSv"
    NLOS = "NLOS"


@dataclass(frozen=True)
class LinkState:
    link_class: LinkClass
    pathloss_db: float
    shadowing_db: float
    blockage_db: float
    fading_power: float
    snr_db: float
    rate: float
    bandwidth: float

    @property
    def total_loss_db(self) -> float:
        return self.pathloss_db + self.shadowing_db + self.blockage_db


def classify_links(w: WorldState, tx_ids, rx_id) -> list[tuple[LinkClass, int]]:
    """Vectorised ``classify_link`` for many transmitters towards one receiver."""
    rx = w.index_of(rx_id)
    tx = np.array([w.index_of(t) for t in tx_ids], dtype=np.int64)
    if len(tx) == 0:
        return []
    if np.any(tx == rx):
        raise ValueError("a link needs two distinct endpoints")
    occ = w.occluders
    slot = np.full(len(w.ids), -1, dtype=np.int64)
    slot[occ] = np.arange(len(occ))
    segs = np.column_stack([w.center[tx], np.repeat(w.center[rx][None], len(tx), axis=0)])
    excl = np.column_stack([slot[tx], np.full(len(tx), slot[rx])])
    hits = hit_matrix(segs, w.rects[occ], excl)
    building = w.kind[occ] == BUILDING
    nlos = hits[:, building].any(axis=1)
    n_blk = hits[:, ~building].sum(axis=1)
    out = []
    for is_nlos, n in zip(nlos.tolist(), n_blk.tolist()):
        if is_nlos:
            out.append((LinkClass.NLOS, 0))
        else:
            out.append((LinkClass.NLOSV if n else LinkClass.LOS, n))
    return out


def classify_link(w: WorldState, tx, rx) -> tuple[LinkClass, int]:
    """LOS / NLOSv / NLOS class of the tx-rx centre segment and the number of blocking vehicles."""
    return classify_links(w, [tx], rx)[0]


def pathloss_db(params: ChannelParams, link_class: LinkClass, distance) -> float:
    if np.any(np.asarray(distance) <= 0):
        raise ValueError("distance must be positive")
    if link_class == LinkClass.NLOS:
        a, b, c = params.nlos_a, params.nlos_b, params.nlos_c
    else:
        a, b, c = params.los_a, params.los_b, params.los_c
    return a + b * np.log10(distance) + c * math.log10(params.carrier_freq_ghz)


def shadow_sigma(params: ChannelParams, link_class: LinkClass) -> float:
    return {
        LinkClass.LOS: params.shadow_sigma_los,
        LinkClass.NLOSV: params.shadow_sigma_nlosv,
        LinkClass.NLOS: params.shadow_sigma_nlos,
    }[LinkClass(link_class)]


def blockage_loss_db(params: ChannelParams, n_blockers: int, rng: np.random.Generator) -> float:
    """Sum of one ``max(0, Normal(mean, sigma))`` draw per blocking vehicle."""
    if n_blockers <= 0:
        return 0.0
    draws = rng.normal(params.blockage_loss_mean, params.blockage_loss_sigma, size=n_blockers)
    return float(np.maximum(draws, 0.0).sum())


def large_scale_loss(params: ChannelParams, link_class: LinkClass, distance: float,
                     shadowing_db: float = 0.0, blockage_db: float = 0.0) -> float:
    """Path loss plus the given shadowing sample and blockage loss, in dB.

    Blockage only applies to NLOSv links; it is ignored for the other classes.
    """
    if distance <= 0:
        raise ValueError("distance must be positive")
    if LinkClass(link_class) != LinkClass.NLOSV:
        blockage_db = 0.0
    return float(pathloss_db(params, link_class, distance)) + shadowing_db + blockage_db


class ShadowingProcess:
    """Spatially correlated log-normal shadowing, one Gauss-Markov chain per link.

    Successive samples of a link ``dd`` metres of relative displacement apart
    have correlation ``exp(-dd / corr_dist)``.
    """

    def __init__(self, params: ChannelParams):
        self.params = params
        self.state: dict = {}

    def sample(self, key, rel_position, link_class: LinkClass, rng: np.random.Generator,
               z: float | None = None) -> float:
        """Advance link ``key`` to ``rel_position`` (rx minus tx) and return its shadowing in dB.

        ``z`` is the standard-normal innovation; drawn from ``rng`` when omitted.
        """
        rel = np.asarray(rel_position, dtype=float)
        sigma = shadow_sigma(self.params, link_class)
        if z is None:
            z = rng.standard_normal()
        prev = self.state.get(key)
        if prev is None:
            value = sigma * z
        else:
            value0, rel0, sigma0 = prev
            dd = float(np.hypot(*(rel - rel0)))
            rho = math.exp(-dd / self.params.shadow_corr_dist)
            scaled = value0 * (sigma / sigma0) if sigma0 > 0 else 0.0
            value = rho * scaled + math.sqrt(max(0.0, 1.0 - rho * rho)) * sigma * z
        self.state[key] = (value, rel, sigma)
        return value

    def retain(self, keys) -> None:
        """Forget links not in ``keys``; a link that comes back starts a fresh chain."""
        keys = set(keys)
        for k in list(self.state):
            if k not in keys:
                del self.state[k]


def rician_k_linear(params: ChannelParams, link_class: LinkClass) -> float:
    if LinkClass(link_class) == LinkClass.NLOS:
        return 0.0
    return 10.0 ** (params.rician_k_db / 10.0)


def fading_from_normals(k_lin: float, z) -> np.ndarray:
    """|h|^2 from standard normals ``z[..., 2]`` for Rician factor ``k_lin`` (``inf`` = pure LOS)."""
    z = np.asarray(z, dtype=float)
    if math.isinf(k_lin):
        return np.ones(z.shape[:-1])
    los = math.sqrt(k_lin / (k_lin + 1.0))
    scatter = math.sqrt(1.0 / (k_lin + 1.0)) / math.sqrt(2.0)
    re = los + scatter * z[..., 0]
    im = scatter * z[..., 1]
    return re * re + im * im


def fading_gain(params: ChannelParams, link_class: LinkClass, rng: np.random.Generator,
                size=None, k_lin: float | None = None):
    """Unit-mean fast-fading power gain; Rayleigh for NLOS, Rician otherwise."""
    if k_lin is None:
        k_lin = rician_k_linear(params, link_class)
    shape = (2,) if size is None else (*np.atleast_1d(size), 2)
    g = fading_from_normals(k_lin, rng.standard_normal(shape))
    return float(g) if size is None else g


def noise_dbm(params: ChannelParams, bandwidth: float) -> float:
    return params.noise_psd_dbm_hz + 10.0 * math.log10(bandwidth) + params.noise_figure_db


def snr_db(params: ChannelParams, bandwidth: float, total_loss_db: float, fading_power: float) -> float:
    if fading_power <= 0:
        return -math.inf
    return params.tx_power_dbm - total_loss_db + 10.0 * math.log10(fading_power) - noise_dbm(params, bandwidth)


def achievable_rate(params: ChannelParams, bandwidth: float, total_loss_db: float, fading_power: float) -> float:
    """Shannon rate with a spectral-efficiency cap, bit/s."""
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    if fading_power <= 0:
        return 0.0
    snr = 10.0 ** (snr_db(params, bandwidth, total_loss_db, fading_power) / 10.0)
    return bandwidth * min(math.log2(1.0 + snr), params.spectral_efficiency_cap)


def link_state(params: ChannelParams, link_class: LinkClass, pathloss: float, shadowing: float,
               blockage: float, fading_power: float, bandwidth: float) -> LinkState:
    if LinkClass(link_class) != LinkClass.NLOSV:
        blockage = 0.0
    loss = pathloss + shadowing + blockage
    return LinkState(
        link_class=LinkClass(link_class), pathloss_db=pathloss, shadowing_db=shadowing,
        blockage_db=blockage, fading_power=fading_power,
        snr_db=snr_db(params, bandwidth, loss, fading_power),
        rate=achievable_rate(params, bandwidth, loss, fading_power), bandwidth=bandwidth,
    )
