"""L_p, Lorentz and Besov-Lorentz norms evaluated exactly for grid data.

Grid data is a step function: node ``i`` carries measure ``h^d`` (times a
weight, if one is given).  The Lorentz quasi-norm

    ||g||_{L_{p,q}} = p^{1/q} || t |{|g| >= t}|^{1/p} ||_{L_q(dt/t)}

then reduces to a finite sum over the distinct magnitudes of ``g``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .field_grid import Field
from .spectral import BandFilter, besov_band

__all__ = [
    "NormRecord",
    "lp_norm",
    "distribution_steps",
    "lorentz_norm",
    "besov_lorentz_norm",
    "lorentz_split_defect",
    "norm_rows",
]


@dataclass(frozen=True)
class NormRecord:
    norm_kind: str
    p: float
    q: float | None
    region_id: str
    value: float


def _node_measure(f: Field, weight=None, region=None) -> np.ndarray:
    """Per-node measure ``h^d * w`` as a flat array."""
    g = f.grid
    if region is not None:
        mask = np.asarray(region, dtype=bool).reshape(-1)
        if mask.size != g.size:
            raise ValueError("region mask does not match the grid")
        if not mask.any():
            raise ValueError("empty region")
        return np.where(mask, g.cell_volume, 0.0)
    if weight is None:
        return np.full(g.size, g.cell_volume)
    if callable(weight):
        w = weight(g.points())
    else:
        w = np.asarray(weight, dtype=float).reshape(-1)
    if w.size != g.size:
        raise ValueError("weight does not match the grid")
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    return g.cell_volume * w


def lp_norm(f: Field, p: float, weight=None, region=None) -> float:
    """``(h^d sum |f|^p w)^{1/p}`` with the Euclidean pointwise norm."""
    if p < 1:
        raise ValueError("p must be at least 1")
    mu = _node_measure(f, weight, region)
    mag = f.magnitude().reshape(-1)
    return float(np.sum(mu * mag**p) ** (1.0 / p))


def distribution_steps(f: Field, weight=None, region=None):
    """Distinct magnitudes (descending) and the measure of ``{|f| >= level}``.

    Nodes with zero magnitude or zero measure are dropped; equal magnitudes
    merge into one step.  Ties keep node order, so the result is
    deterministic.
    """
    mu = _node_measure(f, weight, region)
    mag = f.magnitude().reshape(-1)
    keep = (mu > 0) & (mag > 0)
    mag, mu = mag[keep], mu[keep]
    if mag.size == 0:
        return np.empty(0), np.empty(0)
    order = np.argsort(-mag, kind="stable")
    mag, mu = mag[order], mu[order]
    cum = np.cumsum(mu)
    last = np.flatnonzero(np.append(mag[1:] != mag[:-1], True))
    return mag[last], cum[last]


def lorentz_norm(f: Field, p: float, q: float = 1.0, region=None, weight=None) -> float:
    """Lorentz quasi-norm ``L_{p,q}`` over a node region or against a weight."""
    if p < 1 or q < 1:
        raise ValueError("need p >= 1 and q >= 1")
    levels, meas = distribution_steps(f, weight, region)
    if levels.size == 0:
        return 0.0
    nxt = np.append(levels[1:], 0.0)
    if q == 1:
        return float(p * np.sum(meas ** (1.0 / p) * (levels - nxt)))
    s = np.sum(meas ** (q / p) * (levels**q - nxt**q)) / q
    return float(p ** (1.0 / q) * s ** (1.0 / q))


def besov_lorentz_norm(f: Field, p: float, filt: BandFilter, k0: int, k1: int):
    """Partial sum ``sum_{k=k0}^{k1} ||f * (psi_k - psi_{k-1})||_{L_{p,1}}``.

    Returns
    -------
    total : float
    terms : ndarray
        One Lorentz norm per band, in order ``k0..k1``.
    """
    if k1 < k0:
        raise ValueError("empty band range")
    terms = np.array([lorentz_norm(besov_band(f, k, filt), p, 1.0)
                      for k in range(k0, k1 + 1)])
    return float(terms.sum()), terms


def lorentz_split_defect(f: Field, p: float, regions, q: float = 1.0) -> float:
    """``sum_j ||f||_{L_{p,q}(R_j)} - ||f||_{L_{p,q}(union R_j)}``; nonnegative."""
    masks = [np.asarray(r, dtype=bool).reshape(-1) for r in regions]
    if not masks:
        raise ValueError("no regions given")
    cover = np.sum(masks, axis=0)
    if np.any(cover > 1):
        raise ValueError("regions overlap")
    pieces = sum(lorentz_norm(f, p, q, region=m) for m in masks)
    return float(pieces - lorentz_norm(f, p, q, region=cover > 0))


def norm_rows(records):
    """Rows for CSV export with columns norm_kind, p, q, region_id, value."""
    header = ("norm_kind", "p", "q", "region_id", "value")
    return header, [(r.norm_kind, r.p, "" if r.q is None else r.q, r.region_id, r.value)
                    for r in records]
