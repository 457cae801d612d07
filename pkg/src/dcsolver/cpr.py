"""Polynomial regression of searched compensation ratios.

Ratios searched on a grid of (NFE, guidance scale) runs are summarized by a
single coefficient tensor phi with

    rho_hat_i(NFE, CFG) = sum_{j,k,l} phi[j, k, l] * i^j * CFG^k * NFE^l

which is multilinear in phi, so the fit is ordinary linear least squares.  The
prediction factorizes into a cascade: contract the NFE axis, then the CFG
axis, then evaluate the remaining polynomial in the step index; the cascade
equals the expanded sum up to roundoff.  Features are scaled to [0, 1] for the
solve and the coefficients are mapped back, so the stored tensor applies to
raw (i, CFG, NFE) directly.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .compensation import CompensationSchedule
from .errors import ConfigError, FitError
from .solver import DEFAULT_K

CPR_VERSION = 1

DEFAULT_DEGREES = (2, 2, 4)  # (NFE, CFG, step index)


@dataclass(frozen=True, eq=False)
class CPRCoefficients:
    """degrees = (p1, p2, p3) for the NFE, CFG, and step-index axes."""

    degrees: tuple[int, int, int]
    phi1: np.ndarray
    feature_scaling: dict
    version: int = CPR_VERSION

    def __post_init__(self):
        p1, p2, p3 = self.degrees
        expected = (p3 + 1, p2 + 1, p1 + 1)
        if self.phi1.shape != expected:
            raise ConfigError(f"phi1 shape {self.phi1.shape}, degrees imply {expected}")
        if not np.all(np.isfinite(self.phi1)):
            raise ConfigError("phi1 must be finite")

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "kind": "cpr_coefficients",
            "degrees": list(self.degrees),
            "phi1": self.phi1.flatten().tolist(),
            "feature_scaling": self.feature_scaling,
        }


def save_cpr(coeffs: CPRCoefficients, path, config: dict | None = None):
    payload = coeffs.to_dict()
    if config is not None:
        payload["config"] = config
    with open(path, "w") as f:
        json.dump(payload, f, indent=2)
        f.write("\n")


def load_cpr(path) -> CPRCoefficients:
    with open(path) as f:
        payload = json.load(f)
    version = payload.get("version")
    if version != CPR_VERSION:
        raise ConfigError(f"cpr format version {version}, expected {CPR_VERSION}")
    try:
        degrees = tuple(int(p) for p in payload["degrees"])
        p1, p2, p3 = degrees
        phi1 = np.asarray(payload["phi1"], dtype=np.float64).reshape(p3 + 1, p2 + 1, p1 + 1)
        return CPRCoefficients(degrees=degrees, phi1=phi1, feature_scaling=payload["feature_scaling"])
    except KeyError as e:
        raise ConfigError(f"cpr file missing key {e}") from e


def _affine(values: np.ndarray) -> tuple[float, float]:
    """Return (shift, span) mapping values into [0, 1]; span 1 for a constant axis."""
    lo, hi = float(np.min(values)), float(np.max(values))
    return lo, (hi - lo) if hi > lo else 1.0


def _unscale_matrix(degree: int, shift: float, span: float) -> np.ndarray:
    """T with xhat^J = sum_j T[J, j] x^j for xhat = (x - shift) / span."""
    T = np.zeros((degree + 1, degree + 1))
    for J in range(degree + 1):
        for j in range(J + 1):
            T[J, j] = math.comb(J, j) * (-shift) ** (J - j) / span**J
    return T


def cpr_fit(
    schedules: list[CompensationSchedule], degrees: tuple[int, int, int] = DEFAULT_DEGREES
) -> CPRCoefficients:
    """Least-squares fit over all searched steps (i >= K) of all schedules."""
    if not schedules:
        raise FitError("no schedules to fit")
    p1, p2, p3 = degrees
    if min(degrees) < 0:
        raise FitError(f"degrees must be non-negative, got {degrees}")
    rows = []
    for sched in schedules:
        for i in range(sched.K, sched.nfe):
            rows.append((float(i), float(sched.cfg), float(sched.nfe), float(sched.rho[i])))
    if not rows:
        raise FitError("schedules contain no searched steps (all below K)")
    data = np.array(rows)
    i_vals, cfg_vals, nfe_vals, y = data.T

    for name, vals, need in (
        ("step-index", i_vals, p3 + 1),
        ("CFG", cfg_vals, p2 + 1),
        ("NFE", nfe_vals, p1 + 1),
    ):
        distinct = len(np.unique(vals))
        if distinct < need:
            raise FitError(
                f"{name} axis has {distinct} distinct values, degree {need - 1} needs {need}"
            )

    scal_i = _affine(i_vals)
    scal_cfg = _affine(cfg_vals)
    scal_nfe = _affine(nfe_vals)

    def powers(vals, scal, degree):
        scaled = (vals - scal[0]) / scal[1]
        return np.vander(scaled, degree + 1, increasing=True)

    Pi = powers(i_vals, scal_i, p3)
    Pc = powers(cfg_vals, scal_cfg, p2)
    Pn = powers(nfe_vals, scal_nfe, p1)
    design = np.einsum("nj,nk,nl->njkl", Pi, Pc, Pn).reshape(len(y), -1)

    phi_scaled, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
    if rank < design.shape[1]:
        raise FitError(
            f"design matrix rank {rank} < {design.shape[1]}; feature axes are confounded"
        )
    phi_scaled = phi_scaled.reshape(p3 + 1, p2 + 1, p1 + 1)

    Ti = _unscale_matrix(p3, *scal_i)
    Tc = _unscale_matrix(p2, *scal_cfg)
    Tn = _unscale_matrix(p1, *scal_nfe)
    phi1 = np.einsum("JKL,Jj,Kk,Ll->jkl", phi_scaled, Ti, Tc, Tn)

    scaling = {
        "i": [scal_i[0], scal_i[1]],
        "cfg": [scal_cfg[0], scal_cfg[1]],
        "nfe": [scal_nfe[0], scal_nfe[1]],
    }
    return CPRCoefficients(degrees=tuple(degrees), phi1=phi1, feature_scaling=scaling)


def cpr_predict(
    coeffs: CPRCoefficients,
    nfe: int,
    cfg: float,
    K: int = DEFAULT_K,
    box: tuple[float, float] = (0.0, 2.0),
) -> np.ndarray:
    """Ratios for a full run at (nfe, cfg): ones below K, clamped cascade above."""
    if nfe < 1:
        raise ConfigError(f"nfe must be >= 1, got {nfe}")
    p1, p2, p3 = coeffs.degrees
    # cascade: NFE axis, then CFG axis, then the step polynomial
    nfe_pow = np.array([float(nfe) ** l for l in range(p1 + 1)])
    cfg_pow = np.array([float(cfg) ** k for k in range(p2 + 1)])
    phi2 = coeffs.phi1 @ nfe_pow
    phi3 = phi2 @ cfg_pow
    rho = np.ones(nfe)
    for i in range(K, nfe):
        powers = np.array([float(i) ** j for j in range(p3 + 1)])
        rho[i] = np.clip(phi3 @ powers, box[0], box[1])
    return rho
