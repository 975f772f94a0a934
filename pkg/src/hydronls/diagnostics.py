"""Integral functionals of discrete fields and rate-exponent fits."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from hydronls.constructor import madelung_decompose
from hydronls.errors import ContainmentError
from hydronls.fields import WaveField, gradient_real, quadrature_integrate, spectral_derivatives

FUNCTIONAL_FLOOR = 1e-14


@dataclass(frozen=True)
class FunctionalReport:
    N: float
    P: tuple[float, ...]
    P_tilde: tuple[float, ...]
    H: float
    H_hydro: float
    M: float
    Mp: float
    Q: float
    grad_norm_sq: float
    amp_max: float
    lam: tuple[float, ...]

    def to_json(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(self).items()}


def containment_ratio(psi: WaveField) -> float:
    """Largest boundary density as a fraction of the peak density."""
    rho = psi.density
    peak = rho.max()
    if peak == 0.0:
        return 0.0
    return float(rho[psi.grid.boundary_mask()].max() / peak)


def functionals(psi: WaveField, lam=None, floor: float = FUNCTIONAL_FLOOR,
                containment: float = 1e-10) -> FunctionalReport:
    """Mass, momenta, energy (both forms), second moment and its rate,
    ``Q_Λ``, ``||grad psi||^2`` and ``max|psi|`` of one snapshot."""
    g = psi.grid
    n = g.n_dims
    sigma = 4.0 / n
    lam = np.zeros(n) if lam is None else np.asarray(lam, dtype=float).reshape(n)
    ratio = containment_ratio(psi)
    if ratio >= containment:
        raise ContainmentError(f"boundary density ratio {ratio:.3g} exceeds {containment:.3g}")

    rho = psi.density
    grad, _ = spectral_derivatives(psi)
    conj = np.conj(psi.values)
    integ = lambda f: quadrature_integrate(f, g)  # noqa: E731

    N = integ(rho)
    grad_sq = integ(sum(np.abs(d) ** 2 for d in grad))
    pot = integ(rho ** (sigma / 2 + 1))
    H = grad_sq - 2.0 / (sigma + 2) * pot
    P = tuple(-integ(np.imag(conj * d)) for d in grad)

    md = madelung_decompose(psi, floor)
    m = md.mask
    P_tilde = tuple(integ(np.where(m, rho * np.nan_to_num(v), 0.0)) for v in md.velocity)
    kinetic = integ(np.where(m, rho * sum(np.nan_to_num(v) ** 2 for v in md.velocity), 0.0)) / 4
    grad_amp = gradient_real(np.sqrt(rho), g)
    H_hydro = kinetic + integ(sum(d * d for d in grad_amp)) - 2.0 / (sigma + 2) * pot

    x = g.coords
    M = integ(rho * sum(xi * xi for xi in x))
    x_dot_v = sum(xi * np.nan_to_num(v) for xi, v in zip(x, md.velocity))
    Mp = 2.0 * integ(np.where(m, x_dot_v * rho, 0.0))
    Q = integ(sum(li * xi for li, xi in zip(lam, x)) * rho)
    return FunctionalReport(N, P, P_tilde, H, H_hydro, M, Mp, Q, grad_sq,
                            float(np.abs(psi.values).max()), tuple(lam))


def hoelder_check(report: FunctionalReport, lam=None) -> bool:
    lam = np.asarray(report.lam if lam is None else lam, dtype=float)
    return report.Q**2 <= float(lam @ lam) * report.N * report.M + 1e-12


def mass_threshold_check(report: FunctionalReport, ground_state_norm: float,
                         rtol: float = 1e-6) -> str:
    """Compare ``||psi||_2`` with the ground-state norm ``||R||_2``."""
    norm = math.sqrt(report.N)
    if abs(norm - ground_state_norm) <= rtol * ground_state_norm:
        return "equal"
    return "below" if norm < ground_state_norm else "above"


@dataclass(frozen=True)
class RateFit:
    exponent: float
    intercept: float
    r_squared: float
    window: tuple[float, float]

    def to_json(self) -> dict:
        return asdict(self)


def rate_sample_times(T: float, window=(0.5, 0.9), count: int = 32) -> np.ndarray:
    """``count`` times in ``(window[0] T, window[1] T)`` log-spaced in ``T - t``."""
    gaps = np.geomspace((1 - window[0]) * T, (1 - window[1]) * T, count)
    return T - gaps


def fit_rate(series, T: float, window=None) -> RateFit:
    """Least-squares slope of ``log(value)`` against ``-log(T - t)``."""
    data = np.asarray(series, dtype=float)
    t, v = data[:, 0], data[:, 1]
    lo, hi = (0.5 * T, 0.9 * T) if window is None else window
    sel = (t >= lo) & (t <= hi)
    t, v = t[sel], v[sel]
    if t.size < 8:
        raise ValueError(f"need at least 8 samples in the window, got {t.size}")
    if np.any(t >= T):
        raise ValueError("all sample times must precede T")
    if np.any(v <= 0):
        raise ValueError("rate fits need positive values")
    X, Y = -np.log(T - t), np.log(v)
    if np.ptp(X) == 0:
        raise ValueError("degenerate window")
    slope, intercept = np.polyfit(X, Y, 1)
    resid = Y - (slope * X + intercept)
    ss_tot = float(np.sum((Y - Y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return RateFit(float(slope), float(intercept), min(max(r2, 0.0), 1.0), (float(lo), float(hi)))
