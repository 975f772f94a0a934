"""Strang split-step Fourier integrator for ``i psi_t + Δpsi + |psi|^σ psi = 0``.

This is the independent oracle: it knows nothing about profiles or time
flows and only ever sees a sampled initial field.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from hydronls.fields import WaveField


@dataclass(frozen=True)
class EvolveConfig:
    dt: float
    t_end: float
    sigma: float | None = None  # defaults to 4/n
    snapshot_times: tuple[float, ...] = ()
    containment_threshold: float = 1e-8
    amp_ceiling: float = 1e6
    nonlinear: bool = True

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        times = tuple(float(t) for t in self.snapshot_times)
        if list(times) != sorted(times):
            raise ValueError("snapshot_times must be sorted")
        object.__setattr__(self, "snapshot_times", times)


@dataclass
class EvolveResult:
    snapshots: list[WaveField]
    reason: str  # "completed", "amp_ceiling" or "containment_lost"
    t_final: float
    steps: int
    final: WaveField = field(repr=False)

    def termination_record(self) -> dict:
        return {"reason": self.reason, "t_final": self.t_final, "steps": self.steps,
                "snapshot_times": [s.time_tag for s in self.snapshots]}


def evolve(psi0: WaveField, cfg: EvolveConfig) -> EvolveResult:
    """Integrate from ``psi0.time_tag`` to ``cfg.t_end`` (either direction).

    Each step is half a nonlinear phase rotation, an exact linear step in
    Fourier space, and another half rotation.  Snapshot times are hit
    exactly by shortening the steps of the interval leading to them.
    """
    g = psi0.grid
    sigma = 4.0 / g.n_dims if cfg.sigma is None else cfg.sigma
    if abs(cfg.dt) > g.spacing**2:
        warnings.warn(f"dt={cfg.dt} exceeds spacing^2={g.spacing**2:.3g}", stacklevel=2)
    t0 = psi0.time_tag
    direction = 1.0 if cfg.t_end >= t0 else -1.0
    lo, hi = sorted((t0, cfg.t_end))
    targets = [t for t in cfg.snapshot_times if lo - 1e-12 <= t <= hi + 1e-12]
    if direction < 0:
        targets = targets[::-1]
    if not targets or targets[-1] != cfg.t_end:
        targets.append(cfg.t_end)
    wanted = set(cfg.snapshot_times)

    axes = tuple(range(g.n_dims))
    boundary = g.boundary_mask()
    k2 = g.k_squared
    psi = np.array(psi0.values, dtype=complex)
    t = t0
    steps = 0
    snaps: list[WaveField] = []
    reason = "completed"
    for target in targets:
        span = target - t
        m = math.ceil(abs(span) / cfg.dt - 1e-9) if span != 0 else 0
        if m:
            h = span / m
            lin = np.exp(-1j * k2 * h)
            for _ in range(m):
                if cfg.nonlinear:
                    psi *= np.exp(0.5j * h * np.abs(psi) ** sigma)
                psi = np.fft.ifftn(lin * np.fft.fftn(psi, axes=axes), axes=axes)
                if cfg.nonlinear:
                    psi *= np.exp(0.5j * h * np.abs(psi) ** sigma)
                steps += 1
                t += h
                rho = np.abs(psi) ** 2
                peak = rho.max()
                if math.sqrt(peak) > cfg.amp_ceiling:
                    reason = "amp_ceiling"
                    break
                if rho[boundary].max() > cfg.containment_threshold * peak:
                    reason = "containment_lost"
                    break
            t = target if reason == "completed" else t
        if reason != "completed":
            break
        if target in wanted:
            snaps.append(WaveField(g, psi.copy(), target))
    return EvolveResult(snaps, reason, t, steps, WaveField(g, psi, t))


def compare(analytic: Callable[[float], WaveField], snapshots) -> list[float]:
    """Relative L2 error of each numeric snapshot against ``analytic(t)``."""
    errs = []
    for snap in snapshots:
        ref = analytic(snap.time_tag)
        if ref.grid != snap.grid:
            raise ValueError("analytic and numeric grids differ")
        if abs(ref.time_tag - snap.time_tag) > 1e-12:
            raise ValueError("analytic and numeric times differ")
        diff = np.linalg.norm(snap.values - ref.values)
        errs.append(float(diff / np.linalg.norm(ref.values)))
    return errs
