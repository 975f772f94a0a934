"""Assemble space-time solutions from a profile and a time flow, and move
between the wave and Madelung (density/velocity) pictures."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from hydronls.errors import ResolutionError, ValidityError
from hydronls.fields import Grid, MadelungFields, WaveField, laplacian, spectral_derivatives
from hydronls.profile import RadialProfile
from hydronls.timeflow import TimeFlow, VirialCoefficients, phase_integral

MIN_POINTS_PER_HALF_WIDTH = 8
DEFAULT_FLOOR = 1e-8


@dataclass(frozen=True)
class SolutionSpec:
    profile: RadialProfile
    flow: TimeFlow
    vc: VirialCoefficients | None = None
    x0: np.ndarray | None = None
    theta: float = 0.0
    gamma1: float = 0.0
    # only used by the Merle-form comparison
    x1: np.ndarray | None = None
    omega: float | None = None
    T_merle: float | None = None
    _half_width: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        p, f = self.profile.params, self.flow
        if f.mode == "profile":
            if p.mode != "radial":
                raise ValueError("profile-mode flows need a radial profile")
            if abs(p.k - f.k_or_k1) > 1e-10 * max(1.0, abs(p.k)):
                raise ValueError(f"profile k={p.k} does not match flow k={f.k_or_k1}")
        else:
            k1 = p.k1 if p.mode == "stark" else 0.0
            if p.mode == "radial" and p.k != 0.0:
                raise ValueError("general flows need a k=0 radial or a linear-potential profile")
            if abs(k1 - f.k_or_k1) > 1e-12 * max(1.0, abs(k1)):
                raise ValueError(f"profile k1={k1} does not match flow k1={f.k_or_k1}")
        if abs(p.gamma0 - f.gamma0) > 1e-12 * max(1.0, abs(p.gamma0)):
            raise ValueError(f"profile gamma0={p.gamma0} does not match flow gamma0={f.gamma0}")
        if self.vc is not None and abs(self.vc.a0 - f.a0) > 1e-12 * max(1.0, abs(f.a0)):
            raise ValueError(f"flow a0={f.a0} does not equal M'(0)/(2M(0))={self.vc.a0}")
        n = p.n
        x0 = np.zeros(n) if self.x0 is None else np.asarray(self.x0, dtype=float).reshape(n)
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "_half_width", _half_max_radius(self.profile))

    @property
    def n(self) -> int:
        return self.profile.params.n


def _half_max_radius(profile: RadialProfile) -> float:
    u = profile.u_values
    above = profile.r_nodes[u >= 0.5 * u.max()]
    if profile.kind == "stark":
        return 0.5 * float(above[-1] - above[0])
    return float(above[-1])


def _check_resolution(spec: SolutionSpec, scale: float, grid: Grid):
    pts = abs(scale) * spec._half_width / grid.spacing
    if pts < MIN_POINTS_PER_HALF_WIDTH:
        raise ResolutionError(f"only {pts:.2f} grid points across the profile half-width "
                              f"(need {MIN_POINTS_PER_HALF_WIDTH})")


def _check_grid(spec: SolutionSpec, grid: Grid):
    if grid.n_dims != spec.n:
        raise ValueError(f"grid is {grid.n_dims}D but the profile is {spec.n}D")


def build_solution(spec: SolutionSpec, t: float, grid: Grid) -> WaveField:
    """Profile-mode solution: a contracted/expanded copy of the profile with
    a quadratic chirp and a time-dependent phase."""
    if spec.flow.mode != "profile":
        return build_general_solution(spec, t, grid)
    _check_grid(spec, grid)
    flow, vc = spec.flow, spec.vc
    if not t < flow.valid_until:
        raise ValidityError(f"t={t} is not before the collapse time {flow.valid_until}")
    if vc is not None:
        M = vc.M(t)
        if M <= 0:
            raise ValidityError(f"M(t) <= 0 at t={t}")
        s = math.sqrt(M / vc.M0)
        a = vc.Mp(t) / (2.0 * M)
        phase = phase_integral(vc, flow.gamma0, t)
    else:
        s, a, phase = flow.scale(t), flow.a(t), flow.gamma(t)
    _check_resolution(spec, s, grid)
    r = grid.radius_from(spec.x0)
    amp = s ** (-spec.n / 2.0) * spec.profile(r / s)
    psi = amp * np.exp(1j * (0.25 * a * r * r + phase + spec.theta))
    return WaveField(grid, psi, t)


def build_general_solution(spec: SolutionSpec, t: float, grid: Grid) -> WaveField:
    """Solution for the velocity field ``V = a x + b Λ`` (``a' + a^2 = 0``)."""
    _check_grid(spec, grid)
    flow = spec.flow
    if flow.mode != "general":
        raise ValueError("build_general_solution needs a general-mode flow")
    s, a, b, gam = flow.scale(t), flow.a(t), flow.b(t), flow.gamma(t)
    d = flow.drift(t)
    _check_resolution(spec, s, grid)
    rel = [x - c for x, c in zip(grid.coords, spec.x0)]
    xi = [xr / s - dc for xr, dc in zip(rel, d)]
    if spec.profile.kind == "stark":
        amp = spec.profile(xi[0])
    else:
        amp = spec.profile(np.sqrt(sum(c * c for c in xi)))
    amp = s ** (-spec.n / 2.0) * amp
    lam_x = sum(lc * xr for lc, xr in zip(flow.lam, rel))
    r2 = sum(xr * xr for xr in rel)
    psi = amp * np.exp(1j * (0.5 * b * lam_x + 0.25 * a * r2 + gam + spec.gamma1 + spec.theta))
    return WaveField(grid, psi, t)


def build(spec: SolutionSpec, t: float, grid: Grid) -> WaveField:
    if spec.flow.mode == "general":
        return build_general_solution(spec, t, grid)
    return build_solution(spec, t, grid)


def build_merle_solution(omega, T, x0, x1, theta, t, grid: Grid,
                         ground: RadialProfile) -> WaveField:
    """Pseudo-conformal blow-up solution built on the ground state ``ground``."""
    if t == T:
        raise ValidityError("the Merle-form solution is singular at t = T")
    n = grid.n_dims
    tau = t - T
    x0 = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).reshape(n)
    x1 = np.zeros(n) if x1 is None else np.asarray(x1, dtype=float).reshape(n)
    scale = abs(tau) / omega
    if scale * _half_max_radius(ground) / grid.spacing < MIN_POINTS_PER_HALF_WIDTH:
        raise ResolutionError("grid does not resolve the Merle-form profile")
    rel = [x - c for x, c in zip(grid.coords, x0)]
    arg = [omega * xr / tau - c for xr, c in zip(rel, x1)]
    r2 = sum(xr * xr for xr in rel)
    amp = (omega / abs(tau)) ** (n / 2.0) * ground(np.sqrt(sum(c * c for c in arg)))
    psi = np.exp(1j * (theta - omega**2 / tau + r2 / (4.0 * tau))) * amp
    return WaveField(grid, psi, t)


def fit_merle_parameters(spec: SolutionSpec, t1: float, t2: float, grid: Grid) -> dict:
    """Recover ``(omega, T, theta)`` of the Merle form from two snapshots of a
    ground-state ``k = 0`` solution by matching peak amplitudes, then the
    global phase at the centre."""
    n = spec.n
    peak0 = spec.profile(np.array([0.0]))[0]
    y = []
    for t in (t1, t2):
        psi = build_solution(spec, t, grid)
        y.append((peak0 / np.abs(psi.values).max()) ** (2.0 / n))
    slope = (y[1] - y[0]) / (t2 - t1)
    omega = -1.0 / slope
    T = t1 + y[0] * omega
    psi = build_solution(spec, t1, grid)
    trial = build_merle_solution(omega, T, spec.x0, None, 0.0, t1, grid, spec.profile)
    centre = np.unravel_index(np.argmax(np.abs(psi.values)), grid.shape)
    theta = float(np.angle(psi.values[centre] / trial.values[centre]))
    out = {"omega": omega, "T": T, "theta": theta}
    if spec.vc is not None and spec.vc.H > 0:
        vc = spec.vc
        out["literal_omega"] = math.sqrt(vc.M0 / vc.H)
        out["literal_T"] = -vc.M0p / (2.0 * vc.H)
        out["omega_ratio"] = omega / out["literal_omega"]
        out["T_ratio"] = T / out["literal_T"]
    return out


# -- Madelung transform -----------------------------------------------------


def madelung_decompose(psi: WaveField, floor: float = DEFAULT_FLOOR) -> MadelungFields:
    """Density, phase and velocity ``V = 2 Im(conj(psi) grad psi) / rho``.

    The velocity is only formed where ``rho >= floor * max(rho)`` and is NaN
    elsewhere.  The phase is kept at every nonzero sample so that composing
    the result reproduces ``psi``.
    """
    if floor <= 0:
        raise ValueError("floor must be positive")
    rho = psi.density
    peak = rho.max()
    if peak == 0.0:
        raise ValueError("cannot decompose an all-zero field")
    mask = rho >= floor * peak
    grad, _ = spectral_derivatives(psi)
    conj = np.conj(psi.values)
    vel = []
    for g in grad:
        v = np.full(rho.shape, np.nan)
        v[mask] = 2.0 * np.imag(conj[mask] * g[mask]) / rho[mask]
        vel.append(v)
    phase = np.where(rho > 0, np.angle(psi.values), np.nan)
    return MadelungFields(psi.grid, rho, tuple(vel), mask, phase)


def madelung_compose(rho, phi, grid: Grid, time_tag: float = 0.0) -> WaveField:
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0):
        raise ValueError("density has negative entries")
    phi = np.nan_to_num(np.asarray(phi, dtype=float))
    return WaveField(grid, np.sqrt(rho) * np.exp(1j * phi), time_tag)


# -- NLS defect -------------------------------------------------------------


def _fd_laplacian(values: np.ndarray, grid: Grid) -> np.ndarray:
    # fourth-order periodic stencil; a derivative jump only pollutes its 2-node reach
    h2 = grid.spacing**2
    out = np.zeros_like(values)
    for ax in range(grid.n_dims):
        r = lambda k: np.roll(values, k, axis=ax)  # noqa: E731
        out += (-r(2) + 16 * r(1) - 30 * values + 16 * r(-1) - r(-2)) / (12 * h2)
    return out


def _seam_distance(spec: SolutionSpec, t: float, grid: Grid) -> np.ndarray:
    """Distance of every sample from the moving support boundary."""
    flow = spec.flow
    s = flow.scale(t)
    if spec.profile.kind == "stark":
        x = grid.coords[0] - spec.x0[0]
        centre = s * flow.drift(t)[0]
        L = spec.profile.support_radius
        return np.minimum(np.abs(x - centre + s * L), np.abs(x - centre - s * L))
    if flow.mode == "general":
        rel = [x - c - s * d for x, c, d in zip(grid.coords, spec.x0, flow.drift(t))]
        r = np.sqrt(sum(c * c for c in rel))
    else:
        r = grid.radius_from(spec.x0)
    return np.abs(r - s * spec.profile.support_radius)


def nls_residual(spec: SolutionSpec, t: float, dt_fd: float, grid: Grid,
                 collar: int | None = None) -> float:
    """Max modulus of ``i psi_t + Δpsi + |psi|^σ psi`` relative to ``max|psi|``.

    Centred time difference.  Smooth solutions use the spectral Laplacian.
    Compactly supported profiles have a derivative jump at their support
    boundary, so they use a fourth-order stencil and drop the samples within
    ``collar`` nodes of that boundary (default 2).
    """
    sigma = 4.0 / spec.n
    minus = build(spec, t - dt_fd, grid).values
    psi = build(spec, t, grid).values
    plus = build(spec, t + dt_fd, grid).values
    compact = spec.profile.kind in ("dirichlet", "stark")
    lap = _fd_laplacian(psi, grid) if compact else laplacian(psi, grid)
    defect = 1j * (plus - minus) / (2.0 * dt_fd) + lap + np.abs(psi) ** sigma * psi
    keep = np.ones(grid.shape, dtype=bool)
    if compact:
        width = (2 if collar is None else collar) * grid.spacing
        keep = _seam_distance(spec, t, grid) > width * (1 + 1e-9)
    return float(np.abs(defect[keep]).max() / np.abs(psi).max())
