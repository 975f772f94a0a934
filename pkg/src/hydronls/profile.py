"""Shooting solvers for the stationary amplitude equations.

Three boundary-value problems are covered, all with ``sigma = 4/n``:

* ground state:  ``u'' + (n-1)/r u' + u^(sigma+1) - u = 0`` on ``[0, inf)``
* Dirichlet ball: ``u'' + (n-1)/r u' + u^(sigma+1) = (k r^2 + gamma0) u``,
  ``u(rho) = 0``
* linear potential (1D): ``u'' + u^5 = (k1 x + gamma0) u`` on ``[-L, L]``
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.integrate import simpson, solve_ivp
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq
from scipy.special import kve

from hydronls.errors import ShootingError

DEFAULT_DR = 1e-3
_SPHERE_AREA = {1: 2.0, 2: 2.0 * math.pi, 3: 4.0 * math.pi}


@dataclass(frozen=True)
class ProfileParams:
    n: int
    k: float = 0.0
    gamma0: float = 1.0
    k1: float = 0.0
    lambda_dir: float = 1.0
    mode: str = "radial"  # "radial" (k-mode) or "stark" (k1-mode)

    def __post_init__(self):
        if self.n not in (1, 2, 3):
            raise ValueError(f"dimension must be 1, 2 or 3, got {self.n}")
        if self.mode not in ("radial", "stark"):
            raise ValueError(f"unknown profile mode {self.mode!r}")
        if self.mode == "radial" and self.k1 != 0.0:
            raise ValueError("radial profiles take k, not k1")
        if self.mode == "stark":
            if self.n != 1:
                raise ValueError("linear-potential profiles are 1D only")
            if self.k != 0.0:
                raise ValueError("linear-potential profiles take k1, not k")
            if abs(abs(self.lambda_dir) - 1.0) > 1e-12:
                raise ValueError("lambda_dir must be a unit vector (+1 or -1 in 1D)")

    @property
    def sigma(self) -> float:
        return 4.0 / self.n

    def potential(self, r):
        if self.mode == "stark":
            return self.k1 * self.lambda_dir * r + self.gamma0
        return self.k * r * r + self.gamma0


@dataclass(frozen=True)
class RadialProfile:
    """A sampled solution of one of the amplitude equations.

    For ``kind == "stark"`` the nodes are signed positions on ``[-L, L]``;
    otherwise they are radii starting at 0.
    """

    params: ProfileParams
    r_nodes: np.ndarray
    u_values: np.ndarray
    du_values: np.ndarray
    u_center: float
    support_radius: float
    kind: str
    tail_start: float = math.inf
    _spline: CubicSpline = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind == "stark":
            spline = CubicSpline(self.r_nodes, self.u_values)
        else:
            spline = CubicSpline(self.r_nodes, self.u_values, bc_type=((1, 0.0), "not-a-knot"))
        object.__setattr__(self, "_spline", spline)

    @property
    def spacing(self) -> float:
        return float(self.r_nodes[1] - self.r_nodes[0])

    @property
    def peak(self) -> float:
        return float(np.max(self.u_values))

    def __call__(self, r) -> np.ndarray:
        """Evaluate the profile; zero outside its support."""
        r = np.asarray(r, dtype=float)
        out = np.zeros_like(r)
        lo, hi = self.r_nodes[0], self.r_nodes[-1]
        if self.kind != "stark":
            r = np.abs(r)
        inside = (r >= lo) & (r <= hi)
        out[inside] = self._spline(r[inside])
        if self.kind == "ground":
            far = r > hi
            out[far] = _decay_tail(self.params.n, r[far], hi, self.u_values[-1])
        return np.maximum(out, 0.0)

    def l2_norm_sq(self) -> float:
        return profile_energy(self)["mass"]

    def l2_norm(self) -> float:
        return math.sqrt(self.l2_norm_sq())

    def second_moment(self) -> float:
        """``int |x|^2 u^2 dx`` about the profile centre (radial kinds)."""
        w = _weights(self)
        return float(simpson(w * self.r_nodes**2 * self.u_values**2, x=self.r_nodes))

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "params": asdict(self.params),
            "u_center": self.u_center,
            "support_radius": None if math.isinf(self.support_radius) else self.support_radius,
            "residual": profile_residual(self),
            "n_nodes": int(self.r_nodes.size),
        }


# -- ODE machinery ----------------------------------------------------------


def _rtol(tol: float) -> float:
    return max(tol / 100.0, 2.5e-14)


def _bvp_rtol(tol: float) -> float:
    # first-zero positions are exponentially sensitive to integration error
    return max(min(tol / 100.0, 1e-13), 2.5e-14)


def _radial_rhs(params: ProfileParams):
    n, sigma = params.n, params.sigma

    def rhs(r, y):
        u, du = y
        source = (params.potential(r) - abs(u) ** sigma) * u
        if r == 0.0:
            return [du, source / n]
        return [du, source - (n - 1) * du / r]

    return rhs


def _stark_rhs(params: ProfileParams):
    def rhs(x, y):
        u, du = y
        return [du, (params.potential(x) - u**4) * u]

    return rhs


def _decay_tail(n: int, r, r_match: float, u_match: float):
    # decaying solution of the linearised radial equation: r^{-(n-2)/2} K_{|n-2|/2}(r)
    nu = abs(n - 2) / 2.0
    p = (n - 2) / 2.0
    r = np.asarray(r, dtype=float)
    shape = (r / r_match) ** (-p) * kve(nu, r) / kve(nu, r_match)
    return u_match * shape * np.exp(-(r - r_match))


def _first_zero(rhs, y0, start, stop, rtol, atol, blowup, monotone=False):
    """Integrate until ``u`` first crosses zero downward; return its position
    or ``inf`` if it stays positive (or runs away) on ``[start, stop]``.

    With ``monotone`` an upturn of ``u`` also counts as "no zero".
    """

    def hits_zero(r, y):
        return y[0]

    hits_zero.terminal = True
    hits_zero.direction = -1

    def runaway(r, y):
        return blowup - y[0]

    runaway.terminal = True
    events = [hits_zero, runaway]
    if monotone:
        def upturn(r, y):
            return y[1]

        upturn.terminal = True
        upturn.direction = 1
        events.append(upturn)

    sol = solve_ivp(rhs, (start, stop), y0, method="DOP853", rtol=rtol, atol=atol,
                    events=events)
    if sol.t_events[0].size:
        return float(sol.t_events[0][0])
    return math.inf


# -- ground state -----------------------------------------------------------


def _ground_outcome(u0, rhs, r_cap, rtol, atol):
    """+1 if the trajectory crosses zero (u0 too large), -1 if it turns
    back up or stalls (u0 too small)."""
    if u0 <= 1.0:
        return -1

    def cross(r, y):
        return y[0]

    cross.terminal = True
    cross.direction = -1

    def turn(r, y):
        return y[1]

    turn.terminal = True
    turn.direction = 1

    sol = solve_ivp(rhs, (0.0, r_cap), [u0, 0.0], method="DOP853", rtol=rtol, atol=atol,
                    events=(cross, turn))
    if sol.t_events[0].size:
        return 1
    return -1


def ground_state(n: int, tol: float = 1e-10, dr: float = DEFAULT_DR,
                 r_cap: float = 40.0, max_iter: int = 200) -> RadialProfile:
    """Positive, radially decreasing solution of ``Δu + u^(σ+1) - u = 0``.

    ``u(0)`` is bisected between trajectories that cross zero and ones that
    turn back upward.  Past the radius where the two bracketing trajectories
    start to separate, the profile is continued by the exact decaying
    solution of the linearised equation.
    """
    if not 1e-12 <= tol <= 1e-4:
        raise ValueError(f"tol must lie in [1e-12, 1e-4], got {tol}")
    params = ProfileParams(n=n, k=0.0, gamma0=1.0)
    rhs = _radial_rhs(params)
    rtol = _rtol(tol)
    atol = rtol * 1e-8

    lo, hi = 1.0, 2.0
    while _ground_outcome(hi, rhs, r_cap, rtol, atol) < 0:
        lo, hi = hi, 2.0 * hi
        if hi > 1e3:
            raise ShootingError("no overshooting u(0) found below 1e3")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if _ground_outcome(mid, rhs, r_cap, rtol, atol) > 0:
            hi = mid
        else:
            lo = mid
    else:
        raise ShootingError(f"bisection did not converge in {max_iter} iterations")

    r_grid = np.arange(0.0, r_cap + 0.5 * dr, dr)
    traj = []
    for u0 in (lo, hi):
        sol = solve_ivp(rhs, (0.0, r_cap), [u0, 0.0], method="DOP853", rtol=rtol,
                        atol=atol, dense_output=True)
        traj.append(sol.sol(r_grid))
    u_lo, u_hi = traj[0][0], traj[1][0]
    ref = np.abs(u_lo)
    trusted = (np.abs(u_hi - u_lo) <= 1e-6 * ref) & (u_lo > 0) & (traj[0][1] <= 0)
    trusted[0] = True
    bad = np.flatnonzero(~trusted)
    i_sep = bad[0] - 1 if bad.size else r_grid.size - 1
    small = np.flatnonzero(u_lo <= 1e-8 * lo)
    i_small = small[0] if small.size else r_grid.size - 1
    i_match = int(min(i_sep, i_small))
    if r_grid[i_match] < 3.0:
        raise ShootingError(f"shooting trajectories separate already at r={r_grid[i_match]:.3g}")

    r_match = r_grid[i_match]
    u = u_lo.copy()
    du = traj[0][1].copy()
    beyond = r_grid > r_match
    u[beyond] = _decay_tail(n, r_grid[beyond], r_match, u_lo[i_match])
    # derivative of the tail by its own formula, centred difference is adequate here
    eps = 1e-6
    du[beyond] = (_decay_tail(n, r_grid[beyond] + eps, r_match, u_lo[i_match])
                  - _decay_tail(n, r_grid[beyond] - eps, r_match, u_lo[i_match])) / (2 * eps)
    return RadialProfile(params, r_grid, u, du, float(lo), math.inf, "ground", tail_start=r_match)


# -- Dirichlet problems -----------------------------------------------------


def _scan_and_solve(zero_of, ball, lo, hi, count, what, slack):
    """Find the first scanned shooting parameter whose first zero lies
    inside ``ball`` and refine the crossing with Brent's method."""
    cap = 1.5 * ball
    scan = np.geomspace(lo, hi, count)
    z_prev = None
    for i, s in enumerate(scan):
        z = zero_of(s)
        if z <= ball:
            if i == 0:
                raise ShootingError(
                    f"no positive interior solution: the first zero already lies inside the "
                    f"domain at the smallest scanned {what} ({lo:.3g}); scanned [{lo:.3g}, {hi:.3g}]")
            a, b = scan[i - 1], s
            break
        z_prev = z
    else:
        raise ShootingError(
            f"no positive interior solution found: scanned {what} in [{lo:.3g}, {hi:.3g}], "
            f"first zero never reached {ball:.6g}")

    def f(s):
        return min(zero_of(s), cap) - ball

    root = brentq(f, a, b, xtol=1e-300, rtol=1e-15, maxiter=500)
    # stay on the side whose first zero is not inside the domain
    for _ in range(64):
        if not (zero_of(root) < ball and root > a):
            break
        root = np.nextafter(root, a)
    z = zero_of(root)
    if not abs(z - ball) <= slack:
        raise ShootingError(f"first zero could not be driven to {ball:.6g} (got {z:.6g}, "
                            f"previous scan point gave {z_prev})")
    return root


def dirichlet_profile(n: int, k: float, gamma0: float, ball_radius: float,
                      tol: float = 1e-8, dr: float = DEFAULT_DR,
                      scan=None) -> RadialProfile:
    """Positive radial solution on a ball with zero boundary data.

    The first ``u(0)`` (scanning upward) whose first zero sits exactly on
    ``ball_radius`` is returned.  By default the scan starts where
    ``u''(0) = 0``, i.e. it only visits centrally peaked profiles; pass
    ``scan=(lo, hi, count)`` to override.
    """
    if ball_radius <= 0:
        raise ValueError("ball_radius must be positive")
    if k > 0:
        raise ValueError("Dirichlet profiles require k <= 0")
    params = ProfileParams(n=n, k=float(k), gamma0=float(gamma0))
    if scan is None:
        lo = gamma0 ** (1.0 / params.sigma) * (1 + 1e-9) if gamma0 > 0 else 1e-4
        scan = (lo, max(50.0, 20.0 * lo), 80)
    rhs = _radial_rhs(params)
    rtol = _bvp_rtol(tol)
    cap = 1.5 * ball_radius

    def atol(u0):
        # near u = const equilibria u'' is pure round-off; an absolute floor
        # far below it would collapse the step size
        return rtol * 1e-3 * u0

    def zero_of(u0):
        return _first_zero(rhs, [u0, 0.0], 0.0, cap, rtol, atol(u0),
                           blowup=1e3 * max(u0, 1.0), monotone=True)

    u0 = _scan_and_solve(zero_of, ball_radius, scan[0], scan[1], scan[2], "u(0)",
                         slack=max(1e-6 * ball_radius, dr))
    count = max(int(round(ball_radius / dr)), 8) + 1
    nodes = np.linspace(0.0, ball_radius, count)
    sol = solve_ivp(rhs, (0.0, ball_radius), [u0, 0.0], method="DOP853", rtol=rtol,
                    atol=atol(u0), t_eval=nodes)
    u, du = sol.y
    # the shot misses the wall by a tiny amount; remove it with c*r^2, which
    # keeps u'(0) = 0 and perturbs the equation only by a constant
    miss = u[-1]
    u = u - miss * (nodes / ball_radius) ** 2
    du = du - 2.0 * miss * nodes / ball_radius**2
    u[-1] = 0.0
    if np.min(u[:-1]) <= 0:
        raise ShootingError("solution is not positive inside the ball")
    return RadialProfile(params, nodes, u, du, float(u0),
                         float(ball_radius), "dirichlet")


def stark_profile_1d(k1: float, gamma0: float, half_interval: float, tol: float = 1e-8,
                     dr: float = DEFAULT_DR, lambda_dir: float = 1.0,
                     scan=(1e-14, 1e2, 80)) -> RadialProfile:
    """Positive solution of ``u'' + u^5 = (k1 x + gamma0) u`` vanishing at
    ``x = ±half_interval``; shooting on the slope at the left end."""
    if half_interval <= 0:
        raise ValueError("half_interval must be positive")
    params = ProfileParams(n=1, k1=float(k1), gamma0=float(gamma0), lambda_dir=lambda_dir,
                           mode="stark")
    rhs = _stark_rhs(params)
    rtol = _bvp_rtol(tol)
    atol = rtol * 1e-8
    L = float(half_interval)
    cap = 1.5 * (2 * L)

    def zero_of(p):
        # measured from the left end so the target is the interval length
        return _first_zero(rhs, [0.0, p], -L, -L + cap, rtol, atol, blowup=1e3) + L

    slope = _scan_and_solve(zero_of, 2 * L, scan[0], scan[1], scan[2], "left slope",
                            slack=max(2e-6 * L, dr))
    count = max(int(round(2 * L / dr)), 8) + 1
    sol = solve_ivp(rhs, (-L, L), [0.0, slope], method="DOP853", rtol=rtol, atol=atol,
                    t_eval=np.linspace(-L, L, count))
    u, du = sol.y
    x = sol.t
    miss = u[-1]
    u = u - miss * (x + L) / (2 * L)
    du = du - miss / (2 * L)
    u[0] = u[-1] = 0.0
    if np.min(u[1:-1]) <= 0:
        raise ShootingError("solution is not positive inside the interval")
    return RadialProfile(params, np.linspace(-L, L, count), u, du, float(np.max(u)), L, "stark")


# -- checks -----------------------------------------------------------------


def profile_residual(profile: RadialProfile) -> float:
    """Max absolute defect of the governing ODE at interior nodes, using
    fourth-order central differences on the (uniform) node set."""
    r, u = profile.r_nodes, profile.u_values
    if r.size < 5:
        raise ValueError("need at least 5 nodes")
    h = r[1] - r[0]
    p = profile.params
    ui = u[2:-2]
    d2 = (-u[:-4] + 16 * u[1:-3] - 30 * ui + 16 * u[3:-1] - u[4:]) / (12 * h * h)
    ri = r[2:-2]
    defect = d2 + np.abs(ui) ** p.sigma * ui - p.potential(ri) * ui
    if profile.kind != "stark" and p.n > 1:
        d1 = (u[:-4] - 8 * u[1:-3] + 8 * u[3:-1] - u[4:]) / (12 * h)
        defect = defect + (p.n - 1) * d1 / ri
    return float(np.max(np.abs(defect)))


def _weights(profile: RadialProfile) -> np.ndarray:
    if profile.kind == "stark":
        return np.ones_like(profile.r_nodes)
    n = profile.params.n
    return _SPHERE_AREA[n] * profile.r_nodes ** (n - 1)


def profile_energy(profile: RadialProfile) -> dict:
    """Whole-space integrals of the profile: mass, ``|grad u|^2``, the
    ``L^{σ+2}`` term and the energy ``H = grad - 2/(σ+2) * pot``."""
    r, u, du = profile.r_nodes, profile.u_values, profile.du_values
    sigma = profile.params.sigma
    w = _weights(profile)
    mass = simpson(w * u**2, x=r)
    grad = simpson(w * du**2, x=r)
    pot = simpson(w * np.abs(u) ** (sigma + 2), x=r)
    return {
        "mass": float(mass),
        "grad_sq": float(grad),
        "pot": float(pot),
        "H": float(grad - 2.0 / (sigma + 2.0) * pot),
    }


def export_profile(profile: RadialProfile, stem) -> tuple[Path, Path]:
    """Write ``<stem>.csv`` (columns r,u) and ``<stem>.json``."""
    stem = Path(stem)
    csv_path, json_path = stem.with_suffix(".csv"), stem.with_suffix(".json")
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["r", "u"])
        for ri, ui in zip(profile.r_nodes, profile.u_values):
            w.writerow([repr(float(ri)), repr(float(ui))])
    with open(json_path, "w") as fh:
        json.dump(profile.to_json(), fh, indent=2, sort_keys=True)
    return csv_path, json_path
