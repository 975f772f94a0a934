"""Temporal skeleton of the self-similar solutions.

The second moment ``M(t) = ∫|x|^2 |psi|^2`` is an exact quadratic,
``M(t) = 4 H t^2 + M'(0) t + M(0)``, and everything time-dependent in the
profile-mode construction follows from it: ``a = M'/(2M)``, the scale
factor ``s = sqrt(M/M(0))`` and the phase ``gamma0 ∫ M(0)/M``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.integrate import quad, solve_ivp

from hydronls.errors import ValidityError

PHASE_ABS_TOL = 1e-10
_K_ZERO_RTOL = 1e-12


@dataclass(frozen=True)
class VirialCoefficients:
    H: float
    M0: float
    M0p: float
    N: float

    def __post_init__(self):
        if not self.M0 > 0:
            raise ValueError(f"M(0) must be positive, got {self.M0}")
        if not self.N > 0:
            raise ValueError(f"N must be positive, got {self.N}")

    @property
    def K(self) -> float:
        return 16.0 * self.H * self.M0 - self.M0p**2

    @property
    def k(self) -> float:
        return self.K / (16.0 * self.M0**2)

    @property
    def a0(self) -> float:
        return self.M0p / (2.0 * self.M0)

    def k_is_zero(self) -> bool:
        scale = max(16.0 * abs(self.H) * self.M0, self.M0p**2)
        return abs(self.K) <= _K_ZERO_RTOL * scale

    def M(self, t):
        return 4.0 * self.H * t * t + self.M0p * t + self.M0

    def Mp(self, t):
        return 8.0 * self.H * t + self.M0p

    def positive_roots(self) -> list[float]:
        """Positive roots of ``M(t)``, ascending."""
        a, b, c = 4.0 * self.H, self.M0p, self.M0
        if a == 0.0:
            roots = [] if b == 0.0 else [-c / b]
        else:
            disc = b * b - 4.0 * a * c
            if self.k_is_zero():
                disc = 0.0
            if disc < 0:
                roots = []
            elif disc == 0:
                roots = [-b / (2.0 * a)]
            else:
                q = -0.5 * (b + math.copysign(math.sqrt(disc), b if b != 0 else 1.0))
                roots = [q / a, c / q]
        return sorted(r for r in roots if r > 0)

    def first_root(self) -> float:
        roots = self.positive_roots()
        return roots[0] if roots else math.inf


def virial_coefficients(H: float, M0: float, M0p: float, N: float) -> VirialCoefficients:
    return VirialCoefficients(float(H), float(M0), float(M0p), float(N))


def virial_from_flow(a0: float, k: float, M0: float, N: float) -> VirialCoefficients:
    """Coefficients of a profile-mode solution with chirp ``a0`` and
    separation constant ``k`` (``H = M0 (k + a0^2/4)``, ``M'(0) = 2 a0 M0``)."""
    return VirialCoefficients(M0 * (k + 0.25 * a0 * a0), M0, 2.0 * a0 * M0, N)


def a_closed_form(vc: VirialCoefficients, t: float) -> float:
    M = vc.M(t)
    if M == 0.0:
        raise ValidityError(f"M vanishes at t={t}")
    return vc.Mp(t) / (2.0 * M)


# -- ODE route --------------------------------------------------------------


@dataclass(frozen=True)
class ATrajectory:
    t: np.ndarray
    a: np.ndarray
    E: np.ndarray
    singular: bool
    t_stop: float
    _dense: Callable = field(repr=False)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t > self.t_stop):
            raise ValidityError(f"trajectory only reaches t={self.t_stop}")
        return self._dense(t)[0]


def integrate_a_ode(a0: float, k: float, t_end: float, tol: float = 1e-10) -> ATrajectory:
    """Integrate ``a' + a^2 = 4k exp(-4∫a)`` as the autonomous pair
    ``a' = 4k E^2 - a^2``, ``E' = -2 a E`` with ``E = exp(-2∫a)``.

    Integration stops (``singular=True``) once ``|a|`` exceeds ``1/tol``.
    """
    if not 1e-12 <= tol <= 1e-6:
        raise ValueError(f"tol must lie in [1e-12, 1e-6], got {tol}")

    def rhs(t, y):
        a, E = y
        return [4.0 * k * E * E - a * a, -2.0 * a * E]

    def blowup(t, y):
        return 1.0 / tol - abs(y[0])

    blowup.terminal = True
    sol = solve_ivp(rhs, (0.0, t_end), [a0, 1.0], method="DOP853", rtol=tol,
                    atol=tol * 1e-3, events=blowup, dense_output=True)
    singular = bool(sol.t_events[0].size)
    return ATrajectory(sol.t, sol.y[0], sol.y[1], singular, float(sol.t[-1]), sol.sol)


# -- blow-up classification -------------------------------------------------


@dataclass(frozen=True)
class BlowupReport:
    regime: str
    T: float | None
    paper_T: float | None
    amplitude_exponent: float | None
    gradient_exponent: float | None
    K: float
    k: float

    @property
    def paper_T_discrepancy(self) -> float | None:
        """Relative gap between the literal case formula and the true root."""
        if self.T is None or self.paper_T is None:
            return None
        return abs(self.paper_T - self.T) / self.T

    def to_json(self) -> dict:
        gap = self.paper_T_discrepancy
        return {
            "regime": self.regime,
            "T": self.T,
            "paper_T": self.paper_T,
            "paper_T_discrepancy": gap,
            "paper_T_consistent": None if gap is None else gap <= 1e-12,
            "amplitude_exponent": self.amplitude_exponent,
            "gradient_exponent": self.gradient_exponent,
            "K": self.K,
            "k": self.k,
        }


def _literal_case_T(vc: VirialCoefficients) -> float | None:
    H, M0, M0p = vc.H, vc.M0, vc.M0p
    root_K = math.sqrt(abs(vc.K))
    if H == 0.0 and M0p < 0:
        return -M0 / M0p
    if H > 0 and M0p < 0:
        return (-M0p - root_K) / (2.0 * H)
    if H < 0:
        return (-M0p + root_K) / (2.0 * H)
    return None


def classify_blowup(vc: VirialCoefficients, n: int = 1) -> BlowupReport:
    """Regime, collapse time and asymptotic exponents for a coefficient set.

    ``T`` is always the smallest positive root of ``M(t)``; ``paper_T`` is
    the literal case formula, kept alongside for comparison.
    """
    K, k = vc.K, vc.k
    if vc.k_is_zero():
        K = k = 0.0
    T = vc.first_root()
    if k > 0:
        return BlowupReport("decay", None, None, n / 2.0, None, K, k)
    if math.isinf(T):
        return BlowupReport("global_no_collapse", None, _literal_case_T(vc), None, None, K, k)
    paper_T = _literal_case_T(vc)
    if k == 0.0:
        return BlowupReport("blowup_k0", T, paper_T, n / 2.0, 2.0, K, k)
    if vc.H == 0.0:
        regime = "blowup_i"
    elif vc.H > 0:
        regime = "blowup_ii"
    else:
        regime = "blowup_iii"
    return BlowupReport(regime, T, paper_T, n / 4.0, 1.0, K, k)


# -- phase integral ---------------------------------------------------------


def phase_integral(vc: VirialCoefficients, gamma0: float, t: float) -> float:
    """``gamma0 * M(0) * ∫_0^t dτ / M(τ)`` by adaptive quadrature."""
    if gamma0 == 0.0 or t == 0.0:
        return 0.0
    T = vc.first_root()
    if t >= T:
        raise ValidityError(f"t={t} is at or beyond the collapse time {T}")
    val, _ = quad(lambda s: 1.0 / vc.M(s), 0.0, t, epsabs=PHASE_ABS_TOL / abs(gamma0 * vc.M0),
                  epsrel=1e-13, limit=200)
    return gamma0 * vc.M0 * val


def phase_integral_closed(vc: VirialCoefficients, gamma0: float, t: float) -> float:
    """Same integral from the antiderivative of ``1/M``, branching on ``K``."""
    H, M0, M0p, K = vc.H, vc.M0, vc.M0p, vc.K
    if H == 0.0:
        if M0p == 0.0:
            val = t / M0
        else:
            val = math.log(vc.M(t) / M0) / M0p
    elif vc.k_is_zero():
        val = -2.0 / vc.Mp(t) + 2.0 / M0p if M0p != 0 else math.inf
    elif K > 0:
        r = math.sqrt(K)
        val = 2.0 / r * (math.atan(vc.Mp(t) / r) - math.atan(M0p / r))
    else:
        r = math.sqrt(-K)

        def F(s):
            # log|(M'-r)/(M'+r)| using (M'-r)(M'+r) = 16 H M to dodge cancellation
            Mp, log_hm = vc.Mp(s), math.log(16.0 * abs(H)) + math.log(vc.M(s))
            if Mp >= 0:
                return (log_hm - 2.0 * math.log(Mp + r)) / r
            return (2.0 * math.log(r - Mp) - log_hm) / r

        val = F(t) - F(0.0)
    return gamma0 * M0 * val


# -- time flows -------------------------------------------------------------


class TimeFlow:
    """Evaluable ``a(t), b(t), gamma(t)``, scale ``s(t)`` and drift ``d(t)``.

    ``mode="profile"``: velocity ``V = a(t) x``; ``s^2 = (1 + a0 t)^2 + 4 k t^2``.
    ``mode="general"``: velocity ``V = a(t) x + b(t) Λ`` with ``a' + a^2 = 0``.
    """

    def __init__(self, mode, a0, b0, k_or_k1, gamma0, lam, valid_until):
        self.mode = mode
        self.a0 = float(a0)
        self.b0 = float(b0)
        self.k_or_k1 = float(k_or_k1)
        self.gamma0 = float(gamma0)
        self.lam = np.atleast_1d(np.asarray(lam, dtype=float))
        self.valid_until = float(valid_until)
        if mode == "profile":
            # unit-mass normalisation of the same quadratic
            self._vc = virial_from_flow(self.a0, self.k_or_k1, 1.0, 1.0)

    def __repr__(self):
        return (f"TimeFlow(mode={self.mode!r}, a0={self.a0}, b0={self.b0}, "
                f"k_or_k1={self.k_or_k1}, gamma0={self.gamma0}, valid_until={self.valid_until})")

    def _check(self, t):
        if not t < self.valid_until:
            raise ValidityError(f"t={t} is not before valid_until={self.valid_until}")
        if self._scale_sq(t) <= 0:
            raise ValidityError(f"scale factor vanishes at t={t}")

    def _scale_sq(self, t):
        if self.mode == "profile":
            return self._vc.M(t)
        return (1.0 + self.a0 * t) ** 2

    def scale(self, t) -> float:
        self._check(t)
        if self.mode == "profile":
            return math.sqrt(self._vc.M(t))
        return 1.0 + self.a0 * t

    def a(self, t) -> float:
        self._check(t)
        if self.mode == "profile":
            return a_closed_form(self._vc, t)
        return self.a0 / (1.0 + self.a0 * t)

    def b(self, t) -> float:
        self._check(t)
        if self.mode == "profile":
            return 0.0
        s = 1.0 + self.a0 * t
        return self.b0 / s + 2.0 * self.k_or_k1 * t / (s * s)

    def _D(self, t):
        # ∫_0^t b(τ)/s(τ) dτ in closed form
        s = 1.0 + self.a0 * t
        return self.b0 * t / s + self.k_or_k1 * t * t / (s * s)

    def drift(self, t) -> np.ndarray:
        self._check(t)
        if self.mode == "profile":
            return np.zeros_like(self.lam)
        return self.lam * self._D(t)

    def gamma(self, t) -> float:
        self._check(t)
        if self.mode == "profile":
            return phase_integral(self._vc, self.gamma0, t)
        if t == 0.0:
            return 0.0
        lam2 = float(self.lam @ self.lam)
        k1 = self.k_or_k1

        def rate(tau):
            s = 1.0 + self.a0 * tau
            b = self.b0 / s + 2.0 * k1 * tau / (s * s)
            return self.gamma0 / (s * s) - lam2 * (k1 * self._D(tau) / (s * s) + 0.25 * b * b)

        val, _ = quad(rate, 0.0, t, epsabs=PHASE_ABS_TOL, epsrel=1e-13, limit=200)
        return val


def profile_timeflow(a0: float, k: float, gamma0: float, n: int = 1) -> TimeFlow:
    vc = virial_from_flow(a0, k, 1.0, 1.0)
    return TimeFlow("profile", a0, 0.0, k, gamma0, np.zeros(n), vc.first_root())


def timeflow_from_virial(vc: VirialCoefficients, gamma0: float, n: int = 1) -> TimeFlow:
    return profile_timeflow(vc.a0, 0.0 if vc.k_is_zero() else vc.k, gamma0, n)


def general_timeflow(a0: float, b0: float, k1: float, gamma0: float, lam) -> TimeFlow:
    valid = -1.0 / a0 if a0 < 0 else math.inf
    return TimeFlow("general", a0, b0, k1, gamma0, lam, valid)


def q_lambda(Pl: float, Q0: float, t: float) -> float:
    return Pl * t + Q0


# -- functional closure ------------------------------------------------------


@dataclass(frozen=True)
class FunctionalFlow:
    """``a(t), b(t)`` of the ``V = a x + b Λ`` family expressed through the
    conserved functionals.

    Coefficients follow from differentiating ``M' = 2aM + bQ`` and
    ``P_Λ = aQ + bN|Λ|^2``: ``(a F)' = A`` with
    ``F = 2 M N|Λ|^2 - Q^2 = A t^2 + B t + C``.
    """

    N: float
    H: float
    M0: float
    M0p: float
    Q0: float
    Pl: float
    lambda_norm: float
    a0: float
    A: float
    B: float
    C: float
    valid_until: float
    _ode: Callable = field(repr=False)

    def F(self, t):
        return (self.A * t + self.B) * t + self.C

    def a(self, t):
        return (self.a0 * self.C + self.A * t) / self.F(t)

    def b(self, t):
        lam2 = self.N * self.lambda_norm**2
        return (self.Pl - self.a(t) * q_lambda(self.Pl, self.Q0, t)) / lam2

    def a_ode(self, t):
        return self._ode(t)[0]

    # literal coefficients as printed, kept for cross-reporting
    def literal_coefficients(self) -> tuple[float, float, float]:
        lam2 = self.N * self.lambda_norm**2
        return (8 * self.H * lam2 - self.Pl**2,
                self.M0p * self.H * lam2 - 2 * self.Pl * self.Q0,
                self.M0 * lam2 - self.Q0**2)

    def a_literal(self, t):
        A, B, C = self.literal_coefficients()
        return C * t / ((A * t + B) * t + C) + self.a0

    def b_literal(self, t):
        A, B, C = self.literal_coefficients()
        F = (A * t + B) * t + C
        P, Q0, a0 = self.Pl, self.Q0, self.a0
        num = P * (A - C) * t * t + (P * (B - a0) - C * Q0) * t + (P * C - a0 * Q0)
        return num / (F * self.N * self.lambda_norm**2)

    def literal_disagreement(self, times) -> float:
        """Max ``|a_literal - a|`` over ``times``."""
        return float(max(abs(self.a_literal(t) - self.a(t)) for t in times))


def consistent_a0(N, M0, M0p, Q0, Pl, lambda_norm) -> float:
    """The chirp implied by ``M'(0)`` and ``P_Λ`` for a ``V = a x + b Λ`` state."""
    lam2 = N * lambda_norm**2
    return (M0p * lam2 - Q0 * Pl) / (2 * M0 * lam2 - Q0**2)


def functional_timeflow(N, H, M0, M0p, Q0, Pl, lambda_norm, a0, t_end=None) -> FunctionalFlow:
    lam2 = N * lambda_norm**2
    if M0 * lam2 - Q0**2 < 0:
        raise ValueError("inconsistent functionals: Q(0)^2 exceeds |Λ|^2 N M(0) (Hölder)")
    A = 8.0 * H * lam2 - Pl**2
    B = 2.0 * M0p * lam2 - 2.0 * Pl * Q0
    C = 2.0 * M0 * lam2 - Q0**2
    if A == 0.0:
        roots = [] if B == 0.0 else [-C / B]
    else:
        disc = B * B - 4 * A * C
        roots = [] if disc < 0 else [(-B - math.sqrt(disc)) / (2 * A), (-B + math.sqrt(disc)) / (2 * A)]
    roots = sorted(r for r in roots if r > 0)
    valid = roots[0] if roots else math.inf
    horizon = t_end if t_end is not None else (0.95 * valid if math.isfinite(valid) else 10.0)

    def rhs(t, y):
        F = (A * t + B) * t + C
        return [(-y[0] * (2 * A * t + B) + A) / F]

    sol = solve_ivp(rhs, (0.0, horizon), [a0], method="DOP853", rtol=1e-13, atol=1e-15,
                    dense_output=True)
    return FunctionalFlow(N, H, M0, M0p, Q0, Pl, lambda_norm, a0, A, B, C, valid, sol.sol)


# -- export -----------------------------------------------------------------


def export_timeflow_csv(flow: TimeFlow, times, path) -> Path:
    path = Path(path)
    n = flow.lam.size
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "a", "b", "gamma", "scale"] + [f"drift_{i + 1}" for i in range(n)])
        for t in times:
            d = flow.drift(t)
            row = [t, flow.a(t), flow.b(t), flow.gamma(t), flow.scale(t), *d]
            w.writerow([repr(float(v)) for v in row])
    return path
