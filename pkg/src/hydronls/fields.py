"""Periodic grids, complex fields, spectral calculus and quadrature.

The periodic box ``[-L, L)^n`` stands in for ``R^n``; every decaying field
used here must be negligible at the box faces.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from hydronls.errors import GridError

WFIELD_SUFFIX = ".wfield"


@dataclass(frozen=True)
class Grid:
    n_dims: int
    points_per_dim: int
    half_width: float

    def __post_init__(self):
        n, m, L = self.n_dims, self.points_per_dim, self.half_width
        if n not in (1, 2, 3):
            raise GridError(f"n_dims must be 1, 2 or 3, got {n}")
        if m < 8 or m & (m - 1):
            raise GridError(f"points_per_dim must be a power of two >= 8, got {m}")
        if not np.isfinite(L) or L <= 0:
            raise GridError(f"half_width must be positive, got {L}")

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / self.points_per_dim

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points_per_dim,) * self.n_dims

    @property
    def size(self) -> int:
        return self.points_per_dim**self.n_dims

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.n_dims

    @cached_property
    def axis(self) -> np.ndarray:
        """Sample positions along one axis, starting at ``-L``."""
        return -self.half_width + self.spacing * np.arange(self.points_per_dim)

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        """Angular wavenumbers in the FFT's native ordering."""
        return 2.0 * np.pi * np.fft.fftfreq(self.points_per_dim, d=self.spacing)

    @cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*([self.axis] * self.n_dims), indexing="ij"))

    @cached_property
    def k_mesh(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*([self.wavenumbers] * self.n_dims), indexing="ij"))

    @cached_property
    def k_odd_mesh(self) -> tuple[np.ndarray, ...]:
        # Nyquist mode carries no odd-derivative information on an even grid
        k = self.wavenumbers.copy()
        k[self.points_per_dim // 2] = 0.0
        return tuple(np.meshgrid(*([k] * self.n_dims), indexing="ij"))

    @cached_property
    def k_squared(self) -> np.ndarray:
        return sum(k**2 for k in self.k_mesh)

    def radius_from(self, center=None) -> np.ndarray:
        c = np.zeros(self.n_dims) if center is None else np.asarray(center, dtype=float)
        return np.sqrt(sum((x - ci) ** 2 for x, ci in zip(self.coords, c)))

    def boundary_mask(self) -> np.ndarray:
        """True on the outermost layer of samples of every axis."""
        mask = np.zeros(self.shape, dtype=bool)
        for d in range(self.n_dims):
            idx = [slice(None)] * self.n_dims
            idx[d] = 0
            mask[tuple(idx)] = True
            idx[d] = -1
            mask[tuple(idx)] = True
        return mask


def make_grid(n_dims: int, points_per_dim: int, half_width: float) -> Grid:
    return Grid(int(n_dims), int(points_per_dim), float(half_width))


@dataclass(frozen=True)
class WaveField:
    grid: Grid
    values: np.ndarray
    time_tag: float = 0.0

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=complex)
        if vals.size != self.grid.size:
            raise GridError(f"field has {vals.size} samples, grid expects {self.grid.size}")
        vals = vals.reshape(self.grid.shape)
        if not np.all(np.isfinite(vals)):
            raise GridError("field contains non-finite samples")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def amplitude(self) -> np.ndarray:
        return np.abs(self.values)

    @property
    def density(self) -> np.ndarray:
        return np.abs(self.values) ** 2

    def with_values(self, values, time_tag=None) -> "WaveField":
        return WaveField(self.grid, values, self.time_tag if time_tag is None else time_tag)


@dataclass(frozen=True)
class MadelungFields:
    """Density ``rho = |psi|^2`` and velocity ``V = 2 grad(phase)``.

    ``velocity`` entries are NaN outside ``mask``; ``phase`` is NaN only
    where the density is exactly zero.
    """

    grid: Grid
    density: np.ndarray
    velocity: tuple[np.ndarray, ...]
    mask: np.ndarray = field(repr=False)
    phase: np.ndarray | None = field(default=None, repr=False)


def spectral_derivatives(psi: WaveField) -> tuple[list[np.ndarray], np.ndarray]:
    """Return ``(gradient components, laplacian)`` of a field by FFT."""
    g = psi.grid
    axes = tuple(range(g.n_dims))
    hat = np.fft.fftn(psi.values, axes=axes)
    grad = [np.fft.ifftn(1j * k * hat, axes=axes) for k in g.k_odd_mesh]
    lap = np.fft.ifftn(-g.k_squared * hat, axes=axes)
    return grad, lap


def gradient_real(samples: np.ndarray, grid: Grid) -> list[np.ndarray]:
    """Spectral gradient of a real-valued sampled function."""
    axes = tuple(range(grid.n_dims))
    hat = np.fft.fftn(samples, axes=axes)
    return [np.fft.ifftn(1j * k * hat, axes=axes).real for k in grid.k_odd_mesh]


def laplacian(values: np.ndarray, grid: Grid) -> np.ndarray:
    axes = tuple(range(grid.n_dims))
    return np.fft.ifftn(-grid.k_squared * np.fft.fftn(values, axes=axes), axes=axes)


def quadrature_integrate(samples, grid: Grid) -> float:
    """Rectangle rule ``h^n * sum(samples)``."""
    s = np.asarray(samples)
    if s.size != grid.size:
        raise GridError(f"got {s.size} samples for a grid of {grid.size}")
    return float(np.sum(s) * grid.cell_volume)


# -- snapshot files ---------------------------------------------------------


def save_wfield(psi: WaveField, path) -> Path:
    """Write a ``.wfield`` file: one JSON header line, then the payload.

    The payload is little-endian float64 (re, im) pairs in row-major order.
    """
    path = Path(path)
    if path.suffix != WFIELD_SUFFIX:
        path = path.with_suffix(WFIELD_SUFFIX)
    g = psi.grid
    header = {
        "n_dims": g.n_dims,
        "points_per_dim": g.points_per_dim,
        "half_width": g.half_width,
        "time_tag": float(psi.time_tag),
    }
    payload = np.empty(2 * g.size, dtype="<f8")
    flat = np.ascontiguousarray(psi.values).ravel(order="C")
    payload[0::2] = flat.real
    payload[1::2] = flat.imag
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(payload.tobytes())
    return path


def load_wfield(path) -> WaveField:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode())
        payload = np.frombuffer(fh.read(), dtype="<f8")
    grid = make_grid(header["n_dims"], header["points_per_dim"], header["half_width"])
    if payload.size != 2 * grid.size:
        raise GridError(f"{path}: payload has {payload.size} floats, expected {2 * grid.size}")
    values = (payload[0::2] + 1j * payload[1::2]).reshape(grid.shape)
    return WaveField(grid, values, header["time_tag"])


def export_csv_1d(psi: WaveField, path) -> Path:
    if psi.grid.n_dims != 1:
        raise GridError("CSV export is only defined for 1D fields")
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "re", "im"])
        for x, v in zip(psi.grid.axis, psi.values):
            w.writerow([repr(float(x)), repr(float(v.real)), repr(float(v.imag))])
    return path
