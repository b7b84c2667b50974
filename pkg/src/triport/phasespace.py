"""Single-mode phase-space distributions.

Conventions (all with the measure ``d^2 lambda / pi`` and Fourier kernel
``exp(conj(lambda) alpha - lambda conj(alpha))``):

* ``chi_s(lambda) = Tr[rho D(lambda)] exp(s |lambda|^2 / 2)``
* ``W_s(alpha) = int d^2 lambda / pi  chi_s(lambda) exp(...)``, so that
  ``int d^2 alpha / pi  W_s = 1``; the vacuum has ``W_0(0) = 2`` and
  ``W_{-1} = pi Q``.
* ``K_SP(alpha) = Tr[rho_S D(alpha) rho_P D^dag(alpha)] / pi``, normalized
  as ``int d^2 alpha K_SP = 1``.  It also equals
  ``int d^2 beta / pi^2  W_{0|S}(alpha + beta) W_{0|P}(beta)``.

:func:`k_sp_trace` is the production route.  :func:`k_sp_convolution`
exists to validate it and is far slower.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import AccuracyWarning, InvalidArgument, UnsupportedParameter
from .fock import (
    FockOperator,
    FockVector,
    as_density,
    coherent_amplitudes,
    displacement_matrices,
    displacement_trace,
    effective_cutoff,
)
from .fock import _laguerre_rows, _polar

__all__ = [
    "QuadratureSpec",
    "GridSpec",
    "RealGrid",
    "characteristic_fn",
    "wigner_s",
    "wigner",
    "q_function",
    "k_sp_trace",
    "k_sp_convolution",
    "eval_grid",
]

IMAG_TOL = 1e-8
# exp(-|lambda|^2/2) underflows past this, taking every matrix element with it
_UNDERFLOW_X = 1400.0
DEFAULT_GRID_BUDGET = 4_000_000


@dataclass(frozen=True)
class QuadratureSpec:
    """Tensor-product Gauss-Legendre rule on ``[-radius, radius]^2``."""

    radius: float = 6.0
    points_per_axis: int = 121

    def __post_init__(self):
        if not self.radius > 0:
            raise InvalidArgument("quadrature radius must be positive")
        if self.points_per_axis < 16:
            raise InvalidArgument("quadrature needs at least 16 points per axis")

    def nodes(self) -> tuple[np.ndarray, np.ndarray]:
        t, w = leggauss(self.points_per_axis)
        return t * self.radius, w * self.radius


@dataclass(frozen=True)
class GridSpec:
    """Rectangular window split into ``nx * ny`` equal cells.

    Functions are sampled at cell centers; histograms use the cells as bins.
    """

    x_min: float
    x_max: float
    y_min: float
    y_max: float
    nx: int
    ny: int

    def __post_init__(self):
        if not (np.isfinite([self.x_min, self.x_max, self.y_min, self.y_max]).all()):
            raise InvalidArgument("grid window must be finite")
        if not (self.x_max > self.x_min and self.y_max > self.y_min):
            raise InvalidArgument("grid window is empty or inverted")
        if int(self.nx) != self.nx or int(self.ny) != self.ny or self.nx < 2 or self.ny < 2:
            raise InvalidArgument("grid needs at least 2 cells per axis")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.nx

    @property
    def dy(self) -> float:
        return (self.y_max - self.y_min) / self.ny

    @property
    def cell_area(self) -> float:
        return self.dx * self.dy

    @property
    def x_edges(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.nx + 1)

    @property
    def y_edges(self) -> np.ndarray:
        return self.y_min + self.dy * np.arange(self.ny + 1)

    @property
    def x_centers(self) -> np.ndarray:
        return self.x_min + self.dx * (np.arange(self.nx) + 0.5)

    @property
    def y_centers(self) -> np.ndarray:
        return self.y_min + self.dy * (np.arange(self.ny) + 0.5)

    def points(self) -> np.ndarray:
        """Complex cell centers ``x + iy``, shape ``(nx, ny)``."""
        return self.x_centers[:, None] + 1j * self.y_centers[None, :]

    def cell_index(self, x: float, y: float) -> tuple[int, int]:
        i = int(np.floor((x - self.x_min) / self.dx))
        j = int(np.floor((y - self.y_min) / self.dy))
        if not (0 <= i < self.nx and 0 <= j < self.ny):
            raise InvalidArgument(f"point ({x}, {y}) lies outside the grid")
        return i, j


@dataclass(frozen=True)
class RealGrid:
    """Real values on the cells of a :class:`GridSpec`; ``values[i, j]`` sits at
    ``(x_centers[i], y_centers[j])``."""

    spec: GridSpec
    values: np.ndarray
    axis_label: str = "alpha_plane"

    def __post_init__(self):
        if self.axis_label not in ("alpha_plane", "y_plane"):
            raise InvalidArgument(f"unknown axis label {self.axis_label!r}")
        values = np.array(self.values, dtype=float)
        if values.shape != (self.spec.nx, self.spec.ny):
            raise InvalidArgument("grid values do not match the grid spec")
        if not np.all(np.isfinite(values)):
            raise InvalidArgument("grid values must be finite")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    def integral(self) -> float:
        return float(self.values.sum() * self.spec.cell_area)

    def argmax(self) -> tuple[float, float]:
        i, j = np.unravel_index(np.argmax(self.values), self.values.shape)
        return float(self.spec.x_centers[i]), float(self.spec.y_centers[j])


def _report_imag(imag: np.ndarray, tol: float, what: str) -> float:
    worst = float(np.max(np.abs(imag), initial=0.0))
    if worst > tol:
        warnings.warn(
            f"{what}: imaginary residue {worst:.3g} exceeds {tol:.1g}",
            AccuracyWarning,
            stacklevel=3,
        )
    return worst


def _scalar_or_array(values: np.ndarray, like):
    return values.item() if np.ndim(like) == 0 else values


# ---------------------------------------------------------------------------
# Characteristic function and generalized Wigner functions
# ---------------------------------------------------------------------------

def characteristic_fn(rho, lam, s: float):
    """s-ordered characteristic function ``Tr[rho D(lam)] exp(s|lam|^2/2)``.

    ``lam`` may be a scalar or an array.  An :class:`AccuracyWarning` is
    issued when ``|lam|`` is so large that the displacement matrix elements
    underflow.
    """
    rho = as_density(rho)
    if not np.isfinite(s):
        raise InvalidArgument("ordering parameter must be finite")
    lam_arr = np.asarray(lam, dtype=complex)
    if not np.all(np.isfinite(lam_arr)):
        raise InvalidArgument("lambda must be finite")
    x = np.abs(lam_arr) ** 2
    if np.any(x > _UNDERFLOW_X):
        warnings.warn(
            "characteristic function requested where displacement elements underflow",
            AccuracyWarning,
            stacklevel=2,
        )
    chi = displacement_trace(rho, lam_arr) * np.exp(0.5 * s * x)
    return _scalar_or_array(chi, lam)


def wigner_s(rho, alpha, s: float, q: QuadratureSpec = QuadratureSpec(), *, full_output=False):
    """Generalized Wigner function ``W_s(alpha)`` by quadrature of ``chi_s``.

    Only ``s <= 0`` is accepted; for ``s > 0`` the integrand no longer decays
    and the distribution may be singular.  (Physical sampling by a detector
    is possible only for ``s <= -1``; smaller ``|s|`` is still well defined
    numerically.)

    With ``full_output=True`` returns ``(value, max_imag_residue)``.
    """
    if not np.isfinite(s):
        raise InvalidArgument("ordering parameter must be finite")
    if s > 0:
        raise UnsupportedParameter(f"s = {s} > 0 is not supported")
    rho = as_density(rho)
    t, w = q.nodes()
    lam = t[:, None] + 1j * t[None, :]
    weighted = np.outer(w, w) * characteristic_fn(rho, lam, s)

    a = np.asarray(alpha, dtype=complex)
    flat = a.ravel()
    out = np.empty(flat.size, dtype=complex)
    # exp(conj(l) a - l conj(a)) = exp(2i (u y - v x)) with l = u + iv, a = x + iy
    for start in range(0, flat.size, 2048):
        p = flat[start : start + 2048]
        eu = np.exp(2j * p.imag[:, None] * t[None, :])
        ev = np.exp(-2j * p.real[:, None] * t[None, :])
        out[start : start + p.size] = np.einsum("pi,ij,pj->p", eu, weighted, ev) / np.pi
    worst = _report_imag(out.imag, IMAG_TOL, "wigner_s")
    val = _scalar_or_array(out.real.reshape(a.shape), alpha)
    return (val, worst) if full_output else val


def wigner(rho, alpha):
    """Symmetric-order Wigner function ``W_0`` from the displaced-parity formula.

    ``W_0(alpha) = 2 Tr[Pi rho D(2 alpha)]`` with ``Pi = (-1)^n``, exact for
    states supported on the truncated space.  Same normalization as
    :func:`wigner_s` with ``s = 0``.
    """
    rho = as_density(rho)
    n = effective_cutoff(rho.mat)
    mat = rho.mat[: n + 1, : n + 1]
    # Hermitian rho pairs the diagonals a and -a into 2 Re(e^{ia theta} S_a)
    coeffs = [np.diag(mat, a) * (-1.0) ** np.arange(n + 1 - a) for a in range(n + 1)]
    a_arr = np.asarray(alpha, dtype=complex)
    flat = 2.0 * a_arr.ravel()
    out = np.empty(flat.size)
    for start in range(0, flat.size, 16384):
        x, phase = _polar(flat[start : start + 16384])
        acc = np.zeros(x.size)
        ph_a = np.ones_like(phase)
        for a, c in enumerate(coeffs):
            if a:
                ph_a = ph_a * phase
            if not c.any():
                continue
            g = _laguerre_rows(x, a, n - a)
            s_re, s_im = c.real @ g, c.imag @ g
            term = ph_a.real * s_re - ph_a.imag * s_im
            acc += term if a == 0 else 2.0 * term
        out[start : start + x.size] = 2.0 * acc
    return _scalar_or_array(out.reshape(a_arr.shape), alpha)


# ---------------------------------------------------------------------------
# Q function and probe-convolved densities
# ---------------------------------------------------------------------------

def q_function(rho, alpha):
    """Husimi function ``<alpha|rho|alpha> / pi``.

    Truncating ``<alpha|`` to the cutoff of ``rho`` loses nothing, because
    ``rho`` has no support beyond it.
    """
    rho = as_density(rho)
    a = np.asarray(alpha, dtype=complex)
    c = coherent_amplitudes(a.ravel(), rho.cutoff)
    vals = np.einsum("pi,ij,pj->p", c.conj(), rho.mat, c).real / np.pi
    return _scalar_or_array(vals.reshape(a.shape), alpha)


def _pure_components(state, tol: float = 1e-15):
    if isinstance(state, FockVector):
        return np.ones(1), state.amps[None, :]
    mat = as_density(state).mat
    w, v = np.linalg.eigh(mat)
    keep = w > tol * max(w.max(), 0.0)
    return w[keep], v[:, keep].T


def k_sp_trace(rho_s, rho_p, alpha, *, full_output=False):
    """Probe-convolved density ``Tr[rho_S D(alpha) rho_P D^dag(alpha)] / pi``.

    Both states may be :class:`FockVector` or density :class:`FockOperator`
    and must share a cutoff.  Exact up to the truncation of the inputs.
    With ``full_output=True`` returns ``(value, max_imag_residue)``.
    """
    s = as_density(rho_s)
    if s.cutoff != as_density(rho_p).cutoff:
        raise InvalidArgument("signal and probe cutoffs differ")
    weights, comps = _pure_components(rho_p)
    n = s.cutoff
    a = np.asarray(alpha, dtype=complex)
    flat = a.ravel()
    out = np.zeros(flat.size, dtype=complex)
    chunk = max(1, 2_000_000 // (n + 1) ** 2)
    for start in range(0, flat.size, chunk):
        d = displacement_matrices(flat[start : start + chunk], n)
        acc = np.zeros(d.shape[0], dtype=complex)
        for wgt, phi in zip(weights, comps):
            v = d @ phi
            acc += wgt * np.einsum("pi,ij,pj->p", v.conj(), s.mat, v)
        out[start : start + d.shape[0]] = acc / np.pi
    worst = _report_imag(out.imag, IMAG_TOL, "k_sp_trace")
    val = _scalar_or_array(out.real.reshape(a.shape), alpha)
    return (val, worst) if full_output else val


def k_sp_convolution(rho_s, rho_p, alpha, q: QuadratureSpec = QuadratureSpec()):
    """Validation route: ``int d^2 beta / pi^2  W_{0|S}(alpha+beta) W_{0|P}(beta)``.

    The integral runs over the quadrature square with Gauss-Legendre nodes;
    the Wigner factors come from :func:`wigner`.  Orders of magnitude slower
    than :func:`k_sp_trace`; use it to cross-check, not to compute.
    """
    s, p = as_density(rho_s), as_density(rho_p)
    if s.cutoff != p.cutoff:
        raise InvalidArgument("signal and probe cutoffs differ")
    t, w = q.nodes()
    beta = (t[:, None] + 1j * t[None, :]).ravel()
    weights = (np.outer(w, w).ravel() * wigner(p, beta)) / np.pi**2
    # |W_0| <= 2, so dropping nodes whose weights sum below 5e-15 costs < 1e-14
    order = np.argsort(np.abs(weights))
    dropped = np.cumsum(np.abs(weights[order])) <= 5e-15
    keep = np.sort(order[~dropped])
    beta, weights = beta[keep], weights[keep]
    a = np.asarray(alpha, dtype=complex)
    flat = a.ravel()
    out = np.empty(flat.size)
    per = max(1, 1_000_000 // beta.size)
    for start in range(0, flat.size, per):
        block = flat[start : start + per]
        ws = wigner(s, block[:, None] + beta[None, :])
        out[start : start + block.size] = ws @ weights
    return _scalar_or_array(out.reshape(a.shape), alpha)


# ---------------------------------------------------------------------------
# Grids
# ---------------------------------------------------------------------------

def eval_grid(
    f: Callable[[np.ndarray], np.ndarray],
    spec: GridSpec,
    axis_label: str = "alpha_plane",
    budget: int = DEFAULT_GRID_BUDGET,
) -> RealGrid:
    """Evaluate a vectorized density on the cell centers of ``spec``.

    ``f`` receives the complex array ``x + 1j*y`` of shape ``(nx, ny)`` and
    must return real values of the same shape.  Points are independent, so
    the result does not depend on evaluation order.
    """
    if spec.nx * spec.ny > budget:
        raise InvalidArgument(f"grid of {spec.nx * spec.ny} points exceeds budget {budget}")
    values = np.asarray(f(spec.points()), dtype=float)
    if values.shape != (spec.nx, spec.ny):
        values = np.broadcast_to(values, (spec.nx, spec.ny))
    return RealGrid(spec, values, axis_label)
