"""Truncated single-mode Fock space.

States live on the basis ``|0>, ..., |N>`` where ``N`` is the *cutoff*.
Constructors never renormalize: the probability lost to truncation is
reported as ``norm_deficit`` so that downstream statistics stay unbiased.

Displacement matrix elements are evaluated from the associated-Laguerre
closed form through a recurrence on normalized functions

    g_k^(a)(x) = sqrt(k!/(k+a)!) x^(a/2) exp(-x/2) L_k^(a)(x),

which never forms a factorial and therefore stays finite for cutoffs in
the hundreds.  The entries are exact matrix elements of the infinite
operator, so products such as ``Tr(rho D)`` are exact whenever ``rho`` is
supported on the truncated space.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammainc, gammaln

from .errors import InvalidArgument

__all__ = [
    "StateSpec",
    "coherent",
    "number",
    "squeezed_vacuum",
    "vacuum",
    "FockVector",
    "FockOperator",
    "make_state",
    "as_density",
    "validate_density",
    "ladder_matrix",
    "number_matrix",
    "displacement_matrix",
    "displacement_matrices",
    "displaced_number_overlap",
    "displacement_trace",
    "effective_cutoff",
    "coherent_amplitudes",
    "overlap",
    "expectation",
]

_CHUNK = 16384


# ---------------------------------------------------------------------------
# State specifications
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StateSpec:
    """A named single-mode pure state.

    ``kind`` is one of ``"coherent"``, ``"number"`` or ``"squeezed_vacuum"``;
    ``value`` holds the amplitude, the photon number or the squeezing
    parameter respectively.
    """

    kind: str
    value: complex | int | float

    def __post_init__(self):
        if self.kind not in ("coherent", "number", "squeezed_vacuum"):
            raise InvalidArgument(f"unknown state kind {self.kind!r}")

    @classmethod
    def parse(cls, text: str) -> "StateSpec":
        """Parse ``coherent:<complex>``, ``number:<n>``, ``squeezed:<r>``,
        ``squeezed-nbar:<mean photon number>`` or ``vacuum``."""
        text = text.strip()
        if text == "vacuum":
            return vacuum()
        kind, sep, arg = text.partition(":")
        if not sep:
            raise InvalidArgument(f"cannot parse state spec {text!r}")
        kind = kind.strip().lower()
        arg = arg.strip().replace(" ", "").replace("i", "j")
        try:
            if kind == "coherent":
                return coherent(complex(arg))
            if kind == "number":
                return number(int(arg))
            if kind in ("squeezed", "squeezed_vacuum"):
                return squeezed_vacuum(float(arg))
            if kind == "squeezed-nbar":
                nbar = float(arg)
                if nbar < 0:
                    raise InvalidArgument("mean photon number must be >= 0")
                return squeezed_vacuum(math.asinh(math.sqrt(nbar)))
        except ValueError as exc:
            if isinstance(exc, InvalidArgument):
                raise
            raise InvalidArgument(f"cannot parse state spec {text!r}") from exc
        raise InvalidArgument(f"unknown state kind {kind!r}")

    def to_text(self) -> str:
        if self.kind == "coherent":
            v = complex(self.value)
            return f"coherent:{v.real!r}{v.imag:+.17g}j"
        if self.kind == "number":
            return f"number:{int(self.value)}"
        return f"squeezed:{float(self.value)!r}"


def coherent(alpha: complex) -> StateSpec:
    return StateSpec("coherent", complex(alpha))


def number(n: int) -> StateSpec:
    return StateSpec("number", int(n))


def squeezed_vacuum(r: float) -> StateSpec:
    return StateSpec("squeezed_vacuum", float(r))


def vacuum() -> StateSpec:
    return StateSpec("coherent", 0j)


# ---------------------------------------------------------------------------
# Values
# ---------------------------------------------------------------------------

def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class FockVector:
    """Pure single-mode state, ``amps[n] = <n|psi>`` for ``n <= cutoff``."""

    cutoff: int
    amps: np.ndarray
    norm_deficit: float = field(default=float("nan"))

    def __post_init__(self):
        amps = np.asarray(self.amps, dtype=complex)
        if amps.shape != (self.cutoff + 1,):
            raise InvalidArgument("amplitude vector does not match cutoff")
        object.__setattr__(self, "amps", _frozen(amps))
        if math.isnan(self.norm_deficit):
            object.__setattr__(
                self, "norm_deficit", float(1.0 - np.vdot(amps, amps).real)
            )

    def dm(self) -> "FockOperator":
        return FockOperator(self.cutoff, np.outer(self.amps, self.amps.conj()), "density")

    def mean_photon_number(self) -> float:
        return float(np.dot(np.arange(self.cutoff + 1), np.abs(self.amps) ** 2))


@dataclass(frozen=True)
class FockOperator:
    """Dense ``(N+1) x (N+1)`` operator; ``kind`` tags how it is meant to be used."""

    cutoff: int
    mat: np.ndarray
    kind: str = "operator"

    def __post_init__(self):
        mat = np.asarray(self.mat, dtype=complex)
        if mat.shape != (self.cutoff + 1, self.cutoff + 1):
            raise InvalidArgument("matrix shape does not match cutoff")
        object.__setattr__(self, "mat", _frozen(mat))

    @property
    def dag(self) -> "FockOperator":
        return FockOperator(self.cutoff, self.mat.conj().T, self.kind)

    def __matmul__(self, other: "FockOperator") -> "FockOperator":
        _same_cutoff(self, other)
        return FockOperator(self.cutoff, self.mat @ other.mat)


def _same_cutoff(a, b):
    if a.cutoff != b.cutoff:
        raise InvalidArgument(f"cutoff mismatch: {a.cutoff} != {b.cutoff}")


def as_density(state: FockVector | FockOperator) -> FockOperator:
    """Return a density matrix for a pure state, or the operator itself."""
    if isinstance(state, FockVector):
        return state.dm()
    if isinstance(state, FockOperator):
        return state
    raise InvalidArgument(f"expected FockVector or FockOperator, got {type(state).__name__}")


def validate_density(rho: FockOperator, tol: float = 1e-10) -> None:
    """Raise :class:`InvalidArgument` unless ``rho`` is a density matrix
    (Hermitian, trace at most one, no negative eigenvalues) within ``tol``."""
    m = rho.mat
    if not np.all(np.isfinite(m)):
        raise InvalidArgument("density matrix has non-finite entries")
    if np.abs(m - m.conj().T).max(initial=0.0) > tol:
        raise InvalidArgument("density matrix is not Hermitian")
    tr = np.trace(m).real
    if tr > 1 + tol or tr <= 0:
        raise InvalidArgument(f"density matrix trace {tr} outside (0, 1]")
    if np.linalg.eigvalsh(m).min() < -tol:
        raise InvalidArgument("density matrix has negative eigenvalues")


# ---------------------------------------------------------------------------
# State constructors
# ---------------------------------------------------------------------------

def _check_cutoff(cutoff) -> int:
    if isinstance(cutoff, bool) or int(cutoff) != cutoff or cutoff < 0:
        raise InvalidArgument(f"cutoff must be a non-negative integer, got {cutoff!r}")
    return int(cutoff)


def coherent_amplitudes(alphas, cutoff: int) -> np.ndarray:
    """``<n|alpha>`` for every ``alpha`` in ``alphas``; shape ``alphas.shape + (cutoff+1,)``.

    Each entry is computed independently of the cutoff, so truncations at
    different cutoffs agree exactly on their common indices.
    """
    cutoff = _check_cutoff(cutoff)
    alphas = np.asarray(alphas, dtype=complex)
    n = np.arange(cutoff + 1)
    r = np.abs(alphas)[..., None]
    theta = np.angle(alphas)[..., None]
    with np.errstate(divide="ignore", invalid="ignore"):
        logmag = n * np.log(r) - 0.5 * gammaln(n + 1) - 0.5 * r**2
    logmag = np.where((r == 0) & (n == 0), 0.0, logmag)
    return np.exp(logmag) * np.exp(1j * n * theta)


def _squeezed_log_probs(r: float, m: np.ndarray) -> np.ndarray:
    # log |<2m|0,r>|^2
    t = math.tanh(abs(r))
    with np.errstate(divide="ignore", invalid="ignore"):
        logt = math.log(t) if t > 0 else -np.inf
        out = (
            -math.log(math.cosh(r))
            + np.where(m == 0, 0.0, 2 * m * logt)
            + gammaln(2 * m + 1)
            - 2 * m * math.log(2.0)
            - 2 * gammaln(m + 1)
        )
    return out


def _squeezed_tail(r: float, first_m: int) -> float:
    """Sum of ``|<2m|0,r>|^2`` over ``m >= first_m``."""
    if r == 0:
        return 0.0 if first_m > 0 else 1.0
    total = 0.0
    start = first_m
    while True:
        m = np.arange(start, start + 4096)
        p = np.exp(_squeezed_log_probs(r, m))
        total += p.sum()
        if p[-1] <= 1e-20 * max(total, 1e-300) or start > 10**7:
            return float(total)
        start += 4096


def make_state(spec: StateSpec | str, cutoff: int) -> FockVector:
    """Fock amplitudes of a coherent, number or squeezed-vacuum state.

    Squeezed vacuum uses ``S(r) = exp(r/2 (a^2 - a^dag^2))`` with real
    ``r``; for ``r > 0`` the ``(a + a^dag)/2`` quadrature is squeezed.
    """
    if isinstance(spec, str):
        spec = StateSpec.parse(spec)
    cutoff = _check_cutoff(cutoff)
    if spec.kind == "coherent":
        alpha = complex(spec.value)
        if not cmath.isfinite(alpha):
            raise InvalidArgument("coherent amplitude must be finite")
        amps = coherent_amplitudes(alpha, cutoff)
        deficit = float(gammainc(cutoff + 1, abs(alpha) ** 2)) if alpha != 0 else 0.0
        return FockVector(cutoff, amps, deficit)
    if spec.kind == "number":
        n = int(spec.value)
        if n < 0 or n > cutoff:
            raise InvalidArgument(f"number state |{n}> outside cutoff {cutoff}")
        amps = np.zeros(cutoff + 1, dtype=complex)
        amps[n] = 1.0
        return FockVector(cutoff, amps, 0.0)
    r = float(spec.value)
    if not math.isfinite(r):
        raise InvalidArgument("squeezing parameter must be finite")
    m = np.arange(cutoff // 2 + 1)
    mag = np.exp(0.5 * _squeezed_log_probs(r, m))
    amps = np.zeros(cutoff + 1, dtype=complex)
    amps[0::2] = mag * (-math.copysign(1.0, r)) ** m
    return FockVector(cutoff, amps, _squeezed_tail(r, cutoff // 2 + 1))


# ---------------------------------------------------------------------------
# Operators
# ---------------------------------------------------------------------------

def ladder_matrix(cutoff: int) -> FockOperator:
    """Annihilation operator ``a`` with ``a|n> = sqrt(n)|n-1>``."""
    cutoff = _check_cutoff(cutoff)
    return FockOperator(cutoff, np.diag(np.sqrt(np.arange(1, cutoff + 1)), 1))


def number_matrix(cutoff: int) -> FockOperator:
    cutoff = _check_cutoff(cutoff)
    return FockOperator(cutoff, np.diag(np.arange(cutoff + 1, dtype=float)))


def _laguerre_rows(x: np.ndarray, a: int, kmax: int) -> np.ndarray:
    """Rows ``g_k^(a)(x)`` for ``k = 0..kmax``, shape ``(kmax+1, x.size)``."""
    out = np.empty((kmax + 1, x.size))
    if a == 0:
        np.exp(-0.5 * x, out=out[0])
    else:
        with np.errstate(divide="ignore"):
            np.exp(0.5 * a * np.log(x) - 0.5 * x - 0.5 * gammaln(a + 1), out=out[0])
    if kmax >= 1:
        np.multiply(1.0 + a - x, out[0], out=out[1])
        out[1] /= math.sqrt(1.0 + a)
    tmp = np.empty_like(x)
    for k in range(1, kmax):
        nxt = out[k + 1]
        np.subtract(2 * k + 1 + a, x, out=nxt)
        nxt *= out[k]
        np.multiply(out[k - 1], math.sqrt(k * (k + a)), out=tmp)
        nxt -= tmp
        nxt /= math.sqrt((k + 1) * (k + a + 1))
    return out


def _polar(alphas: np.ndarray):
    x = alphas.real**2 + alphas.imag**2
    phase = np.ones_like(alphas)
    nz = x > 0
    phase[nz] = alphas[nz] / np.sqrt(x[nz])
    return x, phase


def displacement_matrices(alphas, n_max: int, m_max: int | None = None) -> np.ndarray:
    """Stacked ``<n|D(alpha)|m>`` for ``n <= n_max``, ``m <= m_max``.

    Returns an array of shape ``alphas.shape + (n_max+1, m_max+1)``.
    """
    m_max = n_max if m_max is None else m_max
    n_max, m_max = _check_cutoff(n_max), _check_cutoff(m_max)
    alphas = np.asarray(alphas, dtype=complex)
    if not np.all(np.isfinite(alphas)):
        raise InvalidArgument("displacement amplitude must be finite")
    flat = alphas.ravel()
    x, phase = _polar(flat)
    out = np.zeros((flat.size, n_max + 1, m_max + 1), dtype=complex)
    for a in range(n_max + 1):
        kmax = min(m_max, n_max - a)
        g = _laguerre_rows(x, a, kmax)
        k = np.arange(kmax + 1)
        out[:, k + a, k] = (phase**a)[:, None] * g.T
    for a in range(1, m_max + 1):
        kmax = min(n_max, m_max - a)
        if kmax < 0:
            break
        g = _laguerre_rows(x, a, kmax)
        k = np.arange(kmax + 1)
        out[:, k, k + a] = ((-phase.conj()) ** a)[:, None] * g.T
    return out.reshape(alphas.shape + (n_max + 1, m_max + 1))


def displacement_matrix(alpha: complex, cutoff: int) -> FockOperator:
    """Truncated ``D(alpha) = exp(alpha a^dag - conj(alpha) a)``.

    Entries are exact; only unitarity suffers, and only near the
    ``cutoff`` boundary.
    """
    alpha = complex(alpha)
    if not cmath.isfinite(alpha):
        raise InvalidArgument("displacement amplitude must be finite")
    mat = displacement_matrices(np.array([alpha]), cutoff)[0]
    return FockOperator(cutoff, mat, "unitary")


def displaced_number_overlap(beta: complex, n_max: int, m_max: int) -> np.ndarray:
    """Rectangular block ``<n|D(beta)|m>``, ``n <= n_max``, ``m <= m_max``."""
    return displacement_matrices(np.array([complex(beta)]), n_max, m_max)[0]


def effective_cutoff(mat: np.ndarray, tol: float = 1e-15) -> int:
    """Smallest ``n`` such that entries with a row or column index above ``n``
    sum to at most ``tol`` in absolute value."""
    mag = np.abs(mat)
    n = mag.shape[0] - 1
    # shell[k]: sum of |mat[i, j]| with max(i, j) == k
    row = np.cumsum(mag, axis=1)[np.arange(n + 1), np.arange(n + 1)]
    col = np.cumsum(mag, axis=0)[np.arange(n + 1), np.arange(n + 1)]
    shell = row + col - np.diag(mag)
    tail = np.cumsum(shell[::-1])[::-1]
    above = np.nonzero(tail > tol)[0]
    return int(above[-1]) if above.size else 0


def displacement_trace(op: FockOperator | np.ndarray, alphas) -> np.ndarray:
    """``Tr(op D(alpha))`` for each ``alpha``, without building the matrices.

    Entries of ``op`` whose total magnitude is below 1e-15 are skipped; as
    ``|<n|D|m>| <= 1`` this moves the result by at most that amount.
    """
    mat = op.mat if isinstance(op, FockOperator) else np.asarray(op, dtype=complex)
    n = effective_cutoff(mat)
    mat = mat[: n + 1, : n + 1]
    alphas = np.asarray(alphas, dtype=complex)
    if not np.all(np.isfinite(alphas)):
        raise InvalidArgument("displacement amplitude must be finite")
    flat = alphas.ravel()
    out = np.zeros(flat.size, dtype=complex)
    diags = [(np.diag(mat, a), np.diag(mat, -a)) for a in range(n + 1)]
    for start in range(0, flat.size, _CHUNK):
        x, phase = _polar(flat[start : start + _CHUNK])
        acc = np.zeros(x.size, dtype=complex)
        for a, (lower, upper) in enumerate(diags):
            if not (lower.any() or upper.any()):
                continue
            g = _laguerre_rows(x, a, n - a)
            s = lower.real @ g + 1j * (lower.imag @ g)
            acc += phase**a * s
            if a:
                s = upper.real @ g + 1j * (upper.imag @ g)
                acc += (-phase.conj()) ** a * s
        out[start : start + x.size] = acc
    return out.reshape(alphas.shape)


# ---------------------------------------------------------------------------
# Inner products
# ---------------------------------------------------------------------------

def overlap(psi: FockVector, phi: FockVector) -> complex:
    """``<psi|phi>``."""
    _same_cutoff(psi, phi)
    return complex(np.vdot(psi.amps, phi.amps))


def expectation(rho: FockOperator | FockVector, op: FockOperator) -> complex:
    """``Tr(rho op)``."""
    rho = as_density(rho)
    _same_cutoff(rho, op)
    return complex(np.einsum("ij,ji->", rho.mat, op.mat))
