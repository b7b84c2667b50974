"""The symmetric three-port coupler and its photocurrents.

Mode convention: output annihilators are ``b_j = sum_k T[j, k] a_k``.  On
states this means an input photon created by ``a_k^dag`` leaves as
``sum_j T[j, k] b_j^dag``; :func:`apply_tritter` implements exactly that
substitution on creation-operator polynomials, one total-photon sector at a
time, so photon number is conserved by construction.

Modes are numbered 1..3 in docstrings and 0..2 in arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import reduce

import numpy as np
import scipy.sparse as sp
from scipy.special import gammaln

from .errors import ConstructionError, InvalidArgument
from .fock import FockVector

__all__ = [
    "CouplerMatrix",
    "tritter_matrix",
    "DecompositionStep",
    "Decomposition",
    "decompose_tritter",
    "ThreeModeState",
    "apply_tritter",
    "mode_operators",
    "number_operators",
    "photocurrent_operators",
    "ft_photocurrent_operators",
    "ft_photocurrent_closed_form",
    "ft_identity_residual",
    "expectation3",
    "reduce_counts",
]

OMEGA = np.exp(2j * np.pi / 3)
THETA = 2 * np.pi / 3 * np.arange(3)
PHI1 = math.acos(1 / 3)
PHI2 = PHI1 / 2
MAX_TOTAL_PHOTONS = 150


@dataclass(frozen=True)
class CouplerMatrix:
    """``t[j, k]``: amplitude from input ``k`` to output ``j``."""

    t: np.ndarray

    def __post_init__(self):
        t = np.array(self.t, dtype=complex)
        if t.shape != (3, 3):
            raise InvalidArgument("coupler matrix must be 3x3")
        t.flags.writeable = False
        object.__setattr__(self, "t", t)

    def unitarity_residual(self) -> float:
        return float(np.abs(self.t @ self.t.conj().T - np.eye(3)).max())

    def moduli_residual(self) -> float:
        """Largest deviation of ``|t_jk|^2`` from 1/3."""
        return float(np.abs(np.abs(self.t) ** 2 - 1 / 3).max())


def tritter_matrix() -> CouplerMatrix:
    """``(1/sqrt 3) [[1, 1, 1], [1, w, w*], [1, w*, w]]`` with ``w = exp(2 pi i/3)``.

    Row ``n`` is ``exp(i theta_n (k-1)) / sqrt 3`` with ``theta_n = 2 pi (n-1)/3``.
    """
    n, k = np.meshgrid(np.arange(3), np.arange(3), indexing="ij")
    return CouplerMatrix(np.exp(1j * THETA[n] * k) / math.sqrt(3))


# ---------------------------------------------------------------------------
# Decomposition into 50:50 beam splitters and phase shifters
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DecompositionStep:
    """``kind`` is ``"beam_splitter"`` (modes is a pair) or ``"phase_shift"``
    (modes holds one mode, ``angle`` in radians).  Modes count from 1."""

    kind: str
    modes: tuple[int, ...]
    angle: float = 0.0

    def __post_init__(self):
        if self.kind not in ("beam_splitter", "phase_shift"):
            raise InvalidArgument(f"unknown step kind {self.kind!r}")
        want = 2 if self.kind == "beam_splitter" else 1
        if len(self.modes) != want or not all(m in (1, 2, 3) for m in self.modes):
            raise InvalidArgument(f"bad modes {self.modes} for {self.kind}")
        if len(set(self.modes)) != len(self.modes):
            raise InvalidArgument("beam splitter needs two distinct modes")
        if not math.isfinite(self.angle):
            raise InvalidArgument("angle must be finite")

    def matrix(self) -> np.ndarray:
        m = np.eye(3, dtype=complex)
        if self.kind == "phase_shift":
            i = self.modes[0] - 1
            m[i, i] = np.exp(1j * self.angle)
        else:
            i, j = (x - 1 for x in self.modes)
            s = 1 / math.sqrt(2)
            m[i, i] = m[j, j] = s
            m[i, j] = m[j, i] = 1j * s
        return m


@dataclass(frozen=True)
class Decomposition:
    """``steps`` in the order light meets them.

    ``out_phases`` and ``in_phases`` are the diagonal phases with
    ``diag(exp(i out)) @ recomposed @ diag(exp(i in)) == tritter_matrix().t``.
    """

    steps: tuple[DecompositionStep, ...]
    recomposed: np.ndarray
    out_phases: np.ndarray
    in_phases: np.ndarray

    @property
    def d_out(self) -> np.ndarray:
        return np.diag(np.exp(1j * self.out_phases))

    @property
    def d_in(self) -> np.ndarray:
        return np.diag(np.exp(1j * self.in_phases))

    def residual(self, target: CouplerMatrix | None = None) -> float:
        """Largest entry of ``D_out R D_in - T`` against ``target`` (default
        the ideal tritter)."""
        target = (target or tritter_matrix()).t
        return float(np.abs(self.d_out @ self.recomposed @ self.d_in - target).max())


def decompose_tritter(tol: float = 1e-10) -> Decomposition:
    """Realize the symmetric tritter with four 50:50 beam splitters.

    The inner Mach-Zehnder on modes 2, 3 with phase ``arccos(1/3)`` on mode
    3 sets a 1/3 : 2/3 split; ``arccos(1/3)/2`` on mode 1 tunes the outer
    interference so that every modulus is ``1/sqrt 3``.  What is left is a pair
    of diagonal phase screens, returned explicitly.
    """
    steps = (
        DecompositionStep("beam_splitter", (1, 2)),
        DecompositionStep("phase_shift", (1,), PHI2),
        DecompositionStep("beam_splitter", (2, 3)),
        DecompositionStep("phase_shift", (3,), PHI1),
        DecompositionStep("beam_splitter", (2, 3)),
        DecompositionStep("beam_splitter", (1, 2)),
    )
    rec = reduce(lambda acc, st: st.matrix() @ acc, steps, np.eye(3, dtype=complex))
    if np.abs(np.abs(rec) - 1 / math.sqrt(3)).max() > tol:
        raise ConstructionError("recomposed coupler is not balanced")
    target = tritter_matrix().t
    ratio = np.angle(target / rec)
    in_ph = ratio[0, :]
    out_ph = ratio[:, 0] - in_ph[0]
    dec = Decomposition(steps, rec, out_ph, in_ph)
    if dec.residual() > tol:
        raise ConstructionError(f"external phases leave residual {dec.residual():.3g}")
    return dec


# ---------------------------------------------------------------------------
# Three-mode states
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ThreeModeState:
    """Pure state with ``amps[n1, n2, n3] = <n1 n2 n3|psi>``."""

    amps: np.ndarray

    def __post_init__(self):
        amps = np.array(self.amps, dtype=complex)
        if amps.ndim != 3:
            raise InvalidArgument("three-mode amplitudes need three axes")
        amps.flags.writeable = False
        object.__setattr__(self, "amps", amps)

    @property
    def cutoffs(self) -> tuple[int, int, int]:
        return tuple(s - 1 for s in self.amps.shape)

    @property
    def norm(self) -> float:
        return float(np.vdot(self.amps, self.amps).real)

    @classmethod
    def product(cls, *modes: FockVector) -> "ThreeModeState":
        if len(modes) != 3:
            raise InvalidArgument("need exactly three single-mode states")
        return cls(np.einsum("i,j,k->ijk", *(m.amps for m in modes)))

    def flat(self) -> np.ndarray:
        return self.amps.ravel()

    def sector_norms(self) -> np.ndarray:
        """Probability in each total-photon-number sector."""
        n1, n2, n3 = np.indices(self.amps.shape)
        tot = (n1 + n2 + n3).ravel()
        return np.bincount(tot, weights=np.abs(self.amps.ravel()) ** 2)


def _times_linear(p: np.ndarray, c: np.ndarray) -> np.ndarray:
    d = p.shape[0]
    out = np.zeros((d + 1,) * 3, dtype=complex)
    out[1:, :d, :d] += c[0] * p
    out[:d, 1:, :d] += c[1] * p
    out[:d, :d, 1:] += c[2] * p
    return out


def _add(p: np.ndarray | None, q: np.ndarray | complex) -> np.ndarray:
    q = np.asarray(q, dtype=complex)
    if q.ndim == 0:
        q = q.reshape(1, 1, 1)
    if p is None:
        return q.copy()
    if q.shape[0] > p.shape[0]:
        p, q = q.copy(), p
    p[: q.shape[0], : q.shape[1], : q.shape[2]] += q
    return p


def _horner(coeffs, lin):
    """``sum_m coeffs[m] * L^m`` for polynomial-valued ``coeffs`` (``None`` = 0)."""
    acc = None
    for c in reversed(coeffs):
        if acc is not None:
            acc = _times_linear(acc, lin)
        if c is not None:
            acc = _add(acc, c)
    return acc


def _log_sqrt_fact(shape):
    idx = np.indices(shape)
    return 0.5 * sum(gammaln(i + 1) for i in idx)


def apply_tritter(
    state: ThreeModeState,
    coupler: CouplerMatrix | None = None,
    max_total: int = MAX_TOTAL_PHOTONS,
) -> ThreeModeState:
    """Propagate a three-mode state through the coupler.

    Writes the input as a polynomial in creation operators, substitutes
    ``a_k^dag -> sum_j T[j, k] b_j^dag`` and reads the output amplitudes
    back.  The result has every cutoff equal to the largest total photon
    number present in the input, so nothing is truncated.
    """
    t = (coupler or tritter_matrix()).t
    amps = state.amps
    nz = np.argwhere(amps != 0)
    total = int(nz.sum(axis=1).max()) if nz.size else 0
    if total > max_total:
        raise InvalidArgument(f"{total} photons exceed the budget of {max_total}")
    scaled = amps * np.exp(-_log_sqrt_fact(amps.shape))
    lin = [t[:, k] for k in range(3)]
    n1, n2, n3 = amps.shape

    def inner(i, j):
        row = scaled[i, j]
        if not row.any():
            return None
        return _horner([c if c != 0 else None for c in row], lin[2])

    def middle(i):
        parts = [inner(i, j) for j in range(n2)]
        if all(p is None for p in parts):
            return None
        return _horner(parts, lin[1])

    poly = _horner([middle(i) for i in range(n1)], lin[0])
    out = np.zeros((total + 1,) * 3, dtype=complex)
    if poly is not None:
        d = min(poly.shape[0], total + 1)
        out[:d, :d, :d] = poly[:d, :d, :d]
    mask = np.add.reduce(np.indices(out.shape)) <= total
    out = np.where(mask, out * np.exp(_log_sqrt_fact(out.shape)), 0)
    return ThreeModeState(out)


# ---------------------------------------------------------------------------
# Operators on the truncated three-mode space
# ---------------------------------------------------------------------------

def _cutoffs3(cutoffs) -> tuple[int, int, int]:
    if np.ndim(cutoffs) == 0:
        cutoffs = (int(cutoffs),) * 3
    cutoffs = tuple(int(c) for c in cutoffs)
    if len(cutoffs) != 3 or min(cutoffs) < 0:
        raise InvalidArgument(f"bad three-mode cutoffs {cutoffs}")
    if math.prod(c + 1 for c in cutoffs) > 200_000:
        raise InvalidArgument("three-mode space too large for explicit operators")
    return cutoffs


def mode_operators(cutoffs) -> list[sp.csr_matrix]:
    """Annihilators ``a_1, a_2, a_3`` as sparse matrices on the product space."""
    cutoffs = _cutoffs3(cutoffs)
    eyes = [sp.identity(c + 1, dtype=complex, format="csr") for c in cutoffs]
    ops = []
    for k, c in enumerate(cutoffs):
        a = sp.diags(np.sqrt(np.arange(1, c + 1)), 1, shape=(c + 1, c + 1), dtype=complex)
        factors = [a if i == k else eyes[i] for i in range(3)]
        ops.append(sp.kron(sp.kron(factors[0], factors[1]), factors[2], format="csr"))
    return ops


def number_operators(cutoffs) -> list[sp.csr_matrix]:
    return [a.conj().T @ a for a in mode_operators(cutoffs)]


def photocurrent_operators(cutoffs) -> list[sp.csr_matrix]:
    """``I_n = (1/3) sum_{k,l} exp(i theta_n (l-k)) a_k^dag a_l`` for n = 1..3."""
    a = mode_operators(cutoffs)
    pairs = [[a[k].conj().T @ a[l] for l in range(3)] for k in range(3)]
    out = []
    for n in range(3):
        op = sum(
            np.exp(1j * THETA[n] * (l - k)) * pairs[k][l] for k in range(3) for l in range(3)
        )
        out.append(sp.csr_matrix(op / 3))
    return out


def ft_photocurrent_operators(cutoffs) -> list[sp.csr_matrix]:
    """Discrete Fourier transform of the photocurrents,
    ``F_s = (1/sqrt 3) sum_n I_n exp(-i theta_n (s-1))``."""
    currents = photocurrent_operators(cutoffs)
    return [
        sp.csr_matrix(sum(np.exp(-1j * THETA[n] * s) * currents[n] for n in range(3)) / math.sqrt(3))
        for s in range(3)
    ]


def ft_photocurrent_closed_form(cutoffs) -> list[sp.csr_matrix]:
    """Same operators written directly: ``F_s = (1/sqrt 3) sum_k a_k^dag a_{k+s-1}``
    with the mode index taken mod 3."""
    a = mode_operators(cutoffs)
    return [
        sp.csr_matrix(sum(a[k].conj().T @ a[(k + s) % 3] for k in range(3)) / math.sqrt(3))
        for s in range(3)
    ]


def ft_identity_residual(coupler: CouplerMatrix | None = None) -> float:
    """Compare the Fourier transformed photocurrents of ``coupler`` with the
    closed form ``F_s = (1/sqrt 3) sum_k a_k^dag a_{k+s-1}``.

    Works on the coefficient arrays ``c[s, k, l]`` of ``a_k^dag a_l``, which
    fix the bilinear operators exactly at any cutoff.
    """
    t = (coupler or tritter_matrix()).t
    currents = np.einsum("nk,nl->nkl", t.conj(), t)  # I_n = b_n^dag b_n
    phases = np.exp(-1j * np.outer(np.arange(3), THETA))  # [s, n]
    ft = np.einsum("sn,nkl->skl", phases, currents) / math.sqrt(3)
    closed = np.zeros((3, 3, 3))
    for s in range(3):
        for k in range(3):
            closed[s, k, (k + s) % 3] = 1 / math.sqrt(3)
    return float(np.abs(ft - closed).max())


def expectation3(state: ThreeModeState, op) -> complex:
    v = state.flat()
    return complex(np.vdot(v, op @ v))


def reduce_counts(counts, z_mag: float):
    """Map photocounts ``(n1, n2, n3)`` to the homodyne pair ``(y1, y2)``.

    The count triple is Fourier transformed like the photocurrent operators;
    the second component ``F_2`` gives ``y1 = sqrt 3 Re F_2 / |z|`` and
    ``y2 = sqrt 3 Im F_2 / |z|``.  ``counts`` may be any array with a
    trailing axis of length 3; returns two arrays (or two floats).
    """
    if not (np.isfinite(z_mag) and z_mag > 0):
        raise InvalidArgument("local-oscillator amplitude must be positive")
    c = np.asarray(counts, dtype=float)
    if c.shape[-1] != 3:
        raise InvalidArgument("counts need a trailing axis of length 3")
    f2 = (c @ np.exp(-1j * THETA)) / math.sqrt(3)
    y1 = math.sqrt(3) * f2.real / z_mag
    y2 = math.sqrt(3) * f2.imag / z_mag
    if c.ndim == 1:
        return float(y1), float(y2)
    return y1, y2
