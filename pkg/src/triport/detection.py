"""Triple-coupler homodyne detection at finite local-oscillator amplitude.

Mode 1 carries the signal, mode 2 the local oscillator ``|z>`` with real
``z > 0`` and mode 3 the probe.  The oscillator never enters the Fock
truncation: pushed through the coupler it becomes the output displacements
``beta_j = z T[j, 2]``, so

    P(n1, n2, n3) = |<n1 n2 n3| D1(beta_1) D2(beta_2) D3(beta_3) U (psi_S, 0, psi_P)>|^2

with only the few-photon signal and probe propagated by :func:`apply_tritter`.

Each count triple maps to one outcome ``(y1, y2)`` through
:func:`reduce_counts`.  These outcomes sit on a triangular lattice with
spacing ``1/z``, so histograms are binned on cells aligned with that lattice
(:func:`lattice_bins`); otherwise the bins alias against the lattice and the
comparison with the limiting density carries an artificial floor.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Iterator, NamedTuple

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import AccuracyError, InvalidArgument
from .fock import StateSpec, displaced_number_overlap, make_state, vacuum
from .phasespace import GridSpec, RealGrid, k_sp_trace
from .tritter import THETA, ThreeModeState, apply_tritter, reduce_counts, tritter_matrix

__all__ = [
    "required_count_cutoff",
    "SimConfig",
    "CountDistribution",
    "OutcomeSample",
    "OutcomeSamples",
    "output_count_distribution",
    "sample_outcomes",
    "outcome_grid",
    "outcome_moments",
    "lattice_bins",
    "empirical_density",
    "exact_density",
    "reference_density",
    "compare_densities",
    "convergence_study",
]

SAMPLE_CHUNK = 1 << 16
MAX_DEFICIT = 1e-4


def required_count_cutoff(z_mag: float) -> int:
    """Smallest per-mode count cutoff accepted for a given ``|z|``."""
    return math.ceil(z_mag**2 / 3 + 8 * z_mag / math.sqrt(3) + 10)


def _signal_center(spec: StateSpec) -> tuple[float, float]:
    if spec.kind == "coherent":
        a = complex(spec.value)
        return a.real, -a.imag
    return 0.0, 0.0


@dataclass(frozen=True)
class SimConfig:
    """Everything that determines a detection run.

    ``bins`` of ``None`` means lattice-aligned bins of roughly ``bin_width``
    covering ``half_width`` around the signal's mean outcome.
    """

    z_mag: float
    signal: StateSpec
    probe: StateSpec = field(default_factory=vacuum)
    cutoff_sp: int = 30
    count_cutoff: int | None = None
    n_samples: int = 100_000
    seed: int = 1
    bins: GridSpec | None = None
    bin_width: float = 1 / 3
    half_width: float = 5.0

    def __post_init__(self):
        if isinstance(self.signal, str):
            object.__setattr__(self, "signal", StateSpec.parse(self.signal))
        if isinstance(self.probe, str):
            object.__setattr__(self, "probe", StateSpec.parse(self.probe))
        if isinstance(self.bins, dict):
            object.__setattr__(self, "bins", GridSpec(**self.bins))
        if not (math.isfinite(self.z_mag) and self.z_mag > 0):
            raise InvalidArgument("z_mag must be positive")
        need = required_count_cutoff(self.z_mag)
        if self.count_cutoff is None:
            object.__setattr__(self, "count_cutoff", need)
        elif self.count_cutoff < need:
            raise InvalidArgument(
                f"count_cutoff {self.count_cutoff} below {need} required at z_mag={self.z_mag}"
            )
        if self.cutoff_sp < 0:
            raise InvalidArgument("cutoff_sp must be non-negative")
        if self.n_samples < 0:
            raise InvalidArgument("n_samples must be non-negative")
        if not 0 <= self.seed < 2**64:
            raise InvalidArgument("seed must be an unsigned 64-bit integer")
        if not (self.bin_width > 0 and self.half_width > 0):
            raise InvalidArgument("bin_width and half_width must be positive")

    def grid(self) -> GridSpec:
        if self.bins is not None:
            return self.bins
        return lattice_bins(self.z_mag, _signal_center(self.signal), self.half_width, self.bin_width)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["signal"] = self.signal.to_text()
        d["probe"] = self.probe.to_text()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise InvalidArgument(f"unknown config keys: {sorted(extra)}")
        return cls(**d)


@dataclass(frozen=True)
class CountDistribution:
    """``probs[n1, n2, n3]`` for counts up to the cutoff; ``mass_deficit`` is
    the probability that fell outside."""

    probs: np.ndarray
    mass_deficit: float
    z_mag: float

    @property
    def count_cutoff(self) -> int:
        return self.probs.shape[0] - 1

    def outcomes(self) -> tuple[np.ndarray, np.ndarray]:
        """``(y1, y2)`` of every cell, shaped like ``probs``."""
        return outcome_grid(self.count_cutoff, self.z_mag)


class OutcomeSample(NamedTuple):
    y1: float
    y2: float


@dataclass(frozen=True)
class OutcomeSamples:
    """Columnar store of sampled outcomes and the counts that produced them."""

    y1: np.ndarray
    y2: np.ndarray
    counts: np.ndarray

    def __len__(self) -> int:
        return self.y1.size

    def __iter__(self) -> Iterator[OutcomeSample]:
        for a, b in zip(self.y1.tolist(), self.y2.tolist()):
            yield OutcomeSample(a, b)


# ---------------------------------------------------------------------------
# Exact count statistics
# ---------------------------------------------------------------------------

def output_count_distribution(cfg: SimConfig) -> CountDistribution:
    """Joint photocount distribution of the three output detectors.

    Raises :class:`AccuracyError` if more than ``1e-4`` of the probability
    is lost to the signal/probe or count truncations.
    """
    psi_s = make_state(cfg.signal, cfg.cutoff_sp)
    psi_p = make_state(cfg.probe, cfg.cutoff_sp)
    inner = apply_tritter(ThreeModeState.product(psi_s, make_state(vacuum(), 0), psi_p))
    amps = inner.amps
    m = amps.shape[0] - 1
    k = cfg.count_cutoff
    betas = cfg.z_mag * tritter_matrix().t[:, 1]
    d1, d2, d3 = (displaced_number_overlap(b, k, m) for b in betas)
    out = np.tensordot(d1, amps, axes=(1, 0))  # (n1, m2, m3)
    out = np.einsum("bj,ajk->abk", d2, out)
    out = np.einsum("ck,abk->abc", d3, out)
    probs = out.real**2 + out.imag**2
    deficit = max(0.0, 1.0 - float(probs.sum()))
    if deficit > MAX_DEFICIT:
        raise AccuracyError(
            f"mass deficit {deficit:.3g} exceeds {MAX_DEFICIT}; raise cutoff_sp or count_cutoff"
        )
    probs.flags.writeable = False
    return CountDistribution(probs, deficit, cfg.z_mag)


def outcome_grid(count_cutoff: int, z_mag: float) -> tuple[np.ndarray, np.ndarray]:
    n = np.arange(count_cutoff + 1, dtype=float)
    ph = np.exp(-1j * THETA)
    f = n[:, None, None] * ph[0] + n[None, :, None] * ph[1] + n[None, None, :] * ph[2]
    # same arithmetic as reduce_counts, written for the full cube
    f2 = f / math.sqrt(3)
    return math.sqrt(3) * f2.real / z_mag, math.sqrt(3) * f2.imag / z_mag


def outcome_moments(dist: CountDistribution) -> dict:
    """Exact means and variances of ``y1`` and ``y2`` under ``dist``
    (conditioned on the captured mass)."""
    y1, y2 = dist.outcomes()
    p = dist.probs / dist.probs.sum()
    m1, m2 = float((p * y1).sum()), float((p * y2).sum())
    v1 = float((p * (y1 - m1) ** 2).sum())
    v2 = float((p * (y2 - m2) ** 2).sum())
    return {"mean_y1": m1, "mean_y2": m2, "var_y1": v1, "var_y2": v2}


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------

def _draw_chunk(cdf: np.ndarray, seed: int, chunk: int, size: int) -> np.ndarray:
    # chunk c owns counter block c << 128, so streams never overlap
    gen = np.random.Generator(np.random.Philox(key=seed, counter=chunk << 128))
    u = gen.random(size) * cdf[-1]
    idx = np.searchsorted(cdf, u, side="right")
    np.minimum(idx, cdf.size - 1, out=idx)
    return idx


def sample_outcomes(dist: CountDistribution, cfg: SimConfig, threads: int = 1) -> OutcomeSamples:
    """Draw ``cfg.n_samples`` outcomes by inverse CDF over the row-major cells.

    Uniforms come from Philox-4x64 keyed by ``cfg.seed``; samples
    ``[c * 2**16, (c+1) * 2**16)`` use counter block ``c``.  The output is
    identical for any ``threads``.  Draws are conditioned on the captured
    mass.
    """
    n = cfg.n_samples
    shape = dist.probs.shape
    if n == 0:
        empty = np.empty(0)
        return OutcomeSamples(empty, empty, np.empty((0, 3), dtype=np.int64))
    cdf = np.cumsum(dist.probs.ravel())
    jobs = [(c, min(SAMPLE_CHUNK, n - c * SAMPLE_CHUNK)) for c in range(-(-n // SAMPLE_CHUNK))]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(lambda job: _draw_chunk(cdf, cfg.seed, *job), jobs))
    else:
        parts = [_draw_chunk(cdf, cfg.seed, *job) for job in jobs]
    flat = np.concatenate(parts)
    counts = np.stack(np.unravel_index(flat, shape), axis=-1)
    y1, y2 = reduce_counts(counts, dist.z_mag)
    return OutcomeSamples(y1, y2, counts)


# ---------------------------------------------------------------------------
# Densities on the (y1, y2) plane
# ---------------------------------------------------------------------------

def lattice_bins(
    z_mag: float,
    center: tuple[float, float] = (0.0, 0.0),
    half_width: float = 5.0,
    target_width: float = 1 / 3,
) -> GridSpec:
    """Bins whose edges fall halfway between outcome lattice points.

    Outcomes lie at ``(i / 2z, j sqrt(3) / 2z)`` with ``i = j (mod 2)``.
    Cells of ``k/z`` by ``k sqrt(3)/z`` with ``k = round(target_width * z)``
    each hold exactly ``2 k^2`` lattice points.
    """
    if not (z_mag > 0 and half_width > 0 and target_width > 0):
        raise InvalidArgument("z_mag, half_width and target_width must be positive")
    k = max(1, round(target_width * z_mag))
    h1, h2 = k / z_mag, k * math.sqrt(3) / z_mag
    x0 = h1 * math.floor((center[0] - half_width) / h1) + 1 / (4 * z_mag)
    y0 = h2 * math.floor((center[1] - half_width) / h2) + math.sqrt(3) / (4 * z_mag)
    nx = math.ceil(2 * half_width / h1) + 1
    ny = math.ceil(2 * half_width / h2) + 1
    return GridSpec(x0, x0 + nx * h1, y0, y0 + ny * h2, nx, ny)


def _histogram(y1, y2, weights, bins: GridSpec) -> tuple[np.ndarray, float]:
    h, _, _ = np.histogram2d(
        np.ravel(y1), np.ravel(y2), bins=[bins.x_edges, bins.y_edges], weights=weights
    )
    return h, float(h.sum())


def empirical_density(samples: OutcomeSamples, bins: GridSpec) -> tuple[RealGrid, float]:
    """Normalized 2D histogram and the fraction of samples outside ``bins``.

    The grid integrates to ``1 - clipped``.
    """
    n = len(samples)
    if n == 0:
        return RealGrid(bins, np.zeros((bins.nx, bins.ny)), "y_plane"), 0.0
    h, inside = _histogram(samples.y1, samples.y2, None, bins)
    return RealGrid(bins, h / (n * bins.cell_area), "y_plane"), 1.0 - inside / n


def exact_density(dist: CountDistribution, bins: GridSpec) -> tuple[RealGrid, float]:
    """Histogram of the full count table, weighted by its probabilities.

    The sampling-noise-free counterpart of :func:`empirical_density`.
    """
    y1, y2 = dist.outcomes()
    total = float(dist.probs.sum())
    h, inside = _histogram(y1, y2, dist.probs.ravel(), bins)
    return RealGrid(bins, h / (total * bins.cell_area), "y_plane"), 1.0 - inside / total


def reference_density(rho_s, rho_p, bins: GridSpec, *, cell_average: bool = False, order: int = 5) -> RealGrid:
    """Limiting outcome density ``P(y1, y2) = K_SP(y1 - i y2)``.

    By default sampled at the bin centers.  ``cell_average=True`` instead
    averages over each bin with an ``order x order`` Gauss-Legendre rule,
    which is what a histogram estimates.
    """
    if cell_average:
        t, w = leggauss(order)
        ox = 0.5 * bins.dx * t
        oy = 0.5 * bins.dy * t
        pts = (
            bins.x_centers[:, None, None, None]
            + ox[None, None, :, None]
            + 1j * (bins.y_centers[None, :, None, None] + oy[None, None, None, :])
        )
        vals = k_sp_trace(rho_s, rho_p, np.conj(pts))
        vals = np.einsum("abij,i,j->ab", vals, w, w) / 4
    else:
        vals = k_sp_trace(rho_s, rho_p, np.conj(bins.points()))
    return RealGrid(bins, vals, "y_plane")


def compare_densities(a: RealGrid, b: RealGrid) -> dict:
    """``{"l1": sum |a-b| * cell_area, "max_abs": max |a-b|}``."""
    if a.spec != b.spec or a.axis_label != b.axis_label:
        raise InvalidArgument("grids have different specs")
    diff = np.abs(a.values - b.values)
    return {"l1": float(diff.sum() * a.spec.cell_area), "max_abs": float(diff.max())}


def convergence_study(
    signal: StateSpec,
    probe: StateSpec,
    z_values,
    *,
    cutoff_sp: int = 30,
    bin_width: float = 1 / 3,
    half_width: float = 5.0,
) -> dict:
    """Exact-distribution l1 distance to the limiting density for each ``|z|``.

    Returns the per-``z`` rows and the least-squares slope of
    ``log l1`` against ``log z``.
    """
    z_values = [float(z) for z in z_values]
    if len(z_values) < 3:
        raise InvalidArgument("need at least three z values")
    rho_s = make_state(signal, cutoff_sp)
    rho_p = make_state(probe, cutoff_sp)
    rows = []
    for z in z_values:
        cfg = SimConfig(z, signal, probe, cutoff_sp=cutoff_sp, bin_width=bin_width, half_width=half_width)
        dist = output_count_distribution(cfg)
        bins = cfg.grid()
        emp, clipped = exact_density(dist, bins)
        ref = reference_density(rho_s, rho_p, bins, cell_average=True)
        cmp = compare_densities(emp, ref)
        rows.append(
            {"z_mag": z, "l1": cmp["l1"], "max_abs": cmp["max_abs"],
             "mass_deficit": dist.mass_deficit, "clipped_fraction": clipped}
        )
    slope = float(np.polyfit(np.log(z_values), np.log([r["l1"] for r in rows]), 1)[0])
    return {"rows": rows, "slope": slope}
