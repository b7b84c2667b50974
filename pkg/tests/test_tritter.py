import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from triport.errors import InvalidArgument
from triport.fock import coherent, coherent_amplitudes, make_state, number, vacuum
from triport.tritter import (
    CouplerMatrix,
    DecompositionStep,
    ThreeModeState,
    apply_tritter,
    decompose_tritter,
    expectation3,
    ft_identity_residual,
    ft_photocurrent_closed_form,
    ft_photocurrent_operators,
    number_operators,
    photocurrent_operators,
    reduce_counts,
    tritter_matrix,
)

W = np.exp(2j * np.pi / 3)


def permanent(m):
    n = m.shape[0]
    return sum(np.prod([m[i, p[i]] for i in range(n)]) for p in itertools.permutations(range(n)))


def fock_transition(t, out_counts, in_counts):
    # <m|U|n> = perm(T[rows m, cols n]) / sqrt(prod m! prod n!)
    rows = [j for j, c in enumerate(out_counts) for _ in range(c)]
    cols = [k for k, c in enumerate(in_counts) for _ in range(c)]
    if len(rows) != len(cols):
        return 0.0
    if not rows:
        return 1.0
    norm = math.sqrt(math.prod(math.factorial(c) for c in (*out_counts, *in_counts)))
    return permanent(t[np.ix_(rows, cols)]) / norm


def random_state(seed, total):
    rng = np.random.default_rng(seed)
    amps = rng.normal(size=(total + 1,) * 3) + 1j * rng.normal(size=(total + 1,) * 3)
    amps[np.add.reduce(np.indices(amps.shape)) > total] = 0
    return ThreeModeState(amps / np.linalg.norm(amps))


# --- coupler matrix and decomposition ------------------------------------------

def test_tritter_matrix_entries():
    want = np.array([[1, 1, 1], [1, W, W.conjugate()], [1, W.conjugate(), W]]) / math.sqrt(3)
    np.testing.assert_allclose(tritter_matrix().t, want, atol=1e-15)


def test_tritter_is_balanced_unitary():
    t = tritter_matrix()
    assert t.unitarity_residual() <= 1e-12
    assert t.moduli_residual() <= 1e-12


def test_coupler_validation():
    with pytest.raises(InvalidArgument):
        CouplerMatrix(np.eye(2))


def test_decomposition_uses_four_balanced_beam_splitters():
    dec = decompose_tritter()
    bs = [s for s in dec.steps if s.kind == "beam_splitter"]
    assert len(bs) == 4
    for s in dec.steps:
        m = s.matrix()
        np.testing.assert_allclose(m @ m.conj().T, np.eye(3), atol=1e-15)
    for s in bs:
        i, j = (x - 1 for x in s.modes)
        assert abs(abs(s.matrix()[i, j]) ** 2 - 0.5) < 1e-15


def test_decomposition_recomposes_up_to_diagonal_phases():
    dec = decompose_tritter()
    rec = np.eye(3, dtype=complex)
    for s in dec.steps:
        rec = s.matrix() @ rec
    np.testing.assert_allclose(rec, dec.recomposed, atol=1e-15)
    # phase-equivalence oracle: rec / T must factor as exp(i (a_j + b_k)),
    # i.e. have unit modulus and vanishing cross ratios
    t = tritter_matrix().t
    ratio = rec / t
    np.testing.assert_allclose(np.abs(ratio), 1.0, atol=1e-12)
    cross = ratio * ratio[0, 0] / (ratio[:, :1] * ratio[:1, :])
    np.testing.assert_allclose(cross, 1.0, atol=1e-12)
    assert dec.residual() <= 1e-10


def test_decomposition_phases_match_rank_one_fit():
    # T / R = u v^T with unimodular u, v; the leading singular pair recovers
    # both phase screens without any angle unwrapping
    dec = decompose_tritter()
    t = tritter_matrix().t
    uu, sv, vh = np.linalg.svd(t / dec.recomposed)
    assert abs(sv[0] - 3) < 1e-12 and sv[1] < 1e-12
    u = uu[:, 0] / np.abs(uu[:, 0])
    v = vh[0] / np.abs(vh[0])
    np.testing.assert_allclose(np.diag(u) @ dec.recomposed @ np.diag(v), t, atol=1e-12)
    np.testing.assert_allclose(dec.d_out @ dec.recomposed @ dec.d_in, t, atol=1e-12)


def test_decomposition_residual_against_other_target():
    t = tritter_matrix().t.copy()
    t[0, 0] += 1e-3
    assert decompose_tritter().residual(CouplerMatrix(t)) > 1e-4


def test_bad_steps_rejected():
    with pytest.raises(InvalidArgument):
        DecompositionStep("mirror", (1,))
    with pytest.raises(InvalidArgument):
        DecompositionStep("beam_splitter", (1, 1))
    with pytest.raises(InvalidArgument):
        DecompositionStep("phase_shift", (4,), 0.1)


# --- state propagation ----------------------------------------------------------

@pytest.mark.parametrize("k", [0, 1, 2])
def test_single_photon_splits_evenly(k):
    modes = [make_state(vacuum(), 1) for _ in range(3)]
    modes[k] = make_state(number(1), 1)
    out = apply_tritter(ThreeModeState.product(*modes))
    t = tritter_matrix().t
    got = np.array([out.amps[1, 0, 0], out.amps[0, 1, 0], out.amps[0, 0, 1]])
    np.testing.assert_allclose(got, t[:, k], atol=1e-15)
    np.testing.assert_allclose(np.abs(got) ** 2, 1 / 3, atol=1e-15)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 4))
def test_propagation_matches_permanents(seed, total):
    state = random_state(seed, total)
    out = apply_tritter(state)
    t = tritter_matrix().t
    want = np.zeros_like(out.amps)
    for n in zip(*np.nonzero(state.amps)):
        for m in itertools.product(range(total + 1), repeat=3):
            if sum(m) == sum(n):
                want[m] += fock_transition(t, m, n) * state.amps[n]
    np.testing.assert_allclose(out.amps, want, atol=1e-13)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 6))
def test_propagation_conserves_each_photon_sector(seed, total):
    state = random_state(seed, total)
    out = apply_tritter(state)
    np.testing.assert_allclose(out.sector_norms(), state.sector_norms(), atol=1e-13)
    assert out.cutoffs == (total,) * 3


def test_coherent_inputs_map_to_coherent_outputs():
    alphas = np.array([1.2 + 0.3j, -0.5j, 0.9])
    cutoff = 25
    state = ThreeModeState.product(*(make_state(coherent(a), cutoff) for a in alphas))
    out = apply_tritter(state)
    beta = tritter_matrix().t @ alphas
    c = [coherent_amplitudes(b, cutoff) for b in beta]
    want = np.einsum("i,j,k->ijk", *c)
    # both sides are exact on sectors up to the input cutoff
    mask = np.add.reduce(np.indices(want.shape)) <= cutoff
    low = out.amps[: cutoff + 1, : cutoff + 1, : cutoff + 1]
    assert np.abs(low[mask] - want[mask]).max() <= 1e-8
    assert abs(out.norm - state.norm) < 1e-13


def test_photon_budget():
    with pytest.raises(InvalidArgument):
        apply_tritter(ThreeModeState.product(*(make_state(number(3), 3) for _ in range(3))), max_total=8)


def test_three_mode_state_validation():
    with pytest.raises(InvalidArgument):
        ThreeModeState(np.zeros((2, 2)))
    with pytest.raises(InvalidArgument):
        ThreeModeState.product(make_state(vacuum(), 1), make_state(vacuum(), 1))


# --- photocurrents ------------------------------------------------------------------

@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_heisenberg_and_schrodinger_pictures_agree(seed):
    state = random_state(seed, 4)
    out = apply_tritter(state)
    currents = photocurrent_operators(state.cutoffs)
    counts = number_operators(out.cutoffs)
    for i_n, n_n in zip(currents, counts):
        assert abs(expectation3(state, i_n) - expectation3(out, n_n)) <= 1e-10


def test_fourier_transformed_currents_closed_form():
    for a, b in zip(ft_photocurrent_operators(4), ft_photocurrent_closed_form(4)):
        assert abs(a - b).max() <= 1e-13
    assert ft_identity_residual() <= 1e-13


def test_second_and_third_transforms_are_adjoint():
    f = ft_photocurrent_operators(3)
    assert abs(f[2] - f[1].conj().T).max() <= 1e-13
    # F_1 is the total photon number over sqrt 3
    total = sum(number_operators(3))
    assert abs(f[0] - total / math.sqrt(3)).max() <= 1e-13


def test_operator_space_limit():
    with pytest.raises(InvalidArgument):
        number_operators(70)


# --- count reduction ----------------------------------------------------------------

def test_reduce_counts_examples():
    y1, y2 = reduce_counts([3, 0, 0], math.sqrt(3))
    assert abs(y1 - math.sqrt(3)) < 1e-15 and abs(y2) < 1e-15
    y1, y2 = reduce_counts([0, 1, 0], 1.0)
    assert abs(y1 + 0.5) < 1e-15 and abs(y2 + math.sqrt(3) / 2) < 1e-15
    y1, y2 = reduce_counts([5, 5, 5], 2.0)
    assert abs(y1) < 1e-14 and abs(y2) < 1e-14


@given(st.lists(st.integers(0, 200), min_size=3, max_size=3), st.floats(0.5, 50))
def test_cyclic_shift_rotates_outcome(counts, z):
    # moving every count one detector on multiplies F_2 by exp(-2 pi i/3)
    y = complex(*reduce_counts(counts, z))
    shifted = complex(*reduce_counts([counts[2], counts[0], counts[1]], z))
    assert abs(shifted - y * np.exp(-2j * np.pi / 3)) < 1e-10


def test_reduce_counts_vectorized_and_validated():
    y1, y2 = reduce_counts(np.array([[1, 0, 0], [0, 0, 1]]), 1.0)
    assert y1.shape == (2,)
    with pytest.raises(InvalidArgument):
        reduce_counts([1, 2], 1.0)
    with pytest.raises(InvalidArgument):
        reduce_counts([1, 2, 3], 0.0)
