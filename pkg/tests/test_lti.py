import json

import numpy as np
import pytest

from sparsinv import catalog
from sparsinv.lti import (
    FirSeries,
    Realization,
    StateSpace,
    UnstableSystemError,
    check_unstable_modes,
    closed_loop,
    example1_plant,
    fir_add,
    fir_convolve,
    fir_long_division,
    h2_sq_fir,
    h2_sq_lyap,
    internally_stable,
    interconnection,
    load_system,
    lqr_plant,
    markov,
    modal_split,
    plant_structure,
    realize_controller,
    shift_register,
    spectral_radius,
)

from oracles import fir_evaluate, fir_h2_by_impulse


def random_fir(rng, N, r, c):
    return FirSeries(rng.standard_normal((N + 1, r, c)))


def unit_circle(rng, k):
    return np.exp(1j * rng.uniform(0, 2 * np.pi, k))


def test_statespace_validation():
    with pytest.raises(ValueError):
        StateSpace(np.eye(2), np.ones((3, 1)), np.ones((1, 2)))
    with pytest.raises(ValueError):
        StateSpace(np.ones((2, 3)), np.ones((2, 1)), np.ones((1, 3)))
    sys = StateSpace(np.eye(2), np.ones((2, 1)), np.ones((3, 2)))
    assert (sys.n_states, sys.n_inputs, sys.n_outputs) == (2, 1, 3)
    assert np.all(sys.D == 0)


def test_markov_examples():
    sys = example1_plant()
    assert np.array_equal(markov(sys, 0), np.zeros((5, 5)))
    assert np.allclose(markov(sys, 1), sys.C @ sys.B)
    assert markov(sys, 1)[0, 0] == pytest.approx(0.1)
    # second channel is 1/(z - 2): impulse 1, 2, 4, ...
    assert markov(sys, 3)[1, 1] == pytest.approx(4.0)
    nil = StateSpace(np.zeros((2, 2)), np.eye(2), np.eye(2))
    assert np.all(markov(nil, 2) == 0) and np.all(markov(nil, 5) == 0)


def test_example1_entries_match_scalar_transfer_functions():
    sys = example1_plant()
    G = Realization.from_plant(sys)
    for z in (1.7 + 0.3j, -0.4 + 2j):
        u, v = 0.1 / (z - 0.5), 1.0 / (z - 2.0)
        kinds = [u, v, u, u, v]
        expect = np.array([[kinds[j] if i >= j else 0 for j in range(5)] for i in range(5)])
        assert np.allclose(G.evaluate(z), expect)


def test_plant_structure():
    assert plant_structure(example1_plant()) == catalog.EXAMPLE1_DELTA
    sys = StateSpace(np.array([[0.0, 1.0], [0.0, 0.0]]), np.array([[0.0], [1.0]]), np.array([[1.0, 0.0]]))
    # C B = 0 but C A B = 1: structure must see the second Markov parameter
    assert plant_structure(sys).array.tolist() == [[True]]


def test_convolve_examples():
    rng = np.random.default_rng(0)
    F = random_fir(rng, 3, 2, 3)
    assert np.allclose(fir_convolve(F, FirSeries.identity(3)).coeffs, F.coeffs)
    a = FirSeries(np.array([1.0, 1.0]).reshape(2, 1, 1))
    b = FirSeries(np.array([1.0, -1.0]).reshape(2, 1, 1))
    assert np.allclose(fir_convolve(a, b).coeffs.ravel(), [1.0, 0.0, -1.0])
    with pytest.raises(ValueError):
        fir_convolve(F, F)


def test_convolve_frequency_oracle():
    rng = np.random.default_rng(1)
    F, G = random_fir(rng, 4, 2, 3), random_fir(rng, 6, 3, 2)
    H = fir_convolve(F, G)
    assert H.horizon == 10
    for z in unit_circle(rng, 16):
        lhs = fir_evaluate(H.coeffs, z)
        rhs = fir_evaluate(F.coeffs, z) @ fir_evaluate(G.coeffs, z)
        assert np.allclose(lhs, rhs, atol=1e-10, rtol=0)
        assert np.allclose(H.evaluate(z), lhs, atol=1e-10)


def test_fir_add_pads():
    a = FirSeries(np.ones((2, 1, 1)))
    b = FirSeries(np.ones((4, 1, 1)))
    assert fir_add(a, b).coeffs.ravel().tolist() == [2, 2, 1, 1]


def test_h2_examples():
    assert h2_sq_fir(FirSeries.identity(3, delay=1)) == 3
    assert h2_sq_fir(FirSeries.zeros(4, 2, 2)) == 0
    assert h2_sq_lyap(shift_register(FirSeries.identity(3, delay=1))) == pytest.approx(3)
    scalar = Realization([[0.5]], [[1.0]], [[1.0]], [[0.0]])
    assert h2_sq_lyap(scalar) == pytest.approx(4.0 / 3.0, rel=1e-12)
    rng = np.random.default_rng(2)
    B, C = rng.standard_normal((3, 2)), rng.standard_normal((2, 3))
    dead = Realization(np.zeros((3, 3)), B, C, np.zeros((2, 2)))
    assert h2_sq_lyap(dead) == pytest.approx(np.sum((C @ B) ** 2))
    with pytest.raises(UnstableSystemError):
        h2_sq_lyap(Realization([[1.5]], [[1.0]], [[1.0]], [[0.0]]))


def test_h2_lyap_vs_impulse_oracle():
    rng = np.random.default_rng(3)
    A = rng.standard_normal((4, 4))
    A *= 0.8 / spectral_radius(A)
    sys = Realization(A, rng.standard_normal((4, 2)), rng.standard_normal((3, 4)), rng.standard_normal((3, 2)))
    assert h2_sq_lyap(sys) == pytest.approx(fir_h2_by_impulse(sys.A, sys.B, sys.C, sys.D), rel=1e-9)


def test_spectral_radius_examples():
    assert spectral_radius(np.eye(3)) == pytest.approx(1.0)
    assert spectral_radius(np.eye(4, k=1)) == 0.0
    assert spectral_radius(example1_plant().A) == pytest.approx(2.0)


def test_shift_register_transfer():
    rng = np.random.default_rng(4)
    F = random_fir(rng, 5, 2, 3)
    real = shift_register(F)
    for z in unit_circle(rng, 5):
        assert np.allclose(real.evaluate(z), F.evaluate(z))


def test_long_division_examples():
    rng = np.random.default_rng(5)
    U = random_fir(rng, 3, 2, 2)
    K = fir_long_division(U, FirSeries.identity(2), 4)
    assert np.allclose(K.coeffs, U.coeffs)
    one = FirSeries(np.ones((1, 1, 1)))
    Y = FirSeries(np.array([1.0, -0.5]).reshape(2, 1, 1))
    K = fir_long_division(one, Y, 8)
    assert np.allclose(K.coeffs.ravel(), 0.5 ** np.arange(8))
    with pytest.raises(np.linalg.LinAlgError):
        fir_long_division(one, FirSeries(np.zeros((1, 1, 1))), 3)


def test_long_division_remultiplies():
    rng = np.random.default_rng(6)
    N, M = 3, 12
    U = random_fir(rng, N, 2, 3)
    tail = 0.3 * rng.standard_normal((N, 3, 3))
    Y = FirSeries(np.concatenate([np.eye(3)[None], tail]))
    K = fir_long_division(U, Y, M)
    back = fir_convolve(K, Y).coeffs
    assert np.allclose(back[:M], U.padded(M - 1).coeffs[:M], atol=1e-8)


def test_realize_controller_examples():
    U0 = np.array([[1.0, -2.0]])
    static = realize_controller(FirSeries(U0[None]), FirSeries.identity(2))
    assert static.n_states == 0 and np.allclose(static.D, U0)
    one = FirSeries(np.ones((1, 1, 1)))
    Y = FirSeries(np.array([1.0, -0.5]).reshape(2, 1, 1))
    K = realize_controller(one, Y)
    assert np.allclose(np.linalg.eigvals(K.A), [0.5])
    with pytest.raises(np.linalg.LinAlgError):
        realize_controller(one, FirSeries(2 * np.ones((1, 1, 1))))


def test_realize_controller_matches_long_division():
    rng = np.random.default_rng(7)
    for _ in range(5):
        N = 3
        U = random_fir(rng, N, 2, 3)
        Y = FirSeries(np.concatenate([np.eye(3)[None], 0.15 * rng.standard_normal((N, 3, 3))]))
        K = realize_controller(U, Y)
        assert spectral_radius(K.A) < 0.9
        series = fir_long_division(U, Y, 400)
        for z in unit_circle(rng, 12):
            assert np.allclose(K.evaluate(z), series.evaluate(z), atol=1e-8)


def test_closed_loop_examples():
    rng = np.random.default_rng(8)
    A = np.diag([0.3, -0.2])
    plant = StateSpace(A, np.eye(2), np.eye(2))
    zero = Realization(np.zeros((0, 0)), np.zeros((0, 2)), np.zeros((2, 0)), np.zeros((2, 2)))
    loop = closed_loop(plant, zero)
    assert loop.stable and np.allclose(loop.matrix, A)
    An = catalog.ring_lqr_matrix(4, seed=1)
    K = Realization(np.zeros((0, 0)), np.zeros((0, 4)), np.zeros((4, 0)), -An)
    loop = closed_loop(lqr_plant(An), K)
    assert loop.radius == pytest.approx(0.0, abs=1e-12) and loop.stable
    ex1 = example1_plant()
    zero5 = Realization(np.zeros((0, 0)), np.zeros((0, 5)), np.zeros((5, 0)), np.zeros((5, 5)))
    loop = closed_loop(ex1, zero5)
    assert not loop.stable and loop.radius == pytest.approx(2.0)
    assert not internally_stable(ex1, zero5)


def test_internal_stability_ignores_cancelled_controller_modes():
    # scalar plant 1/(z - 2) with deadbeat K = -2; realize K as U Y^-1 with a
    # common unstable factor (1 - 2 z^-1) in U and Y
    plant = StateSpace([[2.0]], [[1.0]], [[1.0]])
    U = FirSeries(np.array([-2.0, 4.0]).reshape(2, 1, 1))
    Y = FirSeries(np.array([1.0, -2.0]).reshape(2, 1, 1))
    K = realize_controller(U, Y)
    assert spectral_radius(K.A) == pytest.approx(2.0)
    assert not closed_loop(plant, K).stable
    assert internally_stable(plant, K)
    # a controller that leaves the plant pole in the loop must still fail
    weak = Realization(np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((1, 0)), [[-0.5]])
    assert not internally_stable(plant, weak)


def test_modal_split_preserves_transfer():
    rng = np.random.default_rng(9)
    A = np.diag([2.0, 0.5, -0.3, 1.5]) + 0.1 * np.triu(rng.standard_normal((4, 4)), 1)
    sys = Realization(A, rng.standard_normal((4, 2)), rng.standard_normal((2, 4)), rng.standard_normal((2, 2)))
    unstable, stable = modal_split(sys)
    assert unstable.n_states == 2 and stable.n_states == 2
    for z in (0.3 + 2.5j, -3.0, 1.1j):
        assert np.allclose(unstable.evaluate(z) + stable.evaluate(z), sys.evaluate(z))


def test_interconnection_blocks_for_lqr():
    A = catalog.ring_lqr_matrix(3, seed=2)
    K = Realization(np.zeros((0, 0)), np.zeros((0, 3)), np.zeros((3, 0)), -A)
    loop = interconnection(lqr_plant(A), K)
    z = 1.3 + 0.4j
    T = loop.evaluate(z)
    # W = z^-1 I, Y - I = -A z^-1, Z - I = -A z^-1, U = -A + A^2 z^-1
    assert np.allclose(T[:3, :3], np.eye(3) / z)
    assert np.allclose(T[:3, 3:], -A / z)
    assert np.allclose(T[3:, :3], -A / z)
    assert np.allclose(T[3:, 3:], -A + A @ A / z)


def test_pbh_check():
    with pytest.raises(ValueError, match='not controllable'):
        check_unstable_modes(StateSpace(np.diag([2.0, 0.5]), [[0.0], [1.0]], [[1.0, 1.0]]))
    with pytest.raises(ValueError, match='not observable'):
        check_unstable_modes(StateSpace(np.diag([2.0, 0.5]), [[1.0], [1.0]], [[0.0, 1.0]]))
    check_unstable_modes(StateSpace(np.diag([0.2, 0.5]), [[0.0], [1.0]], [[0.0, 1.0]]))


def test_load_system(tmp_path):
    path = tmp_path / 'sys.json'
    path.write_text(json.dumps({'A': [[0.5]], 'B': [[1.0]], 'C': [[2.0]]}))
    sys = load_system(path)
    assert sys.C[0, 0] == 2.0
    path.write_text(json.dumps({'A': [[0.5]], 'B': [[1.0]]}))
    with pytest.raises(ValueError):
        load_system(path)


def test_fir_series_validation():
    with pytest.raises(ValueError):
        FirSeries(np.zeros((0, 2, 2)))
    assert FirSeries(np.eye(2)).horizon == 0
    with pytest.raises(ValueError):
        FirSeries.zeros(3, 1, 1).padded(1)
