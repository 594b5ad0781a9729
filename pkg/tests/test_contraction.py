import numpy as np
import pytest

from sagd import (
    ArgumentError,
    ChainState,
    ConsistencyError,
    DivergenceError,
    Theta,
    build_contraction_matrix,
    evolve_second_moment,
    initial_second_moment,
    make_gaussian_model,
    make_uniform_rademacher_model,
    mc_estimate_Mn,
    reconstruct_Mn,
    rotate_model,
    run_coupled_ensemble,
    w2_upper_bound,
)

MODEL = make_gaussian_model([0.05, 1.0])
THETA = Theta(alpha=2.0, beta=0.95, gamma=0.1)


def rotation(d, seed=0):
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    return q


# ---------------------------------------------------------------------------
# structure


def test_contraction_matrix_blocks():
    C = build_contraction_matrix(MODEL, THETA)
    d = MODEL.dim
    g, a, b = THETA.gamma, THETA.alpha, THETA.beta
    D1 = np.diag(1 + b - g * (1 + a) * MODEL.sigma)
    D2 = np.diag(a * g * MODEL.sigma - b)
    K = g**2 * (
        np.diag(MODEL.kurt - 2 * MODEL.sigma**2) + np.outer(MODEL.sigma, MODEL.sigma)
    )
    np.testing.assert_allclose(C.blocks[(0, 0)], D1 @ D1 + (1 + a) ** 2 * K)
    np.testing.assert_allclose(C.blocks[(0, 1)], 2 * D1)
    np.testing.assert_allclose(C.blocks[(0, 2)], np.eye(d))
    np.testing.assert_allclose(C.blocks[(1, 0)], D1 @ D2 - a * (1 + a) * K)
    np.testing.assert_allclose(C.blocks[(1, 1)], D2)
    np.testing.assert_allclose(C.blocks[(1, 2)], np.zeros((d, d)))
    np.testing.assert_allclose(C.blocks[(2, 0)], D2 @ D2 + a**2 * K)
    np.testing.assert_allclose(C.blocks[(2, 1)], np.zeros((d, d)))
    np.testing.assert_allclose(C.blocks[(2, 2)], np.zeros((d, d)))
    np.testing.assert_allclose(C.noise_matrix, K)


def test_ridge_shifts_deterministic_blocks_only():
    plain = build_contraction_matrix(MODEL, THETA)
    ridged = build_contraction_matrix(MODEL, THETA, ridge=0.05)
    np.testing.assert_allclose(
        ridged.d1, plain.d1 - THETA.gamma * (1 + THETA.alpha) * 0.05
    )
    np.testing.assert_allclose(ridged.d2, plain.d2 + THETA.alpha * THETA.gamma * 0.05)
    np.testing.assert_allclose(ridged.noise_matrix, plain.noise_matrix)


def test_initial_state_is_identity():
    state = initial_second_moment(3)
    assert state.n == 0
    np.testing.assert_array_equal(state.lam1, np.ones(3))
    np.testing.assert_array_equal(state.lam2, np.zeros(3))
    np.testing.assert_array_equal(state.lam3, np.ones(3))
    model = make_gaussian_model([0.2, 0.5, 1.0])
    np.testing.assert_allclose(reconstruct_Mn(model, state), np.eye(6))


# ---------------------------------------------------------------------------
# evolution


def test_evolution_matches_matrix_power():
    C = build_contraction_matrix(MODEL, THETA)
    state = evolve_second_moment(C, 7)
    expected = np.linalg.matrix_power(C.mat, 7) @ initial_second_moment(2).a
    np.testing.assert_allclose(state.a, expected, rtol=1e-12)
    assert state.n == 7


def test_evolution_composes():
    C = build_contraction_matrix(MODEL, THETA)
    once = evolve_second_moment(C, 5)
    split = evolve_second_moment(C, 2, start=evolve_second_moment(C, 3))
    np.testing.assert_array_equal(once.a, split.a)
    assert split.n == 5


def test_evolution_divergence():
    bad = Theta(alpha=2.0, beta=0.95, gamma=10.0)
    C = build_contraction_matrix(MODEL, bad)
    with pytest.raises(DivergenceError) as info:
        evolve_second_moment(C, 500)
    assert 0 < info.value.step <= 500


def test_reconstruct_rejects_negative_diagonal_blocks():
    state = evolve_second_moment(build_contraction_matrix(MODEL, THETA), 4)
    bump = np.zeros(6)
    bump[0] = state.lam1[0] + 1.0  # force lam1[0] below zero
    corrupted = type(state)(a=state.a - bump, n=state.n)
    with pytest.raises(ConsistencyError):
        reconstruct_Mn(MODEL, corrupted)


def test_reconstruct_dimension_mismatch():
    state = initial_second_moment(3)
    with pytest.raises(ArgumentError):
        reconstruct_Mn(MODEL, state)


# ---------------------------------------------------------------------------
# agreement with simulation


def test_closed_form_matches_monte_carlo_small_n():
    state = evolve_second_moment(build_contraction_matrix(MODEL, THETA), 2)
    exact = reconstruct_Mn(MODEL, state)
    estimate, stderr = mc_estimate_Mn(MODEL, THETA, n=2, trials=4000, seed=123)
    z = np.abs(estimate - exact) / np.maximum(stderr, 1e-300)
    assert np.max(z) < 6, f"max z-score {np.max(z):.2f}"


def test_mc_estimate_is_symmetric_and_reproducible():
    a, sa = mc_estimate_Mn(MODEL, THETA, n=1, trials=1500, seed=5)
    b, _ = mc_estimate_Mn(MODEL, THETA, n=1, trials=1500, seed=5)
    np.testing.assert_array_equal(a, b)
    np.testing.assert_allclose(a, a.T, atol=1e-12)
    assert np.all(sa >= 0)


def test_mc_estimate_requires_enough_trials():
    with pytest.raises(ArgumentError):
        mc_estimate_Mn(MODEL, THETA, n=1, trials=10, seed=0)


def test_expected_coupled_distance_matches_quadratic_form():
    init0 = ChainState.fresh(np.ones(2))
    init1 = ChainState.fresh(np.zeros(2))
    n, runs = 5, 4000
    sq = run_coupled_ensemble(MODEL, THETA, init0, init1, n=n, runs=runs, seed=21)
    v = np.concatenate([np.ones(2), np.ones(2)])
    state = evolve_second_moment(build_contraction_matrix(MODEL, THETA), n)
    predicted = float(v @ reconstruct_Mn(MODEL, state) @ v)
    mean = sq[:, -1].mean()
    stderr = sq[:, -1].std(ddof=1) / np.sqrt(runs)
    assert abs(mean - predicted) < 6 * stderr


def test_quadratic_form_is_rotation_invariant():
    R = rotation(2, seed=8)
    rotated = rotate_model(MODEL, R)
    v = np.array([0.3, -1.2, 0.8, 0.1])
    Rv = np.concatenate([R @ v[:2], R @ v[2:]])
    state = evolve_second_moment(build_contraction_matrix(MODEL, THETA), 6)
    state_rot = evolve_second_moment(build_contraction_matrix(rotated, THETA), 6)
    np.testing.assert_allclose(
        v @ reconstruct_Mn(MODEL, state) @ v,
        Rv @ reconstruct_Mn(rotated, state_rot) @ Rv,
        rtol=1e-10,
    )


def test_noise_free_input_follows_deterministic_recursion():
    # A one-dimensional two-point input has k = sigma^2, so the gradient
    # noise vanishes entirely and the second moment obeys the squared
    # deterministic momentum recursion.  (In higher dimension even a
    # noise-free coordinate receives cross-coordinate gradient noise
    # through the rank-one part of the noise operator.)
    from sagd import TwoPointSampler, make_custom_model

    model = make_custom_model(basis=np.eye(1), samplers=[TwoPointSampler(0.7)])
    theta = Theta(alpha=2.0, beta=0.9, gamma=0.002)
    C = build_contraction_matrix(model, theta)
    state = evolve_second_moment(C, 40)
    s = model.sigma[0]
    d1 = 1 + theta.beta - theta.gamma * (1 + theta.alpha) * s
    d2 = theta.alpha * theta.gamma * s - theta.beta
    T = np.array([[d1, d2], [1.0, 0.0]])
    P = np.linalg.matrix_power(T, 40)
    # with no noise B_n is deterministic, so M_n = (T^n)^T T^n exactly
    M = P.T @ P
    np.testing.assert_allclose(
        [state.lam1[0], state.lam2[0], state.lam3[0]],
        [M[0, 0], M[0, 1], M[1, 1]],
        rtol=1e-10,
        atol=1e-300,
    )


# ---------------------------------------------------------------------------
# transport bound


def test_w2_upper_bound_formula_and_validation():
    C = build_contraction_matrix(MODEL, THETA)
    value = w2_upper_bound(C, eps=0.05, n=3, c0=2.0, rho_eps=0.9)
    assert value == pytest.approx(18 * 2**1.5 * 2.0 * 0.9**4 / 0.05)
    with pytest.raises(ArgumentError):
        w2_upper_bound(C, eps=0.0, n=3, c0=1.0)
    with pytest.raises(ArgumentError):
        w2_upper_bound(C, eps=0.05, n=-1, c0=1.0)
    with pytest.raises(ArgumentError):
        w2_upper_bound(C, eps=0.05, n=3, c0=-1.0)


def test_w2_upper_bound_defaults_to_computed_radius():
    C = build_contraction_matrix(MODEL, THETA)
    from sagd import pseudospectral_radius

    rho_eps = pseudospectral_radius(C.mat, 0.05)
    assert w2_upper_bound(C, 0.05, 2, 1.0) == pytest.approx(
        w2_upper_bound(C, 0.05, 2, 1.0, rho_eps=rho_eps)
    )
