"""Closed-form second-moment propagation for the coupled lifted chain.

For the coupling difference ``v_n = B_n v_0`` (a product of the per-step
random matrices) the expected Gram matrix ``M_n = E[B_n^T B_n]`` stays in a
three-block diagonal form on the input model's eigenbasis.  Its eigenvalue
triples ``a_n = (lam1, lam2, lam3)`` evolve linearly, ``a_{n+1} = C a_n``,
through the 3d x 3d contraction matrix built here; the recursion, the
reconstruction of ``M_n``, a brute-force Monte-Carlo oracle for the same
quantity, and the resulting transport bound live in this module.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, ConsistencyError, DivergenceError
from .spectral import pseudospectral_radius

__all__ = [
    "ContractionMatrix",
    "SecondMomentState",
    "build_contraction_matrix",
    "evolve_second_moment",
    "reconstruct_Mn",
    "mc_estimate_Mn",
    "w2_upper_bound",
]

EVOLVE_LIMIT = 1e290
MC_CHUNK = 20_000  # fixed so chunked averaging is reproducible


@dataclass(frozen=True)
class ContractionMatrix:
    """Assembled contraction matrix plus its diagonalizable block data.

    ``mat`` is built exactly from nine d x d blocks determined by
    ``d1 = 1 + beta - gamma (1+alpha) (sigma + ridge)``,
    ``d2 = alpha gamma (sigma + ridge) - beta`` and the noise operator
    ``K = diag(noise_diag) + noise_rank1 noise_rank1^T`` where
    ``noise_diag = gamma^2 (kurt - 2 sigma**2)`` and
    ``noise_rank1 = gamma sigma``::

        [[D1^2 + (1+alpha)^2 K,  2 D1,  I],
         [D1 D2 - alpha (1+alpha) K,  D2,  0],
         [D2^2 + alpha^2 K,  0,  0]]
    """

    dim: int
    mat: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    noise_diag: np.ndarray
    noise_rank1: np.ndarray
    theta: object
    model_id: str

    @property
    def noise_matrix(self):
        return np.diag(self.noise_diag) + np.outer(self.noise_rank1, self.noise_rank1)

    @property
    def blocks(self):
        """The nine named d x d blocks, keyed by (row, col)."""
        a = self.theta.alpha
        D1, D2 = np.diag(self.d1), np.diag(self.d2)
        K = self.noise_matrix
        d = self.dim
        eye, zero = np.eye(d), np.zeros((d, d))
        return {
            (0, 0): D1 @ D1 + (1 + a) ** 2 * K,
            (0, 1): 2 * D1,
            (0, 2): eye,
            (1, 0): D1 @ D2 - a * (1 + a) * K,
            (1, 1): D2,
            (1, 2): zero,
            (2, 0): D2 @ D2 + a**2 * K,
            (2, 1): zero,
            (2, 2): zero,
        }


@dataclass(frozen=True)
class SecondMomentState:
    """Eigenvalue triples ``(lam1, lam2, lam3)`` of ``M_n`` after ``n`` steps.

    The start is ``lam1 = lam3 = 1`` and ``lam2 = 0`` per coordinate, so
    that the reconstructed ``M_0`` is the identity (``B_0`` is the empty
    product); this index convention is pinned against the Monte-Carlo
    oracle in the golden tests.  ``lam1`` and ``lam3`` are eigenvalues of
    PSD diagonal blocks and stay nonnegative; ``lam2`` may go negative.
    """

    a: np.ndarray
    n: int

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        if a.ndim != 1 or a.size % 3:
            raise ArgumentError("state vector must have length 3d")
        object.__setattr__(self, "a", a)

    @property
    def dim(self):
        return self.a.size // 3

    @property
    def lam1(self):
        return self.a[: self.dim]

    @property
    def lam2(self):
        return self.a[self.dim : 2 * self.dim]

    @property
    def lam3(self):
        return self.a[2 * self.dim :]


def initial_second_moment(dim):
    """State with ``M_0 = I``: per coordinate ``(1, 0, 1)``."""
    a = np.zeros(3 * dim)
    a[:dim] = 1.0
    a[2 * dim :] = 1.0
    return SecondMomentState(a=a, n=0)


def build_contraction_matrix(model, theta, ridge=0.0):
    """Assemble the contraction matrix for ``model`` under ``theta``.

    ``ridge`` shifts the covariance eigenvalues seen by the deterministic
    parts (an L2 penalty enters the gradient as ``+ ridge * w``) while the
    gradient-noise operator keeps the raw moments, since the penalty term
    is deterministic.
    """
    g, a = theta.gamma, theta.alpha
    s_eff = model.sigma + ridge
    d1 = (1 + theta.beta) - g * (1 + a) * s_eff
    d2 = a * g * s_eff - theta.beta
    noise_diag = g**2 * (model.kurt - 2 * model.sigma**2)
    noise_rank1 = g * model.sigma
    D1, D2 = np.diag(d1), np.diag(d2)
    K = np.diag(noise_diag) + np.outer(noise_rank1, noise_rank1)
    d = model.dim
    eye, zero = np.eye(d), np.zeros((d, d))
    mat = np.block(
        [
            [D1 @ D1 + (1 + a) ** 2 * K, 2 * D1, eye],
            [D1 @ D2 - a * (1 + a) * K, D2, zero],
            [D2 @ D2 + a**2 * K, zero, zero],
        ]
    )
    return ContractionMatrix(
        dim=d,
        mat=mat,
        d1=d1,
        d2=d2,
        noise_diag=noise_diag,
        noise_rank1=noise_rank1,
        theta=theta,
        model_id=model.describe(),
    )


def evolve_second_moment(C, n, start=None):
    """Apply the contraction matrix ``n`` times, from ``start`` or ``M_0 = I``.

    Repeated mat-vec only; no matrix power is formed.
    """
    if n < 0:
        raise ArgumentError("n must be nonnegative")
    start = initial_second_moment(C.dim) if start is None else start
    if start.dim != C.dim:
        raise ArgumentError("state and contraction-matrix dimensions differ")
    a = start.a
    for k in range(1, n + 1):
        a = C.mat @ a
        if not np.all(np.isfinite(a)) or np.max(np.abs(a)) > EVOLVE_LIMIT:
            raise DivergenceError(
                start.n + k, f"second-moment recursion overflowed at step {start.n + k}"
            )
    return SecondMomentState(a=a, n=start.n + n)


def reconstruct_Mn(model, state):
    """Rebuild ``M_n = E[B_n^T B_n]`` from its eigenvalue triples.

    Blocks are ``U diag(lam) U^T`` on the model basis ``U`` (convention
    validated against :func:`mc_estimate_Mn`):

        [[U diag(lam1) U^T, U diag(lam2) U^T],
         [U diag(lam2) U^T, U diag(lam3) U^T]]
    """
    if state.dim != model.dim:
        raise ArgumentError("state and model dimensions differ")
    low = min(np.min(state.lam1), np.min(state.lam3))
    if low < -1e-9:
        raise ConsistencyError(
            f"PSD block eigenvalue went negative ({low:.3e}); state is inconsistent"
        )
    U = model.basis

    def blk(lam):
        return U @ np.diag(lam) @ U.T

    top = np.hstack([blk(state.lam1), blk(state.lam2)])
    bottom = np.hstack([blk(state.lam2), blk(state.lam3)])
    return np.vstack([top, bottom])


def mc_estimate_Mn(model, theta, n, trials, seed, ridge=0.0):
    """Monte-Carlo estimate of ``M_n`` by brute-force matrix products.

    Draws ``trials`` independent step sequences, forms ``B_n = A_n ... A_1``
    by dense 2d x 2d multiplication (an intentionally independent code path
    from the rank-one simulation in :mod:`sagd.chains`), and averages
    ``B_n^T B_n``.  Work proceeds in fixed-size chunks so the averaging
    order, and hence the result, is reproducible for a given seed.

    Returns
    -------
    mean : (2d, 2d) ndarray
    stderr : (2d, 2d) ndarray
        Per-entry standard error of the mean.
    """
    if trials < 1000:
        raise ArgumentError("use at least 1000 trials; the estimate is noisy below that")
    if n < 0:
        raise ArgumentError("n must be nonnegative")
    d = model.dim
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    eye = np.eye(d)
    acc = np.zeros((2 * d, 2 * d))
    acc_sq = np.zeros((2 * d, 2 * d))
    done = 0
    while done < trials:
        m = min(MC_CHUNK, trials - done)
        B = np.broadcast_to(np.eye(2 * d), (m, 2 * d, 2 * d)).copy()
        for _ in range(n):
            X = model.draw_batch(rng, m)
            H = np.einsum("ti,tj->tij", X, X)
            if ridge:
                H = H + ridge * eye
            A = np.empty((m, 2 * d, 2 * d))
            A[:, :d, :d] = (1 + theta.beta) * eye - theta.gamma * (1 + theta.alpha) * H
            A[:, :d, d:] = theta.alpha * theta.gamma * H - theta.beta * eye
            A[:, d:, :d] = eye
            A[:, d:, d:] = 0.0
            B = A @ B
        G = np.einsum("tji,tjk->tik", B, B)
        acc += G.sum(axis=0)
        acc_sq += (G * G).sum(axis=0)
        done += m
    mean = acc / trials
    var = np.maximum(acc_sq / trials - mean**2, 0.0)
    stderr = np.sqrt(var / trials)
    return mean, stderr


def w2_upper_bound(C, eps, n, c0, rho_eps=None):
    """Transport-distance bound ``18 d^(3/2) c0 rho_eps(C)^(n+1) / eps``.

    ``c0`` is the expected squared distance between the two initial lifted
    states.  Pass ``rho_eps`` to reuse a precomputed pseudospectral radius
    (the radial search is the expensive part in envelope loops).
    """
    if not eps > 0:
        raise ArgumentError(f"eps must be positive, got {eps}")
    if n < 0:
        raise ArgumentError("n must be nonnegative")
    if c0 < 0:
        raise ArgumentError("c0 is a squared distance and must be nonnegative")
    if rho_eps is None:
        rho_eps = pseudospectral_radius(C.mat, eps)
    return float(18.0 * C.dim**1.5 * c0 * rho_eps ** (n + 1) / eps)
