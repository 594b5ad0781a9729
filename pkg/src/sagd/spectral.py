"""Spectral radius, pseudospectral radius, and the per-coordinate block bound.

The mixing analysis reduces a 3d x 3d nonnormal contraction matrix to d
independent 3 x 3 blocks (one per covariance eigendirection) plus a
remainder; this module computes the exact spectral radius, a radial-search
estimate of the eps-pseudospectral radius, the block reduction, and the
numeric checks for the pseudospectrum inequalities used by the bounds.
"""

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .errors import ArgumentError

__all__ = [
    "SpectralReport",
    "PowerBoundCheck",
    "spectral_radius",
    "pseudospectral_radius",
    "spectral_report",
    "build_J_blocks",
    "jblock_reduction",
    "jblock_mixing_bound",
    "power_norm_bound_check",
    "perturbation_bound_check",
    "pseudospectrum_grid",
]


@dataclass(frozen=True)
class SpectralReport:
    """Bundle of radius information for one matrix and one ``eps``.

    ``method`` records how ``rho_eps`` was obtained: ``"exact-eigen"``
    (normal case, ``rho + eps``), ``"grid-resolvent"`` (radial search), or
    ``"jblock-bound"`` (block reduction; then ``rho`` is the radius of the
    diagonal-noise reduction, i.e. ``max(j_radii)``, and ``rho_eps`` is the
    closed-form bound ``rho + eps + perturbation_term``).
    """

    rho: float
    rho_eps: float
    eps: float
    method: str
    j_radii: Optional[np.ndarray] = None
    perturbation_term: float = 0.0


class PowerBoundCheck(NamedTuple):
    lhs: float
    rhs: float
    ok: bool
    saturated: bool


def _square(M):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ArgumentError(f"expected a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ArgumentError("matrix has non-finite entries")
    return M


def spectral_radius(M):
    """Largest eigenvalue modulus, via the dense (complex) eigensolver."""
    return float(np.max(np.abs(np.linalg.eigvals(_square(M)))))


def pseudospectral_radius(M, eps, n_angles=256, tol=1e-9, max_iter=60):
    """Radial-search estimate of ``sup { |z| : sigma_min(M - z I) <= eps }``.

    For each angle in a grid (uniform angles plus the eigenvalue angles,
    where the boundary is guaranteed to be reached from inside) the largest
    radius with ``sigma_min <= eps`` is located by bisection between a
    known-inside and a known-outside radius.  Accuracy is angle-grid
    limited; raise ``n_angles`` to refine.  For normal matrices the result
    matches ``rho + eps`` to well below ``tol``.

    Parameters
    ----------
    M : square array
    eps : float
        Positive resolvent threshold.
    n_angles : int
        Number of uniform angles (eigenvalue angles are always added).
    tol : float
        Radial bisection tolerance.

    Returns
    -------
    float
        Never below the spectral radius.
    """
    M = _square(M)
    if not eps > 0:
        raise ArgumentError(f"eps must be positive, got {eps}")
    m = M.shape[0]
    evals = np.linalg.eigvals(M)
    rho = float(np.max(np.abs(evals)))
    base = np.linspace(0.0, 2 * np.pi, n_angles, endpoint=False)
    extra = np.angle(evals)
    angles = np.unique(np.concatenate([base, extra, -extra]))
    eye = np.eye(m)

    def smin(zs):
        A = M[None, :, :] - zs[:, None, None] * eye[None, :, :]
        return np.linalg.svd(A, compute_uv=False)[:, -1]

    # sigma_min(M - zI) >= |z| - ||M||_2, so this radius is strictly outside.
    hi = np.full(angles.shape, np.linalg.norm(M, 2) + eps + 1e-3)
    lo = np.zeros_like(angles)
    inside0 = smin(rho * np.exp(1j * angles)) <= eps
    lo[inside0] = rho
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        inside = smin(mid * np.exp(1j * angles)) <= eps
        lo = np.where(inside, mid, lo)
        hi = np.where(inside, hi, mid)
        if np.max(hi - lo) < tol:
            break
    return max(float(np.max(lo)), rho)


def spectral_report(M, eps, n_angles=256):
    """Convenience: exact radius plus radial pseudospectral radius."""
    rho = spectral_radius(M)
    return SpectralReport(
        rho=rho,
        rho_eps=pseudospectral_radius(M, eps, n_angles=n_angles),
        eps=eps,
        method="grid-resolvent",
    )


def _theta_scalars(model, theta, ridge):
    s_eff = model.sigma + ridge
    d1 = (1 + theta.beta) - theta.gamma * (1 + theta.alpha) * s_eff
    d2 = theta.alpha * theta.gamma * s_eff - theta.beta
    # Fluctuation moments of x x^T are ridge-free.
    noise = theta.gamma**2 * (model.kurt - model.sigma**2)
    return d1, d2, noise


def build_J_blocks(model, theta, ridge=0.0):
    """Per-coordinate 3 x 3 blocks of the diagonal-noise reduction.

    Coordinate ``i`` (covariance eigenvalue ``sigma_i``, fourth moment
    ``kurt_i``) gets, with ``d1 = 1 + beta - gamma (1+alpha) sigma_i``,
    ``d2 = alpha gamma sigma_i - beta`` and noise
    ``nz = gamma^2 (kurt_i - sigma_i^2)``::

        [[d1^2 + (1+alpha)^2 nz,  2 d1,  1],
         [d1 d2 - alpha (1+alpha) nz,  d2,  0],
         [d2^2 + alpha^2 nz,  0,  0]]

    For a two-point coordinate ``kurt_i = sigma_i^2`` and the noise terms
    vanish, leaving the deterministic momentum block.
    """
    d1, d2, noise = _theta_scalars(model, theta, ridge)
    a = theta.alpha
    blocks = []
    for i in range(model.dim):
        blocks.append(
            np.array(
                [
                    [d1[i] ** 2 + (1 + a) ** 2 * noise[i], 2 * d1[i], 1.0],
                    [d1[i] * d2[i] - a * (1 + a) * noise[i], d2[i], 0.0],
                    [d2[i] ** 2 + a**2 * noise[i], 0.0, 0.0],
                ]
            )
        )
    return blocks


def jblock_reduction(model, theta, ridge=0.0):
    """Diagonal-noise contraction matrix and its block permutation.

    Returns ``(cbar, perm)`` where ``cbar`` is the 3d x 3d contraction
    matrix with the noise operator replaced by its diagonal part, and
    ``perm`` is the index permutation with
    ``cbar[np.ix_(perm, perm)] == blockdiag(J_1, ..., J_d)``.
    """
    d = model.dim
    d1, d2, noise = _theta_scalars(model, theta, ridge)
    a = theta.alpha
    D1, D2 = np.diag(d1), np.diag(d2)
    Kbar = np.diag(noise)
    eye, zero = np.eye(d), np.zeros((d, d))
    cbar = np.block(
        [
            [D1 @ D1 + (1 + a) ** 2 * Kbar, 2 * D1, eye],
            [D1 @ D2 - a * (1 + a) * Kbar, D2, zero],
            [D2 @ D2 + a**2 * Kbar, zero, zero],
        ]
    )
    perm = np.array([r * d + i for i in range(d) for r in range(3)])
    return cbar, perm


def jblock_mixing_bound(model, theta, eps, ridge=0.0):
    """Closed-form mixing-rate bound from the block reduction.

    Computes ``max_i rho(J_i) + eps + 3 (1+alpha)^2 gamma^2
    ||diag(sigma**2) - sigma sigma^T||_2`` (the last term bounds the
    off-diagonal noise remainder discarded by the reduction).

    .. warning::
       This quantity is *not* a reliable upper bound on the pseudospectral
       radius of the full contraction matrix: the reduction's blocks are
       strongly nonnormal and the derivation drops their eigenbasis
       condition number.  Measured pseudospectral radii exceed the bound
       on most stable configurations; see ``tests/test_acceptance.py``.
    """
    if not eps > 0:
        raise ArgumentError(f"eps must be positive, got {eps}")
    radii = np.array([spectral_radius(J) for J in build_J_blocks(model, theta, ridge)])
    remainder = np.diag(model.sigma**2) - np.outer(model.sigma, model.sigma)
    pert = 3 * (1 + theta.alpha) ** 2 * theta.gamma**2 * np.linalg.norm(remainder, 2)
    return SpectralReport(
        rho=float(np.max(radii)),
        rho_eps=float(np.max(radii) + eps + pert),
        eps=eps,
        method="jblock-bound",
        j_radii=radii,
        perturbation_term=float(pert),
    )


def power_norm_bound_check(M, eps, n):
    """Check ``||M^n||_2 <= rho_eps(M)^(n+1) / eps`` on one instance.

    Returns lhs, rhs, the comparison, and a saturation flag set when
    either side overflowed (unstable ``M`` at large ``n``).
    """
    M = _square(M)
    if not (eps > 0 and n >= 0):
        raise ArgumentError("need eps > 0 and n >= 0")
    with np.errstate(over="ignore", invalid="ignore", under="ignore"):
        power = np.linalg.matrix_power(M, n)
        finite = np.all(np.isfinite(power))
        lhs = float(np.linalg.norm(power, 2)) if finite else float("inf")
        rhs = float(pseudospectral_radius(M, eps) ** (n + 1) / eps)
    # either side leaving the representable range makes the comparison
    # vacuous; flag it so sweeps can stop instead of asserting on noise
    saturated = not (np.isfinite(lhs) and np.isfinite(rhs)) or (n > 0 and lhs == 0.0) or rhs == 0.0
    ok = bool(np.isfinite(lhs) and lhs <= rhs)
    return PowerBoundCheck(lhs=lhs, rhs=rhs, ok=ok, saturated=saturated)


def perturbation_bound_check(A, E, eps, slack=1e-3):
    """Verify two pseudospectrum inequalities for base ``A``, perturbation ``E``.

    Robustness: ``rho_eps(A + E) <= rho_{eps + ||E||}(A)``; and the
    eigenbasis-conditioning bound ``rho_eps(A) <= rho(A) + cond(V) eps``
    with ``V`` the eigenvector matrix of ``A``.  Both comparisons get
    ``slack`` added to the right-hand side to absorb radial-search error.
    Returns a dict with per-check booleans and the quantities compared.
    """
    A, E = _square(A), _square(E)
    if not eps > 0:
        raise ArgumentError(f"eps must be positive, got {eps}")
    shift = float(np.linalg.norm(E, 2))
    perturbed = pseudospectral_radius(A + E, eps)
    shifted = pseudospectral_radius(A, eps + shift)
    evals, vecs = np.linalg.eig(A)
    kappa = float(np.linalg.cond(vecs))
    rho = float(np.max(np.abs(evals)))
    rho_eps = pseudospectral_radius(A, eps)
    return {
        "robustness_ok": bool(perturbed <= shifted + slack),
        "eigenvalue_ok": bool(rho_eps <= rho + kappa * eps + slack),
        "rho": rho,
        "rho_eps": rho_eps,
        "rho_eps_perturbed": perturbed,
        "rho_eps_shifted": shifted,
        "cond": kappa,
    }


def pseudospectrum_grid(M, n=101, radius=None, center=0.0 + 0.0j):
    """Sample ``sigma_min(M - z I)`` on a square grid for contour plots.

    Returns ``(re, im, smin)`` where ``re``/``im`` are the grid axes and
    ``smin`` is the ``(n, n)`` array indexed ``smin[j, i]`` for
    ``z = re[i] + 1j * im[j]``.
    """
    M = _square(M)
    if radius is None:
        radius = np.linalg.norm(M, 2) * 1.1 + 0.1
    re = np.real(center) + np.linspace(-radius, radius, n)
    im = np.imag(center) + np.linspace(-radius, radius, n)
    zs = (re[None, :] + 1j * im[:, None]).ravel()
    eye = np.eye(M.shape[0])
    A = M[None, :, :] - zs[:, None, None] * eye[None, :, :]
    smin = np.linalg.svd(A, compute_uv=False)[:, -1].reshape(n, n)
    return re, im, smin
