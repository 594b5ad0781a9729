"""SGD and momentum-SGD recurrences on least squares, and coupled pairs.

The accelerated update with hyperparameters ``Theta = (alpha, beta, gamma)``
is

    w_next = w_curr + beta (w_curr - w_prev)
             - gamma grad_z(w_curr + alpha (w_curr - w_prev))

with the stochastic least-squares gradient ``grad_z(w) = x (x @ w) - y x``.
Lifting to ``u = (w_curr, w_prev)`` makes the iteration a Markov chain on
R^{2d}; two chains coupled by sharing the data stream have a difference
that evolves by the label-free random linear map :func:`build_A_matrix`.
"""

import csv
import json
import os
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, DivergenceError
from .moments import sample_input

__all__ = [
    "Theta",
    "ChainState",
    "ChainRun",
    "CoupledTrajectory",
    "sgd_step",
    "sagd_step",
    "build_A_matrix",
    "run_chain",
    "run_coupled_chains",
    "run_coupled_ensemble",
]

DIVERGENCE_LIMIT = 1e150


@dataclass(frozen=True)
class Theta:
    """Hyperparameters: extrapolation ``alpha``, momentum ``beta``, stepsize ``gamma``."""

    alpha: float
    beta: float
    gamma: float

    def __post_init__(self):
        if not self.alpha >= 0:
            raise ArgumentError(f"alpha must be nonnegative, got {self.alpha}")
        if not 0 <= self.beta < 1:
            raise ArgumentError(f"beta must lie in [0, 1), got {self.beta}")
        if not self.gamma > 0:
            raise ArgumentError(f"gamma must be positive, got {self.gamma}")

    def as_dict(self):
        return {"alpha": self.alpha, "beta": self.beta, "gamma": self.gamma}


@dataclass(frozen=True)
class ChainState:
    """Lifted iterate ``u = (w_curr, w_prev)``."""

    w_curr: np.ndarray
    w_prev: np.ndarray

    def __post_init__(self):
        wc = np.atleast_1d(np.asarray(self.w_curr, dtype=float))
        wp = np.atleast_1d(np.asarray(self.w_prev, dtype=float))
        if wc.shape != wp.shape or wc.ndim != 1:
            raise ArgumentError("w_curr and w_prev must be vectors of equal length")
        object.__setattr__(self, "w_curr", wc)
        object.__setattr__(self, "w_prev", wp)

    @classmethod
    def fresh(cls, w0):
        """Standard start: current and previous iterate both equal ``w0``."""
        w0 = np.asarray(w0, dtype=float)
        return cls(w_curr=w0.copy(), w_prev=w0.copy())

    @property
    def dim(self):
        return self.w_curr.size

    def lifted(self):
        return np.concatenate([self.w_curr, self.w_prev])


@dataclass(frozen=True)
class ChainRun:
    """Recorded trajectory: states at ``steps`` plus the final state."""

    steps: tuple
    states: tuple
    final: ChainState


@dataclass(frozen=True)
class CoupledTrajectory:
    """Squared distance between two coupled chains, one entry per step.

    ``sq_dist[k]`` is ``||u_k^(0) - u_k^(1)||^2`` on the lifted states, for
    ``k = 0 .. n``, so the array has ``n + 1`` entries and ``sq_dist[0]``
    is the initial squared distance.
    """

    n: int
    sq_dist: np.ndarray
    seed: int
    theta: Theta
    model_id: str

    def __post_init__(self):
        sq = np.asarray(self.sq_dist, dtype=float)
        if sq.ndim != 1 or sq.size != self.n + 1:
            raise ArgumentError("sq_dist must have n + 1 entries")
        if np.any(sq < 0):
            raise ArgumentError("sq_dist must be nonnegative")
        object.__setattr__(self, "sq_dist", sq)

    def to_csv(self, path):
        """Write ``step,sq_dist`` rows plus a ``.json`` metadata sidecar."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "sq_dist"])
            for k, v in enumerate(self.sq_dist):
                writer.writerow([k, repr(float(v))])
        sidecar = os.path.splitext(str(path))[0] + ".json"
        with open(sidecar, "w") as fh:
            json.dump(
                {
                    "seed": self.seed,
                    "theta": self.theta.as_dict(),
                    "model_id": self.model_id,
                    "n": self.n,
                },
                fh,
                indent=2,
            )
            fh.write("\n")
        return sidecar


def sgd_step(w, x, y, gamma, ridge=0.0):
    """One plain SGD step ``w - gamma (x (x @ w) - y x + ridge w)``.

    Rank-one action only; no d x d matrix is formed.
    """
    grad = x * (x @ w) - y * x
    if ridge:
        grad = grad + ridge * w
    return w - gamma * grad


def sagd_step(state, x, y, theta, ridge=0.0):
    """One accelerated step; returns the new :class:`ChainState`.

    The gradient is evaluated at the extrapolated point
    ``e = w_curr + alpha (w_curr - w_prev)`` and the momentum term uses
    ``beta``; with ``alpha = beta = 0`` this reduces exactly to
    :func:`sgd_step` on ``w_curr``.
    """
    wc, wp = state.w_curr, state.w_prev
    momentum = wc - wp
    e = wc + theta.alpha * momentum
    grad = x * (x @ e) - y * x
    if ridge:
        grad = grad + ridge * e
    w_next = wc + theta.beta * momentum - theta.gamma * grad
    return ChainState(w_curr=w_next, w_prev=wc)


def build_A_matrix(x, theta, ridge=0.0):
    """Random linear map of one step on the lifted space.

    Returns the 2d x 2d block matrix
    ``[[(1+beta) I - (1+alpha) gamma H, alpha gamma H - beta I], [I, 0]]``
    with ``H = x x^T + ridge I``; applying it to ``(w_curr, w_prev)``
    reproduces :func:`sagd_step` with ``y = 0``.  Used by oracles and
    tests; simulation itself stays rank-one.
    """
    x = np.asarray(x, dtype=float)
    d = x.size
    H = np.outer(x, x)
    if ridge:
        H = H + ridge * np.eye(d)
    eye = np.eye(d)
    A = np.zeros((2 * d, 2 * d))
    A[:d, :d] = (1 + theta.beta) * eye - (1 + theta.alpha) * theta.gamma * H
    A[:d, d:] = theta.alpha * theta.gamma * H - theta.beta * eye
    A[d:, :d] = eye
    return A


def _check_finite(w, step):
    if not np.all(np.isfinite(w)) or np.max(np.abs(w)) > DIVERGENCE_LIMIT:
        raise DivergenceError(step)


def run_chain(model, labels, theta, init, n, seed, stride=1, ridge=0.0):
    """Iterate the accelerated chain for ``n`` steps.

    Parameters
    ----------
    model : MomentSpec
        Input distribution.
    labels : LabelModel
        Response model; label noise draws use a generator stream separate
        from the input draws, so trajectories of the inputs are identical
        across label models under the same seed.
    init : ChainState
    n : int
        Number of steps (>= 1).
    seed : int
    stride : int
        Record every ``stride``-th state (step 0 and the final state are
        always recorded).  ``stride <= 0`` records only those two.

    Returns
    -------
    ChainRun

    Raises
    ------
    DivergenceError
        If an iterate leaves ``[-1e150, 1e150]`` or becomes non-finite.
    """
    if n < 1:
        raise ArgumentError("n must be at least 1")
    x_rng, label_rng = [
        np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2)
    ]
    state = init
    steps, states = [0], [state]
    for k in range(1, n + 1):
        x = sample_input(model, x_rng)
        y = labels.label(x, label_rng)
        state = sagd_step(state, x, y, theta, ridge=ridge)
        _check_finite(state.w_curr, k)
        if (stride > 0 and k % stride == 0) or k == n:
            steps.append(k)
            states.append(state)
    return ChainRun(steps=tuple(steps), states=tuple(states), final=state)


def run_coupled_chains(model, labels, theta, init0, init1, n, seed, ridge=0.0):
    """Run two chains on one shared ``(x, y)`` stream and record distances.

    The pair is stored as chain 0 plus the difference ``v = u0 - u1``
    rather than as two independent iterates: the difference evolves
    exactly by ``v_next = A v`` (labels cancel algebraically), and keeping
    it explicit avoids the catastrophic cancellation of subtracting two
    nearly converged chains.  Consequently the recorded ``sq_dist`` is
    bit-identical across label models with the same seed.

    Returns
    -------
    CoupledTrajectory
    """
    if n < 1:
        raise ArgumentError("n must be at least 1")
    if init0.dim != init1.dim:
        raise ArgumentError("coupled chains must share a dimension")
    x_rng, label_rng = [
        np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2)
    ]
    state = init0
    vc = init0.w_curr - init1.w_curr
    vp = init0.w_prev - init1.w_prev
    sq = np.empty(n + 1)
    sq[0] = vc @ vc + vp @ vp
    for k in range(1, n + 1):
        x = sample_input(model, x_rng)
        y = labels.label(x, label_rng)
        state = sagd_step(state, x, y, theta, ridge=ridge)
        dm = vc - vp
        e = vc + theta.alpha * dm
        grad = x * (x @ e)
        if ridge:
            grad = grad + ridge * e
        vc, vp = vc + theta.beta * dm - theta.gamma * grad, vc
        _check_finite(state.w_curr, k)
        _check_finite(vc, k)
        sq[k] = vc @ vc + vp @ vp
    return CoupledTrajectory(
        n=n, sq_dist=sq, seed=seed, theta=theta, model_id=model.describe()
    )


def run_coupled_ensemble(model, theta, init0, init1, n, runs, seed, ridge=0.0):
    """Vectorized ensemble of coupled-pair differences.

    Evolves ``runs`` independent coupling differences in one batch (one
    ``(runs, d)`` input draw per step, so the variate layout differs from
    ``runs`` separate :func:`run_coupled_chains` calls) and returns the
    ``(runs, n + 1)`` array of squared distances.
    """
    if runs < 1 or n < 1:
        raise ArgumentError("runs and n must be at least 1")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    vc = np.tile(init0.w_curr - init1.w_curr, (runs, 1))
    vp = np.tile(init0.w_prev - init1.w_prev, (runs, 1))
    sq = np.empty((runs, n + 1))
    sq[:, 0] = np.einsum("ri,ri->r", vc, vc) + np.einsum("ri,ri->r", vp, vp)
    for k in range(1, n + 1):
        X = model.draw_batch(rng, runs)
        dm = vc - vp
        e = vc + theta.alpha * dm
        t = np.einsum("ri,ri->r", X, e)
        grad = X * t[:, None]
        if ridge:
            grad = grad + ridge * e
        vc, vp = vc + theta.beta * dm - theta.gamma * grad, vc
        if not np.all(np.isfinite(vc)) or np.max(np.abs(vc)) > DIVERGENCE_LIMIT:
            raise DivergenceError(k)
        sq[:, k] = np.einsum("ri,ri->r", vc, vc) + np.einsum("ri,ri->r", vp, vp)
    return sq
