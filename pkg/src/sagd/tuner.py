"""Constrained grid search for the momentum hyperparameters, plus presets.

The tuning program minimizes the spectral radius of the flattest
coordinate's block subject to a cap on the steepest coordinate's block,

    min_theta  rho(J_small(theta))   s.t.  rho(J_large(theta)) <= 1 - c sqrt(mu/L),

solved by exhaustive evaluation on a coarse grid followed by deterministic
local refinement.  Alternative objectives (the closed-form mixing bound or
the exact spectral radius of the full contraction matrix) are exposed via
:class:`TuneConfig`.
"""

import json
import os
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .chains import Theta
from .errors import ArgumentError

__all__ = [
    "TuneConfig",
    "TuneResult",
    "default_grids",
    "tune",
    "preset_theta",
]

OBJECTIVES = ("j1", "bound", "rho")


def default_grids(model):
    """Coarse starting grids; beta additionally contains ``1 - sqrt(mu/10)``."""
    alpha = np.arange(0.0, 4.0001, 0.25)
    beta = np.unique(
        np.concatenate([np.arange(0.0, 0.9991, 0.005), [1 - 10**-0.5 * np.sqrt(model.mu)]])
    )
    beta = beta[(beta >= 0) & (beta < 1)]
    gamma = np.logspace(-4, 0, 33)
    return alpha, beta, gamma


@dataclass(frozen=True)
class TuneConfig:
    """Grid-search settings.

    ``objective`` is one of ``"j1"`` (radius of the flattest coordinate's
    block), ``"bound"`` (closed-form mixing bound at ``eps``), or ``"rho"``
    (spectral radius of the full contraction matrix).  ``swap_index``
    exchanges which coordinate provides the objective and which the
    constraint, for exploring the opposite indexing convention.
    """

    alpha_grid: Optional[np.ndarray] = None
    beta_grid: Optional[np.ndarray] = None
    gamma_grid: Optional[np.ndarray] = None
    constraint_c: float = 0.2
    refine_rounds: int = 2
    objective: str = "j1"
    eps: float = 0.05
    swap_index: bool = False

    def __post_init__(self):
        if self.objective not in OBJECTIVES:
            raise ArgumentError(f"objective must be one of {OBJECTIVES}, got {self.objective!r}")
        if not self.constraint_c > 0:
            raise ArgumentError("constraint_c must be positive")
        if self.refine_rounds < 0:
            raise ArgumentError("refine_rounds must be nonnegative")
        for name in ("alpha_grid", "beta_grid", "gamma_grid"):
            grid = getattr(self, name)
            if grid is None:
                continue
            grid = np.asarray(grid, dtype=float)
            if grid.ndim != 1 or grid.size == 0:
                raise ArgumentError(f"{name} must be a nonempty vector")
            object.__setattr__(self, name, grid)
        if self.beta_grid is not None and (
            np.any(self.beta_grid < 0) or np.any(self.beta_grid >= 1)
        ):
            raise ArgumentError("beta grid must lie in [0, 1)")
        if self.gamma_grid is not None and np.any(self.gamma_grid <= 0):
            raise ArgumentError("gamma grid must be positive")
        if self.alpha_grid is not None and np.any(self.alpha_grid < 0):
            raise ArgumentError("alpha grid must be nonnegative")

    def as_dict(self):
        return {
            "alpha_grid": None if self.alpha_grid is None else self.alpha_grid.tolist(),
            "beta_grid": None if self.beta_grid is None else self.beta_grid.tolist(),
            "gamma_grid": None if self.gamma_grid is None else self.gamma_grid.tolist(),
            "constraint_c": self.constraint_c,
            "refine_rounds": self.refine_rounds,
            "objective": self.objective,
            "eps": self.eps,
            "swap_index": self.swap_index,
        }

    @classmethod
    def from_dict(cls, doc):
        grids = {
            k: None if doc.get(k) is None else np.asarray(doc[k], dtype=float)
            for k in ("alpha_grid", "beta_grid", "gamma_grid")
        }
        return cls(
            constraint_c=doc.get("constraint_c", 0.2),
            refine_rounds=doc.get("refine_rounds", 2),
            objective=doc.get("objective", "j1"),
            eps=doc.get("eps", 0.05),
            swap_index=doc.get("swap_index", False),
            **grids,
        )


@dataclass(frozen=True)
class TuneResult:
    theta: Theta
    objective_value: float
    constraint_value: float
    feasible: bool
    evaluations: int

    def as_dict(self):
        return {
            "theta": self.theta.as_dict(),
            "objective_value": self.objective_value,
            "constraint_value": self.constraint_value,
            "feasible": self.feasible,
            "evaluations": self.evaluations,
        }

    @classmethod
    def from_dict(cls, doc):
        return cls(
            theta=Theta(**doc["theta"]),
            objective_value=doc["objective_value"],
            constraint_value=doc["constraint_value"],
            feasible=doc["feasible"],
            evaluations=doc["evaluations"],
        )


def _jblock_radii_batch(points, sigma_i, kurt_i):
    """Spectral radii of one coordinate's block at every (alpha, beta, gamma) row."""
    a, b, g = points[:, 0], points[:, 1], points[:, 2]
    d1 = 1 + b - g * (1 + a) * sigma_i
    d2 = a * g * sigma_i - b
    nz = g**2 * (kurt_i - sigma_i**2)
    J = np.zeros((points.shape[0], 3, 3))
    J[:, 0, 0] = d1**2 + (1 + a) ** 2 * nz
    J[:, 0, 1] = 2 * d1
    J[:, 0, 2] = 1.0
    J[:, 1, 0] = d1 * d2 - a * (1 + a) * nz
    J[:, 1, 1] = d2
    J[:, 2, 0] = d2**2 + a**2 * nz
    return np.max(np.abs(np.linalg.eigvals(J)), axis=1)


def _rho_full_batch(points, sigma, kurt, chunk=4096):
    """Spectral radius of the full contraction matrix at every point."""
    d = sigma.size
    out = np.empty(points.shape[0])
    eye, zero = np.eye(d), np.zeros((d, d))
    for start in range(0, points.shape[0], chunk):
        rows = points[start : start + chunk]
        mats = np.empty((rows.shape[0], 3 * d, 3 * d))
        for t, (a, b, g) in enumerate(rows):
            d1 = np.diag(1 + b - g * (1 + a) * sigma)
            d2 = np.diag(a * g * sigma - b)
            K = g**2 * (np.diag(kurt - 2 * sigma**2) + np.outer(sigma, sigma))
            mats[t] = np.block(
                [
                    [d1 @ d1 + (1 + a) ** 2 * K, 2 * d1, eye],
                    [d1 @ d2 - a * (1 + a) * K, d2, zero],
                    [d2 @ d2 + a**2 * K, zero, zero],
                ]
            )
        out[start : start + rows.shape[0]] = np.max(np.abs(np.linalg.eigvals(mats)), axis=1)
    return out


def _evaluate(points, model, config):
    """Objective and constraint arrays for a block of grid points."""
    sigma, kurt = model.sigma, model.kurt
    i_small, i_large = (model.dim - 1, 0) if config.swap_index else (0, model.dim - 1)
    constraint = _jblock_radii_batch(points, sigma[i_large], kurt[i_large])
    if config.objective == "j1":
        objective = (
            constraint.copy()
            if i_small == i_large
            else _jblock_radii_batch(points, sigma[i_small], kurt[i_small])
        )
    elif config.objective == "bound":
        radii = np.stack(
            [_jblock_radii_batch(points, sigma[i], kurt[i]) for i in range(model.dim)]
        )
        remainder = np.linalg.norm(np.diag(sigma**2) - np.outer(sigma, sigma), 2)
        a, g = points[:, 0], points[:, 2]
        objective = radii.max(axis=0) + config.eps + 3 * (1 + a) ** 2 * g**2 * remainder
    else:  # "rho"
        objective = _rho_full_batch(points, sigma, kurt)
    return objective, constraint


def _shrunk(grid, center, lo_cap, hi_cap, logscale=False):
    """Same point count, quarter span, centered on the incumbent."""
    if grid.size == 1:
        return grid.copy()
    if logscale:
        grid, center = np.log10(grid), np.log10(center)
        lo_cap, hi_cap = np.log10(lo_cap), np.log10(hi_cap)
    span = (grid.max() - grid.min()) / 4.0
    lo = np.clip(center - span / 2, lo_cap, hi_cap)
    hi = np.clip(center + span / 2, lo_cap, hi_cap)
    out = np.linspace(lo, hi, grid.size)
    return 10**out if logscale else out


def tune(model, config=None):
    """Exhaustive grid search with deterministic refinement.

    Every evaluated point is kept; the result is the best feasible point
    over all rounds, with exact ties broken toward lexicographically
    smallest ``(gamma, beta, alpha)``.  If no point is feasible the
    least-violating point is reported with ``feasible=False``.
    """
    config = config or TuneConfig()
    alpha = config.alpha_grid
    beta = config.beta_grid
    gamma = config.gamma_grid
    if alpha is None or beta is None or gamma is None:
        da, db, dg = default_grids(model)
        alpha = da if alpha is None else alpha
        beta = db if beta is None else beta
        gamma = dg if gamma is None else gamma
    threshold = 1 - config.constraint_c * np.sqrt(model.mu / model.L)

    seen_points, seen_obj, seen_con = [], [], []

    def run_round(a_grid, b_grid, g_grid):
        A, B, G = np.meshgrid(a_grid, b_grid, g_grid, indexing="ij")
        points = np.column_stack([A.ravel(), B.ravel(), G.ravel()])
        objective, constraint = _evaluate(points, model, config)
        seen_points.append(points)
        seen_obj.append(objective)
        seen_con.append(constraint)

    def incumbent():
        points = np.concatenate(seen_points)
        objective = np.concatenate(seen_obj)
        constraint = np.concatenate(seen_con)
        feasible = constraint <= threshold + 1e-12
        if np.any(feasible):
            best = np.min(objective[feasible])
            cand = np.flatnonzero(feasible & (objective == best))
        else:
            best = np.min(constraint)
            cand = np.flatnonzero(constraint == best)
        order = np.lexsort(
            (points[cand, 0], points[cand, 1], points[cand, 2])
        )  # primary gamma, then beta, then alpha
        pick = cand[order[0]]
        return points[pick], objective[pick], constraint[pick], bool(np.any(feasible))

    run_round(alpha, beta, gamma)
    a_grid, b_grid, g_grid = alpha, beta, gamma
    for _ in range(config.refine_rounds):
        (a, b, g), _, _, _ = incumbent()
        a_grid = _shrunk(a_grid, a, 0.0, max(alpha.max(), a))
        b_grid = _shrunk(b_grid, b, 0.0, min(0.999, 1 - 1e-9))
        g_grid = _shrunk(g_grid, g, min(gamma.min(), g), max(gamma.max(), g), logscale=True)
        run_round(a_grid, b_grid, g_grid)

    (a, b, g), obj, con, feasible = incumbent()
    return TuneResult(
        theta=Theta(alpha=float(a), beta=float(b), gamma=float(g)),
        objective_value=float(obj),
        constraint_value=float(con),
        feasible=feasible,
        evaluations=int(sum(p.shape[0] for p in seen_points)),
    )


def preset_theta(example, value):
    """Published benchmark hyperparameters.

    ``example`` is ``"example8"``/``"gaussian"`` (then ``value`` is ``mu``
    and the preset is ``alpha=2``, ``beta=1 - sqrt(mu/10)``, ``gamma=0.1``)
    or ``"example11"``/``"uniform_rademacher"`` (then ``value`` is
    ``kappa`` and ``gamma = kappa/10``).  The accompanying guarantees are
    stated for ``value <= 0.02``; larger values only trigger a warning.
    """
    if not 0 < value < 1:
        raise ArgumentError(f"preset parameter must lie in (0, 1), got {value}")
    if value > 0.02:
        warnings.warn(
            f"preset guarantee is stated for parameters <= 0.02, got {value}",
            stacklevel=2,
        )
    beta = 1 - 10**-0.5 * np.sqrt(value)
    if example in ("example8", "gaussian"):
        return Theta(alpha=2.0, beta=float(beta), gamma=0.1)
    if example in ("example11", "uniform_rademacher", "ur"):
        return Theta(alpha=2.0, beta=float(beta), gamma=float(value / 10))
    raise ArgumentError(f"unknown preset {example!r}")


def save_tune_result(result, config, path):
    """Serialize a tune run (result plus the config that produced it)."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as fh:
        json.dump({"config": config.as_dict(), "result": result.as_dict()}, fh, indent=2)
        fh.write("\n")


def load_tune_result(path):
    with open(path) as fh:
        doc = json.load(fh)
    return TuneResult.from_dict(doc["result"]), TuneConfig.from_dict(doc["config"])
