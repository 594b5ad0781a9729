"""Experiment drivers: rate fitting, benchmark tables, and dataset ingestion.

The empirical mixing rate of a coupled pair is the negated slope of an
ordinary least-squares fit to ``log sq_dist``; tables average that fit over
independent runs and set it against the closed-form block rate
``-log max_i rho(J_i)`` and the exact contraction rate ``-log rho(C)``.
"""

import csv
import json
import os
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from . import __version__ as _version
from .chains import ChainState, Theta, run_chain, run_coupled_ensemble
from .contraction import build_contraction_matrix, w2_upper_bound
from .errors import ArgumentError, DivergenceError, FitError
from .moments import LabelModel
from .spectral import (
    build_J_blocks,
    jblock_mixing_bound,
    pseudospectral_radius,
    spectral_radius,
)

__all__ = [
    "FitResult",
    "fit_exponential_rate",
    "RateRow",
    "rate_summary",
    "run_table",
    "run_chain_distances",
    "RealizableRun",
    "run_realizable",
    "EmpiricalModel",
    "ingest_dataset",
    "emit_results",
    "ExperimentConfig",
    "BENCHMARK_THETAS",
    "RATE_TABLE_COLUMNS",
]

# Hyperparameter rows of the two published benchmark tables, in row order.
BENCHMARK_THETAS = {
    "gaussian": (
        Theta(2.0, 0.95, 0.1),
        Theta(2.0, 0.99, 0.1),
        Theta(3.0, 0.95, 0.1),
        Theta(2.0, 0.95, 0.01),
    ),
    "uniform_rademacher": (
        Theta(2.0, 0.95, 2e-3),
        Theta(2.0, 0.99, 2e-3),
        Theta(3.0, 0.95, 2e-3),
        Theta(2.0, 0.95, 4e-4),
    ),
}

RATE_TABLE_COLUMNS = (
    "alpha",
    "beta",
    "gamma",
    "empirical_rate",
    "empirical_stderr",
    "theoretical_rate",
)

UNDERFLOW_FLOOR = 1e-280
MIN_FIT_POINTS = 10


class FitResult(NamedTuple):
    rate: float
    stderr: float
    r_squared: float


def fit_exponential_rate(sq_dist, burn_in=0.1):
    """Decay rate of ``sq_dist ~ exp(-rate * step)`` by OLS on the log.

    The leading ``burn_in`` fraction is discarded, as is everything from
    the first entry below ``1e-280`` on (squared distances underflow to
    garbage long before they reach zero).  Raises :class:`FitError` when
    fewer than ten usable points remain.
    """
    values = np.asarray(sq_dist, dtype=float)
    if values.ndim != 1:
        raise ArgumentError("sq_dist must be one-dimensional")
    if not 0 <= burn_in < 1:
        raise ArgumentError(f"burn_in must lie in [0, 1), got {burn_in}")
    tail = values[int(burn_in * values.size) :]
    dead = np.flatnonzero(tail < UNDERFLOW_FLOOR)
    if dead.size:
        tail = tail[: dead[0]]
    if tail.size < MIN_FIT_POINTS:
        raise FitError(
            f"only {tail.size} usable points after burn-in and underflow trimming"
        )
    t = np.arange(tail.size, dtype=float)
    ly = np.log(tail)
    if np.allclose(ly, ly[0], rtol=0, atol=1e-12 * max(1.0, abs(ly[0]))):
        return FitResult(rate=0.0, stderr=0.0, r_squared=1.0)
    t_c = t - t.mean()
    sxx = t_c @ t_c
    slope = (t_c @ ly) / sxx
    resid = ly - ly.mean() - slope * t_c
    ss_res = resid @ resid
    ss_tot = (ly - ly.mean()) @ (ly - ly.mean())
    stderr = np.sqrt(ss_res / (tail.size - 2) / sxx)
    r_squared = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return FitResult(rate=float(-slope), stderr=float(stderr), r_squared=float(r_squared))


@dataclass(frozen=True)
class RateRow:
    """One benchmark-table row: a hyperparameter triple and its rates."""

    theta: Theta
    empirical_rate: float
    empirical_stderr: float
    theoretical_rate: float
    spectral_rate: float
    notes: str = ""

    def as_dict(self):
        return {
            "alpha": self.theta.alpha,
            "beta": self.theta.beta,
            "gamma": self.theta.gamma,
            "empirical_rate": self.empirical_rate,
            "empirical_stderr": self.empirical_stderr,
            "theoretical_rate": self.theoretical_rate,
            "spectral_rate": self.spectral_rate,
            "notes": self.notes,
        }


def rate_summary(model, theta, eps=None, ridge=0.0):
    """Closed-form rates for one configuration.

    Returns a dict with the per-coordinate block radii, the block rate
    ``-log max_i rho(J_i)`` (the quantity quoted as the theoretical rate in
    the benchmark tables), the exact ``rho(C)`` and its rate, and, when
    ``eps`` is given, the mixing bound diagnostics.
    """
    radii = np.array([spectral_radius(J) for J in build_J_blocks(model, theta, ridge)])
    rho = spectral_radius(build_contraction_matrix(model, theta, ridge).mat)
    out = {
        "j_radii": radii,
        "block_rate": float(-np.log(np.max(radii))),
        "rho": float(rho),
        "spectral_rate": float(-np.log(rho)),
    }
    if eps is not None:
        report = jblock_mixing_bound(model, theta, eps, ridge)
        out["mixing_bound"] = report.rho_eps
        out["perturbation_term"] = report.perturbation_term
    return out


def _child_seeds(seed, count):
    """Independent integer seeds derived from one root seed."""
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(count)]


def run_table(
    model,
    thetas,
    n=1000,
    runs=10,
    seed=0,
    burn_in=0.1,
    eps=None,
    ridge=0.0,
    init0=None,
    init1=None,
):
    """Empirical-vs-theoretical rate table over a list of hyperparameters.

    Each row runs ``runs`` coupled pairs (initialized at all-ones and
    all-zeros unless overridden), fits a decay rate per run, and averages;
    ``empirical_stderr`` is the standard error of that average.  Divergent
    configurations produce a row with NaN empirical entries and a note
    rather than aborting the table.
    """
    if runs < 1:
        raise ArgumentError("runs must be at least 1")
    d = model.dim
    init0 = init0 or ChainState.fresh(np.ones(d))
    init1 = init1 or ChainState.fresh(np.zeros(d))
    rows = []
    for theta, row_seed in zip(thetas, _child_seeds(seed, len(thetas))):
        summary = rate_summary(model, theta, eps=eps, ridge=ridge)
        notes = []
        try:
            sq = run_coupled_ensemble(
                model, theta, init0, init1, n, runs, row_seed, ridge=ridge
            )
            fits = []
            for trajectory in sq:
                try:
                    fits.append(fit_exponential_rate(trajectory, burn_in).rate)
                except FitError as exc:
                    notes.append(str(exc))
            if not fits:
                raise FitError("no run produced a usable fit")
            rate = float(np.mean(fits))
            stderr = (
                float(np.std(fits, ddof=1) / np.sqrt(len(fits)))
                if len(fits) > 1
                else float("nan")
            )
        except DivergenceError as exc:
            rate, stderr = float("nan"), float("nan")
            notes.append(f"diverged at step {exc.step}")
        except FitError as exc:
            rate, stderr = float("nan"), float("nan")
            notes.append(str(exc))
        if eps is not None:
            notes.append(f"mixing_bound={summary['mixing_bound']:.6g}")
        rows.append(
            RateRow(
                theta=theta,
                empirical_rate=rate,
                empirical_stderr=stderr,
                theoretical_rate=summary["block_rate"],
                spectral_rate=summary["spectral_rate"],
                notes="; ".join(notes),
            )
        )
    return rows


def run_chain_distances(model, labels, theta, init, reference, n, seed, stride=1, ridge=0.0):
    """One chain's squared lifted distance to ``(reference, reference)``.

    Returns ``(steps, values)`` aligned arrays (recorded every ``stride``
    steps, endpoints always included).
    """
    reference = np.atleast_1d(np.asarray(reference, dtype=float))
    if reference.shape != (model.dim,):
        raise ArgumentError(f"reference must have shape ({model.dim},)")
    chain = run_chain(model, labels, theta, init, n, seed, stride=stride, ridge=ridge)
    values = np.array(
        [
            (s.w_curr - reference) @ (s.w_curr - reference)
            + (s.w_prev - reference) @ (s.w_prev - reference)
            for s in chain.states
        ]
    )
    return np.asarray(chain.steps), values


@dataclass(frozen=True)
class RealizableRun:
    """Averaged convergence trajectory toward an interpolating ``w*``."""

    steps: np.ndarray
    mean_sq_dist: np.ndarray
    sq_dist: np.ndarray
    envelope: Optional[np.ndarray]
    theta: Theta
    wstar: np.ndarray
    seed: int
    eps: Optional[float]

    def fit(self, burn_in=0.1):
        return fit_exponential_rate(self.mean_sq_dist, burn_in)


def run_realizable(model, wstar, theta, n=1000, runs=5, seed=0, eps=None, init=None, ridge=0.0):
    """Track ``E ||u_k - (w*, w*)||^2`` under realizable labels.

    With labels ``y = <w*, x>`` the point ``(w*, w*)`` is a fixed point of
    the update, so the squared distance to it should contract at the
    coupling rate.  When ``eps`` is given the closed-form transport
    envelope is evaluated alongside (same initial distance, one shared
    pseudospectral radius).
    """
    wstar = np.atleast_1d(np.asarray(wstar, dtype=float))
    if wstar.shape != (model.dim,):
        raise ArgumentError(f"wstar must have shape ({model.dim},)")
    if ridge:
        warnings.warn("ridge shifts the fixed point away from (w*, w*)", stacklevel=2)
    labels = LabelModel.realizable(wstar)
    init = init or ChainState.fresh(np.zeros(model.dim))
    sq = np.empty((runs, n + 1))
    for r, run_seed in enumerate(_child_seeds(seed, runs)):
        chain = run_chain(model, labels, theta, init, n, run_seed, stride=1, ridge=ridge)
        for k, state in zip(chain.steps, chain.states):
            dc = state.w_curr - wstar
            dp = state.w_prev - wstar
            sq[r, k] = dc @ dc + dp @ dp
    mean = sq.mean(axis=0)
    envelope = None
    if eps is not None:
        C = build_contraction_matrix(model, theta, ridge)
        rho_eps = pseudospectral_radius(C.mat, eps)
        envelope = np.array(
            [w2_upper_bound(C, eps, k, mean[0], rho_eps=rho_eps) for k in range(n + 1)]
        )
    return RealizableRun(
        steps=np.arange(n + 1),
        mean_sq_dist=mean,
        sq_dist=sq,
        envelope=envelope,
        theta=theta,
        wstar=wstar,
        seed=seed,
        eps=eps,
    )


@dataclass(frozen=True)
class EmpiricalModel:
    """Moment data measured from a dataset, with row resampling as sampler.

    Matches the analytic model interface (``dim``, ``basis``, ``sigma``,
    ``kurt``, ``mu``, ``L``, ``draw``, ``draw_batch``, ``describe``) so the
    chain, spectral, and tuning code accept it unchanged.  ``sigma`` and
    ``kurt`` describe the *effective* (ridge-shifted) design; ``X`` holds
    the standardized feature rows actually resampled.
    """

    dim: int
    basis: np.ndarray
    sigma: np.ndarray
    kurt: np.ndarray
    X: np.ndarray
    y: np.ndarray
    ridge: float
    scale: float
    dropped: tuple
    source: str

    @property
    def mu(self):
        return float(self.sigma[0])

    @property
    def L(self):
        return float(self.sigma[-1])

    def draw(self, rng, size=None):
        rows = self.X[rng.integers(0, self.X.shape[0], size=size)]
        return rows

    def draw_batch(self, rng, size):
        return self.X[rng.integers(0, self.X.shape[0], size=size)]

    def describe(self):
        return (
            f"empirical[{os.path.basename(self.source)}] d={self.dim} "
            f"rows={self.X.shape[0]} ridge={self.ridge:g} mu={self.mu:.4g} L={self.L:.4g}"
        )


def _read_delimited(path):
    """Numeric table plus header names; non-numeric cells are an error."""
    try:
        data = np.genfromtxt(path, delimiter=",", names=True, dtype=float)
    except OSError as exc:
        raise ArgumentError(f"cannot read dataset {path}: {exc}") from exc
    if data.dtype.names is None:
        raise ArgumentError(f"dataset {path} needs a header row of column names")
    names = list(data.dtype.names)
    table = np.column_stack([np.asarray(data[c], dtype=float) for c in names])
    if np.isnan(table).any():
        bad = [names[j] for j in np.unique(np.nonzero(np.isnan(table))[1])]
        raise ArgumentError(f"dataset {path} has non-numeric or missing cells in {bad}")
    return table, names


def ingest_dataset(path, target_column, l2_penalty=1e-3):
    """Turn a delimited numeric file into an :class:`EmpiricalModel`.

    Features are centered, constant columns dropped with a warning, and the
    whole design rescaled (if needed) so the top covariance eigenvalue is
    below one.  ``sigma``/``kurt`` are measured on the decorrelated
    coordinates, then ``l2_penalty`` is added to every ``sigma`` entry so
    the effective curvature is bounded away from zero even when the raw
    design is rank-deficient.
    """
    if l2_penalty < 0:
        raise ArgumentError("l2_penalty must be nonnegative")
    table, names = _read_delimited(path)
    if isinstance(target_column, (int, np.integer)):
        if not 0 <= target_column < len(names):
            raise ArgumentError(f"target column index {target_column} out of range")
        target_idx = int(target_column)
    else:
        if target_column not in names:
            raise ArgumentError(f"no column named {target_column!r} in {names}")
        target_idx = names.index(target_column)
    y = table[:, target_idx]
    feature_idx = [j for j in range(len(names)) if j != target_idx]
    X = table[:, feature_idx]
    feature_names = [names[j] for j in feature_idx]

    keep = np.ptp(X, axis=0) > 0
    dropped = tuple(name for name, k in zip(feature_names, keep) if not k)
    if dropped:
        warnings.warn(f"dropping constant columns {list(dropped)}", stacklevel=2)
        X = X[:, keep]
    if X.shape[1] == 0:
        raise ArgumentError("no usable feature columns remain")
    if X.shape[0] <= X.shape[1]:
        raise ArgumentError(
            f"need more rows ({X.shape[0]}) than features ({X.shape[1]})"
        )

    X = X - X.mean(axis=0)
    cov = (X.T @ X) / X.shape[0]
    top = float(np.linalg.eigvalsh(cov)[-1])
    scale = 1.0
    if top > 1.0:
        scale = np.sqrt(0.99 / top)
        X = X * scale
        cov = cov * scale**2
    evals, basis = np.linalg.eigh(cov)
    decorrelated = X @ basis
    kurt = np.mean(decorrelated**4, axis=0)
    sigma = np.maximum(evals, 0.0) + l2_penalty
    return EmpiricalModel(
        dim=X.shape[1],
        basis=basis,
        sigma=sigma,
        kurt=kurt + l2_penalty**2 + 2 * l2_penalty * np.maximum(evals, 0.0),
        X=X,
        y=y,
        ridge=float(l2_penalty),
        scale=float(scale),
        dropped=dropped,
        source=str(path),
    )


@dataclass(frozen=True)
class ExperimentConfig:
    """CLI-level experiment description, echoed into output sidecars."""

    model: str = "gaussian"
    mu: float = 0.05
    kappa: float = 0.05
    theta: Optional[Theta] = None
    preset: Optional[str] = None
    n: int = 1000
    runs: int = 10
    seed: int = 0
    eps: Optional[float] = None
    ridge: float = 0.0
    out: Optional[str] = None
    format: str = "csv"
    dataset: Optional[str] = None
    target: Optional[str] = None
    extra: dict = field(default_factory=dict)

    def as_dict(self):
        doc = {
            "model": self.model,
            "mu": self.mu,
            "kappa": self.kappa,
            "theta": None if self.theta is None else self.theta.as_dict(),
            "preset": self.preset,
            "n": self.n,
            "runs": self.runs,
            "seed": self.seed,
            "eps": self.eps,
            "ridge": self.ridge,
            "out": self.out,
            "format": self.format,
            "dataset": self.dataset,
            "target": self.target,
        }
        doc.update(self.extra)
        return doc


def _sidecar_path(path):
    root, ext = os.path.splitext(str(path))
    return root + (".meta.json" if ext == ".json" else ".json")


def emit_results(data, path, format="csv", metadata=None):
    """Write rate rows or a trajectory to disk, plus a metadata sidecar.

    ``data`` is either a list of :class:`RateRow` (written with the
    canonical six-column header; extra fields live in the JSON form and
    sidecar) or a ``(steps, values)`` trajectory written as ``step,value``
    rows.  Floats are emitted via ``repr`` so they round-trip exactly.
    Returns the sidecar path.
    """
    if format not in ("csv", "json"):
        raise ArgumentError(f"format must be 'csv' or 'json', got {format!r}")
    if data is None or len(data) == 0:
        raise ArgumentError("nothing to write")
    is_rows = isinstance(data, (list, tuple)) and isinstance(data[0], RateRow)
    try:
        parent = os.path.dirname(os.path.abspath(path))
        os.makedirs(parent, exist_ok=True)
        if format == "csv":
            with open(path, "w", newline="") as fh:
                writer = csv.writer(fh)
                if is_rows:
                    writer.writerow(RATE_TABLE_COLUMNS)
                    for row in data:
                        doc = row.as_dict()
                        writer.writerow([repr(float(doc[c])) for c in RATE_TABLE_COLUMNS])
                else:
                    steps, values = data
                    writer.writerow(["step", "value"])
                    for k, v in zip(steps, values):
                        writer.writerow([int(k), repr(float(v))])
        else:
            with open(path, "w") as fh:
                if is_rows:
                    json.dump([row.as_dict() for row in data], fh, indent=2)
                else:
                    steps, values = data
                    json.dump(
                        {
                            "step": [int(k) for k in steps],
                            "value": [float(v) for v in values],
                        },
                        fh,
                        indent=2,
                    )
                fh.write("\n")
        sidecar = _sidecar_path(path)
        with open(sidecar, "w") as fh:
            json.dump(
                {"version": _version, "metadata": metadata or {}},
                fh,
                indent=2,
                default=str,
            )
            fh.write("\n")
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc
    return sidecar
