"""Grid paths and ensembles in the truncated dual, with continuity diagnostics.

Paths are plain grid functions: a scalar path holds ``J+1`` values on a
uniform grid over ``[0, T]``, a dual path holds one coefficient vector per
node.  No interpolation is performed between nodes; suprema and moduli are
taken over grid pairs, so refinement studies expose discretization error
explicitly.

The two modulus-of-continuity functionals and the running dual-norm supremum
are the quantitative inputs for the compact-containment diagnostics: a family
of paths is empirically tight when the sup-norm exceedance frequencies stay
small at a fixed level and the modulus quantiles decay as the time gap
shrinks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .hermite import BasisSpec, DualElement, SeminormIndex, TestFunction

__all__ = [
    "TimeGrid",
    "ScalarPath",
    "ScalarPathEnsemble",
    "DualPath",
    "DualPathEnsemble",
    "modulus_testfn",
    "modulus_dual",
    "modulus_scalar",
    "sup_dual_norm",
    "compact_containment_report",
    "containment_summary",
    "write_scalar_paths_csv",
    "read_scalar_paths_csv",
    "write_dual_paths_csv",
    "read_dual_paths_csv",
]


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_j = j T / J`` with ``J + 1`` nodes on ``[0, T]``."""

    horizon: float
    steps: int

    def __post_init__(self) -> None:
        if not np.isfinite(self.horizon) or self.horizon <= 0:
            raise ValueError("horizon must be positive and finite")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")

    @property
    def dt(self) -> float:
        return self.horizon / self.steps

    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.steps + 1)

    def index_of(self, t: float) -> int:
        """Grid index of time ``t`` (must sit on a node up to rounding)."""
        j = int(round(t / self.dt))
        if j < 0 or j > self.steps or abs(j * self.dt - t) > 1e-9 * max(1.0, self.horizon):
            raise ValueError(f"time {t} is not a node of the grid")
        return j


@dataclass(frozen=True, eq=False)
class ScalarPath:
    """One real-valued path sampled on a :class:`TimeGrid`."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.steps + 1,):
            raise ValueError("values must have J+1 entries")
        if not np.all(np.isfinite(v)):
            raise ValueError("path values must be finite")
        object.__setattr__(self, "values", v)

    def at(self, t: float) -> float:
        return float(self.values[self.grid.index_of(t)])


@dataclass(frozen=True, eq=False)
class ScalarPathEnsemble:
    """M scalar paths on one grid, with seed provenance."""

    grid: TimeGrid
    values: np.ndarray
    seed_info: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[1] != self.grid.steps + 1:
            raise ValueError("values must have shape (M, J+1)")
        if not np.all(np.isfinite(v)):
            raise ValueError("path values must be finite")
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return self.values.shape[0]

    def path(self, i: int) -> ScalarPath:
        return ScalarPath(self.grid, self.values[i])

    def at(self, t: float) -> np.ndarray:
        return self.values[:, self.grid.index_of(t)]


@dataclass(frozen=True, eq=False)
class DualPath:
    """One dual-valued path: coefficient vector per grid node."""

    grid: TimeGrid
    basis: BasisSpec
    states: np.ndarray

    def __post_init__(self) -> None:
        s = np.asarray(self.states, dtype=float)
        if s.shape != (self.grid.steps + 1, self.basis.size):
            raise ValueError("states must have shape (J+1, basis.size)")
        if not np.all(np.isfinite(s)):
            raise ValueError("path states must be finite")
        object.__setattr__(self, "states", s)

    def at(self, t: float) -> DualElement:
        return DualElement(self.basis, self.states[self.grid.index_of(t)])

    def project(self, phi: TestFunction) -> ScalarPath:
        """The scalar path ``t -> <x(t), phi>``."""
        if phi.basis != self.basis:
            raise ValueError("projection requires matching bases")
        return ScalarPath(self.grid, self.states @ phi.coeffs)


@dataclass(frozen=True, eq=False)
class DualPathEnsemble:
    """M dual paths sharing one grid and basis."""

    grid: TimeGrid
    basis: BasisSpec
    states: np.ndarray
    seed_info: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        s = np.asarray(self.states, dtype=float)
        if s.ndim != 3 or s.shape[1:] != (self.grid.steps + 1, self.basis.size):
            raise ValueError("states must have shape (M, J+1, basis.size)")
        if not np.all(np.isfinite(s)):
            raise ValueError("path states must be finite")
        object.__setattr__(self, "states", s)

    def __len__(self) -> int:
        return self.states.shape[0]

    def path(self, i: int) -> DualPath:
        return DualPath(self.grid, self.basis, self.states[i])


# ---------------------------------------------------------------------------
# modulus of continuity and sup norms
# ---------------------------------------------------------------------------


def _max_lag(grid: TimeGrid, delta: float) -> int:
    if not np.isfinite(delta) or delta <= 0:
        raise ValueError("delta must be positive")
    if delta > grid.horizon:
        raise ValueError("delta must not exceed the horizon")
    # non-strict comparison |t_i - t_j| <= delta, tolerant of rounding
    return min(grid.steps, int(np.floor(delta / grid.dt * (1.0 + 1e-12))))


def modulus_scalar(values: np.ndarray, grid: TimeGrid, delta: float) -> float:
    """Largest increment of a scalar grid path over time gaps <= delta."""
    v = np.asarray(values, dtype=float)
    lag_max = _max_lag(grid, delta)
    best = 0.0
    for lag in range(1, lag_max + 1):
        best = max(best, float(np.max(np.abs(v[..., lag:] - v[..., :-lag]))))
    return best


def modulus_testfn(x: DualPath, delta: float, phi: TestFunction) -> float:
    """Modulus of continuity of the projection ``t -> <x(t), phi>``."""
    return modulus_scalar(x.project(phi).values, x.grid, delta)


def modulus_dual(x: DualPath, delta: float, r) -> float:
    """Modulus of continuity in the dual norm of rung ``r``.

    Maximum of ``p'_r(x(t_i) - x(t_j))`` over grid pairs with
    ``|t_i - t_j| <= delta``.
    """
    rv = r if isinstance(r, SeminormIndex) else SeminormIndex(float(r))
    w = rv.dual_weights(x.basis.size)
    s = x.states * w
    lag_max = _max_lag(x.grid, delta)
    best = 0.0
    for lag in range(1, lag_max + 1):
        diff = s[lag:] - s[:-lag]
        best = max(best, float(np.sqrt(np.max(np.sum(diff * diff, axis=-1)))))
    return best


def sup_dual_norm(x: DualPath, r) -> float:
    """Running supremum ``max_j p'_r(x(t_j))`` over the grid."""
    rv = r if isinstance(r, SeminormIndex) else SeminormIndex(float(r))
    w = rv.dual_weights(x.basis.size)
    s = x.states * w
    return float(np.sqrt(np.max(np.sum(s * s, axis=-1))))


# ---------------------------------------------------------------------------
# compact-containment diagnostics
# ---------------------------------------------------------------------------


def containment_summary(
    sup_norms: np.ndarray,
    modulus_table: np.ndarray,
    c_levels,
    delta_grid,
    quantiles=(0.5, 0.9, 0.99),
) -> dict:
    """Assemble exceedance frequencies and modulus quantiles from reductions.

    ``sup_norms`` has one entry per path; ``modulus_table`` has shape
    ``(paths, len(delta_grid))``.  Used both by
    :func:`compact_containment_report` and by streaming drivers that never
    materialize a full ensemble.
    """
    sup_norms = np.asarray(sup_norms, dtype=float)
    modulus_table = np.asarray(modulus_table, dtype=float)
    if sup_norms.size == 0:
        raise ValueError("empty ensemble")
    c_levels = [float(c) for c in c_levels]
    delta_grid = [float(d) for d in delta_grid]
    exceedance = {
        f"{c!r}": float(np.mean(sup_norms > c)) for c in c_levels
    }
    mod_quant = {
        f"{q!r}": [float(v) for v in np.quantile(modulus_table, q, axis=0)]
        for q in quantiles
    }
    return {
        "paths": int(sup_norms.size),
        "c_levels": c_levels,
        "exceedance": exceedance,
        "delta_grid": delta_grid,
        "modulus_quantiles": mod_quant,
        "sup_norm_quantiles": {
            f"{q!r}": float(np.quantile(sup_norms, q)) for q in quantiles
        },
    }


def compact_containment_report(
    ensemble: DualPathEnsemble,
    r,
    c_levels,
    delta_grid,
    quantiles=(0.5, 0.9, 0.99),
) -> dict:
    """Empirical containment report for an ensemble of dual paths.

    Reports the frequency of ``sup_t p'_r > C`` for each level ``C`` and
    quantile curves of the dual modulus over the delta grid.
    """
    if len(ensemble) == 0:
        raise ValueError("empty ensemble")
    sups = np.array([sup_dual_norm(ensemble.path(i), r) for i in range(len(ensemble))])
    table = np.array(
        [
            [modulus_dual(ensemble.path(i), d, r) for d in delta_grid]
            for i in range(len(ensemble))
        ]
    )
    return containment_summary(sups, table, c_levels, delta_grid, quantiles)


# ---------------------------------------------------------------------------
# CSV serialization
# ---------------------------------------------------------------------------


def write_scalar_paths_csv(ensemble: ScalarPathEnsemble, path) -> None:
    """Rows ``path,step,value``; floats via repr for lossless round-trips."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("path,step,value\n")
        for i in range(len(ensemble)):
            row = ensemble.values[i]
            for j in range(row.size):
                fh.write(f"{i},{j},{float(row[j])!r}\n")


def read_scalar_paths_csv(path, grid: TimeGrid) -> ScalarPathEnsemble:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    n_paths = int(data[:, 0].max()) + 1
    values = np.empty((n_paths, grid.steps + 1))
    values[data[:, 0].astype(int), data[:, 1].astype(int)] = data[:, 2]
    return ScalarPathEnsemble(grid, values)


def write_dual_paths_csv(ensemble: DualPathEnsemble, path) -> None:
    """Rows ``path,step,k,value``."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("path,step,k,value\n")
        for i in range(len(ensemble)):
            states = ensemble.states[i]
            for j in range(states.shape[0]):
                for k in range(states.shape[1]):
                    fh.write(f"{i},{j},{k},{float(states[j, k])!r}\n")


def read_dual_paths_csv(path, grid: TimeGrid, basis: BasisSpec) -> DualPathEnsemble:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    n_paths = int(data[:, 0].max()) + 1
    states = np.empty((n_paths, grid.steps + 1, basis.size))
    states[
        data[:, 0].astype(int), data[:, 1].astype(int), data[:, 2].astype(int)
    ] = data[:, 3]
    return DualPathEnsemble(grid, basis, states)
