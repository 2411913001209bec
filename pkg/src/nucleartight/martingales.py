"""Particle-average martingales, their quadratic variation, and the Gaussian limit.

For ``n`` independent standard Brownian particles ``B^i`` the rescaled
stochastic-integral family

    M^n_t(phi) = n^(-1/2) sum_i int_0^t phi'(B^i_s) dB^i_s

is simulated with left-point (Ito-consistent) Euler sums on a uniform grid.
Its quadratic variation is the explicit particle average

    <M^n(phi)>_t = n^(-1) sum_i int_0^t phi'(B^i_s)^2 ds,

whose ensemble mean converges to the deterministic variance function

    A(t, phi) = int_0^t E[(phi'(Z_s))^2] ds,       Z_s ~ Normal(0, s),

the variance of the centered Gaussian martingale that the family approaches.
``A`` and the polarized covariance ``C(t; phi, psi)`` are evaluated by nested
quadrature (:class:`QuadraticForm`); :func:`simulate_limit` samples the
limiting Gaussian family directly from its increment covariances.

``clt_report`` packages the empirical checks: quadratic-variation law of
large numbers, Ito isometry, one-dimensional normality (KS), joint
convergence of time-space vectors (energy distance), and path tightness
diagnostics.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import ndtr

from . import diagnostics
from .hermite import (
    BasisSpec,
    TestFunction,
    derivative_op,
    eval_series,
    hermite_functions,
    hermite_polynomials,
    _gh_rule,
    _hermite_modes_first,
)
from .paths import (
    DualPath,
    ScalarPath,
    ScalarPathEnsemble,
    TimeGrid,
    containment_summary,
    modulus_dual,
    sup_dual_norm,
)
from .rng import stream

__all__ = [
    "NumericalIntegrityError",
    "ParticleEnsemble",
    "simulate_particles",
    "mn_scalar_path",
    "quadratic_variation_path",
    "QuadraticForm",
    "limit_variance",
    "cross_covariance",
    "simulate_limit",
    "clt_report",
    "parallel_map",
]


class NumericalIntegrityError(RuntimeError):
    """A numerical invariant failed (for example an increment covariance
    with a significantly negative eigenvalue, signalling quadrature
    misconfiguration)."""


def parallel_map(fn, count: int, threads: int = 1) -> list:
    """Order-preserving map of ``fn`` over ``range(count)``.

    Thread count is a throughput hint only: each work unit derives its own
    random stream from its index, so results are identical for any value.
    """
    if threads <= 1 or count <= 1:
        return [fn(i) for i in range(count)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(count)))


# ---------------------------------------------------------------------------
# particle system
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ParticleEnsemble:
    """Brownian increments for ``count`` particles on a grid.

    Increments are Normal(0, dt), drawn in one fixed-order block from the
    stream keyed by ``(seed, "particles", stream_id)``, hence independent
    across particles and steps and reproducible bit-for-bit.
    """

    count: int
    grid: TimeGrid
    increments: np.ndarray
    seed: int
    stream_id: int

    def __post_init__(self) -> None:
        inc = np.asarray(self.increments, dtype=float)
        if inc.shape != (self.count, self.grid.steps):
            raise ValueError("increments must have shape (count, steps)")
        object.__setattr__(self, "increments", inc)

    def positions(self) -> np.ndarray:
        """Particle positions, shape ``(count, steps + 1)``, starting at 0."""
        b = np.empty((self.count, self.grid.steps + 1))
        b[:, 0] = 0.0
        np.cumsum(self.increments, axis=1, out=b[:, 1:])
        return b


def simulate_particles(
    n: int, grid: TimeGrid, seed: int, stream_id: int = 0
) -> ParticleEnsemble:
    """Draw ``n`` independent Brownian particles started at zero."""
    if n < 1:
        raise ValueError("particle count must be >= 1")
    gen = stream(seed, "particles", stream_id)
    inc = gen.normal(0.0, np.sqrt(grid.dt), size=(n, grid.steps))
    return ParticleEnsemble(n, grid, inc, seed, stream_id)


def _derivative_coeffs(phi: TestFunction) -> np.ndarray:
    return derivative_op(phi.basis) @ phi.coeffs


def _mn_qv_steps(dcoef: np.ndarray, particles: ParticleEnsemble):
    """Per-step martingale and quadratic-variation increments.

    Returns ``(mn_steps, qv_steps)``, each of shape ``(steps,)``:
    left-point evaluation of phi' along each particle, paired with the
    particle's forward increment (martingale) or squared and scaled by dt
    (quadratic variation).
    """
    left = particles.positions()[:, :-1]
    vals = eval_series(dcoef, left)
    root_n = np.sqrt(particles.count)
    mn_steps = (vals * particles.increments).sum(axis=0) / root_n
    qv_steps = (vals * vals).sum(axis=0) * (particles.grid.dt / particles.count)
    return mn_steps, qv_steps


def _cumulative(steps: np.ndarray) -> np.ndarray:
    out = np.empty(steps.size + 1)
    out[0] = 0.0
    np.cumsum(steps, out=out[1:])
    return out


def mn_scalar_path(phi: TestFunction, particles: ParticleEnsemble) -> ScalarPath:
    """Euler Ito sum of the rescaled particle martingale against ``phi``."""
    mn_steps, _ = _mn_qv_steps(_derivative_coeffs(phi), particles)
    return ScalarPath(particles.grid, _cumulative(mn_steps))


def quadratic_variation_path(
    phi: TestFunction, particles: ParticleEnsemble
) -> ScalarPath:
    """Quadratic variation path: nondecreasing, zero at the origin."""
    _, qv_steps = _mn_qv_steps(_derivative_coeffs(phi), particles)
    return ScalarPath(particles.grid, _cumulative(qv_steps))


def _mn_dual_states(particles: ParticleEnsemble, basis: BasisSpec) -> np.ndarray:
    """Coordinate paths ``M_t(h_k)`` for all ``k < basis.size`` at once.

    Shares the particle realization across coordinates and applies the same
    truncated derivative ladder as the scalar path, so projecting the result
    onto any test function in the span reproduces the scalar Euler sum.
    """
    n_modes = basis.size
    grid = particles.grid
    left = particles.positions()[:, :-1]
    inc = particles.increments
    root_n = np.sqrt(particles.count)
    dmn = np.zeros((grid.steps, n_modes))
    ladder = np.sqrt(np.arange(1, n_modes) / 2.0)[:, None]
    # block over time steps to bound the (modes, particles, block) workspace
    block = max(1, int(2_000_000 // max(1, particles.count * n_modes)))
    for a in range(0, grid.steps, block):
        b = min(a + block, grid.steps)
        h = _hermite_modes_first(left[:, a:b], n_modes)
        # contract particles first, then apply the derivative ladder
        # h'_k = sqrt(k/2) h_{k-1} - sqrt((k+1)/2) h_{k+1} (truncated at the top)
        # to the per-mode sums s[k, j] = sum_i h_k(B^i_j) dB^i_j
        s = np.einsum("kij,ij->kj", h, inc[:, a:b])
        contrib = np.zeros((n_modes, b - a))
        contrib[1:] = ladder * s[:-1]
        contrib[: n_modes - 1] -= ladder * s[1:]
        dmn[a:b] = contrib.T / root_n
    states = np.empty((grid.steps + 1, n_modes))
    states[0] = 0.0
    np.cumsum(dmn, axis=0, out=states[1:])
    return states


# ---------------------------------------------------------------------------
# limiting quadratic form
# ---------------------------------------------------------------------------


@lru_cache(maxsize=256)
def _gl_composite(t: float, panels: int, points: int):
    """Composite Gauss-Legendre nodes/weights on [0, t] (read-only)."""
    x, w = np.polynomial.legendre.leggauss(points)
    edges = np.linspace(0.0, t, panels + 1)
    half = np.diff(edges) / 2.0
    mid = (edges[:-1] + edges[1:]) / 2.0
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    nodes.flags.writeable = False
    weights.flags.writeable = False
    return nodes, weights


class QuadraticForm:
    """Evaluator of the limit covariance ``C(t; phi, psi)`` by nested quadrature.

    The inner expectation against Normal(0, s) is folded into a Gauss-Hermite
    rule: writing ``phi'(y) psi'(y) = P(y) exp(-y^2)`` with ``P`` polynomial,

        E[phi'(Z_s) psi'(Z_s)] = (pi (2s+1))^(-1/2) sum_q w_q P(x_q / sqrt(a)),
        a = (2s+1) / (2s),

    which is exact for the rule order in use.  At ``s = 0`` the removable
    endpoint value is ``phi'(0) psi'(0)``.  The outer time integral uses
    composite Gauss-Legendre with cached nodes.
    """

    def __init__(self, basis: BasisSpec, panels_per_unit: int = 8, gl_points: int = 16):
        self.basis = basis
        self.panels_per_unit = panels_per_unit
        self.gl_points = gl_points

    def _gram(self, s: float, dmat: np.ndarray) -> np.ndarray:
        """Matrix ``E[phi_a'(Z_s) phi_b'(Z_s)]`` for derivative coeffs ``dmat``."""
        if s == 0.0:
            v = hermite_functions(np.zeros(1), self.basis.size)[0] @ dmat
            return np.outer(v, v)
        x, w, _ = _gh_rule(self.basis.quad_order)
        y = x * np.sqrt(2.0 * s / (2.0 * s + 1.0))
        p = hermite_polynomials(y, self.basis.size)
        v = p @ dmat
        g = (v * w[:, None]).T @ v
        return g / np.sqrt(np.pi * (2.0 * s + 1.0))

    def _dmat(self, phis) -> np.ndarray:
        d = derivative_op(self.basis)
        cols = []
        for phi in phis:
            if phi.basis != self.basis:
                raise ValueError("test functions must share the form's basis")
            cols.append(d @ phi.coeffs)
        return np.column_stack(cols)

    def covariance_matrix(self, t: float, phis) -> np.ndarray:
        """Matrix ``C(t; phi_a, phi_b)`` over a list of test functions."""
        if t < 0:
            raise ValueError("time must be >= 0")
        m = len(phis)
        if t == 0.0:
            return np.zeros((m, m))
        dmat = self._dmat(phis)
        panels = max(1, int(np.ceil(t * self.panels_per_unit)))
        nodes, weights = _gl_composite(float(t), panels, self.gl_points)
        out = np.zeros((m, m))
        for s, w in zip(nodes, weights):
            out += w * self._gram(float(s), dmat)
        return out

    def variance(self, t: float, phi: TestFunction) -> float:
        """The variance function ``A(t, phi) = C(t; phi, phi)``."""
        return float(self.covariance_matrix(t, [phi])[0, 0])

    def cross(self, t: float, phi: TestFunction, psi: TestFunction) -> float:
        return float(self.covariance_matrix(t, [phi, psi])[0, 1])

    def increment_covariances(
        self, grid: TimeGrid, dmat: np.ndarray, gl_points: int = 4
    ) -> np.ndarray:
        """Per-step covariance increments, shape ``(steps, m, m)``.

        Each increment is the Gauss-Legendre integral of the positive
        semidefinite Gram over one grid step, so it is positive semidefinite
        by construction.
        """
        x, w = np.polynomial.legendre.leggauss(gl_points)
        m = dmat.shape[1]
        out = np.empty((grid.steps, m, m))
        half = grid.dt / 2.0
        for j in range(grid.steps):
            mid = (j + 0.5) * grid.dt
            acc = np.zeros((m, m))
            for xi, wi in zip(x, w):
                acc += wi * self._gram(mid + half * xi, dmat)
            out[j] = acc * half
        return out


def limit_variance(
    phi: TestFunction, t: float, panels_per_unit: int = 8, gl_points: int = 16
) -> float:
    """Variance function ``A(t, phi)`` of the Gaussian limit martingale."""
    return QuadraticForm(phi.basis, panels_per_unit, gl_points).variance(t, phi)


def cross_covariance(
    phi: TestFunction,
    psi: TestFunction,
    t: float,
    panels_per_unit: int = 8,
    gl_points: int = 16,
) -> float:
    """Polarized covariance ``C(t; phi, psi) = int_0^t E[phi' psi'(Z_s)] ds``."""
    if phi.basis != psi.basis:
        raise ValueError("test functions must share a basis")
    return QuadraticForm(phi.basis, panels_per_unit, gl_points).cross(t, phi, psi)


def _sqrt_factors(increments: np.ndarray) -> np.ndarray:
    """Symmetric square roots of PSD increment matrices, with clipping.

    Eigenvalues below ``-1e-8`` abort with :class:`NumericalIntegrityError`;
    tiny negatives (round-off) are clipped to zero.
    """
    vals, vecs = np.linalg.eigh(increments)
    worst = float(vals.min())
    if worst < -1e-8:
        raise NumericalIntegrityError(
            f"increment covariance has eigenvalue {worst:.3e} < -1e-8"
        )
    vals = np.clip(vals, 0.0, None)
    root = np.sqrt(vals)
    return np.einsum("...ik,...k,...jk->...ij", vecs, root, vecs)


def _sample_limit_states(
    factors: np.ndarray, count: int, seed: int, stream_id: int, tag: str = "limit"
) -> np.ndarray:
    """Joint Gaussian coordinate paths, shape ``(count, steps+1, m)``."""
    steps, m = factors.shape[0], factors.shape[1]
    gen = stream(seed, tag, stream_id)
    z = gen.standard_normal(size=(count, steps, m))
    inc = np.einsum("cjm,jkm->cjk", z, factors)
    states = np.empty((count, steps + 1, m))
    states[:, 0, :] = 0.0
    np.cumsum(inc, axis=1, out=states[:, 1:, :])
    return states


def simulate_limit(
    phis,
    grid: TimeGrid,
    count: int,
    seed: int,
    stream_id: int = 0,
    form: QuadraticForm | None = None,
) -> list[ScalarPathEnsemble]:
    """Sample the Gaussian limit jointly over ``phis``.

    Returns one :class:`ScalarPathEnsemble` per test function; path ``i`` of
    each ensemble belongs to one joint draw.  Increments over disjoint steps
    are independent with covariance ``C(t_{j+1}) - C(t_j)``.
    """
    phis = list(phis)
    if not phis:
        raise ValueError("need at least one test function")
    if count < 1:
        raise ValueError("need at least one path")
    if form is None:
        form = QuadraticForm(phis[0].basis)
    dmat = form._dmat(phis)
    factors = _sqrt_factors(form.increment_covariances(grid, dmat))
    states = _sample_limit_states(factors, count, seed, stream_id)
    info = {"seed": seed, "stream": stream_id, "tag": "limit"}
    return [
        ScalarPathEnsemble(grid, states[:, :, a], dict(info)) for a in range(len(phis))
    ]


# ---------------------------------------------------------------------------
# convergence report
# ---------------------------------------------------------------------------


def _phi_label(phi: TestFunction) -> list:
    return [float(c) for c in phi.coeffs[: _top_mode(phi) + 1]]


def _top_mode(phi: TestFunction) -> int:
    nz = np.nonzero(phi.coeffs)[0]
    return int(nz[-1]) if nz.size else 0


def clt_report(
    n_list,
    phis,
    times,
    reps: int,
    seed: int,
    grid: TimeGrid,
    *,
    threads: int = 1,
    form: QuadraticForm | None = None,
    tightness_index: float = 1.0,
    tightness_levels=(0.5, 1.0, 2.0, 4.0),
    tightness_deltas=(0.01, 0.02, 0.05, 0.1, 0.2),
    collect_paths: bool = False,
):
    """Monte Carlo convergence experiment for the particle martingales.

    For every particle count ``n`` the experiment runs ``reps`` independent
    repetitions and reports, per ``(n, phi, t)`` cell: the mean and spread of
    the quadratic variation against its target ``A(t, phi)``, the one-sample
    KS statistic of the normalized terminal value against the standard
    normal, and per ``n``: the energy distance between the joint
    ``(phi, t)`` vector and a sample of the Gaussian limit, plus dual-path
    tightness summaries.

    Returns ``(cells, extras)`` where ``extras`` carries per-n summaries and
    optional raw paths (``collect_paths=True``).
    """
    phis = list(phis)
    times = [float(t) for t in times]
    n_list = [int(n) for n in n_list]
    if not phis or not times or not n_list:
        raise ValueError("n_list, phis and times must be nonempty")
    if reps < 2:
        raise ValueError("need at least two repetitions")
    basis = phis[0].basis
    if form is None:
        form = QuadraticForm(basis)

    t_idx = [grid.index_of(t) for t in times]
    targets = np.array([[form.variance(t, phi) for t in times] for phi in phis])

    limit_ens = simulate_limit(phis, grid, reps, seed, stream_id=0, form=form)
    limit_joint = np.column_stack(
        [limit_ens[a].values[:, j] for a in range(len(phis)) for j in t_idx]
    )

    dcoefs = [_derivative_coeffs(phi) for phi in phis]
    deltas = [float(d) for d in tightness_deltas]
    levels = [float(c) for c in tightness_levels]

    cells = []
    extras = {"per_n": {}, "paths": {}}
    for n in n_list:

        def one_rep(rep, n=n):
            particles = simulate_particles(n, grid, seed, stream_id=rep)
            mn = np.empty((len(phis), len(times)))
            qv = np.empty((len(phis), len(times)))
            for a, dcoef in enumerate(dcoefs):
                mn_steps, qv_steps = _mn_qv_steps(dcoef, particles)
                mn_path = _cumulative(mn_steps)
                qv_path = _cumulative(qv_steps)
                mn[a] = mn_path[t_idx]
                qv[a] = qv_path[t_idx]
            states = _mn_dual_states(particles, basis)
            dual = DualPath(grid, basis, states)
            sup = sup_dual_norm(dual, tightness_index)
            mods = [modulus_dual(dual, d, tightness_index) for d in deltas]
            full = states if collect_paths else None
            return mn, qv, sup, mods, full

        results = parallel_map(one_rep, reps, threads)
        mn_vals = np.array([r[0] for r in results])  # (reps, phi, t)
        qv_vals = np.array([r[1] for r in results])
        sups = np.array([r[2] for r in results])
        mod_table = np.array([r[3] for r in results])

        joint = mn_vals.reshape(reps, -1)
        energy, energy_se = diagnostics.energy_distance_with_se(joint, limit_joint)

        tightness = containment_summary(sups, mod_table, levels, deltas)
        extras["per_n"][n] = {
            "energy": energy,
            "energy_se": energy_se,
            "tightness": tightness,
        }
        if collect_paths:
            extras["paths"][n] = [r[4] for r in results]

        for a, phi in enumerate(phis):
            for b, t in enumerate(times):
                target = float(targets[a, b])
                sample = mn_vals[:, a, b]
                qv_sample = qv_vals[:, a, b]
                qv_mean = float(qv_sample.mean())
                qv_se = float(qv_sample.std(ddof=1) / np.sqrt(reps))
                mn_var = float(sample.var(ddof=1))
                m4 = float(np.mean((sample - sample.mean()) ** 4))
                var_se = float(np.sqrt(max(m4 - mn_var**2, 0.0) / reps))
                cell = {
                    "n": n,
                    "phi": _phi_label(phi),
                    "t": t,
                    "qv_mean": qv_mean,
                    "qv_se": qv_se,
                    "qv_var": float(qv_sample.var(ddof=1)),
                    "qv_target": target,
                    "mn_mean": float(sample.mean()),
                    "mn_se": float(sample.std(ddof=1) / np.sqrt(reps)),
                    "mn_var": mn_var,
                    "mn_var_se": var_se,
                    "energy": energy,
                    "energy_se": energy_se,
                }
                if target <= 0.0:
                    cell.update(
                        {"degenerate": True, "ks": 0.0, "ks_critical": 0.0}
                    )
                else:
                    ks = diagnostics.ks_one_sample(sample / np.sqrt(target), ndtr)
                    cell.update(
                        {
                            "degenerate": False,
                            "ks": ks.statistic,
                            "ks_critical": ks.critical_1,
                            "ks_critical_5": ks.critical_5,
                        }
                    )
                cells.append(cell)
    return cells, extras
