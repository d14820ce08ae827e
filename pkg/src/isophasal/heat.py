"""Quadrature engine for the second heat-trace coefficient and its scale sweep.

The integral computed is

    a2(g) = (4 pi)^(-n/2) / 360 * integral of (5 tau^2 - 2 |Ric|^2 + 2 |Riem|^2)

over R^(m+2k) with Lebesgue measure (the metric family is unimodular, so the
Riemannian volume is Lebesgue).  T-invariance lets the angular coordinates be
integrated out exactly: nodes live in the (x, r) box with weight
(2 pi)^k * prod_p r_p, and a preflight check certifies the invariance before
trusting that reduction.  Low-discrepancy sampling with per-replicate
scrambling gives both fast convergence and an honest replicate-spread error
estimate.  Node evaluation is embarrassingly parallel; the reduction is a
fixed-order pairwise sum over node index, so results are bit-identical for
any worker count.

The scale sweep fits a2(g^s) against sum_d c_d s^(d - 2k) over the degree
window d in {2, 1, 0, -1, -2}; the leading coefficient (exponent 2 - 2k)
must come out positive for this metric family with k <= 3.
"""

from __future__ import annotations

import dataclasses
import math
import os
import time
import warnings
from multiprocessing import get_context
from typing import Sequence

import numpy as np
from scipy.stats import qmc

from .brackets import Bracket, check_isospectral
from .metric import CutoffProfile, polar_to_cartesian
from . import coord
from . import frame

__all__ = [
    "QuadratureSpec",
    "QuadratureResult",
    "SweepResult",
    "ConsistencyReport",
    "ThetaDependenceError",
    "DegenerateNodesError",
    "FitIllConditionedError",
    "resolve_workers",
    "preflight_theta_invariance",
    "integrate_a2",
    "sweep_s",
    "sweep_exponents",
    "fit_sweep",
    "isophasal_consistency",
]

SWEEP_DEGREES = (2, 1, 0, -1, -2)


class ThetaDependenceError(AssertionError):
    """Preflight found angular dependence; the theta reduction would be invalid."""


class DegenerateNodesError(ValueError):
    """No usable quadrature nodes (empty support or all nodes degenerate)."""


class FitIllConditionedError(ValueError):
    """The scale-sweep design matrix is numerically rank deficient."""


@dataclasses.dataclass(frozen=True)
class QuadratureSpec:
    """How to integrate: method in {'qmc', 'mc', 'tensor_gauss'}, nodes, replicates, seed."""

    n_nodes: int = 100_000
    n_replicates: int = 8
    seed: int = 0
    method: str = "qmc"
    chunk: int = 4096       # nodes handed to one worker task (fixed: determinism)
    engine_chunk: int = 128  # points per curvature-engine batch
    workers: int | None = None  # None -> ISOPHASAL_THREADS or cpu count
    preflight: bool = True
    preflight_base: int = 8
    preflight_rotations: int = 32
    preflight_tol: float = 1e-8

    def __post_init__(self):
        if self.method not in ("qmc", "mc", "tensor_gauss"):
            raise ValueError(f"unknown quadrature method {self.method!r}")
        if self.n_nodes < 1:
            raise ValueError("n_nodes must be positive")
        if self.n_replicates < 2 and self.method != "tensor_gauss":
            raise ValueError("need n_replicates >= 2 for an error estimate")


@dataclasses.dataclass(frozen=True)
class QuadratureResult:
    value: float
    std_error: float
    n_nodes: int
    n_replicates: int
    seed: int
    method: str
    inside_fraction: float
    wall_time: float
    replicate_values: tuple[float, ...]


def resolve_workers(requested: int | None) -> int:
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get("ISOPHASAL_THREADS")
    if env:
        return max(1, int(env))
    return max(1, os.cpu_count() or 1)


def _sample_box(spec: QuadratureSpec, replicate: int, dim: int) -> np.ndarray:
    """Unit-box nodes for one replicate; scrambled low-discrepancy or plain MC."""
    rng = np.random.default_rng([spec.seed, replicate])
    if spec.method == "qmc":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")  # balance warnings for non power-of-two draws
            sob = qmc.Sobol(d=dim, scramble=True, seed=rng)
            return sob.random(spec.n_nodes)
    return rng.uniform(size=(spec.n_nodes, dim))


def _eval_contributions(
    bracket: Bracket,
    profile: CutoffProfile,
    x: np.ndarray,
    r: np.ndarray,
    engine_chunk: int,
) -> np.ndarray:
    """Per-node weighted integrand; exact zeros off the cutoff support."""
    k = bracket.k
    n = bracket.m + 2 * k
    t1 = np.sum(x * x, axis=1)
    t2 = np.sum(r * r, axis=1)
    r_min = frame.R_MIN_FACTOR * profile.u_radius
    keep = profile.inside_support(t1, t2) & np.all(r > r_min, axis=1)
    out = np.zeros(x.shape[0])
    if np.any(keep):
        tau, ric2, riem2 = frame.curvature_scalars(
            bracket, profile, x[keep], r[keep], chunk=engine_chunk
        )
        dens = frame.a2_constant(n) * (5.0 * tau * tau - 2.0 * ric2 + 2.0 * riem2)
        out[keep] = dens * (2.0 * math.pi) ** k * np.prod(r[keep], axis=1)
    return out


def _eval_task(args) -> tuple[int, np.ndarray]:
    idx, tensor, profile, x, r, engine_chunk = args
    return idx, _eval_contributions(Bracket(tensor), profile, x, r, engine_chunk)


def _contributions_parallel(
    bracket: Bracket,
    profile: CutoffProfile,
    x: np.ndarray,
    r: np.ndarray,
    spec: QuadratureSpec,
    workers: int,
) -> np.ndarray:
    n = x.shape[0]
    if workers <= 1 or n <= spec.chunk:
        return _eval_contributions(bracket, profile, x, r, spec.engine_chunk)
    tasks = [
        (ci, np.asarray(bracket.tensor), profile, x[lo : lo + spec.chunk], r[lo : lo + spec.chunk], spec.engine_chunk)
        for ci, lo in enumerate(range(0, n, spec.chunk))
    ]
    out = np.empty(n)
    with get_context("fork").Pool(processes=workers) as pool:
        for ci, vals in pool.imap_unordered(_eval_task, tasks):
            lo = ci * spec.chunk
            out[lo : lo + vals.shape[0]] = vals
    return out


def preflight_theta_invariance(
    bracket: Bracket,
    profile: CutoffProfile,
    n_base: int = 8,
    n_rotations: int = 32,
    tol: float = 1e-8,
    seed: int = 2024,
) -> float:
    """Verify the integrand is invariant under torus rotations of the base points.

    Evaluates the coordinate-oracle integrand (fully independent of the frame
    engine and of the theta reduction) at random rotations of interior base
    points and returns the worst relative spread.  Raises
    ThetaDependenceError beyond tol: the angular reduction would then be
    unsound and the quadrature must not proceed.
    """
    rng = np.random.default_rng(seed)
    fn = coord.make_metric_fn(bracket, profile)
    scheme = coord.default_scheme(profile)
    rx = 0.7 * profile.x_radius
    ru = profile.u_radius
    worst = 0.0
    for _ in range(n_base):
        xb = rng.uniform(-rx / math.sqrt(bracket.m), rx / math.sqrt(bracket.m), size=bracket.m)
        rb = rng.uniform(0.25 * ru, 0.55 * ru, size=bracket.k)
        th = rng.uniform(0.0, 2.0 * math.pi, size=(n_rotations, bracket.k))
        pts = np.concatenate(
            [np.tile(xb, (n_rotations, 1)), polar_to_cartesian(np.tile(rb, (n_rotations, 1)), th)],
            axis=1,
        )
        vals = coord.scalar_invariants_fd(fn, pts, scheme).a2_integrand
        scale = float(np.max(np.abs(vals)))
        if scale == 0.0:
            continue
        worst = max(worst, float(vals.max() - vals.min()) / scale)
    if worst > tol:
        raise ThetaDependenceError(
            f"integrand varies by {worst:g} (rel) over torus rotations, tol {tol:g}"
        )
    return worst


def _tensor_gauss_nodes(n_target: int, m: int, k: int, rx: float, rr: float):
    dim = m + k
    q = max(2, int(round(n_target ** (1.0 / dim))))
    nodes_1d, w_1d = np.polynomial.legendre.leggauss(q)
    grids = np.meshgrid(*([nodes_1d] * dim), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    wts = np.array([1.0])
    for _ in range(dim):
        wts = np.multiply.outer(wts, w_1d).ravel()
    x = pts[:, :m] * rx                       # [-1,1] -> [-rx, rx]
    r = (pts[:, m:] + 1.0) * 0.5 * rr         # [-1,1] -> [0, rr]
    wts *= rx**m * (0.5 * rr) ** k            # Jacobians of both maps
    return x, r, wts


def integrate_a2(bracket: Bracket, profile: CutoffProfile, spec: QuadratureSpec) -> QuadratureResult:
    """a2(g) over the support box with the angular factor integrated out exactly."""
    t_start = time.time()
    m, k = bracket.m, bracket.k
    rx = profile.x_radius
    rr = profile.u_radius
    if spec.preflight:
        preflight_theta_invariance(
            bracket, profile, spec.preflight_base, spec.preflight_rotations, spec.preflight_tol
        )
    workers = resolve_workers(spec.workers)

    r_min = frame.R_MIN_FACTOR * rr

    def inside_frac(x: np.ndarray, r: np.ndarray) -> float:
        t1 = np.sum(x * x, axis=1)
        t2 = np.sum(r * r, axis=1)
        keep = profile.inside_support(t1, t2) & np.all(r > r_min, axis=1)
        return float(np.mean(keep))

    if spec.method == "tensor_gauss":
        x, r, wts = _tensor_gauss_nodes(spec.n_nodes, m, k, rx, rr)
        contrib = _contributions_parallel(bracket, profile, x, r, spec, workers)
        inside = inside_frac(x, r)
        if inside == 0.0:
            raise DegenerateNodesError("no tensor-product nodes hit the integrand support")
        value = float(np.sum(wts * contrib))
        return QuadratureResult(
            value=value, std_error=0.0, n_nodes=x.shape[0], n_replicates=1,
            seed=spec.seed, method=spec.method, inside_fraction=inside,
            wall_time=time.time() - t_start, replicate_values=(value,),
        )

    vol_box = (2.0 * rx) ** m * rr**k
    rep_values = []
    inside_fracs = []
    for rep in range(spec.n_replicates):
        box = _sample_box(spec, rep, m + k)
        x = (2.0 * box[:, :m] - 1.0) * rx
        r = box[:, m:] * rr
        contrib = _contributions_parallel(bracket, profile, x, r, spec, workers)
        inside_fracs.append(inside_frac(x, r))
        rep_values.append(vol_box * float(np.sum(contrib)) / spec.n_nodes)
    if max(inside_fracs) == 0.0:
        raise DegenerateNodesError("no quadrature nodes hit the integrand support")
    rep_values = np.asarray(rep_values)
    value = float(np.mean(rep_values))
    std_error = float(np.std(rep_values, ddof=1) / math.sqrt(spec.n_replicates))
    return QuadratureResult(
        value=value,
        std_error=std_error,
        n_nodes=spec.n_nodes,
        n_replicates=spec.n_replicates,
        seed=spec.seed,
        method=spec.method,
        inside_fraction=float(np.mean(inside_fracs)),
        wall_time=time.time() - t_start,
        replicate_values=tuple(float(v) for v in rep_values),
    )


def sweep_exponents(k: int, degrees: Sequence[int] = SWEEP_DEGREES) -> tuple[int, ...]:
    """Exponents d - 2k of the scale expansion; the first entry is the leading one."""
    return tuple(d - 2 * k for d in degrees)


@dataclasses.dataclass(frozen=True)
class SweepResult:
    s_values: tuple[float, ...]
    a2_values: tuple[float, ...]
    std_errors: tuple[float, ...]
    exponents: tuple[int, ...]
    coefficients: tuple[float, ...]
    coeff_sigmas: tuple[float, ...]
    rel_residual: float
    leading_coefficient: float
    leading_sigma: float

    @property
    def leading_positive(self) -> bool:
        return self.leading_coefficient > 0.0


def fit_sweep(
    s_values: Sequence[float],
    a2_values: Sequence[float],
    std_errors: Sequence[float],
    k: int,
    degrees: Sequence[int] = SWEEP_DEGREES,
) -> SweepResult:
    """Weighted least squares of a2(s) on the exponent ladder s^(d-2k).

    Columns are normalized before solving; the coefficient covariance
    (X^T W X)^{-1} supplies the uncertainty of the leading coefficient even
    when the system is exactly determined.
    """
    s = np.asarray(s_values, dtype=float)
    y = np.asarray(a2_values, dtype=float)
    sig = np.asarray(std_errors, dtype=float)
    if len(s) < len(degrees):
        raise ValueError(f"need at least {len(degrees)} scale values, got {len(s)}")
    sig = np.where(sig > 0, sig, max(1e-12 * np.max(np.abs(y)), 1e-300))
    expo = sweep_exponents(k, degrees)
    X = np.stack([s**e for e in expo], axis=1)
    col_scale = np.linalg.norm(X, axis=0)
    Xs = X / col_scale
    W = 1.0 / sig
    A = Xs * W[:, None]
    bvec = y * W
    cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond > 1e12:
        raise FitIllConditionedError(f"sweep design matrix condition {cond:g}")
    coef_s, *_ = np.linalg.lstsq(A, bvec, rcond=None)
    cov_s = np.linalg.inv(A.T @ A)
    coef = coef_s / col_scale
    sigmas = np.sqrt(np.diag(cov_s)) / col_scale
    resid = y - X @ coef
    rel_residual = float(np.linalg.norm(resid) / max(np.linalg.norm(y), 1e-300))
    return SweepResult(
        s_values=tuple(float(v) for v in s),
        a2_values=tuple(float(v) for v in y),
        std_errors=tuple(float(v) for v in sig),
        exponents=expo,
        coefficients=tuple(float(v) for v in coef),
        coeff_sigmas=tuple(float(v) for v in sigmas),
        rel_residual=rel_residual,
        leading_coefficient=float(coef[0]),
        leading_sigma=float(sigmas[0]),
    )


def sweep_s(
    bracket: Bracket,
    profile: CutoffProfile,
    s_list: Sequence[float],
    spec: QuadratureSpec,
) -> SweepResult:
    """a2(g^s) over the scale list plus the fitted exponent expansion.

    The r-box tracks the shrinking support (radius sqrt(r2sq)/s), so the
    effective node density in the support is scale independent.  The theta
    preflight runs once on the base profile; the scale only reparametrizes
    the cutoff's second slot and cannot break torus invariance.
    """
    s_arr = [float(s) for s in s_list]
    if len(set(s_arr)) < 5:
        raise ValueError("need at least 5 distinct scale values")
    if max(s_arr) / min(s_arr) < 4.0:
        raise ValueError("scale values should span at least a factor of 4")
    if spec.preflight:
        preflight_theta_invariance(
            bracket, profile, spec.preflight_base, spec.preflight_rotations, spec.preflight_tol
        )
    inner = dataclasses.replace(spec, preflight=False)
    vals, errs = [], []
    for s in s_arr:
        res = integrate_a2(bracket, profile.scaled(s), inner)
        vals.append(res.value)
        errs.append(res.std_error)
    return fit_sweep(s_arr, vals, errs, bracket.k)


@dataclasses.dataclass(frozen=True)
class ConsistencyReport:
    a2_first: QuadratureResult
    a2_second: QuadratureResult
    difference: float
    combined_error: float
    within: float  # |difference| / combined_error
    consistent: bool


def isophasal_consistency(
    b1: Bracket,
    b2: Bracket,
    profile: CutoffProfile,
    spec: QuadratureSpec,
    n_sigma: float = 3.0,
) -> ConsistencyReport:
    """Equal-heat-invariant check for an isospectral bracket pair under one profile."""
    rep = check_isospectral(b1, b2)
    if not rep.isospectral:
        raise ValueError(f"brackets are not isospectral (max spectral deviation {rep.max_deviation:g})")
    r1 = integrate_a2(b1, profile, spec)
    inner = dataclasses.replace(spec, preflight=False)
    r2 = integrate_a2(b2, profile, inner)
    diff = r1.value - r2.value
    comb = math.hypot(r1.std_error, r2.std_error)
    within = abs(diff) / comb if comb > 0 else math.inf if diff else 0.0
    return ConsistencyReport(
        a2_first=r1, a2_second=r2, difference=diff, combined_error=comb,
        within=within, consistent=abs(diff) <= n_sigma * comb,
    )
