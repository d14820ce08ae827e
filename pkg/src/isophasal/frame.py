"""Analytic curvature engine in the adapted orthonormal frame.

On the dense open set where every plane radius r_p is positive, polar
coordinates (x, r, theta) and the orthonormal frame

    xhat_i = e_i + sum_q a_iq(x, r) d/dtheta_q,   rhat_p = d/dr_p,
    that_q = (1/r_q) d/dtheta_q,

with coupling coefficients a_iq = phi_s(|x|^2, |r|^2) <[x, e_i], Z_q>, turn the
metric into constant coefficients; all curvature information sits in the frame
structure constants.  The nonzero brackets are

    [xhat_i, xhat_j] = sum_q (d_i a_jq - d_j a_iq) r_q that_q
    [rhat_p, xhat_i] = sum_q (d_{r_p} a_iq) r_q that_q
    [rhat_q, that_q] = -(1/r_q) that_q,

the last being the flat polar-frame term; it is kept so that the zero-bracket
metric comes out exactly flat.  Christoffel symbols follow from the Koszul
formula, their frame derivatives are assembled from the stored second partials
of a (no finite differences anywhere in this module), and the curvature tensor
from the standard frame formula.  Everything is batched over points, chunked
to bound memory, and sits inside the quadrature inner loop of the heat
invariant pipeline.

Index layout: 0..m-1 xhat, m..m+k-1 rhat, m+k..m+2k-1 that.  Tensors are
stored as c[n, gamma, alpha, beta] (gamma-component of [E_alpha, E_beta]),
Gamma[n, gamma, alpha, beta] (gamma-component of the covariant derivative of
E_alpha along E_beta), and Riem[n, alpha, beta, gamma, delta].
"""

from __future__ import annotations

import dataclasses
import math
from typing import Callable, Sequence

import numpy as np

from .brackets import Bracket
from .metric import CutoffProfile

__all__ = [
    "R_MIN_FACTOR",
    "DegeneratePointError",
    "AllZeroSamplesError",
    "FrameIndexSets",
    "CouplingCoeffs",
    "FrameCurvature",
    "coupling_coeffs",
    "structure_constants",
    "christoffels",
    "christoffel_derivs",
    "curvature",
    "curvature_scalars",
    "a2_constant",
    "a2_integrand",
    "frame_bundle",
    "frame_derivative",
    "degree_probe",
    "homogeneous_parts",
    "degree_one_reference",
]

R_MIN_FACTOR = 1e-6  # radii below R_MIN_FACTOR * (r-support radius) are degenerate


class DegeneratePointError(ValueError):
    """A plane radius is too close to zero for the polar frame."""


class AllZeroSamplesError(ValueError):
    """Degree probe got only (numerically) zero samples."""


@dataclasses.dataclass(frozen=True)
class FrameIndexSets:
    m: int
    k: int

    @property
    def n(self) -> int:
        return self.m + 2 * self.k

    @property
    def I1(self) -> range:
        return range(0, self.m)

    @property
    def I2(self) -> range:
        return range(self.m, self.m + self.k)

    @property
    def I3(self) -> range:
        return range(self.m + self.k, self.m + 2 * self.k)


@dataclasses.dataclass(frozen=True)
class CouplingCoeffs:
    """a_ip and its partials at a batch of (x, r) points.

    Shapes: a (N,m,k); ax (N,m,k,m) is da/dx_j; ar (N,m,k,k) is da/dr_q;
    axx, axr, arr are the second partials with derivative axes last.
    """

    a: np.ndarray
    ax: np.ndarray
    ar: np.ndarray
    axx: np.ndarray
    axr: np.ndarray
    arr: np.ndarray


def _check_radii(profile: CutoffProfile, r: np.ndarray) -> None:
    r_min = R_MIN_FACTOR * profile.u_radius
    if np.any(r <= r_min):
        bad = float(np.min(r))
        raise DegeneratePointError(
            f"plane radius {bad:g} <= r_min {r_min:g}: polar frame degenerates; "
            "use the coordinate oracle near the axes"
        )


def coupling_coeffs(bracket: Bracket, profile: CutoffProfile, x: np.ndarray, r: np.ndarray) -> CouplingCoeffs:
    """All partials of a_ip(x, r) = phi_s(|x|^2, |r|^2) <[x, e_i], Z_p>, chain rule only."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    r = np.atleast_2d(np.asarray(r, dtype=float))
    m, k = bracket.m, bracket.k
    t1 = np.sum(x * x, axis=1)
    t2 = np.sum(r * r, axis=1)
    pd = profile.value_and_derivs(t1, t2)
    # L[n,i,p] = <[x, e_i], Z_p>; dL[i,p,j] = dL_ip/dx_j = Lambda[p,j,i] is constant
    L = np.einsum("nj,pji->nip", x, bracket.tensor)
    dL = np.einsum("pji->ipj", bracket.tensor)

    v, p1, p2 = pd.value, pd.d1, pd.d2
    p11, p12, p22 = pd.d11, pd.d12, pd.d22

    a = v[:, None, None] * L
    ax = 2.0 * np.einsum("n,nj,nip->nipj", p1, x, L) + v[:, None, None, None] * dL[None]
    ar = 2.0 * np.einsum("n,nq,nip->nipq", p2, r, L)

    eye_m = np.eye(m)
    eye_k = np.eye(k)
    axx = (
        2.0 * np.einsum("n,jl,nip->nipjl", p1, eye_m, L)
        + 4.0 * np.einsum("n,nj,nl,nip->nipjl", p11, x, x, L)
        + 2.0 * np.einsum("n,nj,ipl->nipjl", p1, x, dL)
        + 2.0 * np.einsum("n,nl,ipj->nipjl", p1, x, dL)
    )
    axr = 4.0 * np.einsum("n,nj,nq,nip->nipjq", p12, x, r, L) + 2.0 * np.einsum(
        "n,nq,ipj->nipjq", p2, r, dL
    )
    arr = 2.0 * np.einsum("n,qw,nip->nipqw", p2, eye_k, L) + 4.0 * np.einsum(
        "n,nq,nw,nip->nipqw", p22, r, r, L
    )
    return CouplingCoeffs(a=a, ax=ax, ar=ar, axx=axx, axr=axr, arr=arr)


def structure_constants(
    cc: CouplingCoeffs, r: np.ndarray, with_derivs: bool = True
) -> tuple[np.ndarray, np.ndarray | None]:
    """Structure constants c[n,gamma,alpha,beta] and their (x, r)-derivatives.

    dc has shape (N, n, n, n, m+k) with the derivative direction last
    (0..m-1 -> d/dx, m..m+k-1 -> d/dr); theta-derivatives vanish identically.
    """
    r = np.atleast_2d(np.asarray(r, dtype=float))
    npts, k = r.shape
    m = cc.a.shape[1]
    n = m + 2 * k
    mk = m + k

    c = np.zeros((npts, n, n, n))
    # [xhat_i, xhat_j] -> that_q components
    axT = np.einsum("njqi->nqij", cc.ax)  # axT[n,q,i,j] = d a_jq / d x_i
    bxx = (axT - axT.transpose(0, 1, 3, 2)) * r[:, :, None, None]
    c[:, mk:, :m, :m] = bxx
    # [rhat_p, xhat_i] -> that_q components
    brx = np.einsum("niqp->nqpi", cc.ar) * r[:, :, None, None]
    c[:, mk:, m:mk, :m] = brx
    c[:, mk:, :m, m:mk] = -brx.transpose(0, 1, 3, 2)
    # flat polar: [rhat_q, that_q] = -(1/r_q) that_q
    inv_r = 1.0 / r
    for q in range(k):
        c[:, mk + q, m + q, mk + q] = -inv_r[:, q]
        c[:, mk + q, mk + q, m + q] = inv_r[:, q]

    if not with_derivs:
        return c, None

    dc = np.zeros((npts, n, n, n, mk))
    # d/dx_l and d/dr_w of the xhat-xhat block
    axxT = np.einsum("njqil->nqijl", cc.axx)  # d2 a_jq / dx_i dx_l
    dc[:, mk:, :m, :m, :m] = (axxT - axxT.transpose(0, 1, 3, 2, 4)) * r[:, :, None, None, None]
    axrT = np.einsum("njqiw->nqijw", cc.axr)  # d2 a_jq / dx_i dr_w
    dbxx_r = (axrT - axrT.transpose(0, 1, 3, 2, 4)) * r[:, :, None, None, None]
    base = axT - axT.transpose(0, 1, 3, 2)  # (d_i a_jq - d_j a_iq)
    for q in range(k):
        dbxx_r[:, q, :, :, q] += base[:, q]
    dc[:, mk:, :m, :m, m:] = dbxx_r
    # d/dx_l and d/dr_w of the rhat-xhat block
    brx_x = np.einsum("niqlp->nqpil", cc.axr) * r[:, :, None, None, None]
    dc[:, mk:, m:mk, :m, :m] = brx_x
    dc[:, mk:, :m, m:mk, :m] = -brx_x.transpose(0, 1, 3, 2, 4)
    brx_r = np.einsum("niqpw->nqpiw", cc.arr) * r[:, :, None, None, None]
    arT = np.einsum("niqp->nqpi", cc.ar)
    for q in range(k):
        brx_r[:, q, :, :, q] += arT[:, q]
    dc[:, mk:, m:mk, :m, m:] = brx_r
    dc[:, mk:, :m, m:mk, m:] = -brx_r.transpose(0, 1, 3, 2, 4)
    # flat polar derivatives: d/dr_q of -(1/r_q)
    inv_r2 = inv_r * inv_r
    for q in range(k):
        dc[:, mk + q, m + q, mk + q, m + q] = inv_r2[:, q]
        dc[:, mk + q, mk + q, m + q, m + q] = -inv_r2[:, q]
    return c, dc


def christoffels(c: np.ndarray) -> np.ndarray:
    """Koszul formula in an orthonormal frame: Gamma[g,a,b] = (c[g,b,a] + c[b,g,a] + c[a,g,b]) / 2."""
    out = np.ascontiguousarray(c.transpose(0, 1, 3, 2))  # c[g, b, a]
    out += c.transpose(0, 2, 1, 3)  # c[b, g, a] read as [g, a, b]
    out += c.transpose(0, 2, 3, 1)  # c[a, g, b] read as [g, a, b]
    out *= 0.5
    return out


def christoffel_derivs(dc: np.ndarray) -> np.ndarray:
    """Frame derivatives of Gamma, same index shuffle with the derivative axis carried along."""
    out = np.ascontiguousarray(dc.transpose(0, 1, 3, 2, 4))
    out += dc.transpose(0, 2, 1, 3, 4)
    out += dc.transpose(0, 2, 3, 1, 4)
    out *= 0.5
    return out


def curvature(
    Gamma: np.ndarray, dGamma: np.ndarray, c: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Riemann, Ricci and scalar curvature from frame data at a batch of points.

    Riem[a,b,g,d] = sum_mu (Gamma[a,mu,g] Gamma[mu,b,d] - Gamma[a,mu,d] Gamma[mu,b,g]
                            - c[mu,g,d] Gamma[a,b,mu])
                    + E_g(Gamma[a,b,d]) - E_d(Gamma[a,b,g])
    with Ric[a,b] = sum_g Riem[a,g,b,g] and tau the trace of Ric.

    The quadratic terms run as batched matmuls, which is what keeps the engine
    usable inside a 1e5-node quadrature loop.
    """
    npts, n = Gamma.shape[0], Gamma.shape[1]
    mk = dGamma.shape[-1]
    # T1[a,c,b,d] = sum_mu Gamma[a,mu,c] Gamma[mu,b,d] as (n^2 x n) @ (n x n^2)
    left = np.ascontiguousarray(Gamma.transpose(0, 1, 3, 2)).reshape(npts, n * n, n)
    right = Gamma.reshape(npts, n, n * n)
    T1 = np.matmul(left, right).reshape(npts, n, n, n, n)  # [a, c, b, d]
    T1 = T1.transpose(0, 1, 3, 2, 4)  # [a, b, c, d] (view)
    Riem = np.ascontiguousarray(T1)
    Riem -= T1.transpose(0, 1, 2, 4, 3)
    del T1, left, right
    # T3[a,b,c,d] = sum_mu Gamma[a,b,mu] c[mu,c,d]
    T3 = np.matmul(Gamma.reshape(npts, n * n, n), c.reshape(npts, n, n * n))
    Riem -= T3.reshape(npts, n, n, n, n)
    del T3
    # + E_g(Gamma[a,b,d]): nonzero only for g < m+k; - E_d(Gamma[a,b,g]): d < m+k
    Riem[:, :, :, :mk, :] += dGamma.transpose(0, 1, 2, 4, 3)
    Riem[:, :, :, :, :mk] -= dGamma
    Ric = np.einsum("nagbg->nab", Riem)
    tau = np.einsum("ngg->n", Ric)
    return Riem, Ric, tau


@dataclasses.dataclass(frozen=True)
class FrameCurvature:
    """Per-point bundle of frame tensors (batched along the leading axis)."""

    c: np.ndarray
    Gamma: np.ndarray
    dGamma: np.ndarray
    Riem: np.ndarray
    Ric: np.ndarray
    tau: np.ndarray
    ric_sq: np.ndarray
    riem_sq: np.ndarray
    a2_integrand: np.ndarray


def a2_constant(n: int) -> float:
    """(4 pi)^(-n/2) / 360, the prefactor of the quadratic curvature integral."""
    return (4.0 * math.pi) ** (-n / 2.0) / 360.0


def curvature_scalars(
    bracket: Bracket,
    profile: CutoffProfile,
    x: np.ndarray,
    r: np.ndarray,
    chunk: int = 256,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(tau, |Ric|^2, |Riem|^2) at each point, chunked to bound memory."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    r = np.atleast_2d(np.asarray(r, dtype=float))
    _check_radii(profile, r)
    npts = x.shape[0]
    tau = np.empty(npts)
    ric2 = np.empty(npts)
    riem2 = np.empty(npts)
    for lo in range(0, npts, chunk):
        hi = min(lo + chunk, npts)
        cc = coupling_coeffs(bracket, profile, x[lo:hi], r[lo:hi])
        c, dc = structure_constants(cc, r[lo:hi])
        Gamma = christoffels(c)
        dGamma = christoffel_derivs(dc)
        Riem, Ric, t = curvature(Gamma, dGamma, c)
        tau[lo:hi] = t
        ric2[lo:hi] = np.einsum("nab,nab->n", Ric, Ric)
        riem2[lo:hi] = np.einsum("nabcd,nabcd->n", Riem, Riem)
    return tau, ric2, riem2


def a2_integrand(
    bracket: Bracket,
    profile: CutoffProfile,
    x: np.ndarray,
    r: np.ndarray,
    chunk: int = 256,
) -> np.ndarray:
    """(4 pi)^(-n/2)/360 * (5 tau^2 - 2 |Ric|^2 + 2 |Riem|^2) pointwise.

    Points outside the cutoff support contribute an exact zero and skip the
    engine entirely; the curvature is supported where phi is.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    r = np.atleast_2d(np.asarray(r, dtype=float))
    _check_radii(profile, r)
    t1 = np.sum(x * x, axis=1)
    t2 = np.sum(r * r, axis=1)
    inside = profile.inside_support(t1, t2)
    out = np.zeros(x.shape[0])
    if np.any(inside):
        tau, ric2, riem2 = curvature_scalars(bracket, profile, x[inside], r[inside], chunk=chunk)
        n = bracket.m + 2 * bracket.k
        out[inside] = a2_constant(n) * (5.0 * tau * tau - 2.0 * ric2 + 2.0 * riem2)
    return out


def frame_bundle(bracket: Bracket, profile: CutoffProfile, x: np.ndarray, r: np.ndarray) -> FrameCurvature:
    """Full tensor bundle at a (small) batch of points, for inspection and tests."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    r = np.atleast_2d(np.asarray(r, dtype=float))
    _check_radii(profile, r)
    cc = coupling_coeffs(bracket, profile, x, r)
    c, dc = structure_constants(cc, r)
    Gamma = christoffels(c)
    dGamma = christoffel_derivs(dc)
    Riem, Ric, tau = curvature(Gamma, dGamma, c)
    ric2 = np.einsum("nab,nab->n", Ric, Ric)
    riem2 = np.einsum("nabcd,nabcd->n", Riem, Riem)
    n = bracket.m + 2 * bracket.k
    integ = a2_constant(n) * (5.0 * tau * tau - 2.0 * ric2 + 2.0 * riem2)
    return FrameCurvature(
        c=c, Gamma=Gamma, dGamma=dGamma, Riem=Riem, Ric=Ric,
        tau=tau, ric_sq=ric2, riem_sq=riem2, a2_integrand=integ,
    )


def frame_derivative(
    evaluator: Callable[[np.ndarray, np.ndarray], float],
    delta: int,
    x: np.ndarray,
    r: np.ndarray,
    m: int,
    k: int,
    h: float = 1e-5,
):
    """E_delta applied to a theta-independent scalar quantity of (x, r).

    For delta in the xhat range this is d/dx_delta (the angular part of xhat
    contributes nothing to theta-independent quantities), for the rhat range
    d/dr, and for the that range identically zero.  Central differences of
    order four; the engine's own Gamma derivatives are analytic and this
    helper exists to cross-check them and to probe ad-hoc quantities.
    """
    x = np.asarray(x, dtype=float)
    r = np.asarray(r, dtype=float)
    if delta >= m + k:
        return 0.0
    def shifted(t: float):
        if delta < m:
            xs = x.copy()
            xs[delta] += t
            return evaluator(xs, r)
        rs = r.copy()
        rs[delta - m] += t
        return evaluator(x, rs)
    f2p, f1p, f1m, f2m = shifted(2 * h), shifted(h), shifted(-h), shifted(-2 * h)
    return (-f2p + 8.0 * f1p - 8.0 * f1m + f2m) / (12.0 * h)


def degree_probe(
    family: Callable[[float, np.ndarray, np.ndarray], float],
    x: np.ndarray,
    r: np.ndarray,
    s_list: Sequence[float],
    tiny: float = 1e-300,
) -> tuple[float, float]:
    """Estimate d with f^s(x, r) = s^d f^1(x, s r) by a log-log least-squares fit.

    family(s, x, r) evaluates the s-member of the scaling family at the point.
    Returns (slope, fit residual).  Raises AllZeroSamplesError when the
    reference values vanish.
    """
    x = np.asarray(x, dtype=float)
    r = np.asarray(r, dtype=float)
    logs, vals = [], []
    for s in s_list:
        fs = family(float(s), x, r)
        f1 = family(1.0, x, s * r)
        if abs(f1) < tiny or abs(fs) < tiny:
            continue
        logs.append(math.log(float(s)))
        vals.append(math.log(abs(fs)) - math.log(abs(f1)))
    if len(vals) < 2:
        raise AllZeroSamplesError("family vanished at the probe point for the sampled scales")
    A = np.column_stack([np.asarray(logs), np.ones(len(logs))])
    coef, res, *_ = np.linalg.lstsq(A, np.asarray(vals), rcond=None)
    resid = float(np.sqrt(res[0])) if res.size else 0.0
    return float(coef[0]), resid


def homogeneous_parts(
    family: Callable[[float, np.ndarray, np.ndarray], float],
    x: np.ndarray,
    r: np.ndarray,
    degrees: Sequence[int] = (-2, -1, 0, 1, 2),
    s_list: Sequence[float] | None = None,
) -> dict[int, float]:
    """Split a finite scaling family into homogeneous parts evaluated at (x, r).

    If f^s = sum_d f_d^s with f_d^s(x, r) = s^d f_d^1(x, s r), then
    F(s) := f^s(x, r/s) = sum_d s^d f_d^1(x, r): a polynomial in s whose
    coefficients are exactly the homogeneous parts at scale one.  Solved by
    least squares on a small Vandermonde system.
    """
    x = np.asarray(x, dtype=float)
    r = np.asarray(r, dtype=float)
    if s_list is None:
        s_list = [1.0 + 0.25 * j for j in range(2 * len(degrees))]
    svals = np.asarray(s_list, dtype=float)
    F = np.array([family(float(s), x, r / s) for s in svals])
    V = np.stack([svals**d for d in degrees], axis=1)
    coef, *_ = np.linalg.lstsq(V, F, rcond=None)
    return {d: float(c) for d, c in zip(degrees, coef)}


def degree_one_reference(
    bracket: Bracket, profile: CutoffProfile, i: int, x: np.ndarray, r: np.ndarray
) -> float:
    """Closed form of the degree-one part of Riem[that_1, rhat_2, xhat_i, rhat_2].

    Equals (1/2) d^2 a_{i1} / dr_2^2 * r_1
         = (phi_2 + 2 r_2^2 phi_22)(|x|^2, |r|^2) <[x, e_i], Z_1> r_1,
    with phi_2, phi_22 the partials of the cutoff in its second slot.  This
    component is a purely degree-one family, nonvanishing because a smooth
    compactly supported cutoff cannot be linear in its second argument.
    """
    x = np.asarray(x, dtype=float)
    r = np.asarray(r, dtype=float)
    pd = profile.value_and_derivs(np.array([x @ x]), np.array([r @ r]))
    L_i1 = float(np.dot(x, bracket.tensor[0, :, i]))
    return float((pd.d2[0] + 2.0 * r[1] ** 2 * pd.d22[0]) * L_i1 * r[0])
