"""Limiting covariance structure of the row-deletion difference statistics:
resolvent matrices, the contraction kernel a, the fourth-moment functionals g
and h, the differentiated kernels sigma^2 and tau^2, the process covariance,
contour formulas for LSS covariances, the identity-population unit-circle
formula with its extrapolation ladder, and an exact residue oracle for
polynomial test functions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ensembles import CovModel
from .mp_law import (
    Contour,
    MPModel,
    contour_nodes,
    companion_sweep,
    solve_companion_stieltjes,
)

__all__ = [
    "KernelError",
    "ResolventPair",
    "KernelEval",
    "NullCaseParams",
    "LssCovResult",
    "UnitCircleResult",
    "resolvents",
    "trace_product_delta",
    "bracket_product",
    "g_functional",
    "h_functional",
    "a_kernel",
    "pre_kernel_sigma",
    "sigma2",
    "tau2",
    "null_stieltjes_derivative",
    "null_sigma2",
    "null_tau2",
    "process_cov",
    "kernel_eval",
    "lss_cov",
    "null_lss_cov_unitcircle",
    "null_residue_cov_poly",
    "null_limit_constants",
]

A_GUARD = 1e-6          # minimum allowed |1 - a(z1,z2)|
STENCIL_TOL = 1e-6      # relative stabilization target for mixed partials
STENCIL_FLOOR = 1e-7    # smallest allowed differentiation step


class KernelError(RuntimeError):
    pass


@dataclass(frozen=True)
class ResolventPair:
    H_full: np.ndarray
    H_deleted: np.ndarray
    H_delta: np.ndarray


@dataclass(frozen=True)
class KernelEval:
    z1: complex
    z2: complex
    q1: int
    q2: int
    a: complex
    g: complex
    h: complex
    sigma2: complex
    tau2: complex
    cov: complex


@dataclass(frozen=True)
class NullCaseParams:
    h_param: float
    r1: float
    r2: float
    unit_circle_nodes: int

    def __post_init__(self):
        if not (self.r2 > self.r1 > 1.0):
            raise ValueError(f"need r2 > r1 > 1, got r1={self.r1}, r2={self.r2}")
        if self.h_param <= 0:
            raise ValueError("h parameter must be positive")


@dataclass(frozen=True)
class LssCovResult:
    value: float
    quad_error: float
    imag_residual: float


@dataclass(frozen=True)
class UnitCircleResult:
    value: float
    sigma_part: float
    tau_part: float
    table: tuple
    est_error: float
    flagged: bool


# ----------------------------------------------------------------- resolvents

def resolvents(cov: CovModel, q: int, z: complex, sbar: complex) -> ResolventPair:
    """The full resolvent (I + sbar*Sigma)^{-1}, its row/column-q deleted
    analogue zero-padded back to p x p, and their difference."""
    p = cov.p
    if not 1 <= q <= p:
        raise ValueError(f"q must be in [1, {p}], got {q}")
    A = np.eye(p) + sbar * cov.sigma
    try:
        H_full = np.linalg.inv(A)
    except np.linalg.LinAlgError as exc:
        raise KernelError(
            f"singular resolvent at z={z!r} (cond ~ {np.linalg.cond(A):.3e})") from exc
    keep = np.arange(p) != (q - 1)
    A_del = np.eye(p - 1) + sbar * cov.sigma[np.ix_(keep, keep)]
    try:
        H_small = np.linalg.inv(A_del)
    except np.linalg.LinAlgError as exc:
        raise KernelError(
            f"singular deleted resolvent at z={z!r} "
            f"(cond ~ {np.linalg.cond(A_del):.3e})") from exc
    H_deleted = np.zeros((p, p), dtype=complex)
    H_deleted[np.ix_(keep, keep)] = H_small
    return ResolventPair(H_full=H_full, H_deleted=H_deleted, H_delta=H_full - H_deleted)


def trace_product_delta(cov: CovModel, q1: int, q2: int, z1, z2, sbar1, sbar2) -> complex:
    """tr[Sigma * H_delta_{q1}(z1) * Sigma * H_delta_{q2}(z2)] by direct
    matrix multiplication."""
    r1 = resolvents(cov, q1, z1, sbar1)
    r2 = resolvents(cov, q2, z2, sbar2)
    M1 = cov.sigma @ r1.H_delta
    M2 = cov.sigma @ r2.H_delta
    return complex(np.einsum("ab,ba->", M1, M2))


def g_functional(cov: CovModel, l1: int, l2: int, z1, z2, sbar1, sbar2) -> complex:
    """The bracket (H(z1)Sigma)_{l1 l2} - sbar2*(H(z1) Sigma Htilde_{l2}(z2) Sigma)_{l1 l2}
    evaluated at finite n (entry extraction, no trace)."""
    i, j = l1 - 1, l2 - 1
    rf = resolvents(cov, l1, z1, sbar1)
    rd = resolvents(cov, l2, z2, sbar2)
    HS = rf.H_full @ cov.sigma
    first = HS[i, j]
    second = (HS @ rd.H_deleted @ cov.sigma)[i, j]
    return complex(first - sbar2 * second)


def bracket_product(cov: CovModel, q1: int, q2: int, z1, z2, sbar1, sbar2) -> complex:
    """Product of the two entry brackets; an independent route to
    trace_product_delta (they agree identically in exact arithmetic)."""
    f1 = g_functional(cov, q1, q2, z1, z2, sbar1, sbar2)
    f2 = g_functional(cov, q2, q1, z2, z1, sbar2, sbar1)
    return f1 * f2


def h_functional(cov: CovModel, l1: int, l2: int, z1, z2, sbar1, sbar2) -> complex:
    """Hadamard trace sum_i (Sigma H_delta_{l1}(z1))_ii (Sigma H_delta_{l2}(z2))_ii."""
    r1 = resolvents(cov, l1, z1, sbar1)
    r2 = resolvents(cov, l2, z2, sbar2)
    d1 = np.diag(cov.sigma @ r1.H_delta)
    d2 = np.diag(cov.sigma @ r2.H_delta)
    return complex(np.sum(d1 * d2))


def a_kernel(cov: CovModel, n: int, z1, z2, sbar1, sbar2) -> complex:
    """Contraction kernel (sbar1*sbar2/n) * tr[Sigma H(z1) Sigma H(z2)]."""
    r1 = resolvents(cov, 1, z1, sbar1)
    r2 = resolvents(cov, 1, z2, sbar2)
    M1 = cov.sigma @ r1.H_full
    M2 = cov.sigma @ r2.H_full
    return complex(sbar1 * sbar2 / n * np.einsum("ab,ba->", M1, M2))


# ------------------------------------------------------- pre-kernels and partials

class _PreKernels:
    """Shared-cache evaluator for the two scalar pre-kernels at a fixed
    population and q pair.  Caches Stieltjes solves per z and resolvent
    products per (q, z); the mixed-partial stencils hit each z several times.
    """

    def __init__(self, cov: CovModel, n: int, q1: int, q2: int):
        self.cov = cov
        self.n = n
        self.q1 = q1
        self.q2 = q2
        self.model = MPModel(cov.p / n, cov.spectral_measure)
        self._sbar = {}
        self._parts = {}

    def sbar(self, z) -> complex:
        z = complex(z)
        val = self._sbar.get(z)
        if val is None:
            val = solve_companion_stieltjes(self.model, z).s_under
            self._sbar[z] = val
        return val

    def parts(self, q: int, z):
        key = (q, complex(z))
        val = self._parts.get(key)
        if val is None:
            sb = self.sbar(z)
            pair = resolvents(self.cov, q, z, sb)
            SH = self.cov.sigma @ pair.H_full
            SHd = self.cov.sigma @ pair.H_delta
            val = (SH, SHd, np.diag(SHd).copy())
            self._parts[key] = val
        return val

    def pre_sigma(self, z1, z2) -> complex:
        sb1, sb2 = self.sbar(z1), self.sbar(z2)
        SH1, SHd1, _ = self.parts(self.q1, z1)
        SH2, SHd2, _ = self.parts(self.q2, z2)
        trace = np.einsum("ab,ba->", SHd1, SHd2)
        a = sb1 * sb2 / self.n * np.einsum("ab,ba->", SH1, SH2)
        one_minus_a = 1.0 - a
        if abs(one_minus_a) < A_GUARD:
            raise KernelError(f"|1 - a| = {abs(one_minus_a):.3e} below guard at "
                              f"z1={z1!r}, z2={z2!r}")
        return complex(sb1 * sb2 * trace / one_minus_a)

    def pre_tau(self, z1, z2) -> complex:
        sb1, sb2 = self.sbar(z1), self.sbar(z2)
        _, _, d1 = self.parts(self.q1, z1)
        _, _, d2 = self.parts(self.q2, z2)
        return complex(sb1 * sb2 * np.sum(d1 * d2))


def pre_kernel_sigma(cov: CovModel, n: int, q1: int, q2: int, z1, z2) -> complex:
    """sbar(z1)*sbar(z2) * tr[Sigma H_delta_{q1}(z1) Sigma H_delta_{q2}(z2)] / (1 - a)."""
    return _PreKernels(cov, n, q1, q2).pre_sigma(z1, z2)


_STENCIL_OFFSETS = np.array([-2.0, -1.0, 1.0, 2.0])
_STENCIL_COEFFS = np.array([1.0, -8.0, 8.0, -1.0]) / 12.0


def _stencil_pass(F, z1, z2, h1, h2):
    acc = 0.0 + 0.0j
    for ci, di in zip(_STENCIL_COEFFS, _STENCIL_OFFSETS):
        for cj, dj in zip(_STENCIL_COEFFS, _STENCIL_OFFSETS):
            acc += ci * cj * F(z1 + di * h1, z2 + dj * h2)
    return acc / (h1 * h2)


def _mixed_partial(F, z1, z2) -> complex:
    """d^2 F / dz1 dz2 via 4-point central differences in each variable, with
    the step halved until the value stabilizes."""
    z1, z2 = complex(z1), complex(z2)
    if z1.imag == 0.0 or z2.imag == 0.0:
        raise ValueError("mixed partials need both points off the real axis")
    h1 = min(1e-4 * max(1.0, abs(z1)), abs(z1.imag) / 10.0)
    h2 = min(1e-4 * max(1.0, abs(z2)), abs(z2.imag) / 10.0)
    prev = _stencil_pass(F, z1, z2, h1, h2)
    for _ in range(12):
        h1 *= 0.5
        h2 *= 0.5
        cur = _stencil_pass(F, z1, z2, h1, h2)
        if abs(cur - prev) <= STENCIL_TOL * max(1.0, abs(cur)):
            return cur
        if min(h1, h2) < STENCIL_FLOOR:
            raise KernelError(
                f"differentiation stencil did not stabilize at z1={z1!r}, z2={z2!r}")
        prev = cur
    raise KernelError(f"differentiation stencil did not stabilize at z1={z1!r}, z2={z2!r}")


def sigma2(cov: CovModel, n: int, q1: int, q2: int, z1, z2) -> complex:
    """Mixed partial of the sigma pre-kernel in (z1, z2)."""
    pk = _PreKernels(cov, n, q1, q2)
    return _mixed_partial(pk.pre_sigma, z1, z2)


def tau2(cov: CovModel, n: int, q1: int, q2: int, z1, z2) -> complex:
    """Mixed partial of sbar(z1)*sbar(z2)*h_{q1,q2}(z1,z2)."""
    pk = _PreKernels(cov, n, q1, q2)
    return _mixed_partial(pk.pre_tau, z1, z2)


# ------------------------------------------------------------ null closed forms

def _sbar_null_array(y: float, z):
    """Vectorized companion transform for the identity population (Herglotz
    branch of the quadratic)."""
    z = np.asarray(z, dtype=complex)
    b = z + 1.0 - y
    disc = np.sqrt(b * b - 4.0 * z)
    r1 = (-b + disc) / (2.0 * z)
    r2 = (-b - disc) / (2.0 * z)
    return np.where(r1.imag * np.sign(z.imag) > 0, r1, r2)


def null_stieltjes_derivative(y: float, z):
    """d sbar / dz for the identity population, by implicit differentiation of
    the defining quadratic."""
    z = np.asarray(z, dtype=complex)
    sb = _sbar_null_array(y, z)
    den = 2.0 * z * sb + z + 1.0 - y
    if np.min(np.abs(den)) < 1e-12:
        raise KernelError("branch point: derivative denominator vanishes")
    out = -(sb * sb + sb) / den
    return complex(out) if out.ndim == 0 else out


def null_sigma2(y: float, z1, z2):
    """Closed-form sigma^2 kernel for the identity population, q1 = q2."""
    u = _sbar_null_array(y, z1)
    v = _sbar_null_array(y, z2)
    up = null_stieltjes_derivative(y, z1)
    vp = null_stieltjes_derivative(y, z2)
    D = 1.0 + u + v + (1.0 - y) * u * v
    out = (1.0 + u + v + (1.0 + y) * u * v) * up * vp / D**3
    return complex(out) if np.ndim(out) == 0 else out


def null_tau2(y: float, z1, z2):
    """Closed-form tau^2 kernel for the identity population, q1 = q2."""
    u = _sbar_null_array(y, z1)
    v = _sbar_null_array(y, z2)
    up = null_stieltjes_derivative(y, z1)
    vp = null_stieltjes_derivative(y, z2)
    out = up * vp / ((1.0 + u) ** 2 * (1.0 + v) ** 2)
    return complex(out) if np.ndim(out) == 0 else out


def _null_pre_sigma(y: float, z1, z2):
    u = _sbar_null_array(y, z1)
    v = _sbar_null_array(y, z2)
    D = 1.0 + u + v + (1.0 - y) * u * v
    if np.min(np.abs(D)) < A_GUARD:
        raise KernelError("|1 - a| guard tripped on the null pre-kernel")
    return u * v / D


def _null_pre_tau(y: float, z1, z2):
    u = _sbar_null_array(y, z1)
    v = _sbar_null_array(y, z2)
    return u * v / ((1.0 + u) * (1.0 + v))


# ------------------------------------------------------------- process kernel

def process_cov(cov: CovModel, n: int, q1: int, q2: int, z1, z2,
                kappa: float, nu4: float) -> complex:
    """kappa*sigma2 + (nu4-kappa-1)*tau2 evaluated at (z1, conj(z2)): the
    covariance of the limiting Stieltjes process at (z1, z2)."""
    z2c = np.conj(complex(z2))
    val = kappa * sigma2(cov, n, q1, q2, z1, z2c)
    if nu4 - kappa - 1.0 != 0.0:
        val += (nu4 - kappa - 1.0) * tau2(cov, n, q1, q2, z1, z2c)
    return complex(val)


def kernel_eval(cov: CovModel, n: int, q1: int, q2: int, z1, z2,
                kappa: float, nu4: float) -> KernelEval:
    """Assemble one grid entry of every kernel at a (z1, z2) pair."""
    model = MPModel(cov.p / n, cov.spectral_measure)
    sb1 = solve_companion_stieltjes(model, z1).s_under
    sb2 = solve_companion_stieltjes(model, z2).s_under
    return KernelEval(
        z1=complex(z1), z2=complex(z2), q1=q1, q2=q2,
        a=a_kernel(cov, n, z1, z2, sb1, sb2),
        g=g_functional(cov, q1, q2, z1, z2, sb1, sb2),
        h=h_functional(cov, q1, q2, z1, z2, sb1, sb2),
        sigma2=sigma2(cov, n, q1, q2, z1, z2),
        tau2=tau2(cov, n, q1, q2, z1, z2),
        cov=process_cov(cov, n, q1, q2, z1, z2, kappa, nu4),
    )


# ------------------------------------------------------------- LSS covariance

def _check_disjoint(c1: Contour, c2: Contour):
    nested_12 = c2.x_l < c1.x_l and c1.x_r < c2.x_r and c1.v0 < c2.v0
    nested_21 = c1.x_l < c2.x_l and c2.x_r < c1.x_r and c2.v0 < c1.v0
    if not (nested_12 or nested_21):
        raise KernelError(
            "contours overlap: one must be strictly inside the other "
            f"([{c1.x_l}, {c1.x_r}] x {c1.v0} vs [{c2.x_l}, {c2.x_r}] x {c2.v0})")


_GRID_BLOCK = 512


def _accumulate_null(y_n, z1g, z2g, A1, A2, same_q):
    """Weighted pre-kernel grid sums for the identity population (closed-form
    companion transform; for q1 != q2 the pre-kernels vanish identically)."""
    if not same_q:
        return 0j, 0j
    u = _sbar_null_array(y_n, z1g)
    v = _sbar_null_array(y_n, z2g)
    s_sig = 0j
    s_tau = 0j
    for i0 in range(0, u.size, _GRID_BLOCK):
        U = u[i0:i0 + _GRID_BLOCK, None]
        a1 = A1[i0:i0 + _GRID_BLOCK]
        D = 1.0 + U + v[None, :] + (1.0 - y_n) * U * v[None, :]
        if np.min(np.abs(D)) < A_GUARD:
            raise KernelError("|1 - a| guard tripped on the contour grid")
        UV = U * v[None, :]
        s_sig += a1 @ ((UV / D) @ A2)
        s_tau += a1 @ ((UV / ((1.0 + U) * (1.0 + v[None, :]))) @ A2)
    return s_sig, s_tau


def _node_vectors(model, evals, Q, q, zg):
    """Per-node spectral data for one contour: companion transform values,
    eigenvalue weights g_k = 1/(1 + sbar*lambda_k), the deleted-row overlap
    normalizer H_qq, and the diagonal of Sigma*(H - H_deleted).

    Everything rests on the rank-one deletion identity
    H - H_deleted = H[:,q] H[q,:] / H_qq, expanded in the eigenbasis of Sigma.
    """
    sb = companion_sweep(model, zg)
    g = 1.0 / (1.0 + sb[:, None] * evals[None, :])
    cq = Q[q - 1, :]
    alpha = g @ (np.abs(cq) ** 2).astype(complex)
    P1 = (g * (evals * np.conj(cq))[None, :]) @ Q.T
    P2 = (g * cq[None, :]) @ np.conj(Q).T
    d = P1 * P2 / alpha[:, None]
    return sb, g, alpha, d


def _accumulate_matrix(cov, n, q1, q2, z1g, z2g, A1, A2):
    """Weighted pre-kernel grid sums for a general population, via the
    eigenbasis reduction of every pair trace to length-p contractions."""
    model = MPModel(cov.p / n, cov.spectral_measure)
    evals, Q = np.linalg.eigh(cov.sigma)
    sb1, g1, alpha1, d1 = _node_vectors(model, evals, Q, q1, z1g)
    sb2, g2, alpha2, d2 = _node_vectors(model, evals, Q, q2, z2g)
    w12 = evals * Q[q1 - 1, :] * np.conj(Q[q2 - 1, :])
    lam2 = (evals * evals).astype(complex)
    s_sig = 0j
    s_tau = 0j
    for i0 in range(0, z1g.size, _GRID_BLOCK):
        sl = slice(i0, i0 + _GRID_BLOCK)
        outer_sb = sb1[sl, None] * sb2[None, :]
        S12 = (g1[sl] * w12[None, :]) @ g2.T
        S21 = (g1[sl] * np.conj(w12)[None, :]) @ g2.T
        trace = S12 * S21 / (alpha1[sl, None] * alpha2[None, :])
        a = outer_sb / n * ((g1[sl] * lam2[None, :]) @ g2.T)
        one_minus_a = 1.0 - a
        if np.min(np.abs(one_minus_a)) < A_GUARD:
            raise KernelError("|1 - a| guard tripped on the contour grid")
        a1 = A1[sl]
        s_sig += a1 @ ((outer_sb * trace / one_minus_a) @ A2)
        s_tau += a1 @ ((outer_sb * (d1[sl] @ d2.T)) @ A2)
    return s_sig, s_tau


def _lss_cov_pass(cov, n, f1, f2, q1, q2, kappa, nu4, c1, c2, nodes):
    """One quadrature pass of the contour covariance.

    The kernel double integral carries the differentiated kernels against
    f1(z1)*conj(f2(z2)); integrating by parts once in each variable moves the
    derivatives onto the (real-coefficient) test functions, leaving the
    pre-kernels, which need no stencil.  The z2 integral runs against dzbar2,
    realized by conjugating the z2 nodes and weights.
    """
    z1s, w1s = contour_nodes(c1, nodes)
    z2s, w2s = contour_nodes(c2, nodes)
    z2c = np.conj(z2s)
    A1 = f1.derivative(z1s) * w1s
    A2 = np.conj(f2.derivative(z2s) * w2s)
    if cov.is_null:
        s_sig, s_tau = _accumulate_null(cov.p / n, z1s, z2c, A1, A2, q1 == q2)
    else:
        s_sig, s_tau = _accumulate_matrix(cov, n, q1, q2, z1s, z2c, A1, A2)
    return (kappa * s_sig + (nu4 - kappa - 1.0) * s_tau) / (4.0 * np.pi**2)


def lss_cov(cov: CovModel, n: int, f1, f2, q1: int, q2: int,
            kappa: float, nu4: float, contour1: Contour, contour2: Contour) -> LssCovResult:
    """Limiting covariance of the difference statistics for test functions
    (f1, f2) at deletion indices (q1, q2), by double contour quadrature of the
    kernel formula.  The contours must not intersect (one strictly inside the
    other); a node-doubling error estimate is attached to the result.
    """
    _check_disjoint(contour1, contour2)
    for q in (q1, q2):
        if not 1 <= q <= cov.p:
            raise ValueError(f"q must be in [1, {cov.p}], got {q}")
    for f, c in ((f1, contour1), (f2, contour2)):
        if f.kind == "log" and c.x_l <= 0:
            raise KernelError(
                f"f=log needs a contour right of the branch cut, got x_l={c.x_l}")
    m = contour1.nodes_per_side
    coarse = _lss_cov_pass(cov, n, f1, f2, q1, q2, kappa, nu4, contour1, contour2, m)
    fine = _lss_cov_pass(cov, n, f1, f2, q1, q2, kappa, nu4, contour1, contour2, 2 * m)
    err = abs(fine - coarse)
    scale = max(1.0, abs(fine))
    if err > 1e-3 * scale:
        raise KernelError(
            f"contour quadrature not converged: node doubling moved the value by {err:.3e}")
    imag_residual = abs(fine.imag)
    if imag_residual > 1e-6 * scale:
        raise KernelError(f"nonreal covariance: imaginary part {fine.imag:.3e}")
    return LssCovResult(value=float(fine.real), quad_error=float(err),
                        imag_residual=float(imag_residual))


# ------------------------------------------- identity-population unit circle

def _unitcircle_pass(y, f1, f2, kappa, nu4, params: NullCaseParams):
    h = params.h_param
    r1, r2 = params.r1, params.r2
    N = params.unit_circle_nodes
    theta = 2.0 * np.pi * np.arange(N) / N
    xi = np.exp(1j * theta)
    dxi = 1j * xi * (2.0 * np.pi / N)
    z1 = 1.0 + h * h + h * r1 * xi + h / (r1 * xi)
    z2 = 1.0 + h * h + h * r2 * xi + h / (r2 * xi)
    F1 = f1.evaluate(z1) * dxi
    F2 = f2.evaluate(z2) * dxi
    X1 = xi[:, None]
    X2 = xi[None, :]
    K = r1 * r2 * (r1 * r2 * X1 + X2) / (h * h * (r1 * r2 * X1 - X2) ** 3)
    outer = F1[:, None] * F2[None, :]
    I_sig = np.sum(outer * K)
    I_tau = np.sum(outer / (h * h * r1 * r2 * X1**2))
    v_sig = (-kappa / (2.0 * np.pi**2) * I_sig).real
    v_tau = (-(nu4 - kappa - 1.0) / (2.0 * np.pi**2) * I_tau).real
    return v_sig + v_tau, v_sig, v_tau


def null_lss_cov_unitcircle(y: float, f1, f2, kappa: float, nu4: float,
                            delta_sequence=(0.1, 0.05, 0.025),
                            nodes: int = 1024, same_q: bool = True) -> UnitCircleResult:
    """Identity-population covariance via the unit-circle double integral at
    r1 = 1+delta, r2 = 1+2*delta, Richardson-extrapolated along the delta
    ladder.  For q1 != q2 the formula is identically zero.

    The remaining-error estimate is the gap between the last two extrapolation
    levels scaled by 1/(2^2 - 1), the usual estimate for a second
    Richardson level at refinement ratio 2; the result is flagged when that
    estimate exceeds 1%.
    """
    if not same_q:
        return UnitCircleResult(0.0, 0.0, 0.0, table=(), est_error=0.0, flagged=False)
    deltas = tuple(float(d) for d in delta_sequence)
    if len(deltas) < 2 or any(d <= 0 for d in deltas):
        raise ValueError("delta_sequence needs at least two positive entries")
    h = float(np.sqrt(y))
    rows = []
    for d in deltas:
        params = NullCaseParams(h_param=h, r1=1.0 + d, r2=1.0 + 2.0 * d,
                                unit_circle_nodes=nodes)
        rows.append((d,) + _unitcircle_pass(y, f1, f2, kappa, nu4, params))
    vals = [r[1] for r in rows]
    firsts = [2.0 * vals[i + 1] - vals[i] for i in range(len(vals) - 1)]
    if len(firsts) >= 2:
        value = (4.0 * firsts[-1] - firsts[-2]) / 3.0
        est_error = abs(value - firsts[-1]) / 3.0
    else:
        value = firsts[-1]
        est_error = abs(value - vals[-1])
    flagged = est_error > 0.01 * max(1.0, abs(value))
    sig = [r[2] for r in rows]
    tau = [r[3] for r in rows]

    def _extrap(seq):
        f = [2.0 * seq[i + 1] - seq[i] for i in range(len(seq) - 1)]
        return (4.0 * f[-1] - f[-2]) / 3.0 if len(f) >= 2 else f[-1]

    return UnitCircleResult(value=float(value), sigma_part=float(_extrap(sig)),
                            tau_part=float(_extrap(tau)), table=tuple(rows),
                            est_error=float(est_error), flagged=bool(flagged))


def _laurent_poly_coeffs(coeffs, h: float, r: float, maxdeg: int):
    """Laurent coefficients (offset maxdeg) of f(1 + h^2 + h*r*xi + h/(r*xi))
    for a polynomial f."""
    size = 2 * maxdeg + 1
    base = np.zeros(size)
    base[maxdeg] = 1.0
    zpoly = np.zeros(size)
    zpoly[maxdeg] = 1.0 + h * h
    zpoly[maxdeg + 1] = h * r
    zpoly[maxdeg - 1] = h / r
    out = np.zeros(size)
    cur = base.copy()
    for k, a in enumerate(coeffs):
        if k > 0:
            cur = np.convolve(cur, zpoly)[maxdeg:maxdeg + size]
        out += a * cur
    return out, maxdeg


def null_residue_cov_poly(y: float, coeffs1, coeffs2, kappa: float, nu4: float) -> float:
    """Exact value of the unit-circle double integrals for polynomial test
    functions by Laurent-coefficient bookkeeping at r1 = r2 = 1 (the residues
    at xi2 = 0 and xi1 = 0 collapse to a finite coefficient sum).  Serves as
    the independent oracle for the quadrature + extrapolation route."""
    coeffs1 = tuple(float(c) for c in coeffs1)
    coeffs2 = tuple(float(c) for c in coeffs2)
    h = float(np.sqrt(y))
    deg = max(len(coeffs1), len(coeffs2))
    c1, off1 = _laurent_poly_coeffs(coeffs1, h, 1.0, deg)
    c2, off2 = _laurent_poly_coeffs(coeffs2, h, 1.0, deg)
    ssum = 0.0
    for j in range(1, deg + 1):
        ssum += j * j * c1[off1 + j] * c2[off2 - j]
    sig = 2.0 * kappa / (h * h) * ssum
    tau = 2.0 * (nu4 - kappa - 1.0) / (h * h) * c1[off1 + 1] * c2[off2 - 1]
    return float(sig + tau)


def null_limit_constants(y: float, kappa: float, nu4: float, f_kind: str) -> float:
    """Closed-form large-dimension variance constants for the identity
    population: f_kind in {"x", "x2", "log"}."""
    gamma = nu4 - kappa - 1.0
    if f_kind == "x":
        return float(2.0 * kappa + gamma)
    if f_kind == "x2":
        return float(8.0 * kappa * (1.0 + 3.0 * y + y * y) + 4.0 * gamma * (1.0 + y) ** 2)
    if f_kind == "log":
        if not 0.0 < y < 1.0:
            raise ValueError(f"log constant needs y in (0,1), got {y}")
        return float(kappa / (1.0 - y) + gamma)
    raise ValueError(f"unknown f_kind {f_kind!r} (expected x, x2 or log)")
