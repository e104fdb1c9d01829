"""Generalized Marchenko-Pastur machinery: companion Stieltjes-transform
solver, density recovery, contour quadrature of spectral integrals, and the
finite-sample centering terms used by the row-deletion difference statistics.

Conventions.  For dimension ratio y and population spectral measure H, s(z)
denotes the Stieltjes transform of the limiting sample-covariance ESD and
s_under (written sbar below) the transform of the companion law; they are tied
by sbar = -(1-y)/z + y*s.  sbar solves

    z = -1/sbar + y * Integral( lambda / (1 + lambda*sbar) ) dH(lambda)

on the Herglotz branch Im(sbar)*Im(z) > 0.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

from .ensembles import CovModel, SpectralMeasure

__all__ = [
    "MPModel",
    "StieltjesValue",
    "Contour",
    "MPSolverError",
    "ContourError",
    "QuadratureError",
    "null_companion_stieltjes",
    "solve_companion_stieltjes",
    "companion_sweep",
    "stieltjes_sweep",
    "mp_density",
    "atom_mass",
    "support_interval",
    "build_contour",
    "outer_contour",
    "contour_nodes",
    "mp_integral",
    "null_mp_moment",
    "centering_difference",
]

SOLVER_TOL = 1e-13
SOLVER_MAX_ITER = 100_000
_IM_LADDER_START = 0.05
QUAD_TOL = 1e-8


class MPSolverError(RuntimeError):
    pass


class ContourError(ValueError):
    pass


class QuadratureError(RuntimeError):
    pass


@dataclass(frozen=True)
class MPModel:
    """A (y, H) pair: dimension ratio plus population spectral measure."""

    y: float
    H: SpectralMeasure

    def __post_init__(self):
        if not (np.isfinite(self.y) and self.y > 0):
            raise ValueError(f"dimension ratio must be positive and finite, got {self.y}")


@dataclass(frozen=True)
class StieltjesValue:
    z: complex
    s: complex
    s_under: complex
    residual: float


@dataclass(frozen=True)
class Contour:
    """Positively oriented rectangle [x_l, x_r] x [-v0, v0]."""

    x_l: float
    x_r: float
    v0: float
    nodes_per_side: int
    orientation: str = "positive"

    def __post_init__(self):
        if not self.x_l < self.x_r:
            raise ContourError(f"need x_l < x_r, got [{self.x_l}, {self.x_r}]")
        if self.v0 <= 0:
            raise ContourError("v0 must be positive")
        if self.nodes_per_side < 2:
            raise ContourError("need at least 2 nodes per side")
        if self.orientation != "positive":
            raise ContourError("only positively oriented contours are supported")


def null_companion_stieltjes(y: float, z: complex) -> complex:
    """Closed-form companion transform for H concentrated at 1.

    sbar is the root of z*sbar^2 + (z+1-y)*sbar + 1 = 0 with
    Im(sbar)*Im(z) > 0.  This is the independent oracle for the iterative
    solver and the base of the null-case kernel formulas.
    """
    z = complex(z)
    if z.imag == 0.0:
        raise ValueError("z must lie off the real axis")
    b = z + 1.0 - y
    disc = np.sqrt(b * b - 4.0 * z)
    r1 = (-b + disc) / (2.0 * z)
    r2 = (-b - disc) / (2.0 * z)
    return r1 if r1.imag * z.imag > 0 else r2


def _solve_sbar(y, atoms, weights, z, sbar0=None):
    """Solve the defining equation for sbar at one z, robustly.

    Warm-started solves go straight to the core iteration.  Cold solves very
    close to the real axis first solve at an elevated imaginary part and
    then walk a halving ladder of heights down to Im(z), warm-starting each
    level from the previous one.  This matters because the fixed-point
    backbone of the core iteration contracts only at rate 1 - O(Im z) until
    the iterate leaves the near-real wandering regime, so a cold start at
    Im(z) ~ 1e-6 could take ~1e6 iterations; along the ladder every level
    starts essentially at its root (sbar extends analytically to the axis
    away from support edges) and finishes in a handful of Newton steps."""
    if sbar0 is None:
        h0 = _IM_LADDER_START * max(1.0, abs(z.real))
        if 0.0 < abs(z.imag) < h0:
            sign = 1.0 if z.imag > 0 else -1.0
            im = sign * h0
            guess = None
            while abs(im) > 2.0 * abs(z.imag):
                guess, _ = _solve_core(y, atoms, weights, complex(z.real, im), guess)
                im *= 0.5
            return _solve_core(y, atoms, weights, z, guess)
    return _solve_core(y, atoms, weights, z, sbar0)


def _solve_core(y, atoms, weights, z, sbar0=None):
    """Hybrid Newton / fixed-point iteration on the defining equation.

    The backbone is the half-plane-preserving fixed-point map
    sbar <- -1/(z - y*Int), which converges globally off the real axis.  The
    full Newton step is layered on top as an accelerator and accepted only
    when it at least halves the best residual |g| seen so far.  Gating
    against the running minimum (a monotone ratchet) rather than the current
    residual matters: in the far tail |g| ~ 1/|sbar|, so Newton can "halve"
    the current residual by walking outward toward the wrong root of the
    equation, exactly undoing the inward fixed-point steps in a stable
    2-cycle.  Against the ratchet such excursions stay rejected and the
    fixed-point map alone carries the iterate into the true basin, where
    Newton re-engages (quadratically at simple roots, contracting ~1/4 per
    step at support edges where the root is nearly double).  Returns
    (sbar, residual) with residual below SOLVER_TOL."""
    sign = 1.0 if z.imag > 0 else -1.0
    sbar = complex(sbar0) if sbar0 is not None else -1.0 / z
    if not (np.isfinite(sbar) and sbar.imag * sign > 0):
        sbar = -1.0 / z

    def eval_g(s):
        den = 1.0 + atoms * s
        integral = np.sum(weights * atoms / den)
        return z + 1.0 / s - y * integral, integral, den

    residual = np.inf
    best = np.inf
    # Nonfinite intermediates (candidate at a pole of g, overflowing
    # |sbar|^2, ...) are expected transients here and are screened by the
    # finiteness checks, so numpy's own warnings are silenced locally.
    with np.errstate(all="ignore"):
        for _ in range(SOLVER_MAX_ITER):
            g, integral, den = eval_g(sbar)
            residual = abs(g)
            if residual < SOLVER_TOL:
                return sbar, residual
            if residual < best:
                best = residual
            nxt = None
            if abs(sbar) < 1e50:
                dg = -1.0 / (sbar * sbar) + y * np.sum(weights * (atoms / den) ** 2)
                if np.isfinite(dg) and dg != 0.0:
                    cand = sbar - g / dg
                    if np.isfinite(cand) and cand != 0.0 and cand.imag * sign > 0.0:
                        g_c, _, _ = eval_g(cand)
                        if abs(g_c) <= 0.5 * best:
                            nxt = cand
            if nxt is None:
                nxt = -1.0 / (z - y * integral)
                if not (np.isfinite(nxt) and nxt != 0.0 and nxt.imag * sign > 0.0):
                    nxt = -1.0 / z
            sbar = nxt
    raise MPSolverError(f"no convergence at z={z!r}: last residual {residual:.3e}")


def solve_companion_stieltjes(model: MPModel, z, sbar0=None) -> StieltjesValue:
    """Solve the companion-transform equation at one point z off the real axis.

    sbar0 is an optional warm start (used heavily along contours).
    """
    z = complex(z)
    if z.imag == 0.0:
        raise ValueError("z must lie off the real axis")
    atoms = model.H.atoms_array()
    weights = model.H.weights_array()
    sbar, residual = _solve_sbar(model.y, atoms, weights, z, sbar0)
    s = (sbar + (1.0 - model.y) / z) / model.y
    return StieltjesValue(z=z, s=s, s_under=sbar, residual=residual)


def companion_sweep(model: MPModel, zs) -> np.ndarray:
    """Solve for sbar along a path of z values, warm-starting each solve from
    the previous one (fast when consecutive points are close)."""
    zs = np.asarray(zs, dtype=complex)
    atoms = model.H.atoms_array()
    weights = model.H.weights_array()
    out = np.empty(zs.shape, dtype=complex)
    flat = out.ravel()
    sbar_prev = None
    for i, z in enumerate(zs.ravel()):
        if sbar_prev is not None and sbar_prev.imag * z.imag <= 0:
            sbar_prev = None
        sbar, _ = _solve_sbar(model.y, atoms, weights, z, sbar_prev)
        flat[i] = sbar
        sbar_prev = sbar
    return out


def stieltjes_sweep(model: MPModel, zs) -> np.ndarray:
    """Like companion_sweep but returns s (transform of the sample-covariance
    law) instead of sbar."""
    zs = np.asarray(zs, dtype=complex)
    sbar = companion_sweep(model, zs)
    return (sbar + (1.0 - model.y) / zs) / model.y


def mp_density(model: MPModel, x: float, epsilon: float = 1e-6) -> float:
    """Smoothed density Im s(x + i*epsilon) / pi."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    val = solve_companion_stieltjes(model, complex(x, epsilon))
    return float(val.s.imag / np.pi)


def atom_mass(y: float) -> float:
    """Mass of the point at 0 in the limiting law (nonzero only for y > 1)."""
    return max(0.0, 1.0 - 1.0 / y)


def _support_from_atoms(lam_min: float, lam_max: float, y: float):
    lo = lam_min * (1.0 - np.sqrt(y)) ** 2 if 0.0 < y < 1.0 else 0.0
    hi = lam_max * (1.0 + np.sqrt(y)) ** 2
    return float(lo), float(hi)


def support_interval(cov: CovModel, y: float):
    """Bounding interval [lo, hi] for the bulk support at ratio y, from the
    extremal population eigenvalues."""
    atoms = cov.spectral_measure.atoms
    return _support_from_atoms(min(atoms), max(atoms), y)


def build_contour(interval, margin: float = None, v0: float = 1.0,
                  nodes_per_side: int = 512, require_positive: bool = False) -> Contour:
    """Rectangle around a support interval, inflated by `margin` on the real
    axis and reaching +-v0 vertically.  Default margin is 0.1*(hi-lo).

    require_positive demands x_l > 0 (mandatory when log statistics are in
    play, so the contour stays off the branch cut).
    """
    lo, hi = float(interval[0]), float(interval[1])
    if margin is None:
        span = hi - lo
        margin = 0.1 * span if span > 0 else 0.1 * max(1.0, abs(hi))
        if require_positive and lo > 0 and lo - margin <= 0:
            margin = 0.5 * lo
    if margin <= 0:
        raise ContourError("margin must be positive")
    x_l = lo - margin
    x_r = hi + margin
    if require_positive and x_l <= 0:
        raise ContourError(
            f"contour touches the log branch cut: x_l = {x_l:.6g} <= 0 "
            f"(support lower edge {lo:.6g})"
        )
    return Contour(x_l=x_l, x_r=x_r, v0=v0, nodes_per_side=nodes_per_side)


def outer_contour(contour: Contour, step: float) -> Contour:
    """Inflate a contour by one margin step on all four sides."""
    if step <= 0:
        raise ContourError("inflation step must be positive")
    return Contour(
        x_l=contour.x_l - step,
        x_r=contour.x_r + step,
        v0=contour.v0 + step,
        nodes_per_side=contour.nodes_per_side,
        orientation=contour.orientation,
    )


@functools.lru_cache(maxsize=64)
def _leggauss(m: int):
    x, w = np.polynomial.legendre.leggauss(m)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def contour_nodes(contour: Contour, nodes_per_side: int = None):
    """Gauss-Legendre nodes and weights along the rectangle, counterclockwise
    starting from the bottom-left.  Returns (z, w) with sum(f(z)*w) ~ the
    positively oriented contour integral of f."""
    m = nodes_per_side if nodes_per_side is not None else contour.nodes_per_side
    x, w = _leggauss(int(m))
    mid = 0.5 * (contour.x_l + contour.x_r)
    half = 0.5 * (contour.x_r - contour.x_l)
    v0 = contour.v0
    zs = np.concatenate([
        mid + half * x - 1j * v0,       # bottom, left -> right
        contour.x_r + 1j * v0 * x,      # right, bottom -> top
        mid - half * x + 1j * v0,       # top, right -> left
        contour.x_l - 1j * v0 * x,      # left, top -> bottom
    ])
    ws = np.concatenate([
        half * w + 0j,
        1j * v0 * w,
        -half * w + 0j,
        -1j * v0 * w,
    ])
    return zs, ws


def _cauchy_integral(model: MPModel, f, contour: Contour, nodes_per_side: int) -> complex:
    zs, ws = contour_nodes(contour, nodes_per_side)
    s_vals = stieltjes_sweep(model, zs)
    fz = f.evaluate(zs)
    return -1.0 / (2j * np.pi) * np.sum(fz * s_vals * ws)


def _default_contour(model: MPModel, f, nodes_per_side: int = 512) -> Contour:
    lo, hi = _support_from_atoms(min(model.H.atoms), max(model.H.atoms), model.y)
    return build_contour((lo, hi), v0=1.0, nodes_per_side=nodes_per_side,
                         require_positive=(f.kind == "log"))


def mp_integral(model: MPModel, f, contour: Contour = None) -> float:
    """Integral of f against the limiting law at (y, H) via contour quadrature.

    The value is -(1/2pi*i) * contour integral of f(z)*s(z) dz, plus, when the
    law has a point mass at 0 that the contour does not enclose, the explicit
    term mass*f(0).  A node-doubling check bounds the quadrature error at
    QUAD_TOL; disagreement raises QuadratureError.
    """
    if f.kind == "log" and model.y >= 1.0:
        raise ContourError("f=log with y >= 1: support touches the branch cut at 0")
    if contour is None:
        contour = _default_contour(model, f)
    if f.kind == "log" and contour.x_l <= 0.0:
        raise ContourError(f"contour crosses the log branch cut (x_l = {contour.x_l:.6g})")

    coarse = _cauchy_integral(model, f, contour, contour.nodes_per_side)
    fine = _cauchy_integral(model, f, contour, 2 * contour.nodes_per_side)
    err = abs(fine - coarse)
    scale = max(1.0, abs(fine))
    if err > QUAD_TOL * scale:
        raise QuadratureError(
            f"node-doubling check failed: |change| = {err:.3e} at "
            f"{contour.nodes_per_side}->{2 * contour.nodes_per_side} nodes/side"
        )
    mass = atom_mass(model.y)
    if mass > 0.0 and contour.x_l > 0.0:
        # The origin atom lies outside this contour; add it explicitly.
        fine = fine + mass * complex(f.evaluate(0.0))
    if abs(fine.imag) > 1e-6 * scale:
        raise QuadratureError(f"nonreal integral: imaginary part {fine.imag:.3e}")
    return float(fine.real)


def null_mp_moment(y: float, f) -> float:
    """Closed-form Integral(f) dF^{y, delta_1} for log and polynomials up to
    degree 2; falls back to contour quadrature for higher degrees."""
    if f.kind == "log":
        if y >= 1.0:
            raise ValueError("log moment undefined for y >= 1 (support reaches 0)")
        return float((y - 1.0) / y * np.log(1.0 - y) - 1.0)
    coeffs = f.coefficients
    if len(coeffs) <= 3:
        value = coeffs[0] if len(coeffs) >= 1 else 0.0
        if len(coeffs) >= 2:
            value += coeffs[1] * 1.0
        if len(coeffs) >= 3:
            value += coeffs[2] * (1.0 + y)
        return float(value)
    point = SpectralMeasure(atoms=(1.0,), weights=(1.0,))
    return mp_integral(MPModel(y, point), f)


def _null_log_moment_times_k(k: int, n: int) -> float:
    """k * Integral(log) dF^{k/n, delta_1} = -k + (k-n)*log(1 - k/n), with the
    k = n limit of the second term taken as 0."""
    if k == n:
        return -float(k)
    return -float(k) + (k - n) * np.log((n - k) / n)


def centering_difference(p: int, n: int, H_n, H_nq, f,
                         force_quadrature: bool = False) -> float:
    """Finite-sample centering p*Int(f)dF^{p/n,H_n} - (p-1)*Int(f)dF^{(p-1)/n,H_nq}.

    For identity populations the exact closed forms are used (poly up to
    degree 2 and log); otherwise both integrals are evaluated by contour
    quadrature.  H_nq may be None when p = 1.
    """
    if p < 1 or n < 1:
        raise ValueError("need p, n >= 1")
    if f.kind == "log" and p > n:
        raise ValueError(f"f=log requires p <= n, got p={p} > n={n}")

    null_n = H_n.is_point_mass_at_one()
    null_q = p == 1 or (H_nq is not None and H_nq.is_point_mass_at_one())
    if null_n and null_q and not force_quadrature:
        if f.kind == "log":
            return _null_log_moment_times_k(p, n) - _null_log_moment_times_k(p - 1, n)
        coeffs = f.coefficients
        if len(coeffs) <= 3:
            value = coeffs[0] if len(coeffs) >= 1 else 0.0
            if len(coeffs) >= 2:
                value += coeffs[1] * 1.0
            if len(coeffs) >= 3:
                value += coeffs[2] * (1.0 + (2.0 * p - 1.0) / n)
            return float(value)
        # higher-degree polynomials fall through to quadrature

    value = p * mp_integral(MPModel(p / n, H_n), f)
    if p > 1:
        value -= (p - 1) * mp_integral(MPModel((p - 1) / n, H_nq), f)
    return float(value)
