"""Sample-covariance assembly and the row-deletion statistics built on it:
linear spectral statistics, the scaled and centered difference statistics, and
the empirical Stieltjes difference process.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import mp_law
from .ensembles import CovModel, SpectralMeasure

__all__ = [
    "TestFunction",
    "DiffSample",
    "ProcessSample",
    "SingularCovarianceError",
    "sample_covariance",
    "companion_covariance",
    "delete_rowcol",
    "eigenvalues",
    "lss",
    "deleted_spectral_measure",
    "diff_statistic",
    "full_lss_statistic",
    "stieltjes_esd",
    "stieltjes_diff_process",
]


class SingularCovarianceError(RuntimeError):
    """Raised when a log statistic meets a singular sample covariance."""


@dataclass(frozen=True)
class TestFunction:
    """Analytic test function: a real-coefficient polynomial or the logarithm.

    The log is only admissible when the support stays away from 0 (y < 1 and a
    positive-definite population).
    """

    kind: str
    coefficients: tuple = ()
    description: str = ""

    def __post_init__(self):
        if self.kind not in ("poly", "log"):
            raise ValueError(f"unknown test function kind {self.kind!r}")
        if self.kind == "poly":
            coeffs = tuple(float(c) for c in self.coefficients)
            if len(coeffs) == 0:
                raise ValueError("polynomial needs at least one coefficient")
            if not all(np.isfinite(coeffs)):
                raise ValueError("polynomial coefficients must be finite")
            object.__setattr__(self, "coefficients", coeffs)
        if not self.description:
            object.__setattr__(self, "description", self.f_id)

    @property
    def f_id(self) -> str:
        if self.kind == "log":
            return "log"
        return "poly[" + ";".join(repr(c) for c in self.coefficients) + "]"

    @classmethod
    def poly(cls, coefficients, description: str = "") -> "TestFunction":
        return cls(kind="poly", coefficients=tuple(coefficients), description=description)

    @classmethod
    def log(cls) -> "TestFunction":
        return cls(kind="log")

    @classmethod
    def from_spec(cls, spec: dict) -> "TestFunction":
        kind = spec.get("kind")
        if kind == "log":
            return cls.log()
        if kind == "poly":
            return cls.poly(spec.get("coefficients", ()))
        raise ValueError(f"unknown test function spec {spec!r}")

    def evaluate(self, z):
        """f(z) for real or complex z (scalar or array)."""
        if self.kind == "log":
            return np.log(z)
        return np.polynomial.polynomial.polyval(z, np.asarray(self.coefficients))

    def derivative(self, z):
        """f'(z); used by the contour-covariance integration by parts."""
        if self.kind == "log":
            return 1.0 / np.asarray(z)
        dcoeffs = np.polynomial.polynomial.polyder(np.asarray(self.coefficients))
        return np.polynomial.polynomial.polyval(z, dcoeffs)


@dataclass(frozen=True)
class DiffSample:
    value: float
    q: int
    f: TestFunction
    p: int
    n: int
    centering_used: float


@dataclass(frozen=True)
class ProcessSample:
    z: complex
    value: complex
    q: int


def sample_covariance(cov: CovModel, X: np.ndarray) -> np.ndarray:
    """(1/n) * Sigma^{1/2} X X* Sigma^{1/2} for a p-by-n data matrix."""
    X = np.asarray(X)
    if X.ndim != 2 or X.shape[0] != cov.p:
        raise ValueError(f"data matrix must be {cov.p} x n, got shape {X.shape}")
    n = X.shape[1]
    Y = cov.sigma_sqrt @ X
    return (Y @ Y.conj().T) / n


def companion_covariance(cov: CovModel, X: np.ndarray) -> np.ndarray:
    """(1/n) * X* Sigma X, the n-by-n companion of the sample covariance."""
    X = np.asarray(X)
    if X.ndim != 2 or X.shape[0] != cov.p:
        raise ValueError(f"data matrix must be {cov.p} x n, got shape {X.shape}")
    n = X.shape[1]
    return (X.conj().T @ cov.sigma @ X) / n


def delete_rowcol(M: np.ndarray, q: int) -> np.ndarray:
    """Remove row and column q (1-based) from a square matrix."""
    M = np.asarray(M)
    dim = M.shape[0]
    if M.ndim != 2 or M.shape[1] != dim:
        raise ValueError("matrix must be square")
    if not 1 <= q <= dim:
        raise ValueError(f"q must be in [1, {dim}], got {q}")
    keep = np.arange(dim) != (q - 1)
    return M[np.ix_(keep, keep)]


def eigenvalues(M: np.ndarray) -> np.ndarray:
    """Eigenvalues of a Hermitian matrix, sorted ascending."""
    M = np.asarray(M)
    scale = max(1.0, float(np.linalg.norm(M)))
    if float(np.linalg.norm(M - M.conj().T)) > 1e-10 * scale:
        raise ValueError("matrix is not Hermitian")
    return np.linalg.eigvalsh(M)


def lss(eigs, f: TestFunction) -> float:
    """Linear spectral statistic: sum of f over the eigenvalues."""
    eigs = np.asarray(eigs, dtype=float)
    if f.kind == "log":
        if eigs.size and float(eigs.min()) <= 0.0:
            raise ValueError(f"log of non-positive eigenvalue {float(eigs.min()):.6e}")
        return float(np.sum(np.log(eigs)))
    return float(np.sum(f.evaluate(eigs)))


def _logdet_chol(M: np.ndarray) -> float:
    """Log-determinant of a Hermitian positive-definite matrix via Cholesky."""
    try:
        L = np.linalg.cholesky(M)
    except np.linalg.LinAlgError as exc:
        raise SingularCovarianceError(f"matrix not positive definite: {exc}") from exc
    d = np.diag(L)
    if np.iscomplexobj(d):
        d = d.real
    return 2.0 * float(np.sum(np.log(d)))


def _lss_difference(S: np.ndarray, Sq: np.ndarray, f: TestFunction) -> float:
    """lss(S, f) - lss(Sq, f) with fast paths: Cholesky log-determinants for
    the log, and traces for polynomials up to degree 2."""
    if f.kind == "log":
        return _logdet_chol(S) - _logdet_chol(Sq)
    coeffs = f.coefficients
    if len(coeffs) <= 3:
        value = coeffs[0] if len(coeffs) >= 1 else 0.0  # sizes differ by one
        if len(coeffs) >= 2:
            value += coeffs[1] * (np.trace(S).real - np.trace(Sq).real)
        if len(coeffs) >= 3:
            # tr(S^2) = squared Frobenius norm for Hermitian S
            value += coeffs[2] * (np.vdot(S, S).real - np.vdot(Sq, Sq).real)
        return float(value)
    return lss(eigenvalues(S), f) - lss(eigenvalues(Sq), f)


def deleted_spectral_measure(cov: CovModel, q: int):
    """ESD of the population covariance with row/column q removed (None when
    p = 1)."""
    if cov.p == 1:
        return None
    if cov.is_diagonal:
        atoms = np.delete(np.diag(cov.sigma).real, q - 1)
        return SpectralMeasure.from_eigenvalues(atoms)
    return SpectralMeasure.from_eigenvalues(np.linalg.eigvalsh(delete_rowcol(cov.sigma, q)))


def diff_statistic(cov: CovModel, X: np.ndarray, f: TestFunction, q: int,
                   centering: float = None) -> DiffSample:
    """One realization of the scaled, centered row-deletion difference
    statistic sqrt(n) * [ lss(S,f) - lss(S_q,f) - centering ].

    The centering defaults to the finite-sample value at ((p/n, H_n),
    ((p-1)/n, H_nq)); pass it explicitly to amortize across replicates.
    """
    X = np.asarray(X)
    p, n = cov.p, X.shape[1]
    if f.kind == "log" and p > n:
        raise ValueError(f"f=log requires p <= n, got p={p} > n={n}")
    S = sample_covariance(cov, X)
    Sq = delete_rowcol(S, q)
    raw = _lss_difference(S, Sq, f)
    if centering is None:
        centering = mp_law.centering_difference(
            p, n, cov.spectral_measure, deleted_spectral_measure(cov, q), f)
    value = float(np.sqrt(n) * (raw - centering))
    return DiffSample(value=value, q=q, f=f, p=p, n=n, centering_used=float(centering))


def full_lss_statistic(cov: CovModel, X: np.ndarray, f: TestFunction,
                       centering: float = None) -> float:
    """Centered full-sample linear spectral statistic
    lss(S, f) - p * Integral(f) dF^{p/n, H_n} (no sqrt(n) scaling: this
    statistic is already order one)."""
    X = np.asarray(X)
    p, n = cov.p, X.shape[1]
    S = sample_covariance(cov, X)
    if f.kind == "log":
        raw = _logdet_chol(S)
    elif len(f.coefficients) <= 3:
        coeffs = f.coefficients
        raw = coeffs[0] * p if len(coeffs) >= 1 else 0.0
        if len(coeffs) >= 2:
            raw += coeffs[1] * np.trace(S).real
        if len(coeffs) >= 3:
            raw += coeffs[2] * np.vdot(S, S).real
        raw = float(raw)
    else:
        raw = lss(eigenvalues(S), f)
    if centering is None:
        centering = p * mp_law.mp_integral(mp_law.MPModel(p / n, cov.spectral_measure), f)
    return float(raw - centering)


def stieltjes_esd(eigs, z: complex) -> complex:
    """Stieltjes transform of the ESD: (1/k) * sum 1/(eig - z)."""
    z = complex(z)
    if z.imag == 0.0:
        raise ValueError("z must lie off the real axis")
    eigs = np.asarray(eigs, dtype=float)
    if eigs.size == 0:
        return 0j
    return complex(np.mean(1.0 / (eigs - z)))


def stieltjes_diff_process(cov: CovModel, X: np.ndarray, q: int, z: complex,
                           s0: complex = None, s0q: complex = None) -> ProcessSample:
    """The scaled Stieltjes difference
    sqrt(n) * { p*[s_ESD(S) - s0](z) - (p-1)*[s_ESD(S_q) - s0q](z) } where s0
    and s0q are the theoretical transforms at (p/n, H_n) and ((p-1)/n, H_nq).

    s0/s0q may be passed in (solved once per z) to amortize across replicates.
    """
    z = complex(z)
    p, n = cov.p, np.asarray(X).shape[1]
    S = sample_covariance(cov, X)
    if s0 is None:
        s0 = mp_law.solve_companion_stieltjes(
            mp_law.MPModel(p / n, cov.spectral_measure), z).s
    value = p * (stieltjes_esd(eigenvalues(S), z) - s0)
    if p > 1:
        if s0q is None:
            s0q = mp_law.solve_companion_stieltjes(
                mp_law.MPModel((p - 1) / n, deleted_spectral_measure(cov, q)), z).s
        Sq = delete_rowcol(S, q)
        value -= (p - 1) * (stieltjes_esd(eigenvalues(Sq), z) - s0q)
    return ProcessSample(z=z, value=complex(np.sqrt(n) * value), q=q)
