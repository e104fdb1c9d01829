"""Entry-law sampling and population covariance models for sample-covariance
matrix experiments.

Entry laws are centered, unit-variance distributions for the raw data matrix;
population models carry a covariance matrix, its Hermitian square root and its
spectral measure.  All sampling is counter-based: a (seed, replicate) pair maps
to one deterministic stream regardless of execution order or thread count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

__all__ = [
    "SpectralMeasure",
    "EntryLaw",
    "CovModel",
    "make_entry_law",
    "law_moments",
    "make_population",
    "ladder_values",
    "sample_matrix",
    "audit_entry_law",
]


@dataclass(frozen=True)
class SpectralMeasure:
    """Discrete probability measure on [0, inf): atoms with matching weights."""

    atoms: tuple
    weights: tuple

    def __post_init__(self):
        atoms = tuple(float(a) for a in self.atoms)
        weights = tuple(float(w) for w in self.weights)
        if len(atoms) != len(weights):
            raise ValueError("atoms and weights must have the same length")
        if len(atoms) == 0:
            raise ValueError("measure needs at least one atom")
        if min(atoms) < 0.0:
            raise ValueError(f"atoms must be nonnegative, got min {min(atoms)}")
        if min(weights) < 0.0:
            raise ValueError("weights must be nonnegative")
        total = sum(weights)
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"weights must sum to 1, got {total!r}")
        order = sorted(range(len(atoms)), key=lambda i: atoms[i])
        object.__setattr__(self, "atoms", tuple(atoms[i] for i in order))
        object.__setattr__(self, "weights", tuple(weights[i] for i in order))

    @classmethod
    def from_eigenvalues(cls, eigenvalues) -> "SpectralMeasure":
        """Uniform measure on a list of eigenvalues (the ESD of a matrix)."""
        eigenvalues = [float(x) for x in np.asarray(eigenvalues).ravel()]
        k = len(eigenvalues)
        return cls(atoms=tuple(eigenvalues), weights=(1.0 / k,) * k)

    def atoms_array(self) -> np.ndarray:
        return np.asarray(self.atoms, dtype=float)

    def weights_array(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=float)

    def mean(self) -> float:
        return float(np.dot(self.atoms_array(), self.weights_array()))

    def is_point_mass_at_one(self) -> bool:
        return all(a == 1.0 for a in self.atoms)


@dataclass(frozen=True)
class EntryLaw:
    """Centered unit-variance distribution for the entries of the data matrix.

    kappa is 2 for real laws and 1 for complex laws with E x^2 = 0; nu4 is the
    fourth absolute moment E|x|^4 of the standardized entry.
    """

    kind: str
    kappa: float
    nu4: float
    is_complex: bool
    fifth_ok: bool = True
    params: dict = field(default_factory=dict)

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        if self.kind == "gaussian":
            return rng.standard_normal(size)
        if self.kind == "complex_gaussian":
            real = rng.standard_normal(size)
            imag = rng.standard_normal(size)
            return (real + 1j * imag) / np.sqrt(2.0)
        if self.kind == "rademacher":
            return 2.0 * rng.integers(0, 2, size=size).astype(float) - 1.0
        if self.kind == "two_point":
            p0 = self.params["p0"]
            b = (rng.random(size) < p0).astype(float)
            return (b - p0) / math.sqrt(p0 * (1.0 - p0))
        if self.kind == "student_t":
            df = self.params["df"]
            return rng.standard_t(df, size=size) / math.sqrt(df / (df - 2.0))
        raise ValueError(f"unknown entry law kind {self.kind!r}")


def make_entry_law(kind: str, **params) -> EntryLaw:
    """Build an entry law with its analytic moment constants populated.

    Supported kinds: gaussian, complex_gaussian, rademacher, two_point (param
    p0 in (0,1)), student_t (param df >= 6).
    """
    if kind == "gaussian":
        return EntryLaw("gaussian", kappa=2.0, nu4=3.0, is_complex=False)
    if kind == "complex_gaussian":
        return EntryLaw("complex_gaussian", kappa=1.0, nu4=2.0, is_complex=True)
    if kind == "rademacher":
        return EntryLaw("rademacher", kappa=2.0, nu4=1.0, is_complex=False)
    if kind == "two_point":
        p0 = float(params.get("p0", 0.5))
        if not 0.0 < p0 < 1.0:
            raise ValueError(f"two_point requires 0 < p0 < 1, got {p0}")
        nu4 = (1.0 - 3.0 * p0 + 3.0 * p0 * p0) / (p0 * (1.0 - p0))
        return EntryLaw("two_point", kappa=2.0, nu4=nu4, is_complex=False, params={"p0": p0})
    if kind == "student_t":
        df = float(params.get("df", 0.0))
        if df <= 5.0:
            raise ValueError(
                f"student_t requires df >= 6 so that the fifth absolute moment "
                f"E|x|^5 is finite; got df={df}"
            )
        nu4 = 3.0 * (df - 2.0) / (df - 4.0)
        return EntryLaw("student_t", kappa=2.0, nu4=nu4, is_complex=False, params={"df": df})
    raise ValueError(f"unknown entry law kind {kind!r}")


def law_moments(law: EntryLaw):
    """Return (kappa, nu4, fifth_ok) for a law."""
    return law.kappa, law.nu4, law.fifth_ok


@dataclass(frozen=True)
class CovModel:
    """Population covariance: the matrix, its PSD square root, and its ESD."""

    p: int
    sigma: np.ndarray
    sigma_sqrt: np.ndarray
    spectral_measure: SpectralMeasure
    label: str

    @property
    def is_null(self) -> bool:
        """True when the population is the identity (all eigenvalues 1)."""
        return self.spectral_measure.is_point_mass_at_one()

    @property
    def is_diagonal(self) -> bool:
        off = self.sigma - np.diag(np.diag(self.sigma))
        return not np.any(off)


def _check_hermitian(matrix: np.ndarray) -> np.ndarray:
    matrix = np.asarray(matrix)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValueError(f"covariance must be square, got shape {matrix.shape}")
    scale = max(1.0, float(np.linalg.norm(matrix)))
    asym = float(np.linalg.norm(matrix - matrix.conj().T))
    if asym > 1e-12 * scale:
        raise ValueError(f"covariance not Hermitian: asymmetry {asym:.3e} at scale {scale:.3e}")
    return 0.5 * (matrix + matrix.conj().T)


def make_population(kind: str, **params) -> CovModel:
    """Build a CovModel.

    Kinds: identity (p), diagonal (values), toeplitz (rho, p), explicit
    (matrix).  The square root comes from a Hermitian eigendecomposition with
    tiny negative eigenvalues (>= -1e-10 * ||Sigma||) clamped to zero.
    """
    if kind == "identity":
        p = int(params["p"])
        sigma = np.eye(p)
        label = f"identity({p})"
    elif kind == "diagonal":
        values = np.asarray(params["values"], dtype=float).ravel()
        if values.size == 0:
            raise ValueError("diagonal population needs at least one value")
        sigma = np.diag(values)
        label = f"diagonal(p={values.size})"
        p = values.size
    elif kind == "toeplitz":
        rho = float(params["rho"])
        p = int(params["p"])
        sigma = scipy.linalg.toeplitz(rho ** np.arange(p))
        label = f"toeplitz({rho},{p})"
    elif kind == "explicit":
        sigma = np.asarray(params["matrix"])
        p = sigma.shape[0]
        label = params.get("label", f"explicit(p={p})")
    else:
        raise ValueError(f"unknown population kind {kind!r}")

    sigma = _check_hermitian(sigma)
    p = sigma.shape[0]
    eigvals, eigvecs = np.linalg.eigh(sigma)
    scale = max(1.0, float(np.max(np.abs(eigvals))))
    if eigvals[0] < -1e-10 * scale:
        raise ValueError(f"covariance not PSD: min eigenvalue {eigvals[0]:.6e}")
    eigvals = np.clip(eigvals, 0.0, None)
    sqrt = (eigvecs * np.sqrt(eigvals)) @ eigvecs.conj().T
    if not np.iscomplexobj(sigma):
        sqrt = sqrt.real
    measure = SpectralMeasure.from_eigenvalues(eigvals)
    return CovModel(p=p, sigma=sigma, sigma_sqrt=sqrt, spectral_measure=measure, label=label)


def ladder_values(p: int, lo: float = 0.5, hi: float = 2.5) -> np.ndarray:
    """Evenly spaced diagonal entries, a simple non-null bounded population."""
    return np.linspace(lo, hi, p)


def sample_matrix(law: EntryLaw, p: int, n: int, seed: int, replicate_index: int) -> np.ndarray:
    """Draw the p-by-n data matrix for one replicate.

    The stream is keyed by (seed, replicate_index), so any subset of replicates
    can be generated in any order, on any number of workers, with identical
    results.
    """
    if p < 1 or n < 1:
        raise ValueError(f"need p, n >= 1, got p={p}, n={n}")
    if replicate_index < 0:
        raise ValueError("replicate_index must be nonnegative")
    rng = np.random.default_rng([int(seed), int(replicate_index)])
    return law.sample(rng, (p, n))


def audit_entry_law(law: EntryLaw, draws: int = 10**6, seed: int = 0) -> dict:
    """Empirical moment audit: mean, variance, E x^2 and nu4 against analytic
    targets with 5-standard-error bands.  Returns a dict with a "pass" bool.
    """
    rng = np.random.default_rng([int(seed), 0])
    x = law.sample(rng, draws)
    ax2 = np.abs(x) ** 2
    ax4 = ax2 * ax2

    mean = np.mean(x)
    var = float(np.mean(ax2))
    nu4_hat = float(np.mean(ax4))
    ex2 = np.mean(x * x)

    se_mean = float(np.std(np.real(x))) / math.sqrt(draws)
    se_var = float(np.std(ax2)) / math.sqrt(draws)
    se_nu4 = float(np.std(ax4)) / math.sqrt(draws)
    se_ex2 = float(np.std(np.real(x * x))) / math.sqrt(draws) + 1e-12

    # E x^2 = kappa - 1 links the symmetry index to the plain second moment.
    ex2_target = law.kappa - 1.0
    checks = {
        "mean_ok": abs(np.real(mean)) <= 5 * se_mean + 1e-12 and abs(np.imag(mean)) <= 5 * se_mean + 1e-12,
        "var_ok": abs(var - 1.0) <= 5 * se_var + 1e-12,
        "nu4_ok": abs(nu4_hat - law.nu4) <= 5 * se_nu4 + 1e-12,
        "ex2_ok": abs(np.real(ex2) - ex2_target) <= 5 * se_ex2 and abs(np.imag(ex2)) <= 5 * se_ex2,
    }
    report = {
        "law": law.kind,
        "draws": draws,
        "mean": complex(mean),
        "variance": var,
        "nu4_empirical": nu4_hat,
        "nu4_analytic": law.nu4,
        "ex2": complex(ex2),
        "ex2_target": ex2_target,
    }
    report.update(checks)
    report["pass"] = all(checks.values())
    return report
