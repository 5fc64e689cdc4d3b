"""Gaussian random-series priors on the torus and their RKHS geometry.

Two orthonormal bases are provided, both indexed in the lattice enumeration
order of :mod:`torusbayes.spectral` with the zero mode excluded (draws have
vanishing mean, the natural home of the homogeneous scales):

* ``torus_scalar`` — the real trigonometric system: the lattice point k
  carries sqrt(2)*cos(2 pi k.x) when its first nonzero component is
  positive and sqrt(2)*sin(2 pi (-k).x) otherwise, so the pair {k, -k}
  contributes one cosine and one sine of equal weight.
* ``stokes_divfree`` — divergence-free eigenfunctions of the Stokes
  operator on T^2, cos/sin pairs along the direction (k2, -k1)/|k|,
  enumerated over positive representatives (cosine first).

A draw is theta = sum_{j<=D} lambda_j^{-alpha/2} g_j e_j with g_j pulled
from a counter-based PRNG stream keyed by the seed, divided by
sqrt(rescale) when rescale > 0.
"""

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .spectral import (
    ConfigurationError,
    SpectralField,
    eigenweight_constant,
    enumerate_modes,
    l2_norm,
    sobolev_norm,
)

BASES = ("torus_scalar", "stokes_divfree")


@dataclass(frozen=True)
class StokesBasisElement:
    """Stokes eigenfunction: parity in {cos, sin}, direction prop. (k2, -k1)."""

    k: tuple
    parity: str
    direction: tuple


@dataclass(frozen=True)
class PriorSpec:
    """Gaussian series prior: smoothness alpha, sieve dimension, basis, rescale.

    rescale is the factor N*delta_N^2 of the rescaled prior; 0 means the
    unrescaled base prior.  alpha must exceed d/2 for almost-sure
    continuity of the draws.
    """

    alpha: float
    sieve_dim: int
    basis: str
    dim: int
    resolution: int
    rescale: float = 0.0
    eigenweight: str = "4pi2"

    def __post_init__(self):
        if self.basis not in BASES:
            raise ConfigurationError(f"basis must be one of {BASES}")
        if self.basis == "stokes_divfree" and self.dim != 2:
            raise ConfigurationError("stokes_divfree basis requires dim == 2")
        if self.alpha <= self.dim / 2:
            raise ConfigurationError(
                f"alpha must exceed d/2 = {self.dim / 2} for continuous draws"
            )
        if self.rescale < 0:
            raise ConfigurationError("rescale must be nonnegative")
        if self.sieve_dim < 1:
            raise ConfigurationError("sieve_dim must be positive")
        capacity = len(_basis_elements(self.dim, self.resolution, self.basis))
        if self.sieve_dim > capacity:
            raise ConfigurationError(
                f"sieve_dim {self.sieve_dim} exceeds the {capacity} modes "
                f"available at resolution {self.resolution}"
            )

    def with_rescale(self, rescale: float) -> "PriorSpec":
        return replace(self, rescale=rescale)


def _positive_rep(k) -> bool:
    for c in k:
        if c != 0:
            return c > 0
    return False


@lru_cache(maxsize=None)
def _basis_elements(dim: int, resolution: int, basis: str):
    """Ordered element descriptors (k, trig, direction or None)."""
    half = resolution // 2
    modes = [
        m for m in enumerate_modes(dim, resolution)
        if any(m.k) and all(abs(c) < half for c in m.k)
    ]
    elements = []
    if basis == "torus_scalar":
        for m in modes:
            if _positive_rep(m.k):
                elements.append((m.k, "cos", None))
            else:
                neg = tuple(-c for c in m.k)
                elements.append((m.k, "sin", neg))
    else:
        reps = [m for m in modes if _positive_rep(m.k)]
        for m in reps:
            k1, k2 = m.k
            norm = math.hypot(k1, k2)
            direction = (k2 / norm, -k1 / norm)
            elements.append((m.k, "cos", direction))
            elements.append((m.k, "sin", direction))
    return tuple(elements)


def stokes_basis(resolution: int, count: int):
    """First ``count`` Stokes eigenfunction descriptors (for inspection/tests)."""
    out = []
    for k, parity, direction in _basis_elements(2, resolution, "stokes_divfree")[:count]:
        out.append(StokesBasisElement(k=k, parity=parity, direction=direction))
    return out


class SieveBasis:
    """Finite orthonormal basis with coefficient <-> field conversion."""

    def __init__(self, spec: PriorSpec):
        self.spec = spec
        self.elements = _basis_elements(spec.dim, spec.resolution, spec.basis)[
            : spec.sieve_dim
        ]
        cw = eigenweight_constant(spec.eigenweight)
        self.lambdas = np.array(
            [cw * float(sum(c * c for c in k)) for k, _, _ in self.elements]
        )
        self.is_divfree = spec.basis == "stokes_divfree"

    @property
    def dim_coeff(self) -> int:
        return len(self.elements)

    def field_from_coeffs(self, coeffs: np.ndarray) -> SpectralField:
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != (self.dim_coeff,):
            raise ConfigurationError(
                f"expected {self.dim_coeff} coefficients, got shape {coeffs.shape}"
            )
        spec = self.spec
        M = spec.resolution
        spatial = (M,) * spec.dim
        inv_sqrt2 = 1.0 / math.sqrt(2.0)
        if not self.is_divfree:
            arr = np.zeros(spatial, dtype=np.complex128)
            for a, (k, trig, payload) in zip(coeffs, self.elements):
                if trig == "cos":
                    idx = tuple(c % M for c in k)
                    jdx = tuple((-c) % M for c in k)
                    arr[idx] += a * inv_sqrt2
                    arr[jdx] += a * inv_sqrt2
                else:
                    q = payload
                    idx = tuple(c % M for c in q)
                    jdx = tuple((-c) % M for c in q)
                    arr[idx] += -1j * a * inv_sqrt2
                    arr[jdx] += 1j * a * inv_sqrt2
            return SpectralField(spec.dim, M, arr)
        arr = np.zeros((2,) + spatial, dtype=np.complex128)
        for a, (k, trig, direction) in zip(coeffs, self.elements):
            idx = tuple(c % M for c in k)
            jdx = tuple((-c) % M for c in k)
            dx, dy = direction
            if trig == "cos":
                arr[0][idx] += a * dx * inv_sqrt2
                arr[1][idx] += a * dy * inv_sqrt2
                arr[0][jdx] += a * dx * inv_sqrt2
                arr[1][jdx] += a * dy * inv_sqrt2
            else:
                arr[0][idx] += -1j * a * dx * inv_sqrt2
                arr[1][idx] += -1j * a * dy * inv_sqrt2
                arr[0][jdx] += 1j * a * dx * inv_sqrt2
                arr[1][jdx] += 1j * a * dy * inv_sqrt2
        return SpectralField(2, M, arr)

    def coeffs_from_field(self, f: SpectralField) -> np.ndarray:
        spec = self.spec
        if f.dim != spec.dim or f.resolution != spec.resolution:
            raise ConfigurationError("field layout does not match the basis")
        if self.is_divfree and f.components != 2:
            raise ConfigurationError("stokes basis requires a 2-component field")
        if not self.is_divfree and f.components != 1:
            raise ConfigurationError("torus_scalar basis requires a scalar field")
        M = spec.resolution
        sqrt2 = math.sqrt(2.0)
        out = np.empty(self.dim_coeff)
        if not self.is_divfree:
            arr = f.coeffs
            for i, (k, trig, payload) in enumerate(self.elements):
                if trig == "cos":
                    idx = tuple(c % M for c in k)
                    out[i] = sqrt2 * arr[idx].real
                else:
                    idx = tuple(c % M for c in payload)
                    out[i] = -sqrt2 * arr[idx].imag
            return out
        for i, (k, trig, direction) in enumerate(self.elements):
            idx = tuple(c % M for c in k)
            dx, dy = direction
            proj = dx * f.coeffs[0][idx] + dy * f.coeffs[1][idx]
            out[i] = sqrt2 * proj.real if trig == "cos" else -sqrt2 * proj.imag
        return out

    def coefficient_std(self) -> np.ndarray:
        """Marginal std of each coefficient under the (rescaled) prior."""
        scale = self.lambdas ** (-self.spec.alpha / 2.0)
        if self.spec.rescale > 0:
            scale = scale / math.sqrt(self.spec.rescale)
        return scale


@lru_cache(maxsize=None)
def _basis_cache(spec: PriorSpec) -> SieveBasis:
    return SieveBasis(spec)


def get_basis(spec: PriorSpec) -> SieveBasis:
    return _basis_cache(spec)


def default_sieve_dim(dim: int, resolution: int, basis: str, alpha: float,
                      eigenweight: str = "4pi2") -> int:
    """Largest j with lambda_j^-alpha >= 1e-8 * lambda_1^-alpha, capped by M."""
    elements = _basis_elements(dim, resolution, basis)
    cw = eigenweight_constant(eigenweight)
    lams = np.array([cw * float(sum(c * c for c in k)) for k, _, _ in elements])
    keep = (lams / lams[0]) ** (-alpha) >= 1e-8
    last = int(np.nonzero(keep)[0][-1]) + 1 if keep.any() else 1
    return min(last, len(elements))


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

def prior_stream(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based PRNG (Philox) keyed by (seed, stream)."""
    return np.random.Generator(np.random.Philox(key=[int(seed), int(stream)]))


def sample_prior_coeffs(spec: PriorSpec, seed: int) -> np.ndarray:
    """Coefficient vector of one draw; position j is keyed by (seed, j)."""
    basis = get_basis(spec)
    g = prior_stream(seed).standard_normal(basis.dim_coeff)
    return basis.coefficient_std() * g


def sample_prior(spec: PriorSpec, seed: int) -> SpectralField:
    basis = get_basis(spec)
    return basis.field_from_coeffs(sample_prior_coeffs(spec, seed))


# ---------------------------------------------------------------------------
# RKHS norm and rates
# ---------------------------------------------------------------------------

def rkhs_norm(theta: SpectralField, spec: PriorSpec) -> float:
    """RKHS norm sqrt(sum lambda_j^alpha <theta, e_j>^2), times sqrt(rescale).

    Returns inf when theta carries mass outside the sieve span (relative
    L2 residual above 1e-10); stokes bases reject non-divergence-free
    fields the same way.
    """
    basis = get_basis(spec)
    coeffs = basis.coeffs_from_field(theta)
    recon = basis.field_from_coeffs(coeffs)
    scale = max(1.0, l2_norm(theta))
    if l2_norm(theta - recon) > 1e-10 * scale:
        return math.inf
    factor = spec.rescale if spec.rescale > 0 else 1.0
    return float(math.sqrt(factor * np.sum(basis.lambdas ** spec.alpha * coeffs ** 2)))


def rkhs_norm_coeffs(coeffs: np.ndarray, basis: SieveBasis) -> float:
    spec = basis.spec
    factor = spec.rescale if spec.rescale > 0 else 1.0
    return float(math.sqrt(factor * np.sum(basis.lambdas ** spec.alpha * coeffs ** 2)))


def contraction_rate(alpha: float, kappa: float, d: int, n_obs: int) -> float:
    """delta_N = N^(-(alpha+kappa)/(2 alpha + 2 kappa + d))."""
    if alpha <= 0 or n_obs <= 0:
        raise ConfigurationError("alpha and N must be positive")
    if kappa < 0:
        raise ConfigurationError("kappa must be nonnegative")
    return float(n_obs ** (-(alpha + kappa) / (2 * alpha + 2 * kappa + d)))


# ---------------------------------------------------------------------------
# tail diagnostics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TailProbe:
    radius: float
    exceedance: float
    std_error: float
    samples: int
    norm_order: float
    reference_bound: float = field(default=float("nan"))


def prior_tail_probe(spec: PriorSpec, norm_order: float, radius: float,
                     samples: int, seed: int, c_ref: float = None) -> TailProbe:
    """Monte-Carlo estimate of Pi(||theta||_{H^beta} > radius).

    Reports a binomial standard error and, when ``c_ref`` is supplied, the
    reference tail bound exp(-c_ref * radius^2 * max(rescale, 1)).
    """
    if samples < 100:
        raise ConfigurationError("tail probe needs at least 100 samples")
    exceed = 0
    for i in range(samples):
        theta = sample_prior(spec, seed=int(seed) + i)
        if sobolev_norm(theta, norm_order, "inhomogeneous", spec.eigenweight) > radius:
            exceed += 1
    p = exceed / samples
    se = math.sqrt(max(p * (1 - p), 1.0 / samples) / samples)
    ref = float("nan")
    if c_ref is not None:
        ref = math.exp(-c_ref * radius ** 2 * max(spec.rescale, 1.0))
    return TailProbe(radius, p, se, samples, norm_order, ref)
