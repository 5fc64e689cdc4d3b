"""Fourier analysis on the torus [0,1)^d for real-valued fields.

Coefficients are stored on the standard FFT lattice (M bins per axis,
integer wavenumbers) normalized so that ``coeff[k] = integral u(x)
exp(-2*pi*i k.x) dx``.  Real fields therefore satisfy the Hermitian
symmetry ``coeff[-k] == conj(coeff[k])``.

Mode enumeration, serialization and basis ordering run over the symmetric
lattice |k_i| <= M/2; the two Nyquist signs share one FFT bin and are
split/folded with exact halves so that round trips are bit-exact.  Norms
are evaluated bin-wise (the folded Nyquist bin counts once, at its |k| =
M/2 weight), which keeps Parseval exact against the grid; dealiasing and
the priors never populate those bins, so the two conventions agree on
every field the solvers produce.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

FOUR_PI_SQUARED = 4.0 * np.pi ** 2
FOUR_PI = 4.0 * np.pi

_EIGENWEIGHTS = {"4pi2": FOUR_PI_SQUARED, "4pi": FOUR_PI}


class ConfigurationError(ValueError):
    """Invalid resolution, dimension or other construction parameter."""


class NumericsError(ArithmeticError):
    """NaN/Inf encountered where finite values are required."""


def eigenweight_constant(eigenweight: str = "4pi2") -> float:
    """Constant c in the Laplacian eigenvalue weight lambda = c*|k|^2.

    ``4pi2`` is the analytic eigenvalue of -Laplace for exp(-2*pi*i k.x);
    ``4pi`` reproduces the alternative normalization.  The choice rescales
    norms and prior variances, never orderings.
    """
    try:
        return _EIGENWEIGHTS[eigenweight]
    except KeyError:
        raise ConfigurationError(
            f"eigenweight must be one of {sorted(_EIGENWEIGHTS)}, got {eigenweight!r}"
        ) from None


def _check_resolution(dim: int, resolution: int) -> None:
    if dim not in (1, 2):
        raise ConfigurationError(f"dimension must be 1 or 2, got {dim}")
    if resolution < 4 or resolution % 2 != 0:
        raise ConfigurationError(
            f"resolution must be an even integer >= 4, got {resolution}"
        )


@lru_cache(maxsize=None)
def wavenumbers(resolution: int) -> np.ndarray:
    """Integer wavenumbers in FFT bin order: 0, 1, ..., M/2-1, -M/2, ..., -1."""
    k = np.fft.fftfreq(resolution, d=1.0 / resolution)
    k = np.round(k).astype(np.int64)
    k.flags.writeable = False
    return k


@lru_cache(maxsize=None)
def wavenumber_mesh(dim: int, resolution: int):
    """Tuple of integer wavenumber grids, one (M,)*dim array per axis."""
    _check_resolution(dim, resolution)
    k = wavenumbers(resolution)
    if dim == 1:
        grids = (k.copy(),)
    else:
        grids = tuple(np.meshgrid(k, k, indexing="ij"))
    for g in grids:
        g.flags.writeable = False
    return grids

@lru_cache(maxsize=None)
def ksq_mesh(dim: int, resolution: int) -> np.ndarray:
    """|k|^2 on the FFT lattice (float array)."""
    grids = wavenumber_mesh(dim, resolution)
    ksq = np.zeros((resolution,) * dim)
    for g in grids:
        ksq += g.astype(float) ** 2
    ksq.flags.writeable = False
    return ksq


@lru_cache(maxsize=None)
def dealias_mask(dim: int, resolution: int) -> np.ndarray:
    """2/3-rule mask: True where every |k_i| <= M/3."""
    grids = wavenumber_mesh(dim, resolution)
    mask = np.ones((resolution,) * dim, dtype=bool)
    for g in grids:
        mask &= np.abs(g) <= resolution / 3.0
    mask.flags.writeable = False
    return mask


@dataclass(frozen=True)
class ModeIndex:
    """One lattice mode: enumeration index j (1-based), wavenumber k, weight."""

    j: int
    k: tuple
    lam: float


def mode_sort_key(k) -> tuple:
    return (int(sum(c * c for c in k)), tuple(k))


def enumerate_modes(dim: int, resolution: int, eigenweight: str = "4pi2"):
    """All lattice points with |k_i| <= M/2, ordered by (|k|, lexicographic k).

    The enumeration is total and stable: j = 1 is the zero mode, ties in |k|
    break lexicographically on the components of k.
    """
    _check_resolution(dim, resolution)
    cw = eigenweight_constant(eigenweight)
    half = resolution // 2
    axes = range(-half, half + 1)
    if dim == 1:
        lattice = [(k,) for k in axes]
    else:
        lattice = [(k1, k2) for k1 in axes for k2 in axes]
    lattice.sort(key=mode_sort_key)
    return [
        ModeIndex(j=j, k=k, lam=cw * float(sum(c * c for c in k)))
        for j, k in enumerate(lattice, start=1)
    ]


@dataclass(frozen=True)
class TorusGrid:
    """Uniform physical lattice on [0,1)^d with spacing exactly 1/M."""

    dim: int
    resolution: int

    def __post_init__(self):
        _check_resolution(self.dim, self.resolution)

    @property
    def spacing(self) -> float:
        return 1.0 / self.resolution

    def axis(self) -> np.ndarray:
        return np.arange(self.resolution) / self.resolution

    def points(self) -> np.ndarray:
        """All grid points, shape (M^d, d)."""
        x = self.axis()
        if self.dim == 1:
            return x[:, None]
        xx, yy = np.meshgrid(x, x, indexing="ij")
        return np.stack([xx.ravel(), yy.ravel()], axis=1)


class SpectralField:
    """Truncated Fourier representation of a real field on the torus.

    coeffs has shape (M,)*dim for scalars and (2,) + (M,)*dim for planar
    vector fields, complex128, FFT bin order.  Instances are immutable.
    """

    __slots__ = ("dim", "resolution", "coeffs")

    def __init__(self, dim: int, resolution: int, coeffs: np.ndarray):
        _check_resolution(dim, resolution)
        coeffs = np.asarray(coeffs, dtype=np.complex128)
        spatial = (resolution,) * dim
        if coeffs.shape == spatial:
            pass
        elif coeffs.shape == (2,) + spatial:
            if dim != 2:
                raise ConfigurationError("vector fields require dim == 2")
        else:
            raise ConfigurationError(
                f"coefficient shape {coeffs.shape} does not match dim={dim}, M={resolution}"
            )
        coeffs = coeffs.copy()
        coeffs.flags.writeable = False
        object.__setattr__(self, "dim", dim)
        object.__setattr__(self, "resolution", resolution)
        object.__setattr__(self, "coeffs", coeffs)

    def __setattr__(self, name, value):
        raise AttributeError("SpectralField is immutable")

    def __reduce__(self):
        return (SpectralField, (self.dim, self.resolution,
                                np.asarray(self.coeffs)))

    @property
    def components(self) -> int:
        return 1 if self.coeffs.ndim == self.dim else 2

    def component_arrays(self):
        """Always a tuple of (M,)*dim arrays, length == components."""
        if self.components == 1:
            return (self.coeffs,)
        return (self.coeffs[0], self.coeffs[1])

    # -- construction -----------------------------------------------------

    @classmethod
    def from_physical(cls, values: np.ndarray, dim: int = None) -> "SpectralField":
        """Forward transform of real samples on the TorusGrid lattice."""
        values = np.asarray(values, dtype=float)
        if dim is None:
            dim = values.ndim if values.ndim <= 2 else 2
        spatial_ndim = values.ndim
        vector = False
        if dim == 2 and values.ndim == 3:
            vector = True
            spatial_ndim = 2
        if not vector and values.ndim != dim:
            raise ConfigurationError("sample array rank does not match dim")
        resolution = values.shape[-1]
        if any(s != resolution for s in values.shape[-spatial_ndim:]):
            raise ConfigurationError("physical samples must be square")
        norm = resolution ** dim
        if vector:
            coeffs = np.stack([np.fft.fftn(values[c]) / norm for c in range(2)])
        else:
            coeffs = np.fft.fftn(values) / norm
        return cls(dim, resolution, coeffs)

    @classmethod
    def zeros(cls, dim: int, resolution: int, components: int = 1) -> "SpectralField":
        shape = (resolution,) * dim if components == 1 else (2,) + (resolution,) * dim
        return cls(dim, resolution, np.zeros(shape, dtype=np.complex128))

    # -- transforms --------------------------------------------------------

    def to_physical(self) -> np.ndarray:
        """Inverse transform to real samples on the TorusGrid lattice."""
        norm = self.resolution ** self.dim
        if self.components == 1:
            return np.real(np.fft.ifftn(self.coeffs)) * norm
        return np.stack(
            [np.real(np.fft.ifftn(self.coeffs[c])) * norm for c in range(2)]
        )

    # -- algebra -----------------------------------------------------------

    def _like(self, coeffs) -> "SpectralField":
        return SpectralField(self.dim, self.resolution, coeffs)

    def __add__(self, other):
        self._check_compatible(other)
        return self._like(self.coeffs + other.coeffs)

    def __sub__(self, other):
        self._check_compatible(other)
        return self._like(self.coeffs - other.coeffs)

    def __mul__(self, scalar):
        return self._like(self.coeffs * float(scalar))

    __rmul__ = __mul__

    def _check_compatible(self, other):
        if (self.dim, self.resolution, self.components) != (
            other.dim,
            other.resolution,
            other.components,
        ):
            raise ConfigurationError("field layouts do not match")

    # -- diagnostics ---------------------------------------------------------

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.coeffs)))

    def hermitian_defect(self) -> float:
        """max |coeff(-k) - conj(coeff(k))| over the lattice."""
        defect = 0.0
        for comp in self.component_arrays():
            mirrored = _reverse_bins(comp)
            defect = max(defect, float(np.abs(mirrored - np.conj(comp)).max()))
        return defect

    def divergence_defect(self) -> float:
        """max_k |k . u_hat(k)|; requires a 2-component field."""
        if self.components != 2:
            raise ConfigurationError("divergence is defined for vector fields")
        kx, ky = wavenumber_mesh(2, self.resolution)
        div = kx * self.coeffs[0] + ky * self.coeffs[1]
        return float(np.abs(div).max())

    def mean_mode(self) -> np.ndarray:
        zero = (0,) * self.dim
        return np.array([comp[zero] for comp in self.component_arrays()])


def _reverse_bins(comp: np.ndarray) -> np.ndarray:
    """coeff array evaluated at -k (FFT bin index negation)."""
    rev = comp
    for ax in range(comp.ndim):
        rev = np.flip(np.roll(rev, -1, axis=ax), axis=ax)
    return rev


# ---------------------------------------------------------------------------
# norms
# ---------------------------------------------------------------------------

def sobolev_norm(field: SpectralField, s: float, flavor: str = "inhomogeneous",
                 eigenweight: str = "4pi2") -> float:
    """Spectral Sobolev norm.

    inhomogeneous: sqrt(sum (1+lambda_k)^s |coeff|^2); homogeneous: weight
    lambda_k^s with the zero mode excluded.  Vector components add in
    quadrature.
    """
    if not field.is_finite():
        raise NumericsError("field contains NaN/Inf coefficients")
    cw = eigenweight_constant(eigenweight)
    lam = cw * ksq_mesh(field.dim, field.resolution)
    if flavor in ("inhomogeneous", "h"):
        weights = (1.0 + lam) ** s
    elif flavor in ("homogeneous", "hdot"):
        zero = (0,) * field.dim
        if s < 0:
            for comp in field.component_arrays():
                if abs(comp[zero]) > 1e-13:
                    raise ConfigurationError(
                        "homogeneous norm with s < 0 requires a vanishing zero mode"
                    )
        weights = np.zeros_like(lam)
        nz = lam > 0
        weights[nz] = lam[nz] ** s
    else:
        raise ConfigurationError(f"unknown norm flavor {flavor!r}")
    total = 0.0
    for comp in field.component_arrays():
        total += float(np.sum(weights * np.abs(comp) ** 2))
    return float(np.sqrt(total))


def l2_norm(field: SpectralField) -> float:
    if not field.is_finite():
        raise NumericsError("field contains NaN/Inf coefficients")
    total = sum(float(np.sum(np.abs(c) ** 2)) for c in field.component_arrays())
    return float(np.sqrt(total))


def l2_inner(a: SpectralField, b: SpectralField) -> float:
    a._check_compatible(b)
    total = 0.0
    for ca, cb in zip(a.component_arrays(), b.component_arrays()):
        total += float(np.real(np.sum(ca * np.conj(cb))))
    return total


# ---------------------------------------------------------------------------
# operators
# ---------------------------------------------------------------------------

def dealias(field: SpectralField) -> SpectralField:
    """Zero every coefficient with any |k_i| > M/3 (idempotent)."""
    mask = dealias_mask(field.dim, field.resolution)
    if field.components == 1:
        coeffs = np.where(mask, field.coeffs, 0.0)
    else:
        coeffs = np.where(mask[None, :, :], field.coeffs, 0.0)
    return SpectralField(field.dim, field.resolution, coeffs)


@lru_cache(maxsize=None)
def _leray_arrays(resolution: int):
    kx, ky = wavenumber_mesh(2, resolution)
    kxf = kx.astype(float)
    kyf = ky.astype(float)
    ksq = kxf ** 2 + kyf ** 2
    inv = np.zeros_like(ksq)
    nz = ksq > 0
    inv[nz] = 1.0 / ksq[nz]
    for a in (kxf, kyf, inv):
        a.flags.writeable = False
    return kxf, kyf, inv


def leray_project(field: SpectralField) -> SpectralField:
    """L2-orthogonal projection onto divergence-free, zero-mean vector fields.

    Mode-wise u_hat -> (I - k k^T/|k|^2) u_hat, zero mode set to 0.
    """
    from . import _kernels

    if field.components != 2:
        raise ConfigurationError("Leray projection requires a 2-component field")
    kxf, kyf, inv = _leray_arrays(field.resolution)
    ox, oy = _kernels.leray_pair(field.coeffs[0], field.coeffs[1], kxf, kyf, inv)
    return SpectralField(2, field.resolution, np.stack([ox, oy]))


# ---------------------------------------------------------------------------
# serialization (enumeration-ordered, Nyquist bins split into exact halves)
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _enumeration_layout(dim: int, resolution: int):
    """Per-mode (bin index, half-weight) in enumeration order."""
    half = resolution // 2
    bins = []
    for mode in enumerate_modes(dim, resolution):
        idx = tuple(c % resolution for c in mode.k)
        nyq = sum(1 for c in mode.k if abs(c) == half)
        bins.append((idx, 0.5 ** nyq))
    return bins


def field_to_dict(field: SpectralField) -> dict:
    """JSON-ready dict {dim, resolution, components, coeffs} in enumeration order."""
    layout = _enumeration_layout(field.dim, field.resolution)
    rows = []
    for comp in field.component_arrays():
        for idx, w in layout:
            v = comp[idx] * w
            rows.append([float(v.real), float(v.imag)])
    return {
        "dim": field.dim,
        "resolution": field.resolution,
        "components": field.components,
        "coeffs": rows,
    }


def field_from_dict(payload: dict) -> SpectralField:
    dim = int(payload["dim"])
    resolution = int(payload["resolution"])
    components = int(payload["components"])
    layout = _enumeration_layout(dim, resolution)
    rows = payload["coeffs"]
    if len(rows) != components * len(layout):
        raise ConfigurationError("serialized coefficient count mismatch")
    spatial = (resolution,) * dim
    comps = []
    pos = 0
    for _ in range(components):
        arr = np.zeros(spatial, dtype=np.complex128)
        for idx, _w in layout:
            re, im = rows[pos]
            arr[idx] += complex(re, im)
            pos += 1
        comps.append(arr)
    coeffs = comps[0] if components == 1 else np.stack(comps)
    return SpectralField(dim, resolution, coeffs)
