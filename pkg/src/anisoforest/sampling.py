"""Seeded random generation for forest construction.

Provides hyperplane normals from anisotropic Gaussians and Gaussian
mixtures, uniform directions on the unit sphere, extension-level masking of
normals, and split intercepts.

Determinism contract: every stream is a PCG64 bit generator keyed by
(seed, stream_id) through numpy's SeedSequence; Gaussian variates come from
numpy's ``Generator.standard_normal`` (ziggurat method). Equal
(seed, stream_id) pairs therefore reproduce identical variate sequences on
every platform for a given numpy release line. Parallel consumers must use
distinct stream ids; a stream itself is single-owner.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, DegenerateNormal, DimensionMismatch, ValidationError
from .linalg import CholeskyFactor, SymMatrix, cholesky

# Pinned generator algorithm; see module docstring.
BIT_GENERATOR = "PCG64"
# Gaussian draws with norm below this are rejected when sampling directions.
NORM_EPS = 1e-12
# Degenerate-normal retries before a split aborts to a leaf.
MASK_RETRY_LIMIT = 16

WEIGHT_SUM_TOL = 1e-9


class RngStream:
    """Single-owner deterministic random stream.

    Identical (seed, stream_id) pairs produce identical variate sequences;
    distinct stream ids give statistically independent streams. Not safe to
    share across threads: each concurrent consumer owns its own stream.
    """

    __slots__ = ("seed", "stream_id", "_gen")

    def __init__(self, seed: int, stream_id: int = 0) -> None:
        seed = int(seed)
        stream_id = int(stream_id)
        if not 0 <= seed < 2**64:
            raise ValidationError(f"seed must be a 64-bit unsigned integer, got {seed}")
        if not 0 <= stream_id < 2**64:
            raise ValidationError(
                f"stream_id must be a 64-bit unsigned integer, got {stream_id}"
            )
        self.seed = seed
        self.stream_id = stream_id
        ss = np.random.SeedSequence(entropy=seed, spawn_key=(stream_id,))
        self._gen = np.random.Generator(np.random.PCG64(ss))

    def standard_normal(self, size=None):
        return self._gen.standard_normal(size)

    def random(self, size=None):
        return self._gen.random(size)

    def uniform(self, low, high, size=None):
        return self._gen.uniform(low, high, size)

    def choice(self, n: int, k: int) -> np.ndarray:
        """k distinct indices drawn uniformly from range(n)."""
        return self._gen.choice(n, size=k, replace=False)

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"


class GaussianSpec:
    """Zero-mean multivariate Gaussian N(0, A) for hyperplane normals.

    The covariance must be symmetric positive definite; its Cholesky factor
    is computed once at construction and cached for sampling.
    """

    __slots__ = ("cov", "chol")

    def __init__(self, cov: SymMatrix) -> None:
        self.cov = cov
        self.chol: CholeskyFactor = cholesky(cov)

    @property
    def dim(self) -> int:
        return self.cov.dim

    def sample(self, rng: RngStream) -> np.ndarray:
        """One draw L @ z with z a vector of independent standard normals."""
        return self.chol.lower @ rng.standard_normal(self.dim)

    def is_isotropic(self) -> bool:
        return bool(np.all(self.cov.array == np.eye(self.dim)))

    def __repr__(self) -> str:
        return f"GaussianSpec(dim={self.dim})"


def isotropic_gaussian(dim: int) -> GaussianSpec:
    """N(0, I): the classic extended-isolation-forest normal distribution."""
    return GaussianSpec(SymMatrix.identity(dim))


class MixtureSpec:
    """Weighted mixture of zero-mean Gaussians with a global scale.

    A draw picks component i with probability weights[i], then samples
    N(0, scale * cov_i). Weights must lie in (0, 1] and sum to 1 within
    1e-9; all components must share one dimension.
    """

    __slots__ = ("components", "scale", "_cum", "_sqrt_scale")

    def __init__(
        self,
        components: Sequence[tuple[float, GaussianSpec]],
        scale: float = 1.0,
    ) -> None:
        comps = tuple((float(w), spec) for w, spec in components)
        if not comps:
            raise ValidationError("mixture needs at least one component")
        for i, (w, spec) in enumerate(comps):
            if not 0.0 < w <= 1.0:
                raise ValidationError(f"component {i}: weight {w} not in (0, 1]")
            if spec.dim != comps[0][1].dim:
                raise DimensionMismatch(
                    f"component {i} has dimension {spec.dim}, expected {comps[0][1].dim}"
                )
        total = sum(w for w, _ in comps)
        if abs(total - 1.0) > WEIGHT_SUM_TOL:
            raise ValidationError(f"mixture weights sum to {total!r}, expected 1")
        scale = float(scale)
        if not scale > 0.0:
            raise ValidationError(f"scale must be positive, got {scale}")
        self.components = comps
        self.scale = scale
        self._cum = np.cumsum([w for w, _ in comps])
        self._sqrt_scale = float(np.sqrt(scale))

    @property
    def dim(self) -> int:
        return self.components[0][1].dim

    def pick_component(self, rng: RngStream) -> int:
        """Index of the component a draw would use (consumes one uniform)."""
        u = rng.random()
        idx = int(np.searchsorted(self._cum, u, side="right"))
        return min(idx, len(self.components) - 1)

    def sample(self, rng: RngStream) -> np.ndarray:
        i = self.pick_component(rng)
        return self._sqrt_scale * self.components[i][1].sample(rng)

    def __repr__(self) -> str:
        return f"MixtureSpec(p={len(self.components)}, dim={self.dim}, scale={self.scale})"


Distribution = GaussianSpec | MixtureSpec


@dataclass(frozen=True)
class ExtensionLevel:
    """Extension level k: split normals keep exactly k+1 nonzero components.

    ``k=None`` means full extension (k = d - 1), leaving normals untouched.
    """

    k: int | None = None

    def __post_init__(self) -> None:
        if self.k is not None and (not isinstance(self.k, int) or self.k < 0):
            raise ValidationError(f"extension level must be a non-negative int, got {self.k}")

    @classmethod
    def full(cls) -> ExtensionLevel:
        return cls(None)

    @property
    def is_full(self) -> bool:
        return self.k is None

    def effective_k(self, dim: int) -> int:
        return dim - 1 if self.k is None else self.k


FULL_EXTENSION = ExtensionLevel(None)


def sample_gaussian(spec: GaussianSpec, rng: RngStream) -> np.ndarray:
    """One normal vector from N(0, A)."""
    return spec.sample(rng)


def sample_mixture(spec: MixtureSpec, rng: RngStream) -> np.ndarray:
    """One normal vector from the scaled Gaussian mixture."""
    return spec.sample(rng)


def sample_sphere_uniform(dim: int, rng: RngStream) -> np.ndarray:
    """Uniform direction on the unit sphere in R^dim.

    A standard Gaussian draw normalized to unit length; draws with norm
    below 1e-12 are rejected and redrawn.
    """
    if dim < 1:
        raise ValidationError(f"dimension must be >= 1, got {dim}")
    while True:
        z = rng.standard_normal(dim)
        nrm = float(np.linalg.norm(z))
        if nrm >= NORM_EPS:
            return z / nrm


def apply_extension_mask(omega, level: ExtensionLevel, rng: RngStream) -> np.ndarray:
    """Zero d-k-1 components of omega, chosen uniformly without replacement.

    Surviving components are unchanged. Full extension returns omega as-is.
    Raises DegenerateNormal when every surviving component is zero (the
    caller redraws; see forest construction).
    """
    omega = np.asarray(omega, dtype=float)
    d = omega.shape[0]
    k = level.effective_k(d)
    if k > d - 1:
        raise DimensionMismatch(f"extension level k={k} exceeds d-1={d - 1}")
    n_zero = d - k - 1
    if n_zero == 0:
        if not omega.any():
            raise DegenerateNormal("normal vector is entirely zero")
        return omega
    out = omega.copy()
    out[rng.choice(d, n_zero)] = 0.0
    if not out.any():
        raise DegenerateNormal("all surviving components are zero after masking")
    return out


def sample_intercept(lo, hi, rng: RngStream) -> np.ndarray:
    """Componentwise uniform draw from the box [lo, hi].

    Degenerate components (lo[j] == hi[j]) return that value.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if lo.shape != hi.shape:
        raise DimensionMismatch(f"box corners have shapes {lo.shape} and {hi.shape}")
    if np.any(hi < lo):
        raise ValidationError("box has hi < lo in some component")
    return rng.uniform(lo, hi)


def extension_to_json(level: ExtensionLevel):
    return None if level.is_full else level.k


def extension_from_json(value) -> ExtensionLevel:
    if value is None or value == "full":
        return FULL_EXTENSION
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"extension must be an integer or \"full\", got {value!r}")
    return ExtensionLevel(value)


def distribution_to_dict(dist: Distribution) -> dict:
    """JSON-ready encoding of a distribution spec."""
    if isinstance(dist, GaussianSpec):
        return {"kind": "gaussian", "cov": dist.cov.array.tolist()}
    return {
        "kind": "mixture",
        "scale": dist.scale,
        "components": [
            {"weight": w, "cov": spec.cov.array.tolist()} for w, spec in dist.components
        ],
    }


def _cov_from_json(value, where: str) -> SymMatrix:
    if not isinstance(value, list):
        raise ConfigError(f"{where}: covariance must be a nested array of numbers")
    try:
        return SymMatrix(value)
    except ValidationError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def distribution_from_dict(data, where: str = "distribution") -> Distribution:
    """Parse a distribution spec, validating structure and definiteness."""
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    kind = data.get("kind")
    if kind == "gaussian":
        if "cov" not in data:
            raise ConfigError(f"{where}: gaussian requires a \"cov\" field")
        return GaussianSpec(_cov_from_json(data["cov"], f"{where}.cov"))
    if kind == "mixture":
        raw = data.get("components")
        if not isinstance(raw, list) or not raw:
            raise ConfigError(f"{where}.components: expected a non-empty array")
        comps = []
        for i, entry in enumerate(raw):
            loc = f"{where}.components[{i}]"
            if not isinstance(entry, dict) or "weight" not in entry or "cov" not in entry:
                raise ConfigError(f"{loc}: expected an object with weight and cov")
            if not isinstance(entry["weight"], (int, float)) or isinstance(entry["weight"], bool):
                raise ConfigError(f"{loc}.weight: expected a number")
            comps.append((float(entry["weight"]), GaussianSpec(_cov_from_json(entry["cov"], f"{loc}.cov"))))
        scale = data.get("scale", 1.0)
        if not isinstance(scale, (int, float)) or isinstance(scale, bool):
            raise ConfigError(f"{where}.scale: expected a number")
        try:
            return MixtureSpec(comps, scale=float(scale))
        except (ValidationError, DimensionMismatch) as exc:
            raise ConfigError(f"{where}: {exc}") from exc
    raise ConfigError(f"{where}.kind: expected \"gaussian\" or \"mixture\", got {kind!r}")
