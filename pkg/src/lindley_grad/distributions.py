"""Interarrival and service-time laws.

Two kinds of objects live here:

* ``ContinuousDistribution`` subclasses describe theta-free laws (the
  interarrival times and the later service times).  They expose density,
  density derivative, c.d.f. and quantile, plus capability flags that the
  scenario validator uses to decide which derivative orders are admissible.
* ``ServiceModel`` subclasses describe the law of the first service time
  ``S1(theta)`` together with its pathwise derivatives.

All sampling is by inverse c.d.f., so a path is a deterministic function of
its uniforms and of theta.  That is what makes common-random-number coupling
across different theta values well defined.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any, Callable, ClassVar

import numpy as np

from .errors import CapabilityError, DegenerateDensityError, SmoothnessError

# rng.random() yields k * 2**-53; shifting by half a step keeps draws in (0, 1).
_HALF_STEP = 2.0**-54


class RandomStream:
    """Single-owner source of uniforms on the open interval (0, 1)."""

    def __init__(self, seed: int | np.random.SeedSequence | None = None):
        if isinstance(seed, np.random.SeedSequence):
            self._seq = seed
        else:
            self._seq = np.random.SeedSequence(seed)
        self._rng = np.random.Generator(np.random.PCG64(self._seq))

    @classmethod
    def substream(cls, master_seed: int, index: int) -> "RandomStream":
        return cls(np.random.SeedSequence(int(master_seed), spawn_key=(int(index),)))

    def uniform(self) -> float:
        return float(self._rng.random()) + _HALF_STEP

    def uniforms(self, k: int) -> np.ndarray:
        return self._rng.random(k) + _HALF_STEP

    def spawn(self) -> "RandomStream":
        """Fork an independent deterministic child stream."""
        (child,) = self._seq.spawn(1)
        return RandomStream(child)


# ---------------------------------------------------------------------------
# theta-free laws
# ---------------------------------------------------------------------------


class ContinuousDistribution:
    family: ClassVar[str] = ""
    is_random: ClassVar[bool] = True
    has_density: ClassVar[bool] = True
    has_continuous_density_on_positive_line: ClassVar[bool] = False
    has_density_derivative: ClassVar[bool] = False

    def pdf(self, x):
        raise NotImplementedError

    def pdf_prime(self, x):
        raise CapabilityError(
            f"{self.family} law has no density derivative; third-derivative "
            "estimation requires a density continuous on the positive line (Assumption 4)"
        )

    def cdf(self, x):
        raise NotImplementedError

    def quantile(self, u):
        raise NotImplementedError

    @property
    def support(self) -> tuple[float, float]:
        raise NotImplementedError

    @property
    def mean(self) -> float:
        raise NotImplementedError

    def to_dict(self) -> dict[str, Any]:
        raise NotImplementedError


def _check_finite(**params: float) -> None:
    for name, value in params.items():
        if not isinstance(value, (int, float)) or isinstance(value, bool) or not math.isfinite(value):
            raise ValueError(f"{name} must be a finite real, got {value!r}")


@dataclass(frozen=True)
class Exponential(ContinuousDistribution):
    rate: float
    family: ClassVar[str] = "exponential"
    has_continuous_density_on_positive_line: ClassVar[bool] = True
    has_density_derivative: ClassVar[bool] = True

    def __post_init__(self):
        _check_finite(rate=self.rate)
        if self.rate <= 0:
            raise ValueError(f"exponential rate must be positive, got {self.rate}")

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.where(x >= 0, self.rate * np.exp(-self.rate * np.maximum(x, 0.0)), 0.0)
        return out[()] if out.ndim == 0 else out

    def pdf_prime(self, x):
        x = np.asarray(x, dtype=float)
        out = np.where(x >= 0, -self.rate**2 * np.exp(-self.rate * np.maximum(x, 0.0)), 0.0)
        return out[()] if out.ndim == 0 else out

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.where(x > 0, -np.expm1(-self.rate * np.maximum(x, 0.0)), 0.0)
        return out[()] if out.ndim == 0 else out

    def quantile(self, u):
        return -np.log1p(-np.asarray(u, dtype=float)) / self.rate

    @property
    def support(self):
        return (0.0, math.inf)

    @property
    def mean(self):
        return 1.0 / self.rate

    def to_dict(self):
        return {"family": self.family, "rate": self.rate}


class _UniformMixin:
    lower: float
    upper: float

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.where((x >= self.lower) & (x <= self.upper), 1.0 / (self.upper - self.lower), 0.0)
        return out[()] if out.ndim == 0 else out

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.clip((x - self.lower) / (self.upper - self.lower), 0.0, 1.0)
        return out[()] if out.ndim == 0 else out

    def quantile(self, u):
        return self.lower + (self.upper - self.lower) * np.asarray(u, dtype=float)

    @property
    def support(self):
        return (float(self.lower), float(self.upper))

    @property
    def mean(self):
        return 0.5 * (self.lower + self.upper)


@dataclass(frozen=True)
class Uniform(_UniformMixin, ContinuousDistribution):
    # A negative lower end is allowed for location-model noise; laws used
    # directly as times are checked for nonnegative support by the scenario.
    lower: float
    upper: float
    family: ClassVar[str] = "uniform"

    def __post_init__(self):
        _check_finite(lower=self.lower, upper=self.upper)
        if not self.upper > self.lower:
            raise ValueError(f"uniform needs upper > lower, got [{self.lower}, {self.upper}]")

    def to_dict(self):
        return {"family": self.family, "lower": self.lower, "upper": self.upper}


@dataclass(frozen=True)
class UniformLocation(_UniformMixin, ContinuousDistribution):
    """U(center - half_width, center + half_width) with half_width <= center."""

    center: float
    half_width: float
    family: ClassVar[str] = "uniform_location"

    def __post_init__(self):
        _check_finite(center=self.center, half_width=self.half_width)
        if self.half_width <= 0:
            raise ValueError("uniform_location half_width must be positive")
        if self.half_width > self.center:
            raise ValueError(
                f"uniform_location needs half_width <= center, got {self.half_width} > {self.center}"
            )

    @property
    def lower(self):
        return self.center - self.half_width

    @property
    def upper(self):
        return self.center + self.half_width

    def to_dict(self):
        return {"family": self.family, "center": self.center, "half_width": self.half_width}


@dataclass(frozen=True)
class Deterministic(ContinuousDistribution):
    value: float
    family: ClassVar[str] = "deterministic"
    is_random: ClassVar[bool] = False
    has_density: ClassVar[bool] = False

    def __post_init__(self):
        _check_finite(value=self.value)
        if self.value <= 0:
            raise ValueError(f"deterministic value must be positive, got {self.value}")

    def pdf(self, x):
        raise CapabilityError(
            "deterministic law has no density (Assumption 3(i))", code="ASSUMPTION_3"
        )

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.where(x >= self.value, 1.0, 0.0)
        return out[()] if out.ndim == 0 else out

    def quantile(self, u):
        if np.ndim(u) == 0:
            return float(self.value)
        return np.full(np.shape(u), float(self.value))

    @property
    def support(self):
        return (float(self.value), float(self.value))

    @property
    def mean(self):
        return float(self.value)

    def to_dict(self):
        return {"family": self.family, "value": self.value}


DISTRIBUTION_FAMILIES: dict[str, type[ContinuousDistribution]] = {
    cls.family: cls for cls in (Exponential, Uniform, UniformLocation, Deterministic)
}


def sample(dist: ContinuousDistribution, stream: RandomStream) -> float:
    """Draw once from ``dist``; constant laws consume no randomness."""
    if not dist.is_random:
        return float(dist.mean)
    return float(dist.quantile(stream.uniform()))


def pdf(dist: ContinuousDistribution, x):
    return dist.pdf(x)


def pdf_prime(dist: ContinuousDistribution, x):
    if not dist.has_density_derivative:
        return ContinuousDistribution.pdf_prime(dist, x)
    return dist.pdf_prime(x)


# ---------------------------------------------------------------------------
# first service time S1(theta)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SampleWithDerivatives:
    """A service draw and its pathwise theta-derivatives.

    Derivatives above the model's smoothness order are ``None``.
    Fields may be floats or equally shaped arrays.
    """

    s: Any
    d1: Any
    d2: Any = None
    d3: Any = None

    @classmethod
    def theta_free(cls, s) -> "SampleWithDerivatives":
        zero = np.zeros_like(s) if isinstance(s, np.ndarray) else 0.0
        return cls(s, zero, zero, zero)


@dataclass(frozen=True)
class ServiceModel:
    """Law of S1 as a transform of a theta-free base variable Z."""

    theta: float
    smoothness_order: int = 3
    family: ClassVar[str] = ""

    def __post_init__(self):
        _check_finite(theta=self.theta)
        if self.theta <= 0:
            raise ValueError(f"theta must be positive, got {self.theta}")
        if self.smoothness_order not in (1, 2, 3):
            raise ValueError(f"smoothness_order must be 1, 2 or 3, got {self.smoothness_order}")

    @property
    def base(self) -> ContinuousDistribution:
        raise NotImplementedError

    def transform(self, z, theta: float):
        raise NotImplementedError

    def inverse_transform(self, s, theta: float):
        raise NotImplementedError

    def _pathwise(self, s, z, theta: float):
        """Return (d1, d2, d3) before smoothness truncation."""
        raise NotImplementedError

    def cdf(self, x, theta: float):
        raise NotImplementedError

    def cdf_dtheta(self, x, theta: float):
        raise NotImplementedError

    def cdf_dx(self, x, theta: float):
        raise NotImplementedError

    def valid_theta(self, theta: float) -> bool:
        return math.isfinite(theta) and theta > 0

    def with_theta(self, theta: float) -> "ServiceModel":
        return replace(self, theta=theta)

    def sample_from_uniform(self, u, theta: float | None = None) -> SampleWithDerivatives:
        theta = self.theta if theta is None else theta
        z = self.base.quantile(u)
        s = self.transform(z, theta)
        d1, d2, d3 = self._pathwise(s, z, theta)
        if self.smoothness_order < 2:
            d2 = None
        if self.smoothness_order < 3:
            d3 = None
        return SampleWithDerivatives(s, d1, d2, d3)

    def to_dict(self) -> dict[str, Any]:
        raise NotImplementedError


def _const_like(x, c: float):
    return np.full(np.shape(x), c) if np.ndim(x) else c


@dataclass(frozen=True)
class LocationModel(ServiceModel):
    """S1 = theta + Z; the noise Z is typically centred at zero."""

    noise: ContinuousDistribution = field(default_factory=lambda: Uniform(-0.5, 0.5))
    family: ClassVar[str] = "location"

    def __post_init__(self):
        super().__post_init__()
        if not self.noise.has_density:
            raise ValueError("location noise must have a density")

    @property
    def base(self):
        return self.noise

    def transform(self, z, theta):
        return theta + z

    def inverse_transform(self, s, theta):
        return s - theta

    def _pathwise(self, s, z, theta):
        return _const_like(s, 1.0), _const_like(s, 0.0), _const_like(s, 0.0)

    def cdf(self, x, theta):
        return self.noise.cdf(np.asarray(x, dtype=float) - theta)

    def cdf_dtheta(self, x, theta):
        return -self.noise.pdf(np.asarray(x, dtype=float) - theta)

    def cdf_dx(self, x, theta):
        return self.noise.pdf(np.asarray(x, dtype=float) - theta)

    def valid_theta(self, theta):
        return super().valid_theta(theta) and theta + self.noise.support[0] >= 0

    def to_dict(self):
        return {
            "family": self.family,
            "theta": self.theta,
            "noise": self.noise.to_dict(),
            "smoothness_order": self.smoothness_order,
        }


@dataclass(frozen=True)
class ScaleModel(ServiceModel):
    """S1 = theta * Z with Z a nonnegative unit-parameter law."""

    base_law: ContinuousDistribution = field(default_factory=lambda: Exponential(1.0))
    family: ClassVar[str] = "scale"

    def __post_init__(self):
        super().__post_init__()
        if self.base_law.support[0] < 0:
            raise ValueError("scale base law must have nonnegative support")
        if not self.base_law.has_density:
            raise ValueError("scale base law must have a density")

    @property
    def base(self):
        return self.base_law

    def transform(self, z, theta):
        return theta * z

    def inverse_transform(self, s, theta):
        return s / theta

    def _pathwise(self, s, z, theta):
        return z, _const_like(s, 0.0), _const_like(s, 0.0)

    def cdf(self, x, theta):
        return self.base_law.cdf(np.asarray(x, dtype=float) / theta)

    def cdf_dtheta(self, x, theta):
        x = np.asarray(x, dtype=float)
        return -x / theta**2 * self.base_law.pdf(x / theta)

    def cdf_dx(self, x, theta):
        x = np.asarray(x, dtype=float)
        return self.base_law.pdf(x / theta) / theta

    def to_dict(self):
        return {
            "family": self.family,
            "theta": self.theta,
            "base": self.base_law.to_dict(),
            "smoothness_order": self.smoothness_order,
        }


_UNIT = Deterministic(1.0)


@dataclass(frozen=True)
class DeterministicThetaModel(ServiceModel):
    """S1 = theta exactly (the G/D*/1 setting)."""

    family: ClassVar[str] = "deterministic_theta"

    @property
    def base(self):
        return _UNIT

    def transform(self, z, theta):
        return theta * z

    def inverse_transform(self, s, theta):
        return s / theta

    def _pathwise(self, s, z, theta):
        return _const_like(s, 1.0), _const_like(s, 0.0), _const_like(s, 0.0)

    def to_dict(self):
        return {"family": self.family, "theta": self.theta, "smoothness_order": self.smoothness_order}


_UNIT_UNIFORM = Uniform(0.0, 1.0)


@dataclass(frozen=True)
class CustomModel(ServiceModel):
    """User-supplied law ``F(x; theta)``.

    ``quantile(u, theta)`` drives sampling.  The first pathwise derivative
    comes from the c.d.f. partials; higher ones must be supplied as
    ``d2(s, theta)`` / ``d3(s, theta)`` when ``smoothness_order`` asks for them.
    Not expressible in scenario files.
    """

    cdf_fn: Callable | None = None
    cdf_dtheta_fn: Callable | None = None
    cdf_dx_fn: Callable | None = None
    quantile_fn: Callable | None = None
    d2_fn: Callable | None = None
    d3_fn: Callable | None = None
    smoothness_order: int = 1
    family: ClassVar[str] = "custom"

    def __post_init__(self):
        super().__post_init__()
        if self.cdf_dtheta_fn is None or self.cdf_dx_fn is None:
            raise ValueError("custom model needs both c.d.f. partials")
        if self.smoothness_order >= 2 and self.d2_fn is None:
            raise ValueError("smoothness_order >= 2 requires d2")
        if self.smoothness_order >= 3 and self.d3_fn is None:
            raise ValueError("smoothness_order 3 requires d3")

    @property
    def base(self):
        return _UNIT_UNIFORM

    def transform(self, z, theta):
        if self.quantile_fn is None:
            raise ValueError("custom model has no quantile function; cannot sample")
        return self.quantile_fn(z, theta)

    def inverse_transform(self, s, theta):
        return self.cdf(s, theta)

    def _pathwise(self, s, z, theta):
        d1 = _lemma3(self, s, theta)
        d2 = self.d2_fn(s, theta) if self.d2_fn is not None else None
        d3 = self.d3_fn(s, theta) if self.d3_fn is not None else None
        return d1, d2, d3

    def cdf(self, x, theta):
        if self.cdf_fn is None:
            raise ValueError("custom model has no c.d.f.")
        return self.cdf_fn(x, theta)

    def cdf_dtheta(self, x, theta):
        return self.cdf_dtheta_fn(x, theta)

    def cdf_dx(self, x, theta):
        return self.cdf_dx_fn(x, theta)

    def to_dict(self):
        raise TypeError("custom service models cannot be serialized")


SERVICE_FAMILIES = {
    cls.family: cls for cls in (LocationModel, ScaleModel, DeterministicThetaModel, CustomModel)
}


def _lemma3(model: ServiceModel, s, theta: float):
    num = np.asarray(model.cdf_dtheta(s, theta), dtype=float)
    den = np.asarray(model.cdf_dx(s, theta), dtype=float)
    if np.any(den == 0):
        raise DegenerateDensityError(
            f"dF/dx vanishes at s={s!r}; the draw lies outside the effective support"
        )
    out = -num / den
    return out[()] if out.ndim == 0 else out


def lemma3_derivative(model: ServiceModel, s) -> float:
    """Pathwise derivative dS/dtheta = -(dF/dtheta) / (dF/dx) at x = s."""
    if isinstance(model, DeterministicThetaModel):
        return _const_like(s, 1.0)
    return _lemma3(model, s, model.theta)


def service_sample(model: ServiceModel, stream: RandomStream) -> SampleWithDerivatives:
    u = stream.uniform() if model.base.is_random else 0.5
    out = model.sample_from_uniform(u)
    return SampleWithDerivatives(
        *(None if v is None else float(v) for v in (out.s, out.d1, out.d2, out.d3))
    )


def require_order(sample_: SampleWithDerivatives, order: int) -> None:
    if order >= 2 and sample_.d2 is None:
        raise SmoothnessError(
            "second derivative of S1 unavailable: order 2 requires Assumption 2' (smoothness_order >= 2)",
            code="ASSUMPTION_2_PRIME",
        )
    if order >= 3 and sample_.d3 is None:
        raise SmoothnessError(
            "third derivative of S1 unavailable: order 3 requires Assumption 2'' (smoothness_order 3)",
            code="ASSUMPTION_2_DOUBLE_PRIME",
        )
