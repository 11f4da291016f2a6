"""Experiment configuration: the queue's input laws plus run options.

Scenario files are JSON::

    {
      "schema_version": 1,
      "name": "mg1",
      "service": {"family": "scale", "theta": 0.8,
                  "base": {"family": "exponential", "rate": 1.0}},
      "later_service": {"family": "exponential", "rate": 2.0},
      "later_service_overrides": {"3": {"family": "deterministic", "value": 0.5}},
      "arrival": {"family": "exponential", "rate": 1.0},
      "n_customers": 4, "order": 3, "replications": 100000, "seed": 7,
      "fd_h": [0.008], "alpha": 0.01, "z_threshold": 3.5
    }

``arrival`` may also be a list ``[g1, g2, ...]``; customers past the end of
the list reuse its last entry.  Service families are ``location`` (with a
``noise`` law), ``scale`` (with a ``base`` law) and ``deterministic_theta``.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any

from .distributions import (
    DISTRIBUTION_FAMILIES,
    ContinuousDistribution,
    CustomModel,
    DeterministicThetaModel,
    LocationModel,
    ScaleModel,
    ServiceModel,
)
from .errors import CapabilityError, Issue, ParseError, SmoothnessError, ValidationError

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class Scenario:
    service: ServiceModel
    later_service: ContinuousDistribution
    arrival: tuple[ContinuousDistribution, ...]
    n_customers: int = 10
    order: int = 1
    replications: int = 1000
    seed: int = 0
    later_service_overrides: tuple[tuple[int, ContinuousDistribution], ...] = ()
    fd_h: tuple[float, ...] | None = None
    alpha: float = 0.01
    z_threshold: float = 3.5
    name: str = ""

    def __post_init__(self):
        if isinstance(self.arrival, ContinuousDistribution):
            object.__setattr__(self, "arrival", (self.arrival,))
        else:
            object.__setattr__(self, "arrival", tuple(self.arrival))
        if isinstance(self.later_service_overrides, dict):
            object.__setattr__(
                self, "later_service_overrides", tuple(sorted(self.later_service_overrides.items()))
            )

    @property
    def theta(self) -> float:
        return self.service.theta

    def arrival_law(self, i: int) -> ContinuousDistribution:
        """Law of A_i, the time between arrivals i and i + 1."""
        return self.arrival[min(i, len(self.arrival)) - 1]

    def service_law(self, i: int) -> ContinuousDistribution:
        """Law of S_i for i >= 2."""
        for k, dist in self.later_service_overrides:
            if k == i:
                return dist
        return self.later_service

    def with_theta(self, theta: float) -> "Scenario":
        return replace(self, service=self.service.with_theta(theta))

    def replace(self, **changes) -> "Scenario":
        return replace(self, **changes)

    @property
    def deterministic_service(self) -> bool:
        """True when some service time is constant (outside Assumption 3 but still treated as in scope)."""
        laws = [self.later_service] + [d for _, d in self.later_service_overrides]
        return isinstance(self.service, DeterministicThetaModel) or any(not d.is_random for d in laws)

    def digest(self) -> str:
        try:
            payload = json.dumps(scenario_to_dict(self), sort_keys=True)
        except TypeError:
            payload = repr(self)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

_ISSUE_CLASS = {
    "ASSUMPTION_2_PRIME": SmoothnessError,
    "ASSUMPTION_2_DOUBLE_PRIME": SmoothnessError,
    "ASSUMPTION_4": CapabilityError,
}


def scenario_issues(scenario: Scenario, order: int | None = None) -> list[Issue]:
    order = scenario.order if order is None else order
    issues: list[Issue] = []
    n = scenario.n_customers

    if not isinstance(n, int) or n < 1:
        issues.append(Issue("HORIZON", f"n_customers must be a positive integer, got {n!r}"))
        n = 1
    if order not in (1, 2, 3):
        issues.append(Issue("ORDER", f"order must be 1, 2 or 3, got {order!r}"))
    if not isinstance(scenario.replications, int) or scenario.replications < 2:
        issues.append(Issue("REPLICATIONS", f"replications must be >= 2, got {scenario.replications!r}"))
    if not isinstance(scenario.seed, int) or not 0 <= scenario.seed < 2**64:
        issues.append(Issue("SEED", f"seed must be an unsigned 64-bit integer, got {scenario.seed!r}"))
    if not 0 < scenario.alpha < 1:
        issues.append(Issue("PARAMETER", f"alpha must lie in (0, 1), got {scenario.alpha}"))
    if not scenario.z_threshold > 0:
        issues.append(Issue("PARAMETER", f"z_threshold must be positive, got {scenario.z_threshold}"))
    if scenario.fd_h is not None and any(not (h > 0 and math.isfinite(h)) for h in scenario.fd_h):
        issues.append(Issue("PARAMETER", f"fd_h entries must be positive, got {list(scenario.fd_h)}"))

    model = scenario.service
    if not model.valid_theta(model.theta):
        issues.append(
            Issue("PARAMETER", f"theta={model.theta} puts the first service time outside (0, inf) "
                  "(a location model needs half-width <= theta)")
        )
    if order >= 2 and model.smoothness_order < 2:
        issues.append(
            Issue("ASSUMPTION_2_PRIME", f"order {order} requires Assumption 2' (S1 twice "
                  f"differentiable in theta); service smoothness_order is {model.smoothness_order}")
        )
    elif order >= 3 and model.smoothness_order < 3:
        issues.append(
            Issue("ASSUMPTION_2_DOUBLE_PRIME", "order 3 requires Assumption 2'' (S1 thrice "
                  f"differentiable in theta); service smoothness_order is {model.smoothness_order}")
        )

    later = [(i, scenario.service_law(i)) for i in range(2, max(n, 2))]
    for i, dist in later or [(2, scenario.later_service)]:
        if dist.support[0] < 0:
            issues.append(Issue("PARAMETER", f"service law of customer {i} ({dist.family}) has negative support"))

    seen: set[int] = set()
    for i in range(1, max(n, 2)):
        dist = scenario.arrival_law(i)
        if id(dist) in seen:
            continue
        seen.add(id(dist))
        if dist.support[0] < 0:
            issues.append(Issue("PARAMETER", f"arrival law {i} ({dist.family}) has negative support"))
        if order >= 2 and not dist.has_density:
            issues.append(
                Issue("ASSUMPTION_3", f"order {order} needs interarrival densities (Assumption 3(i)); "
                      f"arrival family '{dist.family}' at index {i} has none")
            )
        elif order >= 3 and not (dist.has_continuous_density_on_positive_line and dist.has_density_derivative):
            issues.append(
                Issue("ASSUMPTION_4", f"order 3 requires Assumption 4; arrival family '{dist.family}' "
                      f"at index {i} fails (density not continuous on the positive line)")
            )
    return issues


def validate_scenario(scenario: Scenario, order: int | None = None) -> Scenario:
    """Raise on any violated assumption, reporting every issue at once."""
    issues = scenario_issues(scenario, order)
    if not issues:
        return scenario
    classes = {_ISSUE_CLASS.get(issue.code, ValidationError) for issue in issues}
    cls = classes.pop() if len(classes) == 1 else ValidationError
    message = "; ".join(f"[{issue.code}] {issue.message}" for issue in issues)
    raise cls(message, code=issues[0].code, issues=issues)


# ---------------------------------------------------------------------------
# (de)serialization
# ---------------------------------------------------------------------------

_TOP_KEYS = {
    "schema_version", "name", "service", "later_service", "later_service_overrides", "arrival",
    "n_customers", "order", "replications", "seed", "fd_h", "alpha", "z_threshold",
}


def _expect(obj: dict, key: str, kind, where: str):
    if key not in obj:
        raise ParseError(f"{where}: missing key '{key}'")
    value = obj[key]
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ParseError(f"{where}.{key}: expected a number, got {value!r}")
        return float(value)
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ParseError(f"{where}.{key}: expected an integer, got {value!r}")
        return value
    if not isinstance(value, kind):
        raise ParseError(f"{where}.{key}: expected {kind.__name__}, got {value!r}")
    return value


def distribution_from_dict(d: Any, where: str = "distribution") -> ContinuousDistribution:
    if not isinstance(d, dict):
        raise ParseError(f"{where}: expected an object, got {d!r}")
    family = d.get("family")
    cls = DISTRIBUTION_FAMILIES.get(family)
    if cls is None:
        raise ParseError(f"{where}: unknown family {family!r}; expected one of {sorted(DISTRIBUTION_FAMILIES)}")
    params = {
        "exponential": ("rate",),
        "uniform": ("lower", "upper"),
        "uniform_location": ("center", "half_width"),
        "deterministic": ("value",),
    }[family]
    extra = set(d) - set(params) - {"family"}
    if extra:
        raise ParseError(f"{where}: unexpected keys {sorted(extra)} for family '{family}'")
    values = {p: _expect(d, p, float, where) for p in params}
    try:
        return cls(**values)
    except ValueError as exc:
        raise ValidationError(f"{where}: {exc}", code="PARAMETER") from exc


def service_from_dict(d: Any, where: str = "service") -> ServiceModel:
    if not isinstance(d, dict):
        raise ParseError(f"{where}: expected an object, got {d!r}")
    family = d.get("family")
    allowed = {"family", "theta", "smoothness_order"}
    theta = _expect(d, "theta", float, where)
    smooth = _expect(d, "smoothness_order", int, where) if "smoothness_order" in d else 3
    try:
        if family == "location":
            allowed.add("noise")
            model = LocationModel(theta, smooth, noise=distribution_from_dict(d.get("noise"), f"{where}.noise"))
        elif family == "scale":
            allowed.add("base")
            model = ScaleModel(theta, smooth, base_law=distribution_from_dict(d.get("base"), f"{where}.base"))
        elif family == "deterministic_theta":
            model = DeterministicThetaModel(theta, smooth)
        elif family == "custom":
            raise ParseError(f"{where}: custom service models are programmatic only")
        else:
            raise ParseError(
                f"{where}: unknown family {family!r}; expected location, scale or deterministic_theta"
            )
    except ValueError as exc:
        raise ValidationError(f"{where}: {exc}", code="PARAMETER") from exc
    extra = set(d) - allowed
    if extra:
        raise ParseError(f"{where}: unexpected keys {sorted(extra)}")
    return model


def scenario_from_dict(d: Any) -> Scenario:
    if not isinstance(d, dict):
        raise ParseError("scenario: top level must be an object")
    extra = set(d) - _TOP_KEYS
    if extra:
        raise ParseError(f"scenario: unexpected keys {sorted(extra)}")
    version = d.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ParseError(f"scenario: unsupported schema_version {version!r}")

    service = service_from_dict(d.get("service"))
    later = distribution_from_dict(d.get("later_service"), "later_service")
    raw_arrival = d.get("arrival")
    if isinstance(raw_arrival, list):
        if not raw_arrival:
            raise ParseError("arrival: list must not be empty")
        arrival = tuple(distribution_from_dict(a, f"arrival[{k}]") for k, a in enumerate(raw_arrival))
    else:
        arrival = (distribution_from_dict(raw_arrival, "arrival"),)

    overrides = []
    raw_over = d.get("later_service_overrides", {})
    if not isinstance(raw_over, dict):
        raise ParseError("later_service_overrides: expected an object keyed by customer index")
    for key, value in raw_over.items():
        try:
            idx = int(key)
        except ValueError as exc:
            raise ParseError(f"later_service_overrides: key {key!r} is not an integer") from exc
        if idx < 2:
            raise ParseError(f"later_service_overrides: index {idx} < 2 (customer 1 is the theta model)")
        overrides.append((idx, distribution_from_dict(value, f"later_service_overrides[{key}]")))

    fd_h = None
    if d.get("fd_h") is not None:
        raw_h = d["fd_h"]
        if not isinstance(raw_h, list) or not all(
            isinstance(h, (int, float)) and not isinstance(h, bool) for h in raw_h
        ):
            raise ParseError("fd_h: expected a list of numbers")
        fd_h = tuple(float(h) for h in raw_h)

    kwargs: dict[str, Any] = {}
    for key, kind in (("n_customers", int), ("order", int), ("replications", int), ("seed", int),
                      ("alpha", float), ("z_threshold", float)):
        if key in d:
            kwargs[key] = _expect(d, key, kind, "scenario")
    name = d.get("name", "")
    if not isinstance(name, str):
        raise ParseError("scenario.name: expected a string")

    return Scenario(
        service=service,
        later_service=later,
        arrival=arrival,
        later_service_overrides=tuple(sorted(overrides)),
        fd_h=fd_h,
        name=name,
        **kwargs,
    )


def scenario_to_dict(scenario: Scenario) -> dict[str, Any]:
    if isinstance(scenario.service, CustomModel):
        raise TypeError("custom service models cannot be serialized")
    arrival: Any = [a.to_dict() for a in scenario.arrival]
    if len(arrival) == 1:
        arrival = arrival[0]
    out: dict[str, Any] = {
        "schema_version": SCHEMA_VERSION,
        "name": scenario.name,
        "service": scenario.service.to_dict(),
        "later_service": scenario.later_service.to_dict(),
        "arrival": arrival,
        "n_customers": scenario.n_customers,
        "order": scenario.order,
        "replications": scenario.replications,
        "seed": scenario.seed,
        "alpha": scenario.alpha,
        "z_threshold": scenario.z_threshold,
    }
    if scenario.later_service_overrides:
        out["later_service_overrides"] = {str(i): dist.to_dict() for i, dist in scenario.later_service_overrides}
    if scenario.fd_h is not None:
        out["fd_h"] = list(scenario.fd_h)
    return out


def load_scenario(path: str | Path, validate: bool = True) -> Scenario:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ParseError(f"cannot read scenario file {path}: {exc.strerror or exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: malformed JSON ({exc.msg} at line {exc.lineno})") from exc
    scenario = scenario_from_dict(raw)
    return validate_scenario(scenario) if validate else scenario


parse_scenario = load_scenario
