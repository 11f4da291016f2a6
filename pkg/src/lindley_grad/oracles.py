"""Reference values of E[W_i](theta) and its theta-derivatives.

Two independent routes, neither of which touches sample paths:

* closed forms for W_2 when S1 = theta and A_1 is uniform or exponential;
* deterministic quadrature of E[W_i](theta), differentiated numerically.

The quadrature conditions backwards on the waits.  With E_i(w) = w and, for
2 <= k < i,

    E_k(w) = E_{S_k}[ J_k(w + S_k) ],
    J_k(v) = (1 - G_k(v)) E_{k+1}(0) + int_0^v E_{k+1}(v - a) g_k(a) da,

we have E[W_i] = E_{S_1}[ J_1(S_1) ].  The intermediate E_k are
theta-free, so they are built once as Chebyshev interpolants and only the
outer integral over S_1 is repeated at each stencil point.  Gauss-Legendre
panels are split wherever a support endpoint would put a kink inside a
panel.  Refinement doubles the node count until successive values agree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import Chebyshev
from numpy.polynomial.legendre import leggauss

from .distributions import (
    ContinuousDistribution,
    DeterministicThetaModel,
    Exponential,
    LocationModel,
    ScaleModel,
    ServiceModel,
)
from .errors import BoundaryError, ConvergenceError, UnsupportedScenarioError
from .scenario import Scenario

MAX_CUSTOMER = 4
_NODE_SCHEDULE = (16, 32, 64, 128)
_BLOCK = 1 << 21  # max elements materialised per inner evaluation


@dataclass(frozen=True)
class OracleResult:
    customer: int
    d1: float
    d2: float
    d3: float
    method: str  # closed_form | quadrature | quadrature_richardson
    error_bound: float
    value: float | None = None

    def derivative(self, order: int) -> float:
        return (self.d1, self.d2, self.d3)[order - 1]

    def as_reference(self, order: int = 3) -> dict[tuple[int, str], float]:
        return {(self.customer, f"d{k}"): self.derivative(k) for k in range(1, order + 1)}


# ---------------------------------------------------------------------------
# closed forms
# ---------------------------------------------------------------------------


def closed_form_w2(scenario: Scenario) -> OracleResult:
    """Exact derivatives of E[W_2] = E[(theta - A_1)^+] when S1 = theta."""
    model = scenario.service
    if not isinstance(model, DeterministicThetaModel):
        raise UnsupportedScenarioError("closed form needs a deterministic_theta service model")
    theta = model.theta
    g = scenario.arrival_law(1)
    if isinstance(g, Exponential):
        lam = g.rate
        e = math.exp(-lam * theta)
        return OracleResult(2, -math.expm1(-lam * theta), lam * e, -lam * lam * e, "closed_form", 0.0,
                            theta + math.expm1(-lam * theta) / lam)
    if g.family in ("uniform", "uniform_location"):
        lo, hi = g.support
        if not lo < theta < hi:
            raise UnsupportedScenarioError(
                f"closed form with uniform A_1 needs theta inside ({lo}, {hi}), got {theta}"
            )
        width = hi - lo
        return OracleResult(2, (theta - lo) / width, 1.0 / width, 0.0, "closed_form", 0.0,
                            (theta - lo) ** 2 / (2 * width))
    raise UnsupportedScenarioError(f"no closed form for arrival family '{g.family}'")


# ---------------------------------------------------------------------------
# quadrature helpers
# ---------------------------------------------------------------------------


@lru_cache(maxsize=None)
def _rule(n: int) -> tuple[np.ndarray, np.ndarray]:
    return leggauss(n)


def _truncated_support(dist: ContinuousDistribution, eps: float) -> tuple[float, float]:
    lo, hi = dist.support
    if math.isinf(hi):
        hi = -math.log(eps) / dist.rate  # exponential is the only unbounded family
    return lo, hi


def _tail_moment(dist: ContinuousDistribution, q: float) -> float:
    """E[X; X > q]."""
    if isinstance(dist, Exponential):
        return (q + 1.0 / dist.rate) * math.exp(-dist.rate * q)
    if q >= dist.support[1]:
        return 0.0
    raise UnsupportedScenarioError(f"no tail bound for family '{dist.family}'")


def _tail_mass(dist: ContinuousDistribution, q: float) -> float:
    return float(1.0 - dist.cdf(q)) if math.isfinite(dist.support[1]) else math.exp(-dist.rate * q)


def _panel_nodes(lo, hi, n: int):
    """Gauss-Legendre nodes/weights on [lo, hi] (arrays broadcast), trailing axis n."""
    x, w = _rule(n)
    lo = np.asarray(lo, dtype=float)[..., None]
    hi = np.asarray(hi, dtype=float)[..., None]
    half = 0.5 * (hi - lo)
    return lo + half * (x + 1.0), half * w


def _identity(x):
    return np.asarray(x, dtype=float)


def _conditional_wait(e_next, g: ContinuousDistribution, v: np.ndarray, n: int) -> np.ndarray:
    """E[e_next((v - A)^+)] for A ~ g, vectorised over v."""
    if not g.is_random:
        return e_next(np.maximum(v - g.mean, 0.0))
    g_lo, g_hi = g.support
    lower = np.full_like(v, max(g_lo, 0.0))
    upper = np.minimum(v, g_hi)
    upper = np.maximum(upper, lower)
    a, wa = _panel_nodes(lower, upper, n)
    cont = np.sum(e_next(v[..., None] - a) * g.pdf(a) * wa, axis=-1)
    e0 = float(e_next(np.zeros(1))[0])
    return cont + (1.0 - g.cdf(v)) * e0


def _split_panels(lo: float, hi: float, cuts) -> list[tuple[np.ndarray, np.ndarray]]:
    """Panels of [lo, hi] cut at the (array-valued) points in ``cuts``."""
    edges = [np.clip(c, lo, hi) for c in cuts]
    edges = sorted(edges, key=lambda e: float(np.mean(e)))
    bounds = [np.full_like(edges[0], lo) if edges else np.asarray(lo)] + edges
    bounds.append(np.full_like(bounds[0], hi))
    return [(bounds[k], bounds[k + 1]) for k in range(len(bounds) - 1)]


def _kink_points(g: ContinuousDistribution) -> list[float]:
    if not g.is_random:
        return [g.mean]
    return [b for b in g.support if math.isfinite(b) and b > 0]


class _Chain:
    """Conditional-expectation chain for customer ``i`` at ``n`` nodes per panel."""

    def __init__(self, scenario: Scenario, i: int, n: int, eps: float, theta_hi: float):
        self.scenario = scenario
        self.i = i
        self.n = n
        self.eps = eps
        model = scenario.service
        z_lo, z_hi = _truncated_support(model.base, eps)
        s1_hi = float(np.max(model.transform(np.array([z_lo, z_hi]), theta_hi)))
        service_ranges = {k: _truncated_support(scenario.service_law(k), eps) for k in range(2, i)}
        reach = s1_hi + sum(hi for _, hi in service_ranges.values())
        self.tail = _tail_only(scenario, i, eps, theta_hi)

        e_next = _identity
        w_max = reach
        for k in range(i - 1, 1, -1):
            w_max -= service_ranges[k][1]
            e_next = self._interpolate_level(k, e_next, service_ranges[k], max(w_max, 1e-12))
        self.e2 = e_next
        self.z_range = (z_lo, z_hi)

    def _interpolate_level(self, k, e_next, s_range, w_max):
        law = self.scenario.service_law(k)
        g = self.scenario.arrival_law(k)
        n = self.n

        def level(w):
            w = np.asarray(w, dtype=float)
            out = np.empty_like(w)
            per_w = n * n * (len(_kink_points(g)) + 1)
            step = max(1, _BLOCK // per_w)
            for start in range(0, w.size, step):
                wb = w[start:start + step]
                if not law.is_random:
                    out[start:start + step] = _conditional_wait(e_next, g, wb + law.mean, n)
                    continue
                total = np.zeros_like(wb)
                cuts = [b - wb for b in _kink_points(g)]
                for lo, hi in _split_panels(s_range[0], s_range[1], cuts):
                    s, ws = _panel_nodes(lo, hi, n)
                    vals = _conditional_wait(e_next, g, wb[:, None] + s, n)
                    total += np.sum(vals * law.pdf(s) * ws, axis=-1)
                out[start:start + step] = total
            return out

        return Chebyshev.interpolate(level, 2 * n, domain=[0.0, w_max])

    def value(self, theta: float) -> float:
        model = self.scenario.service
        g = self.scenario.arrival_law(1)
        base = model.base
        if not base.is_random:
            s = model.transform(np.array([base.mean]), theta)
            return float(_conditional_wait(self.e2, g, s, self.n)[0])
        z_lo, z_hi = self.z_range
        cuts = [np.atleast_1d(model.inverse_transform(b, theta)) for b in _kink_points(g)]
        total = 0.0
        for lo, hi in _split_panels(z_lo, z_hi, cuts):
            z, wz = _panel_nodes(lo, hi, self.n)
            s = model.transform(z, theta)
            total += float(np.sum(_conditional_wait(self.e2, g, s, self.n) * base.pdf(z) * wz))
        return total


def _check_depth(i: int) -> None:
    if not 1 <= i <= MAX_CUSTOMER:
        raise UnsupportedScenarioError(f"quadrature oracle supports customers 1..{MAX_CUSTOMER}, got {i}")


def _check_model(scenario: Scenario) -> None:
    if not isinstance(scenario.service, (LocationModel, ScaleModel, DeterministicThetaModel)):
        raise UnsupportedScenarioError("quadrature oracle supports location, scale and deterministic_theta models")
    # tail bounds are only available for bounded or exponential laws
    laws = [scenario.service.base] + [scenario.service_law(k) for k in range(2, MAX_CUSTOMER)]
    for law in laws:
        if math.isinf(law.support[1]) and not isinstance(law, Exponential):
            raise UnsupportedScenarioError(f"no tail bound for family '{law.family}'")


def _choose_eps(scenario: Scenario, i: int, theta: float, budget: float) -> float:
    eps = min(budget / 10.0, 1e-3)
    while eps > 1e-300:
        if _tail_only(scenario, i, eps, theta) <= budget:
            return eps
        eps /= 10.0
    return eps


def _tail_only(scenario: Scenario, i: int, eps: float, theta_hi: float) -> float:
    model = scenario.service
    z_lo, z_hi = _truncated_support(model.base, eps)
    reach = float(np.max(model.transform(np.array([z_lo, z_hi]), theta_hi)))
    parts = []
    for k in range(2, i):
        law = scenario.service_law(k)
        lo, hi = _truncated_support(law, eps)
        reach += hi
        parts.append((law, hi))
    tail = 0.0
    if model.base.is_random and math.isinf(model.base.support[1]):
        tail += theta_hi * _tail_moment(model.base, z_hi) + _tail_mass(model.base, z_hi) * reach
    for law, hi in parts:
        if law.is_random and math.isinf(law.support[1]):
            tail += _tail_moment(law, hi) + _tail_mass(law, hi) * reach
    return tail


def quadrature_expectation_with_error(scenario: Scenario, i: int, theta: float | None = None,
                                      tol: float = 1e-8) -> tuple[float, float]:
    theta = scenario.theta if theta is None else theta
    _check_depth(i)
    if i == 1:
        return 0.0, 0.0
    _check_model(scenario)
    eps = _choose_eps(scenario, i, theta, tol / 4)
    prev = None
    for n in _NODE_SCHEDULE:
        chain = _Chain(scenario, i, n, eps, theta)
        q = chain.value(theta)
        if prev is not None:
            err = abs(q - prev) + chain.tail
            if err <= tol:
                return q, err
        prev = q
    raise ConvergenceError(
        f"quadrature for E[W_{i}] did not reach tol={tol:g} within {_NODE_SCHEDULE[-1]} nodes per panel"
    )


def quadrature_expectation(scenario: Scenario, i: int, theta: float | None = None, tol: float = 1e-8) -> float:
    """E[W_i] at ``theta`` by nested quadrature, absolute error <= tol."""
    return quadrature_expectation_with_error(scenario, i, theta, tol)[0]


# central-difference weights on the grid theta + j*step, j = -2..2
_FD_WEIGHTS = {
    1: np.array([0.0, -0.5, 0.0, 0.5, 0.0]),
    2: np.array([0.0, 1.0, -2.0, 1.0, 0.0]),
    3: np.array([-0.5, 1.0, 0.0, -1.0, 0.5]),
}


def _richardson(values: dict[int, float], h: float, order: int) -> tuple[float, float]:
    """Two rounds of Richardson extrapolation of central differences.

    ``values`` maps j to E(theta + j*h/4) for j = -8..8.
    """
    diffs = []
    for level in (1, 2, 4):  # step h, h/2, h/4
        step = h / level
        stride = 4 // level
        f = np.array([values[j * stride] for j in range(-2, 3)])
        diffs.append(float(_FD_WEIGHTS[order] @ f) / step**order)
    r1 = (4 * diffs[1] - diffs[0]) / 3
    r2 = (4 * diffs[2] - diffs[1]) / 3
    rr = (16 * r2 - r1) / 15
    return rr, abs(rr - r2)


def quadrature_derivatives(scenario: Scenario, i: int, tol: float = 1e-6, h: float | None = None) -> OracleResult:
    """First three theta-derivatives of E[W_i] from quadrature values."""
    _check_depth(i)
    theta = scenario.theta
    h = 0.02 * theta if h is None else h
    model: ServiceModel = scenario.service
    for point in (theta - 2 * h, theta + 2 * h):
        if not model.valid_theta(point):
            raise BoundaryError(
                f"theta={theta} is within 2h={2 * h:g} of the parameter-region boundary of the "
                f"{model.family} model"
            )
    if i == 1:
        return OracleResult(1, 0.0, 0.0, 0.0, "closed_form", 0.0, 0.0)
    _check_model(scenario)

    eps = _choose_eps(scenario, i, theta + 2 * h, 1e-14)
    grid = range(-8, 9)
    prev = None
    for n in _NODE_SCHEDULE[1:]:
        chain = _Chain(scenario, i, n, eps, theta + 2 * h)
        values = {j: chain.value(theta + j * h / 4) for j in grid}
        est = [_richardson(values, h, k) for k in (1, 2, 3)]
        if prev is not None:
            disc = [abs(e[0] - p[0]) for e, p in zip(est, prev)]
            # rounding in E amplified by the h/4 stencil, the finest one used
            noise = 3.0 * (chain.tail + 1e-15 * max(1.0, abs(values[0]))) / (h / 4) ** 3
            bounds = [e[1] + d + noise for e, d in zip(est, disc)]
            bound = max(bounds)
            if bound <= tol:
                return OracleResult(i, est[0][0], est[1][0], est[2][0], "quadrature_richardson",
                                    bound, values[0])
        prev = est
    raise ConvergenceError(
        f"derivative oracle for customer {i} did not reach tol={tol:g} (last bound {bound:.3g})"
    )
