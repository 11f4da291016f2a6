"""Pathwise derivative estimators of E[W_i] with respect to theta.

Along one path, customer by customer:

* ``d1``      IPA first derivative, (W_i' + S_i') 1{W_i + S_i > A_i}.
* ``d2``      second derivative: the IPA term plus the density correction
              (W_i' + S_i')^2 g_i(W_i + S_i), added whether or not the
              indicator fires.
* ``d3``      third derivative with the corrections
              3 (W_i' + S_i')(W2_i + S_i'') g_i(.) + (W_i' + S_i')^3 g_i'(.).
* ``d2_naive``, ``d3_naive``  plain higher-order IPA (what automatic
              differentiation of the recursion yields), kept to show its bias.

Every indicator uses the strict comparison ``W_i + S_i > A_i``.  Only S1
depends on theta, so S_i^(n) = 0 for i >= 2.

The step functions accept floats or NumPy arrays; the batch runner feeds
them one column of R replications at a time.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np

from .distributions import ContinuousDistribution, RandomStream, SampleWithDerivatives, require_order
from .errors import CapabilityError, SmoothnessError
from .lindley import Path, PathInputs, draw_inputs, lindley_step, path_from_arrays, uniform_layout
from .scenario import Scenario, validate_scenario

KIND_ORDER = ("W", "d1", "d2", "d3", "d2_naive", "d3_naive")


def kinds_for_order(order: int) -> tuple[str, ...]:
    wanted = {1: {"W", "d1"}, 2: {"W", "d1", "d2", "d2_naive"}, 3: set(KIND_ORDER)}[order]
    return tuple(k for k in KIND_ORDER if k in wanted)


@dataclass(frozen=True)
class DerivativeState:
    d1: Any = 0.0
    d2: Any = 0.0
    d3: Any = 0.0
    d2_naive: Any = 0.0
    d3_naive: Any = 0.0
    order: int = 1


def _gate(x, indicator):
    out = np.where(indicator, x, 0.0)
    return out[()] if out.ndim == 0 else out


def ipa_step(d1, s_d1, indicator):
    return _gate(d1 + s_d1, indicator)


def second_step(state: DerivativeState, w, s: SampleWithDerivatives, a, g: ContinuousDistribution):
    if s.d2 is None:
        raise SmoothnessError(
            "S1'' unavailable: the second-derivative estimator requires Assumption 2'",
            code="ASSUMPTION_2_PRIME",
        )
    v = w + s.s
    return _gate(state.d2 + s.d2, v > a) + (state.d1 + s.d1) ** 2 * g.pdf(v)


def third_step(state: DerivativeState, w, s: SampleWithDerivatives, a, g: ContinuousDistribution):
    if not (g.has_continuous_density_on_positive_line and g.has_density_derivative):
        raise CapabilityError(
            f"the third-derivative estimator requires Assumption 4; arrival family '{g.family}' "
            "does not have a density continuous on the positive line"
        )
    if s.d3 is None or s.d2 is None:
        raise SmoothnessError(
            "S1''' unavailable: the third-derivative estimator requires Assumption 2''",
            code="ASSUMPTION_2_DOUBLE_PRIME",
        )
    v = w + s.s
    p = state.d1 + s.d1
    q = state.d2 + s.d2
    return _gate(state.d3 + s.d3, v > a) + 3.0 * p * q * g.pdf(v) + p**3 * g.pdf_prime(v)


def naive_ipa_higher_step(state: DerivativeState, s: SampleWithDerivatives, indicator):
    """Plain IPA second and third derivatives; ``None`` where S1^(n) is absent."""
    d2 = None if s.d2 is None else _gate(state.d2_naive + s.d2, indicator)
    d3 = None if s.d3 is None else _gate(state.d3_naive + s.d3, indicator)
    return d2, d3


def run_recursion(scenario: Scenario, inputs: PathInputs, order: int) -> dict[str, np.ndarray]:
    """All estimator trajectories for a batch of paths, arrays of shape (R, n)."""
    require_order(inputs.s1, order)
    reps, m = inputs.a.shape
    kinds = kinds_for_order(order)
    out = {k: np.zeros((reps, m + 1)) for k in kinds}
    zero = np.zeros(reps)
    state = DerivativeState(zero, zero, zero, zero, zero, order)
    w = zero
    for j in range(m):
        i = j + 1
        a = inputs.a[:, j]
        if i == 1:
            smp = inputs.s1
        else:
            smp = SampleWithDerivatives(inputs.s[:, j], zero, zero, zero)
        g = scenario.arrival_law(i)
        indicator = w + smp.s > a

        d1 = ipa_step(state.d1, smp.d1, indicator)
        d2 = d3 = d2n = d3n = zero
        if order >= 2:
            d2 = second_step(state, w, smp, a, g)
            d2n, d3n_ = naive_ipa_higher_step(state, smp, indicator)
            if order >= 3:
                d3 = third_step(state, w, smp, a, g)
                d3n = d3n_
        w = lindley_step(w, smp.s, a)
        state = DerivativeState(d1, d2, d3, d2n, d3n, order)
        out["W"][:, i] = w
        out["d1"][:, i] = d1
        if order >= 2:
            out["d2"][:, i] = d2
            out["d2_naive"][:, i] = d2n
        if order >= 3:
            out["d3"][:, i] = d3
            out["d3_naive"][:, i] = d3n
    return out


@dataclass(frozen=True)
class EstimatePath:
    path: Path
    scenario: Scenario
    order: int
    trajectories: dict[str, np.ndarray]

    @property
    def theta(self) -> float:
        return self.path.theta

    @property
    def w(self) -> np.ndarray:
        return self.trajectories["W"]

    def __len__(self):
        return len(self.path)

    def __getitem__(self, kind: str) -> np.ndarray:
        return self.trajectories[kind]

    @property
    def states(self) -> list[DerivativeState]:
        t = self.trajectories
        zeros = np.zeros(len(self.path))
        return [
            DerivativeState(
                float(t["d1"][k]),
                float(t.get("d2", zeros)[k]),
                float(t.get("d3", zeros)[k]),
                float(t.get("d2_naive", zeros)[k]),
                float(t.get("d3_naive", zeros)[k]),
                self.order,
            )
            for k in range(len(self.path))
        ]


def estimate_batch(scenario: Scenario, n_customers: int, order: int, uniforms: np.ndarray,
                   theta: float | None = None) -> dict[str, np.ndarray]:
    inputs = draw_inputs(scenario, n_customers, uniforms, theta)
    return run_recursion(scenario, inputs, order)


def estimate_path(scenario: Scenario, n_customers: int, order: int, stream: RandomStream) -> EstimatePath:
    # Capability and smoothness problems surface here, before any draw.
    validate_scenario(scenario.replace(n_customers=n_customers), order)
    k = len(uniform_layout(scenario, n_customers))
    inputs = draw_inputs(scenario, n_customers, stream.uniforms(k)[None, :])
    traj = run_recursion(scenario, inputs, order)
    path = path_from_arrays(inputs.a[0], inputs.s[0], traj["W"][0], inputs.theta)
    return EstimatePath(path, scenario, order, {k_: v[0].copy() for k_, v in traj.items()})
