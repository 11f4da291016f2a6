"""Sample paths of the FCFS single-server queue via the Lindley recursion.

Uniform layout: for customer i = 1 .. n-1 the path consumes one uniform for
A_i and then one for S_i, skipping laws that are constant.  The same layout
is used for a single path and for a batch of replications, so a batch row is
bit-identical to the path drawn from the same stream.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .distributions import RandomStream, SampleWithDerivatives
from .scenario import Scenario


@dataclass(frozen=True)
class PathRecord:
    i: int
    a: float | None  # A_i; None for the last customer of the horizon
    s: float | None  # S_i
    w: float
    busy_period: int


@dataclass(frozen=True)
class Path:
    records: tuple[PathRecord, ...]
    theta: float

    def __len__(self):
        return len(self.records)

    @property
    def waits(self) -> np.ndarray:
        return np.array([r.w for r in self.records])


class BusyPeriodEnd(NamedTuple):
    index: int
    open_ended: bool


@dataclass(frozen=True)
class PathInputs:
    """Raw draws for R replications: arrays of shape (R, n-1)."""

    a: np.ndarray
    s: np.ndarray
    s1: SampleWithDerivatives
    theta: float

    @property
    def n_customers(self) -> int:
        return self.a.shape[1] + 1


def lindley_step(w, s, a):
    """Next wait (w + s - a)^+; a tie w + s == a gives exactly 0."""
    v = w + s
    return np.where(v > a, v - a, 0.0) if isinstance(v, np.ndarray) else (v - a if v > a else 0.0)


def uniform_layout(scenario: Scenario, n_customers: int) -> list[tuple[str, int]]:
    layout = []
    for i in range(1, n_customers):
        if scenario.arrival_law(i).is_random:
            layout.append(("A", i))
        service_random = scenario.service.base.is_random if i == 1 else scenario.service_law(i).is_random
        if service_random:
            layout.append(("S", i))
    return layout


def draw_inputs(scenario: Scenario, n_customers: int, uniforms: np.ndarray, theta: float | None = None) -> PathInputs:
    """Map uniforms (R, k) laid out per ``uniform_layout`` to queue inputs.

    Passing a different ``theta`` with the same uniforms gives the common
    random number coupling: only S1 moves.
    """
    theta = scenario.theta if theta is None else theta
    uniforms = np.atleast_2d(np.asarray(uniforms, dtype=float))
    reps = uniforms.shape[0]
    m = n_customers - 1
    a = np.empty((reps, m))
    s = np.empty((reps, m))
    cols = {key: k for k, key in enumerate(uniform_layout(scenario, n_customers))}
    if uniforms.shape[1] != len(cols):
        raise ValueError(f"expected {len(cols)} uniforms per path, got {uniforms.shape[1]}")

    s1 = SampleWithDerivatives(np.zeros(reps), np.zeros(reps), np.zeros(reps), np.zeros(reps))
    for i in range(1, n_customers):
        law = scenario.arrival_law(i)
        a[:, i - 1] = law.quantile(uniforms[:, cols[("A", i)]]) if law.is_random else law.mean
        if i == 1:
            u = uniforms[:, cols[("S", 1)]] if ("S", 1) in cols else np.full(reps, 0.5)
            s1 = scenario.service.sample_from_uniform(u, theta)
            s[:, 0] = s1.s
        else:
            law = scenario.service_law(i)
            s[:, i - 1] = law.quantile(uniforms[:, cols[("S", i)]]) if law.is_random else law.mean
    if n_customers == 1:
        s1 = scenario.service.sample_from_uniform(np.full(reps, 0.5), theta)
    return PathInputs(a, s, s1, theta)


def simulate_waits(a: np.ndarray, s: np.ndarray) -> np.ndarray:
    reps, m = a.shape
    w = np.zeros((reps, m + 1))
    for j in range(m):
        w[:, j + 1] = lindley_step(w[:, j], s[:, j], a[:, j])
    return w


def busy_period_ids(w: np.ndarray) -> np.ndarray:
    ids = np.cumsum(w == 0, axis=-1)
    ids[..., 0] = 1
    return ids


def path_from_arrays(a: np.ndarray, s: np.ndarray, w: np.ndarray, theta: float) -> Path:
    ids = busy_period_ids(w)
    n = w.shape[0]
    records = tuple(
        PathRecord(
            i + 1,
            float(a[i]) if i < n - 1 else None,
            float(s[i]) if i < n - 1 else None,
            float(w[i]),
            int(ids[i]),
        )
        for i in range(n)
    )
    return Path(records, theta)


def simulate_path(scenario: Scenario, n_customers: int, stream: RandomStream) -> Path:
    if n_customers < 1:
        raise ValueError("n_customers must be >= 1")
    k = len(uniform_layout(scenario, n_customers))
    inputs = draw_inputs(scenario, n_customers, stream.uniforms(k)[None, :])
    w = simulate_waits(inputs.a, inputs.s)
    return path_from_arrays(inputs.a[0], inputs.s[0], w[0], inputs.theta)


def first_busy_period_end(path: Path) -> BusyPeriodEnd:
    """Index of the last customer served in the first busy period.

    This is the first i with W_i + S_i <= A_i.  When no customer in the
    horizon closes the period the horizon length is returned, flagged open.
    """
    for rec in path.records:
        if rec.a is None:
            break
        if not rec.w + rec.s > rec.a:
            return BusyPeriodEnd(rec.i, False)
    return BusyPeriodEnd(len(path.records), True)


def first_busy_period_end_batch(w: np.ndarray, a: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Vectorized ``first_busy_period_end`` index over rows (open rows give n)."""
    n = w.shape[1]
    closes = ~(w[:, :-1] + s > a)
    idx = np.where(closes.any(axis=1), closes.argmax(axis=1) + 1, n)
    return idx
