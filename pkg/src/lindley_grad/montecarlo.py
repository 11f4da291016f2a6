"""Replicated estimation, CRN finite differences and report comparison.

Replication r always draws from ``RandomStream.substream(master_seed, r)``.
Replications are processed in fixed-size chunks whose boundaries do not
depend on the worker count, and chunk moments are merged in chunk order, so
a report is bit-identical for any ``workers``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from statistics import NormalDist
from typing import Iterable, Mapping

import numpy as np

from .distributions import RandomStream
from .errors import ParameterRegionError, ShapeMismatchError
from .estimators import estimate_batch, kinds_for_order
from .lindley import draw_inputs, simulate_waits, uniform_layout
from .scenario import Scenario, validate_scenario

CHUNK_SIZE = 8192
NAIVE_KINDS = ("d2_naive", "d3_naive")


@dataclass(frozen=True)
class SeedSpec:
    master_seed: int
    index: int = 0

    def stream(self) -> RandomStream:
        return RandomStream.substream(self.master_seed, self.index)


def replication_uniforms(master_seed: int, start: int, stop: int, k: int) -> np.ndarray:
    out = np.empty((stop - start, k))
    for row, r in enumerate(range(start, stop)):
        out[row] = RandomStream.substream(master_seed, r).uniforms(k)
    return out


# ---------------------------------------------------------------------------
# moments
# ---------------------------------------------------------------------------


@dataclass
class _Moments:
    count: int
    mean: np.ndarray
    m2: np.ndarray
    lo: np.ndarray
    hi: np.ndarray

    @classmethod
    def of(cls, x: np.ndarray) -> "_Moments":
        """Moments over axis 0 of x, shape (m, ...)."""
        m = x.shape[0]
        mean = np.sum(x, axis=0) / m
        m2 = np.sum((x - mean) ** 2, axis=0)
        return cls(m, mean, m2, x.min(axis=0), x.max(axis=0))

    def merge(self, other: "_Moments") -> "_Moments":
        n = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * (other.count / n)
        m2 = self.m2 + other.m2 + delta**2 * (self.count * other.count / n)
        return _Moments(n, mean, m2, np.minimum(self.lo, other.lo), np.maximum(self.hi, other.hi))

    def finalize(self) -> tuple[np.ndarray, np.ndarray]:
        const = self.lo == self.hi
        mean = np.where(const, self.lo, self.mean)
        var = np.where(const, 0.0, self.m2 / (self.count - 1))
        return mean, var


def _reduce(parts: Iterable[_Moments]) -> _Moments:
    total = None
    for part in parts:
        total = part if total is None else total.merge(part)
    return total


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


@dataclass(frozen=True)
class CellStat:
    customer: int
    kind: str
    count: int
    mean: float
    variance: float
    se: float
    ci_lo: float
    ci_hi: float


@dataclass(frozen=True)
class AggregateReport:
    kinds: tuple[str, ...]
    n_customers: int
    replications: int
    means: Mapping[str, np.ndarray]
    variances: Mapping[str, np.ndarray]
    theta: float
    seed: int
    scenario_digest: str
    alpha: float = 0.01
    method: str = "estimator"
    h: float | None = None
    notes: tuple[str, ...] = ()

    @property
    def z_crit(self) -> float:
        return NormalDist().inv_cdf(1 - self.alpha / 2)

    def se(self, kind: str) -> np.ndarray:
        return np.sqrt(self.variances[kind] / self.replications)

    def cell(self, customer: int, kind: str) -> CellStat:
        if kind not in self.means or not 1 <= customer <= self.n_customers:
            raise KeyError((customer, kind))
        k = customer - 1
        mean = float(self.means[kind][k])
        var = float(self.variances[kind][k])
        se = math.sqrt(var / self.replications)
        half = self.z_crit * se
        return CellStat(customer, kind, self.replications, mean, var, se, mean - half, mean + half)

    def cells(self):
        for customer in range(1, self.n_customers + 1):
            for kind in self.kinds:
                yield self.cell(customer, kind)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["customer", "statistic", "R", "mean", "variance", "se", "ci_lo", "ci_hi"])
        for c in self.cells():
            writer.writerow([c.customer, c.kind, c.count] + [_fmt(v) for v in (c.mean, c.variance, c.se, c.ci_lo, c.ci_hi)])
        return buf.getvalue()

    def to_dict(self) -> dict:
        customers = []
        for customer in range(1, self.n_customers + 1):
            stats = {}
            for kind in self.kinds:
                c = self.cell(customer, kind)
                stats[kind] = {"mean": c.mean, "variance": c.variance, "se": c.se, "ci_lo": c.ci_lo, "ci_hi": c.ci_hi}
            customers.append({"customer": customer, "stats": stats})
        return {
            "meta": {
                "method": self.method,
                "theta": self.theta,
                "seed": self.seed,
                "replications": self.replications,
                "alpha": self.alpha,
                "h": self.h,
                "scenario_digest": self.scenario_digest,
                "notes": list(self.notes),
            },
            "customers": customers,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def write(self, out_dir: str | Path, stem: str = "report") -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{stem}.csv").write_text(self.to_csv())
        (out / f"{stem}.json").write_text(self.to_json())


def _notes(scenario: Scenario) -> tuple[str, ...]:
    notes = []
    if scenario.deterministic_service:
        notes.append("deterministic_service: constant service times lie outside Assumption 3; estimators are still applied")
    return tuple(notes)


# ---------------------------------------------------------------------------
# runners
# ---------------------------------------------------------------------------


def _chunks(R: int) -> list[tuple[int, int]]:
    return [(lo, min(R, lo + CHUNK_SIZE)) for lo in range(0, R, CHUNK_SIZE)]


def _estimate_chunk(args) -> _Moments:
    scenario, n, order, master_seed, lo, hi = args
    k = len(uniform_layout(scenario, n))
    traj = estimate_batch(scenario, n, order, replication_uniforms(master_seed, lo, hi, k))
    stacked = np.stack([traj[kind] for kind in kinds_for_order(order)], axis=1)  # (m, kinds, n)
    return _Moments.of(stacked)


def _map(fn, tasks, workers: int):
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


def _seed_value(seed) -> int:
    return seed.master_seed if isinstance(seed, SeedSpec) else int(seed)


def run_replications(scenario: Scenario, n_customers: int | None = None, order: int | None = None,
                     R: int | None = None, seed: SeedSpec | int | None = None, *,
                     workers: int = 1, alpha: float | None = None) -> AggregateReport:
    n = scenario.n_customers if n_customers is None else n_customers
    order = scenario.order if order is None else order
    R = scenario.replications if R is None else R
    master = scenario.seed if seed is None else _seed_value(seed)
    alpha = scenario.alpha if alpha is None else alpha
    validate_scenario(scenario.replace(n_customers=n, replications=R, seed=master), order)

    tasks = [(scenario, n, order, master, lo, hi) for lo, hi in _chunks(R)]
    mean, var = _reduce(_map(_estimate_chunk, tasks, workers)).finalize()
    kinds = kinds_for_order(order)
    return AggregateReport(
        kinds=kinds,
        n_customers=n,
        replications=R,
        means={kind: mean[j] for j, kind in enumerate(kinds)},
        variances={kind: var[j] for j, kind in enumerate(kinds)},
        theta=scenario.theta,
        seed=master,
        scenario_digest=scenario.digest(),
        alpha=alpha,
        notes=_notes(scenario),
    )


# order -> (theta offsets in units of h, weights, power of h in the denominator)
STENCILS = {
    1: ((-1, 1), (-0.5, 0.5), 1),
    2: ((-1, 0, 1), (1.0, -2.0, 1.0), 2),
    3: ((-2, -1, 1, 2), (-0.5, 1.0, -1.0, 0.5), 3),
}


def default_h(theta: float, order: int) -> float:
    return (1e-2 if order == 1 else 5e-2) * theta


def check_stencil(scenario: Scenario, order: int, h: float) -> None:
    reach = max(abs(o) for k in range(1, order + 1) for o in STENCILS[k][0])
    for point in (scenario.theta - reach * h, scenario.theta + reach * h):
        if not scenario.service.valid_theta(point):
            raise ParameterRegionError(
                f"finite-difference stencil point theta={point:g} (h={h:g}) leaves the valid "
                f"parameter region of the {scenario.service.family} service model"
            )


def _fd_chunk(args) -> _Moments:
    scenario, n, order, h, master_seed, lo, hi = args
    k = len(uniform_layout(scenario, n))
    U = replication_uniforms(master_seed, lo, hi, k)
    theta = scenario.theta
    offsets = sorted({o for kk in range(1, order + 1) for o in STENCILS[kk][0]} | {0})
    waits = {o: simulate_waits(*_as(draw_inputs(scenario, n, U, theta + o * h))) for o in offsets}
    cols = [waits[0]]
    for kk in range(1, order + 1):
        pts, wts, power = STENCILS[kk]
        acc = sum(wt * waits[o] for o, wt in zip(pts, wts))
        cols.append(acc / h**power)
    return _Moments.of(np.stack(cols, axis=1))


def _as(inputs):
    return inputs.a, inputs.s


def finite_difference(scenario: Scenario, n_customers: int | None = None, order: int | None = None,
                      h: float | None = None, R: int | None = None, seed: SeedSpec | int | None = None, *,
                      workers: int = 1, alpha: float | None = None) -> AggregateReport:
    """Central-difference estimates of d^k E[W_i] / d theta^k, k = 1..order.

    Every stencil point of replication r reuses that replication's uniforms.
    """
    n = scenario.n_customers if n_customers is None else n_customers
    order = scenario.order if order is None else order
    R = scenario.replications if R is None else R
    master = scenario.seed if seed is None else _seed_value(seed)
    alpha = scenario.alpha if alpha is None else alpha
    h = default_h(scenario.theta, order) if h is None else h
    if not h > 0:
        raise ParameterRegionError(f"finite-difference step must be positive, got {h}")
    validate_scenario(scenario.replace(n_customers=n, replications=R, seed=master), 1)
    check_stencil(scenario, order, h)

    tasks = [(scenario, n, order, h, master, lo, hi) for lo, hi in _chunks(R)]
    mean, var = _reduce(_map(_fd_chunk, tasks, workers)).finalize()
    kinds = ("W",) + tuple(f"d{k}" for k in range(1, order + 1))
    return AggregateReport(
        kinds=kinds,
        n_customers=n,
        replications=R,
        means={kind: mean[j] for j, kind in enumerate(kinds)},
        variances={kind: var[j] for j, kind in enumerate(kinds)},
        theta=scenario.theta,
        seed=master,
        scenario_digest=scenario.digest(),
        alpha=alpha,
        method="fd",
        h=h,
        notes=_notes(scenario),
    )


# ---------------------------------------------------------------------------
# comparison
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ComparisonCell:
    customer: int
    kind: str
    reference_kind: str
    estimate: float
    reference: float
    se_estimate: float
    se_reference: float
    diff: float
    combined_se: float
    z: float
    status: str


@dataclass(frozen=True)
class ComparisonTable:
    cells: tuple[ComparisonCell, ...]
    z_threshold: float
    extra: dict = field(default_factory=dict)

    @property
    def all_pass(self) -> bool:
        """True when every non-naive cell passes."""
        return all(c.status == "PASS" for c in self.cells if c.kind not in NAIVE_KINDS)

    def cell(self, customer: int, kind: str) -> ComparisonCell:
        for c in self.cells:
            if c.customer == customer and c.kind == kind:
                return c
        raise KeyError((customer, kind))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["customer", "statistic", "reference_statistic", "estimate", "reference",
                         "se_estimate", "se_reference", "diff", "combined_se", "z", "status"])
        for c in self.cells:
            writer.writerow([c.customer, c.kind, c.reference_kind]
                            + [_fmt(v) for v in (c.estimate, c.reference, c.se_estimate, c.se_reference,
                                                 c.diff, c.combined_se, c.z)]
                            + [c.status])
        return buf.getvalue()

    def to_dict(self) -> dict:
        by_customer: dict[int, list] = {}
        for c in self.cells:
            by_customer.setdefault(c.customer, []).append({
                "statistic": c.kind, "reference_statistic": c.reference_kind, "estimate": c.estimate,
                "reference": c.reference, "se_estimate": c.se_estimate, "se_reference": c.se_reference,
                "diff": c.diff, "combined_se": c.combined_se,
                "z": c.z if math.isfinite(c.z) else str(c.z), "status": c.status,
            })
        return {
            "z_threshold": self.z_threshold,
            "all_pass": self.all_pass,
            **self.extra,
            "customers": [{"customer": k, "cells": v} for k, v in sorted(by_customer.items())],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def write(self, out_dir: str | Path, stem: str = "comparison") -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{stem}.csv").write_text(self.to_csv())
        (out / f"{stem}.json").write_text(self.to_json())


def _z(diff: float, se: float, scale: float, exact_tol: float) -> float:
    if se > 0:
        return diff / se
    return 0.0 if abs(diff) <= exact_tol * max(1.0, abs(scale)) else math.copysign(math.inf, diff)


def compare(a: AggregateReport, b: AggregateReport | Mapping[tuple[int, str], float],
            pairs: Iterable[tuple[str, str]] | None = None, z_threshold: float = 3.5,
            customers: Iterable[int] | None = None, exact_tol: float = 1e-12) -> ComparisonTable:
    """Cell-by-cell z-scores of ``a`` against a report or analytic values.

    ``b`` may be an ``AggregateReport`` or a mapping ``(customer, kind) -> value``
    whose standard error is zero.  ``pairs`` maps kinds of ``a`` to kinds of
    ``b``; by default every shared kind is paired with itself.  Failing naive
    IPA cells are marked BIASED.
    """
    analytic = not isinstance(b, AggregateReport)
    if pairs is None:
        b_kinds = {k for _, k in b} if analytic else set(b.kinds)
        pairs = [(k, k) for k in a.kinds if k in b_kinds]
    pairs = list(pairs)
    if not analytic and b.n_customers != a.n_customers:
        raise ShapeMismatchError(f"horizon mismatch: {a.n_customers} vs {b.n_customers} customers")
    for ka, kb in pairs:
        if ka not in a.kinds:
            raise ShapeMismatchError(f"statistic '{ka}' missing from the estimate report")
        if not analytic and kb not in b.kinds:
            raise ShapeMismatchError(f"statistic '{kb}' missing from the reference report")

    if customers is None:
        customers = sorted({c for c, _ in b}) if analytic else range(1, a.n_customers + 1)
    cells = []
    for customer in customers:
        if not 1 <= customer <= a.n_customers:
            raise ShapeMismatchError(f"customer {customer} outside the estimate horizon {a.n_customers}")
        for ka, kb in pairs:
            if analytic:
                if (customer, kb) not in b:
                    continue
                ref, se_b = float(b[(customer, kb)]), 0.0
            else:
                cb = b.cell(customer, kb)
                ref, se_b = cb.mean, cb.se
            ca = a.cell(customer, ka)
            diff = ca.mean - ref
            se = math.hypot(ca.se, se_b)
            z = _z(diff, se, ref, exact_tol)
            ok = abs(z) <= z_threshold
            status = "PASS" if ok else ("BIASED" if ka in NAIVE_KINDS else "FAIL")
            cells.append(ComparisonCell(customer, ka, kb, ca.mean, ref, ca.se, se_b, diff, se, z, status))
    return ComparisonTable(tuple(cells), z_threshold)
