"""Shared scenario builders and the acceptance summary hook."""

from __future__ import annotations

from pathlib import Path

import pytest

from lindley_grad.distributions import (
    Deterministic,
    DeterministicThetaModel,
    Exponential,
    LocationModel,
    ScaleModel,
    Uniform,
)
from lindley_grad.scenario import Scenario

SCENARIO_DIR = Path(__file__).resolve().parent.parent / "scenarios"

# criterion id -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


def counterexample(theta=0.5, **kw) -> Scenario:
    kw.setdefault("n_customers", 2)
    kw.setdefault("order", 2)
    return Scenario(DeterministicThetaModel(theta), Deterministic(0.5), (Uniform(0.0, 1.0),), **kw)


def md1(theta=1.0, rate=1.0, **kw) -> Scenario:
    kw.setdefault("n_customers", 2)
    kw.setdefault("order", 3)
    return Scenario(DeterministicThetaModel(theta), Deterministic(0.5), (Exponential(rate),), **kw)


def mg1(theta=0.8, **kw) -> Scenario:
    kw.setdefault("n_customers", 4)
    kw.setdefault("order", 3)
    return Scenario(ScaleModel(theta, base_law=Exponential(1.0)), Exponential(2.0), (Exponential(1.0),), **kw)


def location_uniform(theta=0.8, delta=0.4, **kw) -> Scenario:
    kw.setdefault("n_customers", 10)
    return Scenario(LocationModel(theta, noise=Uniform(-delta, delta)), Uniform(0.4, 1.2),
                    (Exponential(1.0),), **kw)


def scale_exponential(theta=0.8, **kw) -> Scenario:
    kw.setdefault("n_customers", 10)
    return Scenario(ScaleModel(theta, base_law=Exponential(1.0)), Exponential(1.25), (Exponential(1.0),), **kw)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: int(k.split()[0])):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {key}: {detail}")


@pytest.fixture
def scenario_dir() -> Path:
    return SCENARIO_DIR
