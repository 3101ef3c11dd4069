"""Shared fixtures and the acceptance summary hook.

Tests in test_acceptance.py are collected into a per-criterion PASS/FAIL
table printed at the end of the run, so the gate's verdict is readable
without scrolling through tracebacks.
"""
import numpy as np
import pytest

from wgbound import bound, fourier, groups

GROUP_IDS = ("torus(1)", "torus(2)", "torus(3)", "su2", "so3")

_acceptance_results = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    if report.when == "call":
        _acceptance_results[name] = report.outcome
    elif report.when == "setup" and report.outcome != "passed":
        # setup error or skip: surface it rather than dropping the line
        _acceptance_results[name] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_results:
        return
    tw = terminalreporter
    tw.section("acceptance criteria")
    for name in sorted(_acceptance_results):
        outcome = _acceptance_results[name]
        verdict = "PASS" if outcome == "passed" else "FAIL"
        label = name.replace("test_", "", 1).replace("_", " ")
        tw.write_line(f"ACCEPTANCE {label}: {verdict}")


@pytest.fixture(params=GROUP_IDS)
def any_group(request):
    return groups.descriptor(request.param)


@pytest.fixture(params=("su2", "so3"))
def rank_one_group(request):
    return groups.descriptor(request.param)


def random_measure(G, n_atoms: int, seed: int,
                   weighted: bool = True) -> fourier.DiscreteMeasure:
    """Random discrete measure: Haar atoms, optional Dirichlet weights."""
    atoms = groups.haar_sample(G, seed, n_atoms)
    if not weighted:
        return fourier.DiscreteMeasure.uniform(G, atoms)
    rng = np.random.default_rng(seed + 1)
    w = rng.dirichlet(np.ones(n_atoms))
    return fourier.DiscreteMeasure(G.group_id, atoms, w)


@pytest.fixture
def power_modulus():
    return bound.ModulusOfContinuity.power
