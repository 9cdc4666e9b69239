import numpy as np
import pytest

from hybridj.dataset import Dataset, DefendantRecord, SynthConfig, WorkerPrediction, generate_synthetic


def make_dataset(rows, votes=None, n_workers=20):
    """Tiny hand-built dataset.

    rows: list of (compas, recidivated) or (compas, recidivated, priors, age, race).
    votes: positive-vote count per defendant, same for both conditions, or a
    (no_race, with_race) pair per row. Defaults to 0 votes.
    """
    defendants, compas, preds = [], {}, []
    wid = 1
    for i, r in enumerate(rows, start=1):
        c, y = r[0], r[1]
        priors = r[2] if len(r) > 2 else 0
        age = r[3] if len(r) > 3 else 30
        race = r[4] if len(r) > 4 else "white"
        defendants.append(DefendantRecord(i, age, race, "male", 0, 0, priors, "felony", "theft", bool(y)))
        compas[i] = c
        v = 0 if votes is None else votes[i - 1]
        v = v if isinstance(v, tuple) else (v, v)
        for cond, k in zip(("no_race", "with_race"), v):
            for w in range(n_workers):
                preds.append(WorkerPrediction(wid + w, i, cond, int(w < k), "white", "female", 35))
    return Dataset(tuple(defendants), compas, tuple(preds))


@pytest.fixture(scope="session")
def synth_small():
    return generate_synthetic(SynthConfig(n_defendants=400, seed=11))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL/SKIP line per acceptance criterion."""
    lines = []
    for outcome in ("passed", "failed", "skipped"):
        for rep in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance.py::" not in nodeid or rep.when not in ("call", "setup"):
                continue
            if outcome != "skipped" and rep.when != "call":
                continue
            name = nodeid.split("::", 1)[1]
            tag = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[outcome]
            lines.append((name, tag))
    if lines:
        terminalreporter.section("acceptance criteria")
        for name, tag in sorted(lines):
            terminalreporter.write_line(f"{tag} {name}")
