from __future__ import annotations

import numpy as np
import pytest

from courserank.pipeline import RunConfig, run_rank
from courserank.synth import SynthConfig, generate
from courserank.wlc import CitizenTimeline, Spell, build_wlc

INF = float("inf")


def make_timeline(
    cid: str,
    spells: list[tuple[int, int]] | list[Spell],
    length: int,
    origin: int = 10_000,
    gender: str = "F",
    birth: int = 0,
    reached: tuple[float, float, float] = (0.0, INF, INF),
) -> CitizenTimeline:
    """Timeline from spells given in curve days (1-based, inclusive)."""
    abs_spells = []
    for s in spells:
        if isinstance(s, Spell):
            abs_spells.append(Spell(origin + s.start - 1, origin + s.end - 1, s.permanent, s.pf_code))
        else:
            abs_spells.append(Spell(origin + s[0] - 1, origin + s[1] - 1, False, None))
    curve = build_wlc(origin, [(s.start, s.end) for s in abs_spells], length, cid)
    return CitizenTimeline(cid, gender, birth, curve, tuple(abs_spells), reached)


def random_matrix(rng: np.random.Generator, n: int, m: int):
    from courserank.mcdm import BENEFIT, COST, DecisionMatrix

    dirs = tuple(BENEFIT if rng.random() < 0.5 else COST for _ in range(m))
    return DecisionMatrix(
        tuple(f"A{i}" for i in range(n)), tuple(f"c{j}" for j in range(m)), dirs, rng.random((n, m))
    )


@pytest.fixture(scope="session")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    generate(SynthConfig(seed=7, effect_sizes=(0.5,) + (0.0,) * 9), out)
    return out


@pytest.fixture(scope="session")
def ranked_run(synth_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    cfg = RunConfig.from_mapping({"data_dir": synth_dir, "out_dir": out, "seed": 7, "k_override": 5, "threads": 1})
    return out, run_rank(cfg)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
