from __future__ import annotations

import pytest

from imo.registry import EnvironmentSpec, ModelManifest
from imo.workflow import Subtask, TaskSpec


def make_manifest(name, capabilities, cost=10, latency=100, version=1,
                  designer="dana", blob_hash="0" * 64, size=3):
    return ModelManifest(
        name=name,
        version=version,
        blob_hash=blob_hash,
        size_bytes=size,
        capabilities=dict(capabilities),
        cost_per_call=cost,
        latency_ms=latency,
        designer_account=designer,
        env=EnvironmentSpec(),
        created_at=0,
        changelog="",
    )


@pytest.fixture
def chain_task():
    """s1{translate} -> s2{summarize}, budget 40 ucr, deadline 400 ms."""
    return TaskSpec.create(
        {
            "s1": Subtask(required_tags=frozenset(["translate"]), difficulty=0.5, novel=False),
            "s2": Subtask(required_tags=frozenset(["summarize"]), difficulty=0.5, novel=False),
        },
        deps={("s1", "s2")},
        budget_ucr=40,
        deadline_ms=400,
    )


@pytest.fixture
def two_model_pool():
    return {
        "a": make_manifest("a", {"translate": 0.9, "summarize": 0.2}),
        "b": make_manifest("b", {"translate": 0.3, "summarize": 0.8}),
    }
