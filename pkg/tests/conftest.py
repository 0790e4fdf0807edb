import os
from pathlib import Path

import numpy as np
import pytest

from qosmgaa.dataset import AttributeTable, QoSMatrix
from qosmgaa.graphbuild import HeterogeneousGraph, build_heterogeneous_graph

WSDREAM_FILES = ("rtMatrix.txt", "userlist.txt", "wslist.txt")


def wsdream_dir() -> Path | None:
    """Directory holding the public benchmark files, if present."""
    for cand in (os.environ.get("QOSMGAA_DATA_DIR"),
                 Path(__file__).resolve().parent.parent / "data" / "wsdream"):
        if cand and Path(cand).is_dir():
            d = Path(cand)
            if all((d / f).exists() for f in WSDREAM_FILES):
                return d
    return None


@pytest.fixture(scope="session")
def wsdream():
    d = wsdream_dir()
    if d is None:
        pytest.skip(
            "WSDream benchmark files not found: place rtMatrix.txt, "
            "userlist.txt and wslist.txt under ./data/wsdream or point "
            "QOSMGAA_DATA_DIR at them")
    return d


@pytest.fixture
def toy_matrix() -> QoSMatrix:
    rng = np.random.default_rng(7)
    values = rng.uniform(0.1, 5.0, size=(6, 8))
    mask = rng.random((6, 8)) < 0.8
    mask[0, 0] = True
    return QoSMatrix(np.where(mask, values, 0.0), mask, "toy")


@pytest.fixture
def path_graph() -> HeterogeneousGraph:
    # a(0) - b(1) - c(2), all self-loops
    edges = {(0, 1), (1, 2), (0, 0), (1, 1), (2, 2)}
    return HeterogeneousGraph(3, 0, edges)


def attr_table(schema: list[str], rows: list[list[str]]) -> AttributeTable:
    t = AttributeTable(schema=list(schema))
    for i, vals in enumerate(rows):
        t.rows[i] = dict(zip(schema, vals))
    return t


def random_hetero_graph(num_nodes: int, edge_prob: float, seed: int,
                        num_entities: int | None = None) -> HeterogeneousGraph:
    """Random undirected graph with self-loops, wrapped as a heterogeneous
    graph (entity/attribute split is irrelevant to neighborhoods)."""
    rng = np.random.default_rng(seed)
    num_entities = num_entities if num_entities is not None else num_nodes
    edges = {(i, i) for i in range(num_nodes)}
    for i in range(num_nodes):
        for j in range(i + 1, num_nodes):
            if rng.random() < edge_prob:
                edges.add((i, j))
    return HeterogeneousGraph(num_entities, num_nodes - num_entities, edges)


@pytest.fixture
def users_us_us_de() -> AttributeTable:
    return attr_table(["country", "autonomous_system"],
                      [["US", "A"], ["US", "B"], ["DE", "B"]])
