"""Built-in migration plans, addressable by a stable identifier."""

from __future__ import annotations

from importlib import resources
from pathlib import Path
from typing import Callable, Dict, List

from ..engine import MigrationPlan
from ..errors import ParseError, PlanConstructionError
from ..metamodel import Metamodel, load_metamodel
from . import gmf_graph, gmf_map
from .gmf_graph import graph_plan
from .gmf_map import map_plan_chain, step_plan

DATA_FILES = {
    "gmfgraph-1.0": "gmfgraph_1_0.ecore",
    "gmfgraph-2.1": "gmfgraph_2_1.ecore",
    "gmfmap-1.0": "gmfmap_1_0.ecore",
    "gmfmap-2.0": "gmfmap_2_0.ecore",
    "gmfmap-2.1": "gmfmap_2_1.ecore",
}


def _conservative(source: Metamodel, target: Metamodel) -> MigrationPlan:
    if source.ns_uri == target.ns_uri:
        return MigrationPlan.identity(source)
    return MigrationPlan(source.ns_uri, target.ns_uri, name="conservative")


PLANS: Dict[str, Callable[[Metamodel, Metamodel], MigrationPlan]] = {
    gmf_graph.PLAN_ID: graph_plan,
    gmf_map.PLAN_ID: step_plan,
    "conservative": _conservative,
}


def build_plan(plan_id: str, source: Metamodel, target: Metamodel) -> MigrationPlan:
    try:
        factory = PLANS[plan_id]
    except KeyError:
        raise PlanConstructionError(f"unknown plan {plan_id!r}; known: {', '.join(sorted(PLANS))}") from None
    return factory(source, target)


def builtin_metamodel_path(key: str) -> Path:
    """Filesystem path of one of the bundled ``.ecore`` files."""
    if key not in DATA_FILES:
        raise ParseError(f"no built-in metamodel {key!r}; known: {', '.join(DATA_FILES)}")
    return Path(str(resources.files("migrata") / "data" / DATA_FILES[key]))


def builtin_metamodels() -> Dict[str, Metamodel]:
    """Every bundled metamodel, keyed by namespace URI."""
    out = {}
    for key in DATA_FILES:
        mm = load_metamodel(builtin_metamodel_path(key))
        out[mm.ns_uri] = mm
    return out


__all__ = ["PLANS", "build_plan", "builtin_metamodel_path", "builtin_metamodels",
           "graph_plan", "map_plan_chain", "step_plan"]
