"""Mapping-model chain: 1.0 -> 2.0 -> 2.1.

The steps are small.  2.0 splits label mappings so that the feature-based
kind becomes ``FeatureLabelMapping``; 2.1 adds explicit text access
methods to feature labels.  References into domain models, graphical
definitions and tool definitions are external throughout and pass through
the engine untouched.
"""

from __future__ import annotations

from typing import Callable, Dict, List, Optional, Sequence, Tuple

from ..engine import MigrationContext, MigrationPlan, MigratorRegistry, Rule
from ..errors import PlanConstructionError
from ..instance import ModelObject
from ..metamodel import Metamodel

PLAN_ID = "gmf-map-chain"

NS_1_0 = "http://www.eclipse.org/gmf/2005/mappings"
NS_2_0 = "http://www.eclipse.org/gmf/2006/mappings"
NS_2_1 = "http://www.eclipse.org/gmf/2008/mappings"

LABELS = {NS_1_0: "1.0", NS_2_0: "2.0", NS_2_1: "2.1"}


def _to_feature_label(src: ModelObject, ctx: MigrationContext) -> ModelObject:
    return ctx.copy(src, "FeatureLabelMapping")


def _plan_1_0_to_2_0(source: Metamodel, target: Metamodel) -> MigrationPlan:
    return MigrationPlan(source.ns_uri, target.ns_uri,
                         [Rule("LabelMapping", create=_to_feature_label)], name=f"{PLAN_ID}:1.0-2.0")


def _add_access_method(src: ModelObject, ctx: MigrationContext) -> ModelObject:
    tgt = ctx.copy(src)
    if "viewPattern" in src.slots:
        ctx.set(tgt, "viewMethod", "MESSAGE_FORMAT")
    if "editPattern" in src.slots:
        ctx.set(tgt, "editMethod", "MESSAGE_FORMAT")
    return tgt


def _plan_2_0_to_2_1(source: Metamodel, target: Metamodel) -> MigrationPlan:
    return MigrationPlan(source.ns_uri, target.ns_uri,
                         [Rule("FeatureLabelMapping", create=_add_access_method)], name=f"{PLAN_ID}:2.0-2.1")


STEPS: Dict[Tuple[str, str], Callable[[Metamodel, Metamodel], MigrationPlan]] = {
    (NS_1_0, NS_2_0): _plan_1_0_to_2_0,
    (NS_2_0, NS_2_1): _plan_2_0_to_2_1,
}


def incompatibilities(source: Metamodel, target: Metamodel) -> List[str]:
    """Source classes/features a plain conservative copy could not carry over."""
    out = []
    for mc in source.classes.values():
        tc = target.classes.get(mc.name)
        if tc is None:
            if not mc.is_abstract:
                out.append(f"class {mc.name} removed")
            continue
        for f in mc.own_features:
            tf = tc.feature(f.name)
            if tf is None:
                out.append(f"feature {mc.name}.{f.name} removed")
            elif tf.kind != f.kind or tf.many != f.many or tf.containment != f.containment:
                out.append(f"feature {mc.name}.{f.name} changed shape")
            elif tf.type_name != f.type_name and not f.external:
                out.append(f"feature {mc.name}.{f.name} retyped {f.type_name} -> {tf.type_name}")
    return out


def step_plan(source: Metamodel, target: Metamodel) -> MigrationPlan:
    """Plan for one adjacent pair of mapping versions.

    Known pairs get their hand-written rules; any other pair is accepted
    only when conservative copy alone covers the change.
    """
    builder = STEPS.get((source.ns_uri, target.ns_uri))
    if builder is not None:
        return builder(source, target)
    problems = incompatibilities(source, target)
    if problems:
        raise PlanConstructionError(
            f"no rules for {source.ns_uri} -> {target.ns_uri} and conservative copy is not enough: "
            + "; ".join(problems))
    if source.ns_uri == target.ns_uri:
        return MigrationPlan.identity(source)
    return MigrationPlan(source.ns_uri, target.ns_uri, name=f"{PLAN_ID}:conservative")


def map_plan_chain(metamodels: Sequence[Metamodel], labels: Optional[Sequence[str]] = None) -> MigratorRegistry:
    """Registry chaining consecutive mapping versions, oldest first."""
    if len(metamodels) < 2:
        raise PlanConstructionError("a chain needs at least two metamodel versions")
    if labels is None:
        labels = [LABELS.get(mm.ns_uri, str(i + 1)) for i, mm in enumerate(metamodels)]
    reg = MigratorRegistry()
    prev = None
    for mm, label in zip(metamodels, labels):
        reg.register(label, mm, step_plan(prev, mm) if prev is not None else None)
        prev = mm
    return reg
