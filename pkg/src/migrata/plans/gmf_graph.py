"""GMF Graph 1.0 -> 2.1.

In 2.1 diagram elements no longer point at figures directly.  Every
top-level gallery figure gets wrapped in a ``FigureDescriptor``, diagram
elements point at the descriptor, and a nested figure is reached through a
``ChildAccess`` owned by the descriptor of its top-level ancestor.  The
``Figure.referencingElements`` back-reference is gone; what it encoded is
now carried by the descriptors and accessors.
"""

from __future__ import annotations

from typing import Dict, List, Optional, Tuple

from ..engine import MigrationContext, MigrationPlan, Rule
from ..errors import PlanConstructionError, RuleError
from ..instance import ExternalRef, ModelObject
from ..metamodel import Metamodel, concrete_subtypes, is_subtype

PLAN_ID = "gmf-graph-1.0-to-2.1"

SOURCE_CLASSES = ("Figure", "FigureGallery", "DiagramLabel", "Compartment", "Canvas", "Node", "Connection")
TARGET_CLASSES = ("Figure", "FigureGallery", "FigureDescriptor", "ChildAccess", "DiagramLabel",
                  "Compartment", "Canvas", "Node", "Connection")
SOURCE_FEATURES = (("Figure", "referencingElements"), ("Figure", "children"),
                   ("FigureGallery", "figures"), ("Node", "figure"))
TARGET_FEATURES = (("FigureGallery", "descriptors"), ("FigureDescriptor", "actualFigure"),
                   ("FigureDescriptor", "accessors"), ("ChildAccess", "figure"),
                   ("DiagramLabel", "accessor"), ("Compartment", "accessor"), ("Node", "figure"))


class FigureIndex:
    """Per-run bookkeeping of figures, their descriptors and accessors."""

    def __init__(self, source_mm: Metamodel):
        self.figure_class = source_mm.classes["Figure"]
        self.gallery_class = source_mm.classes["FigureGallery"]
        self._top: Dict[int, Tuple[ModelObject, bool]] = {}
        self.descriptors: Dict[int, ModelObject] = {}
        self.accesses: Dict[Tuple[int, int], ModelObject] = {}

    def is_figure(self, obj: ModelObject) -> bool:
        return is_subtype(obj.meta_class, self.figure_class)

    def top_level(self, fig: ModelObject) -> Tuple[ModelObject, bool]:
        """(top-level ancestor, whether ``fig`` is itself top-level).

        Only figure-in-figure containment counts; the chain stops at the
        first container that is not a figure.
        """
        hit = self._top.get(id(fig))
        if hit is None:
            top = fig
            while top.owner is not None and self.is_figure(top.owner[0]):
                top = top.owner[0]
            hit = (top, top is fig)
            self._top[id(fig)] = hit
        return hit

    def in_gallery(self, top: ModelObject) -> bool:
        return top.owner is not None and is_subtype(top.owner[0].meta_class, self.gallery_class) \
            and top.owner[1] == "figures"


def _index(ctx: MigrationContext) -> FigureIndex:
    idx = ctx.state.get("figures")
    if idx is None:
        idx = ctx.state["figures"] = FigureIndex(ctx.source_mm)
    return idx


def _create_gallery(src: ModelObject, ctx: MigrationContext) -> ModelObject:
    idx = _index(ctx)
    gallery = ctx.copy(src)
    has_name = ctx.target_mm.classes["FigureDescriptor"].feature("name") is not None
    for fig in src.slots.get("figures", []):
        d = ctx.create("FigureDescriptor")
        if has_name and isinstance(fig.slots.get("name"), str):
            ctx.set(d, "name", fig.slots["name"])
        idx.descriptors[id(fig)] = d
        ctx.put(fig, "descriptor", d)
    return gallery


def _wire_gallery(src: ModelObject, ctx: MigrationContext):
    idx = _index(ctx)
    descriptors = []
    for fig in src.slots.get("figures", []):
        d = idx.descriptors[id(fig)]
        ctx.set(d, "actualFigure", ctx.image(fig))
        descriptors.append(d)
    ctx.set(ctx.image(src), "descriptors", descriptors)


def _wire_figure_user(src: ModelObject, ctx: MigrationContext):
    fig = src.slots.get("figure")
    if fig is None:
        return
    if isinstance(fig, ExternalRef):
        raise RuleError(f"{src!r} uses figure {fig.href}, which is not part of the migrated models")
    idx = _index(ctx)
    top, is_top = idx.top_level(fig)
    if not idx.in_gallery(top):
        raise RuleError(f"{src!r} uses {fig!r}, which is not inside a figure gallery")
    d = idx.descriptors[id(top)]
    target = ctx.image(src)
    ctx.set(target, "figure", d)
    if is_top:
        return
    access = idx.accesses.get((id(d), id(fig)))
    if access is None:
        access = ctx.create("ChildAccess")
        ctx.set(access, "figure", ctx.image(fig))
        ctx.add(d, "accessors", access)
        idx.accesses[(id(d), id(fig))] = access
        ctx.put(fig, "childAccess", access)
    if target.meta_class.feature("accessor") is not None:
        ctx.set(target, "accessor", access)


def _check_names(mm: Metamodel, classes, features, side: str):
    for c in classes:
        if c not in mm.classes:
            raise PlanConstructionError(f"{side} metamodel {mm.ns_uri} lacks class {c}")
    for c, f in features:
        if mm.classes[c].feature(f) is None:
            raise PlanConstructionError(f"{side} metamodel {mm.ns_uri} lacks feature {c}.{f}")


def figure_users(source_mm: Metamodel) -> List[str]:
    """Concrete classes whose ``figure`` reference points at a Figure."""
    figure = source_mm.classes["Figure"]
    out = []
    for mc in source_mm.classes.values():
        f = mc.feature("figure")
        if mc.is_abstract or f is None or not f.is_reference or f.containment or f.external:
            continue
        if is_subtype(source_mm.classes[f.type_name], figure):
            out.append(mc.name)
    return out


def graph_plan(source_mm: Metamodel, target_mm: Metamodel) -> MigrationPlan:
    _check_names(source_mm, SOURCE_CLASSES, SOURCE_FEATURES, "source")
    _check_names(target_mm, TARGET_CLASSES, TARGET_FEATURES, "target")
    if target_mm.classes["Node"].feature("figure").type_name != "FigureDescriptor":
        raise PlanConstructionError("target DiagramElement.figure is not typed by FigureDescriptor")

    rules = [Rule("FigureGallery", create=_create_gallery, wire=_wire_gallery, wires=frozenset({"figures"}))]
    for name in figure_users(source_mm):
        if name not in target_mm.classes:
            raise PlanConstructionError(f"target metamodel lacks {name}")
        rules.append(Rule(name, wire=_wire_figure_user, wires=frozenset({"figure"})))
    return MigrationPlan(
        source_mm.ns_uri,
        target_mm.ns_uri,
        rules,
        discard={("Figure", "referencingElements")},
        name=PLAN_ID,
    )
