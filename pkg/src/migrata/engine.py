"""Conservative-copy migration with rule overrides.

A migration runs in two passes over the source containment trees.  The
creation pass gives every source object a target image, either via a
matching rule or by copying it into the same-named target class with its
attribute slots.  The wiring pass then fills reference slots (containment
included) with the images of the source targets, except for features a
rule wires itself.  Only the classes that actually changed between two
metamodel versions need rules.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, FrozenSet, Iterable, List, Optional, Sequence, Set, Tuple

from .errors import (
    MissingEnumLiteral,
    MissingTargetClass,
    MissingTargetFeature,
    MixedVersions,
    PostConformance,
    RegistryError,
    RuleError,
    UnknownNamespace,
)
from .instance import (
    ExternalRef,
    ModelObject,
    Resource,
    ResourceSet,
    add,
    check_conformance,
    get,
    instantiate,
    set_value,
)
from .metamodel import EnumType, Metamodel, effective_features, find_class, is_subtype
from .xmi import read_resource_set, sniff_namespace

log = logging.getLogger(__name__)


class _Drop:
    def __repr__(self):
        return "DROP"


#: Return value of a creation action: the source object has no image.
DROP = _Drop()


@dataclass
class Rule:
    """Override for one source class.

    ``create(src, ctx)`` returns the primary target object or ``DROP``; when
    omitted, the object is conservatively copied.  ``wire(src, ctx)`` runs
    in the second pass and takes over the features named in ``wires``.
    Creation actions must not look at target-side references: their
    images may not exist yet.
    """

    source_class: str
    create: Optional[Callable[[ModelObject, "MigrationContext"], Any]] = None
    wire: Optional[Callable[[ModelObject, "MigrationContext"], None]] = None
    wires: FrozenSet[str] = frozenset()
    guard: Optional[Callable[[ModelObject], bool]] = None
    include_subtypes: bool = False

    def matches(self, src: ModelObject) -> bool:
        if src.class_name != self.source_class:
            if not self.include_subtypes:
                return False
            sup = src.meta_class.metamodel.classes.get(self.source_class)
            if sup is None or not is_subtype(src.meta_class, sup):
                return False
        return self.guard is None or bool(self.guard(src))


@dataclass
class MigrationPlan:
    source_ns_uri: str
    target_ns_uri: str
    rules: List[Rule] = field(default_factory=list)
    # (source class, feature): slots dropped silently on that class and its subtypes
    discard: Set[Tuple[str, str]] = field(default_factory=set)
    name: str = ""

    def __post_init__(self):
        names = [r.source_class for r in self.rules]
        if len(set(names)) != len(names):
            raise RuleError(f"plan {self.name or '?'} has several rules for one class")
        if self.source_ns_uri == self.target_ns_uri and self.rules:
            raise RuleError("a plan between identical namespaces must be the identity plan")

    @classmethod
    def identity(cls, mm: Metamodel) -> "MigrationPlan":
        return cls(mm.ns_uri, mm.ns_uri, name="identity")

    def rule_for(self, src: ModelObject) -> Optional[Rule]:
        exact = [r for r in self.rules if r.source_class == src.class_name]
        for r in exact + [r for r in self.rules if r.include_subtypes and r not in exact]:
            if r.matches(src):
                return r
        return None

    def rule_classes(self) -> List[str]:
        return [r.source_class for r in self.rules]


class Trace:
    """Source-to-target correspondence built during one migration."""

    def __init__(self):
        self._primary: Dict[int, Tuple[ModelObject, ModelObject]] = {}
        self._dropped: Dict[int, ModelObject] = {}
        self._aux: Dict[Tuple[int, str], Any] = {}
        self._targets: Set[int] = set()
        # id(src) -> name of the rule class that handled it (absent: plain copy)
        self.handled_by: Dict[int, str] = {}

    def map(self, src: ModelObject, tgt: ModelObject):
        if id(tgt) in self._targets:
            raise RuleError(f"{tgt!r} is already the image of another source object")
        self._primary[id(src)] = (src, tgt)
        self._targets.add(id(tgt))

    def drop(self, src: ModelObject):
        self._dropped[id(src)] = src

    def image(self, src: ModelObject) -> Optional[ModelObject]:
        hit = self._primary.get(id(src))
        return hit[1] if hit else None

    def is_dropped(self, src: ModelObject) -> bool:
        return id(src) in self._dropped

    def put(self, src: ModelObject, tag: str, value):
        self._aux[(id(src), tag)] = value

    def lookup(self, src: ModelObject, tag: str, default=None):
        return self._aux.get((id(src), tag), default)

    def pairs(self) -> List[Tuple[ModelObject, ModelObject]]:
        return list(self._primary.values())

    def dropped(self) -> List[ModelObject]:
        return list(self._dropped.values())

    def __len__(self):
        return len(self._primary)


class MigrationContext:
    """What rule actions can see and do during a migration."""

    def __init__(self, plan: MigrationPlan, source_mm: Metamodel, target_mm: Metamodel):
        self.plan = plan
        self.source_mm = source_mm
        self.target_mm = target_mm
        self.trace = Trace()
        # scratch space for plan-specific indexes, private to one run
        self.state: Dict[str, Any] = {}
        self.created: List[ModelObject] = []

    # creation helpers
    def create(self, class_name: str) -> ModelObject:
        obj = instantiate(self.target_mm, class_name)
        self.created.append(obj)
        return obj

    def copy(self, src: ModelObject, class_name: Optional[str] = None) -> ModelObject:
        """Attribute-level copy of ``src`` into a target class (same name by default)."""
        name = class_name or src.class_name
        mc = find_class(self.target_mm, name)
        if mc is None or mc.is_abstract:
            raise MissingTargetClass(f"no concrete class {name!r} in target metamodel {self.target_mm.name}")
        tgt = ModelObject(mc, src.xmi_id)
        for f in effective_features(src.meta_class):
            if not f.is_attribute or f.name not in src.slots or self.discarded(src, f.name):
                continue
            tf = mc.feature(f.name)
            if tf is None or not tf.is_attribute:
                raise MissingTargetFeature(
                    f"{src.class_name}.{f.name} is set but {name} has no attribute {f.name!r}")
            value = src.slots[f.name]
            t = self.target_mm.classifier(tf.type_name)
            if isinstance(t, EnumType):
                for lit in (value if isinstance(value, list) else [value]):
                    if lit not in t.literals:
                        raise MissingEnumLiteral(f"{src.class_name}.{f.name}: literal {lit!r} missing in target enum {t.name}")
            set_value(tgt, tf.name, list(value) if isinstance(value, list) else value)
        return tgt

    # lookup helpers
    def image(self, src: ModelObject) -> Optional[ModelObject]:
        return self.trace.image(src)

    def put(self, src: ModelObject, tag: str, value):
        self.trace.put(src, tag, value)

    def lookup(self, src: ModelObject, tag: str, default=None):
        return self.trace.lookup(src, tag, default)

    get = staticmethod(get)
    set = staticmethod(set_value)
    add = staticmethod(add)

    def discarded(self, src: ModelObject, feature: str) -> bool:
        for cls_name, fname in self.plan.discard:
            if fname != feature:
                continue
            sup = src.meta_class.metamodel.classes.get(cls_name)
            if sup is not None and is_subtype(src.meta_class, sup):
                return True
        return False

    def translate(self, value):
        """Map a source reference value (object, external ref, or list) to target space.

        Images of dropped objects are left out of lists; single values
        become None.
        """
        if isinstance(value, list):
            out = [self.translate(v) for v in value]
            return [v for v in out if v is not None]
        if isinstance(value, ExternalRef) or value is None:
            return value
        img = self.trace.image(value)
        if img is None and not self.trace.is_dropped(value):
            raise RuleError(f"{value!r} has no image in the trace")
        return img

    def wire_default(self, src: ModelObject, feature: str):
        """Copy one reference slot from ``src`` to its image through the trace."""
        tgt = self.trace.image(src)
        tf = tgt.meta_class.feature(feature)
        if tf is None or not tf.is_reference:
            raise MissingTargetFeature(
                f"{src.class_name}.{feature} is set but {tgt.class_name} has no reference {feature!r}")
        set_value(tgt, feature, self.translate(src.slots[feature]))


def _walk(rs: ResourceSet) -> Iterable[Tuple[Resource, ModelObject]]:
    for res in rs.resources:
        for obj in res.all_objects():
            yield res, obj


def migrate(rs: ResourceSet, source_mm: Metamodel, target_mm: Metamodel,
            plan: MigrationPlan, check: bool = True) -> Tuple[ResourceSet, Trace]:
    """Migrate ``rs`` from ``source_mm`` to ``target_mm`` under ``plan``.

    Output resources keep the input URIs; each image lands in the resource
    of its source object.  With ``check`` the result must conform to
    ``target_mm`` or :class:`PostConformance` is raised.
    """
    if plan.source_ns_uri != source_mm.ns_uri or plan.target_ns_uri != target_mm.ns_uri:
        raise RuleError(
            f"plan {plan.name or '?'} goes {plan.source_ns_uri} -> {plan.target_ns_uri}, "
            f"metamodels are {source_mm.ns_uri} -> {target_mm.ns_uri}")
    ctx = MigrationContext(plan, source_mm, target_mm)
    trace = ctx.trace
    order = list(_walk(rs))

    # creation pass
    for _, src in order:
        rule = plan.rule_for(src)
        if rule is not None and rule.create is not None:
            try:
                result = rule.create(src, ctx)
            except (RuleError, MissingTargetClass, MissingTargetFeature, MissingEnumLiteral):
                raise
            except Exception as exc:
                raise RuleError(f"rule {rule.source_class} failed on {src!r}: {exc}") from exc
            if result is DROP:
                trace.drop(src)
                trace.handled_by[id(src)] = rule.source_class
                continue
            if not isinstance(result, ModelObject):
                raise RuleError(f"rule {rule.source_class} returned {result!r}, expected a model object or DROP")
            trace.map(src, result)
        else:
            trace.map(src, ctx.copy(src))
        if rule is not None:
            trace.handled_by[id(src)] = rule.source_class

    # wiring pass
    for _, src in order:
        if trace.is_dropped(src):
            continue
        rule = plan.rule_for(src)
        overridden = rule.wires if rule is not None else frozenset()
        for f in effective_features(src.meta_class):
            if not f.is_reference or f.name not in src.slots or f.name in overridden:
                continue
            if ctx.discarded(src, f.name):
                continue
            ctx.wire_default(src, f.name)
        if rule is not None and rule.wire is not None:
            try:
                rule.wire(src, ctx)
            except (RuleError, MissingTargetClass, MissingTargetFeature, MissingEnumLiteral):
                raise
            except Exception as exc:
                raise RuleError(f"wiring rule {rule.source_class} failed on {src!r}: {exc}") from exc

    # placement
    out = ResourceSet(target_mm)
    placed: Dict[int, Resource] = {}
    for res in rs.resources:
        placed[id(res)] = out.create_resource(res.uri)
    for res, src in order:
        tgt = trace.image(src)
        if tgt is None or tgt.owner is not None:
            continue
        if src.owner is not None:
            log.warning("%r lost its container during migration; keeping it as a root", tgt)
        placed[id(res)].add_root(tgt)
    for obj in ctx.created:
        if obj.owner is None and obj._resource is None:
            raise RuleError(f"rule-created {obj!r} was never placed under a container")

    if check:
        violations = check_conformance(out, target_mm)
        if violations:
            raise PostConformance(violations)
    return out, trace


# -- versions and chaining -------------------------------------------------

@dataclass(frozen=True)
class VersionId:
    ns_uri: str
    label: str


class MigratorRegistry:
    """Known metamodel versions, oldest first, linked by plans.

    Every version except the latest owns exactly one plan leading to the
    next one, so the plans form a single chain.
    """

    def __init__(self):
        self.versions: List[VersionId] = []
        self.metamodels: Dict[str, Metamodel] = {}
        self._plans: Dict[str, MigrationPlan] = {}

    def register(self, label: str, metamodel: Metamodel, plan: Optional[MigrationPlan] = None) -> VersionId:
        """Append a version; ``plan`` leads from the previous latest to this one."""
        if metamodel.ns_uri in self.metamodels:
            raise RegistryError(f"namespace {metamodel.ns_uri} registered twice")
        if any(v.label == label for v in self.versions):
            raise RegistryError(f"version label {label!r} registered twice")
        if self.versions:
            prev = self.versions[-1]
            if plan is None:
                raise RegistryError(f"version {label} needs a plan from {prev.label}")
            if plan.source_ns_uri != prev.ns_uri or plan.target_ns_uri != metamodel.ns_uri:
                raise RegistryError(f"plan {plan.name or '?'} does not lead from {prev.label} to {label}")
            self._plans[prev.ns_uri] = plan
        elif plan is not None:
            raise RegistryError("the oldest version cannot have an incoming plan")
        vid = VersionId(metamodel.ns_uri, label)
        self.versions.append(vid)
        self.metamodels[metamodel.ns_uri] = metamodel
        return vid

    @property
    def latest(self) -> VersionId:
        if not self.versions:
            raise RegistryError("empty registry")
        return self.versions[-1]

    def version(self, ns_uri: str) -> VersionId:
        for v in self.versions:
            if v.ns_uri == ns_uri:
                return v
        raise UnknownNamespace(f"namespace {ns_uri!r} is not registered")

    def plan_from(self, ns_uri: str) -> Optional[MigrationPlan]:
        return self._plans.get(ns_uri)

    def chain_from(self, ns_uri: str) -> List[MigrationPlan]:
        self.version(ns_uri)
        plans = []
        cur = ns_uri
        while cur in self._plans:
            plan = self._plans[cur]
            plans.append(plan)
            cur = plan.target_ns_uri
        return plans


def detect_version(path, registry: MigratorRegistry) -> VersionId:
    """Version of a model file, judged from its root namespace only."""
    return registry.version(sniff_namespace(path))


def chain_migrate(paths: Sequence, registry: MigratorRegistry, lenient: bool = False,
                  check: bool = True) -> ResourceSet:
    """Detect the version of ``paths`` and run every plan up to the latest version."""
    paths = list(paths)
    detected = [detect_version(p, registry) for p in paths]
    if len({v.ns_uri for v in detected}) > 1:
        found = ", ".join(f"{Path(p).name}={v.label}" for p, v in zip(paths, detected))
        raise MixedVersions(f"input files disagree on the metamodel version: {found}")
    start = detected[0]
    rs = read_resource_set(paths, registry.metamodels, lenient=lenient)
    for plan in registry.chain_from(start.ns_uri):
        log.info("applying %s", plan.name or f"{plan.source_ns_uri} -> {plan.target_ns_uri}")
        rs, _ = migrate(rs, registry.metamodels[plan.source_ns_uri],
                        registry.metamodels[plan.target_ns_uri], plan, check=check)
    return rs
