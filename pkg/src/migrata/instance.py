"""Dynamic, metamodel-typed object graphs partitioned into resources.

Values are plain Python data: ``str``/``bool``/``int``/``float`` for
primitives, ``str`` for enum literals, :class:`ModelObject` for in-set
references, :class:`ExternalRef` for references that leave the resource
set, and ``list`` for many-valued features.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Dict, Iterator, List, Optional, Tuple

from .errors import (
    AbstractInstantiation,
    MultiplicityViolation,
    OwnershipCycle,
    TypeMismatch,
    UnknownClass,
    UnknownFeature,
)
from .metamodel import (
    DataType,
    EnumType,
    Feature,
    MetaClass,
    Metamodel,
    effective_features,
    find_class,
    is_subtype,
)


@dataclass(frozen=True)
class ExternalRef:
    """Pointer into a document that is not part of the resource set.

    Never dereferenced; written back exactly as read.
    """

    target_uri: str
    fragment: str

    @property
    def href(self) -> str:
        return f"{self.target_uri}#{self.fragment}"

    @classmethod
    def parse(cls, href: str) -> "ExternalRef":
        uri, _, frag = href.partition("#")
        return cls(uri, frag)


class ModelObject:
    """An instance of a :class:`MetaClass`.

    Identity is by allocation; two objects with equal slots are still
    different objects.
    """

    __slots__ = ("meta_class", "slots", "owner", "xmi_id", "_resource", "__weakref__")

    def __init__(self, meta_class: MetaClass, xmi_id: Optional[str] = None):
        self.meta_class = meta_class
        self.slots: Dict[str, Any] = {}
        self.owner: Optional[Tuple["ModelObject", str]] = None
        self.xmi_id = xmi_id
        self._resource: Optional["Resource"] = None

    @property
    def class_name(self) -> str:
        return self.meta_class.name

    def __getitem__(self, feature: str):
        return get(self, feature)

    def __setitem__(self, feature: str, value):
        set_value(self, feature, value)

    def contents(self) -> Iterator["ModelObject"]:
        """Direct containment children, in feature order."""
        for f in effective_features(self.meta_class):
            if f.containment and f.name in self.slots:
                v = self.slots[f.name]
                if f.many:
                    yield from v
                else:
                    yield v

    def all_contents(self) -> Iterator["ModelObject"]:
        """Pre-order walk of the containment subtree, excluding self."""
        for child in self.contents():
            yield child
            yield from child.all_contents()

    def container(self) -> Optional["ModelObject"]:
        return self.owner[0] if self.owner else None

    def root(self) -> "ModelObject":
        o = self
        while o.owner is not None:
            o = o.owner[0]
        return o

    def __repr__(self) -> str:
        name = self.slots.get("name")
        label = f" {name!r}" if isinstance(name, str) else ""
        return f"<{self.meta_class.name}{label} @{id(self):x}>"


class Resource:
    """One model file: an ordered list of root objects."""

    def __init__(self, uri: str, roots=()):
        self.uri = uri
        self.roots: List[ModelObject] = []
        self.resource_set: Optional["ResourceSet"] = None
        for r in roots:
            self.add_root(r)

    def add_root(self, obj: ModelObject, index: Optional[int] = None):
        if obj.owner is not None:
            _detach(obj)
        if obj._resource is not None:
            obj._resource.roots.remove(obj)
        obj._resource = self
        if index is None:
            self.roots.append(obj)
        else:
            self.roots.insert(index, obj)

    def remove_root(self, obj: ModelObject):
        self.roots.remove(obj)
        obj._resource = None

    def all_objects(self) -> Iterator[ModelObject]:
        for r in self.roots:
            yield r
            yield from r.all_contents()

    def __repr__(self) -> str:
        return f"<Resource {self.uri} ({len(self.roots)} roots)>"


class ResourceSet:
    def __init__(self, metamodel: Metamodel, resources=()):
        self.metamodel = metamodel
        self.resources: List[Resource] = []
        for r in resources:
            self.add(r)

    def add(self, resource: Resource) -> Resource:
        resource.resource_set = self
        self.resources.append(resource)
        return resource

    def create_resource(self, uri: str) -> Resource:
        return self.add(Resource(uri))

    def resource(self, uri: str) -> Optional[Resource]:
        for r in self.resources:
            if r.uri == uri:
                return r
        return None

    def all_objects(self) -> Iterator[ModelObject]:
        for r in self.resources:
            yield from r.all_objects()

    def __repr__(self) -> str:
        return f"<ResourceSet {self.metamodel.name}: {[r.uri for r in self.resources]}>"


def resource_of(obj: ModelObject) -> Optional[Resource]:
    return obj.root()._resource


def instantiate(mm: Metamodel, class_name: str, xmi_id: Optional[str] = None) -> ModelObject:
    mc = find_class(mm, class_name)
    if mc is None:
        raise UnknownClass(f"no class {class_name!r} in {mm.name}")
    if mc.is_abstract:
        raise AbstractInstantiation(f"{class_name} is abstract")
    return ModelObject(mc, xmi_id)


def _feature(obj: ModelObject, name: str) -> Feature:
    f = obj.meta_class.feature(name)
    if f is None:
        raise UnknownFeature(f"{obj.class_name} has no feature {name!r}")
    return f


def get(obj: ModelObject, feature: str):
    """Slot value; None for unset single-valued, [] for unset many-valued.

    Many-valued results are fresh lists, so mutating them does not touch
    the object; use :func:`set_value` or :func:`add`.
    """
    f = _feature(obj, feature)
    if f.many:
        return list(obj.slots.get(feature, ()))
    return obj.slots.get(feature)


def is_set(obj: ModelObject, feature: str) -> bool:
    _feature(obj, feature)
    return feature in obj.slots


# -- type checks -----------------------------------------------------------

def check_value(mm_class: MetaClass, f: Feature, v) -> Optional[str]:
    """Return a problem description if ``v`` cannot live in ``f``, else None."""
    mm = mm_class.metamodel
    if f.is_attribute:
        t = mm.classifier(f.type_name)
        if isinstance(t, EnumType):
            if not isinstance(v, str) or v not in t.literals:
                return f"{v!r} is not a literal of {t.name}"
            return None
        kind = t.primitive_kind if isinstance(t, DataType) else "string"
        ok = {
            "string": isinstance(v, str),
            "boolean": isinstance(v, bool),
            "integer": isinstance(v, int) and not isinstance(v, bool),
            "float": isinstance(v, (int, float)) and not isinstance(v, bool),
        }[kind]
        return None if ok else f"{v!r} is not a {kind}"
    if isinstance(v, ExternalRef):
        if f.containment:
            return "containment feature cannot hold an external reference"
        return None
    if not isinstance(v, ModelObject):
        return f"{v!r} is not a model object"
    if f.external:
        return f"feature typed by external {f.type_name} only takes external references"
    target = mm.classes[f.type_name]
    vc = mm.classes.get(v.class_name)
    if vc is None or not is_subtype(vc, target):
        return f"{v.class_name} is not a {f.type_name}"
    return None


def _check_multiplicity(obj, f: Feature, value):
    if f.many:
        if not isinstance(value, (list, tuple)):
            raise MultiplicityViolation(f"{obj.class_name}.{f.name} is many-valued; got {type(value).__name__}")
        if f.upper_bound != -1 and len(value) > f.upper_bound:
            raise MultiplicityViolation(f"{obj.class_name}.{f.name} holds at most {f.upper_bound} values")
        values = list(value)
        if f.is_reference and len({id(x) for x in values if isinstance(x, ModelObject)}) != \
                sum(1 for x in values if isinstance(x, ModelObject)):
            raise MultiplicityViolation(f"{obj.class_name}.{f.name}: duplicate reference")
        return values
    if isinstance(value, (list, tuple)):
        raise MultiplicityViolation(f"{obj.class_name}.{f.name} is single-valued; got a list")
    return [] if value is None else [value]


# -- raw slot surgery (no opposite/containment bookkeeping) -----------------

def _raw_values(obj: ModelObject, f: Feature) -> list:
    v = obj.slots.get(f.name)
    if v is None:
        return []
    return list(v) if f.many else [v]


def _raw_store(obj: ModelObject, f: Feature, values: list):
    if f.many:
        if values:
            obj.slots[f.name] = list(values)
        else:
            obj.slots.pop(f.name, None)
    elif values:
        obj.slots[f.name] = values[0]
    else:
        obj.slots.pop(f.name, None)


def _raw_remove(obj: ModelObject, f: Feature, target):
    vals = [x for x in _raw_values(obj, f) if x is not target]
    _raw_store(obj, f, vals)


def _detach(child: ModelObject):
    """Take ``child`` out of its container slot or its resource's roots."""
    if child.owner is not None:
        parent, fname = child.owner
        _raw_remove(parent, parent.meta_class.feature(fname), child)
        child.owner = None
    elif child._resource is not None:
        child._resource.remove_root(child)


def _opposite_of(f: Feature, target: ModelObject) -> Optional[Feature]:
    if f.opposite_name is None or not isinstance(target, ModelObject):
        return None
    return target.meta_class.feature(f.opposite_name)


def _link_opposite(src: ModelObject, opp: Feature, target: ModelObject):
    """Make ``src`` appear in ``target.opp``."""
    current = _raw_values(target, opp)
    if any(x is src for x in current):
        return
    if opp.many:
        _raw_store(target, opp, current + [src])
    else:
        # target was pointing elsewhere: unlink that other end first
        for old in current:
            back = _opposite_of(opp, old)
            if back is not None:
                _raw_remove(old, back, target)
        _raw_store(target, opp, [src])


def set_value(obj: ModelObject, feature: str, value) -> None:
    """Assign a slot, maintaining containment and opposite consistency.

    ``None`` (single-valued) or ``[]`` (many-valued) unsets the slot.
    """
    f = _feature(obj, feature)
    values = _check_multiplicity(obj, f, value)
    for v in values:
        problem = check_value(obj.meta_class, f, v)
        if problem:
            raise TypeMismatch(f"{obj.class_name}.{f.name}: {problem}")

    old = _raw_values(obj, f)
    if f.containment:
        for child in values:
            o = obj
            while o is not None:
                if o is child:
                    raise OwnershipCycle(f"{child!r} would contain itself via {obj.class_name}.{f.name}")
                o = o.container()
        for child in old:
            if not any(child is v for v in values):
                child.owner = None
        for child in values:
            if child.owner is not None and child.owner[0] is obj and child.owner[1] == f.name:
                continue
            _detach(child)
            child.owner = (obj, f.name)

    if f.opposite_name is not None:
        for t in old:
            if not any(t is v for v in values):
                opp = _opposite_of(f, t)
                if opp is not None:
                    _raw_remove(t, opp, obj)
        _raw_store(obj, f, values)
        for t in values:
            opp = _opposite_of(f, t)
            if opp is not None:
                _link_opposite(obj, opp, t)
        return
    _raw_store(obj, f, values)


def add(obj: ModelObject, feature: str, value) -> None:
    """Append one value to a many-valued feature."""
    f = _feature(obj, feature)
    if not f.many:
        raise MultiplicityViolation(f"{obj.class_name}.{feature} is single-valued")
    current = _raw_values(obj, f)
    set_value(obj, feature, current + [value])


# -- conformance -----------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    location: str
    message: str

    def __str__(self) -> str:
        return f"{self.location}: {self.message}"


def _location(obj: ModelObject) -> str:
    res = resource_of(obj)
    path = [obj.class_name]
    o = obj
    while o.owner is not None:
        parent, fname = o.owner
        path.append(f"{parent.class_name}.{fname}")
        o = parent
    uri = res.uri if res else "<detached>"
    return f"{uri}:" + "/".join(reversed(path))


def check_conformance(rs: ResourceSet, mm: Metamodel) -> List[Violation]:
    """List every way ``rs`` fails to be a valid instance of ``mm``."""
    out: List[Violation] = []
    members = {id(o) for o in rs.all_objects()}
    for obj in rs.all_objects():
        loc = _location(obj)
        mc = find_class(mm, obj.class_name)
        if mc is None:
            out.append(Violation(loc, f"class {obj.class_name} not in {mm.name} ({mm.ns_uri})"))
            continue
        if mc.is_abstract:
            out.append(Violation(loc, f"class {obj.class_name} is abstract"))
        for fname, value in obj.slots.items():
            f = mc.feature(fname)
            if f is None:
                out.append(Violation(loc, f"unknown feature {fname!r}"))
                continue
            values = list(value) if isinstance(value, list) else [value]
            if isinstance(value, list) != f.many:
                out.append(Violation(loc, f"{fname}: multiplicity mismatch"))
            for v in values:
                problem = check_value(mc, f, v)
                if problem:
                    out.append(Violation(loc, f"{fname}: {problem}"))
                elif isinstance(v, ModelObject) and id(v) not in members:
                    out.append(Violation(loc, f"{fname}: reference to {v!r} outside the resource set"))
        for f in effective_features(mc):
            n = len(obj.slots[f.name]) if f.many and f.name in obj.slots else int(f.name in obj.slots)
            if n < f.lower_bound:
                out.append(Violation(loc, f"required feature {f.name!r} has {n} value(s), needs {f.lower_bound}"))
            if f.upper_bound != -1 and n > f.upper_bound:
                out.append(Violation(loc, f"feature {f.name!r} exceeds upper bound {f.upper_bound}"))
    return out
