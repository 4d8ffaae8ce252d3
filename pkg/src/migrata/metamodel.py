"""Ecore-style metamodels: loading from XML and read-only queries.

Only the subset of Ecore that model migration needs is understood: packages
(with nested subpackages flattened), classes with multiple inheritance,
attributes, references (containment, opposites, bounds, ordering), enums
and primitive datatypes.  Anything else in the document is recorded on
``Metamodel.ignored`` and otherwise skipped.
"""

from __future__ import annotations

import logging
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Union

from .errors import DuplicateName, ParseError, UnresolvedType

log = logging.getLogger(__name__)

ECORE_NS = "http://www.eclipse.org/emf/2002/Ecore"
XMI_NS = "http://www.omg.org/XMI"
XSI_NS = "http://www.w3.org/2001/XMLSchema-instance"

ATTRIBUTE = "attribute"
REFERENCE = "reference"

# Ecore's built-in datatypes, by the primitive kind they carry.
ECORE_PRIMITIVES = {
    "EString": "string",
    "EChar": "string",
    "ECharacterObject": "string",
    "EBoolean": "boolean",
    "EBooleanObject": "boolean",
    "EInt": "integer",
    "EIntegerObject": "integer",
    "ELong": "integer",
    "ELongObject": "integer",
    "EShort": "integer",
    "EShortObject": "integer",
    "EByte": "integer",
    "EByteObject": "integer",
    "EBigInteger": "integer",
    "EFloat": "float",
    "EFloatObject": "float",
    "EDouble": "float",
    "EDoubleObject": "float",
    "EBigDecimal": "float",
}

_JAVA_KINDS = {
    "java.lang.String": "string",
    "char": "string",
    "boolean": "boolean",
    "java.lang.Boolean": "boolean",
    "int": "integer",
    "long": "integer",
    "short": "integer",
    "byte": "integer",
    "java.lang.Integer": "integer",
    "java.lang.Long": "integer",
    "java.math.BigInteger": "integer",
    "float": "float",
    "double": "float",
    "java.lang.Float": "float",
    "java.lang.Double": "float",
    "java.math.BigDecimal": "float",
}

_KNOWN_FEATURE_ATTRS = {
    "name", "eType", "lowerBound", "upperBound", "containment", "ordered",
    "eOpposite", f"{{{XSI_NS}}}type",
}
_KNOWN_CLASS_ATTRS = {"name", "abstract", "interface", "eSuperTypes", f"{{{XSI_NS}}}type"}


@dataclass
class DataType:
    name: str
    primitive_kind: str = "string"


@dataclass
class EnumType:
    name: str
    literals: List[str] = field(default_factory=list)


@dataclass(eq=False)
class Feature:
    name: str
    kind: str
    type_name: str
    lower_bound: int = 0
    upper_bound: int = 1
    containment: bool = False
    ordered: bool = True
    opposite_name: Optional[str] = None
    # type lives in another metamodel; values are kept as opaque external refs
    external: bool = False

    @property
    def many(self) -> bool:
        return self.upper_bound == -1 or self.upper_bound > 1

    @property
    def is_reference(self) -> bool:
        return self.kind == REFERENCE

    @property
    def is_attribute(self) -> bool:
        return self.kind == ATTRIBUTE

    def __repr__(self) -> str:
        return f"<Feature {self.name}: {self.type_name}[{self.lower_bound}..{self.upper_bound}]>"


@dataclass(eq=False)
class MetaClass:
    name: str
    is_abstract: bool = False
    supertypes: List[str] = field(default_factory=list)
    own_features: List[Feature] = field(default_factory=list)
    metamodel: Optional["Metamodel"] = field(default=None, repr=False)

    _effective: Optional[List[Feature]] = field(default=None, init=False, repr=False)
    _by_name: Optional[Dict[str, Feature]] = field(default=None, init=False, repr=False)
    _ancestors: Optional[frozenset] = field(default=None, init=False, repr=False)

    def feature(self, name: str) -> Optional[Feature]:
        """Effective feature called ``name``, or None."""
        if self._by_name is None:
            self._by_name = {f.name: f for f in effective_features(self)}
        return self._by_name.get(name)

    def super_classes(self) -> List["MetaClass"]:
        return [self.metamodel.classes[s] for s in self.supertypes]

    def __repr__(self) -> str:
        return f"<MetaClass {self.name}>"


Classifier = Union[MetaClass, DataType, EnumType]


@dataclass(eq=False)
class Metamodel:
    ns_uri: str
    name: str
    ns_prefix: str = ""
    classes: Dict[str, MetaClass] = field(default_factory=dict)
    datatypes: Dict[str, DataType] = field(default_factory=dict)
    enums: Dict[str, EnumType] = field(default_factory=dict)
    # (element path, attribute or child tag) pairs skipped while loading
    ignored: List[tuple] = field(default_factory=list, repr=False)

    def add_class(self, mc: MetaClass) -> MetaClass:
        if mc.name in self.classes:
            raise DuplicateName(f"duplicate class {mc.name!r} in {self.name}")
        mc.metamodel = self
        self.classes[mc.name] = mc
        return mc

    def classifier(self, name: str) -> Optional[Classifier]:
        return self.classes.get(name) or self.datatypes.get(name) or self.enums.get(name)

    def resolve(self) -> "Metamodel":
        """Check the invariants and precompute inheritance data.

        Must be called once after building a metamodel by hand;
        ``load_metamodel`` does it for you.
        """
        names = {}
        for kind, table in (("class", self.classes), ("datatype", self.datatypes), ("enum", self.enums)):
            for n in table:
                if n in names:
                    raise DuplicateName(f"{kind} {n!r} clashes with {names[n]} of the same name")
                names[n] = kind
        for e in self.enums.values():
            if len(set(e.literals)) != len(e.literals):
                raise DuplicateName(f"enum {e.name!r} has duplicate literals")

        for mc in self.classes.values():
            mc.metamodel = self
            for s in mc.supertypes:
                if s not in self.classes:
                    raise UnresolvedType(f"supertype {s!r} of {mc.name} does not resolve")
            seen = set()
            for f in mc.own_features:
                if f.name in seen:
                    raise DuplicateName(f"feature {mc.name}.{f.name} declared twice")
                seen.add(f.name)
                if f.containment and f.kind != REFERENCE:
                    raise ParseError(f"{mc.name}.{f.name}: containment on an attribute")
                if f.upper_bound != -1 and f.upper_bound < f.lower_bound:
                    raise ParseError(f"{mc.name}.{f.name}: upper bound below lower bound")
                if f.external:
                    continue
                target = self.classifier(f.type_name)
                if target is None:
                    raise UnresolvedType(f"type {f.type_name!r} of {mc.name}.{f.name} does not resolve")
                if f.kind == REFERENCE and not isinstance(target, MetaClass):
                    raise UnresolvedType(f"reference {mc.name}.{f.name} typed by non-class {f.type_name!r}")
                if f.kind == ATTRIBUTE and isinstance(target, MetaClass):
                    raise UnresolvedType(f"attribute {mc.name}.{f.name} typed by class {f.type_name!r}")

        self._check_acyclic()
        for mc in self.classes.values():
            mc._effective = mc._by_name = mc._ancestors = None
        for mc in self.classes.values():
            effective = effective_features(mc)
            names = [f.name for f in effective]
            if len(set(names)) != len(names):
                dup = sorted({n for n in names if names.count(n) > 1})
                raise DuplicateName(f"{mc.name} inherits clashing features {dup}")

        for mc in self.classes.values():
            for f in mc.own_features:
                if f.opposite_name is None or f.external:
                    continue
                other = self.classes[f.type_name]
                opp = other.feature(f.opposite_name)
                if opp is None or opp.kind != REFERENCE:
                    raise UnresolvedType(f"opposite {f.type_name}.{f.opposite_name} of {mc.name}.{f.name} does not resolve")
        return self

    def _check_acyclic(self):
        state: Dict[str, int] = {}

        def visit(name, stack):
            mark = state.get(name)
            if mark == 1:
                raise UnresolvedType(f"inheritance cycle through {' -> '.join(stack + [name])}")
            if mark == 2:
                return
            state[name] = 1
            for s in self.classes[name].supertypes:
                visit(s, stack + [name])
            state[name] = 2

        for name in self.classes:
            visit(name, [])

    def __repr__(self) -> str:
        return f"<Metamodel {self.name} {self.ns_uri} ({len(self.classes)} classes)>"


def find_class(mm: Metamodel, name: str) -> Optional[MetaClass]:
    return mm.classes.get(name)


def effective_features(c: MetaClass) -> List[Feature]:
    """Inherited features (depth-first over supertypes, first occurrence
    wins) followed by the class's own features."""
    if c._effective is not None:
        return c._effective
    result: List[Feature] = []
    seen = set()
    for sup in c.super_classes():
        for f in effective_features(sup):
            if id(f) not in seen:
                seen.add(id(f))
                result.append(f)
    for f in c.own_features:
        if id(f) not in seen:
            seen.add(id(f))
            result.append(f)
    c._effective = result
    return result


def ancestors(c: MetaClass) -> frozenset:
    """Names of every class reachable through supertype edges, ``c`` included."""
    if c._ancestors is None:
        names = {c.name}
        for sup in c.super_classes():
            names |= ancestors(sup)
        c._ancestors = frozenset(names)
    return c._ancestors


def is_subtype(sub: MetaClass, sup: MetaClass) -> bool:
    if sub is sup:
        return True
    if sub.metamodel is not sup.metamodel:
        return False
    return sup.name in ancestors(sub)


def concrete_subtypes(mm: Metamodel, sup: MetaClass) -> List[MetaClass]:
    return [c for c in mm.classes.values() if not c.is_abstract and is_subtype(c, sup)]


# -- loading ---------------------------------------------------------------

def _local(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def _bool(value: Optional[str], default: bool = False) -> bool:
    if value is None:
        return default
    return value.strip().lower() == "true"


def _int(value: Optional[str], default: int, where: str) -> int:
    if value is None:
        return default
    try:
        return int(value)
    except ValueError:
        raise ParseError(f"{where}: not an integer: {value!r}") from None


def _split_type_ref(ref: str):
    """Split an eType/eSuperTypes token into (file part, fragment segments)."""
    # "ecore:EDataType http://...Ecore#//EString" carries a type hint first
    uri = ref.strip().split()[-1]
    if "#" not in uri:
        return uri, []
    file_part, frag = uri.split("#", 1)
    return file_part, [s for s in frag.split("/") if s]


class _Loader:
    def __init__(self, path: Path):
        self.path = path
        self.mm: Optional[Metamodel] = None
        self.pending_opposites = []

    def load(self) -> Metamodel:
        try:
            root = ET.parse(self.path).getroot()
        except ET.ParseError as exc:
            raise ParseError(f"{self.path}: {exc}") from None
        except OSError as exc:
            raise ParseError(f"{self.path}: {exc}") from None
        if _local(root.tag) == "XMI":
            packages = [c for c in root if _local(c.tag) == "EPackage"]
            if not packages:
                raise ParseError(f"{self.path}: no EPackage found")
            root = packages[0]
        if _local(root.tag) != "EPackage":
            raise ParseError(f"{self.path}: root element is {_local(root.tag)!r}, expected EPackage")
        ns_uri = root.get("nsURI")
        name = root.get("name")
        if not ns_uri or not name:
            raise ParseError(f"{self.path}: EPackage needs name and nsURI")
        self.mm = Metamodel(ns_uri=ns_uri, name=name, ns_prefix=root.get("nsPrefix") or name)
        self._package(root, name)
        return self.mm.resolve()

    def _ignore(self, where: str, what: str):
        self.mm.ignored.append((where, what))
        log.debug("ignoring %s on %s", what, where)

    def _package(self, elem: ET.Element, where: str):
        classes = []
        for child in elem:
            tag = _local(child.tag)
            if tag == "eClassifiers":
                classes.append(child)
            elif tag == "eSubpackages":
                self._package(child, f"{where}/{child.get('name')}")
            else:
                self._ignore(where, tag)
        # enums/datatypes first so class features can refer to them in any order
        for c in classes:
            kind = _local(c.get(f"{{{XSI_NS}}}type", "ecore:EClass").split(":")[-1])
            cname = c.get("name")
            if not cname:
                raise ParseError(f"{self.path}: classifier without a name in {where}")
            if kind == "EEnum":
                lits = [lit.get("name") for lit in c if _local(lit.tag) == "eLiterals"]
                self._add_unique(self.mm.enums, EnumType(cname, lits))
            elif kind == "EDataType":
                java = c.get("instanceClassName", "java.lang.String")
                self._add_unique(self.mm.datatypes, DataType(cname, _JAVA_KINDS.get(java, "string")))
            elif kind != "EClass":
                raise ParseError(f"{self.path}: unsupported classifier kind {kind!r}")
        for c in classes:
            if _local(c.get(f"{{{XSI_NS}}}type", "ecore:EClass").split(":")[-1]) == "EClass":
                self._eclass(c, f"{where}/{c.get('name')}")

    def _add_unique(self, table, item):
        if item.name in table or item.name in self.mm.classes:
            raise DuplicateName(f"duplicate classifier {item.name!r}")
        table[item.name] = item

    def _eclass(self, elem: ET.Element, where: str):
        for attr in elem.attrib:
            if attr not in _KNOWN_CLASS_ATTRS:
                self._ignore(where, attr)
        supers = []
        for token in (elem.get("eSuperTypes") or "").split():
            file_part, segs = _split_type_ref(token)
            if file_part or not segs:
                raise UnresolvedType(f"{where}: supertype {token!r} outside this metamodel is not supported")
            supers.append(segs[-1])
        mc = MetaClass(
            name=elem.get("name"),
            is_abstract=_bool(elem.get("abstract")) or _bool(elem.get("interface")),
            supertypes=supers,
        )
        for child in elem:
            tag = _local(child.tag)
            if tag == "eStructuralFeatures":
                mc.own_features.append(self._feature(child, f"{where}/{child.get('name')}"))
            else:
                self._ignore(where, tag)
        self.mm.add_class(mc)

    def _feature(self, elem: ET.Element, where: str) -> Feature:
        kind_tag = _local(elem.get(f"{{{XSI_NS}}}type", "").split(":")[-1])
        if kind_tag == "EAttribute":
            kind = ATTRIBUTE
        elif kind_tag == "EReference":
            kind = REFERENCE
        else:
            raise ParseError(f"{self.path}: {where}: unknown feature kind {kind_tag!r}")
        for attr in elem.attrib:
            if attr not in _KNOWN_FEATURE_ATTRS:
                self._ignore(where, attr)
        etype = elem.get("eType")
        if etype is None:
            # <eType href="..."/> child form
            for child in elem:
                if _local(child.tag) == "eType" and child.get("href"):
                    etype = child.get("href")
        if etype is None:
            raise UnresolvedType(f"{where}: feature has no eType")
        file_part, segs = _split_type_ref(etype)
        if not segs:
            raise UnresolvedType(f"{where}: cannot read eType {etype!r}")
        external = False
        if file_part == ECORE_NS and segs[-1] in ECORE_PRIMITIVES:
            type_name = segs[-1]
            if type_name not in self.mm.datatypes:
                self.mm.datatypes[type_name] = DataType(type_name, ECORE_PRIMITIVES[type_name])
        elif file_part:
            if kind == ATTRIBUTE:
                raise UnresolvedType(f"{where}: attribute type {etype!r} is not a known primitive")
            type_name = etype.strip().split()[-1]
            external = True
        else:
            type_name = segs[-1]
        opposite = None
        if elem.get("eOpposite"):
            o_file, o_segs = _split_type_ref(elem.get("eOpposite"))
            if o_file or len(o_segs) < 2:
                raise UnresolvedType(f"{where}: cannot resolve eOpposite {elem.get('eOpposite')!r}")
            if o_segs[-2] != type_name:
                raise UnresolvedType(f"{where}: eOpposite lives on {o_segs[-2]}, not on the reference type {type_name}")
            opposite = o_segs[-1]
        return Feature(
            name=elem.get("name"),
            kind=kind,
            type_name=type_name,
            lower_bound=_int(elem.get("lowerBound"), 0, where),
            upper_bound=_int(elem.get("upperBound"), 1, where),
            containment=_bool(elem.get("containment")),
            ordered=_bool(elem.get("ordered"), True),
            opposite_name=opposite,
            external=external,
        )


def load_metamodel(path: Union[str, Path]) -> Metamodel:
    """Load an ``.ecore`` file into a resolved :class:`Metamodel`."""
    return _Loader(Path(path)).load()


def load_metamodels(paths: Iterable[Union[str, Path]]) -> Dict[str, Metamodel]:
    """Load several files, keyed by namespace URI."""
    out: Dict[str, Metamodel] = {}
    for p in paths:
        mm = load_metamodel(p)
        out[mm.ns_uri] = mm
    return out
