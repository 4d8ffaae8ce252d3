"""XMI 2.0 reading and writing for resource sets.

Reading is two-pass: every file is turned into a containment tree first,
then reference tokens are resolved across the whole set, so forward and
cross-file references work regardless of file order.  Tokens that point
at files outside the set become :class:`ExternalRef` values and are
written back unchanged.

Output layout is deterministic: UTF-8, two-space indent, attributes in
metamodel feature order, unset slots omitted.
"""

from __future__ import annotations

import logging
import os
import re
import xml.etree.ElementTree as ET
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union
from xml.sax.saxutils import escape

from .errors import (
    DanglingReference,
    FeatureMismatch,
    MixedVersions,
    ParseError,
    UnknownClass,
    UnknownNamespace,
    UnresolvedReference,
)
from .instance import (
    ExternalRef,
    ModelObject,
    Resource,
    ResourceSet,
    _link_opposite,
    resource_of,
)
from .metamodel import XMI_NS, XSI_NS, DataType, EnumType, Feature, Metamodel, effective_features

log = logging.getLogger(__name__)

PathLike = Union[str, Path]
MetamodelLookup = Mapping[str, Metamodel]

_XMI_VERSION = f"{{{XMI_NS}}}version"
_XMI_ID = f"{{{XMI_NS}}}id"
_XSI_TYPE = f"{{{XSI_NS}}}type"
_SKIPPED_ATTRS = {_XMI_VERSION, _XMI_ID, _XSI_TYPE, f"{{{XMI_NS}}}uuid", f"{{{XSI_NS}}}schemaLocation"}
_SEGMENT = re.compile(r"^@([^.]+)(?:\.(\d+))?$")
_ATTR_ESCAPES = {'"': "&quot;", "\n": "&#10;", "\r": "&#13;", "\t": "&#9;"}


def _split_tag(tag: str) -> Tuple[str, str]:
    if tag.startswith("{"):
        ns, local = tag[1:].split("}", 1)
        return ns, local
    return "", tag


# -- namespace sniffing ----------------------------------------------------

def sniff_namespace(path: PathLike) -> str:
    """Model namespace URI of a document, read from its first elements only."""
    declared: List[str] = []
    starts = 0
    try:
        for event, item in ET.iterparse(str(path), events=("start-ns", "start")):
            if event == "start-ns":
                declared.append(item[1])
                continue
            starts += 1
            ns, local = _split_tag(item.tag)
            if starts == 1 and not (ns == XMI_NS and local == "XMI"):
                return ns
            if starts == 2:
                return ns
    except ET.ParseError as exc:
        raise ParseError(f"{path}: {exc}") from None
    except OSError as exc:
        raise ParseError(f"{path}: {exc}") from None
    # empty xmi:XMI wrapper: fall back to its namespace declarations
    candidates = [u for u in dict.fromkeys(declared) if u not in (XMI_NS, XSI_NS)]
    if len(candidates) != 1:
        raise UnknownNamespace(f"{path}: cannot tell the model namespace from {candidates}")
    return candidates[0]


# -- fragments -------------------------------------------------------------

def object_fragment(obj: ModelObject) -> str:
    """Canonical path of ``obj`` inside its resource, e.g. ``/0/@figures.1``."""
    steps = []
    o = obj
    while o.owner is not None:
        parent, fname = o.owner
        f = parent.meta_class.feature(fname)
        if f.many:
            idx = next(i for i, x in enumerate(parent.slots[fname]) if x is o)
            steps.append(f"@{fname}.{idx}")
        else:
            steps.append(f"@{fname}")
        o = parent
    res = o._resource
    if res is None:
        raise DanglingReference(f"{obj!r} is not in any resource")
    idx = next(i for i, r in enumerate(res.roots) if r is o)
    return "/" + "/".join([str(idx)] + list(reversed(steps)))


def _id_index(resource: Resource) -> Dict[str, ModelObject]:
    return {o.xmi_id: o for o in resource.all_objects() if o.xmi_id}


def resolve_fragment(resource: Resource, fragment: str, ids: Optional[Dict[str, ModelObject]] = None) -> Optional[ModelObject]:
    """Object addressed by ``fragment`` in ``resource``, or None."""
    frag = fragment.strip()
    if frag.startswith("//"):
        rest = frag[2:]
        frag = "/0" + ("/" + rest if rest else "")
    if frag in ("", "/"):
        frag = "/0"
    if not frag.startswith("/"):
        if ids is None:
            ids = _id_index(resource)
        return ids.get(frag)
    segments = frag[1:].split("/")
    try:
        obj = resource.roots[int(segments[0])]
    except (ValueError, IndexError):
        return None
    for seg in segments[1:]:
        m = _SEGMENT.match(seg)
        if not m:
            return None
        f = obj.meta_class.feature(m.group(1))
        if f is None or not f.containment or f.name not in obj.slots:
            return None
        idx = int(m.group(2)) if m.group(2) is not None else 0
        if f.many:
            children = obj.slots[f.name]
            if idx >= len(children):
                return None
            obj = children[idx]
        else:
            if idx != 0:
                return None
            obj = obj.slots[f.name]
    return obj


def _norm(path: str) -> str:
    return os.path.normpath(os.path.abspath(path))


def resolve_uri(rs: ResourceSet, uri: str, context: Optional[Resource] = None):
    """Resolve ``fragment`` or ``file#fragment`` against ``rs``.

    Bare fragments are looked up in ``context`` (default: the first
    resource).  Files outside the set yield an :class:`ExternalRef`.
    """
    if "#" not in uri:
        file_part, frag = "", uri
    else:
        file_part, frag = uri.split("#", 1)
    if not file_part:
        res = context or (rs.resources[0] if rs.resources else None)
    else:
        base = os.path.dirname(context.uri) if context is not None else ""
        res = _find_resource(rs, os.path.join(base, file_part))
        if res is None:
            return ExternalRef(file_part, frag)
    obj = resolve_fragment(res, frag) if res is not None else None
    if obj is None:
        raise UnresolvedReference(f"{uri!r} does not resolve")
    return obj


def _find_resource(rs: ResourceSet, path: str) -> Optional[Resource]:
    target = _norm(path)
    for r in rs.resources:
        if _norm(r.uri) == target:
            return r
    return None


# -- reading ---------------------------------------------------------------

class _Reader:
    def __init__(self, registry: MetamodelLookup, lenient: bool):
        self.registry = registry
        self.lenient = lenient
        self.mm: Optional[Metamodel] = None
        self.ns_uri: Optional[str] = None
        # (object, feature, tokens, resource)
        self.pending: List[Tuple[ModelObject, Feature, List[str], Resource]] = []

    def problem(self, msg: str):
        if self.lenient:
            log.warning("%s (dropped)", msg)
        else:
            raise FeatureMismatch(msg)

    def read(self, paths: Sequence[PathLike]) -> ResourceSet:
        parsed = []
        for p in paths:
            nsmap: Dict[str, str] = {}
            try:
                it = ET.iterparse(str(p), events=("start-ns",))
                for _, (prefix, uri) in it:
                    nsmap.setdefault(prefix, uri)
                root = it.root
            except ET.ParseError as exc:
                raise ParseError(f"{p}: {exc}") from None
            except OSError as exc:
                raise ParseError(f"{p}: {exc}") from None
            ns = self._model_ns(p, root, nsmap)
            if ns not in self.registry:
                raise UnknownNamespace(f"{p}: namespace {ns!r} is not registered")
            if self.ns_uri is None:
                self.ns_uri = ns
            elif ns != self.ns_uri:
                raise MixedVersions(f"{p} declares {ns}, earlier files declare {self.ns_uri}")
            parsed.append((p, root, nsmap))

        if self.ns_uri is None:
            raise ParseError("no model files given")
        self.mm = self.registry[self.ns_uri]
        rs = ResourceSet(self.mm)
        for p, root, nsmap in parsed:
            res = rs.create_resource(str(p))
            ns, local = _split_tag(root.tag)
            elems = list(root) if (ns == XMI_NS and local == "XMI") else [root]
            for el in elems:
                ens, cname = _split_tag(el.tag)
                if ens != self.ns_uri:
                    raise MixedVersions(f"{p}: root element {cname} in namespace {ens!r}")
                res.add_root(self._build(el, self._class(cname, p), nsmap, res))
        self._resolve(rs)
        return rs

    def _model_ns(self, path, root, nsmap) -> str:
        ns, local = _split_tag(root.tag)
        if not (ns == XMI_NS and local == "XMI"):
            return ns
        kids = list(root)
        if kids:
            return _split_tag(kids[0].tag)[0]
        candidates = [u for u in nsmap.values() if u not in (XMI_NS, XSI_NS)]
        if len(set(candidates)) != 1:
            raise UnknownNamespace(f"{path}: cannot tell the model namespace of an empty document")
        return candidates[0]

    def _class(self, name: str, where):
        mc = self.mm.classes.get(name)
        if mc is None:
            raise UnknownClass(f"{where}: no class {name!r} in {self.mm.name}")
        return mc

    def _xsi_class(self, value: str, nsmap, where):
        prefix, _, name = value.rpartition(":")
        ns = nsmap.get(prefix, self.ns_uri if not prefix else None)
        if ns != self.ns_uri:
            raise UnknownNamespace(f"{where}: xsi:type {value!r} is outside {self.ns_uri}")
        return self._class(name, where)

    def _build(self, el: ET.Element, mc, nsmap, res: Resource) -> ModelObject:
        obj = ModelObject(mc, el.get(_XMI_ID))
        where = f"{res.uri}: {mc.name}"
        for key, raw in el.attrib.items():
            if key in _SKIPPED_ATTRS or key.startswith("{"):
                continue
            f = mc.feature(key)
            if f is None:
                self.problem(f"{where}: unknown feature {key!r}")
                continue
            if f.is_attribute:
                if f.many:
                    obj.slots[f.name] = [self._primitive(f, t, where) for t in raw.split()]
                else:
                    obj.slots[f.name] = self._primitive(f, raw, where)
            elif f.containment:
                raise ParseError(f"{where}: containment feature {key!r} given as an attribute")
            else:
                self.pending.append((obj, f, raw.split(), res))

        for child in el:
            _, fname = _split_tag(child.tag)
            f = mc.feature(fname)
            if f is None:
                self.problem(f"{where}: unknown feature {fname!r}")
                continue
            if f.is_attribute:
                value = self._primitive(f, child.text or "", where)
                if f.many:
                    obj.slots.setdefault(f.name, []).append(value)
                else:
                    obj.slots[f.name] = value
            elif f.containment:
                if child.get("href") is not None:
                    raise ParseError(f"{where}: cross-document containment in {fname!r} is not supported")
                xsi = child.get(_XSI_TYPE)
                cmc = self._xsi_class(xsi, nsmap, where) if xsi else self._class(f.type_name, where)
                sub = self._build(child, cmc, nsmap, res)
                sub.owner = (obj, f.name)
                if f.many:
                    obj.slots.setdefault(f.name, []).append(sub)
                elif f.name in obj.slots:
                    raise ParseError(f"{where}: several values for single-valued {fname!r}")
                else:
                    obj.slots[f.name] = sub
            else:
                href = child.get("href")
                if href is None:
                    raise ParseError(f"{where}: reference element {fname!r} without href")
                self.pending.append((obj, f, [href], res))
        return obj

    def _primitive(self, f: Feature, raw: str, where):
        t = self.mm.classifier(f.type_name)
        if isinstance(t, EnumType):
            if raw not in t.literals:
                raise ParseError(f"{where}: {raw!r} is not a literal of {t.name}")
            return raw
        kind = t.primitive_kind if isinstance(t, DataType) else "string"
        try:
            if kind == "boolean":
                low = raw.strip().lower()
                if low not in ("true", "false"):
                    raise ValueError(raw)
                return low == "true"
            if kind == "integer":
                return int(raw)
            if kind == "float":
                return float(raw)
        except ValueError:
            raise ParseError(f"{where}: {f.name}={raw!r} is not a {kind}") from None
        return raw

    def _resolve(self, rs: ResourceSet):
        ids = {id(r): _id_index(r) for r in rs.resources}
        by_path = {_norm(r.uri): r for r in rs.resources}
        slots: Dict[Tuple[int, str], list] = {}
        owners = {}
        for obj, f, tokens, res in self.pending:
            key = (id(obj), f.name)
            owners[key] = (obj, f)
            bucket = slots.setdefault(key, [])
            for token in tokens:
                bucket.append(self._target(token, res, by_path, ids))
        for key, values in slots.items():
            obj, f = owners[key]
            if f.many:
                obj.slots[f.name] = values
            elif len(values) == 1:
                obj.slots[f.name] = values[0]
            else:
                raise ParseError(f"{obj.class_name}.{f.name}: {len(values)} values for a single-valued reference")
        # documents may serialize only one side of a bidirectional pair
        for obj, f in owners.values():
            if f.opposite_name is None:
                continue
            values = obj.slots[f.name] if f.many else [obj.slots[f.name]]
            for t in values:
                if not isinstance(t, ModelObject):
                    continue
                opp = t.meta_class.feature(f.opposite_name)
                if opp is None:
                    continue
                cur = t.slots.get(opp.name)
                if opp.many or cur is None:
                    _link_opposite(obj, opp, t)

    def _target(self, token: str, res: Resource, by_path, ids):
        if "#" in token:
            file_part, frag = token.split("#", 1)
        else:
            file_part, frag = "", token
        if file_part:
            target_res = by_path.get(_norm(os.path.join(os.path.dirname(res.uri), file_part)))
            if target_res is None:
                return ExternalRef(file_part, frag)
        else:
            target_res = res
        obj = resolve_fragment(target_res, frag, ids[id(target_res)])
        if obj is None:
            raise UnresolvedReference(f"{res.uri}: {token!r} does not resolve")
        return obj


def read_resource_set(paths: Sequence[PathLike], registry: Union[MetamodelLookup, Iterable[Metamodel]],
                      lenient: bool = False) -> ResourceSet:
    """Read model files into one resource set, one resource per file.

    ``registry`` maps namespace URIs to metamodels (an iterable of
    metamodels is accepted too).  With ``lenient``, unknown features are
    logged and dropped instead of raising :class:`FeatureMismatch`.
    """
    if not isinstance(registry, Mapping):
        registry = {mm.ns_uri: mm for mm in registry}
    return _Reader(registry, lenient).read(list(paths))


# -- writing ---------------------------------------------------------------

def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v) if not isinstance(v, float) else repr(v)


def _attr(v: str) -> str:
    return '"' + escape(v, _ATTR_ESCAPES) + '"'


class _Writer:
    def __init__(self, rs: ResourceSet):
        self.rs = rs
        self.mm = rs.metamodel
        self.prefix = self.mm.ns_prefix or self.mm.name
        self.members = {id(r) for r in rs.resources}

    def ref_token(self, src_res: Resource, target) -> Tuple[bool, str]:
        """(is intra-resource, token) for one reference value."""
        if isinstance(target, ExternalRef):
            return False, target.href
        res = resource_of(target)
        if res is None or id(res) not in self.members:
            raise DanglingReference(f"reference to {target!r}, which is in no resource of the set")
        frag = object_fragment(target)
        if res is src_res:
            return True, frag
        rel = os.path.relpath(res.uri, os.path.dirname(src_res.uri) or ".")
        return False, f"{Path(rel).as_posix()}#{frag}"

    def serialize(self, res: Resource) -> str:
        lines = ['<?xml version="1.0" encoding="UTF-8"?>']
        ns_attrs = [
            ("xmi:version", "2.0"),
            ("xmlns:xmi", XMI_NS),
            ("xmlns:xsi", XSI_NS),
            (f"xmlns:{self.prefix}", self.mm.ns_uri),
        ]
        if len(res.roots) == 1:
            self._element(lines, res, res.roots[0], f"{self.prefix}:{res.roots[0].class_name}", None, 0, ns_attrs)
        else:
            head = " ".join(f"{k}={_attr(v)}" for k, v in ns_attrs)
            if not res.roots:
                lines.append(f"<xmi:XMI {head}/>")
            else:
                lines.append(f"<xmi:XMI {head}>")
                for r in res.roots:
                    self._element(lines, res, r, f"{self.prefix}:{r.class_name}", None, 1, [])
                lines.append("</xmi:XMI>")
        return "\n".join(lines) + "\n"

    def _element(self, lines, res, obj: ModelObject, tag: str, static_type: Optional[str], depth: int, extra):
        pad = "  " * depth
        attrs = list(extra)
        if static_type is not None and obj.class_name != static_type:
            attrs.append(("xsi:type", f"{self.prefix}:{obj.class_name}"))
        if obj.xmi_id:
            attrs.append(("xmi:id", obj.xmi_id))
        children = []
        for f in effective_features(obj.meta_class):
            if f.name not in obj.slots:
                continue
            value = obj.slots[f.name]
            values = value if f.many else [value]
            if f.is_attribute:
                if f.many:
                    children.extend(("text", f.name, v) for v in values)
                else:
                    attrs.append((f.name, _format(value)))
            elif f.containment:
                children.extend(("obj", f, v) for v in values)
            else:
                tokens = [self.ref_token(res, v) for v in values]
                if all(intra for intra, _ in tokens):
                    attrs.append((f.name, " ".join(t for _, t in tokens)))
                else:
                    for intra, t in tokens:
                        children.append(("href", f.name, "#" + t if intra else t))
        head = " ".join([tag] + [f"{k}={_attr(v)}" for k, v in attrs])
        if not children:
            lines.append(f"{pad}<{head}/>")
            return
        lines.append(f"{pad}<{head}>")
        for kind, f, v in children:
            if kind == "text":
                lines.append(f"{pad}  <{f}>{escape(_format(v))}</{f}>")
            elif kind == "href":
                lines.append(f"{pad}  <{f} href={_attr(v)}/>")
            else:
                self._element(lines, res, v, f.name, f.type_name, depth + 1, [])
        lines.append(f"{pad}</{tag}>")


def serialize_resource(res: Resource, rs: Optional[ResourceSet] = None) -> str:
    rs = rs or res.resource_set
    return _Writer(rs).serialize(res)


def output_names(rs: ResourceSet) -> List[str]:
    """Relative output path per resource; plain file names for a single directory."""
    if not rs.resources:
        return []
    dirs = [os.path.dirname(_norm(r.uri)) for r in rs.resources]
    common = os.path.commonpath(dirs)
    return [Path(os.path.relpath(_norm(r.uri), common)).as_posix() for r in rs.resources]


def write_resource_set(rs: ResourceSet, output_dir: PathLike) -> List[Path]:
    """Write one file per resource into ``output_dir``.

    Every document is serialized before anything touches the disk, so a
    dangling reference leaves the directory untouched.
    """
    writer = _Writer(rs)
    texts = [writer.serialize(r) for r in rs.resources]
    out = Path(output_dir)
    written = []
    for name, text in zip(output_names(rs), texts):
        target = out / name
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_bytes(text.encode("utf-8"))
        written.append(target)
    return written
