"""Structural equivalence of two resource sets.

Objects are matched top-down by position: resources by file name, roots
by index, children by containment position.  Within a containment list the
children are aligned on a structural signature first, so an insertion or
deletion does not cascade into mismatches for every later sibling.
"""

from __future__ import annotations

import difflib
import enum
import json
import os
from dataclasses import asdict, dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Optional, Tuple

from .errors import DanglingReference
from .instance import ExternalRef, ModelObject, Resource, ResourceSet
from .xmi import object_fragment


class Kind(str, enum.Enum):
    MISSING_OBJECT = "MissingObject"
    EXTRA_OBJECT = "ExtraObject"
    CLASS_MISMATCH = "ClassMismatch"
    ATTR_MISMATCH = "AttrMismatch"
    REF_MISMATCH = "RefMismatch"
    ORDER_MISMATCH = "OrderMismatch"
    EXTERNAL_REF_MISMATCH = "ExternalRefMismatch"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class DiffEntry:
    kind: Kind
    path: str
    detail: str

    def __str__(self):
        return f"{self.kind}\t{self.path}\t{self.detail}"


@dataclass
class DiffReport:
    entries: List[DiffEntry] = field(default_factory=list)

    @property
    def empty(self) -> bool:
        return not self.entries

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def paths(self) -> List[str]:
        return [e.path for e in self.entries]

    def to_text(self) -> str:
        return "".join(f"{e}\n" for e in self.entries)

    def to_records(self) -> List[dict]:
        return [{"kind": e.kind.value, "path": e.path, "detail": e.detail} for e in self.entries]

    def to_json(self) -> str:
        return json.dumps(self.to_records(), indent=2)


def _basename(uri: str) -> str:
    return os.path.basename(uri)


def _path(obj: ModelObject, res: Resource) -> str:
    return f"{_basename(res.uri)}#{object_fragment(obj)}"


def _show(v) -> str:
    if isinstance(v, ModelObject):
        try:
            return object_fragment(v)
        except DanglingReference:
            return f"<detached {v.class_name}>"
    if isinstance(v, ExternalRef):
        return v.href
    if isinstance(v, list):
        return "[" + ", ".join(_show(x) for x in v) + "]"
    return repr(v)


class _Differ:
    def __init__(self, ignore_xmi_ids: bool, unordered: FrozenSet[str]):
        self.ignore_xmi_ids = ignore_xmi_ids
        self.unordered = unordered
        self.entries: List[DiffEntry] = []
        self.corr: Dict[int, ModelObject] = {}
        self.pairs: List[Tuple[ModelObject, ModelObject, Resource, Resource]] = []
        self._sigs: Dict[int, str] = {}

    def add(self, kind: Kind, path: str, detail: str):
        self.entries.append(DiffEntry(kind, path, detail))

    def signature(self, obj: ModelObject) -> str:
        """Reference-free structural fingerprint of a subtree."""
        sig = self._sigs.get(id(obj))
        if sig is None:
            parts = [obj.class_name]
            for fname in sorted(obj.slots):
                f = obj.meta_class.feature(fname)
                v = obj.slots[fname]
                if f.is_attribute:
                    parts.append(f"{fname}={v!r}")
                elif f.containment:
                    kids = v if f.many else [v]
                    parts.append(f"{fname}:[" + ",".join(self.signature(k) for k in kids) + "]")
            sig = "(" + " ".join(parts) + ")"
            self._sigs[id(obj)] = sig
        return sig

    # containment matching

    def match_lists(self, la: List[ModelObject], lb: List[ModelObject], ra, rb, where: str, ordered: bool):
        sa = [self.signature(x) for x in la]
        sb = [self.signature(x) for x in lb]
        if not ordered or (sa != sb and sorted(sa) == sorted(sb)):
            if ordered:
                self.add(Kind.ORDER_MISMATCH, where, "containment order differs")
            ia = sorted(range(len(la)), key=lambda i: sa[i])
            ib = sorted(range(len(lb)), key=lambda i: sb[i])
            la, lb = [la[i] for i in ia], [lb[i] for i in ib]
            sa, sb = sorted(sa), sorted(sb)
        sm = difflib.SequenceMatcher(a=sa, b=sb, autojunk=False)
        for op, a0, a1, b0, b1 in sm.get_opcodes():
            if op in ("equal", "replace"):
                n = min(a1 - a0, b1 - b0)
                for k in range(n):
                    self.match(la[a0 + k], lb[b0 + k], ra, rb)
                a0 += n
                b0 += n
            for x in la[a0:a1]:
                self.add(Kind.MISSING_OBJECT, _path(x, ra), f"{x.class_name} absent from second model")
            for y in lb[b0:b1]:
                self.add(Kind.EXTRA_OBJECT, _path(y, rb), f"{y.class_name} absent from first model")

    def match(self, a: ModelObject, b: ModelObject, ra: Resource, rb: Resource):
        if a.class_name != b.class_name:
            self.add(Kind.CLASS_MISMATCH, _path(a, ra), f"{a.class_name} != {b.class_name}")
            return
        self.corr[id(a)] = b
        self.pairs.append((a, b, ra, rb))
        for fname in self._features(a, b):
            f = a.meta_class.feature(fname) or b.meta_class.feature(fname)
            if f is None or not f.containment:
                continue
            va, vb = a.slots.get(fname), b.slots.get(fname)
            la = [] if va is None else (list(va) if f.many else [va])
            lb = [] if vb is None else (list(vb) if f.many else [vb])
            self.match_lists(la, lb, ra, rb, f"{_path(a, ra)}/@{fname}", fname not in self.unordered)

    @staticmethod
    def _features(a: ModelObject, b: ModelObject) -> List[str]:
        names = list(a.slots)
        names.extend(n for n in b.slots if n not in a.slots)
        return names

    # slot comparison

    def compare(self, a: ModelObject, b: ModelObject, ra: Resource, rb: Resource):
        path = _path(a, ra)
        if not self.ignore_xmi_ids and a.xmi_id != b.xmi_id:
            self.add(Kind.ATTR_MISMATCH, path, f"xmi:id {a.xmi_id!r} != {b.xmi_id!r}")
        for fname in self._features(a, b):
            f = a.meta_class.feature(fname) or b.meta_class.feature(fname)
            if f is None or f.containment:
                continue
            va, vb = a.slots.get(fname), b.slots.get(fname)
            if f.is_attribute:
                if fname in self.unordered and isinstance(va, list) and isinstance(vb, list):
                    same = sorted(map(repr, va)) == sorted(map(repr, vb))
                else:
                    same = type(va) is type(vb) and va == vb
                if not same:
                    self.add(Kind.ATTR_MISMATCH, path, f"{fname}: {_show(va)} != {_show(vb)}")
                continue
            self.compare_refs(path, fname, va, vb)

    def _same_target(self, x, y) -> bool:
        if isinstance(x, ExternalRef) or isinstance(y, ExternalRef):
            return x == y
        return self.corr.get(id(x)) is y

    def compare_refs(self, path: str, fname: str, va, vb):
        la = [] if va is None else (va if isinstance(va, list) else [va])
        lb = [] if vb is None else (vb if isinstance(vb, list) else [vb])
        if len(la) == len(lb) and all(self._same_target(x, y) for x, y in zip(la, lb)):
            return
        # same targets, different order?
        remaining = list(lb)
        for x in la:
            hit = next((i for i, y in enumerate(remaining) if self._same_target(x, y)), None)
            if hit is None:
                break
            remaining.pop(hit)
        else:
            if not remaining:
                if fname not in self.unordered:
                    self.add(Kind.ORDER_MISMATCH, path, f"{fname}: reference order differs")
                return
        externals = any(isinstance(v, ExternalRef) for v in la + lb)
        kind = Kind.EXTERNAL_REF_MISMATCH if externals else Kind.REF_MISMATCH
        self.add(kind, path, f"{fname}: {_show(va)} != {_show(vb)}")

    def run(self, a: ResourceSet, b: ResourceSet) -> DiffReport:
        b_by_name = {_basename(r.uri): r for r in b.resources}
        a_names = set()
        for ra in a.resources:
            name = _basename(ra.uri)
            a_names.add(name)
            rb = b_by_name.get(name)
            if rb is None:
                self.add(Kind.MISSING_OBJECT, name, "resource absent from second model")
                continue
            self.match_lists(list(ra.roots), list(rb.roots), ra, rb, f"{name}#/", True)
        for rb in b.resources:
            if _basename(rb.uri) not in a_names:
                self.add(Kind.EXTRA_OBJECT, _basename(rb.uri), "resource absent from first model")
        for pa, pb, ra, rb in self.pairs:
            self.compare(pa, pb, ra, rb)
        return DiffReport(self.entries)


def diff(a: ResourceSet, b: ResourceSet, ignore_xmi_ids: bool = True,
         unordered_features: Iterable[str] = ()) -> DiffReport:
    """Every structural difference between ``a`` and ``b``; empty means equivalent."""
    return _Differ(ignore_xmi_ids, frozenset(unordered_features)).run(a, b)


def equivalent(a: ResourceSet, b: ResourceSet, ignore_xmi_ids: bool = True,
               unordered_features: Iterable[str] = ()) -> bool:
    return diff(a, b, ignore_xmi_ids, unordered_features).empty
