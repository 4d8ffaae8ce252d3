import pytest

from migrata.diff import diff
from migrata.engine import DROP, MigrationPlan, MigratorRegistry, Rule, chain_migrate, detect_version, migrate
from migrata.errors import (
    MissingEnumLiteral,
    MissingTargetClass,
    MissingTargetFeature,
    MixedVersions,
    PostConformance,
    RegistryError,
    RuleError,
    UnknownNamespace,
)
from migrata.instance import ResourceSet, add, check_conformance, get, instantiate, set_value
from migrata.metamodel import load_metamodel
from migrata.plans import builtin_metamodel_path, graph_plan
from migrata.plans.gmf_map import map_plan_chain

from .conftest import GRAPH_FIXTURES, MAP, METAMODELS

DIAMOND_NS = "http://example.org/diamond"


def _variant(tmp_path, name, *edits):
    """A copy of the diamond metamodel under a new namespace, with text edits."""
    text = (METAMODELS / "diamond.ecore").read_text().replace(DIAMOND_NS, DIAMOND_NS + "/" + name)
    for old, new in edits:
        assert old in text
        text = text.replace(old, new)
    p = tmp_path / f"{name}.ecore"
    p.write_text(text)
    return load_metamodel(p)


@pytest.fixture
def diamond():
    return load_metamodel(METAMODELS / "diamond.ecore")


def _tree(mm):
    """root D(a='r') holding two parts that are each other's peer, plus a Lone root."""
    rs = ResourceSet(mm)
    res = rs.create_resource("m.dia")
    root = instantiate(mm, "D")
    set_value(root, "a", "r")
    set_value(root, "d", ["x", "y"])
    p1, p2 = instantiate(mm, "D"), instantiate(mm, "D")
    set_value(p1, "a", "p1")
    set_value(p2, "a", "p2")
    set_value(root, "parts", [p1, p2])
    set_value(p1, "peer", p2)
    res.add_root(root)
    res.add_root(instantiate(mm, "Lone"))
    return rs


@pytest.mark.parametrize("name", list(GRAPH_FIXTURES))
def test_identity_plan_is_a_deep_copy(read10, mm10, name):
    rs = read10(name)
    out, trace = migrate(rs, mm10, mm10, MigrationPlan.identity(mm10))
    assert diff(rs, out, ignore_xmi_ids=False).empty
    assert [r.uri for r in out.resources] == [r.uri for r in rs.resources]
    src_ids = {id(o) for o in rs.all_objects()}
    assert not any(id(o) in src_ids for o in out.all_objects())


def test_empty_resource_set(mm10, mm21):
    out, trace = migrate(ResourceSet(mm10), mm10, mm21, MigrationPlan(mm10.ns_uri, mm21.ns_uri))
    assert out.resources == [] and len(trace) == 0


def test_conservative_copy_between_versions(tmp_path, diamond):
    target = _variant(tmp_path, "v2")
    rs = _tree(diamond)
    out, trace = migrate(rs, diamond, target, MigrationPlan(diamond.ns_uri, target.ns_uri))
    # trace is total and injective over the source objects
    assert len(trace) == len(list(rs.all_objects())) == 4
    assert len({id(t) for _, t in trace.pairs()}) == 4
    root = out.resources[0].roots[0]
    assert root.meta_class.metamodel is target
    assert get(root, "d") == ["x", "y"]
    p1, p2 = get(root, "parts")
    assert get(p1, "peer") is p2 and get(p2, "peer") is p1
    assert check_conformance(out, target) == []


def test_source_is_left_untouched(tmp_path, diamond):
    target = _variant(tmp_path, "v2")
    rs = _tree(diamond)
    before = _tree(diamond)
    migrate(rs, diamond, target, MigrationPlan(diamond.ns_uri, target.ns_uri))
    assert diff(before, rs).empty


def test_missing_target_class(tmp_path, diamond):
    target = _variant(tmp_path, "nolone", ('<eClassifiers xsi:type="ecore:EClass" name="Lone"/>', ""))
    with pytest.raises(MissingTargetClass):
        migrate(_tree(diamond), diamond, target, MigrationPlan(diamond.ns_uri, target.ns_uri))


def test_missing_target_feature(tmp_path, diamond):
    target = _variant(tmp_path, "nod", ('name="d" upperBound="-1"', 'name="e" upperBound="-1"'))
    with pytest.raises(MissingTargetFeature):
        migrate(_tree(diamond), diamond, target, MigrationPlan(diamond.ns_uri, target.ns_uri))


def test_missing_target_reference(tmp_path, diamond):
    target = _variant(tmp_path, "nopeer", ('name="peer" eType="#//D" eOpposite="#//D/peer"', 'name="buddy" eType="#//D" eOpposite="#//D/buddy"'))
    with pytest.raises(MissingTargetFeature):
        migrate(_tree(diamond), diamond, target, MigrationPlan(diamond.ns_uri, target.ns_uri))


def test_discard_drops_a_feature(tmp_path, diamond):
    target = _variant(tmp_path, "nod", ('name="d" upperBound="-1"', 'name="e" upperBound="-1"'))
    plan = MigrationPlan(diamond.ns_uri, target.ns_uri, discard={("A", "d"), ("D", "d")})
    out, _ = migrate(_tree(diamond), diamond, target, plan)
    assert "d" not in out.resources[0].roots[0].slots


def test_missing_enum_literal(mm10, mm21, tmp_path, read10):
    # a 2.1 variant whose Direction enum lacks NSEW
    src = builtin_metamodel_path("gmfgraph-2.1").read_text()
    assert 'name="NSEW"' in src
    p = tmp_path / "g.ecore"
    p.write_text("\n".join(l for l in src.splitlines() if 'name="NSEW"' not in l))
    target = load_metamodel(p)
    with pytest.raises(MissingEnumLiteral):
        migrate(read10("statemachine"), mm10, target, graph_plan(mm10, target))


def test_rule_can_drop_and_retype(tmp_path, diamond):
    target = _variant(tmp_path, "v2")
    plan = MigrationPlan(diamond.ns_uri, target.ns_uri, [
        Rule("Lone", create=lambda src, ctx: DROP),
        Rule("D", create=lambda src, ctx: ctx.copy(src), guard=lambda src: src.slots.get("a") != "p2"),
    ])
    rs = _tree(diamond)
    out, trace = migrate(rs, diamond, target, plan)
    assert len(out.resources[0].roots) == 1
    assert len(trace.dropped()) == 1
    p2 = get(rs.resources[0].roots[0], "parts")[1]
    assert id(p2) not in trace.handled_by


def test_dropped_reference_targets_vanish(tmp_path, diamond):
    target = _variant(tmp_path, "v2")
    plan = MigrationPlan(diamond.ns_uri, target.ns_uri, [
        Rule("D", create=lambda src, ctx: DROP if src.slots.get("a") == "p2" else ctx.copy(src)),
    ])
    out, trace = migrate(_tree(diamond), diamond, target, plan)
    root = out.resources[0].roots[0]
    (p1,) = get(root, "parts")
    assert get(p1, "peer") is None


def test_rule_errors_are_wrapped(tmp_path, diamond):
    target = _variant(tmp_path, "v2")
    plan = MigrationPlan(diamond.ns_uri, target.ns_uri, [Rule("Lone", create=lambda src, ctx: 1 / 0)])
    with pytest.raises(RuleError, match="ZeroDivisionError|division"):
        migrate(_tree(diamond), diamond, target, plan)
    plan = MigrationPlan(diamond.ns_uri, target.ns_uri, [Rule("Lone", create=lambda src, ctx: "nope")])
    with pytest.raises(RuleError):
        migrate(_tree(diamond), diamond, target, plan)


def test_unplaced_rule_objects_are_an_error(tmp_path, diamond):
    target = _variant(tmp_path, "v2")

    def stray(src, ctx):
        ctx.create("Lone")
        return ctx.copy(src)

    plan = MigrationPlan(diamond.ns_uri, target.ns_uri, [Rule("Lone", create=stray)])
    with pytest.raises(RuleError, match="never placed"):
        migrate(_tree(diamond), diamond, target, plan)


def test_post_conformance(tmp_path, diamond):
    # the target makes a Lone attribute mandatory; plain copying cannot fill it
    target = _variant(tmp_path, "strict", (
        '<eClassifiers xsi:type="ecore:EClass" name="Lone"/>',
        '<eClassifiers xsi:type="ecore:EClass" name="Lone"><eStructuralFeatures xsi:type="ecore:EAttribute" '
        'name="tag" lowerBound="1" eType="ecore:EDataType http://www.eclipse.org/emf/2002/Ecore#//EString"/>'
        '</eClassifiers>'))
    plan = MigrationPlan(diamond.ns_uri, target.ns_uri)
    with pytest.raises(PostConformance) as info:
        migrate(_tree(diamond), diamond, target, plan)
    assert len(info.value.violations) == 1
    assert "tag" in str(info.value.violations[0])
    out, _ = migrate(_tree(diamond), diamond, target, plan, check=False)
    assert len(check_conformance(out, target)) == 1


def test_conservative_copy_is_not_enough_for_graphs(mm10, mm21, read10):
    # Node.figure is retyped in 2.1, so copying the reference fails
    with pytest.raises(Exception) as info:
        migrate(read10("statemachine"), mm10, mm21, MigrationPlan(mm10.ns_uri, mm21.ns_uri))
    from migrata.errors import MigrataError
    assert isinstance(info.value, MigrataError)


def test_plan_must_match_metamodels(mm10, mm21, read10):
    with pytest.raises(RuleError):
        migrate(read10("single"), mm10, mm21, MigrationPlan.identity(mm10))
    with pytest.raises(RuleError):
        MigrationPlan(mm10.ns_uri, mm21.ns_uri, [Rule("Node"), Rule("Node")])


# -- registry and chaining ---------------------------------------------------

def test_registry_rules(map_mms):
    reg = MigratorRegistry()
    reg.register("1.0", map_mms[0])
    with pytest.raises(RegistryError):
        reg.register("2.0", map_mms[1])
    with pytest.raises(RegistryError):
        reg.register("again", map_mms[0], MigrationPlan(map_mms[0].ns_uri, map_mms[0].ns_uri))
    with pytest.raises(UnknownNamespace):
        reg.version("urn:nothing")


def test_detect_version_uses_loaded_namespaces(map_mms):
    reg = map_plan_chain(map_mms)
    for i, sub in enumerate(("v1", "v2", "v3")):
        v = detect_version(MAP / sub / "statemachine.gmfmap", reg)
        assert v.ns_uri == map_mms[i].ns_uri
    assert [v.label for v in reg.versions] == ["1.0", "2.0", "2.1"]
    with pytest.raises(UnknownNamespace):
        detect_version(MAP / "unknown_ns.gmfmap", reg)


def test_chain_lengths(map_mms):
    reg = map_plan_chain(map_mms)
    assert [len(reg.chain_from(mm.ns_uri)) for mm in map_mms] == [2, 1, 0]


def test_chain_from_latest_is_a_no_op(map_mms):
    reg = map_plan_chain(map_mms)
    path = MAP / "v3" / "statemachine.gmfmap"
    rs = chain_migrate([path], reg)
    from migrata.xmi import read_resource_set
    assert diff(read_resource_set([path], reg.metamodels), rs, ignore_xmi_ids=False).empty


def test_chain_rejects_mixed_versions(map_mms):
    reg = map_plan_chain(map_mms)
    with pytest.raises(MixedVersions):
        chain_migrate([MAP / "v1" / "statemachine.gmfmap", MAP / "v2" / "statemachine.gmfmap"], reg)
