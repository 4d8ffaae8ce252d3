import pytest

from migrata.diff import diff
from migrata.engine import migrate
from migrata.errors import PlanConstructionError, RuleError
from migrata.instance import ExternalRef, ResourceSet, check_conformance, get, instantiate, set_value
from migrata.plans.gmf_graph import figure_users, graph_plan
from migrata.xmi import object_fragment, read_resource_set, write_resource_set

from .conftest import EXPECTED21, GRAPH10, GRAPH_FIXTURES


@pytest.fixture(scope="module")
def plan(mm10, mm21):
    return graph_plan(mm10, mm21)


def _migrate(rs, mm10, mm21, plan):
    return migrate(rs, mm10, mm21, plan)


def _descriptors(rs):
    return [o for o in rs.all_objects() if o.class_name == "FigureDescriptor"]


def _accesses(rs):
    return [o for o in rs.all_objects() if o.class_name == "ChildAccess"]


def _users(rs):
    return [o for o in rs.all_objects() if o.class_name in ("Node", "Connection", "Compartment", "DiagramLabel")]


def test_plan_shape(plan, mm10):
    assert sorted(figure_users(mm10)) == ["Compartment", "Connection", "DiagramLabel", "Node"]
    assert sorted(plan.rule_classes()) == ["Compartment", "Connection", "DiagramLabel", "FigureGallery", "Node"]
    assert len(plan.rule_classes()) <= 6
    assert plan.discard == {("Figure", "referencingElements")}


@pytest.mark.parametrize("name, expected", [
    ("statemachine", [EXPECTED21 / "statemachine.gmfgraph"]),
    ("multi", [EXPECTED21 / "multi" / "a.gmfgraph", EXPECTED21 / "multi" / "b.gmfgraph"]),
])
def test_matches_hand_written_reference(read10, mm10, mm21, plan, name, expected):
    out, _ = _migrate(read10(name), mm10, mm21, plan)
    report = diff(read_resource_set(expected, [mm21]), out)
    assert report.empty, report.to_text()


@pytest.mark.parametrize("name", list(GRAPH_FIXTURES))
def test_output_conforms_and_round_trips(read10, mm10, mm21, plan, name, tmp_path):
    out, _ = _migrate(read10(name), mm10, mm21, plan)
    assert check_conformance(out, mm21) == []
    back = read_resource_set(write_resource_set(out, tmp_path), [mm21])
    assert diff(out, back, ignore_xmi_ids=False).empty


# top-level gallery figures per fixture, counted by hand from the inputs
DESCRIPTOR_COUNTS = {"empty": 0, "single": 1, "statemachine": 4, "multi": 2, "deep": 3}
# distinct nested figures used by some diagram element
ACCESS_COUNTS = {"empty": 0, "single": 0, "statemachine": 3, "multi": 1, "deep": 2}


@pytest.mark.parametrize("name", list(GRAPH_FIXTURES))
def test_descriptor_and_access_counts(read10, mm10, mm21, plan, name):
    out, _ = _migrate(read10(name), mm10, mm21, plan)
    assert len(_descriptors(out)) == DESCRIPTOR_COUNTS[name]
    assert len(_accesses(out)) == ACCESS_COUNTS[name]


@pytest.mark.parametrize("name", list(GRAPH_FIXTURES))
def test_every_figure_user_is_retargeted(read10, mm10, mm21, plan, name):
    rs = read10(name)
    out, trace = _migrate(rs, mm10, mm21, plan)
    for src in _users(rs):
        fig = get(src, "figure")
        tgt = trace.image(src)
        d = get(tgt, "figure")
        assert d.class_name == "FigureDescriptor"
        actual = get(d, "actualFigure")
        if trace.image(fig) is actual:
            # direct use of a top-level figure: no accessor needed
            if tgt.meta_class.feature("accessor") is not None:
                assert get(tgt, "accessor") is None
        else:
            acc = get(tgt, "accessor")
            assert acc in get(d, "accessors")
            assert get(acc, "figure") is trace.image(fig)
            # the accessed figure really sits inside the descriptor's figure
            p = get(acc, "figure")
            while p is not actual:
                p = p.owner[0]


def test_accessors_are_shared_not_duplicated(read10, mm10, mm21, plan):
    out, _ = _migrate(read10("deep"), mm10, mm21, plan)
    labels = {get(o, "name"): o for o in out.all_objects() if o.class_name == "DiagramLabel"}
    assert get(labels["DeepLabel"], "accessor") is get(labels["DeepLabelAgain"], "accessor")
    for acc in _accesses(out):
        assert acc.owner[0].class_name == "FigureDescriptor"
    figs = [get(a, "figure") for a in _accesses(out)]
    assert len({id(f) for f in figs}) == len(figs)


def test_five_levels_deep(read10, mm10, mm21, plan):
    out, _ = _migrate(read10("deep"), mm10, mm21, plan)
    labels = {get(o, "name"): o for o in out.all_objects() if o.class_name == "DiagramLabel"}
    acc = get(labels["DeepLabel"], "accessor")
    assert object_fragment(get(acc, "figure")) == \
        "/0/@figures.0/@descriptors.0/@actualFigure/@children.0/@children.0/@children.0/@children.0"
    # the second gallery gets its own descriptor
    dot = labels["DotLabel"]
    assert object_fragment(get(dot, "figure")) == "/0/@figures.1/@descriptors.0"


def test_conservative_copy_witness(read10, mm10, mm21, plan):
    rs = read10("statemachine")
    out, trace = _migrate(rs, mm10, mm21, plan)
    for src, tgt in trace.pairs():
        assert tgt.class_name == src.class_name
        for f, v in src.slots.items():
            if src.meta_class.feature(f).is_attribute:
                assert tgt.slots[f] == v
        assert "referencingElements" not in tgt.slots
    assert len(trace) == len(list(rs.all_objects()))


def test_xmi_ids_survive(read10, mm10, mm21, plan):
    out, _ = _migrate(read10("single"), mm10, mm21, plan)
    ids = {o.xmi_id for o in out.all_objects() if o.xmi_id}
    assert ids == {"fig1", "node1"}


def test_unreferenced_figure_hand_example(mm10, mm21, plan):
    # gallery holding one figure nobody uses: 3 target objects
    #   gallery -> descriptors[0] = FigureDescriptor(name=Lonely)
    #   descriptor.actualFigure = Ellipse(name=Lonely), no accessors
    rs = ResourceSet(mm10)
    res = rs.create_resource("lonely.gmfgraph")
    gallery = instantiate(mm10, "FigureGallery")
    set_value(gallery, "name", "G")
    fig = instantiate(mm10, "Ellipse")
    set_value(fig, "name", "Lonely")
    set_value(gallery, "figures", [fig])
    res.add_root(gallery)

    out, trace = _migrate(rs, mm10, mm21, plan)
    objs = list(out.all_objects())
    assert [o.class_name for o in objs] == ["FigureGallery", "FigureDescriptor", "Ellipse"]
    g, d, e = objs
    assert get(g, "figures") == []
    assert get(g, "descriptors") == [d]
    assert get(d, "name") == "Lonely"
    assert get(d, "actualFigure") is e
    assert get(d, "accessors") == []
    assert trace.image(fig) is e


def test_single_figure_example(read10, mm10, mm21, plan):
    out, _ = _migrate(read10("single"), mm10, mm21, plan)
    canvas = out.resources[0].roots[0]
    (node,) = get(canvas, "nodes")
    d = get(node, "figure")
    assert get(get(d, "actualFigure"), "name") == "BoxFigure"
    assert get(get(canvas, "figures")[0], "figures") == []


def test_figure_outside_gallery_is_rejected(mm10, mm21, plan):
    rs = ResourceSet(mm10)
    res = rs.create_resource("loose.gmfgraph")
    canvas = instantiate(mm10, "Canvas")
    set_value(canvas, "name", "c")
    node = instantiate(mm10, "Node")
    set_value(node, "name", "n")
    fig = instantiate(mm10, "Rectangle")
    set_value(fig, "name", "Loose")
    set_value(node, "figure", fig)
    set_value(canvas, "nodes", [node])
    res.add_root(canvas)
    res.add_root(fig)
    with pytest.raises(RuleError, match="gallery"):
        _migrate(rs, mm10, mm21, plan)


def test_figure_in_unloaded_file_is_rejected(mm10, mm21, plan):
    rs = read_resource_set([GRAPH10 / "multi" / "b.gmfgraph"], [mm10])
    node = get(rs.resources[0].roots[0], "nodes")[0]
    assert isinstance(get(node, "figure"), ExternalRef)
    with pytest.raises(RuleError, match="a.gmfgraph"):
        _migrate(rs, mm10, mm21, plan)


def test_plan_construction_checks_metamodels(mm10, mm21):
    with pytest.raises(PlanConstructionError):
        graph_plan(mm21, mm10)
    with pytest.raises(PlanConstructionError):
        graph_plan(mm10, mm10)


def test_plan_is_reusable(read10, mm10, mm21, plan):
    first, _ = _migrate(read10("statemachine"), mm10, mm21, plan)
    second, _ = _migrate(read10("statemachine"), mm10, mm21, plan)
    assert diff(first, second, ignore_xmi_ids=False).empty
