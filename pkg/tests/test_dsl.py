import numpy as np
import pytest

from tablang import dsl
from tablang.dsl import (
    ActionConcat,
    ConceptToken,
    Do,
    Filter,
    Goal,
    ObjUnion,
    ProgramSyntaxError,
    Relate,
    Scene,
    SemanticType,
    TypeMismatch,
    parse_program,
    serialize,
    type_check,
)


def prop(w):
    return ConceptToken(w, dsl.PROPERTY)


def rel(w):
    return ConceptToken(w, dsl.RELATION)


def act(w):
    return ConceptToken(w, dsl.ACTION)


def example_tree():
    hexagon = Filter(Filter(Scene(), prop("hexagon")), prop("blue"))
    box = Filter(Filter(Scene(), prop("box")), prop("orange"))
    return Do((Goal(hexagon, box, rel("in")),), act("pack"))


EXAMPLE_TEXT = "do(goal(filter(filter(hexagon), blue), filter(filter(box), orange), in), pack)"


def test_scene_is_object():
    assert type_check(Scene()) is SemanticType.OBJECT


def test_example_tree_is_plan():
    assert type_check(example_tree()) is SemanticType.PLAN


def test_do_with_filter_child_fails():
    bad = Do((Filter(Scene(), prop("blue")),), act("pack"))
    with pytest.raises(TypeMismatch) as err:
        type_check(bad)
    assert err.value.expected == "Goal"
    assert err.value.found == "Object"


def test_concept_kind_mismatch_fails():
    bad = Filter(Scene(), rel("in"))
    with pytest.raises(TypeMismatch):
        type_check(bad)


def test_relate_types():
    r = Relate(Filter(Scene(), prop("box")), Filter(Scene(), prop("star")), rel("left"))
    assert type_check(r) is SemanticType.OBJECT


def test_actionconcat_types():
    plan = example_tree()
    assert type_check(ActionConcat(plan, plan)) is SemanticType.PLAN
    with pytest.raises(TypeMismatch):
        type_check(ActionConcat(Scene(), plan))


def test_serialize_scene():
    assert serialize(Scene()) == "scene()"


def test_serialize_example():
    assert serialize(example_tree()) == EXAMPLE_TEXT


def test_serialize_objunion_elides_scene():
    tree = ObjUnion(Filter(Scene(), prop("red")), Filter(Scene(), prop("blue")))
    text = serialize(tree)
    assert text == "objunion(filter(red), filter(blue))"
    assert parse_program(text) == tree


def test_parse_scene():
    assert parse_program("scene()") == Scene()


def test_parse_example():
    assert parse_program(EXAMPLE_TEXT) == example_tree()


def test_parse_missing_goals():
    with pytest.raises(ProgramSyntaxError):
        parse_program("do(pack)")


def test_parse_trailing_garbage():
    with pytest.raises(ProgramSyntaxError):
        parse_program("scene() junk")


def test_parse_unknown_operation():
    with pytest.raises(ProgramSyntaxError):
        parse_program("frobnicate(x)")


def test_parse_type_error():
    with pytest.raises(TypeMismatch):
        parse_program("do(filter(blue), pack)")


WORDS = ["red", "blue", "hexagon", "box", "star", "zone-3", "letter-l"]
RELS = ["in", "left", "on"]
ACTS = ["pack", "push", "put"]


def random_object(rng, depth):
    if depth <= 0:
        return Filter(Scene(), prop(WORDS[rng.integers(len(WORDS))]))
    k = rng.integers(4)
    if k == 0:
        return Scene()
    if k == 1:
        return Filter(random_object(rng, depth - 1), prop(WORDS[rng.integers(len(WORDS))]))
    if k == 2:
        return ObjUnion(random_object(rng, depth - 1), random_object(rng, depth - 1))
    return Relate(random_object(rng, depth - 1), random_object(rng, depth - 1),
                  rel(RELS[rng.integers(len(RELS))]))


def random_plan(rng, depth):
    if depth > 0 and rng.integers(4) == 0:
        return ActionConcat(random_plan(rng, depth - 1), random_plan(rng, depth - 1))
    n_goals = int(rng.integers(1, 4))
    goals = tuple(
        Goal(random_object(rng, depth - 1), random_object(rng, depth - 1),
             rel(RELS[rng.integers(len(RELS))]))
        for _ in range(n_goals)
    )
    return Do(goals, act(ACTS[rng.integers(len(ACTS))]))


def test_round_trip_property():
    rng = np.random.default_rng(42)
    for _ in range(300):
        tree = random_plan(rng, 3)
        assert type_check(tree) is SemanticType.PLAN
        assert parse_program(serialize(tree)) == tree


def test_round_trip_object_trees():
    rng = np.random.default_rng(7)
    for _ in range(200):
        tree = random_object(rng, 3)
        assert parse_program(serialize(tree)) == tree


def test_operation_coverage():
    # one AST variant per operation, typed per the signature table
    goal = Goal(Scene(), Scene(), rel("in"))
    plan = Do((goal,), act("pack"))
    cases = [
        (Scene(), SemanticType.OBJECT),
        (Filter(Scene(), prop("red")), SemanticType.OBJECT),
        (Relate(Scene(), Scene(), rel("left")), SemanticType.OBJECT),
        (goal, SemanticType.GOAL),
        (plan, SemanticType.PLAN),
        (ObjUnion(Scene(), Scene()), SemanticType.OBJECT),
        (ActionConcat(plan, plan), SemanticType.PLAN),
    ]
    assert len({type(node).__name__ for node, _ in cases}) == 7
    for node, expected in cases:
        assert type_check(node) is expected


def test_concept_token_validation():
    with pytest.raises(ValueError):
        ConceptToken("", dsl.PROPERTY)
    with pytest.raises(ValueError):
        ConceptToken("two words", dsl.PROPERTY)
    with pytest.raises(ValueError):
        ConceptToken("red", "adjective")
