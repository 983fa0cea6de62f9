"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines. Criteria 3 and 10 are the heavy ones (hundreds of simulated
episodes); the whole module stays well under the stated runtime budgets.
"""

import math
import time

import numpy as np
import pytest

from monolithic import monolithic_episode_score
from tablang import benchmark as bm
from tablang import ccg, dsl
from tablang.backends import OracleBackend
from tablang.benchmark import TaskSpec, generate_episode, imitation_loss, run_suite
from tablang.executor import (
    ControlParams,
    EmptyGrounding,
    ExecutionContext,
    Pose2,
    PoseGrid,
    RelationConfig,
    execute,
    select_pick,
    select_place,
)
from tablang.grounding import (
    ConceptEmbedding,
    FeatureMap,
    GroundingMap,
    ProjectionWeights,
    ground_embedding,
    intersect,
    normalize,
    resample,
    union,
)

GOLDEN_INSTRUCTION = "pack the blue hexagon in the orange box"
GOLDEN_PROGRAM = "do(goal(filter(filter(hexagon), blue), filter(filter(box), orange), in), pack)"


@pytest.fixture(scope="module")
def lex():
    return ccg.default_lexicon()


@pytest.fixture(scope="module")
def oracle():
    return OracleBackend()


def report(criterion, detail):
    print(f"ACCEPTANCE {criterion}: PASS ({detail})")


def test_criterion_01_golden_parse(lex):
    ccg.parse(ccg.tokenize(GOLDEN_INSTRUCTION, lex), lex, k=1)  # warm caches
    start = time.perf_counter()
    derivs = ccg.parse(ccg.tokenize(GOLDEN_INSTRUCTION, lex), lex, k=1)
    elapsed = time.perf_counter() - start
    assert dsl.serialize(derivs[0].program) == GOLDEN_PROGRAM
    assert elapsed < 0.05
    report(1, f"golden program exact, parse took {elapsed * 1000:.2f} ms")


def test_criterion_02_oov_bootstrapping(lex):
    derivs = ccg.parse(ccg.tokenize("pack the daxy shape into the box", lex), lex, k=1)
    top = derivs[0]
    (assignment,) = top.oov_assignments
    assert assignment.word == "daxy"
    assert ccg.category_to_str(assignment.category) == "N/N"
    assert ccg.instantiate_template(assignment.template, "daxy") == \
        ccg.parse_template(r"\x.filter(x, daxy)")

    templates = [
        ("pack the {w} hexagon in the orange box", "blue"),
        ("pack the {w} flower in the brown box", "red"),
        ("pack the flower into the {w} brown box", "left"),
        ("pack the hexagon into the brown box left of the {w} star", "green"),
        ("put the {w} blocks in a green bowl", "blue"),
        ("put the red blocks in a {w} bowl", "gray"),
        ("push the pile of {w} blocks into the green square", "red"),
        ("push the pile of red blocks into the {w} square", "left"),
        ("push the {w} ring into the left blue square", "green"),
        ("push the green ring into the {w} blue square", "right"),
    ]
    rng = np.random.default_rng(2024)
    successes = 0
    for i in range(200):
        template, original_word = templates[i % len(templates)]
        novel = f"nw{rng.integers(10_000):04d}x"
        base = template.format(w=original_word)
        swapped = template.format(w=novel)
        base_program = dsl.serialize(ccg.parse(ccg.tokenize(base, lex), lex, 1)[0].program)
        swapped_program = dsl.serialize(ccg.parse(ccg.tokenize(swapped, lex), lex, 1)[0].program)
        if swapped_program == base_program.replace(original_word, novel):
            successes += 1
    assert successes == 200
    report(2, "daxy assigned N/N modifier; 200/200 novel-modifier substitutions")


def test_criterion_03_oracle_end_to_end(lex, oracle):
    start = time.perf_counter()
    tasks = [TaskSpec(n) for n in ("packing_shapes", "packing_color_box",
                                   "put_blocks_in_bowls", "separating_piles")]
    suite = run_suite(tasks, 100, oracle, lex, seed=0)
    elapsed = time.perf_counter() - start
    means = suite.per_task
    assert means["packing_shapes/seen"] >= 90.0
    assert means["packing_color_box/seen"] >= 90.0
    assert means["put_blocks_in_bowls/seen"] >= 90.0
    assert means["separating_piles/seen"] >= 80.0
    assert elapsed < 60.0
    report(3, f"means {means}, suite took {elapsed:.1f} s")


def test_criterion_04_compositional_gap(lex, oracle):
    means = {}
    mono_means = {}
    for name in ("packing_location_box", "pushing_shapes"):
        task = TaskSpec(name)
        scores, mono = [], []
        for seed in range(50):
            episode = generate_episode(task, seed)
            record = bm.run_episode(episode, oracle, lex)
            scores.append(record["score"] if record["failure"] is None else 0.0)
            mono.append(monolithic_episode_score(episode, oracle, lex))
        means[name] = 100.0 * float(np.mean(scores))
        mono_means[name] = 100.0 * float(np.mean(mono))
    assert means["packing_location_box"] >= 80.0
    assert means["pushing_shapes"] >= 60.0
    assert means["packing_location_box"] - mono_means["packing_location_box"] >= 30.0
    assert means["pushing_shapes"] - mono_means["pushing_shapes"] >= 30.0
    report(4, f"compositional {means} vs monolithic {mono_means}")


def brute_force_raw(features, cv, cl, emb):
    h, w, d1 = features.shape
    d2 = len(emb)
    out = [[0.0] * w for _ in range(h)]
    for i in range(h):
        for j in range(w):
            inner = [sum(cv[k][d] * features[i][j][d] for d in range(d1)) for k in range(d2)]
            proj = [sum(cl[k][m] * inner[m] for m in range(d2)) for k in range(d2)]
            out[i][j] = sum(emb[k] * proj[k] for k in range(d2))
    return np.array(out)


def test_criterion_05_embedding_equivalence():
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(1000):
        h, w = int(rng.integers(1, 9)), int(rng.integers(1, 9))
        d1, d2 = int(rng.integers(1, 9)), int(rng.integers(1, 9))
        feats = rng.normal(size=(h, w, d1))
        cv = rng.normal(size=(d2, d1))
        cl = rng.normal(size=(d2, d2))
        emb = rng.normal(size=d2)
        got = ground_embedding(FeatureMap(feats), ConceptEmbedding(emb),
                               ProjectionWeights(cv, cl))
        want = normalize(brute_force_raw(feats, cv, cl, emb))
        scale = max(np.abs(want.values).max(), 1e-300)
        err = np.abs(got.values - want.values).max() / scale
        worst = max(worst, err)
        assert err <= 1e-12
    report(5, f"1000 instances, worst relative error {worst:.2e}")


def test_criterion_06_argmax_equivalence():
    rng = np.random.default_rng(6)
    checked = 0
    for _ in range(500):
        h, w = int(rng.integers(1, 9)), int(rng.integers(1, 9))
        r = int(rng.integers(1, 5))
        # coarse quantization forces frequent ties
        pick = rng.integers(0, 3, size=(h, w)) / 2.0
        place = rng.integers(0, 3, size=(r, h, w)) / 2.0
        if pick.max() > 0:
            got = select_pick(GroundingMap(pick))
            best = max(((pick[u, v], -(u * w + v), (u, v))
                        for u in range(h) for v in range(w)))
            assert (got.u, got.v) == best[2]
        if place.max() > 0:
            got = select_place(place)
            best = max(((place[k, u, v], -((k * h + u) * w + v), (k, u, v))
                        for k in range(r) for u in range(h) for v in range(w)))
            assert (got.r, got.u, got.v) == best[2]
        checked += 1
    assert checked == 500
    report(6, "select_pick/select_place match exhaustive enumeration on 500 grids")


def _sample_executions(lex, oracle, n):
    """Deterministic stream of (program, context, result) triples across the
    pick-and-place task families."""
    names = ("packing_shapes", "packing_color_box", "packing_location_box",
             "packing_prepositions", "put_blocks_in_bowls")
    produced = 0
    seed = 0
    while produced < n:
        name = names[produced % len(names)]
        episode = generate_episode(TaskSpec(name), seed)
        program = ccg.parse(ccg.tokenize(episode.instruction, lex), lex, 1)[0].program
        grid = PoseGrid(episode.scene.height, episode.scene.width, 4)
        ctx = ExecutionContext(episode.scene, oracle, grid, RelationConfig())
        try:
            result = execute(program, ctx)
        except EmptyGrounding:
            seed += 1
            continue
        yield program, ctx, result
        produced += 1
        if produced % len(names) == 0:
            seed += 1


def test_criterion_07_hadamard_dominance(lex, oracle):
    checked = 0
    for program, ctx, result in _sample_executions(lex, oracle, 500):
        ref_path = "0.0.1"
        up_ref = resample(result.intermediates[ref_path],
                          ctx.pose_grid.height, ctx.pose_grid.width).values
        zero = up_ref == 0.0
        assert np.all(result.place_map[:, zero] == 0.0)
        checked += 1
    assert checked == 500
    report(7, "place scores exactly zero off the reference mask in 500 executions")


def test_criterion_08_imitation_loss_metric():
    pick = np.zeros((4, 4))
    place = np.zeros((1, 4, 4))
    expert = ControlParams(Pose2(2, 1, 0), Pose2(0, 0, 0), "pick_place")
    loss = imitation_loss(pick, place, expert)
    pick_term = loss - math.log(16)
    assert pick_term == pytest.approx(math.log(16), abs=1e-12)

    def oracle_loss(p, q, e):
        def ls(flat, idx):
            exps = [math.exp(v) for v in flat]
            return math.log(exps[idx] / sum(exps))
        w = p.shape[1]
        r_, h, pw = q.shape
        return -ls([float(x) for x in p.ravel()], e.pick.u * w + e.pick.v) \
            - ls([float(x) for x in q.ravel()],
                 (e.place.r * h + e.place.u) * pw + e.place.v)

    rng = np.random.default_rng(8)
    worst = 0.0
    for _ in range(500):
        h, w, r = int(rng.integers(1, 6)), int(rng.integers(1, 6)), int(rng.integers(1, 4))
        p = rng.normal(size=(h, w)) * 3
        q = rng.normal(size=(r, h, w)) * 3
        e = ControlParams(Pose2(int(rng.integers(h)), int(rng.integers(w)), 0),
                          Pose2(int(rng.integers(h)), int(rng.integers(w)),
                                int(rng.integers(r))), "pick_place")
        got = imitation_loss(p, q, e)
        want = oracle_loss(p, q, e)
        err = abs(got - want) / max(abs(want), 1e-300)
        worst = max(worst, err)
        assert err <= 1e-12
    report(8, f"uniform 4x4 pick term = ln16; 500 oracle checks, worst rel err {worst:.2e}")


def test_criterion_09_mask_algebra_suite():
    rng = np.random.default_rng(9)
    for _ in range(1000):
        shape = (int(rng.integers(1, 10)), int(rng.integers(1, 10)))
        a = GroundingMap(rng.random(shape))
        b = GroundingMap(rng.random(shape))
        c = GroundingMap(rng.random(shape))
        assert np.array_equal(intersect(a, b).values, intersect(b, a).values)
        assert np.array_equal(union(a, b).values, union(b, a).values)
        assert np.array_equal(intersect(intersect(a, b), c).values,
                              intersect(a, intersect(b, c)).values)
        assert np.array_equal(union(union(a, b), c).values,
                              union(a, union(b, c)).values)
        assert np.array_equal(intersect(a, a).values, a.values)
        assert np.array_equal(union(a, a).values, a.values)
        assert np.all(intersect(a, b).values <= np.minimum(a.values + 1e-15, 1))
        assert np.all(intersect(a, b).values <= b.values)
        assert np.all(union(a, b).values >= a.values)
        assert np.all(union(a, b).values >= b.values)
    assert np.allclose(resample(GroundingMap([[0.0, 1.0]]), 1, 4).values,
                       [[0.0, 1 / 3, 2 / 3, 1.0]])
    for _ in range(1000):
        h, w = int(rng.integers(1, 8)), int(rng.integers(1, 8))
        value = float(rng.random())
        out = resample(GroundingMap(np.full((h, w), value)),
                       int(rng.integers(1, 12)), int(rng.integers(1, 12)))
        assert np.allclose(out.values, value)
    report(9, "1000 algebra cases and 1000 resample cases, zero failures")


def test_criterion_10_generator_soundness():
    start = time.perf_counter()
    for name in bm.TASK_NAMES:
        task = TaskSpec(name)
        for seed in range(200):
            episode = generate_episode(task, seed)
            final = bm._replay(episode.scene, episode.expert)
            assert bm.score_success(task, final, episode) == 1.0, (name, seed)
    elapsed = time.perf_counter() - start
    report(10, f"9 tasks x 200 seeds expert replays all score 1.0 ({elapsed:.1f} s)")


def test_criterion_11_deterministic_report(lex, oracle):
    tasks = [TaskSpec("packing_shapes"), TaskSpec("pushing_shapes"),
             TaskSpec("put_blocks_in_bowls")]
    a = bm.report_to_json(run_suite(tasks, 5, oracle, lex, seed=3))
    b = bm.report_to_json(run_suite(tasks, 5, oracle, lex, seed=3))
    assert a.encode() == b.encode()
    report(11, "EvalReport JSON byte-identical across two runs")
