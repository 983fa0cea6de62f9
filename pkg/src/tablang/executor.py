"""Program execution: from grounding maps to discretized SE(2) control.

Object subtrees evaluate to grounding maps (scene = all-ones, filter = min
with the concept's map, objunion = max, relate = min with a geometric
relation kernel of the reference). A goal turns the reference map into a
relation kernel, scores every candidate place pose by cross-correlating the
rotated pick-object silhouette with the kernel, and masks the scores by the
upsampled reference map (Hadamard), so no place score survives off the
referenced region. Pick and place poses are argmaxes over the pose grid with
deterministic tie-breaking.

The relation kernels are geometric surrogates for a learned goal module:
containment relations use the eroded reference interior, surface relations
the footprint, directional relations open half-planes at the reference
centroid. Candidates already satisfying a containment goal are masked out
of the pick map so multi-step episodes progress.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import dsl, world
from .grounding import GroundingMap, axis_coords, intersect, normalize, resample, union


class EmptyGrounding(Exception):
    pass


class UnknownRelation(Exception):
    pass


class NoFeasiblePlace(Exception):
    pass


PICK_PLACE = "pick_place"
PUSH = "push"
PUSH_ACTIONS = frozenset({"push"})

INTERIOR = "interior"
SURFACE = "surface"

DEFAULT_RELATION_KINDS: dict[str, str] = {
    "in": INTERIOR,
    "into": INTERIOR,
    "inside": INTERIOR,
    "on": SURFACE,
    "top": SURFACE,
    "left": "left",
    "right": "right",
    "front": "front",
    "back": "back",
}


@dataclass(frozen=True)
class PoseGrid:
    height: int
    width: int
    rotations: int = 12

    def __post_init__(self):
        if self.height < 1 or self.width < 1 or self.rotations < 1:
            raise ValueError("pose grid dimensions must be positive")

    def angle(self, r: int) -> float:
        return 2.0 * math.pi * r / self.rotations


@dataclass(frozen=True)
class Pose2:
    u: int
    v: int
    r: int = 0


@dataclass(frozen=True)
class ControlParams:
    pick: Pose2
    place: Pose2
    primitive: str = PICK_PLACE


@dataclass(frozen=True)
class RelationConfig:
    kinds: tuple[tuple[str, str], ...] = tuple(sorted(DEFAULT_RELATION_KINDS.items()))
    erode_px: int = 1
    avoid_items: bool = True
    # Safety margin around other items: the mask-derived silhouette is a
    # little thinner than the true footprint, so obstacles are grown to keep
    # placements from physically stacking.
    obstacle_pad_px: int = 2

    def kind_of(self, word: str) -> str:
        for w, kind in self.kinds:
            if w == word:
                return kind
        raise UnknownRelation(word)


@dataclass
class ExecutionContext:
    scene: world.Scene
    backend: object
    pose_grid: PoseGrid
    relation_config: RelationConfig = field(default_factory=RelationConfig)


@dataclass
class ExecutionResult:
    params: ControlParams
    all_params: tuple[ControlParams, ...]
    intermediates: dict[str, GroundingMap]
    pick_map: GroundingMap
    place_map: np.ndarray  # (R, H, W) per-rotation scores


def _erode(mask: np.ndarray, px: int) -> np.ndarray:
    out = mask.copy()
    for _ in range(px):
        shrunk = out.copy()
        shrunk[1:, :] &= out[:-1, :]
        shrunk[:-1, :] &= out[1:, :]
        shrunk[:, 1:] &= out[:, :-1]
        shrunk[:, :-1] &= out[:, 1:]
        shrunk[0, :] = shrunk[-1, :] = False
        shrunk[:, 0] = shrunk[:, -1] = False
        out = shrunk
    return out


def _interior_depth(mask: np.ndarray) -> np.ndarray:
    """Erosion rounds each cell survives: 0 outside, 1 at the boundary,
    growing toward the interior."""
    depth = np.zeros(mask.shape, dtype=np.float64)
    cur = mask.copy()
    while cur.any():
        depth += cur
        cur = _erode(cur, 1)
    return depth


def _dilate(mask: np.ndarray, px: int) -> np.ndarray:
    out = mask.copy()
    for _ in range(px):
        grown = out.copy()
        grown[1:, :] |= out[:-1, :]
        grown[:-1, :] |= out[1:, :]
        grown[:, 1:] |= out[:, :-1]
        grown[:, :-1] |= out[:, 1:]
        out = grown
    return out


def relation_kernel(reference: np.ndarray, relation: str, config: RelationConfig) -> np.ndarray:
    """Binary kernel of cells satisfying the relation to the reference mask."""
    kind = config.kind_of(relation)
    binary = reference > 0.5
    if kind == INTERIOR:
        eroded = _erode(binary, config.erode_px)
        # tiny references erode away; fall back to the raw footprint
        kernel = eroded if eroded.any() else binary
        return kernel.astype(np.float64)
    if kind == SURFACE:
        return binary.astype(np.float64)
    if not binary.any():
        return np.zeros_like(reference)
    rows, cols = np.nonzero(binary)
    out = np.zeros(reference.shape, dtype=np.float64)
    if kind == "left":
        out[:, :] = (np.arange(reference.shape[1])[None, :] < cols.mean()).astype(float)
    elif kind == "right":
        out[:, :] = (np.arange(reference.shape[1])[None, :] > cols.mean()).astype(float)
    elif kind == "front":
        out[:, :] = (np.arange(reference.shape[0])[:, None] > rows.mean()).astype(float)
    elif kind == "back":
        out[:, :] = (np.arange(reference.shape[0])[:, None] < rows.mean()).astype(float)
    else:
        raise UnknownRelation(relation)
    return out


def select_pick(pick_map: GroundingMap) -> Pose2:
    """Argmax pixel, row-major tie-break; rotation is unused for picking."""
    arr = pick_map.values
    if arr.max() <= 0.0:
        raise EmptyGrounding("pick map is identically zero")
    flat = int(np.argmax(arr))
    u, v = divmod(flat, arr.shape[1])
    return Pose2(u, v, 0)


def select_place(place_grids: np.ndarray) -> Pose2:
    """Argmax over (rotation, row, col) with lexicographic tie-break."""
    grids = np.asarray(place_grids, dtype=np.float64)
    if grids.ndim != 3:
        raise ValueError("place grids must be (R, H, W)")
    if grids.max() <= 0.0:
        raise NoFeasiblePlace("all place scores are zero")
    flat = int(np.argmax(grids))
    r, rest = divmod(flat, grids.shape[1] * grids.shape[2])
    u, v = divmod(rest, grids.shape[2])
    return Pose2(u, v, r)


def eval_relate(target_map: GroundingMap, reference_map: GroundingMap,
                relation: dsl.ConceptToken, ctx: ExecutionContext) -> GroundingMap:
    """Keep target regions standing in the relation to the reference."""
    if relation.kind != dsl.RELATION:
        raise UnknownRelation(f"not a relation token: {relation.word}")
    kernel = relation_kernel(reference_map.values, relation.word, ctx.relation_config)
    out = intersect(target_map, GroundingMap(np.clip(kernel, 0.0, 1.0)))
    return normalize(out.values)


def _component(mask: np.ndarray, seed: tuple[int, int]) -> np.ndarray:
    """4-connected component of the boolean mask containing the seed pixel.
    A seed outside the mask yields the single seed pixel."""
    out = np.zeros_like(mask)
    h, w = mask.shape
    if not mask[seed]:
        out[seed] = True
        return out
    queue = deque([seed])
    out[seed] = True
    while queue:
        u, v = queue.popleft()
        for du, dv in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            nu, nv = u + du, v + dv
            if 0 <= nu < h and 0 <= nv < w and mask[nu, nv] and not out[nu, nv]:
                out[nu, nv] = True
                queue.append((nu, nv))
    return out


def _rotated_offsets(offsets: np.ndarray, theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    du = offsets[:, 0] * c - offsets[:, 1] * s
    dv = offsets[:, 0] * s + offsets[:, 1] * c
    rotated = np.stack([np.rint(du), np.rint(dv)], axis=1).astype(int)
    return np.unique(rotated, axis=0)


def _grid_to_scene(ctx: ExecutionContext, u: int, v: int) -> tuple[float, float]:
    y = axis_coords(ctx.pose_grid.height, ctx.scene.height)[u]
    x = axis_coords(ctx.pose_grid.width, ctx.scene.width)[v]
    return y, x


def _snap_pick_to_item(pick: Pose2, pick_map: GroundingMap, silhouette: np.ndarray,
                       ctx: ExecutionContext) -> tuple[Pose2, GroundingMap]:
    """Mask upsampling can read solid where the true footprint has a notch;
    if the argmax pixel is not over an item, move it to the nearest
    silhouette cell that is. The recorded map keeps the snapped cell as its
    strict argmax."""
    y, x = _grid_to_scene(ctx, pick.u, pick.v)
    if world.pick_target(ctx.scene, y, x) is not None:
        return pick, pick_map
    rows, cols = np.nonzero(silhouette)
    order = np.argsort((rows - rows.mean()) ** 2 + (cols - cols.mean()) ** 2,
                       kind="stable")
    for idx in order:
        u, v = int(rows[idx]), int(cols[idx])
        y, x = _grid_to_scene(ctx, u, v)
        if world.pick_target(ctx.scene, y, x) is not None:
            arr = pick_map.values * 0.999
            arr[u, v] = 1.0
            return Pose2(u, v, 0), GroundingMap(arr)
    return pick, pick_map


def _obstacle_mask(ctx: ExecutionContext, exclude_id: int | None) -> np.ndarray:
    grid = ctx.pose_grid
    scene = ctx.scene
    ys = axis_coords(grid.height, scene.height)
    xs = axis_coords(grid.width, scene.width)
    out = np.zeros((grid.height, grid.width), dtype=bool)
    for obj in scene.objects:
        if obj.kind != world.ITEM or obj.id == exclude_id:
            continue
        out |= world.footprint_mask(obj, (grid.height, grid.width), ys, xs)
    return out


def _correlate(kernel: np.ndarray, offsets: np.ndarray, bbox: tuple[int, int, int, int]) -> np.ndarray:
    """Silhouette correlation: at each center inside bbox, the fraction of
    offsets landing on kernel > 0 times the mean kernel value under the
    silhouette (out-of-grid pixels count as zero)."""
    h, w = kernel.shape
    u0, u1, v0, v1 = bbox
    n = len(offsets)
    if n == 0:
        return np.zeros((h, w))
    pad = int(np.abs(offsets).max(initial=0)) + 1
    padded = np.pad(kernel, pad)
    hits = np.zeros((u1 - u0, v1 - v0))
    sums = np.zeros((u1 - u0, v1 - v0))
    for du, dv in offsets:
        window = padded[pad + u0 + du: pad + u1 + du, pad + v0 + dv: pad + v1 + dv]
        hits += window > 0
        sums += window
    out = np.zeros((h, w))
    out[u0:u1, v0:v1] = (hits / n) * (sums / n)
    return out


def eval_goal(object_map: GroundingMap, reference_map: GroundingMap,
              relation: dsl.ConceptToken, ctx: ExecutionContext) -> np.ndarray:
    """Per-rotation place score grids for the goal (see _goal_pieces)."""
    return _goal_pieces(object_map, reference_map, relation, ctx)["place_grids"]


def _goal_pieces(object_map: GroundingMap, reference_map: GroundingMap,
                 relation: dsl.ConceptToken, ctx: ExecutionContext) -> dict:
    if relation.kind != dsl.RELATION:
        raise UnknownRelation(f"not a relation token: {relation.word}")
    grid = ctx.pose_grid
    cfg = ctx.relation_config
    kind = cfg.kind_of(relation.word)

    up_obj = resample(object_map, grid.height, grid.width)
    up_ref = resample(reference_map, grid.height, grid.width)
    kernel = relation_kernel(up_ref.values, relation.word, cfg)

    # Objects already sitting in a containment goal region are not pick
    # candidates; without this, multi-step episodes would loop on one object.
    pick_arr = up_obj.values
    if kind in (INTERIOR, SURFACE):
        pick_arr = pick_arr * (kernel <= 0)
    # Suction-style graspability: prefer the deepest interior pixel of the
    # mask. Upsampled masks can read solid at thin notches (star arms); edge
    # maxima there would miss the object, the interior never does.
    depth = _interior_depth(pick_arr >= 0.5)
    if depth.max() > 0:
        pick_arr = pick_arr * (1.0 + depth) / (1.0 + depth.max())
    pick_map = GroundingMap(pick_arr)
    pick = select_pick(pick_map)

    silhouette = _component(up_obj.values >= 0.5, (pick.u, pick.v))
    pick, pick_map = _snap_pick_to_item(pick, pick_map, silhouette, ctx)
    rows, cols = np.nonzero(silhouette)
    anchor = (int(round(rows.mean())), int(round(cols.mean())))
    offsets = np.stack([rows - anchor[0], cols - anchor[1]], axis=1)

    effective = kernel
    if cfg.avoid_items:
        scene_y, scene_x = _grid_to_scene(ctx, pick.u, pick.v)
        picked = world.pick_target(ctx.scene, scene_y, scene_x)
        obstacles = _obstacle_mask(ctx, picked.id if picked is not None else None)
        effective = kernel * (~_dilate(obstacles, cfg.obstacle_pad_px))

    support = np.nonzero(up_ref.values > 0)
    if len(support[0]) == 0:
        bbox = (0, 0, 0, 0)
    else:
        margin = int(np.abs(offsets).max(initial=0)) + 1
        bbox = (
            max(int(support[0].min()) - margin, 0),
            min(int(support[0].max()) + margin + 1, grid.height),
            max(int(support[1].min()) - margin, 0),
            min(int(support[1].max()) + margin + 1, grid.width),
        )

    place_grids = np.zeros((grid.rotations, grid.height, grid.width))
    if bbox[1] > bbox[0] and bbox[3] > bbox[2]:
        for r in range(grid.rotations):
            rotated = _rotated_offsets(offsets, grid.angle(r))
            base = _correlate(effective, rotated, bbox)
            place_grids[r] = up_ref.values * base

    return {
        "pick": pick,
        "pick_map": pick_map,
        "place_grids": place_grids,
        "up_ref": up_ref,
        "kernel": kernel,
        "effective_kernel": effective,
        "silhouette": silhouette,
        "offsets": offsets,
    }


def _push_params(pieces: dict, grid: PoseGrid) -> tuple[ControlParams, GroundingMap, np.ndarray]:
    """Pre-push pose behind the object relative to the goal direction,
    post-push pose at the goal-kernel centroid (nearest supported cell).
    Recorded maps are one-hot so the argmax invariant still holds."""
    sil_rows, sil_cols = np.nonzero(pieces["silhouette"])
    c_u, c_v = sil_rows.mean(), sil_cols.mean()
    support = pieces["effective_kernel"]
    if support.max() <= 0:
        support = pieces["kernel"]
    if support.max() <= 0:
        raise NoFeasiblePlace("push goal region is empty")
    sup_rows, sup_cols = np.nonzero(support > 0)
    g_u, g_v = sup_rows.mean(), sup_cols.mean()
    nearest = int(np.argmin((sup_rows - g_u) ** 2 + (sup_cols - g_v) ** 2))
    post = Pose2(int(sup_rows[nearest]), int(sup_cols[nearest]), 0)

    d_u, d_v = g_u - c_u, g_v - c_v
    norm = math.hypot(d_u, d_v)
    radius = 0.0
    if len(sil_rows) > 1:
        radius = float(np.max(np.hypot(sil_rows - c_u, sil_cols - c_v)))
    if norm > 1e-9:
        pre_u = c_u - radius * d_u / norm
        pre_v = c_v - radius * d_v / norm
    else:
        pre_u, pre_v = c_u, c_v
    pre = Pose2(
        min(max(int(round(pre_u)), 0), grid.height - 1),
        min(max(int(round(pre_v)), 0), grid.width - 1),
        0,
    )
    pick_map = np.zeros((grid.height, grid.width))
    pick_map[pre.u, pre.v] = 1.0
    place_grids = np.zeros((grid.rotations, grid.height, grid.width))
    place_grids[0, post.u, post.v] = 1.0
    params = ControlParams(pre, post, PUSH)
    return params, GroundingMap(pick_map), place_grids


def execute(program: dsl.ProgramNode, ctx: ExecutionContext) -> ExecutionResult:
    """Evaluate a Plan-typed program against the scene context."""
    if dsl.type_check(program) is not dsl.SemanticType.PLAN:
        raise dsl.TypeMismatch("0", dsl.SemanticType.PLAN.value,
                               dsl.type_check(program).value)
    gh, gw = ctx.backend.shape_for(ctx.scene)
    intermediates: dict[str, GroundingMap] = {}

    def eval_obj(node: dsl.ProgramNode, path: str) -> GroundingMap:
        if isinstance(node, dsl.Scene):
            result = GroundingMap(np.ones((gh, gw)))
        elif isinstance(node, dsl.Filter):
            child = eval_obj(node.child, f"{path}.0")
            result = intersect(child, ctx.backend.ground(ctx.scene, node.prop))
        elif isinstance(node, dsl.ObjUnion):
            result = union(eval_obj(node.a, f"{path}.0"), eval_obj(node.b, f"{path}.1"))
        elif isinstance(node, dsl.Relate):
            target = eval_obj(node.target, f"{path}.0")
            reference = eval_obj(node.reference, f"{path}.1")
            result = eval_relate(target, reference, node.rel, ctx)
        else:
            raise TypeError(f"not an object node: {node!r}")
        intermediates[path] = result
        return result

    def eval_plan(node: dsl.ProgramNode, path: str):
        if isinstance(node, dsl.Do):
            goal_pieces = []
            for i, goal in enumerate(node.goals):
                assert isinstance(goal, dsl.Goal)
                obj_map = eval_obj(goal.obj, f"{path}.{i}.0")
                ref_map = eval_obj(goal.reference, f"{path}.{i}.1")
                goal_pieces.append((goal, obj_map, ref_map))
            goal, obj_map, ref_map = goal_pieces[0]
            pieces = _goal_pieces(obj_map, ref_map, goal.rel, ctx)
            if node.action.word in PUSH_ACTIONS:
                params, pick_map, place_grids = _push_params(pieces, ctx.pose_grid)
            else:
                place_grids = pieces["place_grids"]
                place = select_place(place_grids)
                params = ControlParams(pieces["pick"], place, PICK_PLACE)
                pick_map = pieces["pick_map"]
            intermediates[path] = pick_map
            return [params], pick_map, place_grids
        if isinstance(node, dsl.ActionConcat):
            left = eval_plan(node.a, f"{path}.0")
            right = eval_plan(node.b, f"{path}.1")
            return left[0] + right[0], left[1], left[2]
        raise TypeError(f"not a plan node: {node!r}")

    all_params, pick_map, place_grids = eval_plan(program, "0")
    return ExecutionResult(
        params=all_params[0],
        all_params=tuple(all_params),
        intermediates=intermediates,
        pick_map=pick_map,
        place_map=place_grids,
    )
