"""Command-line interface: parse instructions, run them on scenes, evaluate
task suites, and drive an interactive session.

Exit codes: 0 ok, 1 I/O or config error, 2 parse failure, 3 grounding or
execution failure. All file output stays under --output-dir.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import benchmark, ccg, dsl, formats, world
from .backends import EmbeddingBackend, GroundingError, OracleBackend
from .executor import (
    PUSH,
    EmptyGrounding,
    ExecutionContext,
    NoFeasiblePlace,
    PoseGrid,
    RelationConfig,
    UnknownRelation,
    execute,
)

EXIT_OK = 0
EXIT_IO = 1
EXIT_PARSE = 2
EXIT_EXEC = 3


def _load_lexicon(path: str | None) -> ccg.Lexicon:
    if path is None:
        return ccg.default_lexicon()
    return ccg.Lexicon.from_file(path)


def _make_backend(args) -> object:
    if args.backend == "oracle":
        return OracleBackend()
    weights = None
    if getattr(args, "weights", None):
        weights = formats.load_projection_weights(args.weights)
    return EmbeddingBackend(weights=weights)


def _out_dir(args) -> Path:
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_parse(args) -> int:
    try:
        lexicon = _load_lexicon(args.lexicon)
    except (OSError, ccg.LexiconError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    tokens = ccg.tokenize(args.instruction, lexicon)
    try:
        derivations = ccg.parse(tokens, lexicon, k=args.top_k)
    except ccg.NoParse as exc:
        print(f"no parse: {exc}", file=sys.stderr)
        return EXIT_PARSE
    for i, d in enumerate(derivations):
        print(dsl.serialize(d.program))
        if args.verbose or len(derivations) > 1 or d.oov_assignments:
            print(f"  # rank {i} log-score {d.log_score:.4f}")
        for a in d.oov_assignments:
            print(f"  # novel word {a.describe()} (log prior {a.log_prior:.4f})")
    return EXIT_OK


def _apply_params(scene, params, rotations):
    if params.primitive == PUSH:
        return world.apply_push(scene, params, benchmark.PUSH_HALF_WIDTH)
    return world.apply_pick_place(scene, params, rotations)


def cmd_run(args) -> int:
    try:
        lexicon = _load_lexicon(args.lexicon)
        scene = world.load_scene(args.scene)
        world.render(scene)  # validate bounds up front
        out = _out_dir(args)
    except (OSError, ValueError, KeyError, ccg.LexiconError, world.OutOfBounds) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    tokens = ccg.tokenize(args.instruction, lexicon)
    try:
        derivation = ccg.parse(tokens, lexicon, k=1)[0]
    except ccg.NoParse as exc:
        print(f"no parse: {exc}", file=sys.stderr)
        return EXIT_PARSE
    program = derivation.program
    grid = PoseGrid(scene.height, scene.width, args.rotations)
    ctx = ExecutionContext(scene, _make_backend(args), grid, RelationConfig())
    try:
        result = execute(program, ctx)
    except (EmptyGrounding, UnknownRelation, NoFeasiblePlace, GroundingError) as exc:
        print(f"execution failed: {exc}", file=sys.stderr)
        return EXIT_EXEC

    def dump_render(prefix, rendered):
        formats.write_ppm(out / f"{prefix}.ppm", rendered.image[:, :, :3])
        height = rendered.image[:, :, 3]
        scale = height.max() if height.max() > 0 else 1.0
        formats.write_pgm(out / f"{prefix}_height.pgm", height / scale)
        seg = rendered.segmentation.astype(float)
        ids = seg.max() if seg.max() > 0 else 1.0
        formats.write_pgm(out / f"{prefix}_seg.pgm", seg / ids)

    dump_render("before", world.render(scene))
    after = scene
    for params in result.all_params:
        after, _ = _apply_params(after, params, args.rotations)
    dump_render("after", world.render(after))
    world.save_scene(out / "scene_after.json", after)

    formats.write_pgm(out / "pick.pgm", result.pick_map.values)
    for r in range(result.place_map.shape[0]):
        formats.write_pgm(out / f"place_r{r:02d}.pgm", result.place_map[r])
    map_files = {}
    for path, gmap in sorted(result.intermediates.items()):
        fname = f"map_{path.replace('.', '_')}.pgm"
        formats.write_pgm(out / fname, gmap.values)
        map_files[path] = fname

    def pose_dict(p):
        return {"u": p.u, "v": p.v, "r": p.r}

    action = {
        "instruction": args.instruction,
        "program": dsl.serialize(program),
        "primitive": result.params.primitive,
        "pick": pose_dict(result.params.pick),
        "place": pose_dict(result.params.place),
        "actions": [
            {"primitive": p.primitive, "pick": pose_dict(p.pick), "place": pose_dict(p.place)}
            for p in result.all_params
        ],
        "pick_score": float(result.pick_map.values.max()),
        "place_score": float(result.place_map.max()),
        "intermediates": map_files,
        "novel_words": [a.describe() for a in derivation.oov_assignments],
    }
    (out / "action.json").write_text(json.dumps(action, indent=2, sort_keys=True) + "\n")
    print(json.dumps({"program": action["program"], "primitive": action["primitive"],
                      "pick": action["pick"], "place": action["place"]}, sort_keys=True))
    return EXIT_OK


def _tasks_from_config(config: dict) -> list[benchmark.TaskSpec]:
    tasks = []
    for entry in config["tasks"]:
        if isinstance(entry, str):
            tasks.append(benchmark.TaskSpec(entry, config.get("split", "seen")))
        else:
            tasks.append(benchmark.TaskSpec(entry["name"], entry.get("split", "seen")))
    return tasks


def cmd_eval(args) -> int:
    try:
        if args.config:
            config = json.loads(Path(args.config).read_text())
        else:
            if not args.tasks:
                raise ValueError("either --config or --tasks is required")
            config = {
                "tasks": args.tasks.split(","),
                "split": args.split,
                "episodes": args.episodes,
                "seed": args.seed,
                "rotations": args.rotations,
                "backend": args.backend,
            }
        tasks = _tasks_from_config(config)
        episodes = int(config.get("episodes", 10))
        if episodes < 1:
            raise ValueError("episodes must be >= 1")
        seed = int(config.get("seed", 0))
        rotations = int(config.get("rotations", 12))
        lexicon = _load_lexicon(config.get("lexicon"))
        ground_shape = None
        if config.get("grounding"):
            gh, gw = config["grounding"]
            ground_shape = (int(gh), int(gw))
        backend_name = config.get("backend", "oracle")
        if backend_name == "oracle":
            backend = OracleBackend(ground_shape)
        elif backend_name == "embedding":
            weights = None
            if config.get("weights"):
                weights = formats.load_projection_weights(config["weights"])
            backend = EmbeddingBackend(ground_shape, weights=weights)
        else:
            raise ValueError(f"unknown backend {backend_name!r}")
        out = _out_dir(args)
    except (OSError, ValueError, KeyError, json.JSONDecodeError, ccg.LexiconError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_IO
    report = benchmark.run_suite(tasks, episodes, backend, lexicon,
                                 seed=seed, rotations=rotations)
    (out / "report.json").write_text(benchmark.report_to_json(report))
    table = benchmark.report_table(report)
    (out / "report.txt").write_text(table)
    print(table, end="")
    return EXIT_OK


def _object_table(scene: world.Scene) -> str:
    lines = [f"{'id':>3} {'kind':<10} {'shape':<10} {'color':<8} {'x':>7} {'y':>7}"]
    for o in scene.objects:
        lines.append(f"{o.id:>3} {o.kind:<10} {o.shape:<10} {o.color:<8} {o.x:>7.1f} {o.y:>7.1f}")
    return "\n".join(lines)


def cmd_repl(args) -> int:
    try:
        lexicon = _load_lexicon(args.lexicon)
        scene = world.load_scene(args.scene)
        world.render(scene)  # validate bounds up front
        out = _out_dir(args)
    except (OSError, ValueError, KeyError, ccg.LexiconError, world.OutOfBounds) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    backend = _make_backend(args)
    history = [scene]
    transcript = []
    render_count = 0
    print("interactive session; :render, :undo, :quit", flush=True)
    for line in sys.stdin:
        line = line.strip()
        transcript.append(f"> {line}")
        if not line:
            continue
        if line.startswith(":"):
            if line == ":quit":
                break
            if line == ":undo":
                if len(history) > 1:
                    history.pop()
                    msg = "undone"
                else:
                    msg = "nothing to undo"
            elif line == ":render":
                rendered = world.render(history[-1])
                name = f"render_{render_count:03d}.ppm"
                formats.write_ppm(out / name, rendered.image[:, :, :3])
                render_count += 1
                msg = f"wrote {name}"
            else:
                msg = f"unknown command {line}"
            print(msg, flush=True)
            transcript.append(msg)
            continue
        try:
            tokens = ccg.tokenize(line, lexicon)
            derivation = ccg.parse(tokens, lexicon, k=1)[0]
            grid = PoseGrid(history[-1].height, history[-1].width, args.rotations)
            ctx = ExecutionContext(history[-1], backend, grid, RelationConfig())
            result = execute(derivation.program, ctx)
            new_scene = history[-1]
            for params in result.all_params:
                new_scene, _ = _apply_params(new_scene, params, args.rotations)
            history.append(new_scene)
            p = result.params
            msg = (f"{dsl.serialize(derivation.program)}\n"
                   f"{p.primitive}: pick ({p.pick.u},{p.pick.v}) -> "
                   f"place ({p.place.u},{p.place.v},{p.place.r})\n"
                   + _object_table(new_scene))
        except (ccg.NoParse, EmptyGrounding, UnknownRelation, NoFeasiblePlace,
                GroundingError) as exc:
            msg = f"error: {exc}"
        print(msg, flush=True)
        transcript.append(msg)
    (out / "transcript.txt").write_text("\n".join(transcript) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tablang",
        description="Tabletop instructions -> programs -> SE(2) control in a 2D simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, scene=False):
        p.add_argument("--lexicon", default=None, help="lexicon file (default: built-in)")
        p.add_argument("--backend", choices=("oracle", "embedding"), default="oracle")
        p.add_argument("--weights", default=None, help="projection weights file (embedding backend)")
        p.add_argument("--rotations", type=int, default=12)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--output-dir", default="tablang-out")
        if scene:
            p.add_argument("--scene", required=True, help="scene JSON path")

    p_parse = sub.add_parser("parse", help="parse an instruction to a program")
    p_parse.add_argument("instruction")
    p_parse.add_argument("--lexicon", default=None)
    p_parse.add_argument("--top-k", type=int, default=1)
    p_parse.add_argument("--verbose", action="store_true")
    p_parse.set_defaults(func=cmd_parse)

    p_run = sub.add_parser("run", help="execute an instruction on a scene")
    common(p_run, scene=True)
    p_run.add_argument("instruction")
    p_run.set_defaults(func=cmd_run)

    p_eval = sub.add_parser("eval", help="run an evaluation suite")
    common(p_eval)
    p_eval.add_argument("--config", default=None, help="suite config JSON")
    p_eval.add_argument("--tasks", default=None, help="comma-separated task names")
    p_eval.add_argument("--split", choices=("seen", "unseen"), default="seen")
    p_eval.add_argument("--episodes", type=int, default=10)
    p_eval.set_defaults(func=cmd_eval)

    p_repl = sub.add_parser("repl", help="interactive instruction session")
    common(p_repl, scene=True)
    p_repl.set_defaults(func=cmd_repl)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
