"""Command line entry point: gen-scenes, train, eval, render, replay."""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import env, hac, oracle, render, scene
from .learner.agent import CheckpointError, HACAgent
from .learner.config import ConfigError, TrainConfig, config_from_dict
from .learner.curriculum import CurriculumSchedule
from .learner.training import METRICS_HEADER, EvalReport, evaluate, train

log = logging.getLogger("layout_hac")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INTERRUPTED = 130
MANIFEST_NAME = "manifest.json"
METRICS_NAME = "metrics.csv"
REPORT_FIELDS = (
    "room_type",
    "n",
    "iou_f1_mean",
    "iou_f1_stderr",
    "iou_f2_mean",
    "iou_f2_stderr",
    "success_rate",
    "median_steps",
    "median_oracle_steps",
)


class CLIError(Exception):
    pass


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def sha256_file(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def load_scene_dir(scene_dir: str | Path) -> tuple[list[Path], list[scene.SceneInstance]]:
    d = Path(scene_dir)
    if not d.is_dir():
        raise CLIError(f"{d}: not a directory")
    paths = sorted(d.glob("*.json"))
    if not paths:
        raise CLIError(f"{d}: no scene files (*.json) found")
    scenes = []
    for p in paths:
        try:
            scenes.append(scene.load_file(p))
        except (scene.SceneFormatError, scene.SceneValidationError) as exc:
            raise CLIError(f"{p}: {exc}") from None
    return paths, scenes


# ---------------------------------------------------------------------------
# gen-scenes


def cmd_gen_scenes(room_type: str, count: int, seed: int, out_dir: str | Path) -> list[Path]:
    try:
        rt = scene.RoomType(room_type)
    except ValueError:
        choices = ", ".join(r.value for r in scene.RoomType)
        raise CLIError(f"invalid room type {room_type!r} (choose from {choices})") from None
    if count < 0:
        raise CLIError("count must be non-negative")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CLIError(f"{out}: cannot create output directory ({exc.strerror})") from None
    width = max(4, len(str(max(count - 1, 0))))
    paths = []
    for j in range(count):
        # per-file seeds derived from the run seed keep every file reproducible on its own
        s = int(np.random.SeedSequence([seed, j]).generate_state(1, dtype=np.uint64)[0])
        sc = scene.generate_scene(rt, s)
        p = out / f"{rt.value}_{j:0{width}d}.json"
        try:
            scene.save_file(sc, p)
        except OSError as exc:
            raise CLIError(f"{p}: cannot write scene ({exc.strerror})") from None
        paths.append(p)
    return paths


# ---------------------------------------------------------------------------
# train


def read_config(path: str | Path | None) -> tuple[TrainConfig, CurriculumSchedule]:
    if path is None:
        return TrainConfig(), CurriculumSchedule.default()
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise CLIError(f"{path}: cannot read config ({exc.strerror})") from None
    except json.JSONDecodeError as exc:
        raise CLIError(f"{path}: malformed config at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    try:
        cfg, extra = config_from_dict(doc)
    except ConfigError as exc:
        raise CLIError(f"{path}: {exc}") from None
    sched = extra.get("schedule")
    if sched is None:
        log.info("config has no schedule; using the default 11-stage curriculum")
        return cfg, CurriculumSchedule.default()
    if isinstance(sched, dict):
        sched = sched.get("stages")
    try:
        return cfg, CurriculumSchedule.from_indices(sched)
    except (TypeError, ValueError) as exc:
        raise CLIError(f"{path}: schedule: {exc}") from None


class RunManifest:
    """Single JSON record of one training run, rewritten as the run progresses."""

    def __init__(self, path: Path, config: TrainConfig, scene_paths: list[Path], config_path):
        self.path = path
        self.doc = {
            "command": "train",
            "status": "running",
            "seed": config.seed,
            "config": config.to_dict(),
            "config_file": None if config_path is None else str(config_path),
            "scenes": [{"path": str(p), "sha256": sha256_file(p)} for p in scene_paths],
            "artifacts": {"metrics": None, "checkpoints": []},
            "completed_stages": [],
            "started_at": _now(),
            "finished_at": None,
        }

    def write(self) -> None:
        tmp = self.path.with_suffix(".tmp")
        tmp.write_text(json.dumps(self.doc, indent=2) + "\n", encoding="utf-8")
        tmp.replace(self.path)

    def finish(self, status: str, error: str | None = None) -> None:
        self.doc["status"] = status
        self.doc["finished_at"] = _now()
        if error:
            self.doc["error"] = error
        self.write()


def cmd_train(
    scene_dir: str | Path,
    config_file: str | Path | None,
    out_dir: str | Path,
    seed: int | None = None,
) -> Path:
    # parse everything before touching the output directory or training
    cfg, schedule = read_config(config_file)
    if seed is not None:
        cfg.seed = int(seed)
    scene_paths, scenes = load_scene_dir(scene_dir)
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CLIError(f"{out}: cannot create output directory ({exc.strerror})") from None

    manifest = RunManifest(out / MANIFEST_NAME, cfg, scene_paths, config_file)
    metrics_path = out / METRICS_NAME
    manifest.doc["artifacts"]["metrics"] = str(metrics_path)
    manifest.write()

    with open(metrics_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(METRICS_HEADER)

        def on_episode(row):
            writer.writerow(row.csv_row())

        def on_stage_end(c, agent):
            fh.flush()
            ck = out / f"checkpoint_stage{c:02d}.json"
            agent.save(ck)
            manifest.doc["artifacts"]["checkpoints"].append(str(ck))
            manifest.doc["completed_stages"].append(c)
            manifest.write()
            log.info("stage %d checkpoint written to %s", c, ck)

        try:
            train(scenes, cfg, schedule, on_episode=on_episode, on_stage_end=on_stage_end)
        except KeyboardInterrupt:
            fh.flush()
            manifest.finish("incomplete", "interrupted")
            raise
        except Exception as exc:
            fh.flush()
            manifest.finish("failed", f"{type(exc).__name__}: {exc}")
            raise
    manifest.finish("complete")
    return manifest.path


# ---------------------------------------------------------------------------
# eval


def _load_hierarchy(checkpoint: str | Path | None, use_oracle: bool) -> tuple[hac.HierarchyParams, int]:
    if use_oracle:
        return oracle.oracle_hierarchy(), 12
    if checkpoint is None:
        raise CLIError("eval needs a checkpoint or --oracle")
    try:
        agent = HACAgent.load(checkpoint)
    except OSError as exc:
        raise CLIError(f"{checkpoint}: cannot read checkpoint ({exc.strerror})") from None
    except CheckpointError as exc:
        raise CLIError(str(exc)) from None
    return agent.hierarchy, agent.config.max_high_steps


def _eval_chunk(args):
    checkpoint, use_oracle, scene_docs, n, seed_seq = args
    hierarchy, max_high = _load_hierarchy(checkpoint, use_oracle)
    scenes = [scene.scene_from_dict(d) for d in scene_docs]
    rng = np.random.default_rng(seed_seq)
    return evaluate(hierarchy, scenes, n, rng, max_high_steps=max_high)


def _merge_reports(parts: list[EvalReport]) -> EvalReport:
    ious = np.concatenate([p.final_iou for p in parts])
    steps = np.concatenate([p.steps for p in parts])
    ostep = np.concatenate([p.oracle_steps for p in parts])
    n = len(ious)
    thr = parts[0].threshold
    se = ious.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.zeros(2)
    return EvalReport(
        mean_iou=(float(ious[:, 0].mean()), float(ious[:, 1].mean())),
        stderr_iou=(float(se[0]), float(se[1])),
        success_rate=float(np.mean((ious[:, 0] > thr) & (ious[:, 1] > thr))),
        median_steps=float(np.median(steps)),
        median_oracle_steps=float(np.median(ostep)),
        n=n,
        final_iou=ious,
        steps=steps,
        oracle_steps=ostep,
        threshold=thr,
    )


def evaluate_room(
    checkpoint,
    use_oracle: bool,
    scenes: list[scene.SceneInstance],
    n_starts: int,
    seed: int,
    parallel: int = 1,
) -> EvalReport:
    """``n_starts`` greedy episodes over ``scenes``; with ``parallel`` > 1 the starts are split
    into that many chunks, each with its own spawned random stream."""
    if parallel <= 1:
        hierarchy, max_high = _load_hierarchy(checkpoint, use_oracle)
        return evaluate(hierarchy, scenes, n_starts, np.random.default_rng(seed), max_high_steps=max_high)
    sizes = [len(c) for c in np.array_split(np.arange(n_starts), parallel) if len(c)]
    streams = np.random.SeedSequence(seed).spawn(len(sizes))
    docs = [scene.scene_to_dict(s) for s in scenes]
    jobs = []
    offset = 0
    for size, ss in zip(sizes, streams):
        # rotate so each chunk continues the round-robin over scenes
        rot = docs[offset % len(docs):] + docs[: offset % len(docs)]
        jobs.append((checkpoint, use_oracle, rot, size, ss))
        offset += size
    with ProcessPoolExecutor(max_workers=parallel) as pool:
        parts = list(pool.map(_eval_chunk, jobs))
    return _merge_reports(parts)


def format_report(rows: list[dict]) -> tuple[str, str]:
    """CSV text and an aligned human-readable table."""
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=REPORT_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (f"{v:.6f}" if isinstance(v, float) else v) for k, v in r.items()})
    head = f"{'room':<10} {'n':>6}  {'furniture 1 IoU':>17}  {'furniture 2 IoU':>17}  {'success':>7}  {'steps':>6}  {'oracle':>6}"
    lines = [head, "-" * len(head)]
    for r in rows:
        f1 = f"{r['iou_f1_mean']:.3f} ± {r['iou_f1_stderr']:.3f}"
        f2 = f"{r['iou_f2_mean']:.3f} ± {r['iou_f2_stderr']:.3f}"
        lines.append(
            f"{r['room_type']:<10} {r['n']:>6}  {f1:>17}  {f2:>17}  {r['success_rate']:>7.1%}  "
            f"{r['median_steps']:>6.1f}  {r['median_oracle_steps']:>6.1f}"
        )
    return buf.getvalue(), "\n".join(lines) + "\n"


def cmd_eval(
    checkpoint: str | Path | None,
    scene_dir: str | Path,
    n_starts: int,
    report_path: str | Path,
    seed: int = 0,
    use_oracle: bool = False,
    parallel: int = 1,
) -> list[dict]:
    if n_starts < 1:
        raise CLIError("--n-starts must be positive")
    _load_hierarchy(checkpoint, use_oracle)  # fail before any episodes on a bad checkpoint
    _, scenes = load_scene_dir(scene_dir)
    by_room: dict[str, list[scene.SceneInstance]] = {}
    for s in scenes:
        by_room.setdefault(s.room_type.value, []).append(s)
    rows = []
    for room in (r.value for r in scene.RoomType):
        if room not in by_room:
            continue
        rep = evaluate_room(checkpoint, use_oracle, by_room[room], n_starts, seed, parallel)
        rows.append({"room_type": room, **rep.as_row()})
    text_csv, table = format_report(rows)
    report = Path(report_path)
    try:
        report.parent.mkdir(parents=True, exist_ok=True)
        report.write_text(text_csv, encoding="utf-8")
        report.with_suffix(".txt").write_text(table, encoding="utf-8")
    except OSError as exc:
        raise CLIError(f"{report}: cannot write report ({exc.strerror})") from None
    sys.stdout.write(table)
    return rows


# ---------------------------------------------------------------------------
# render and replay


def _is_trajectory(path: Path) -> bool:
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
    try:
        head = json.loads(first)
    except json.JSONDecodeError:
        return False
    return isinstance(head, dict) and head.get("type") == "header"


def cmd_render(input_path: str | Path, out_svg: str | Path, grid: bool = False) -> list[Path]:
    src = Path(input_path)
    if not src.is_file():
        raise CLIError(f"{src}: no such file")
    out = Path(out_svg)
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
        if _is_trajectory(src):
            try:
                sc, start, records = hac.read_trajectory(src)
            except (hac.TrajectoryFormatError, scene.SceneFormatError, scene.SceneValidationError) as exc:
                raise CLIError(str(exc)) from None
            return render.write_frames(sc, hac.primitive_frames(start, records), out, grid)
        try:
            sc = scene.load_file(src)
        except (scene.SceneFormatError, scene.SceneValidationError) as exc:
            raise CLIError(f"{src}: {exc}") from None
        out.write_text(render.render_svg(sc, grid=grid), encoding="utf-8")
        return [out]
    except OSError as exc:
        raise CLIError(f"{exc.filename}: {exc.strerror}") from None


def cmd_replay(
    checkpoint: str | Path | None,
    scene_file: str | Path,
    out_path: str | Path,
    seed: int = 0,
    use_oracle: bool = False,
    threshold: float = 0.9,
) -> hac.EpisodeResult:
    """Run one greedy episode from the scene's stored start and dump it as a trajectory file."""
    hierarchy, max_high = _load_hierarchy(checkpoint, use_oracle)
    try:
        sc = scene.load_file(scene_file)
    except OSError as exc:
        raise CLIError(f"{scene_file}: {exc.strerror}") from None
    except (scene.SceneFormatError, scene.SceneValidationError) as exc:
        raise CLIError(f"{scene_file}: {exc}") from None
    start = env.reset(sc)
    res = hac.run_episode(
        hierarchy, start, hac.scene_goal(sc, threshold), max_high, explore=False, rng=np.random.default_rng(seed)
    )
    hac.write_trajectory(out_path, res)
    return res


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="layout-hac", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress at INFO level")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-scenes", help="write procedurally generated scene files")
    g.add_argument("room_type", choices=[r.value for r in scene.RoomType])
    g.add_argument("--count", type=int, default=200)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True, help="output directory")

    t = sub.add_parser("train", help="run the staged curriculum on a directory of scenes")
    t.add_argument("scene_dir")
    t.add_argument("--config", help="JSON config mirroring TrainConfig plus an optional schedule")
    t.add_argument("--seed", type=int, help="overrides the config seed")
    t.add_argument("--out", required=True, help="run directory for checkpoints, metrics and manifest")
    t.add_argument("--parallel", type=int, default=1, help="only 1 is supported for training (deterministic)")

    e = sub.add_parser("eval", help="greedy evaluation per room type")
    e.add_argument("checkpoint", nargs="?", help="checkpoint JSON (omit with --oracle)")
    e.add_argument("--scenes", required=True, help="directory of scene files")
    e.add_argument("--oracle", action="store_true", help="evaluate the scripted optimal hierarchy instead")
    e.add_argument("--n-starts", type=int, default=2000, help="random starts per room type")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--parallel", type=int, default=1, help="worker processes for episode collection")
    e.add_argument("--out", required=True, help="report CSV path; a .txt table is written alongside")

    r = sub.add_parser("render", help="SVG of a scene file, or one SVG per step of a trajectory file")
    r.add_argument("input")
    r.add_argument("--out", required=True, help="SVG path (trajectory frames get _NNN suffixes)")
    r.add_argument("--grid", action="store_true", help="draw the move lattice faintly")

    rp = sub.add_parser("replay", help="run one greedy episode and write its trajectory file")
    rp.add_argument("checkpoint", nargs="?")
    rp.add_argument("--scene", required=True)
    rp.add_argument("--oracle", action="store_true")
    rp.add_argument("--seed", type=int, default=0)
    rp.add_argument("--threshold", type=float, default=0.9)
    rp.add_argument("--out", required=True, help="trajectory NDJSON path")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "gen-scenes":
            paths = cmd_gen_scenes(args.room_type, args.count, args.seed, args.out)
            print(f"wrote {len(paths)} scene files to {args.out}")
        elif args.command == "train":
            if args.parallel != 1:
                raise CLIError("train supports only --parallel 1; parallel collection is available for eval")
            path = cmd_train(args.scene_dir, args.config, args.out, args.seed)
            print(f"training complete; manifest at {path}")
        elif args.command == "eval":
            if args.oracle and args.checkpoint:
                raise CLIError("give either a checkpoint or --oracle, not both")
            cmd_eval(args.checkpoint, args.scenes, args.n_starts, args.out, args.seed, args.oracle, args.parallel)
        elif args.command == "render":
            paths = cmd_render(args.input, args.out, args.grid)
            print(f"wrote {len(paths)} SVG file(s)")
        elif args.command == "replay":
            if args.oracle and args.checkpoint:
                raise CLIError("give either a checkpoint or --oracle, not both")
            res = cmd_replay(args.checkpoint, args.scene, args.out, args.seed, args.oracle, args.threshold)
            print(f"{res.trajectory.primitive_steps} steps, success={res.trajectory.success}; wrote {args.out}")
    except KeyboardInterrupt:
        print("interrupted; partial outputs are marked incomplete", file=sys.stderr)
        return EXIT_INTERRUPTED
    except CLIError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
