"""Operator command line: demo generation, expert evaluation, benchmarking,
rendering, serving, and config validation.

Exit codes: 0 success, 1 domain failure (generation/evaluation failed),
2 usage error (argparse default). Machine-readable ``RESULT`` lines let CI
assert outcomes without parsing prose.
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import fields
from pathlib import Path

import numpy as np

from .config import EnvConfig, config_from_mapping, config_from_text, config_to_text
from .demofile import save_demos
from .errors import BenchtopError, ConfigError
from .planners import generate_demos
from .render import export_image
from .runner import create_envs
from .tasks import get_task, task_names

_CONFIG_FLAGS = [f.name for f in fields(EnvConfig)]


def _add_config_flags(parser: argparse.ArgumentParser, exclude: tuple[str, ...] = ()) -> None:
    group = parser.add_argument_group("environment configuration")
    group.add_argument("--config", metavar="PATH", help="key=value config file")
    for name in _CONFIG_FLAGS:
        if name in exclude:
            continue
        group.add_argument(f"--{name.replace('_', '-')}", dest=f"cfg_{name}", metavar="V")


def _build_config(args) -> EnvConfig:
    base = EnvConfig()
    if getattr(args, "config", None):
        base = config_from_text(Path(args.config).read_text())
    overrides = {
        name: value
        for name in _CONFIG_FLAGS
        if (value := getattr(args, f"cfg_{name}", None)) is not None
    }
    # Commands with their own --seed flag feed it into the configuration.
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = str(args.seed)
    return config_from_mapping(overrides, base=base)


def _require_task(parser: argparse.ArgumentParser, name: str):
    try:
        return get_task(name)
    except BenchtopError:
        parser.error(f"unknown task {name!r}; choose from: {', '.join(task_names())}")


def cmd_demo_gen(parser, args) -> int:
    task = _require_task(parser, args.task)
    if args.episodes < 1:
        parser.error("--episodes must be >= 1")
    config = _build_config(args)
    trajs = generate_demos(task, args.episodes, config, args.seed, workers=args.workers)
    resolved = task.resolve_config(config)
    count = save_demos(trajs, args.out, resolved)
    steps = [len(t) for t in trajs]
    print(f"episodes written: {count}")
    print(f"successes: {sum(t.success for t in trajs)}")
    print(f"mean steps: {np.mean(steps):.2f}")
    print(f"RESULT task={task.name} episodes={count} mean_steps={np.mean(steps):.2f}")
    return 0


def cmd_run_expert(parser, args) -> int:
    task = _require_task(parser, args.task)
    if args.episodes < 1:
        parser.error("--episodes must be >= 1")
    config = _build_config(args)
    from .planners import _demo_attempt

    results = []
    if args.workers and args.workers > 1:
        import multiprocessing as mp

        with mp.get_context("fork").Pool(args.workers) as pool:
            results = pool.map(
                _demo_attempt,
                [(task.name, config, args.seed, i) for i in range(args.episodes)],
            )
    else:
        results = [
            _demo_attempt((task.name, config, args.seed, i))
            for i in range(args.episodes)
        ]
    successes = [t for t in results if t is not None and t.success]
    failures = [i for i, t in enumerate(results) if t is None or not t.success]
    rate = len(successes) / args.episodes
    steps = sorted(len(t) for t in successes)
    mean_steps = float(np.mean(steps)) if steps else float("nan")
    print(f"episodes: {args.episodes}")
    print(f"success rate: {rate:.4f}")
    if steps:
        print(f"mean steps (successes): {mean_steps:.2f}")
        for pct in (50, 90, 100):
            idx = min(len(steps) - 1, int(len(steps) * pct / 100))
            print(f"p{pct} steps: {steps[idx]}")
    if failures:
        print(f"failed episode seeds: {failures}")
    print(f"RESULT task={task.name} success={rate:.4f} mean_steps={mean_steps:.2f}")
    return 0 if rate > 0 else 1


def cmd_bench(parser, args) -> int:
    task = _require_task(parser, args.task)
    config = _build_config(args)

    def measure(n_envs: int, workers: int) -> float:
        vec = create_envs(n_envs, task.name, config, workers=workers)
        vec.reset()
        # Warm caches before timing.
        for _ in range(5):
            vec.step_expert()
        target = args.steps
        done_steps = 0
        t0 = time.perf_counter()
        while done_steps < target:
            vec.step_expert()
            done_steps += n_envs
        elapsed = time.perf_counter() - t0
        vec.close()
        return done_steps / elapsed

    import os

    default_workers = min(args.envs, os.cpu_count() or 1)
    single = measure(1, 0)
    aggregate = measure(args.envs, args.workers if args.workers else default_workers)
    print(f"single-env: {single:.1f} steps/s")
    print(f"{args.envs}-env aggregate: {aggregate:.1f} steps/s ({aggregate / single:.2f}x)")
    print(
        f"RESULT task={task.name} single={single:.1f} aggregate={aggregate:.1f} "
        f"speedup={aggregate / single:.2f}"
    )
    return 0


def cmd_render(parser, args) -> int:
    task = _require_task(parser, args.task)
    config = _build_config(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    trajs = generate_demos(task, 1, config, args.seed)
    traj = trajs[0]
    z_max = config.z_max
    for t, transition in enumerate(traj.transitions):
        export_image(transition.heightmap, out_dir / f"obs_{t}.png", z_max=z_max)
        export_image(transition.in_hand, out_dir / f"inhand_{t}.png", z_max=z_max)
    print(f"wrote {len(traj.transitions)} observation pairs to {out_dir}")
    return 0


def cmd_serve(parser, args) -> int:
    from . import server

    if args.stdio:
        server.serve_stdio()
        return 0
    try:
        server.serve(args.host, args.port, ready_callback=_announce_ready)
    except KeyboardInterrupt:
        pass
    return 0


def _announce_ready(host: str, port: int) -> None:
    print(f"READY {host}:{port}", flush=True)


def cmd_validate(parser, args) -> int:
    config = _build_config(args)
    sys.stdout.write(config_to_text(config))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="benchtop",
        description="Deterministic pick-and-place manipulation benchmark",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("demo-gen", help="generate expert demonstrations")
    p.add_argument("--task", required=True)
    p.add_argument("--episodes", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=0)
    _add_config_flags(p, exclude=("seed",))

    p = sub.add_parser("run-expert", help="evaluate the scripted expert")
    p.add_argument("--task", required=True)
    p.add_argument("--episodes", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=0)
    _add_config_flags(p, exclude=("seed",))

    p = sub.add_parser("bench", help="measure stepping throughput")
    p.add_argument("--task", required=True)
    p.add_argument("--envs", type=int, default=5)
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--workers", type=int, default=0)
    _add_config_flags(p)

    p = sub.add_parser("render", help="export expert episode observations as PNGs")
    p.add_argument("--task", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    _add_config_flags(p, exclude=("seed",))

    p = sub.add_parser("serve", help="run the environment server")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=9147)
    p.add_argument("--stdio", action="store_true", help="frame over stdin/stdout")

    p = sub.add_parser("validate", help="echo the resolved configuration")
    _add_config_flags(p)

    return parser


_COMMANDS = {
    "demo-gen": cmd_demo_gen,
    "run-expert": cmd_run_expert,
    "bench": cmd_bench,
    "render": cmd_render,
    "serve": cmd_serve,
    "validate": cmd_validate,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](parser, args)
    except ConfigError as exc:
        parser.error(str(exc))  # exits 2
    except BenchtopError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
