"""Unified command line: gen-data, train, eval, simulate, serve, export.

Every subcommand accepts --seed and --config (a JSON file of overrides for
that subcommand's config object). Exit codes: 0 success, 1 usage error,
2 data error (unreadable/malformed inputs), 3 runtime failure.
"""

from __future__ import annotations

import argparse
import base64
import json
import os
import sys
from pathlib import Path

from .grids import GridError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_RUNTIME = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2; usage errors are 1 here
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(EXIT_USAGE)


class DataError(Exception):
    pass


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError as e:
        raise DataError(f"config file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise DataError(f"config file is not valid JSON: {path}: {e}") from e


def build_parser() -> _Parser:
    parser = _Parser(prog="iseg3d", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset with manifest")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grid-size", type=int, default=32)
    p.add_argument("--config", default=None, help="JSON overrides for the case generator")

    p = sub.add_parser("train", help="train a model on a generated dataset")
    p.add_argument("--data", required=True, help="manifest.json path")
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None, help="JSON overrides for the training config")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--resume", default=None, help="checkpoint to resume from")

    p = sub.add_parser("eval", help="evaluate a checkpoint on the test split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--variant", default="basic")
    p.add_argument("--points", type=int, default=None, choices=(1, 10, 50, 100))
    p.add_argument("--box", default="tight", choices=("tight", "erode", "dilate"))
    p.add_argument("--scribbles", default=None, choices=("on", "off"))
    p.add_argument("--iterations", type=int, default=6)
    p.add_argument("--limit", type=int, default=None, help="evaluate at most this many cases")
    p.add_argument("--out", default=None, help="report JSON path")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", default=None)

    p = sub.add_parser("simulate", help="simulated-user sessions with iteration curves")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--cases", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", default=None)

    # flags override the ISEG3D_CHECKPOINT_DIR / ISEG3D_PORT / ISEG3D_TTL env vars
    p = sub.add_parser("serve", help="run the interactive session service")
    env = os.environ
    p.add_argument("--checkpoint-dir", default=env.get("ISEG3D_CHECKPOINT_DIR"), required="ISEG3D_CHECKPOINT_DIR" not in env)
    p.add_argument("--port", type=int, default=int(env.get("ISEG3D_PORT", 8000)))
    p.add_argument("--host", default=env.get("ISEG3D_HOST", "127.0.0.1"))
    p.add_argument("--ttl", type=float, default=float(env.get("ISEG3D_TTL", 1800.0)))
    p.add_argument("--spool", default=env.get("ISEG3D_SPOOL"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", default=None)

    p = sub.add_parser("export", help="replay an exported session archive and write its mask")
    p.add_argument("--archive", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True, help="VGRID path for the replayed final mask")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", default=None)

    return parser


def cmd_gen_data(args) -> int:
    from .synthdata import SynthSpec, generate_dataset

    overrides = _load_config(args.config)
    overrides.setdefault("grid_size", (args.grid_size,) * 3)
    overrides["seed"] = args.seed
    try:
        spec = SynthSpec(**overrides)
    except (TypeError, ValueError) as e:
        raise DataError(f"bad generator config: {e}") from e
    manifest = generate_dataset(spec, args.n, args.out, seed=args.seed)
    counts = {s: len(manifest.by_split(s)) for s in ("train", "val", "test")}
    print(f"wrote {args.n} cases to {args.out} (splits: {counts})")
    return EXIT_OK


def cmd_train(args) -> int:
    from .synthdata import CaseManifest
    from .training import TrainConfig, fit

    overrides = _load_config(args.config)
    if args.seed is not None:
        overrides["seed"] = args.seed
    try:
        cfg = TrainConfig(**overrides)
    except (TypeError, ValueError) as e:
        raise DataError(f"bad training config: {e}") from e
    try:
        manifest = CaseManifest.load(args.data)
    except (OSError, ValueError, KeyError) as e:
        raise DataError(f"cannot load manifest {args.data}: {e}") from e
    result = fit(manifest, cfg, args.out, resume_from=args.resume)
    print(f"best val dice {result.best_val_dice:.4f}; checkpoints in {args.out}")
    return EXIT_OK


def _load_model(path):
    from .model.network import load_checkpoint

    try:
        model, _ = load_checkpoint(path)
    except (OSError, ValueError) as e:
        raise DataError(f"cannot load checkpoint {path}: {e}") from e
    model.eval()
    return model


def _load_cases(manifest_path, split, limit):
    from .evaluation import load_split_cases
    from .synthdata import CaseManifest

    try:
        manifest = CaseManifest.load(manifest_path)
        return load_split_cases(manifest, split, limit)
    except (OSError, ValueError, KeyError) as e:
        raise DataError(f"cannot load cases from {manifest_path}: {e}") from e


def cmd_eval(args) -> int:
    from .evaluation import EvalConfig, curve_report, evaluate_cases, write_report

    model = _load_model(args.checkpoint)
    cases = _load_cases(args.data, args.split, args.limit)
    overrides = _load_config(args.config)
    box_mode = {"tight": "tight", "erode": "erode5", "dilate": "dilate5"}[args.box]
    scribbles = None if args.scribbles is None else args.scribbles == "on"
    cfg_kwargs = dict(
        variant=args.variant,
        iterations=args.iterations,
        test_points=args.points,
        box_mode=box_mode,
        scribbles=scribbles,
        seed=args.seed,
    )
    cfg_kwargs.update(overrides)
    cfg = EvalConfig(**cfg_kwargs)
    curve, _ = evaluate_cases(model, cases, cfg)
    report = curve_report(curve, cfg)
    if args.out:
        write_report(report, args.out)
    print(json.dumps({"dice": curve.dice_mean[-1], "nsd": curve.nsd_mean[-1], "n_cases": curve.n_cases}))
    return EXIT_OK


def cmd_simulate(args) -> int:
    from .evaluation import EvalConfig, curve_report, evaluate_cases, write_report

    model = _load_model(args.checkpoint)
    cases = _load_cases(args.data, args.split, args.cases)
    overrides = _load_config(args.config)
    overrides.setdefault("seed", args.seed)
    cfg = EvalConfig(**overrides)
    if cfg.test_points is None:
        from .variants import resolve_variant

        if resolve_variant(cfg.variant).test_points is None:
            cfg.test_points = 1
    curve, results = evaluate_cases(model, cases, cfg)
    report = curve_report(curve, cfg)
    if args.out:
        write_report(report, args.out)
    for i, (d, n) in enumerate(zip(curve.dice_mean, curve.nsd_mean), start=1):
        print(f"iteration {i}: dice {d:.4f}  nsd {n:.4f}")
    return EXIT_OK


def cmd_serve(args) -> int:
    from .server import load_models, serve

    try:
        models = load_models(args.checkpoint_dir)
    except (OSError, ValueError) as e:
        raise DataError(f"cannot load checkpoints from {args.checkpoint_dir}: {e}") from e
    if not models:
        raise DataError(f"no checkpoints (*.pt) in {args.checkpoint_dir}")
    serve(models, port=args.port, host=args.host, ttl_seconds=args.ttl, spool_dir=args.spool)
    return EXIT_OK


def cmd_export(args) -> int:
    from .grids import BinaryMask, write_grid
    from .session import decode_mask_payload, replay_session

    try:
        archive = json.loads(Path(args.archive).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise DataError(f"cannot read archive {args.archive}: {e}") from e
    model = _load_model(args.checkpoint)
    try:
        replayed = replay_session(archive, {archive.get("model_id", "model"): model})
    except ValueError as e:
        raise DataError(str(e)) from e
    final = replayed["final"]
    if final is None:
        print("archive has no prompts; nothing to replay")
        return EXIT_OK
    mask = decode_mask_payload(final["mask"])
    write_grid(BinaryMask(mask), args.out)
    if archive.get("final_mask_b64"):
        from .grids import grid_from_bytes

        recorded = grid_from_bytes(base64.b64decode(archive["final_mask_b64"]))
        match = bool((recorded.data == mask).all())
        print(f"replayed mask written to {args.out}; matches archive: {match}")
        if not match:
            return EXIT_RUNTIME
    else:
        print(f"replayed mask written to {args.out}")
    return EXIT_OK


_COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "simulate": cmd_simulate,
    "serve": cmd_serve,
    "export": cmd_export,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (DataError, GridError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except Exception as e:  # noqa: BLE001 - the CLI boundary maps everything to exit codes
        print(f"runtime error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
