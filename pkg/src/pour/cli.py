"""Command line entry point: ``pour <stage> CONFIG [--seed N] [--out DIR] [--format csv|json]``.

Stages share one output directory::

    gen      -> frame.pour1, train.pour1, test.pour1
    train    -> original.pour1
    unlearn  -> unlearned.pour1, unlearn_losses.json
    eval     -> report.<format>
    run      -> every stage for ``runs`` seeds (seed, seed+1, ...), one report
    bound-check -> randomized mixture trials of the decomposition bound

Exit codes: 0 ok, 2 config/validation error, 3 numerical failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from ._rng import derive_seed, make_rng
from .bounds import random_mixture_pair, verify_decomposition_bound
from .checkpoint import load_checkpoint, save_checkpoint
from .config import ExperimentConfig, load_config
from .errors import CheckpointError, ConfigError, NumericalError, StageError
from .pipeline import (
    ForgetOnlyGate,
    RunManifest,
    evaluate,
    generate_data,
    needs_reference,
    run_experiment,
    stage,
    train_original,
    train_reference,
    unlearn_stage,
)
from .report import emit_report
from .synthetic import FeatureMatrix
from .toy_model import ToyModel
from .unlearn import DistillResult

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    return cfg.with_overrides(seed=args.seed, out=args.out, format=args.format)


def _out(cfg: ExperimentConfig) -> Path:
    return Path(cfg["out"])


def _write_config(cfg: ExperimentConfig, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    echoed = {k: v for k, v in cfg.canonical().items() if k != "out"}  # location-independent
    (out / "config.json").write_text(json.dumps(echoed, indent=2, sort_keys=True) + "\n")


def _load_data(cfg: ExperimentConfig, out: Path) -> tuple[FeatureMatrix, FeatureMatrix]:
    kw = dict(expected_type=FeatureMatrix, class_count=cfg.class_count, dim=cfg.ambient_dim)
    return load_checkpoint(out / "train.pour1", **kw), load_checkpoint(out / "test.pour1", **kw)


def _load_model(cfg: ExperimentConfig, path: Path) -> ToyModel:
    return load_checkpoint(path, expected_type=ToyModel, class_count=cfg.class_count, dim=cfg.ambient_dim)


def cmd_gen(args) -> int:
    cfg = _config(args)
    out = _out(cfg)
    with stage("generate"):
        frame, train, test = generate_data(cfg, cfg["seed"])
    _write_config(cfg, out)
    for name, obj in (("frame", frame), ("train", train), ("test", test)):
        save_checkpoint(obj, out / f"{name}.pour1")
    print(f"wrote frame/train/test checkpoints to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _config(args)
    out = _out(cfg)
    train, _ = _load_data(cfg, out)
    with stage("train"):
        model = train_original(cfg, cfg["seed"], train)
    save_checkpoint(model, out / "original.pour1")
    print(f"wrote {out / 'original.pour1'}")
    return EXIT_OK


def cmd_unlearn(args) -> int:
    cfg = _config(args)
    out = _out(cfg)
    train, _ = _load_data(cfg, out)
    original = _load_model(cfg, out / "original.pour1")
    gate = ForgetOnlyGate(train, cfg["forget_class"])
    with stage("unlearn"):
        result = unlearn_stage(cfg, cfg["seed"], original, gate)
    save_checkpoint(result.model, out / "unlearned.pour1")
    (out / "unlearn_losses.json").write_text(json.dumps(result.losses) + "\n")
    print(f"wrote {out / 'unlearned.pour1'} (retain accesses during unlearning: {gate.retain_accesses})")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _config(args)
    out = _out(cfg)
    seed = cfg["seed"]
    train, test = _load_data(cfg, out)
    original = _load_model(cfg, out / "original.pour1")
    unlearned = _load_model(cfg, out / "unlearned.pour1")
    losses_path = out / "unlearn_losses.json"
    losses = json.loads(losses_path.read_text()) if losses_path.exists() else []
    reference = None
    if needs_reference(cfg):
        with stage("reference"):
            reference = train_reference(cfg, seed, ForgetOnlyGate(train, cfg["forget_class"]).retain_set())
    with stage("metrics"):
        result = DistillResult(unlearned, unlearned.projection, losses)
        report, bounds, _ = evaluate(cfg, seed, original, result, reference, train, test)
    manifest = RunManifest(cfg["variant"], cfg.config_hash(), __version__, seed, report, bounds, losses or None)
    path = emit_report([manifest], cfg["format"], out / f"report.{cfg['format']}")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _config(args)
    out = _out(cfg)
    _write_config(cfg, out)
    manifests = []
    for i in range(cfg["runs"]):
        seed = cfg["seed"] + i
        started = time.perf_counter()
        manifest, art = run_experiment(cfg, seed)
        run_dir = out / f"seed-{seed}" if cfg["runs"] > 1 else out
        for name, obj in (("frame", art.frame), ("train", art.train), ("test", art.test),
                          ("original", art.original), ("unlearned", art.unlearned.model)):
            save_checkpoint(obj, run_dir / f"{name}.pour1")
        if art.reference is not None:
            save_checkpoint(art.reference, run_dir / "reference.pour1")
        manifests.append(manifest)
        print(f"seed {seed}: acc_r={manifest.metrics.acc_r:.4f} acc_f={manifest.metrics.acc_f:.4f} "
              f"({time.perf_counter() - started:.1f}s)", file=sys.stderr)
    path = emit_report(manifests, cfg["format"], out / f"report.{cfg['format']}")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_bound_check(args) -> int:
    seed, kernel = args.seed or 0, args.kernel
    if args.config:
        cfg = _config(args)
        seed, kernel = cfg["seed"], args.kernel or cfg["bound_kernel"]
    kernel = kernel or "gaussian"
    rng = make_rng(derive_seed(seed, "bound-check"))
    rows, held, ordered = [], 0, 0
    for t in range(args.trials):
        p_spec, q_spec = random_mixture_pair(rng, args.max_dim)
        triple = verify_decomposition_bound(p_spec, q_spec, args.samples, kernel,
                                            derive_seed(seed, "trial", t), args.repetitions)
        held += triple.sandwiched(3.0)
        ordered += triple.lower <= triple.upper
        rows.append({"trial": t, "dim": p_spec.dim, **{k: round(v, 6) for k, v in vars(triple).items()}})
    print(f"sandwich held in {held}/{args.trials} trials; lower <= upper in {ordered}/{args.trials}")
    if args.out:
        path = Path(args.out) / "bound_check.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(rows, indent=2) + "\n")
        print(f"wrote {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pour", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="override the config seed")
    common.add_argument("--out", default=None, help="override the output directory")
    common.add_argument("--format", choices=("csv", "json"), default=None, help="report format")

    handlers = {"gen": cmd_gen, "train": cmd_train, "unlearn": cmd_unlearn, "eval": cmd_eval, "run": cmd_run}
    for name, fn in handlers.items():
        p = sub.add_parser(name, parents=[common], help=f"{name} stage")
        p.add_argument("config", help="JSON experiment config")
        p.set_defaults(func=fn)

    p = sub.add_parser("bound-check", parents=[common], help="randomized decomposition-bound trials")
    p.add_argument("--config", default=None, help="optional config supplying seed and kernel")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--samples", type=int, default=200, help="samples per mixture component (>= 100)")
    p.add_argument("--repetitions", type=int, default=10)
    p.add_argument("--max-dim", type=int, default=8)
    p.add_argument("--kernel", choices=("linear", "gaussian"), default=None)
    p.set_defaults(func=cmd_bound_check)
    return parser


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, StageError):
        exc = exc.cause
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, (NumericalError, ArithmeticError)):
        return EXIT_NUMERIC
    if isinstance(exc, (CheckpointError, OSError)):
        return EXIT_IO
    if isinstance(exc, ValueError):
        return EXIT_CONFIG
    return 1


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, NumericalError, CheckpointError, StageError, OSError, ValueError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
