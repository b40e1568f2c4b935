"""Command-line surface: train, eval, diagnose, gradcheck, synth.

Exit codes: 0 success, 1 check failure, 2 usage/config error, 3 numeric
failure.  Report paths write figures next to the delimited outputs.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import autodiff as ad
from .config import RunConfig, load_config_file
from .diagnostics import (
    EnergyTrace,
    decay_bound_check,
    lemma1_check,
    mixing_norms,
    oversmoothing_report,
    run_energy_trace,
)
from .errors import (
    CapabilityError,
    ConfigError,
    DimensionError,
    FormatError,
    NumericError,
    UsageError,
)
from .graph import save_dataset
from .model import forward, init_params, load_checkpoint, loss_nll, accuracy
from .training import (
    build_model_config,
    resolve_dataset,
    run_sweep,
    run_training,
)

_CONFIG_FLAGS = [
    ("--data", str, "dataset directory (edges.tsv, features.csv, labels.csv, splits.json)"),
    ("--synth", str, "synthetic dataset spec, e.g. 'sbm:blocks=2,block_size=30,p_in=0.9,p_out=0.05'"),
    ("--signature", str, "product signature 'dxm[,dxm...]', e.g. '2x8'"),
    ("--layers", int, "number of graph convolution layers"),
    ("--alpha", float, "initial-feature residual weight in [0, 1]"),
    ("--beta-base", float, "identity-mapping base; layer l uses log(1 + beta_base/l)"),
    ("--drop-rate", float, "HyperDrop rate eta in [0, 1); noise variance is eta/(1-eta)"),
    ("--origin-radius", float, "Lorentz norm of each component origin's displacement"),
    ("--activation", str, "tangent activation: relu or identity"),
    ("--optimizer", str, "adam or sgd"),
    ("--lr", float, "learning rate"),
    ("--weight-decay", float, "L2 penalty on layer weights"),
    ("--momentum", float, "sgd momentum"),
    ("--epochs", int, "training epochs"),
    ("--patience", int, "early-stopping patience on validation accuracy"),
    ("--seed", int, "random seed"),
    ("--out", str, "output directory"),
]


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=str, default=None, help="flat key=value config file")
    for flag, kind, help_text in _CONFIG_FLAGS:
        p.add_argument(flag, type=kind, default=None, help=help_text)


def _merge_config(args) -> RunConfig:
    cfg = RunConfig()
    if getattr(args, "config", None):
        cfg = load_config_file(args.config, cfg)
    for flag, _, _ in _CONFIG_FLAGS:
        name = flag.lstrip("-").replace("-", "_")
        value = getattr(args, name, None)
        if value is not None:
            setattr(cfg, name, value)
    cfg.validate()
    return cfg


def _write_json(path, blob: dict) -> None:
    blob = dict(blob)
    blob.setdefault("version", __version__)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(blob, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_trace_csv(trace: EnergyTrace, path, cfg: RunConfig) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# rhgcn {__version__}\n")
        fh.write(f"# config: {json.dumps(cfg.to_dict(), sort_keys=True)}\n")
        fh.write(f"# alpha: {trace.alpha!r}  spectral_gap: {trace.spectral_gap!r}\n")
        fh.write("layer,component,energy,max_energy\n")
        for entry in trace.entries:
            for j, e in enumerate(entry.energies):
                fh.write(f"{entry.layer},{j},{e!r},{entry.max_energy!r}\n")


def cmd_train(args) -> int:
    cfg = _merge_config(args)
    if args.seeds:
        seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
        if not seeds:
            raise ConfigError(f"no seeds parsed from {args.seeds!r}")
        summary = run_sweep(cfg, seeds, max_workers=args.workers)
        print(f"sweep over seeds {seeds}: mean test acc "
              f"{summary['mean_test_acc']:.4f} +- {summary['std_test_acc']:.4f}")
        return 0
    results = run_training(cfg)
    print(f"best epoch {results['best_epoch']}: val acc {results['best_val_acc']:.4f}, "
          f"test acc {results['test_acc']:.4f} -> {cfg.out}")
    return 0


def cmd_eval(args) -> int:
    mcfg, params = load_checkpoint(args.checkpoint)
    cfg = _merge_config(args)
    if not cfg.data and not cfg.synth:
        raise ConfigError("eval needs --data or --synth")
    dataset = resolve_dataset(cfg)
    lp = forward(dataset.features, dataset.graph, mcfg, params, training=False)
    test_acc = accuracy(lp, dataset.labels, dataset.splits["test"])
    val_acc = accuracy(lp, dataset.labels, dataset.splits["val"])
    print(f"val acc {val_acc:.4f}, test acc {test_acc:.4f}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "eval.json", {
            "config": cfg.to_dict(),
            "checkpoint": str(args.checkpoint),
            "val_acc": val_acc,
            "test_acc": test_acc,
        })
    return 0


def cmd_diagnose(args) -> int:
    cfg = _merge_config(args)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)

    if args.mode == "lemma1":
        report = lemma1_check(args.trials, args.n, cfg.seed)
        _write_json(out / "lemma1.json", {
            "config": cfg.to_dict(),
            "n": report.n,
            "trials": report.trials,
            "violations": report.violations,
            "max_ratio": report.max_ratio,
            "tight_ratio": report.tight_ratio,
        })
        print(f"lemma1: n={report.n} trials={report.trials} violations={report.violations} "
              f"max ratio {report.max_ratio:.6f} tight ratio {report.tight_ratio:.9f}")
        return 0 if report.ok and abs(report.tight_ratio - 1.0) < 1e-9 else 1

    dataset = resolve_dataset(cfg)

    if args.mode == "energy":
        mcfg = build_model_config(cfg, dataset)
        report = oversmoothing_report(dataset, mcfg, alphas=(0.0, cfg.alpha),
                                      weight_scale=args.weight_scale)
        from .figures import save_energy_figure

        for label, trace in report.traces:
            write_trace_csv(trace, out / f"energy_trace_{label.replace('=', '')}.csv", cfg)
        save_energy_figure(report.traces, out / "energy_trace.png")
        _write_json(out / "energy_summary.json", {
            "config": cfg.to_dict(),
            "spectral_gap": report.spectral_gap,
            "summary": report.summary,
        })
        for label, stats in report.summary.items():
            print(f"{label}: final/initial energy = {stats['final_over_initial']:.3e}")
        return 0

    if args.mode == "bound":
        if cfg.alpha != 0.0:
            raise UsageError("the decay bound applies to runs without the residual; use --alpha 0")
        # the derivation assumes the activation is inert and the origin
        # canonical; ReLU mode (explicit --activation relu) checks only the
        # layers whose pre-activation tangents stayed nonnegative
        relu_mode = args.activation == "relu"
        cfg.activation = "relu" if relu_mode else "identity"
        cfg.origin_radius = 0.0
        mcfg = build_model_config(cfg, dataset)
        params = init_params(mcfg, weight_scale=args.weight_scale)
        trace = run_energy_trace(dataset, mcfg, params)
        report = decay_bound_check(trace, trace.spectral_gap, mixing_norms(params),
                                   require_nonneg=relu_mode)
        write_trace_csv(trace, out / "energy_trace_alpha0.csv", cfg)
        from .figures import save_energy_figure

        save_energy_figure([("alpha=0", trace)], out / "energy_trace.png")
        _write_json(out / "bound.json", {
            "config": cfg.to_dict(),
            "spectral_gap": report.spectral_gap,
            "violations": report.violations,
            "layers_checked": len(report.entries),
            "layers_skipped": report.skipped,
            "ok": report.ok,
        })
        print(f"decay bound: {len(report.entries)} layer checks, "
              f"{report.violations} violations, {report.skipped} skipped "
              f"(lambda={report.spectral_gap:.4f})")
        return 0 if report.ok else 1

    raise ConfigError(f"unknown diagnose mode {args.mode!r}")


def cmd_gradcheck(args) -> int:
    cfg = _merge_config(args)
    if cfg.drop_rate != 0.0:
        raise UsageError("gradcheck requires deterministic forwards; set --drop-rate 0")
    dataset = resolve_dataset(cfg)
    mcfg = build_model_config(cfg, dataset)
    if dataset.n > 50:
        raise UsageError(f"gradcheck is meant for small instances (n <= 50), got n={dataset.n}")
    params = init_params(mcfg, zero_classifier=False)
    tensors = params.tensors()
    train_idx = dataset.splits["train"]

    def f():
        lp = forward(dataset.features, dataset.graph, mcfg, params, training=False)
        return loss_nll(lp, dataset.labels, train_idx)

    if args.corrupt_backward:
        with ad.corrupted_backward():
            result = ad.grad_check(f, tensors, h=args.step)
    else:
        result = ad.grad_check(f, tensors, h=args.step)
    print(f"gradcheck: max rel error {result.max_rel_error:.3e} over {result.checked} "
          f"coordinates ({result.skipped_kinks} skipped at kinks), worst {result.worst_param}")
    return 0 if result.max_rel_error < args.threshold else 1


def cmd_synth(args) -> int:
    cfg = _merge_config(args)
    if not cfg.synth:
        raise ConfigError("synth needs --synth <spec>")
    dataset = resolve_dataset(cfg)
    save_dataset(dataset, cfg.out)
    print(f"wrote {dataset.n} nodes, {dataset.graph.edges.shape[0]} edges, "
          f"{dataset.feature_dim} features, {dataset.classes} classes -> {cfg.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rhgcn",
        description="Residual hyperbolic graph convolutional networks on product Lorentz manifolds.",
    )
    parser.add_argument("--version", action="version", version=f"rhgcn {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model and write run artifacts")
    _add_config_flags(p_train)
    p_train.add_argument("--seeds", type=str, default=None,
                         help="comma-separated seeds for a sweep (overrides --seed)")
    p_train.add_argument("--workers", type=int, default=1, help="parallel sweep sessions")
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p_eval.add_argument("--checkpoint", type=str, required=True)
    _add_config_flags(p_eval)
    p_eval.set_defaults(func=cmd_eval)

    p_diag = sub.add_parser("diagnose", help="energy traces, decay bound, lemma checks")
    p_diag.add_argument("--mode", choices=("energy", "bound", "lemma1"), required=True)
    p_diag.add_argument("--trials", type=int, default=10000, help="lemma1 trials")
    p_diag.add_argument("--n", type=int, default=16, help="lemma1 matrix size")
    p_diag.add_argument("--weight-scale", type=float, default=0.7,
                        help="spectral norm of randomly drawn layer weights")
    _add_config_flags(p_diag)
    p_diag.set_defaults(func=cmd_diagnose)

    p_grad = sub.add_parser("gradcheck", help="finite-difference check of the full model gradient")
    p_grad.add_argument("--step", type=float, default=1e-5)
    p_grad.add_argument("--threshold", type=float, default=1e-4)
    p_grad.add_argument("--corrupt-backward", action="store_true", help=argparse.SUPPRESS)
    _add_config_flags(p_grad)
    p_grad.set_defaults(func=cmd_gradcheck)

    p_synth = sub.add_parser("synth", help="materialize a synthetic dataset directory")
    _add_config_flags(p_synth)
    p_synth.set_defaults(func=cmd_synth)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ConfigError, FormatError, UsageError, DimensionError, CapabilityError,
            OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
