"""Full-batch training: optimizers, the epoch loop, and run artifacts.

Runs are deterministic under a fixed seed: one ``numpy`` generator drives
initialization and per-epoch noise draws in a fixed order, and execution
is single-threaded, so ``metrics.csv`` is byte-identical across repeats.
Every output file carries the artifact version and the full config echo.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from . import autodiff as ad
from .autodiff import Tape
from .config import RunConfig, config_to_text
from .errors import ConfigError, NumericError
from .graph import NodeDataset, load_dataset, parse_synth_spec, synth_graph
from .model import (
    ModelConfig,
    ModelParams,
    accuracy,
    forward,
    init_params,
    loss_nll,
    save_checkpoint,
)
from .product import build_product

__all__ = [
    "SGD",
    "Adam",
    "make_optimizer",
    "resolve_dataset",
    "build_model_config",
    "EpochRow",
    "TrainResult",
    "train_model",
    "run_training",
    "run_sweep",
    "write_metrics_csv",
]


class SGD:
    """Stochastic gradient descent with classical momentum."""

    def __init__(self, params, lr: float, momentum: float = 0.9, weight_decay: float = 0.0):
        self.params = list(params)
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self._buf = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        for p, buf in zip(self.params, self._buf):
            g = p.grad
            if self.weight_decay and p.decay:
                g = g + self.weight_decay * p.data
            buf *= self.momentum
            buf += g
            p.data -= self.lr * buf


class Adam:
    """Adaptive-moment estimation with bias correction."""

    def __init__(self, params, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8, weight_decay: float = 0.0):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]
        self._t = 0

    def step(self) -> None:
        self._t += 1
        b1t = 1.0 - self.beta1 ** self._t
        b2t = 1.0 - self.beta2 ** self._t
        for p, m, v in zip(self.params, self._m, self._v):
            g = p.grad
            if self.weight_decay and p.decay:
                g = g + self.weight_decay * p.data
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)


def make_optimizer(cfg: RunConfig, params):
    if cfg.optimizer == "adam":
        return Adam(params, lr=cfg.lr, beta1=cfg.adam_beta1, beta2=cfg.adam_beta2,
                    weight_decay=cfg.weight_decay)
    return SGD(params, lr=cfg.lr, momentum=cfg.momentum, weight_decay=cfg.weight_decay)


def resolve_dataset(cfg: RunConfig) -> NodeDataset:
    if cfg.data and cfg.synth:
        raise ConfigError("set either data or synth, not both")
    if cfg.data:
        return load_dataset(cfg.data)
    if cfg.synth:
        kind, params = parse_synth_spec(cfg.synth)
        return synth_graph(kind, params, seed=cfg.seed)
    raise ConfigError("no dataset: set data=<dir> or synth=<spec>")


def build_model_config(cfg: RunConfig, dataset: NodeDataset) -> ModelConfig:
    product = build_product(cfg.signature, seed=cfg.seed, origin_radius=cfg.origin_radius)
    return ModelConfig(
        product=product,
        in_dim=dataset.feature_dim,
        classes=dataset.classes,
        layers=cfg.layers,
        alpha=cfg.alpha,
        beta_base=cfg.beta_base,
        drop_rate=cfg.drop_rate,
        activation=cfg.activation,
        noise_granularity=cfg.noise_granularity,
        noise_clamp=cfg.noise_clamp,
        seed=cfg.seed,
    )


@dataclass(frozen=True)
class EpochRow:
    epoch: int
    train_loss: float
    val_loss: float
    val_acc: float
    test_acc: float


@dataclass
class TrainResult:
    best_epoch: int
    best_val_acc: float
    test_acc: float
    epochs_run: int
    rows: list


def _evaluate(dataset: NodeDataset, mcfg: ModelConfig, params: ModelParams):
    lp = forward(dataset.features, dataset.graph, mcfg, params, training=False)
    val_loss = loss_nll(lp, dataset.labels, dataset.splits["val"])
    return (
        float(getattr(val_loss, "data", val_loss)),
        accuracy(lp, dataset.labels, dataset.splits["val"]),
        accuracy(lp, dataset.labels, dataset.splits["test"]),
    )


def train_model(dataset: NodeDataset, mcfg: ModelConfig, params: ModelParams,
                cfg: RunConfig) -> TrainResult:
    """Full-batch training with early stopping on validation accuracy.

    The best-validation parameters are restored before returning, and the
    reported test accuracy is the one at the best-validation epoch.  A
    non-finite training loss aborts with :class:`NumericError`.
    """
    rng = np.random.default_rng(cfg.seed)
    opt = make_optimizer(cfg, params.tensors())
    train_idx = dataset.splits["train"]

    val_loss, val_acc, test_acc = _evaluate(dataset, mcfg, params)
    best_val, best_test, best_epoch = val_acc, test_acc, 0
    best_snap = params.snapshot()
    rows = []
    since_best = 0
    for epoch in range(1, cfg.epochs + 1):
        with Tape() as tape:
            lp = forward(dataset.features, dataset.graph, mcfg, params,
                         training=True, rng=rng)
            loss = loss_nll(lp, dataset.labels, train_idx)
            train_loss = float(loss.data)
            if not np.isfinite(train_loss):
                raise NumericError(f"training loss became non-finite at epoch {epoch}")
            tape.backward(loss)
        opt.step()
        val_loss, val_acc, test_acc = _evaluate(dataset, mcfg, params)
        rows.append(EpochRow(epoch, train_loss, val_loss, val_acc, test_acc))
        if val_acc > best_val:
            best_val, best_test, best_epoch = val_acc, test_acc, epoch
            best_snap = params.snapshot()
            since_best = 0
        else:
            since_best += 1
            if since_best >= cfg.patience:
                break
    params.restore(best_snap)
    return TrainResult(best_epoch, best_val, best_test, len(rows), rows)


def write_metrics_csv(path, rows, cfg: RunConfig) -> None:
    # the echo drops `out` so runs differing only in output path stay
    # byte-identical under one seed
    echo = {k: v for k, v in cfg.to_dict().items() if k != "out"}
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# rhgcn {__version__}\n")
        fh.write(f"# config: {json.dumps(echo, sort_keys=True)}\n")
        fh.write("epoch,train_loss,val_loss,val_acc,test_acc\n")
        for r in rows:
            fh.write(f"{r.epoch},{r.train_loss!r},{r.val_loss!r},{r.val_acc!r},{r.test_acc!r}\n")


def run_training(cfg: RunConfig, make_figures: bool = True) -> dict:
    """Execute one training run and write all artifacts under ``cfg.out``."""
    cfg.validate()
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    dataset = resolve_dataset(cfg)
    mcfg = build_model_config(cfg, dataset)
    params = init_params(mcfg)
    result = train_model(dataset, mcfg, params, cfg)

    write_metrics_csv(out / "metrics.csv", result.rows, cfg)
    (out / "config.txt").write_text(
        f"# rhgcn {__version__}\n" + config_to_text(cfg), encoding="utf-8")
    save_checkpoint(out / "checkpoint.json", mcfg, params,
                    extra={"version": __version__, "run_config": cfg.to_dict()})
    results = {
        "version": __version__,
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "best_epoch": result.best_epoch,
        "best_val_acc": result.best_val_acc,
        "test_acc": result.test_acc,
        "epochs_run": result.epochs_run,
    }
    with open(out / "results.json", "w", encoding="utf-8") as fh:
        json.dump(results, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if make_figures and result.rows:
        from .figures import save_training_curves

        save_training_curves(result.rows, out / "training_curves.png")
    return results


def run_sweep(cfg: RunConfig, seeds, max_workers: int = 1) -> dict:
    """Independent per-seed runs with merged summary.

    Sessions share no state (the tape is thread-local), so they may run
    concurrently when ``max_workers`` exceeds one.
    """
    import concurrent.futures
    import dataclasses

    def one(seed: int) -> dict:
        sub = dataclasses.replace(cfg, seed=int(seed), out=str(Path(cfg.out) / f"seed_{seed}"))
        return run_training(sub)

    seeds = [int(s) for s in seeds]
    if max_workers > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(one, seeds))
    else:
        results = [one(s) for s in seeds]
    accs = [r["test_acc"] for r in results]
    summary = {
        "version": __version__,
        "config": cfg.to_dict(),
        "seeds": seeds,
        "test_accs": accs,
        "mean_test_acc": float(np.mean(accs)),
        "std_test_acc": float(np.std(accs)),
    }
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "sweep.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary
