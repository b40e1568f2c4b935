"""Matplotlib renderings written next to the delimited report files."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

__all__ = ["save_training_curves", "save_energy_figure"]


def save_training_curves(rows, path) -> None:
    """Loss and accuracy curves for one training run."""
    epochs = [r.epoch for r in rows]
    fig, (ax_loss, ax_acc) = plt.subplots(1, 2, figsize=(9.0, 3.4))
    ax_loss.plot(epochs, [r.train_loss for r in rows], label="train loss")
    ax_loss.plot(epochs, [r.val_loss for r in rows], label="val loss")
    ax_loss.set(xlabel="epoch", ylabel="negative log-likelihood")
    ax_loss.legend()
    ax_acc.plot(epochs, [r.val_acc for r in rows], label="val acc")
    ax_acc.plot(epochs, [r.test_acc for r in rows], label="test acc")
    ax_acc.set(xlabel="epoch", ylabel="accuracy", ylim=(0.0, 1.02))
    ax_acc.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_energy_figure(traces, path) -> None:
    """Max Dirichlet energy per layer, one curve per labelled trace."""
    fig, ax = plt.subplots(figsize=(5.5, 3.8))
    for label, trace in traces:
        layers = [e.layer for e in trace.entries]
        ax.semilogy(layers, [max(e.max_energy, 1e-300) for e in trace.entries],
                    marker="o", markersize=3, label=label)
    ax.set(xlabel="layer", ylabel="max Dirichlet energy")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
