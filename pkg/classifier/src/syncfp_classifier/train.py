"""Stratified k-fold training and evaluation.

Per fold: seed everything, train the model on the other folds with
cross-entropy and a decoupled-weight-decay optimizer (plain Adam behind
a flag), evaluate macro F1/precision/recall on the held-out fold, and
aggregate mean and standard deviation across folds as percentages.
Determinism is per-seed on a given machine and library build; it is
documented rather than asserted bit-exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .dataset import LoadedDataset
from .metrics import macro_scores
from .model import make_model


class InsufficientSamplesError(Exception):
    """Too few folds or too few traces per class to stratify."""


@dataclass
class CvReport:
    folds: int
    f1_mean: float
    f1_std: float
    precision_mean: float
    precision_std: float
    recall_mean: float
    recall_std: float

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in (
            "folds", "f1_mean", "f1_std", "precision_mean", "precision_std",
            "recall_mean", "recall_std",
        )}

    def table(self) -> str:
        rows = [
            ("F1", self.f1_mean, self.f1_std),
            ("Precision", self.precision_mean, self.precision_std),
            ("Recall", self.recall_mean, self.recall_std),
        ]
        lines = [f"{self.folds}-fold cross-validation (macro, %)"]
        for name, mean, std in rows:
            lines.append(f"  {name:<10} {mean:6.2f} ({std:.2f})")
        return "\n".join(lines)


def stratified_folds(labels: torch.Tensor, folds: int, seed: int) -> list[np.ndarray]:
    """Deterministic per-class round-robin split into ``folds`` index sets."""
    if folds < 2:
        raise InsufficientSamplesError("cross-validation needs folds >= 2")
    labels_np = labels.numpy()
    rng = np.random.default_rng(seed)
    assignments: list[list[int]] = [[] for _ in range(folds)]
    for cls in np.unique(labels_np):
        idx = np.flatnonzero(labels_np == cls)
        if len(idx) < folds:
            raise InsufficientSamplesError(
                f"class {cls} has {len(idx)} traces, fewer than {folds} folds"
            )
        rng.shuffle(idx)
        for i, sample in enumerate(idx):
            assignments[i % folds].append(int(sample))
    return [np.asarray(sorted(fold)) for fold in assignments]


def _train_one(model, images, labels, epochs, lr, weight_decay, optimizer_name,
               batch_size, generator):
    if optimizer_name == "adamw":
        opt = torch.optim.AdamW(model.parameters(), lr=lr, weight_decay=weight_decay)
    elif optimizer_name == "adam":
        opt = torch.optim.Adam(model.parameters(), lr=lr, weight_decay=weight_decay)
    else:
        raise ValueError(f"unknown optimizer {optimizer_name!r}")
    loss_fn = nn.CrossEntropyLoss()
    model.train()
    n = len(labels)
    width = images.shape[-1]
    for _ in range(epochs):
        order = torch.randperm(n, generator=generator)
        for start in range(0, n, batch_size):
            batch = order[start : start + batch_size]
            # Random circular time shift: delay traces have no preferred
            # origin, and the augmentation keeps shuffled-label controls
            # from memorizing individual images.
            shift = int(torch.randint(0, width, (1,), generator=generator))
            x = torch.roll(images[batch], shifts=shift, dims=-1)
            opt.zero_grad()
            loss = loss_fn(model(x), labels[batch])
            loss.backward()
            opt.step()


@torch.no_grad()
def _predict(model, images, batch_size=64):
    model.eval()
    outs = []
    for start in range(0, len(images), batch_size):
        outs.append(model(images[start : start + batch_size]).argmax(dim=1))
    return torch.cat(outs)


def train_and_eval(dataset: LoadedDataset, folds: int = 5, epochs: int = 30,
                   lr: float = 1e-4, weight_decay: float = 1e-5, seed: int = 0,
                   optimizer: str = "adamw", arch: str = "small",
                   batch_size: int = 16, shuffle_labels: bool = False) -> CvReport:
    """Stratified k-fold cross-validation; returns macro metrics in percent.

    shuffle_labels permutes the labels once (seeded) before splitting: the
    chance-level control for dataset sanity checks.
    """
    labels = dataset.labels
    if shuffle_labels:
        perm = torch.randperm(len(labels),
                              generator=torch.Generator().manual_seed(seed))
        labels = labels[perm]
    fold_sets = stratified_folds(labels, folds, seed)
    n_classes = len(dataset.classes)
    f1s, precisions, recalls = [], [], []
    for fold_idx, val_idx in enumerate(fold_sets):
        torch.manual_seed(seed * 1000 + fold_idx)
        generator = torch.Generator().manual_seed(seed * 1000 + fold_idx)
        train_idx = np.setdiff1d(np.arange(len(labels)), val_idx)
        model = make_model(arch, n_classes)
        _train_one(
            model, dataset.images[train_idx], labels[train_idx], epochs, lr,
            weight_decay, optimizer, batch_size, generator,
        )
        preds = _predict(model, dataset.images[val_idx])
        f1, prec, rec = macro_scores(labels[val_idx].numpy(), preds.numpy(), n_classes)
        f1s.append(f1)
        precisions.append(prec)
        recalls.append(rec)
    to_pct = lambda xs: (float(np.mean(xs)) * 100, float(np.std(xs)) * 100)
    f1_mean, f1_std = to_pct(f1s)
    p_mean, p_std = to_pct(precisions)
    r_mean, r_std = to_pct(recalls)
    return CvReport(folds=folds, f1_mean=f1_mean, f1_std=f1_std,
                    precision_mean=p_mean, precision_std=p_std,
                    recall_mean=r_mean, recall_std=r_std)
