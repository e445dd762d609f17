"""Retraining a derived meta graph from scratch and scoring it."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .errors import MetaGraphError
from .hin import NodeClassData
from .model import Adam, HeteroModel, TrainConfig, single_path
from .space import build_space


def macro_f1(pred, gold, n_classes):
    """Unweighted mean of per-class F1. A class absent from both sides scores 0."""
    pred = np.asarray(pred)
    gold = np.asarray(gold)
    if not len(gold) or len(pred) != len(gold):
        raise ValueError("macro_f1 needs two nonempty sequences of equal length")
    scores = []
    for c in range(n_classes):
        tp = np.sum((pred == c) & (gold == c))
        fp = np.sum((pred == c) & (gold != c))
        fn = np.sum((pred != c) & (gold == c))
        denom = 2 * tp + fp + fn
        scores.append(2 * tp / denom if denom else 0.0)
    return float(np.mean(scores))


def auc(scores, labels):
    """Mann-Whitney estimate of ROC AUC; ties count one half."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    n_pos = int(np.sum(labels == 1))
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("auc needs at least one positive and one negative")
    ranks = rankdata(scores)
    return float((ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def split_metric(model: HeteroModel, trace, split):
    if isinstance(model.task, NodeClassData):
        logits = trace.dags[0].Z[split] @ model.params["W_o"]
        return macro_f1(np.argmax(logits, axis=1), model.task.labels[split], model.task.n_classes)
    return auc(model.scores(trace, split), split.label)


@dataclass
class EvalReport:
    seed: int
    meta_graphs: list
    train_losses: list = field(default_factory=list)
    val_losses: list = field(default_factory=list)
    val_metrics: list = field(default_factory=list)
    test_metrics: list = field(default_factory=list)
    epoch_seconds: list = field(default_factory=list)
    best_epoch: int = -1
    best_val_metric: float = float("nan")
    test_metric: float = float("nan")
    final_test_metric: float = float("nan")

    def to_json(self, timings=True):
        out = dict(self.__dict__)
        if not timings:
            out.pop("epoch_seconds")
        return out

    def summary_line(self, task):
        return f"task={task} seed={self.seed} val={self.best_val_metric:.4f} test={self.test_metric:.4f}"


def check_meta_graphs(graph, task, meta_graphs):
    model_targets = [task.source_type, task.target_type] if task.kind == "rec" else [task.target_type]
    if len(meta_graphs) != len(model_targets):
        raise MetaGraphError(f"task needs {len(model_targets)} meta graph(s), got {len(meta_graphs)}")
    for mg, t in zip(meta_graphs, model_targets):
        if mg.target_type != t:
            raise MetaGraphError(f"meta graph targets {mg.target_type!r}, task needs {t!r}")
        mg.validate(build_space(graph, t, mg.K))


def train_eval(meta_graphs, graph, features, task, config: TrainConfig) -> EvalReport:
    """Train a fresh model on fixed meta graph(s), coefficients 1.

    Node classification stops early on validation loss (``config.patience``)
    and reports the test metric of the best-validation-loss epoch;
    recommendation reports the epoch with the best validation AUC.
    """
    check_meta_graphs(graph, task, meta_graphs)
    rng = np.random.default_rng(config.seed)
    model = HeteroModel(graph, features, task, config.hidden_dim, rng)
    opt = Adam(config.lr_omega, config.weight_decay_omega)
    paths = [single_path(mg) for mg in meta_graphs]
    report = EvalReport(config.seed, [mg.to_json() for mg in meta_graphs])
    nodeclass = isinstance(task, NodeClassData)
    best_key, since_best = None, 0
    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        trace = model.forward(paths, config.dropout, rng)
        loss, grads, _ = model.backward(trace, task.train)
        model.update(opt, grads)
        trace = model.forward(paths)
        val_loss = model.loss(trace, task.val)
        val_m = split_metric(model, trace, task.val)
        test_m = split_metric(model, trace, task.test)
        report.epoch_seconds.append(time.perf_counter() - t0)
        report.train_losses.append(loss)
        report.val_losses.append(val_loss)
        report.val_metrics.append(val_m)
        report.test_metrics.append(test_m)
        key = -val_loss if nodeclass else val_m
        if best_key is None or key > best_key:
            best_key, since_best = key, 0
            report.best_epoch = epoch
            report.best_val_metric = val_m
            report.test_metric = test_m
        else:
            since_best += 1
            if nodeclass and since_best >= config.patience:
                break
    report.final_test_metric = report.test_metrics[-1]
    return report


def aggregate(reports):
    vals = np.array([r.test_metric for r in reports])
    return {
        "n": len(reports),
        "seeds": [r.seed for r in reports],
        "test_mean": float(vals.mean()),
        "test_std": float(vals.std()),
        "test": vals.tolist(),
    }
