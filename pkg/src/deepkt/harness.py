"""Training loop, cross-validated grid search, experiment protocol, and the
difficulty/trajectory exports."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace, asdict
from itertools import combinations

import numpy as np

from . import baselines, metrics, models
from .autodiff import AdamState, adam_step, backward, clip_global_norm
from .datasets import Dataset, ValidationError, kfold, pad_and_mask, split_train_test
from .metrics import EvalReport, PredictionSet, TrialResult, aggregate_trials

DEEP_MODELS = ("dkt", "dkvmn", "deep_irt")
BASELINE_MODELS = ("pfa", "lfa", "irt", "item_analysis")


class TrainingError(RuntimeError):
    """Training diverged (NaN/inf loss)."""


@dataclass
class TrainConfig:
    model: str = "deep_irt"
    lr: float = 0.003
    batch_size: int = 32
    clip_norm: float = 10.0
    seq_len: int = 200
    epochs: int = 50
    init_std: float = 0.05
    hidden: int = 50          # dkt hidden size
    mem_slots: int = 20       # memory models: N
    state_dim: int = 50       # memory models: d_k = d_v
    feature_dim: int = 50
    seed: int = 0
    test_fraction: float = 0.3
    cv_folds: int = 5
    trials: int = 5

    def validate(self):
        if self.model not in DEEP_MODELS + BASELINE_MODELS:
            raise ValidationError(f"unknown model {self.model!r}")
        for name in ("lr", "batch_size", "clip_norm", "seq_len", "init_std",
                     "hidden", "mem_slots", "state_dim", "feature_dim"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be positive")
        if self.epochs < 0 or self.trials < 1 or self.cv_folds < 2:
            raise ValidationError("epochs >= 0, trials >= 1, cv_folds >= 2 required")
        if not (0.0 < self.test_fraction < 1.0):
            raise ValidationError("test_fraction must be in (0, 1)")

    @classmethod
    def from_dict(cls, d):
        cfg = cls(**{k: v for k, v in d.items() if k in cls.__dataclass_fields__})
        cfg.validate()
        return cfg


@dataclass
class GridSpec:
    state_dims: tuple = (10, 50, 100, 200)
    memory_sizes: tuple = (5, 10, 20, 50, 100)

    def points(self, model: str):
        if model == "dkt":
            return [{"hidden": h} for h in self.state_dims]
        return [{"state_dim": d, "mem_slots": n}
                for d in self.state_dims for n in self.memory_sizes]


def make_arch(config: TrainConfig, num_kcs: int):
    if config.model == "dkt":
        return models.DktArch(num_kcs=num_kcs, hidden=config.hidden)
    if config.model in ("dkvmn", "deep_irt"):
        return models.MemoryArch(num_kcs=num_kcs, mem_slots=config.mem_slots,
                                 state_dim=config.state_dim,
                                 feature_dim=config.feature_dim,
                                 deep_irt=(config.model == "deep_irt"))
    raise ValidationError(f"{config.model!r} is not a trainable deep model")


def param_count(config: TrainConfig, num_kcs: int) -> int:
    params = models.init_params(make_arch(config, num_kcs), std=1.0, seed=0)
    return sum(t.data.size for t in params.parameters())


def _batches(n, batch_size):
    for start in range(0, n, batch_size):
        yield range(start, min(start + batch_size, n))


def train(config: TrainConfig, dataset: Dataset, check_clip=None):
    """Train one deep model; returns (params, per-epoch mean train loss)."""
    if not dataset.sequences:
        raise ValidationError("cannot train on an empty dataset")
    arch = make_arch(config, dataset.num_kcs)
    params = models.init_params(arch, config.init_std, config.seed)
    state = AdamState()
    rng = np.random.default_rng(config.seed)
    log = []
    for epoch in range(config.epochs):
        order = rng.permutation(len(dataset.sequences))
        total = 0.0
        steps = 0
        for idx in _batches(len(order), config.batch_size):
            seqs = [dataset.sequences[order[i]] for i in idx]
            batch = pad_and_mask(seqs, config.seq_len, dataset.num_kcs)
            out = models.forward(params, batch)
            loss = models.sequence_loss(out, batch)
            value = loss.item()
            if not np.isfinite(value):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}, batch starting {idx.start}")
            backward(loss)
            grads = [p.grad for p in params.parameters() if p.grad is not None]
            clip_global_norm(grads, config.clip_norm)
            if check_clip is not None:
                check_clip(float(np.sqrt(sum((g * g).sum() for g in grads))))
            adam_step(params.parameters(), state, config.lr)
            total += value
            steps += int(out.pred_mask.sum())
        log.append(total / steps if steps else 0.0)
    return params, log


def evaluate(params, dataset: Dataset, config: TrainConfig,
             eval_batch: int = 200) -> PredictionSet:
    """Forward the whole dataset (no training) and flatten scored steps."""
    scores, labels = [], []
    seqs = dataset.sequences
    for idx in _batches(len(seqs), eval_batch):
        batch = pad_and_mask([seqs[i] for i in idx], config.seq_len, dataset.num_kcs)
        out = models.forward(params, batch)
        s, y = models.prediction_set(out)
        scores.append(s)
        labels.append(y)
    return PredictionSet(np.concatenate(scores), np.concatenate(labels))


def _trial_metrics(pred: PredictionSet, seed: int) -> TrialResult:
    return TrialResult(seed=seed, auc=metrics.auc(pred),
                       acc=metrics.accuracy(pred), loss=metrics.mean_xent(pred))


# ---------------------------------------------------------------------------
# baselines over sequence data


def evaluate_baseline(model: str, train_ds: Dataset, test_ds: Dataset,
                      min_students: int = 10) -> PredictionSet:
    """Fit a classical model on the train split and score test steps online."""
    if model in ("pfa", "lfa"):
        feats = baselines.build_pfa_features(train_ds.sequences)
        coeffs = baselines.fit_logistic(feats, design=model.upper())
        scores, labels = [], []
        for seq in test_ds.sequences:
            counts = {}
            for q, a in seq.steps:
                s, f = counts.get(q, (0, 0))
                if model == "pfa":
                    scores.append(baselines.pfa_predict(coeffs, s, f, q))
                else:
                    scores.append(baselines.lfa_predict(coeffs, s + f, q))
                labels.append(a)
                counts[q] = (s + a, f + (1 - a))
        return PredictionSet(np.array(scores), np.array(labels))

    if model == "irt":
        fit = baselines.fit_irt(baselines.first_attempts(train_ds.sequences))
        # test students are cold (theta unknown): use the anchored mean 0
        scores, labels = [], []
        for seq in test_ds.sequences:
            for q, a in seq.steps:
                scores.append(baselines.irt_predict(0.0, fit.beta[q])
                              if q in fit.beta else 0.5)
                labels.append(a)
        return PredictionSet(np.array(scores), np.array(labels))

    if model == "item_analysis":
        diff = baselines.item_analysis(train_ds.sequences, min_students)
        scores, labels = [], []
        for seq in test_ds.sequences:
            for q, a in seq.steps:
                scores.append(1.0 - diff[q] if q in diff else 0.5)
                labels.append(a)
        return PredictionSet(np.array(scores), np.array(labels))

    raise ValidationError(f"unknown baseline {model!r}")


# ---------------------------------------------------------------------------
# grid search and the full experiment protocol


def grid_search(grid: GridSpec, base_config: TrainConfig, train_set: Dataset):
    """5-fold CV over the grid; returns (best config, CV table).

    Ties break toward fewer parameters, then earlier grid position.
    """
    if len(train_set.sequences) < base_config.cv_folds:
        raise ValidationError("not enough sequences for cross-validation")
    table = []
    for pos, point in enumerate(grid.points(base_config.model)):
        cfg = replace(base_config, **point)
        fold_losses = []
        for tr, val in kfold(train_set, cfg.cv_folds, cfg.seed):
            params, _ = train(cfg, tr)
            pred = evaluate(params, val, cfg)
            fold_losses.append(metrics.mean_xent(pred))
        table.append({"point": point, "position": pos,
                      "cv_loss": float(np.mean(fold_losses)),
                      "fold_losses": fold_losses,
                      "num_params": param_count(cfg, train_set.num_kcs)})
    best = min(table, key=lambda r: (r["cv_loss"], r["num_params"], r["position"]))
    return replace(base_config, **best["point"]), table


def select_best(table):
    """Argmin of the CV table under the documented tie-breaking."""
    return min(table, key=lambda r: (r["cv_loss"], r["num_params"], r["position"]))


def run_experiment(config: TrainConfig, grid: GridSpec | None,
                   dataset: Dataset) -> dict:
    """70/30 split, optional grid search on train, multi-trial retrain/evaluate."""
    config.validate()
    train_ds, test_ds = split_train_test(dataset, config.test_fraction, config.seed)
    train_ids = {id(s) for s in train_ds.sequences}
    assert not any(id(s) in train_ids for s in test_ds.sequences)

    table = None
    if config.model in DEEP_MODELS:
        if grid is not None:
            config, table = grid_search(grid, config, train_ds)
        trials = []
        for k in range(config.trials):
            cfg = replace(config, seed=config.seed + k)
            params, _ = train(cfg, train_ds)
            trials.append(_trial_metrics(evaluate(params, test_ds, cfg), cfg.seed))
    else:
        # classical fits are deterministic; trials repeat the same result
        pred = evaluate_baseline(config.model, train_ds, test_ds)
        trials = [_trial_metrics(pred, config.seed) for _ in range(config.trials)]

    report = aggregate_trials(trials)
    doc = {"dataset": dataset.name, "model": config.model,
           "config": asdict(config), **report.to_dict()}
    if table is not None:
        doc["grid"] = table
    return doc


def report_json(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


# ---------------------------------------------------------------------------
# exports


def deep_irt_difficulties(params: models.DkvmnParams) -> dict:
    """Per-question difficulty from the trained difficulty head."""
    if not getattr(params.arch, "deep_irt", False):
        raise ValidationError("difficulty export needs a Deep-IRT checkpoint")
    z = params.A.data @ params.W_beta.data + params.b_beta.data
    beta = np.tanh(z)[:, 0]
    return {q + 1: float(beta[q]) for q in range(params.arch.num_kcs)}


def export_difficulty(params: models.DkvmnParams, joins: dict | None = None):
    """Long-format difficulty rows plus pairwise Pearson r across sources.

    ``joins`` maps source name -> {question_id: difficulty}.
    """
    sources = {"deep_irt_beta": deep_irt_difficulties(params)}
    if joins:
        sources.update(joins)
    rows = [(q, name, val)
            for name in sources for q, val in sorted(sources[name].items())]
    pairs = {}
    for a, b in combinations(sorted(sources), 2):
        common = sorted(set(sources[a]) & set(sources[b]))
        if len(common) >= 2:
            try:
                pairs[(a, b)] = metrics.pearson([sources[a][q] for q in common],
                                                [sources[b][q] for q in common])
            except metrics.MetricUndefinedError:
                pass
    return rows, pairs


def export_trajectory(params: models.DkvmnParams, seq) -> list:
    """Per-step (t, q, a, theta, beta, p) rows for one student."""
    if not getattr(params.arch, "deep_irt", False):
        raise ValidationError("trajectory export needs a Deep-IRT checkpoint")
    batch = pad_and_mask([seq], max(len(seq.steps), 1), params.arch.num_kcs)
    out = models.forward_sequence(params, batch)
    rows = []
    for t, (q, a) in enumerate(seq.steps):
        rows.append({"t": t + 1, "q": q, "a": a,
                     "theta": float(out.theta[0, t]),
                     "beta": float(out.beta[0, t]),
                     "p": float(out.p[0, t])})
    return rows
