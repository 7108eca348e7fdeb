"""Training: masked multi-task objective, AdamW, plateau LR, early stopping.

All randomness (init, shuffling, dropout) is derived from ``TrainConfig.seed``
through named substreams, so two runs with the same seed and data produce
bit-identical histories.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from ..errors import NumericalError
from .losses import masked_multitask_loss
from .network import (
    ArchConfig,
    Batch,
    ForwardOutput,
    arch_from_json,
    arch_to_json,
    build_graph,
    forward,
    init_params,
    substream_seed,
    wrap_params,
)
from .optim import AdamW


@dataclass(frozen=True)
class TrainConfig:
    gamma: float = 1.5
    label_smoothing: float = 0.05
    lambda_effort: float = 1.0
    lr: float = 2e-4
    weight_decay: float = 1e-3
    batch_size: int = 64
    grad_clip_norm: float = 1.0
    max_epochs: int = 200
    early_stop_warmup: int = 15
    early_stop_patience: int = 25
    plateau_factor: float = 0.5
    plateau_patience: int = 8
    seed: int = 42
    val_subjects: int = 3  # inner validation subjects held out of each LOSO training fold

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if not (0.0 <= self.label_smoothing < 0.5):
            raise ValueError("label_smoothing must lie in [0, 0.5)")
        if self.lr <= 0:
            raise ValueError("lr must be positive")


@dataclass
class TrainHistory:
    rows: list = field(default_factory=list)
    best_epoch: int = 0
    stopped_epoch: int = 0

    def append(self, epoch, train_loss, val_ba_stress, val_ba_effort, lr):
        self.rows.append(
            {
                "epoch": epoch,
                "train_loss": train_loss,
                "val_ba_stress": val_ba_stress,
                "val_ba_effort": val_ba_effort,
                "lr": lr,
            }
        )

    def metric_sequence(self) -> list:
        return [_mean_defined(r["val_ba_stress"], r["val_ba_effort"]) for r in self.rows]

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("epoch,train_loss,val_ba_stress,val_ba_effort,lr\n")
            for r in self.rows:
                fh.write(
                    f"{r['epoch']},{r['train_loss']!r},{r['val_ba_stress']!r},"
                    f"{r['val_ba_effort']!r},{r['lr']!r}\n"
                )


def _subset(batch: Batch, idx: np.ndarray) -> Batch:
    return Batch(
        x_ibi=batch.x_ibi[idx],
        x_eda=batch.x_eda[idx],
        f_hrv=batch.f_hrv[idx],
        f_eda=batch.f_eda[idx],
        stress=batch.stress[idx] if batch.stress is not None else None,
        effort=batch.effort[idx] if batch.effort is not None else None,
        mask=batch.mask[idx] if batch.mask is not None else None,
    )


def _ba_or_nan(true_labels: np.ndarray, pred_labels: np.ndarray) -> float:
    """Mean per-class recall, NaN when a class is absent from the true labels."""
    recalls = []
    for c in (0, 1):
        sel = true_labels == c
        if not sel.any():
            return float("nan")
        recalls.append(float((pred_labels[sel] == c).mean()))
    return float(np.mean(recalls))


def _mean_defined(*values) -> float:
    vals = [v for v in values if np.isfinite(v)]
    return float(np.mean(vals)) if vals else float("nan")


def loss_and_grads(
    params: dict[str, np.ndarray],
    arch: ArchConfig,
    cfg: TrainConfig,
    batch: Batch,
    train_mode: bool = True,
    dropout_seed: int = 0,
):
    """Forward + reverse pass. Returns (total, stress, effort, grads); the
    gradient map covers every parameter (zeros where the loss does not reach,
    e.g. the effort head when all masks are 0)."""
    params_t = wrap_params(params)
    p_s, p_e = build_graph(
        params_t, arch, batch, train_mode=train_mode, dropout_rng=np.random.default_rng(dropout_seed)
    )
    total_t, stress_val, effort_val = masked_multitask_loss(
        p_s, p_e, batch.stress, batch.effort, batch.mask,
        cfg.gamma, cfg.label_smoothing, cfg.lambda_effort,
    )
    total_t.backward()
    grads = {}
    for key, tensor in params_t.items():
        g = tensor.grad if tensor.grad is not None else np.zeros_like(tensor.data)
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient for parameter {key!r}")
        grads[key] = g
    return float(total_t.data), stress_val, effort_val, grads


def evaluate_balanced_accuracy(params, arch, cfg_or_none, val: Batch) -> tuple[float, float]:
    """(stress BA, effort BA) on a validation batch; effort is scored over
    mask=1 windows only. NaN marks an undefined head."""
    out: ForwardOutput = forward(params, arch, val, train_mode=False)
    ba_s = _ba_or_nan(val.stress, (out.o >= 0.5).astype(int))
    masked = val.mask > 0
    if masked.any():
        ba_e = _ba_or_nan(val.effort[masked], (out.u[masked] >= 0.5).astype(int))
    else:
        ba_e = float("nan")
    return ba_s, ba_e


def train_fold(
    train: Batch,
    val: Batch,
    arch: ArchConfig,
    cfg: TrainConfig,
) -> tuple[dict[str, np.ndarray], TrainHistory]:
    """Mini-batch training with early stopping on mean validation BA
    (warmup + patience) and reduce-on-plateau LR; returns the parameters from
    the best epoch."""
    if len(val) == 0:
        raise ValueError("validation set is empty")
    if len(np.unique(val.stress)) < 2 and len(np.unique(val.effort[val.mask > 0])) < 2:
        raise ValueError("validation set has a single class on both heads; BA undefined")

    params = init_params(arch, cfg.seed)
    opt = AdamW(
        lr=cfg.lr,
        weight_decay=cfg.weight_decay,
        grad_clip_norm=cfg.grad_clip_norm,
    )
    history = TrainHistory()
    best_metric = -np.inf
    best_epoch = 0
    best_params = {k: v.copy() for k, v in params.items()}
    plateau_best = -np.inf
    plateau_wait = 0
    lr = cfg.lr
    n = len(train)

    for epoch in range(1, cfg.max_epochs + 1):
        order = np.random.default_rng(substream_seed(cfg.seed, "shuffle", epoch)).permutation(n)
        loss_sum = 0.0
        for bi, start in enumerate(range(0, n, cfg.batch_size)):
            idx = order[start : start + cfg.batch_size]
            total, _, _, grads = loss_and_grads(
                params, arch, cfg, _subset(train, idx),
                train_mode=True,
                dropout_seed=substream_seed(cfg.seed, "dropout", epoch, bi),
            )
            opt.lr = lr
            params = opt.step(params, grads)
            loss_sum += total * len(idx)
        train_loss = loss_sum / n

        ba_s, ba_e = evaluate_balanced_accuracy(params, arch, cfg, val)
        metric = _mean_defined(ba_s, ba_e)
        if not np.isfinite(metric):
            raise ValueError("validation BA undefined on both heads")
        history.append(epoch, train_loss, ba_s, ba_e, lr)

        if metric > best_metric:
            best_metric = metric
            best_epoch = epoch
            best_params = {k: v.copy() for k, v in params.items()}

        if metric > plateau_best:
            plateau_best = metric
            plateau_wait = 0
        else:
            plateau_wait += 1
            if plateau_wait >= cfg.plateau_patience:
                lr *= cfg.plateau_factor
                plateau_wait = 0

        if epoch >= cfg.early_stop_warmup and (
            epoch - max(best_epoch, cfg.early_stop_warmup) >= cfg.early_stop_patience
        ):
            break

    history.best_epoch = best_epoch
    history.stopped_epoch = history.rows[-1]["epoch"]
    return best_params, history


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

CHECKPOINT_VERSION = 1


def save_checkpoint(path, params: dict[str, np.ndarray], arch: ArchConfig) -> None:
    """Versioned npz map: parameter path -> array, plus the architecture."""
    meta = json.dumps({"format_version": CHECKPOINT_VERSION, "arch": arch_to_json(arch)})
    np.savez(path, __meta__=np.frombuffer(meta.encode(), dtype=np.uint8), **params)


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], ArchConfig]:
    with np.load(path) as data:
        meta = json.loads(bytes(data["__meta__"]).decode())
        if meta.get("format_version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version: {meta.get('format_version')}")
        params = {k: data[k] for k in data.files if k != "__meta__"}
    return params, arch_from_json(meta["arch"])
