"""Leave-one-subject-out cross-validation.

Per fold, the held-out subject contributes nothing to training, inner
validation, the CV-gated log-transform flags, or training-side normalization
statistics. For leakage probes, ``heldout_perturbation`` corrupts only the
copy of the held-out subject used for evaluation: the fold's trained
parameters must be unchanged, and no other fold may move at all.
"""

import hashlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from ..ingest import LabelScheme
from ..model.network import ArchConfig, forward, substream_seed
from ..model.train import TrainConfig, TrainHistory, train_fold
from ..pipeline import WindowedDataset, apply_fold_transform, fit_fold_transform
from .metrics import metrics_or_none


@dataclass
class FoldResult:
    subject_id: str
    condition: np.ndarray
    window_start_s: np.ndarray
    u: np.ndarray
    o: np.ndarray
    stress: np.ndarray
    effort: np.ndarray
    mask: np.ndarray
    metrics: dict  # {"stress": Metrics|None, "effort": Metrics|None}
    n_eff: int
    history: TrainHistory
    audit: dict

    def ba(self, head: str) -> float:
        m = self.metrics.get(head)
        return m.ba if m is not None else float("nan")


def _params_digest(params: dict) -> str:
    h = hashlib.sha256()
    for key in sorted(params):
        h.update(key.encode())
        h.update(np.ascontiguousarray(params[key]).tobytes())
    return h.hexdigest()


def fold_metrics(u, o, stress, effort, mask) -> tuple[dict, int]:
    """Stress metrics over all windows; effort metrics over mask=1 windows.
    A head with a single observed class is marked undefined (None)."""
    pred_stress = (np.asarray(o) >= 0.5).astype(int)
    stress_m = metrics_or_none(pred_stress, stress)
    masked = np.asarray(mask) > 0
    if masked.any():
        pred_eff = (np.asarray(u)[masked] >= 0.5).astype(int)
        effort_m = metrics_or_none(pred_eff, np.asarray(effort)[masked])
    else:
        effort_m = None
    return {"stress": stress_m, "effort": effort_m}, int(masked.sum())


def _run_single_fold(args) -> FoldResult:
    dataset, held, arch, cfg, normalization_mode, perturb = args
    subjects = dataset.subjects()
    train_subjects = [s for s in subjects if s != held]

    held_ds = dataset.for_subjects([held])
    if perturb is not None:
        held_ds = perturb(held_ds)
    train_ds = dataset.for_subjects(train_subjects)

    # seeded inner validation split (subject-grouped, leak-free); redraw when a
    # pathological pick leaves balanced accuracy undefined on both heads
    n_val = min(cfg.val_subjects, len(train_subjects) - 1)
    n_val = max(n_val, 1)
    rng = np.random.default_rng(substream_seed(cfg.seed, "val-split", held))
    val_subjects = None
    for _ in range(64):
        candidate = sorted(rng.choice(train_subjects, size=n_val, replace=False).tolist())
        cand_ds = train_ds.for_subjects(candidate)
        masked_effort = cand_ds.effort[cand_ds.mask > 0]
        if len(np.unique(cand_ds.stress)) >= 2 or len(np.unique(masked_effort)) >= 2:
            val_subjects = candidate
            break
    if val_subjects is None:
        raise ValueError(f"no viable inner validation split for fold {held!r}")
    inner_train = [s for s in train_subjects if s not in val_subjects]

    transform = fit_fold_transform(train_ds, normalization_mode)
    train_norm = apply_fold_transform(train_ds, transform)
    held_norm = apply_fold_transform(held_ds, transform)

    fold_cfg = replace(cfg, seed=substream_seed(cfg.seed, "fold", held))
    params, history = train_fold(
        train_norm.for_subjects(inner_train).to_batch(),
        train_norm.for_subjects(val_subjects).to_batch(),
        arch,
        fold_cfg,
    )

    out = forward(params, arch, held_norm.to_batch(), train_mode=False)
    metrics, n_eff = fold_metrics(out.u, out.o, held_norm.stress, held_norm.effort, held_norm.mask)
    return FoldResult(
        subject_id=held,
        condition=held_norm.condition.copy(),
        window_start_s=held_norm.window_start_s.copy(),
        u=out.u.copy(),
        o=out.o.copy(),
        stress=held_norm.stress.copy(),
        effort=held_norm.effort.copy(),
        mask=held_norm.mask.copy(),
        metrics=metrics,
        n_eff=n_eff,
        history=history,
        audit={
            "log_flags": transform.eda_log_flags(),
            "normalization_mode": normalization_mode,
            "train_subjects": inner_train,
            "val_subjects": val_subjects,
            "params_digest": _params_digest(params),
        },
    )


def run_loso(
    dataset: WindowedDataset,
    arch: ArchConfig,
    cfg: TrainConfig,
    normalization_mode: str = "self_per_subject",
    scheme: LabelScheme = LabelScheme.PRIMARY,
    parallel_folds: int = 1,
    heldout_perturbation=None,
) -> list[FoldResult]:
    """One fold per subject, ordered by subject id.

    With ``parallel_folds > 1`` folds run in separate processes, so the
    dataset, configs, and any ``heldout_perturbation`` must be picklable
    (module-level functions, not closures)."""
    subjects = dataset.subjects()
    if len(subjects) < 3:
        raise ValueError(f"LOSO needs at least 3 subjects, got {len(subjects)}")
    for s in subjects:
        conds = set(dataset.condition[dataset.subject == s].tolist())
        if len(conds) < 2:
            raise ValueError(f"subject {s!r} has windows from fewer than 2 conditions")
    if scheme is not LabelScheme.PRIMARY:
        dataset = dataset.relabel(scheme)

    jobs = [(dataset, held, arch, cfg, normalization_mode, heldout_perturbation) for held in subjects]
    if parallel_folds > 1:
        with ProcessPoolExecutor(max_workers=parallel_folds) as pool:
            results = list(pool.map(_run_single_fold, jobs))
    else:
        results = [_run_single_fold(job) for job in jobs]
    return results


def resensitize_fold_metrics(fold: FoldResult, scheme: LabelScheme) -> dict:
    """Recompute a fold's metrics under a relabeling scheme without retraining:
    only stress labels of c2 windows can change, so effort metrics are
    untouched by construction."""
    stress = fold.stress.copy()
    if scheme is LabelScheme.C2_STRESS_LOW:
        stress[fold.condition == "c2"] = 0
    metrics, _ = fold_metrics(fold.u, fold.o, stress, fold.effort, fold.mask)
    return metrics
