"""Recording -> windowed samples, dataset container, and per-fold transforms.

A windowed sample is one 60 s (120-sample at 2 Hz) slice carrying the IBI and
EDA time series, the 14 + 12 handcrafted features, the condition labels and
the effort-validity mask. Features stored on disk and in :class:`WindowedDataset`
are raw; the CV-gated log transform and the per-subject z-scoring are applied
per evaluation fold (they depend on fold membership).
"""

from dataclasses import dataclass, field, replace

import numpy as np

from . import cardiac, eda
from .dsp import UniformSeries, WindowingPlan, window_segment
from .ingest import (
    Condition,
    LabelPair,
    LabelScheme,
    Level,
    RawRecording,
    SyntheticSpec,
    assign_labels,
    generate_synthetic_recording,
    relabel_for_sensitivity,
)
from .model.network import Batch

GRID_HZ = 2.0
N_EDA_FEATURES = len(eda.EDA_FEATURE_NAMES)
N_HRV_FEATURES = len(cardiac.HRV_FEATURE_NAMES)


@dataclass
class WindowedDataset:
    """Column-oriented window store for a set of subjects."""

    x_ibi: np.ndarray  # (N, 120) ms
    x_eda: np.ndarray  # (N, 120) uS (detrended scale)
    f_hrv: np.ndarray  # (N, 14) raw features
    f_eda: np.ndarray  # (N, 12) raw features
    stress: np.ndarray  # (N,) int
    effort: np.ndarray  # (N,) int, -1 undefined
    mask: np.ndarray  # (N,) int
    subject: np.ndarray  # (N,) str
    condition: np.ndarray  # (N,) str c1/c2/c3
    window_start_s: np.ndarray  # (N,)

    def __len__(self):
        return len(self.x_ibi)

    def subjects(self) -> list[str]:
        return sorted(set(self.subject.tolist()))

    def select(self, rows: np.ndarray) -> "WindowedDataset":
        return WindowedDataset(**{k: getattr(self, k)[rows] for k in _FIELDS})

    def for_subjects(self, subjects) -> "WindowedDataset":
        wanted = set(subjects)
        rows = np.array([s in wanted for s in self.subject])
        return self.select(rows)

    def to_batch(self) -> Batch:
        return Batch(
            x_ibi=self.x_ibi,
            x_eda=self.x_eda,
            f_hrv=self.f_hrv,
            f_eda=self.f_eda,
            stress=self.stress,
            effort=self.effort,
            mask=self.mask,
        )

    def relabel(self, scheme: LabelScheme) -> "WindowedDataset":
        """Apply the sensitivity relabeling window-wise (stress only)."""
        stress = self.stress.copy()
        for i in range(len(self)):
            cond = Condition(self.condition[i])
            pair = LabelPair(
                Level(int(self.stress[i])),
                Level(int(self.effort[i])) if self.mask[i] else Level.UNDEFINED,
                int(self.mask[i]),
            )
            stress[i] = relabel_for_sensitivity(cond, pair, scheme).stress.value
        out = self.select(np.arange(len(self)))
        out.stress = stress
        return out


_FIELDS = [
    "x_ibi",
    "x_eda",
    "f_hrv",
    "f_eda",
    "stress",
    "effort",
    "mask",
    "subject",
    "condition",
    "window_start_s",
]


def concat_datasets(parts: list[WindowedDataset]) -> WindowedDataset:
    return WindowedDataset(**{k: np.concatenate([getattr(p, k) for p in parts]) for k in _FIELDS})


# ---------------------------------------------------------------------------
# One recording -> windows
# ---------------------------------------------------------------------------


def window_recording(
    rec: RawRecording,
    plan: WindowingPlan = WindowingPlan(),
    labels: LabelPair | None = None,
    trim_head_s: float = 0.0,
    trim_tail_s: float = 0.0,
    cvx_params: eda.CvxEdaParams = eda.CvxEdaParams(),
) -> WindowedDataset:
    """Full per-recording chain: R peaks -> corrected IBI at 2 Hz; EDA
    conditioning -> cvxEDA split -> SCR events; aligned windowing; features."""
    if labels is None:
        labels = assign_labels(rec.condition)

    ecg = UniformSeries(rec.ecg, rec.ecg_rate_hz)
    eda_raw = UniformSeries(rec.eda, rec.eda_rate_hz)
    if trim_head_s > 0 or trim_tail_s > 0:
        ecg = _trim(ecg, trim_head_s, trim_tail_s)
        eda_raw = _trim(eda_raw, trim_head_s, trim_tail_s)

    peaks = cardiac.detect_r_peaks(ecg)
    ibi = cardiac.build_ibi(peaks)
    ibi_2hz = cardiac.ibi_to_uniform(ibi, GRID_HZ)

    eda_proc = eda.preprocess_eda(eda_raw, GRID_HZ)
    eda_rawds = eda.downsample_eda_raw(eda_raw, GRID_HZ)
    decomp = eda.cvxeda_decompose(eda_proc, cvx_params)
    events = eda.detect_scrs(decomp.phasic)

    # crop every 2 Hz stream to the common span before windowing
    start = max(ibi_2hz.start_s, eda_proc.start_s)
    end = min(ibi_2hz.end_s, eda_proc.end_s)
    series = {
        "ibi": _crop(ibi_2hz, start, end),
        "eda": _crop(eda_proc, start, end),
        "raw": _crop(eda_rawds, start, end),
        "tonic": _crop(decomp.tonic, start, end),
        "phasic": _crop(decomp.phasic, start, end),
    }
    n_common = min(len(s.values) for s in series.values())
    windows = {k: window_segment(s.replace_values(s.values[:n_common]), plan) for k, s in series.items()}

    rows = len(windows["ibi"])
    out = _empty_dataset(rows, plan.window_len_samples)
    window_dur = plan.window_len_samples / GRID_HZ
    for i in range(rows):
        w_ibi = windows["ibi"][i]
        w_raw = windows["raw"][i]
        w_ton = windows["tonic"][i]
        w_pha = windows["phasic"][i]
        evs = eda.events_in_window(events, w_ibi.start_s, window_dur)
        out.x_ibi[i] = w_ibi.values
        out.x_eda[i] = windows["eda"][i].values
        out.f_hrv[i] = cardiac.hrv_features(w_ibi).as_array()
        out.f_eda[i] = eda.eda_features(w_raw, w_ton, w_pha, evs).as_array()
        out.window_start_s[i] = w_ibi.start_s
    out.stress[:] = labels.stress.value
    out.effort[:] = labels.effort.value
    out.mask[:] = labels.mask
    out.subject[:] = rec.subject_id
    out.condition[:] = rec.condition.value
    return out


def _trim(x: UniformSeries, head_s: float, tail_s: float) -> UniformSeries:
    i0 = int(round(head_s * x.rate_hz))
    i1 = len(x.values) - int(round(tail_s * x.rate_hz))
    if i1 - i0 < 2:
        raise ValueError("trimming removes the whole recording")
    return UniformSeries(x.values[i0:i1].copy(), x.rate_hz, x.start_s + i0 / x.rate_hz)


def _crop(x: UniformSeries, start_s: float, end_s: float) -> UniformSeries:
    i0 = int(np.ceil((start_s - x.start_s) * x.rate_hz - 1e-9))
    i1 = int(np.floor((end_s - x.start_s) * x.rate_hz + 1e-9)) + 1
    i0 = max(i0, 0)
    i1 = min(i1, len(x.values))
    return UniformSeries(x.values[i0:i1].copy(), x.rate_hz, x.start_s + i0 / x.rate_hz)


def _empty_dataset(rows: int, window_len: int) -> WindowedDataset:
    return WindowedDataset(
        x_ibi=np.zeros((rows, window_len)),
        x_eda=np.zeros((rows, window_len)),
        f_hrv=np.zeros((rows, N_HRV_FEATURES)),
        f_eda=np.zeros((rows, N_EDA_FEATURES)),
        stress=np.zeros(rows, dtype=np.int64),
        effort=np.zeros(rows, dtype=np.int64),
        mask=np.zeros(rows, dtype=np.int64),
        subject=np.array(["?"] * rows, dtype=object),
        condition=np.array(["c1"] * rows, dtype=object),
        window_start_s=np.zeros(rows),
    )


# ---------------------------------------------------------------------------
# Per-fold transform: CV-gated log on EDA features, then normalization
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FoldTransform:
    """Fitted on the training fold only; applied identically to held-out data."""

    log_transform: eda.LogTransform
    normalization_mode: str  # "self_per_subject" or "train_fold_stats"
    pooled_stats: dict = field(default_factory=dict)

    def eda_log_flags(self) -> np.ndarray:
        return self.log_transform.flags.copy()


def fit_fold_transform(train: WindowedDataset, normalization_mode: str = "self_per_subject") -> FoldTransform:
    if normalization_mode not in ("self_per_subject", "train_fold_stats"):
        raise ValueError(f"unknown normalization mode {normalization_mode!r}")
    log_tr = eda.LogTransform.fit(train.f_eda)
    pooled = {}
    if normalization_mode == "train_fold_stats":
        f_eda_t = log_tr.apply(train.f_eda)
        for name, arr in (
            ("f_hrv", train.f_hrv),
            ("f_eda", f_eda_t),
            ("x_ibi", train.x_ibi.reshape(-1, 1)),
            ("x_eda", train.x_eda.reshape(-1, 1)),
        ):
            pooled[name] = (arr.mean(axis=0), np.maximum(arr.std(axis=0), 1e-8))
    return FoldTransform(log_tr, normalization_mode, pooled)


def apply_fold_transform(ds: WindowedDataset, tr: FoldTransform) -> WindowedDataset:
    """Log-transform flagged EDA dims, then z-score features and time series.

    In self_per_subject mode every subject is normalized with its own
    label-free statistics; in train_fold_stats mode pooled training statistics
    are applied to everyone (held-out subjects included).
    """
    out = ds.select(np.arange(len(ds)))
    out.f_eda = tr.log_transform.apply(ds.f_eda)
    if tr.normalization_mode == "self_per_subject":
        out.f_hrv, _ = cardiac.normalize_per_subject(ds.f_hrv, ds.subject)
        out.f_eda, _ = cardiac.normalize_per_subject(out.f_eda, ds.subject)
        for name in ("x_ibi", "x_eda"):
            # per-subject scalar channel stats over all samples of all windows
            arr = getattr(ds, name)
            norm = np.empty_like(arr)
            for subj in ds.subjects():
                rows = np.nonzero(ds.subject == subj)[0]
                if len(rows) < 2:
                    raise ValueError(f"subject {subj!r} has fewer than 2 windows")
                mu = arr[rows].mean()
                sd = max(arr[rows].std(), 1e-8)
                norm[rows] = (arr[rows] - mu) / sd
            setattr(out, name, norm)
    else:
        mu, sd = tr.pooled_stats["f_hrv"]
        out.f_hrv = (ds.f_hrv - mu) / sd
        mu, sd = tr.pooled_stats["f_eda"]
        out.f_eda = (out.f_eda - mu) / sd
        for name in ("x_ibi", "x_eda"):
            mu, sd = tr.pooled_stats[name]
            setattr(out, name, (getattr(ds, name) - float(mu[0])) / float(sd[0]))
    return out


# ---------------------------------------------------------------------------
# Synthetic multi-subject dataset with condition-graded autonomic shifts
# ---------------------------------------------------------------------------


def synthetic_condition_spec(
    subject_idx: int,
    condition: Condition,
    duration_s: float,
    seed: int,
    ecg_rate_hz: float = 512.0,
    eda_rate_hz: float = 32.0,
) -> SyntheticSpec:
    """Demand-graded generator settings: c1 -> c2 -> c3 shortens the IBI,
    damps respiratory HRV, and raises SCR rate and tonic level, with a
    deterministic per-subject baseline offset."""
    rng = np.random.default_rng(seed)
    base_ibi = 880.0 + 12.0 * (subject_idx % 7) + rng.uniform(-15.0, 15.0)
    grade = {"c1": 0.0, "c2": 0.4, "c3": 1.0}[condition.value]
    mean_ibi = base_ibi - 180.0 * grade
    hrv_amp = 55.0 - 35.0 * grade
    profile = []
    for t in np.arange(0.0, duration_s, 2.0):
        profile.append((float(t), float(mean_ibi + hrv_amp * np.sin(2 * np.pi * 0.1 * t))))
    scr_rate_per_min = 0.6 + 1.0 * grade + 2.4 * grade**2
    n_events = max(1, int(round(scr_rate_per_min * duration_s / 60.0)))
    onsets = np.sort(rng.uniform(5.0, duration_s - 20.0, n_events))
    amps = rng.uniform(0.15, 0.45, n_events) * (1.0 + 0.5 * grade + 0.7 * grade**2)
    return SyntheticSpec(
        duration_s=duration_s,
        heart_rate_profile=tuple(profile),
        ibi_jitter_ms=10.0 + 14.0 * grade,
        scr_events=tuple((float(o), float(a)) for o, a in zip(onsets, amps)),
        tonic_level_us=2.0 + 0.2 * (subject_idx % 5) + 1.4 * grade,
        tonic_drift_slope=2e-4 + 4e-4 * grade,
        noise_sd=0.01,
        ecg_noise_sd=0.02,
        seed=seed,
        ecg_rate_hz=ecg_rate_hz,
        eda_rate_hz=eda_rate_hz,
    )


def make_synthetic_recordings(
    n_subjects: int,
    duration_s: float = 360.0,
    seed: int = 42,
    ecg_rate_hz: float = 512.0,
) -> list[RawRecording]:
    """One recording per subject x condition, subjects named sim01..simNN."""
    from .model.network import substream_seed

    recordings = []
    for si in range(n_subjects):
        subject = f"sim{si + 1:02d}"
        for cond in Condition:
            spec = synthetic_condition_spec(
                si, cond, duration_s,
                seed=substream_seed(seed, "synth", subject, cond.value),
                ecg_rate_hz=ecg_rate_hz,
            )
            rec, _ = generate_synthetic_recording(spec)
            recordings.append(replace_identity(rec, subject, cond))
    return recordings


def replace_identity(rec: RawRecording, subject_id: str, condition: Condition) -> RawRecording:
    return replace(rec, subject_id=subject_id, condition=condition)


def build_dataset(
    recordings: list[RawRecording],
    plan: WindowingPlan = WindowingPlan(),
    trim_head_s: float = 0.0,
    trim_tail_s: float = 0.0,
    cvx_params: eda.CvxEdaParams = eda.CvxEdaParams(),
) -> WindowedDataset:
    parts = [
        window_recording(rec, plan, trim_head_s=trim_head_s, trim_tail_s=trim_tail_s, cvx_params=cvx_params)
        for rec in recordings
    ]
    return concat_datasets(parts)
