"""Recording ingest: canonical CSV loading, condition labels, synthetic generator.

On-disk layout (one directory per subject under the dataset root):

    <root>/sessions.csv                 header: subject_id,condition,ecg_file,eda_file
    <root>/<subject>/ecg_<cond>.csv     header: t_s,mv   (uniform step, nominally 2048 Hz)
    <root>/<subject>/eda_<cond>.csv     header: t_s,us   (uniform step, nominally 32 Hz)
"""

import csv
import enum
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError


class Condition(enum.Enum):
    C1 = "c1"
    C2 = "c2"
    C3 = "c3"

    @classmethod
    def parse(cls, text: str) -> "Condition":
        try:
            return cls(text.strip().lower())
        except ValueError:
            raise DataError(f"unknown condition {text!r} (expected c1/c2/c3)") from None


class Level(enum.Enum):
    LOW = 0
    HIGH = 1
    UNDEFINED = -1


@dataclass(frozen=True)
class LabelPair:
    stress: Level
    effort: Level
    mask: int

    def __post_init__(self):
        if self.stress is Level.UNDEFINED:
            raise ValueError("stress label cannot be undefined")
        if (self.mask == 0) != (self.effort is Level.UNDEFINED):
            raise ValueError("mask must be 0 exactly when effort is undefined")


@dataclass(frozen=True)
class RawRecording:
    subject_id: str
    condition: Condition
    ecg: np.ndarray
    ecg_rate_hz: float
    eda: np.ndarray
    eda_rate_hz: float
    duration_s: float

    def __post_init__(self):
        if self.ecg_rate_hz <= 0 or self.eda_rate_hz <= 0:
            raise ValueError("sampling rates must be positive")
        object.__setattr__(self, "ecg", np.asarray(self.ecg, dtype=np.float64))
        object.__setattr__(self, "eda", np.asarray(self.eda, dtype=np.float64))


def assign_labels(condition: Condition) -> LabelPair:
    """Theory-driven labels: c1 low/low, c2 high stress with effort masked out,
    c3 high/high."""
    if condition is Condition.C1:
        return LabelPair(Level.LOW, Level.LOW, 1)
    if condition is Condition.C2:
        return LabelPair(Level.HIGH, Level.UNDEFINED, 0)
    if condition is Condition.C3:
        return LabelPair(Level.HIGH, Level.HIGH, 1)
    raise ValueError(f"unknown condition {condition!r}")


class LabelScheme(enum.Enum):
    PRIMARY = "primary"
    C2_STRESS_LOW = "c2_stress_low"


def relabel_for_sensitivity(condition: Condition, labels: LabelPair, scheme: LabelScheme) -> LabelPair:
    """Sensitivity relabeling: under C2_STRESS_LOW every c2 window's stress
    label becomes low; everything else is untouched."""
    if scheme is LabelScheme.C2_STRESS_LOW and condition is Condition.C2:
        return LabelPair(Level.LOW, labels.effort, labels.mask)
    return labels


# ---------------------------------------------------------------------------
# Canonical CSV loading
# ---------------------------------------------------------------------------


def _read_two_column_csv(path: Path, value_header: str):
    if not path.exists():
        raise DataError(f"missing file: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["t_s", value_header]:
            raise DataError(f"{path}: expected header 't_s,{value_header}', got {header}")
        t, v = [], []
        for rownum, row in enumerate(reader, start=2):
            try:
                t.append(float(row[0]))
                v.append(float(row[1]))
            except (ValueError, IndexError):
                raise DataError(f"{path}: malformed row {rownum}: {row}") from None
    t = np.asarray(t)
    v = np.asarray(v)
    if len(t) < 2:
        raise DataError(f"{path}: fewer than 2 samples")
    bad = np.nonzero(np.diff(t) <= 0)[0]
    if len(bad):
        raise DataError(f"{path}: non-monotonic timestamps at row {int(bad[0]) + 3}")
    return t, v


def _check_rate(path: Path, t: np.ndarray, nominal_hz: float) -> float:
    rate = (len(t) - 1) / (t[-1] - t[0])
    if abs(rate - nominal_hz) > 0.05 * nominal_hz:
        raise DataError(
            f"{path}: rate mismatch, measured {rate:.2f} Hz vs nominal {nominal_hz:.2f} Hz (>5%)"
        )
    return float(rate)


def read_sessions(root_path) -> list[dict]:
    root = Path(root_path)
    manifest = root / "sessions.csv"
    if not manifest.exists():
        raise DataError(f"missing file: {manifest}")
    with open(manifest, newline="") as fh:
        rows = list(csv.DictReader(fh))
    needed = {"subject_id", "condition", "ecg_file", "eda_file"}
    for i, row in enumerate(rows, start=2):
        if not needed.issubset(row.keys()) or any(row[k] in (None, "") for k in needed):
            raise DataError(f"{manifest}: malformed row {i}: {row}")
    return rows


def load_recording(
    root_path,
    subject_id: str,
    condition: Condition,
    ecg_nominal_hz: float = 2048.0,
    eda_nominal_hz: float = 32.0,
) -> RawRecording:
    """Load one subject/condition pair from the canonical tree.

    Raises :class:`DataError` naming the offending file for missing files,
    non-monotonic timestamps, or a sampling rate off nominal by more than 5%.
    """
    root = Path(root_path)
    rows = [
        r
        for r in read_sessions(root)
        if r["subject_id"] == subject_id and Condition.parse(r["condition"]) is condition
    ]
    if not rows:
        raise DataError(
            f"{root / 'sessions.csv'}: no entry for subject {subject_id!r} condition {condition.value}"
        )
    row = rows[0]
    ecg_t, ecg_v = _read_two_column_csv(root / row["ecg_file"], "mv")
    eda_t, eda_v = _read_two_column_csv(root / row["eda_file"], "us")
    ecg_rate = _check_rate(root / row["ecg_file"], ecg_t, ecg_nominal_hz)
    eda_rate = _check_rate(root / row["eda_file"], eda_t, eda_nominal_hz)
    duration = max(ecg_t[-1] - ecg_t[0], eda_t[-1] - eda_t[0])
    return RawRecording(subject_id, condition, ecg_v, ecg_rate, eda_v, eda_rate, float(duration))


# ---------------------------------------------------------------------------
# Synthetic generation with ground truth
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for one synthetic recording; fully determined by ``seed``."""

    duration_s: float
    heart_rate_profile: tuple = ((0.0, 1000.0),)  # (start_s, mean IBI ms) segments
    ibi_jitter_ms: float = 0.0
    scr_events: tuple = ()  # (onset_s, amplitude_uS)
    tonic_level_us: float = 2.0
    tonic_drift_slope: float = 0.0  # uS per second
    noise_sd: float = 0.0  # EDA additive noise, uS
    ecg_noise_sd: float = 0.0  # ECG additive noise, mV
    seed: int = 0
    ecg_rate_hz: float = 2048.0
    eda_rate_hz: float = 32.0

    def __post_init__(self):
        if self.duration_s <= 0:
            raise ValueError("duration must be positive")
        for onset, amp in self.scr_events:
            if amp < 0:
                raise ValueError("SCR amplitudes must be >= 0")
            if not (0.0 <= onset < self.duration_s):
                raise ValueError("SCR onsets must lie within the recording")
        if not self.heart_rate_profile:
            raise ValueError("heart_rate_profile must have at least one segment")


@dataclass(frozen=True)
class GroundTruth:
    r_peak_times_s: np.ndarray
    true_ibis_ms: np.ndarray
    scr_events: tuple
    tonic_trace: np.ndarray

    def __post_init__(self):
        if len(self.r_peak_times_s) > 1 and np.any(np.diff(self.r_peak_times_s) <= 0):
            raise ValueError("ground-truth peak times must be strictly increasing")


def _mean_ibi_at(profile, t: float) -> float:
    ibi = profile[0][1]
    for start, value in profile:
        if t >= start:
            ibi = value
        else:
            break
    return ibi


def _qrs_template(rate_hz: float) -> tuple[np.ndarray, int]:
    """Asymmetric QRS-like pulse (~100 ms support) whose maximum sits at a
    known sample so detector timing can be scored against ground truth."""
    half_ms = 60.0
    n_half = int(round(half_ms / 1000.0 * rate_hz))
    t = np.arange(-n_half, n_half + 1) / rate_hz * 1000.0  # ms
    r = np.exp(-0.5 * (t / 9.0) ** 2)
    q = -0.12 * np.exp(-0.5 * ((t + 26.0) / 7.0) ** 2)
    s = -0.22 * np.exp(-0.5 * ((t - 22.0) / 8.0) ** 2)
    tpl = r + q + s
    return tpl, int(np.argmax(tpl))


def bateman_kernel(t: np.ndarray, tau_fast_s: float, tau_slow_s: float) -> np.ndarray:
    """Difference-of-exponentials SCR impulse response, zero for t < 0."""
    if not (tau_slow_s > tau_fast_s > 0):
        raise ValueError("need tau_slow > tau_fast > 0")
    h = (np.exp(-t / tau_slow_s) - np.exp(-t / tau_fast_s)) / (tau_slow_s - tau_fast_s)
    h[t < 0] = 0.0
    return h


def generate_synthetic_recording(spec: SyntheticSpec) -> tuple[RawRecording, GroundTruth]:
    """Build a deterministic ECG + EDA pair with exact ground truth.

    ECG: QRS templates at cumulative-IBI times (jittered by the seeded RNG).
    EDA: tonic level + linear drift + peak-normalized Bateman pulses + noise.
    """
    rng = np.random.default_rng(spec.seed)

    # beat times by accumulating the (jittered) piecewise IBI schedule
    peak_times = []
    t = 0.5  # first beat off the edge so templates are not clipped
    while t <= spec.duration_s - 0.1:
        peak_times.append(t)
        ibi = _mean_ibi_at(spec.heart_rate_profile, t)
        if spec.ibi_jitter_ms > 0:
            ibi = ibi + rng.normal(0.0, spec.ibi_jitter_ms)
        t = t + max(ibi, 250.0) / 1000.0
    peak_times = np.asarray(peak_times)
    true_ibis = np.diff(peak_times) * 1000.0

    n_ecg = int(round(spec.duration_s * spec.ecg_rate_hz))
    ecg = np.zeros(n_ecg)
    tpl, tpl_peak = _qrs_template(spec.ecg_rate_hz)
    for pt in peak_times:
        center = int(round(pt * spec.ecg_rate_hz))
        start = center - tpl_peak
        stop = start + len(tpl)
        lo, hi = max(start, 0), min(stop, n_ecg)
        if lo < hi:
            ecg[lo:hi] += tpl[lo - start : hi - start]
    if spec.ecg_noise_sd > 0:
        ecg = ecg + rng.normal(0.0, spec.ecg_noise_sd, n_ecg)

    n_eda = int(round(spec.duration_s * spec.eda_rate_hz))
    t_eda = np.arange(n_eda) / spec.eda_rate_hz
    tonic = spec.tonic_level_us + spec.tonic_drift_slope * t_eda
    eda = tonic.copy()
    if spec.scr_events:
        kernel_t = np.arange(0.0, 40.0, 1.0 / spec.eda_rate_hz)
        kernel = bateman_kernel(kernel_t, 0.7, 2.0)
        kernel = kernel / kernel.max()  # amplitude parameter = pulse peak height
        for onset, amp in spec.scr_events:
            i0 = int(round(onset * spec.eda_rate_hz))
            seg = min(len(kernel), n_eda - i0)
            if seg > 0:
                eda[i0 : i0 + seg] += amp * kernel[:seg]
    if spec.noise_sd > 0:
        eda = eda + rng.normal(0.0, spec.noise_sd, n_eda)

    rec = RawRecording(
        subject_id="synthetic",
        condition=Condition.C1,
        ecg=ecg,
        ecg_rate_hz=spec.ecg_rate_hz,
        eda=eda,
        eda_rate_hz=spec.eda_rate_hz,
        duration_s=spec.duration_s,
    )
    truth = GroundTruth(peak_times, true_ibis, tuple(spec.scr_events), tonic)
    return rec, truth


# ---------------------------------------------------------------------------
# Canonical tree writer (used by the `synth` CLI command and test fixtures)
# ---------------------------------------------------------------------------


def write_recording_csvs(root_path, subject_id: str, condition: Condition, rec: RawRecording) -> dict:
    """Write ecg_<cond>.csv / eda_<cond>.csv for one recording; returns the
    sessions.csv row."""
    root = Path(root_path)
    subdir = root / subject_id
    subdir.mkdir(parents=True, exist_ok=True)
    ecg_rel = f"{subject_id}/ecg_{condition.value}.csv"
    eda_rel = f"{subject_id}/eda_{condition.value}.csv"
    for rel, header, values, rate in (
        (ecg_rel, "mv", rec.ecg, rec.ecg_rate_hz),
        (eda_rel, "us", rec.eda, rec.eda_rate_hz),
    ):
        with open(root / rel, "w", newline="") as fh:
            fh.write(f"t_s,{header}\n")
            for i, v in enumerate(values):
                fh.write(f"{i / rate!r},{float(v)!r}\n")
    return {
        "subject_id": subject_id,
        "condition": condition.value,
        "ecg_file": ecg_rel,
        "eda_file": eda_rel,
    }


def write_sessions_csv(root_path, rows: list[dict]) -> None:
    root = Path(root_path)
    root.mkdir(parents=True, exist_ok=True)
    with open(root / "sessions.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["subject_id", "condition", "ecg_file", "eda_file"])
        writer.writeheader()
        writer.writerows(rows)
