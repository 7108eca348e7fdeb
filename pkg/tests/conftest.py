"""Shared fixtures and independent reference implementations (oracles)."""

import numpy as np
import pytest

from capstate.pipeline import WindowedDataset


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# ---------------------------------------------------------------------------
# Oracles
# ---------------------------------------------------------------------------


def butterworth_power_response(f_hz: float, cutoff_hz: float, order: int, rate_hz: float) -> float:
    """Squared magnitude of the bilinear-transform Butterworth low-pass at
    frequency f: |H|^2 = 1 / (1 + (w/wc)^(2 order)) with both frequencies
    pre-warped onto the analog axis."""
    w = 2.0 * rate_hz * np.tan(np.pi * f_hz / rate_hz)
    wc = 2.0 * rate_hz * np.tan(np.pi * cutoff_hz / rate_hz)
    return 1.0 / (1.0 + (w / wc) ** (2 * order))


def direct_periodogram(x: np.ndarray, fs: float, nfft: int) -> tuple[np.ndarray, np.ndarray]:
    """Single-segment Hann periodogram by explicit DFT sums, mean removed and
    reassigned to the DC bin (same spectral conventions as welch_psd, but an
    independent O(n^2) computation path)."""
    n = len(x)
    w = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)
    m = x.mean()
    y = np.zeros(nfft)
    y[:n] = (x - m) * w
    half = nfft // 2
    freqs = np.arange(half + 1) * fs / nfft
    power = np.zeros(half + 1)
    t = np.arange(nfft)
    for k in range(half + 1):
        re = float(np.sum(y * np.cos(-2.0 * np.pi * k * t / nfft)))
        im = float(np.sum(y * np.sin(-2.0 * np.pi * k * t / nfft)))
        power[k] = (re * re + im * im) / (fs * (w @ w))
    power[1:half] *= 2.0
    power[0] += m * m / (fs / nfft)
    return freqs, power


def brute_hrv_time(x: np.ndarray) -> np.ndarray:
    """Literal-formula HRV time features, written independently of the
    vectorized implementation."""
    n = len(x)
    mean = sum(x) / n
    sdnn = (sum((v - mean) ** 2 for v in x) / n) ** 0.5
    diffs = [x[i + 1] - x[i] for i in range(n - 1)]
    rmssd = (sum(d * d for d in diffs) / len(diffs)) ** 0.5
    pnn50 = 100.0 * sum(1 for d in diffs if abs(d) > 50.0) / len(diffs)
    cv = sdnn / mean
    hr = [60000.0 / v for v in x]
    hr_mean = sum(hr) / n
    hr_sd = (sum((v - hr_mean) ** 2 for v in hr) / n) ** 0.5
    return np.array([mean, sdnn, rmssd, pnn50, cv, hr_mean, hr_sd])


def match_peaks_f1(detected: np.ndarray, truth: np.ndarray, tol_s: float = 0.02) -> float:
    """Greedy one-to-one matching within tol_s."""
    used = set()
    tp = 0
    for d in detected:
        j = int(np.argmin(np.abs(truth - d)))
        if abs(truth[j] - d) <= tol_s and j not in used:
            used.add(j)
            tp += 1
    if len(detected) == 0 or len(truth) == 0:
        return 0.0
    precision = tp / len(detected)
    recall = tp / len(truth)
    return 2 * precision * recall / (precision + recall) if precision + recall else 0.0


# ---------------------------------------------------------------------------
# Fast feature-level dataset (no raw-signal preprocessing)
# ---------------------------------------------------------------------------


def make_feature_dataset(n_subjects=4, per_cond=12, seed=0, separation=1.2) -> WindowedDataset:
    """Directly constructed windowed dataset with a condition-graded shift in
    every channel; used to exercise training and LOSO without the signal chain."""
    rng = np.random.default_rng(seed)
    T = 120
    t = np.arange(T)
    parts = {k: [] for k in (
        "x_ibi", "x_eda", "f_hrv", "f_eda", "stress", "effort", "mask",
        "subject", "condition", "window_start_s")}
    for si in range(n_subjects):
        subj = f"s{si:02d}"
        base = rng.normal(0, 0.3)
        for ci, cond in enumerate(("c1", "c2", "c3")):
            g = ci / 2.0
            for w in range(per_cond):
                parts["x_ibi"].append(
                    base + g * separation + 0.3 * np.sin(2 * np.pi * t / 40 + rng.uniform(0, 6))
                    + rng.normal(0, 0.2, T))
                parts["x_eda"].append(
                    base + g * separation + 0.2 * np.cos(2 * np.pi * t / 60 + rng.uniform(0, 6))
                    + rng.normal(0, 0.2, T))
                parts["f_hrv"].append(rng.normal(0, 0.3, 14) + g * separation)
                parts["f_eda"].append(np.abs(rng.normal(0, 0.3, 12) + g * separation))
                parts["stress"].append(0 if cond == "c1" else 1)
                parts["effort"].append(0 if cond == "c1" else (1 if cond == "c3" else -1))
                parts["mask"].append(0 if cond == "c2" else 1)
                parts["subject"].append(subj)
                parts["condition"].append(cond)
                parts["window_start_s"].append(w * 15.0)
    return WindowedDataset(
        x_ibi=np.array(parts["x_ibi"]),
        x_eda=np.array(parts["x_eda"]),
        f_hrv=np.array(parts["f_hrv"]),
        f_eda=np.array(parts["f_eda"]),
        stress=np.array(parts["stress"]),
        effort=np.array(parts["effort"]),
        mask=np.array(parts["mask"]),
        subject=np.array(parts["subject"], dtype=object),
        condition=np.array(parts["condition"], dtype=object),
        window_start_s=np.array(parts["window_start_s"]),
    )


TINY_ARCH = dict(
    conv_channels=4,
    lstm_hidden=4,
    feat_hidden=4,
    fusion_hidden=6,
    fusion_out=4,
    head_hidden=3,
    tcn_channels=4,
    tcn_dilations=(1, 2),
)
