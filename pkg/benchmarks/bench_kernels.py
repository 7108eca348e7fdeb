"""Timing comparison of the numba kernels against the pure-numpy fallback.

Run a single mode (respects CAPSTATE_NUMBA):

    python benchmarks/bench_kernels.py

Run both modes and print the side-by-side table:

    python benchmarks/bench_kernels.py --compare
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def best_of(fn, repeats=5, warmup=1):
    for _ in range(warmup):
        fn()
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def build_benchmarks():
    from capstate.cardiac import detect_r_peaks
    from capstate.dsp import UniformSeries, _butter_sos, _sosfilt_kernel, fft_radix2
    from capstate.eda import cvxeda_decompose
    from capstate.ingest import SyntheticSpec, generate_synthetic_recording, bateman_kernel
    from capstate.model import ArchConfig, Batch, TrainConfig, init_params
    from capstate.model.train import loss_and_grads
    import capstate.model.autograd as ag
    from capstate.model.autograd import Tensor

    rng = np.random.default_rng(0)

    ecg_sig = rng.normal(size=2048 * 60)
    sos = _butter_sos(4, 15.0, 2048.0, "lowpass")
    zi = np.zeros((sos.shape[0], 2))

    spec = SyntheticSpec(
        duration_s=120.0, heart_rate_profile=((0.0, 850.0),), ibi_jitter_ms=25.0,
        ecg_noise_sd=0.05, seed=3, ecg_rate_hz=512.0,
    )
    rec, _ = generate_synthetic_recording(spec)
    ecg_series = UniformSeries(rec.ecg, 512.0)

    fft_batch = rng.normal(size=(200, 128))

    eda_n = 2400
    t_k = np.arange(0, 40, 0.5)
    kern = bateman_kernel(t_k, 0.7, 2.0)
    kern /= kern.max()
    eda_sig = np.full(eda_n, 2.0)
    for onset in rng.uniform(0, eda_n / 2 - 30, 30):
        i0 = int(onset * 2)
        seg = min(len(kern), eda_n - i0)
        eda_sig[i0 : i0 + seg] += rng.uniform(0.2, 0.8) * kern[:seg]
    eda_sig += rng.normal(0, 0.01, eda_n)
    eda_series = UniformSeries(eda_sig, 2.0)

    arch = ArchConfig()
    params = init_params(arch, 0)
    cfg = TrainConfig()
    batch = Batch(
        x_ibi=rng.normal(size=(64, 120)), x_eda=rng.normal(size=(64, 120)),
        f_hrv=rng.normal(size=(64, 14)), f_eda=rng.normal(size=(64, 12)),
        stress=rng.integers(0, 2, 64), effort=rng.integers(0, 2, 64),
        mask=rng.integers(0, 2, 64),
    )

    lstm_x = np.ascontiguousarray(rng.normal(size=(64, 120, 16)))
    lstm_wx = np.ascontiguousarray(rng.normal(size=(16, 128)) * 0.2)
    lstm_wh = np.ascontiguousarray(rng.normal(size=(32, 128)) * 0.2)
    lstm_b = rng.normal(size=128) * 0.1

    conv_x = np.ascontiguousarray(rng.normal(size=(64, 120, 16)))
    conv_w = np.ascontiguousarray(rng.normal(size=(5, 16, 16)) * 0.2)
    conv_b = rng.normal(size=16)

    def bench_lstm():
        out = ag.lstm(Tensor(lstm_x), Tensor(lstm_wx), Tensor(lstm_wh), Tensor(lstm_b))
        ag.tsum(ag.mul(out, out)).backward()

    def bench_conv():
        out = ag.conv1d_causal(Tensor(conv_x), Tensor(conv_w), Tensor(conv_b), dilation=2)
        ag.tsum(ag.mul(out, out)).backward()

    return {
        "sosfilt_122k_samples": lambda: _sosfilt_kernel(sos, ecg_sig, zi),
        "fft_radix2_200x128": lambda: fft_radix2(fft_batch),
        "pan_tompkins_120s_512hz": lambda: detect_r_peaks(ecg_series),
        "cvxeda_20min_2hz": lambda: cvxeda_decompose(eda_series),
        "lstm_fwd_bwd_64x120x32": bench_lstm,
        "conv1d_fwd_bwd_64x120": bench_conv,
        "train_step_full_arch": lambda: loss_and_grads(params, arch, cfg, batch),
    }


def run_current_mode() -> dict:
    import capstate

    results = {"numba": capstate.NUMBA_ENABLED, "timings": {}}
    for name, fn in build_benchmarks().items():
        results["timings"][name] = best_of(fn)
    return results


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--compare", action="store_true", help="run both backends via subprocesses")
    parser.add_argument("--json", action="store_true", help="emit machine-readable results")
    args = parser.parse_args()

    if not args.compare:
        results = run_current_mode()
        if args.json:
            print(json.dumps(results))
        else:
            mode = "numba" if results["numba"] else "numpy fallback"
            print(f"backend: {mode}")
            for name, t in results["timings"].items():
                print(f"  {name:28s} {t * 1e3:10.2f} ms")
        return

    rows = {}
    for flag in ("1", "0"):
        env = dict(os.environ, CAPSTATE_NUMBA=flag)
        out = subprocess.run(
            [sys.executable, os.path.abspath(__file__), "--json"],
            env=env, capture_output=True, text=True, check=True,
        )
        rows[flag] = json.loads(out.stdout.strip().splitlines()[-1])
    print(f"{'kernel':28s} {'numba':>12s} {'numpy':>12s} {'speedup':>9s}")
    for name in rows["1"]["timings"]:
        t1 = rows["1"]["timings"][name]
        t0 = rows["0"]["timings"][name]
        print(f"{name:28s} {t1 * 1e3:10.2f} ms {t0 * 1e3:10.2f} ms {t0 / t1:8.1f}x")


if __name__ == "__main__":
    main()
