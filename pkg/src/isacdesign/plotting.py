"""Matplotlib figures of evaluation reports, rendered straight to files."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    # fixed metadata keeps PNG bytes reproducible
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_beampattern(angles, designed_db, initial_db=None, mainlobe=(), path="beampattern.png"):
    fig, ax = plt.subplots(figsize=(6, 3.5))
    if initial_db is not None:
        ax.plot(angles, initial_db, "--", color="0.6", label="initial")
    ax.plot(angles, designed_db, label="designed")
    for lo, hi in mainlobe:
        ax.axvspan(lo, hi, color="tab:green", alpha=0.12)
    ax.set_xlabel("angle (deg)")
    ax.set_ylabel("power (dB)")
    ax.legend()
    ax.grid(alpha=0.3)
    return _save(fig, path)


def plot_range_profile(profile, baseline=None, path="range_profile.png"):
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(profile.lags, profile.db("own"), ".-", label="own block")
    ax.plot(profile.pre_lags, profile.db("pre"), ".", label="previous block")
    ax.plot(profile.post_lags, profile.db("post"), ".", label="next block")
    if baseline is not None:
        ax.plot(baseline.lags, baseline.db("own"), "--", color="0.6", label="matched filter, initial")
    ax.set_ylim(bottom=max(-80.0, ax.get_ylim()[0]))
    ax.set_xlabel("lag (samples)")
    ax.set_ylabel("output (dB re zero lag)")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    return _save(fig, path)


def plot_convergence(g_obj_traces: dict, path="convergence.png"):
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for label, tr in g_obj_traces.items():
        ax.plot(np.arange(len(tr)), tr, "o-", ms=3, label=label)
    ax.set_xlabel("AO iteration")
    ax.set_ylabel("objective")
    ax.legend()
    ax.grid(alpha=0.3)
    return _save(fig, path)


def plot_ser(results: dict, path="ser.png"):
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for label, r in results.items():
        ser = np.maximum(r.ser, 1e-7)
        ax.errorbar(r.snr_db, ser, yerr=r.half_width, fmt="o-", ms=3, capsize=2, label=label)
    ax.set_yscale("log")
    ax.set_xlabel("SNR (dB)")
    ax.set_ylabel("symbol error rate")
    ax.legend()
    ax.grid(alpha=0.3, which="both")
    return _save(fig, path)
