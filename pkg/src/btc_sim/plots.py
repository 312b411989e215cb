"""Figure rendering for the report path: one PNG per delimited output.

Every function reads the already-written CSV rather than live arrays, so
a plot can always be regenerated from the run directory alone.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

# explicit format: staged output paths carry a .part suffix while writing.
# fixed metadata keeps PNG bytes reproducible across reruns of the same data
_SAVEKW = {"dpi": 130, "format": "png", "metadata": {"Software": "btc-sim"}}

PHASE_COLORS = {
    "SS": "#4878cf", "BS1": "#6acc65", "BS2": "#2e7d32",
    "BTC": "#d65f5f", "CHAOS": "#956cb4",
}


def _read_rows(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [row for row in reader if row]
    return header, rows


def _columns(path) -> dict[str, np.ndarray]:
    header, rows = _read_rows(path)
    out = {}
    for j, name in enumerate(header):
        col = [row[j] for row in rows]
        try:
            out[name] = np.array([float(x) for x in col])
        except ValueError:
            out[name] = np.array(col)
    return out


def plot_series(csv_path, png_path, meta):
    cols = _columns(csv_path)
    fig, ax = plt.subplots(figsize=(7.0, 3.4))
    t = cols["t"]
    for name, style in (("s_z", "-"), ("n", "--")):
        if name in cols:
            ax.plot(t, cols[name], style, lw=1.1, label=name)
    ax.set_xlabel("t")
    ax.set_ylabel("per-site expectation")
    ax.legend(frameon=False, loc="upper right")
    fig.tight_layout()
    fig.savefig(png_path, **_SAVEKW)
    plt.close(fig)


def plot_scan(csv_path, png_path, meta):
    header, rows = _read_rows(csv_path)
    v1 = np.array([float(r[0]) for r in rows])
    v2 = np.array([float(r[1]) for r in rows])
    labels = [r[2].rstrip("?") for r in rows]
    fig, ax = plt.subplots(figsize=(5.4, 4.6))
    for name, color in PHASE_COLORS.items():
        mask = np.array([lab == name for lab in labels])
        if mask.any():
            ax.scatter(v1[mask], v2[mask], s=9, marker="s", color=color,
                       label=name, linewidths=0)
    ax.set_xlabel(meta.get("param1", "param1"))
    ax.set_ylabel(meta.get("param2", "param2"))
    ax.legend(frameon=False, markerscale=2.0, fontsize=8)
    fig.tight_layout()
    fig.savefig(png_path, **_SAVEKW)
    plt.close(fig)


def plot_spectrum(csv_path, png_path, meta):
    cols = _columns(csv_path)
    fig, ax = plt.subplots(figsize=(5.2, 4.4))
    branch = cols["branch"]
    for name, color, marker in (("commensurate", "#d65f5f", "o"),
                                ("incommensurate", "#4878cf", "D"),
                                ("other", "#888888", "x")):
        mask = branch == name
        if mask.any():
            ax.scatter(cols["re"][mask], cols["im"][mask], s=26,
                       color=color, marker=marker, label=name)
    omega = meta.get("omega")
    if omega and not math.isnan(omega):
        for k in (-2, -1, 1, 2):
            ax.axhline(k * omega, color="#cccccc", lw=0.6, zorder=0)
    ax.axvline(0.0, color="#cccccc", lw=0.6, zorder=0)
    ax.set_xlabel("Re $\\lambda$")
    ax.set_ylabel("Im $\\lambda$")
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(png_path, **_SAVEKW)
    plt.close(fig)


def plot_correlation(csv_path, png_path, meta):
    cols = _columns(csv_path)
    t = cols["t"]
    fig, ax = plt.subplots(figsize=(7.0, 3.4))
    ax.plot(t, cols["re_G"], lw=1.1, label="Re G(t)")
    if all(k in meta for k in ("amplitude", "kappa", "omega", "phi")):
        fit = (meta["amplitude"] * np.exp(-meta["kappa"] * t)
               * np.cos(meta["omega"] * t + meta["phi"]))
        ax.plot(t, fit, "--", lw=1.0, label="damped-cosine fit")
    ax.set_xlabel("t")
    ax.set_ylabel("G(t)")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(png_path, **_SAVEKW)
    plt.close(fig)


def plot_fluctuation(csv_path, png_path, meta):
    cols = _columns(csv_path)
    fig, ax = plt.subplots(figsize=(5.2, 3.8))
    for delta in sorted(set(cols["detuning"])):
        mask = cols["detuning"] == delta
        order = np.argsort(cols["N"][mask])
        ax.plot(cols["N"][mask][order], cols["f_squared"][mask][order],
                "o-", label=f"detuning {delta:g}")
    ax.set_xlabel("N")
    ax.set_ylabel("$F^2$")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(png_path, **_SAVEKW)
    plt.close(fig)


def plot_tails(csv_path, png_path, meta):
    cols = _columns(csv_path)
    profiles = sorted(set(cols["profile"]))
    fig, axes = plt.subplots(1, len(profiles), figsize=(9.4, 3.6),
                             squeeze=False)
    for ax, profile in zip(axes[0], profiles):
        mask_p = cols["profile"] == profile
        for n in sorted(set(cols["N"][mask_p].astype(int))):
            mask = mask_p & (cols["N"] == n)
            order = np.argsort(cols["alpha"][mask])
            ax.plot(cols["alpha"][mask][order], cols["c_off"][mask][order],
                    "o-", ms=3.5, label=f"N={n}")
        ax.set_xlabel("interaction exponent")
        ax.set_title(profile, fontsize=10)
        ax.legend(frameon=False, fontsize=8)
    axes[0][0].set_ylabel("$C_{off}$")
    fig.tight_layout()
    fig.savefig(png_path, **_SAVEKW)
    plt.close(fig)


def plot_collapse(csv_path, png_path, meta):
    cols = _columns(csv_path)
    alpha_c = meta.get("alpha_c", math.nan)
    zeta = meta.get("zeta", math.nan)
    nu = meta.get("nu", math.nan)
    fig, axes = plt.subplots(1, 2, figsize=(9.0, 3.6))
    for n in sorted(set(cols["N"].astype(int))):
        mask = cols["N"] == n
        a = cols["alpha"][mask]
        c = cols["c_off"][mask]
        order = np.argsort(a)
        axes[0].plot(a[order], c[order], "o-", ms=3.5, label=f"N={n}")
        if not math.isnan(alpha_c):
            x = (a[order] - alpha_c) * n ** (1.0 / nu)
            y = c[order] / n ** (zeta / nu)
            axes[1].plot(x, y, "o", ms=3.5)
    axes[0].set_xlabel("interaction exponent")
    axes[0].set_ylabel("$C_{off}$")
    axes[0].legend(frameon=False, fontsize=8)
    axes[1].set_xlabel("$N^{1/\\nu}(\\alpha-\\alpha_c)$")
    axes[1].set_ylabel("$C_{off}\\,N^{-\\zeta/\\nu}$")
    fig.tight_layout()
    fig.savefig(png_path, **_SAVEKW)
    plt.close(fig)


def plot_lifetime(csv_path, png_path, meta):
    cols = _columns(csv_path)
    fig, ax = plt.subplots(figsize=(5.4, 3.8))
    finite = np.isfinite(cols["tau"])
    for n in sorted(set(cols["N"].astype(int))):
        mask = (cols["N"] == n) & finite
        order = np.argsort(cols["alpha"][mask])
        ax.plot(cols["alpha"][mask][order], cols["tau"][mask][order],
                "o-", label=f"N={n}")
    ax.set_xlabel("interaction exponent")
    ax.set_ylabel("oscillation lifetime")
    ax.set_yscale("log")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(png_path, **_SAVEKW)
    plt.close(fig)


def plot_ensemble(csv_path, png_path, meta):
    cols = _columns(csv_path)
    t = cols["t"]
    fig, ax = plt.subplots(figsize=(7.0, 3.4))
    for name, color in (("s_z", "#d65f5f"), ("n", "#4878cf")):
        mean_key, err_key = f"{name}_mean", f"{name}_stderr"
        if mean_key not in cols:
            continue
        mean = cols[mean_key]
        ax.plot(t, mean, color=color, lw=1.1, label=name)
        if err_key in cols and np.all(np.isfinite(cols[err_key])):
            band = 2 * cols[err_key]
            ax.fill_between(t, mean - band, mean + band, color=color,
                            alpha=0.25, linewidth=0)
    ax.set_xlabel("t")
    ax.set_ylabel("ensemble mean (2 s.e. band)")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(png_path, **_SAVEKW)
    plt.close(fig)


_RENDERERS = {
    "series": plot_series,
    "scan": plot_scan,
    "spectrum": plot_spectrum,
    "correlation": plot_correlation,
    "fluctuation": plot_fluctuation,
    "tails": plot_tails,
    "collapse": plot_collapse,
    "lifetime": plot_lifetime,
    "ensemble": plot_ensemble,
}


def render(kind: str, csv_path, png_path, meta: dict | None = None):
    if kind not in _RENDERERS:
        raise ValueError(f"no renderer for {kind!r}")
    _RENDERERS[kind](Path(csv_path), Path(png_path), meta or {})
