"""Figure rendering for the command-line report paths.

All functions write PNG files next to the delimited outputs; rendering
uses the non-interactive Agg backend so the package works headless.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "save_profile_figure",
    "save_state_figure",
    "save_diagnostics_figure",
]

_DPI = 150


def save_profile_figure(path: str, xs, b, profile) -> None:
    """Plot the steady boundary layer with its far field and width."""
    b = np.asarray(b)
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    for i in range(b.shape[1]):
        ax.plot(xs, b[:, i], label=f"$B_{{{i + 1}}}$")
    for i, value in enumerate(profile.far_field):
        ax.axhline(value, color="gray", lw=0.6, ls=":")
    ax.axvline(profile.layer_width, color="gray", lw=0.8, ls="--")
    ax.text(
        profile.layer_width,
        ax.get_ylim()[1],
        " layer width",
        va="top",
        fontsize=8,
        color="gray",
    )
    ax.set_xlabel("x")
    ax.set_ylabel("B(x)")
    ax.set_title("steady boundary layer")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def save_state_figure(path: str, xs, u, b) -> None:
    """Plot the final state against the steady profile, by component."""
    u = np.asarray(u)
    b = np.asarray(b)
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    colors = plt.rcParams["axes.prop_cycle"].by_key()["color"]
    for i in range(u.shape[1]):
        color = colors[i % len(colors)]
        ax.plot(xs, u[:, i], color=color, label=f"$u_{{{i + 1}}}$")
        ax.plot(xs, b[:, i], color=color, lw=0.8, ls="--")
    ax.set_xlabel("x")
    ax.set_ylabel("u(x)")
    ax.set_title("final state (solid) vs steady profile (dashed)")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def save_diagnostics_figure(path: str, series) -> None:
    """Render the diagnostics of one march as a four-panel figure."""
    ts = series.times
    fig, axes = plt.subplots(2, 2, figsize=(10.0, 7.0))

    ax = axes[0, 0]
    sup = np.array([s.sup for s in series.samples])
    ax.semilogy(ts, np.maximum(sup, 1e-300), label="sup |u - B|")
    ax.semilogy(
        ts, np.maximum(series.sup_discrete, 1e-300), label="sup |u - B_h|"
    )
    if series.steady_floor > 0.0:
        ax.axhline(series.steady_floor, color="gray", lw=0.8, ls="--", label="floor")
    ax.set_xlabel("t")
    ax.set_title("sup-norm decay")
    ax.legend(fontsize=8)

    ax = axes[0, 1]
    for name in ("l2", "h1", "h2"):
        vals = np.array([getattr(s, name) for s in series.samples])
        ax.semilogy(ts, np.maximum(vals, 1e-300), label=name)
    ax.set_xlabel("t")
    ax.set_title("Sobolev norms of u - B")
    ax.legend(fontsize=8)

    ax = axes[1, 0]
    energy = np.array([s.energy for s in series.samples])
    ax.semilogy(ts, np.maximum(energy, 1e-300), label="energy vs B")
    ax.semilogy(
        ts,
        np.maximum(series.sample_energy_discrete, 1e-300),
        label="energy vs B_h",
    )
    ax.set_xlabel("t")
    ax.set_title("weighted energy")
    ax.legend(fontsize=8)

    ax = axes[1, 1]
    gn = np.array([s.gn_ratio for s in series.samples])
    ax.plot(ts, gn, label="interpolation ratio")
    ax.axhline(1.0, color="gray", lw=0.8, ls="--")
    ax.set_xlabel("t")
    ax.set_ylim(0.0, 1.2)
    ax.set_title("sup vs interpolation bound")
    ax.legend(fontsize=8)

    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
