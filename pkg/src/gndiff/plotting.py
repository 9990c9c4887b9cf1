"""Static SVG figures of charge and Hamiltonian traces."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

# fixed ids and no timestamp keep the SVG bytes reproducible
_RC = {"svg.hashsalt": "gndiff", "svg.fonttype": "none", "font.size": 8}


def _save(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def plot_charges(path, cols: dict, generators, labels: dict, drift: dict, comm: dict, title: str) -> Path:
    """One panel per tracked charge, annotated with its drift."""
    k = len(generators)
    ncol = min(3, max(k, 1))
    nrow = -(-k // ncol)
    with plt.rc_context(_RC):
        fig, axes = plt.subplots(nrow, ncol, figsize=(3.2 * ncol, 2.4 * nrow), squeeze=False)
        t = cols["t"]
        for ax, R in zip(axes.flat, generators):
            lab = labels[(R.a, R.b)]
            ax.plot(t, cols[lab], lw=1.2)
            tag = "commutes" if comm[lab]["commutes"] else "does not commute"
            ax.set_title(f"{lab} ({R.label}, {tag})")
            ax.set_xlabel("t")
            ax.annotate(f"drift = {drift[lab]:.3g}", xy=(0.03, 0.9), xycoords="axes fraction")
        for ax in list(axes.flat)[k:]:
            ax.set_visible(False)
        fig.suptitle(title)
        fig.tight_layout()
        return _save(fig, Path(path))


def plot_hamiltonian(path, cols: dict, title: str) -> Path:
    with plt.rc_context(_RC):
        fig, (a1, a2) = plt.subplots(1, 2, figsize=(6.4, 2.4))
        a1.plot(cols["t"], cols["H"], lw=1.2)
        a1.set_title("H")
        a2.plot(cols["t"], cols["dH_dt"], lw=1.2)
        a2.set_title("dH/dt")
        for ax in (a1, a2):
            ax.set_xlabel("t")
        fig.suptitle(title)
        fig.tight_layout()
        return _save(fig, Path(path))
