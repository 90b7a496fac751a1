"""Structured text reports with figures written next to them.

A report file consists of sections::

    [summary]
    key = value
    [table segment_energies]
    k,energy
    1,0.0051
    ...

Figures are saved as ``<report stem>_<name>.png`` in the report's directory.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.10g}"
    return str(v)


@dataclass
class Report:
    """Collects key-value sections, tables and figure callbacks."""

    command: str
    sections: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)
    figures: dict = field(default_factory=dict)

    def add(self, section: str = "summary", **items):
        self.sections.setdefault(section, {}).update(items)

    def table(self, name: str, header, rows):
        self.tables[name] = (list(header), [list(r) for r in rows])

    def figure(self, name: str, draw):
        """Register ``draw(ax_or_fig)``; called only when the report is written."""
        self.figures[name] = draw

    def render(self) -> str:
        out = [f"# {self.command}"]
        for name, items in self.sections.items():
            out.append(f"[{name}]")
            out += [f"{k} = {_fmt(v)}" for k, v in items.items()]
        for name, (header, rows) in self.tables.items():
            out.append(f"[table {name}]")
            out.append(",".join(header))
            out += [",".join(_fmt(v) for v in r) for r in rows]
        return "\n".join(out) + "\n"

    def write(self, path) -> list[Path]:
        """Write the text report and render all figures; returns the files written."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.render())
        written = [path]
        if self.figures:
            import matplotlib
            matplotlib.use("Agg")
            import matplotlib.pyplot as plt
            for name, draw in self.figures.items():
                fig = draw(plt)
                target = path.with_name(f"{path.stem}_{name}.png")
                fig.savefig(target, dpi=120, bbox_inches="tight")
                plt.close(fig)
                written.append(target)
        logger.info("report written to %s (%d figures)", path, len(written) - 1)
        return written


# ------------------------------------------------------------------ figures
def mesh_figure(X, faces, values=None, title="", cmap="viridis", label=""):
    """Draw callback: triangle mesh colored by per-face (or per-vertex) values."""
    X, faces = np.asarray(X), np.asarray(faces)

    def draw(plt):
        fig = plt.figure(figsize=(5.5, 4.5))
        ax = fig.add_subplot(projection="3d")
        surf = ax.plot_trisurf(X[:, 0], X[:, 1], X[:, 2], triangles=faces,
                               cmap=cmap, linewidth=0.2, edgecolor="k", alpha=0.95)
        if values is not None:
            v = np.asarray(values, float)
            if len(v) == len(X):
                v = v[faces].mean(axis=1)
            surf.set_array(v)
            fig.colorbar(surf, ax=ax, shrink=0.6, label=label)
        span = np.ptp(X, axis=0).max() / 2 or 1.0
        c = X.mean(axis=0)
        ax.set_xlim(c[0] - span, c[0] + span)
        ax.set_ylim(c[1] - span, c[1] + span)
        ax.set_zlim(c[2] - span, c[2] + span)
        ax.set_title(title)
        return fig

    return draw


def convergence_figure(history, title="augmented Lagrange iterations"):
    """Draw callback: constraint violation and Lagrangian gradient per outer step."""
    k = [h["outer"] for h in history]
    q = [max(h["constraint_inf"], 1e-300) for h in history]
    g = [max(h["lagrangian_grad"], 1e-300) for h in history]

    def draw(plt):
        fig, ax = plt.subplots(figsize=(5, 3.2))
        ax.semilogy(k, q, "o-", label=r"$\|Q\|_\infty$")
        ax.semilogy(k, g, "s--", label=r"$\|\nabla L\|_2$")
        ax.set_xlabel("outer iteration")
        ax.set_title(title)
        ax.legend(frameon=False)
        return fig

    return draw


def segment_energy_figure(series: dict, title="segment energies"):
    """Draw callback: bar chart of segment energies for one or more paths."""

    def draw(plt):
        fig, ax = plt.subplots(figsize=(5, 3.2))
        n = len(series)
        width = 0.8 / max(n, 1)
        for i, (name, e) in enumerate(series.items()):
            e = np.asarray(e, float)
            ax.bar(np.arange(1, len(e) + 1) + (i - (n - 1) / 2) * width, e, width, label=name)
        ax.set_xlabel("segment k")
        ax.set_ylabel(r"$W[z_{k-1}, z_k]$")
        ax.set_title(title)
        ax.legend(frameon=False)
        return fig

    return draw


def histogram_figure(values, title="", xlabel=""):
    def draw(plt):
        fig, ax = plt.subplots(figsize=(5, 3.2))
        v = np.asarray(values, float)
        ax.hist(v[np.isfinite(v)], bins=30, color="0.4")
        ax.set_xlabel(xlabel)
        ax.set_ylabel("count")
        ax.set_title(title)
        return fig

    return draw
