"""Render inferred type graphs as figures next to the delimited report."""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
from matplotlib.patches import Circle, FancyArrowPatch

from .abstract import TypeTriple, gc_canonicalize, is_node


def _layout(t: TypeTriple) -> dict[object, tuple[float, float]]:
    """Variables on the left column, nodes on a circle, sinks below."""
    pos: dict[object, tuple[float, float]] = {}
    for i, x in enumerate(sorted(t.env)):
        pos[("var", x)] = (0.0, -1.6 * i)
    nodes = sorted(t.heap)
    r = max(1.8, 0.75 * len(nodes))
    for i, n in enumerate(nodes):
        a = 2 * math.pi * i / max(len(nodes), 1)
        pos[("node", n)] = (4.0 + r * math.cos(a), -1.0 + r * math.sin(a))
    sinks = sorted(
        {v.label for v in t.env.values() if not is_node(v)}
        | {w.label for e in t.heap.values() for w in e.values() if not is_node(w)}
    )
    for i, s in enumerate(sinks):
        pos[("sink", s)] = (4.0 + 2.2 * i, -1.0 - r - 2.0)
    return pos


def _target_key(v) -> tuple:
    return ("node", v) if is_node(v) else ("sink", v.label)


def render_type(t: TypeTriple, title: str, out_path: Path) -> None:
    t = gc_canonicalize(t)
    pos = _layout(t)
    fig, ax = plt.subplots(figsize=(7.5, 6.0))
    ax.set_title(title, fontsize=10)
    ax.axis("off")

    for key, (x, y) in pos.items():
        kind, label = key
        if kind == "var":
            ax.text(x, y, str(label), ha="center", va="center", fontsize=9,
                    bbox=dict(boxstyle="round", fc="#e8f0fe", ec="#4a6da7"))
        elif kind == "sink":
            ax.text(x, y, str(label), ha="center", va="center", fontsize=9,
                    bbox=dict(boxstyle="square", fc="#f5f5f5", ec="#888888"))
        else:
            ax.add_patch(Circle((x, y), 0.42, fill=True, fc="#fff7e0", ec="#b08020"))
            if label in t.strong:
                ax.add_patch(Circle((x, y), 0.52, fill=False, ec="#b08020"))
            ax.text(x, y, f"n{label}", ha="center", va="center", fontsize=9)

    def arrow(src, dst, label, rad):
        if src == dst:
            x, y = pos[src]
            ax.annotate(
                label,
                xy=(x, y + 0.55),
                xytext=(x, y + 1.35),
                ha="center",
                fontsize=8,
                arrowprops=dict(arrowstyle="->", color="#555555",
                                connectionstyle="arc3,rad=0.9"),
            )
            return
        patch = FancyArrowPatch(
            pos[src], pos[dst], arrowstyle="->", mutation_scale=12,
            color="#555555", shrinkA=14, shrinkB=14,
            connectionstyle=f"arc3,rad={rad}",
        )
        ax.add_patch(patch)
        (x1, y1), (x2, y2) = pos[src], pos[dst]
        ax.text((x1 + x2) / 2, (y1 + y2) / 2 + rad, label, fontsize=8, color="#333333")

    for i, x in enumerate(sorted(t.env)):
        v = t.env[x]
        arrow(("var", x), _target_key(v), "", 0.05 * (i % 3))
    for n in sorted(t.heap):
        for j, f in enumerate(sorted(t.heap[n])):
            arrow(("node", n), _target_key(t.heap[n][f]), f, 0.12 + 0.1 * j)

    xs = [x for x, _ in pos.values()]
    ys = [y for _, y in pos.values()]
    if xs:
        ax.set_xlim(min(xs) - 1.5, max(xs) + 1.5)
        ax.set_ylim(min(ys) - 1.5, max(ys) + 2.0)
    fig.savefig(out_path, dpi=110, bbox_inches="tight")
    plt.close(fig)
