"""Deterministic SVG renderings of flight logs and training curves."""

from __future__ import annotations

import io

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

SVG_SALT = "octorl"


class EmptyPlotError(ValueError):
    pass


def _svg(fig) -> bytes:
    buf = io.BytesIO()
    with matplotlib.rc_context({"svg.hashsalt": SVG_SALT, "svg.fonttype": "none"}):
        fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    return buf.getvalue()


def chords(header: list[str], rows: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """Start and end of each segment's reference chord, in flight order."""
    col = {c: i for i, c in enumerate(header)}
    seg = rows[:, col["segment"]].astype(int)
    wps = rows[:, [col["wp_x"], col["wp_y"], col["wp_z"]]]
    out = []
    prev = None
    for k in np.unique(seg):
        first = int(np.flatnonzero(seg == k)[0])
        wp = wps[first]
        # the first chord starts where the vehicle was released
        start = rows[first, [col["x"], col["y"], col["z"]]] if prev is None else prev
        out.append((start, wp))
        prev = wp
    return out


def plot_flight(header: list[str], rows: np.ndarray, title: str = "") -> bytes:
    """Top-down view: flown path plus one ``reference-segment-k`` line per chord."""
    rows = np.asarray(rows, dtype=float)
    if rows.size == 0:
        raise EmptyPlotError("flight log has no rows")
    missing = {"x", "y", "segment", "wp_x", "wp_y", "wp_z"} - set(header)
    if missing:
        raise ValueError(f"flight log lacks columns {sorted(missing)}")
    col = {c: i for i, c in enumerate(header)}
    fig, ax = plt.subplots(figsize=(6, 6))
    for k, (a, b) in enumerate(chords(header, rows)):
        ax.plot([a[1], b[1]], [a[0], b[0]], "--", color="0.5", lw=1, gid=f"reference-segment-{k}")
    ax.plot(rows[:, col["y"]], rows[:, col["x"]], color="C0", lw=1.2, gid="flown-path")
    ax.set_xlabel("east y (m)")
    ax.set_ylabel("north x (m)")
    ax.set_aspect("equal", adjustable="datalim")
    if title:
        ax.set_title(title)
    return _svg(fig)


def plot_curve(header: list[str], rows: np.ndarray, x: str = "episodes",
               y: str = "mean_episode_reward", title: str = "") -> bytes:
    rows = np.asarray(rows, dtype=float)
    if rows.size == 0:
        raise EmptyPlotError("curve has no rows")
    col = {c: i for i, c in enumerate(header)}
    if x not in col or y not in col:
        raise ValueError(f"curve lacks columns {x!r}/{y!r}")
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(rows[:, col[x]], rows[:, col[y]], marker=".", gid="curve")
    ax.set_xlabel(x)
    ax.set_ylabel(y)
    if title:
        ax.set_title(title)
    return _svg(fig)


def plot_bars(labels: list[str], series: dict[str, list[float]], ylabel: str = "mean reward",
              title: str = "") -> bytes:
    """Grouped bars, one group per label and one bar per named series."""
    if not labels or not series:
        raise EmptyPlotError("nothing to plot")
    fig, ax = plt.subplots(figsize=(7, 4))
    width = 0.8 / len(series)
    x = np.arange(len(labels))
    for i, (name, vals) in enumerate(series.items()):
        ax.bar(x + i * width, vals, width, label=name)
    ax.set_xticks(x + 0.4 - width / 2, labels)
    ax.set_ylabel(ylabel)
    ax.legend()
    if title:
        ax.set_title(title)
    return _svg(fig)


def plot_similarity(shifts, sims, title: str = "") -> bytes:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(shifts, sims, marker="o", gid="similarity")
    ax.set_xlabel("shift (deg)")
    ax.set_ylabel("cosine similarity")
    if title:
        ax.set_title(title)
    return _svg(fig)
