"""SVG figures from the CSV outputs of the CLI.

Recognized schemas (by header): sweep rows, oracle slack rows and
per-batch transcripts. Output is byte-stable: fixed hash salt, no date.
"""
import csv
import os
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .errors import SchemaMismatch  # noqa: E402
from .scheduler import memory_bound_bits  # noqa: E402

plt.rcParams["svg.hashsalt"] = "membandit"

SWEEP_COLUMNS = {"T", "K", "S", "regret", "B", "peak_bits", "status"}
SLACK_COLUMNS = {"delta", "n", "slack"}
TRANSCRIPT_COLUMNS = {"batch", "t_start", "t_end", "state_bits"}


def _save(fig, path):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def _read(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames
        rows = list(reader)
    return header, rows


def _stem(path):
    return os.path.splitext(os.path.basename(path))[0]


def empty_figure(path, title=""):
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.set_title(title)
    return _save(fig, path)


def plot_csv(path, out_dir):
    """Render every figure the CSV's schema supports; returns written paths."""
    header, rows = _read(path)
    if header is None:
        return [empty_figure(os.path.join(out_dir, f"{_stem(path)}.svg"), _stem(path))]
    cols = set(header)
    if SWEEP_COLUMNS <= cols:
        ok = [r for r in rows if r["status"] == "ok"]
        return [plot_regret(ok, os.path.join(out_dir, "regret_vs_T.svg")),
                plot_batches(ok, os.path.join(out_dir, "batches_vs_S.svg")),
                plot_bits(ok, os.path.join(out_dir, "bits_vs_S.svg"))]
    if SLACK_COLUMNS <= cols:
        return [plot_slack(rows, os.path.join(out_dir, "slack.svg"))]
    if TRANSCRIPT_COLUMNS <= cols:
        return [plot_transcript(rows, os.path.join(out_dir, f"{_stem(path)}_state_bits.svg"))]
    raise SchemaMismatch(f"{path}: unrecognized columns {header}")


def _group_mean(rows, key, x, y):
    groups = defaultdict(lambda: defaultdict(list))
    for r in rows:
        groups[key(r)][float(r[x])].append(float(r[y]))
    return {g: (np.array(sorted(d)), np.array([np.mean(d[v]) for v in sorted(d)]))
            for g, d in sorted(groups.items())}


def plot_regret(rows, path):
    fig, ax = plt.subplots(figsize=(5, 4))
    for K, (xs, ys) in _group_mean(rows, lambda r: int(r["K"]), "T", "regret").items():
        ax.plot(xs, ys, "o-", label=f"K={K}")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("horizon T")
    ax.set_ylabel("mean regret")
    if rows:
        ax.legend()
    return _save(fig, path)


def plot_batches(rows, path):
    fig, ax = plt.subplots(figsize=(5, 4))
    key = lambda r: (int(r["K"]), int(r["T"]))  # noqa: E731
    for (K, T), (xs, ys) in _group_mean(rows, key, "S", "B").items():
        ax.plot(xs, ys, "o-", label=f"K={K}, T={T}")
    ax.set_xlabel("block size S")
    ax.set_ylabel("batches B")
    if rows:
        ax.legend(fontsize="small")
    return _save(fig, path)


def plot_bits(rows, path):
    fig, ax = plt.subplots(figsize=(5, 4))
    key = lambda r: (int(r["K"]), int(r["T"]))  # noqa: E731
    for (K, T), (xs, ys) in _group_mean(rows, key, "S", "peak_bits").items():
        line, = ax.plot(xs, ys, "o-", label=f"K={K}, T={T}")
        ax.plot(xs, [memory_bound_bits(int(s), T) for s in xs], "--", color=line.get_color(),
                label=f"bound, T={T}")
    ax.set_xlabel("block size S")
    ax.set_ylabel("peak state bits")
    if rows:
        ax.legend(fontsize="small")
    return _save(fig, path)


def plot_slack(rows, path):
    fig, ax = plt.subplots(figsize=(5, 4))
    by_delta = defaultdict(list)
    for r in rows:
        s = float(r["slack"])
        if np.isfinite(s):
            by_delta[float(r["delta"])].append((int(r["n"]), s))
    for d, pts in sorted(by_delta.items()):
        pts = np.array(pts)
        ax.scatter(pts[:, 0], pts[:, 1], s=6, alpha=0.5, label=f"gap={d}")
    ax.axhline(1.0, color="k", lw=0.8)
    ax.set_xlabel("budget n")
    ax.set_ylabel("probability / bound")
    if by_delta:
        ax.legend()
    return _save(fig, path)


def plot_transcript(rows, path):
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.step([int(r["t_end"]) for r in rows], [int(r["state_bits"]) for r in rows], where="post")
    ax.set_xlabel("round")
    ax.set_ylabel("boundary state bits")
    return _save(fig, path)
