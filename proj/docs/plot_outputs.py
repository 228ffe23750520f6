"""Plots execlab CSV outputs.

    python docs/plot_outputs.py projection OUT/projection.csv [OTHER/projection.csv ...]
    python docs/plot_outputs.py heatmap OUT/heatmap.csv
    python docs/plot_outputs.py hcurves OUT/h_curves.csv

Figures are written next to the first input as PNG.
"""

import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402


def projection(paths):
    fig, axes = plt.subplots(1, 3, figsize=(13, 3.5))
    for p in paths:
        df = pd.read_csv(p)
        label = Path(p).parent.name
        axes[0].plot(df["t"], df["h1_tilde"], label=label)
        axes[1].plot(df["t"], df["h2_tilde"], label=label)
        axes[2].plot(df["t"], df["r2"], label=label)
    for ax, title in zip(axes, ["h1~(t)", "h2~(t)", "R2(t)"]):
        ax.set_title(title)
        ax.set_xlabel("t")
    axes[0].legend()
    return fig


def heatmap(paths):
    df = pd.read_csv(paths[0], index_col=0)
    fig, ax = plt.subplots(figsize=(6, 3.5))
    im = ax.imshow(df.values.astype(float), cmap="viridis")
    ax.set_xticks(range(df.shape[1]), df.columns)
    ax.set_yticks(range(df.shape[0]), df.index)
    ax.set_xlabel("phi")
    ax.set_ylabel("A")
    for i in range(df.shape[0]):
        for j in range(df.shape[1]):
            ax.text(j, i, df.iat[i, j], ha="center", va="center", color="w")
    fig.colorbar(im, label="steps to 90% executed")
    return fig


def hcurves(paths):
    df = pd.read_csv(paths[0])
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(df["t"], df["h2"])
    ax.set_xlabel("t")
    ax.set_ylabel("h2")
    return fig


def main():
    kind, paths = sys.argv[1], sys.argv[2:]
    fig = {"projection": projection, "heatmap": heatmap, "hcurves": hcurves}[kind](paths)
    fig.tight_layout()
    out = Path(paths[0]).with_suffix(".png")
    fig.savefig(out, dpi=120)
    print(out)


if __name__ == "__main__":
    main()
