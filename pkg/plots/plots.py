#!/usr/bin/env python3
"""Render figures from an ffdrive output tree.

Reads only the documented CSV/JSON files; never imports the simulation
package.  Figure ids:

    populations      eigenstate-population histograms at start/middle/end,
                     one row per available run (bare above, driven below)
    density_overlay  final |psi|^2 against the target eigenstate density
    phase_space      trajectory snapshots with the energy-shell curve
    sidebands        quantum populations (bars) vs semiclassical weights (dots)
    animation        one PNG per population frame, assembled in index order

Usage: plots <figure-id> --input-dir <dir> --out <file-or-dir>
"""

from __future__ import annotations

import argparse
import re
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

FIGURE_IDS = ("populations", "density_overlay", "phase_space", "sidebands", "animation")


class SchemaError(ValueError):
    """An input file does not match its documented schema."""


def read_csv(path: Path, columns: tuple[str, ...]) -> dict[str, np.ndarray]:
    if not path.exists():
        raise SchemaError(f"missing input file: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
    for name in columns:
        if name not in header:
            raise SchemaError(f"{path.name}: expected column {name!r}, found {header}")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return {name: data[:, header.index(name)] for name in columns}


# --- data preparation --------------------------------------------------------


def population_snapshots(path: Path, count: int = 3) -> list[tuple[float, np.ndarray, np.ndarray]]:
    """(t, k, p) triples at `count` evenly spaced snapshot times."""
    table = read_csv(path, ("t", "k", "p"))
    times = np.unique(table["t"])
    picks = times[np.linspace(0, len(times) - 1, count).astype(int)]
    out = []
    for t in picks:
        sel = table["t"] == t
        order = np.argsort(table["k"][sel])
        out.append((float(t), table["k"][sel][order], table["p"][sel][order]))
    return out


def frame_files(input_dir: Path) -> list[Path]:
    """frame_{j}.csv files in index order."""
    found = []
    for path in input_dir.glob("frame_*.csv"):
        match = re.fullmatch(r"frame_(\d+)\.csv", path.name)
        if match:
            found.append((int(match.group(1)), path))
    if not found:
        raise SchemaError(f"no frame_*.csv files in {input_dir}")
    return [path for _, path in sorted(found)]


def latest_eigvec(input_dir: Path) -> tuple[Path, int]:
    """Eigenvector dump at the latest available time; returns (path, k)."""
    best = None
    for path in input_dir.glob("eigvec_t*_k*.csv"):
        match = re.fullmatch(r"eigvec_t([0-9.eE+-]+)_k(\d+)\.csv", path.name)
        if match:
            key = (float(match.group(1)), int(match.group(2)))
            if best is None or key[0] > best[0][0]:
                best = (key, path)
    if best is None:
        raise SchemaError(f"no eigvec_t*_k*.csv files in {input_dir}")
    return best[1], best[0][1]


def snapshot_times_from(input_dir: Path, stem: str) -> list[float]:
    times = []
    for path in input_dir.glob(f"{stem}_t*.csv"):
        match = re.fullmatch(rf"{stem}_t([0-9.eE+-]+)\.csv", path.name)
        if match:
            times.append(float(match.group(1)))
    if not times:
        raise SchemaError(f"no {stem}_t*.csv files in {input_dir}")
    return sorted(times)


def _tag(t: float) -> str:
    return f"{t:g}"


# --- figures -----------------------------------------------------------------


def render_populations(input_dir: Path, out: Path) -> Path:
    runs = []
    for name, label in (("populations_bare.csv", "bare"), ("populations_ff.csv", "driven")):
        path = input_dir / name
        if path.exists():
            runs.append((label, population_snapshots(path)))
    if not runs:
        raise SchemaError(f"no populations_*.csv in {input_dir}")
    n_cols = len(runs[0][1])
    fig, axes = plt.subplots(
        len(runs), n_cols, figsize=(3.2 * n_cols, 2.6 * len(runs)),
        squeeze=False, sharey=True,
    )
    for row, (label, snaps) in enumerate(runs):
        for col, (t, k, p) in enumerate(snaps):
            ax = axes[row][col]
            ax.bar(k, p, width=0.9, color="firebrick")
            ax.set_title(f"{label}, t = {t:g}")
            ax.set_xlabel("k")
            if col == 0:
                ax.set_ylabel("$p_k$")
            ax.set_ylim(0, 1.05)
    fig.tight_layout()
    fig.savefig(out, dpi=150)
    plt.close(fig)
    return out


def render_density_overlay(input_dir: Path, out: Path) -> Path:
    psi = read_csv(input_dir / "psi_final.csv", ("q", "re", "im", "abs2"))
    vec_path, k = latest_eigvec(input_dir)
    vec = read_csv(vec_path, ("q", "phi"))
    fig, ax = plt.subplots(figsize=(6.4, 3.6))
    ax.plot(psi["q"], psi["abs2"], color="magenta", label=r"$|\psi(q,\tau)|^2$")
    ax.plot(vec["q"], vec["phi"] ** 2, color="steelblue", label=rf"$\phi_{{{k}}}(q,\tau)^2$")
    support = psi["q"][psi["abs2"] > 1e-4 * psi["abs2"].max()]
    ax.set_xlim(support.min() - 1.0, support.max() + 1.0)
    ax.set_xlabel("q")
    ax.set_ylabel("probability density")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out, dpi=150)
    plt.close(fig)
    return out


def render_phase_space(input_dir: Path, out: Path) -> Path:
    times = snapshot_times_from(input_dir, "trajectories")
    fig, axes = plt.subplots(1, len(times), figsize=(3.4 * len(times), 3.2), squeeze=False)
    for ax, t in zip(axes[0], times):
        traj = read_csv(input_dir / f"trajectories_t{_tag(t)}.csv", ("i", "q", "p"))
        shell = read_csv(input_dir / f"shell_t{_tag(t)}.csv", ("q", "pbar"))
        on = shell["pbar"] > 0
        ax.plot(shell["q"][on], shell["pbar"][on], "k-", lw=1.2)
        ax.plot(shell["q"][on], -shell["pbar"][on], "k-", lw=1.2)
        ax.plot(traj["q"], traj["p"], ".", color="tab:orange", ms=3)
        ax.set_title(f"t = {t:g}")
        ax.set_xlabel("q")
    axes[0][0].set_ylabel("p")
    fig.tight_layout()
    fig.savefig(out, dpi=150)
    plt.close(fig)
    return out


def render_sidebands(input_dir: Path, out: Path) -> Path:
    table = read_csv(
        input_dir / "sidebands.csv",
        ("k", "l", "w_semiclassical", "p_quantum", "abs_diff"),
    )
    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    ax.bar(table["k"], table["p_quantum"], width=0.8, color="firebrick", label="quantum $p_k$")
    ax.plot(
        table["k"], table["w_semiclassical"], "o", color="royalblue",
        ms=7, label="semiclassical $w_{k-n}$",
    )
    ax.set_xlabel("k")
    ax.set_ylabel("final weight")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out, dpi=150)
    plt.close(fig)
    return out


def render_animation(input_dir: Path, out_dir: Path) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    rendered = []
    paths = frame_files(input_dir)
    # fixed axes across frames so the sequence reads as an animation
    peak = 0.0
    k_max = 1.0
    for path in paths:
        frame = read_csv(path, ("t", "k", "p"))
        peak = max(peak, frame["p"].max())
        k_max = max(k_max, frame["k"].max())
    for index, path in enumerate(paths):
        frame = read_csv(path, ("t", "k", "p"))
        fig, ax = plt.subplots(figsize=(4.6, 3.2))
        ax.bar(frame["k"], frame["p"], width=0.9, color="firebrick")
        ax.set_xlim(-0.5, k_max + 0.5)
        ax.set_ylim(0.0, 1.05 * peak)
        ax.set_xlabel("k")
        ax.set_ylabel("$p_k$")
        ax.set_title(f"t = {frame['t'][0]:g}")
        fig.tight_layout()
        target = out_dir / f"frame_{index:04d}.png"
        fig.savefig(target, dpi=110)
        plt.close(fig)
        rendered.append(target)
    return rendered


def render(figure_id: str, input_dir: Path, out: Path):
    if figure_id == "populations":
        return render_populations(input_dir, out)
    if figure_id == "density_overlay":
        return render_density_overlay(input_dir, out)
    if figure_id == "phase_space":
        return render_phase_space(input_dir, out)
    if figure_id == "sidebands":
        return render_sidebands(input_dir, out)
    if figure_id == "animation":
        return render_animation(input_dir, out)
    raise ValueError(f"unknown figure id {figure_id!r}; pick from {FIGURE_IDS}")


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="plots", description="Render figures from an ffdrive output tree"
    )
    parser.add_argument("figure_id", choices=FIGURE_IDS)
    parser.add_argument("--input-dir", required=True)
    parser.add_argument(
        "--out", required=True,
        help="output image path (a directory for the animation sequence)",
    )
    args = parser.parse_args(argv)
    try:
        result = render(args.figure_id, Path(args.input_dir), Path(args.out))
    except SchemaError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2
    if isinstance(result, list):
        print(f"rendered {len(result)} frames into {args.out}")
    else:
        print(f"rendered {result}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
