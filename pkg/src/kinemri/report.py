"""Render figures and a summary table from a completed run directory.

Reads the artifacts written by :func:`kinemri.pipeline.run` and produces
PNG figures (sampling pattern, per-frame metric curves, image panels,
deformation field magnitudes) next to a delimited ``summary.csv``.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .container import read_array
from .metrics import MetricsReport


def _save(fig, path: Path, paths: list[Path]) -> None:
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    paths.append(path)


def render_report(run_dir: str | Path, out_dir: str | Path | None = None) -> list[Path]:
    """Generate figures and the summary table; returns the written paths."""
    run_dir = Path(run_dir)
    out = Path(out_dir) if out_dir is not None else run_dir
    out.mkdir(parents=True, exist_ok=True)
    report = MetricsReport.from_dict(json.loads((run_dir / "metrics.json").read_text()))
    written: list[Path] = []

    mask, _ = read_array(run_dir / "mask.arr")
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.imshow(mask, aspect="auto", cmap="gray", interpolation="nearest")
    ax.set_xlabel("frame")
    ax.set_ylabel("phase-encode line")
    ax.set_title(f"sampling pattern ({int(mask[:, 0].sum())} lines/frame)")
    _save(fig, out / "mask.png", written)

    frames = [row["frame"] for row in report.per_frame]
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.2))
    for ax, key in zip(axes, ("ssim", "psnr", "nmse")):
        values = [row[key] for row in report.per_frame]
        ax.plot(frames, values, marker="o", ms=3)
        ax.axhline(report.phase_averaged[key], ls="--", lw=0.8, color="gray")
        ax.set_xlabel("frame")
        ax.set_title(key.upper())
    fig.suptitle("registered vs reference, per frame")
    fig.tight_layout()
    _save(fig, out / "metrics.png", written)

    recon, _ = read_array(run_dir / "recon.arr")
    warped, _ = read_array(run_dir / "warped.arr")
    mid = recon.shape[2] // 2
    fig, axes = plt.subplots(1, 3, figsize=(10, 3.6))
    for ax, (img, title) in zip(
        axes,
        [
            (np.abs(recon[:, :, mid]), f"reconstruction (frame {mid})"),
            (warped[:, :, mid], f"registered (frame {mid})"),
            (np.abs(recon[:, :, mid]) - warped[:, :, mid], "difference"),
        ],
    ):
        im = ax.imshow(img, cmap="gray")
        ax.set_title(title, fontsize=10)
        ax.axis("off")
        fig.colorbar(im, ax=ax, fraction=0.046)
    fig.tight_layout()
    _save(fig, out / "images.png", written)

    fields, _ = read_array(run_dir / "fields.arr")
    magnitude = np.sqrt(fields[0] ** 2 + fields[1] ** 2)
    n_t = magnitude.shape[2]
    cols = min(n_t, 6)
    rows = int(np.ceil(n_t / cols))
    fig, axes = plt.subplots(rows, cols, figsize=(2.2 * cols, 2.2 * rows), squeeze=False)
    vmax = float(magnitude.max()) or 1.0
    for t in range(rows * cols):
        ax = axes[t // cols][t % cols]
        if t < n_t:
            ax.imshow(magnitude[:, :, t], cmap="viridis", vmin=0, vmax=vmax)
            ax.set_title(f"|u| frame {t}", fontsize=8)
        ax.axis("off")
    fig.tight_layout()
    _save(fig, out / "fields.png", written)

    summary_path = out / "summary.csv"
    with open(summary_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["quantity", "value"])
        for key, value in sorted(report.phase_averaged.items()):
            writer.writerow([f"phase_averaged_{key}", value])
        for key, value in sorted(report.losses.items()):
            writer.writerow([f"loss_{key}", value])
        writer.writerow(["lines_per_frame", int(mask[:, 0].sum())])
        writer.writerow(["mask_sha256", report.extras.get("mask_sha256", "")])
    written.append(summary_path)
    return written
