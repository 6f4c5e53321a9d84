#!/usr/bin/env python3
"""Render figures from denoise-lab CSV outputs.

Developer tooling: the CLI emits data files only; this script draws them.

  plot_results.py sweep results.csv -o fig.png
      Mean risk vs the swept parameter, one curve per denoiser, the theory
      prediction dashed where present. Works for `simulate` and `compare`
      outputs.

  plot_results.py phase phase.csv -o fig.png
      Region map over (kappa, c_z) from `phase-diagram` output.
"""

import argparse
import csv
import sys
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def read_rows(path):
    with open(path, newline="") as handle:
        rows = [r for r in csv.DictReader(line for line in handle if not line.startswith("#"))]
    if not rows:
        sys.exit(f"{path}: no data rows")
    return rows


def plot_sweep(args):
    rows = read_rows(args.csv)
    series = defaultdict(list)
    theory = defaultdict(list)
    for row in rows:
        if row["denoiser"] == "failed" or not row["mean_error"]:
            continue
        x = float(row["sweep_key"])
        series[row["denoiser"]].append(
            (x, float(row["mean_error"]), float(row["std_error"]))
        )
        if row.get("theory_error"):
            theory[row["denoiser"]].append((x, float(row["theory_error"])))

    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for name, points in sorted(series.items()):
        points.sort()
        xs, means, stds = zip(*points)
        ax.errorbar(xs, means, yerr=stds, marker="x", linestyle="none", label=name, capsize=2)
        if theory[name]:
            txs, tys = zip(*sorted(theory[name]))
            ax.plot(txs, tys, linestyle="--", alpha=0.8)
    if args.logx:
        ax.set_xscale("log")
    ax.set_xlabel(args.xlabel)
    ax.set_ylabel("risk")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(args.out, dpi=160)
    print(f"wrote {args.out}")


def plot_phase(args):
    rows = read_rows(args.csv)
    colors = {"I": "tab:blue", "II": "tab:green", "III": "tab:orange"}
    fig, ax = plt.subplots(figsize=(5.6, 4.4))
    seen = set()
    for row in rows:
        region = row["region"]
        label = f"region {region}" if region not in seen else None
        seen.add(region)
        ax.scatter(
            float(row["kappa"]),
            float(row["c_z"]),
            c=colors.get(region, "gray"),
            s=18,
            marker="s",
            label=label,
        )
    ax.set_xlabel("kappa")
    ax.set_ylabel("c_z")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(args.out, dpi=160)
    print(f"wrote {args.out}")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    sub = parser.add_subparsers(dest="cmd", required=True)

    sweep = sub.add_parser("sweep", help="risk curves from a result table")
    sweep.add_argument("csv")
    sweep.add_argument("-o", "--out", default="sweep.png")
    sweep.add_argument("--xlabel", default="sweep value")
    sweep.add_argument("--logx", action="store_true")
    sweep.set_defaults(func=plot_sweep)

    phase = sub.add_parser("phase", help="region map from a phase-diagram table")
    phase.add_argument("csv")
    phase.add_argument("-o", "--out", default="phase.png")
    phase.set_defaults(func=plot_phase)

    args = parser.parse_args()
    args.func(args)


if __name__ == "__main__":
    main()
