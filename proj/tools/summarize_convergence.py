#!/usr/bin/env python3
"""Recompute convergence aggregates from a smoothdiv output directory.

Reads convergence.csv plus the limit sample files and rebuilds the scaled
means, SEMs, two-sample KS distances, and log-log slopes with numpy. Useful
for eyeballing a batch of runs, and as an independent check of the summary
the binary writes (the numbers should agree to float printing precision).
"""

import argparse
import math
import sys
from pathlib import Path

import numpy as np


def read_table(path: Path) -> dict[str, np.ndarray]:
    rows = []
    header = None
    for line in path.read_text().splitlines():
        if not line or line.startswith("#"):
            continue
        if header is None:
            header = line.split(",")
            continue
        rows.append([float(v) for v in line.split(",")])
    if header is None or not rows:
        sys.exit(f"{path}: no data rows")
    data = np.asarray(rows)
    return {name: data[:, i] for i, name in enumerate(header)}


def read_samples(path: Path) -> np.ndarray:
    values = [
        float(line)
        for line in path.read_text().splitlines()
        if line and not line.startswith("#")
    ]
    return np.asarray(values)


def ks_distance(a: np.ndarray, b: np.ndarray) -> float:
    grid = np.sort(np.concatenate([a, b]))
    fa = np.searchsorted(np.sort(a), grid, side="right") / len(a)
    fb = np.searchsorted(np.sort(b), grid, side="right") / len(b)
    return float(np.max(np.abs(fa - fb)))


def summarize(out_dir: Path) -> None:
    table = read_table(out_dir / "convergence.csv")
    ns = np.unique(table["n"]).astype(int)

    limits = {}
    for stat in ("tv", "chi2"):
        sample_file = out_dir / f"limit_{stat}.txt"
        if sample_file.exists():
            limits[stat] = read_samples(sample_file)

    print(f"{'n':>8} {'stat':>5} {'scaled mean':>14} {'sem':>12} {'ks':>8}")
    log_means = {"tv": [], "chi2": []}
    for n in ns:
        mask = table["n"] == n
        for stat, power in (("tv", 0.5), ("chi2", 1.0)):
            col = f"stat_{stat}"
            if col not in table:
                continue
            raw = table[col][mask]
            scaled = float(n) ** power * raw
            mean = scaled.mean()
            sem = scaled.std(ddof=1) / math.sqrt(len(scaled))
            ks = ks_distance(scaled, limits[stat]) if stat in limits else float("nan")
            log_means[stat].append((math.log(float(n)), math.log(raw.mean())))
            print(f"{n:>8} {stat:>5} {mean:>14.8f} {sem:>12.3e} {ks:>8.4f}")

    for stat, pts in log_means.items():
        if len(pts) >= 2:
            xs, ys = zip(*pts)
            slope = np.polyfit(xs, ys, 1)[0]
            print(f"slope_{stat} = {slope:.4f}")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("out_dir", type=Path, help="directory a convergence run wrote to")
    args = parser.parse_args()
    summarize(args.out_dir)


if __name__ == "__main__":
    main()
