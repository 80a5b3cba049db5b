"""Regenerate the CSV fixtures under data/fixtures from the sample DGP specs."""

import csv
import subprocess
import sys
from pathlib import Path

import numpy as np


def draw(cli, spec, stem, seed):
    subprocess.run([cli, "draw", "--spec", str(spec), "--seed", str(seed),
                    "--returns-out", f"{stem}_returns.csv", "--factors-out", f"{stem}_factors.csv"],
                   check=True)


def read(path):
    with open(path) as f:
        rows = list(csv.reader(f))
    return rows[0], [r[0] for r in rows[1:]], np.array([[float(x) for x in r[1:]] for r in rows[1:]])


def write(path, header, labels, values):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for lab, row in zip(labels, values):
            w.writerow([lab] + [f"{x:.12g}" for x in row])


def exact_pricing(stem, out_stem, theta2):
    """Shift asset means so that E_T[m_t r_t] = iota holds exactly at (1, theta2)."""
    hr, lab, r = read(f"{stem}_returns.csv")
    hg, _, g = read(f"{stem}_factors.csv")
    gross = 1.0 + r / 100.0
    gd = g / 100.0
    gd = gd - gd.mean(axis=0)
    q2 = gross.T @ gd / len(gross)
    shift = 1.0 - gross.mean(axis=0) - q2 @ theta2
    write(f"{out_stem}_returns.csv", hr, lab, (gross + shift - 1.0) * 100.0)
    write(f"{out_stem}_factors.csv", hg, lab, g)


def main():
    cli, root = sys.argv[1], Path(sys.argv[2])
    out = root / "data" / "fixtures"
    out.mkdir(parents=True, exist_ok=True)
    draw(cli, root / "samples" / "sf1_dgp.json", out / "sf1", 11)
    draw(cli, root / "samples" / "latent_dgp.json", out / "latent100", 12)
    draw(cli, root / "samples" / "latent_long_dgp.json", out / "latent672", 13)
    exact_pricing(out / "sf1", out / "exact", np.array([-60.0]))


if __name__ == "__main__":
    main()
