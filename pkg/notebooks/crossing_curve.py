"""Crossing probability of [0, 2 lam] x [0, lam] by {alpha <= ell} against ell.

    python notebooks/crossing_curve.py [trials]

Compares a fresh scan with the pilot table shipped in shadowperc/data.
"""

import csv
import sys
from importlib import resources

import numpy as np

from shadowperc import kernel, percolation

trials = int(sys.argv[1]) if len(sys.argv) > 1 else 200
ells = np.arange(0, 3.0001, 0.25)

res = percolation.crossing_scan(kernel.bargmann_fock(), ells, [10, 20], trials, seed=7)

with resources.files("shadowperc").joinpath("data/pilot_scan.csv").open() as fh:
    pilot = {float(r["ell"]): float(r["phat"]) for r in csv.DictReader(fh)}

print(f"{'ell':>5} {'lam=10':>8} {'lam=20':>8} {'pilot 20':>9}")
by = {(r[4], r[5]): r[9] for r in res.rows}
for ell in ells:
    print(f"{ell:5.2f} {by[(10.0, ell)]:8.3f} {by[(20.0, ell)]:8.3f} {pilot[round(ell, 2)]:9.3f}")
# the transition sharpens as lam grows, as the 0-1 dichotomy predicts
