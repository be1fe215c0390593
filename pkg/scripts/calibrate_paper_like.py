"""Sweep the noise sigma of the "paper_like" preset.

Sigma grows from 0.010 in steps of 0.002. For each value, 250 traces are
simulated with seed 1 and the peak |rho| against HW(last byte) is recorded.
The sweep stops at the first sigma whose peak falls in [0.2, 0.6], i.e. the
strongest leakage inside the target band.

    python scripts/calibrate_paper_like.py
"""

from __future__ import annotations

import argparse
from dataclasses import replace

import numpy as np

from decapleak.sim import preset, simulate_campaign
from decapleak.stats import correlation_series, hw_labels, leakage_verdict

BAND = (0.2, 0.6)


def peak_for(sigma: float, seed: int, n_traces: int) -> float:
    model = replace(preset("paper_like", seed=seed), noise_sigma=sigma)
    ts = simulate_campaign(n_traces, model)
    report = leakage_verdict(correlation_series(ts, hw_labels(ts)))
    return abs(report.peak_rho)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--traces", type=int, default=250)
    args = ap.parse_args()

    grid = np.round(np.arange(0.010, 0.061, 0.002), 3)
    print(f"{'sigma':>7}  {'peak|rho|':>9}")
    for sigma in grid:
        peak = peak_for(float(sigma), args.seed, args.traces)
        print(f"{sigma:7.3f}  {peak:9.4f}")
        if BAND[0] <= peak <= BAND[1]:
            print(f"chosen sigma = {sigma} (peak |rho| = {peak:.4f})")
            return
    raise SystemExit("no sigma in the grid lands in the band")


if __name__ == "__main__":
    main()
