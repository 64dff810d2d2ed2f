"""Sweep the feedback gain k_p and report the grasp outcome for each value.

Used to pick the default gain, which has to keep the
closed-loop peak deformation below half the crush threshold.
"""

import argparse
import csv
import sys

import numpy as np

from fabsense.grasp import BoxModel, run_grasp


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--gains", default="0,2.5e-4,5e-4,1e-3,2e-3,4e-3,8e-3,1.6e-2")
    args = parser.parse_args(argv)

    box = BoxModel()
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(("k_p", "peak_deformation_m", "margin", "damaged", "peak_force_n", "hold_ripple_m"))
    for k_p in (float(x) for x in args.gains.split(",")):
        rep = run_grasp(k_p=k_p, feedback=k_p > 0, box=box)
        # deformation swing once the nominal trajectory is holding; large
        # values mean the loop is cycling rather than settling
        hold = rep.t >= 2.5
        ripple = float(np.ptp(rep.deformation[hold])) if hold.any() else 0.0
        margin = box.crush_threshold / rep.peak_deformation if rep.peak_deformation else float("inf")
        w.writerow((k_p, f"{rep.peak_deformation:.5f}", f"{margin:.2f}", int(rep.damaged), f"{rep.peak_force:.2f}", f"{ripple:.6f}"))


if __name__ == "__main__":
    main()
