"""Short ramp, boundary flags, extended tail: the boundary-saturation chain.

A fixed-time campaign on a deliberately short ramp (only the vertical beam
searched) pins its best point to the box edge. Two extra ramps are then
appended to the best schedule and only the tail is re-optimized, which
should clear the flags and raise the cost.

    python scripts/boundary_chain.py --field 3.91 --seed 0
"""

import argparse
from pathlib import Path

import numpy as np

from evaptwin.bayesopt import CampaignSpec, SimulatorObjective, run_campaign
from evaptwin.feshbach import load_builtin
from evaptwin.ramps import RampSchedule, extend_box, extend_tail, write_schedule_csv

P_H = [20.0, 0.6, 0.08, 0.015, 0.004]
P_V = [0.0, 2.0, 1.2, 0.3, 0.1]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--field", type=float, default=3.91)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--duration", type=float, default=8.4, help="total time of the short ramp (s)")
    ap.add_argument("--budget", type=int, default=60)
    ap.add_argument("--extend", type=int, default=2, help="ramps appended to the tail")
    ap.add_argument("--extend-duration", type=float, default=1.4, help="length of each appended ramp (s)")
    ap.add_argument("--out", type=Path, default=Path("runs/boundary"))
    args = ap.parse_args(argv)
    args.out.mkdir(parents=True, exist_ok=True)

    base = RampSchedule(np.linspace(0.0, args.duration, len(P_V)), P_H, P_V)
    lo = [max(v / 4, 0.01) for v in P_V]
    lo[-1] = 5e-4  # let the final vertical power go low enough to matter
    box = {"V": (lo, [max(v * 4, 0.05) for v in P_V])}
    objective = SimulatorObjective(load_builtin(args.field))

    short = run_campaign(base, CampaignSpec("fixed_time", args.budget, box=box, seed=args.seed), objective, warm_start=[base])
    print(f"short ({base.duration:g} s): cost {short.best_cost:.4g}, flags: {', '.join(short.flagged) or 'none'}")
    write_schedule_csv(short.best_schedule, args.out / "short_best.csv")

    longer = extend_tail(short.best_schedule, args.extend, args.extend_duration)
    spec = CampaignSpec("tail_only", args.budget, box=extend_box(box, args.extend), seed=args.seed)
    rerun = run_campaign(longer, spec, objective, warm_start=[longer])
    print(f"extended ({longer.duration:g} s): cost {rerun.best_cost:.4g}, flags: {', '.join(rerun.flagged) or 'none'}")
    write_schedule_csv(rerun.best_schedule, args.out / "extended_best.csv")


if __name__ == "__main__":
    main()
