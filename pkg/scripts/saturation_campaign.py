"""Saturating versus relieved field: one 60-evaluation campaign at each.

Writes ``saturation_<B>G.csv`` per field with the best condensate number and
the atom number at the critical PSD after every evaluation, then prints the
ratio of the final best condensates and the late-campaign change at the
saturating field.

    python scripts/saturation_campaign.py --out runs/saturation
"""

import argparse
import csv
from pathlib import Path

from evaptwin.bayesopt import CampaignSpec, SimulatorObjective, run_campaign
from evaptwin.bayesopt.campaign import best_n_bec_history, critical_number_history
from evaptwin.feshbach import load_builtin
from evaptwin.ramps import RampSchedule

TIMES = [0.0, 4.2, 8.4, 12.6, 16.8]
P_H = [20.0, 0.6, 0.08, 0.015, 0.004]
P_V = [0.0, 2.0, 1.2, 0.3, 0.1]


def factor_box(factor: float) -> dict:
    """Per-breakpoint bounds a factor either side of the base ramp."""
    return {
        "H": ([h / factor for h in P_H], [h * factor for h in P_H]),
        "V": ([max(v / factor, 0.01) for v in P_V], [max(v * factor, 0.05) for v in P_V]),
    }


def campaign(field: float, budget: int, seed: int, factor: float, log_path=None):
    base = RampSchedule(TIMES, P_H, P_V)
    spec = CampaignSpec("fixed_time", budget, box=factor_box(factor), seed=seed)
    return run_campaign(base, spec, SimulatorObjective(load_builtin(field)), log_path=log_path, warm_start=[base])


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--fields", type=float, nargs=2, default=[3.91, 4.80], metavar=("SATURATING", "RELIEVED"))
    ap.add_argument("--budget", type=int, default=60)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--box-factor", type=float, default=5.0)
    ap.add_argument("--out", type=Path, default=Path("runs/saturation"))
    args = ap.parse_args(argv)
    args.out.mkdir(parents=True, exist_ok=True)

    best = {}
    for field in args.fields:
        log_path = args.out / f"campaign_{field:g}G.jsonl"
        log_path.unlink(missing_ok=True)
        result = campaign(field, args.budget, args.seed, args.box_factor, log_path)
        hist = best_n_bec_history(result.history)
        crit = critical_number_history(result.history)
        with open(args.out / f"saturation_{field:g}G.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "best_N_bec", "N_at_critical"])
            for i, (b, c) in enumerate(zip(hist, crit)):
                w.writerow([i, repr(float(b)), repr(float(c))])
        best[field] = hist
        print(f"B={field:g} G: best N_bec {hist[-1]:.4g}, flags: {', '.join(result.flagged) or 'none'}")

    sat, rel = args.fields
    half = len(best[sat]) // 2
    late = (best[sat][-1] - best[sat][half - 1]) / best[sat][-1] if best[sat][-1] > 0 else float("nan")
    print(f"ratio N_bec({rel:g} G) / N_bec({sat:g} G) = {best[rel][-1] / best[sat][-1]:.3f}")
    print(f"change of best N_bec over the last half at {sat:g} G: {late:.1%}")


if __name__ == "__main__":
    main()
