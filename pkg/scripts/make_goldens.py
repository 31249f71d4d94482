"""Regenerate the reference outputs bundled under evaptwin/data/golden.

Run after an intentional change to the optimizer or the imaging pipeline,
then review the diff before committing.
"""

import argparse
import json
from pathlib import Path

import evaptwin
from evaptwin.bayesopt import maximize
from evaptwin.cli import main as cli_main

GOLDEN = Path(evaptwin.__file__).parent / "data" / "golden"


def optimizer_golden(budget=25, seed=0):
    s = maximize(lambda x: -(x[0] - 0.3) ** 2, 1, budget, seed=seed)
    return {"budget": budget, "seed": seed, "best_x": list(s.best_x), "best_cost": s.best_cost}


# truth used for the bundled bimodal image
IMAGE_SPEC = "n_thermal=2e5,sigma_x=9,sigma_y=11,n_bec=3e4,r_x=6,r_y=7,noise=0.002"


def image_golden(out: Path, seed=0):
    """Synthesize the bundled image and store its fit as the reference."""
    tmp = out / "_fit"
    code = cli_main(["fit-image", "--synthesize", IMAGE_SPEC, "--seed", str(seed), "--out", str(tmp)])
    if code != 0:
        raise SystemExit(f"fit-image failed with exit code {code}")
    (tmp / "image.bin").replace(out / "bimodal_image.bin")
    (tmp / "fit.json").replace(out / "bimodal_fit.json")
    (tmp / "sweep.csv").replace(out / "bimodal_sweep.csv")
    tmp.rmdir()


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=GOLDEN)
    args = ap.parse_args(argv)
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "optimizer_quadratic.json").write_text(json.dumps(optimizer_golden(), indent=2) + "\n")
    image_golden(args.out)
    print(f"wrote goldens to {args.out}")


if __name__ == "__main__":
    main()
