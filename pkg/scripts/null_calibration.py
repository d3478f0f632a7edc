"""False-positive rate of the frame-wise t test when both groups share one recipe.

By default the per-frame latent gradients feed the statistics directly (fast,
hundreds of seeds). ``--images`` renders and analyses every frame instead.

    python scripts/null_calibration.py --seeds 100
    python scripts/null_calibration.py --seeds 5 --images
"""
import argparse
import math
from types import SimpleNamespace

from strainmap.phantom import CohortRecipe, cohort_frame_specs
from strainmap.stats import cohort_analysis

from run_synthetic_cohort import run


def latent(recipe):
    records = [
        (s.meta, SimpleNamespace(total_gx=s.target_gx, total_gy=s.target_gy,
                                 total_gr=math.hypot(s.target_gx, s.target_gy)))
        for s in cohort_frame_specs(recipe)
    ]
    return cohort_analysis(records)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=100)
    ap.add_argument("--images", action="store_true")
    ap.add_argument("--subject-sd", type=float, nargs=2, metavar=("GX", "GY"))
    args = ap.parse_args(argv)

    extra = {"subject_sd": tuple(args.subject_sd)} if args.subject_sd else {}
    analyse = run if args.images else latent
    rejections = tests = 0
    for seed in range(args.seeds):
        rows = analyse(CohortRecipe(seed=seed, **extra))
        rejections += sum(r.significant for r in rows)
        tests += len(rows)
    print(f"{'images' if args.images else 'latent'}: {rejections}/{tests} = {rejections / tests:.2%} rejected at 0.05")


if __name__ == "__main__":
    main()
