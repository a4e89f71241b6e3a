"""Fit the final model (lag 2 with durations) and run do(HS) interventions."""
import argparse
from pathlib import Path

from sleepdbn import experiments as ex
from sleepdbn import interventions as iv
from sleepdbn.bouts import cohort_bouts, discretize_subject, fit_discretization
from sleepdbn.hypnogram_io import parse_cohort
from sleepdbn.reporting import estimate_rows, export_tables, export_transition_graph
from sleepdbn.simulator import make_default_ground_truth, simulate_cohort


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--input", type=Path)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--replicates", type=int, default=1000)
    ap.add_argument("--samples", type=int, default=1000)
    ap.add_argument("--out", type=Path, default=Path("results/interventions"))
    args = ap.parse_args()

    cohort = parse_cohort(args.input) if args.input else simulate_cohort(make_default_ground_truth(), seed=args.seed)
    subjects = cohort_bouts(cohort)
    spec = fit_discretization(subjects)
    model = ex.fit_model(ex.final_config(), [discretize_subject(s, spec) for s in subjects], spec)
    run = iv.run_interventions(model, args.replicates, args.samples, seed=args.seed)

    rows = []
    for h, est in run.expected.items():
        rows += estimate_rows(est, "expected", h, n_samples=args.samples)
        for lag in (1, 2):
            export_transition_graph(est, "expected", lag, args.out / "graphs", h)
    for name, est in run.contrasts.items():
        cond, ref = name.split("-")
        rows += estimate_rows(est, "contrast", cond, ref, args.samples)
        for lag in (1, 2):
            export_transition_graph(est, "contrast", lag, args.out / "graphs", name)
        sig = sorted(k for k, ci in est.items() if ci.significant)
        print(f"{name}: {len(sig)} significant cells")
        for k in sig[:15]:
            ci = est[k]
            print(f"  {k:22s} {ci.estimate:+.3f} [{ci.lo:+.3f}, {ci.hi:+.3f}]")
    args.out.mkdir(parents=True, exist_ok=True)
    export_tables(rows, args.out / "estimates.csv", args.out / "estimates.json")
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
