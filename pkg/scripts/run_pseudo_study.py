"""Bias, rMSE, design effect and adequacy-test rejection rate per scheme on the pseudo-population."""

import argparse
import time

from blendsurvey.simulation import pseudo_setting, run_pseudo_study


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--settings", default="1,2,3,4,5", help="comma-separated setting numbers")
    ap.add_argument("--tau", type=float, default=0.5, help="selection coefficient on the outcome or latent")
    ap.add_argument("--k", type=int, default=1000, help="iterations per setting")
    ap.add_argument("--seed", type=int, default=20261018)
    ap.add_argument("--pop-seed", type=int, default=2018)
    ap.add_argument("--groups", type=int, default=40, help="jackknife groups for the post hoc estimator")
    ap.add_argument("--posthoc", action="store_true", help="also run the post hoc estimators (slow)")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out-prefix", default="pseudo_setting")
    args = ap.parse_args()

    for number in (int(s) for s in args.settings.split(",")):
        t0 = time.perf_counter()
        m = run_pseudo_study(
            pseudo_setting(number, tau=args.tau), K=args.k, seed=args.seed, posthoc=args.posthoc,
            G=args.groups, pop_seed=args.pop_seed, workers=args.workers,
        )
        table = m.table()
        out = f"{args.out_prefix}{number}.csv"
        table.to_csv(out, float_format="%.10g")
        print(f"Setting {number} (K={m.K}, population mean {m.benchmark:.4f})")
        print(table.round(3).to_string())
        print(f"wrote {out} ({time.perf_counter() - t0:.0f} s)\n")


if __name__ == "__main__":
    main()
