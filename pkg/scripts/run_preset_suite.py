"""Run the bundled experiment presets and collect results.

Stationary presets get the full simulate / theory / compare treatment;
tracking presets (long filters, time-varying targets) are simulated
only, since their moment recursions operate on 500x500 covariance
blocks and the adaptive fusion rules have no static predictor.

Usage: python3 scripts/run_preset_suite.py --out results [--runs 20]
"""

from __future__ import annotations

import argparse
import fnmatch
import pathlib
import sys
import time

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from diffcomb import harness  # noqa: E402


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="results", help="output directory")
    parser.add_argument("--only", default="*",
                        help="glob over preset names (default: all)")
    parser.add_argument("--runs", type=int, default=None,
                        help="override the per-preset run count")
    parser.add_argument("--workers", type=int, default=None)
    parser.add_argument("--tol-msd-db", type=float, default=2.0)
    parser.add_argument("--tol-gamma", type=float, default=0.05)
    args = parser.parse_args(argv)

    out_dir = pathlib.Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    names = [n for n in harness.preset_names()
             if fnmatch.fnmatch(n, args.only)]
    if not names:
        parser.error(f"no preset matches {args.only!r}")

    failures = []
    for name in names:
        cfg = harness.load_preset_config(name)
        run_indices = range(args.runs) if args.runs else None
        start = time.perf_counter()
        sim = harness.run_monte_carlo(cfg, run_indices=run_indices,
                                      workers=args.workers)
        sim_path = out_dir / f"{name}_sim.csv"
        harness.export(sim, sim_path, columns=cfg.outputs)
        elapsed = time.perf_counter() - start
        print(f"{name}: simulated {sim.runs} runs in {elapsed:.1f}s "
              f"-> {sim_path.name}")

        if name.startswith("tracking"):
            continue
        theo = harness.run_theory(cfg)
        theo_path = out_dir / f"{name}_theory.csv"
        harness.export(theo, theo_path, columns=cfg.outputs)
        for stage_start, report in theo.steady:
            if report is not None:
                print(f"  stage n={stage_start}: steady combined MSD "
                      f"{report.combined_msd:.3e}, "
                      f"{report.universality.verdict}")
        verdict = harness.compare(sim, theo, tol_msd_db=args.tol_msd_db,
                                  tol_gamma=args.tol_gamma)
        failed = [e.name for e in verdict.entries if not e.passed]
        if failed:
            failures.append((name, failed))
            print(f"  compare FAILED: {', '.join(failed)}")
        else:
            print("  compare passed")

    if failures:
        print(f"\n{len(failures)} preset(s) beyond tolerance")
        return 1
    print("\nall comparisons within tolerance")
    return 0


if __name__ == "__main__":
    sys.exit(main())
