"""Command-line front end.

    aladin convergence --L 25 --N 4 --iters 50 --seed 7 --variants all --out dir
    aladin timing --L 25 --N-list 3,4,5,6 --iters 50 --seed 7 --out dir
    aladin verify

Exit codes: 0 success, 1 verification failure, 2 usage error, 3 numerical
failure. ALADIN_THREADS caps worker parallelism.
"""

from __future__ import annotations

import argparse
import csv
import json
import statistics
import sys
from pathlib import Path

import numpy as np

from . import mhe, verify
from .errors import AladinError
from .local_solver import LocalSolveConfig, centralized_solve
from .runtime import RunConfig, Variant, run, write_trace

VARIANT_ALIASES = {v.value: v for v in Variant}


def _parse_variants(text: str):
    if text == "all":
        return list(Variant)
    names = [t.strip() for t in text.split(",") if t.strip()]
    try:
        return [VARIANT_ALIASES[n] for n in names]
    except KeyError as exc:
        raise argparse.ArgumentTypeError(f"unknown variant {exc.args[0]!r}; "
                                         f"choose from {sorted(VARIANT_ALIASES)} or 'all'")


def _reference(instance, local_tol=1e-10):
    cfg = LocalSolveConfig(kkt_tol=local_tol, max_newton_steps=100)
    x_star, _, _ = centralized_solve(instance.problem,
                                     np.concatenate(instance.initial_guess), cfg)
    offsets = np.concatenate([[0], np.cumsum([n for n, _ in instance.layout.dims])]).astype(int)
    return [x_star[offsets[i]:offsets[i + 1]] for i in range(instance.layout.N)]


def _run_config(variant, instance, args):
    return RunConfig(variant=variant, y0=instance.initial_guess,
                     max_iters=args.iters, rho=args.rho, seed=args.seed)


def cmd_convergence(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    variants = args.variants
    instance = mhe.benchmark_instance(seed=args.seed, L=args.L, N=args.N, rho=args.rho)
    reference = _reference(instance)

    summary = {"spec": {"L": args.L, "N": args.N, "iters": args.iters,
                        "seed": args.seed, "rho": args.rho,
                        "variants": [v.value for v in variants]},
               "variants": {}}
    for variant in variants:
        cfg = _run_config(variant, instance, args)
        trace = run(instance.problem, cfg, reference=reference)
        write_trace(trace, cfg, out / f"convergence_{variant.value}.csv")
        errs = [rec.err_to_ref for rec in trace]

        def iters_to(th):
            for rec in trace:
                if rec.err_to_ref <= th:
                    return rec.k
            return None

        summary["variants"][variant.value] = {
            "final_err": errs[-1],
            "iters_to_1e-6": iters_to(1e-6),
            "iters_to_1e-8": iters_to(1e-8),
            "triggered_at": [rec.k for rec in trace if rec.triggered] if variant.is_rt
                            else "every iteration",
            "uplink_scalars_per_iter": trace[0].uplink_scalars,
        }
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)
    print(f"wrote {len(variants)} trace(s) and summary.json to {out}")
    return 0


def cmd_timing(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for N in args.N_list:
        instance = mhe.benchmark_instance(seed=args.seed, L=args.L, N=N, rho=args.rho)
        reference = _reference(instance)
        for variant in args.variants:
            totals = []
            medians = []
            for _ in range(args.repetitions):
                cfg = _run_config(variant, instance, args)
                trace = run(instance.problem, cfg, reference=reference)
                totals.append(sum(rec.coord_wall_ns for rec in trace))
                medians.append(statistics.median(rec.coord_wall_ns for rec in trace))
            rows.append({"N": N, "variant": variant.value,
                         "total_coord_ns": statistics.median(totals),
                         "median_iter_ns": statistics.median(medians)})
    path = out / "timing.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["N", "variant", "total_coord_ns",
                                                "median_iter_ns"])
        writer.writeheader()
        writer.writerows(rows)
    with open(out / "timing_spec.json", "w") as fh:
        json.dump({"L": args.L, "N_list": args.N_list, "iters": args.iters,
                   "seed": args.seed, "rho": args.rho,
                   "repetitions": args.repetitions,
                   "variants": [v.value for v in args.variants]}, fh, indent=2)
    for row in rows:
        print(f"N={row['N']:<2d} {row['variant']:<9s} total={row['total_coord_ns'] / 1e6:.3f} ms")
    print(f"wrote {path}")
    return 0


def cmd_verify(args) -> int:
    failed = None
    for name, ok, detail in verify.run_all():
        print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
        if not ok and failed is None:
            failed = name
    if failed is not None:
        print(f"verification failed: {failed}", file=sys.stderr)
        return 1
    return 0


def _int_list(text):
    return [int(t) for t in text.split(",") if t.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aladin",
                                     description="Distributed-optimization toolkit "
                                                 "(event-triggered quasi-Newton variants, "
                                                 "MHE benchmark).")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--L", type=int, default=25, help="horizon length")
        p.add_argument("--iters", type=int, default=50)
        p.add_argument("--seed", type=int, default=7)
        p.add_argument("--rho", type=float, default=25.0)
        p.add_argument("--variants", type=_parse_variants, default=list(Variant),
                       help="comma list of gn,abfgs,rt-gn,rt-abfgs or 'all'")
        p.add_argument("--out", default="out")

    conv = sub.add_parser("convergence", help="per-variant convergence traces")
    common(conv)
    conv.add_argument("--N", type=int, default=4, help="sub-window count")
    conv.set_defaults(func=cmd_convergence)

    tim = sub.add_parser("timing", help="coordination-time table across N")
    common(tim)
    tim.add_argument("--N-list", dest="N_list", type=_int_list, default=[3, 4, 5, 6])
    tim.add_argument("--repetitions", type=int, default=5)
    tim.set_defaults(func=cmd_timing)

    ver = sub.add_parser("verify", help="run the property/oracle suites")
    ver.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except AladinError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
