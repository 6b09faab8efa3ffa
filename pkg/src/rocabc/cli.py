"""Command-line driver.

Subcommands: synth-population, sample-trace, optimize-weights, bf, oracle,
experiment, bench, plot.  Every command honors --seed end to end, so
repeating an invocation reproduces its output files byte for byte (timing
fields aside); ROC_ABC_THREADS caps worker threads without affecting
results.  Exit codes: 0 success, 2 precondition error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import svgplot
from .engine import (
    Method,
    ModelPrior,
    RunConfig,
    assign_bf,
    generate_draws,
    run,
    _FingerprintSims,
)
from .errors import NumericalError, PreconditionError
from .features import (
    Configuration,
    load_configuration,
    save_configuration,
    summarize,
)
from .generative import (
    DEFAULT_PRIORS,
    Population,
    best_matching_subconfig_scored,
    distort,
    load_population,
    sample_distortion_params,
    save_population,
    synth_population,
)
from .kernel import (
    DEFAULT_WEIGHTS,
    load_weights,
    optimize_weights,
    save_weights,
    weights_to_json,
)
from .oracle import make_setting, run_oracle
from .roc import (
    DEFAULT_P_FLOOR,
    ScoreSample,
    empirical_roc,
    fit_mle,
    load_scores,
    refine_l2,
    roc_model_eval,
    sample_from_arrays,
    save_roc_csv,
    save_scores,
)
from .util import worker_count

_DESIGN_CODES = {"TS": 1, "CNM": 2, "RS": 3}


def _provenance(args: argparse.Namespace) -> str:
    return "rocabc " + " ".join(args._argv)


def _json_default(v):
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)
    if isinstance(v, np.floating):
        return float(v)
    if isinstance(v, np.integer):
        return int(v)
    raise TypeError(f"not JSON serializable: {type(v)}")


def _write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _finite_or_repr(v: float):
    return v if math.isfinite(v) else repr(v)


def _parse_range(text: str) -> tuple[int, int]:
    try:
        a, b = text.split("..")
        return int(a), int(b)
    except ValueError:
        raise PreconditionError(f"bad range {text!r}; expected a..b") from None


def _parse_int_list(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v]


def _case_seed(*parts: int) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1, np.uint64)[0])


# --- synth-population -------------------------------------------------------


def cmd_synth_population(args) -> int:
    lo, hi = _parse_range(args.minutiae_range)
    pop = synth_population(
        args.seed, args.fingers, minutiae_range=(lo, hi),
        area=(args.area, args.area), d_min=args.d_min,
    )
    save_population(pop, args.out)
    print(f"wrote {len(pop.fingers)} fingers to {args.out}")
    return 0


# --- sample-trace -----------------------------------------------------------


def cmd_sample_trace(args) -> int:
    pop = load_population(args.pop)
    try:
        finger = pop.fingers[int(args.finger)]
    except (ValueError, IndexError):
        matches = [f for f in pop.fingers if f.id == args.finger]
        if not matches:
            raise PreconditionError(f"no finger {args.finger!r} in {args.pop}") from None
        finger = matches[0]
    if args.k > finger.n:
        raise PreconditionError(
            f"requested k={args.k} exceeds finger {finger.id}'s {finger.n} minutiae"
        )
    rng = np.random.default_rng(np.random.SeedSequence([args.seed, 0x7ACE]))
    subset = rng.choice(finger.n, size=args.k, replace=False)
    control = Configuration(tuple(finger.minutiae[i] for i in subset))
    trace = distort(control, sample_distortion_params(rng, control), rng)
    save_configuration(trace, args.out_trace)
    save_configuration(control, args.out_control)
    print(f"trace -> {args.out_trace}  control -> {args.out_control}")
    return 0


# --- optimize-weights -------------------------------------------------------


def _load_training_dir(path) -> list[tuple[np.ndarray, np.ndarray]]:
    cases = []
    files = sorted(Path(path).glob("*.csv"))
    if not files:
        raise PreconditionError(f"no training CSVs in {path}")
    for fp in files:
        same, diff = [], []
        with open(fp, "r", encoding="utf-8") as fh:
            for row in csv.reader(fh):
                if not row or row[0].startswith("#") or row[0] == "model":
                    continue
                target = same if int(row[0]) == 1 else diff
                target.append([float(v) for v in row[1:6]])
        if not same or not diff:
            raise PreconditionError(f"{fp} lacks scores for one of the models")
        cases.append((np.asarray(same), np.asarray(diff)))
    return cases


def cmd_optimize_weights(args) -> int:
    training = _load_training_dir(args.train)
    w = optimize_weights(training, seed=args.seed, n_restarts=args.restarts)
    if args.out:
        save_weights(w, args.out)
        print(f"wrote {args.out}")
    print(json.dumps(weights_to_json(w)))
    return 0


# --- bf ----------------------------------------------------------------------


def cmd_bf(args) -> int:
    trace = load_configuration(args.trace)
    control = load_configuration(args.control)
    pop = load_population(args.pop)
    weights = load_weights(args.weights) if args.weights else DEFAULT_WEIGHTS
    prior = ModelPrior(args.pi1, 1.0 - args.pi1)
    cfg = RunConfig(
        n_total=args.n, m_denominator=args.m, p_floor=args.p_floor,
        method=Method(args.method), master_seed=args.seed,
    )
    result = run(trace, control, pop, weights, prior, cfg, seg_len=args.seg_len)

    out = Path(args.out)
    scores_path = out.with_suffix(".scores.csv")
    models = np.concatenate(
        [np.ones(result.sample.n_f, dtype=np.int8), np.full(result.sample.n_g, 2, np.int8)]
    )
    scores = np.concatenate([result.sample.f_scores, result.sample.g_scores])
    save_scores(scores_path, models, scores, provenance=_provenance(args))
    _write_json(out, {
        "invocation": _provenance(args),
        "method": cfg.method.value,
        "n_total": cfg.n_total,
        "m": cfg.m_denominator,
        "seed": cfg.master_seed,
        "scores_file": str(scores_path),
        "bf_log10": _finite_or_repr(result.bf_log10),
        "p_used": result.p_used,
        "convergence_trace": [
            [n, _finite_or_repr(v)] for n, v in result.convergence_trace
        ],
        "detail": result.detail,
        "timing": result.timing,
    })
    print(f"log10 BF = {result.bf_log10:.4f} (method={cfg.method.value}) -> {out}")
    return 0


# --- oracle -------------------------------------------------------------------


def cmd_oracle(args) -> int:
    kwargs = {}
    for name in ("d", "mu1", "mu2", "sigma", "tau"):
        v = getattr(args, name)
        if v is not None:
            kwargs[name] = v
    setting = make_setting(args.setting, **kwargs)
    cfg = RunConfig(
        n_total=args.n, m_denominator=args.m, p_floor=args.p_floor,
        master_seed=args.seed,
    )
    methods = tuple(Method(m) for m in _parse_str_list(args.methods))
    report = run_oracle(setting, cfg, seeds=args.seeds, methods=methods)
    report["invocation"] = _provenance(args)
    _write_json(args.out, report)
    for name, stats in report["methods"].items():
        print(
            f"{name:10s} median |log10 err| = {stats['median_abs_error']:.4f} "
            f"({stats['within_0.3']}/{args.seeds} within 0.3)"
        )
    return 0


def _parse_str_list(text: str) -> list[str]:
    return [v for v in text.split(",") if v]


# --- experiment ---------------------------------------------------------------


def _eligible(pop: Population, k: int) -> list[int]:
    return [i for i, f in enumerate(pop.fingers) if f.n >= k]


def _build_case(design: str, pop: Population, k: int, rng, weights, seg_len):
    """Returns (trace, control, m2_population) for one experiment case."""
    eligible = _eligible(pop, k)
    if len(eligible) < 2:
        raise PreconditionError(f"population too small for k={k}")
    source_i = eligible[int(rng.integers(0, len(eligible)))]
    source = pop.fingers[source_i]
    subset = rng.choice(source.n, size=k, replace=False)
    control_src = Configuration(tuple(source.minutiae[i] for i in subset))
    trace = distort(control_src, sample_distortion_params(rng, control_src), rng)

    if design == "TS":
        mr_x = source_i
        control = control_src
    elif design == "CNM":
        best_i, best_score, best_sub = None, np.inf, None
        for i in eligible:
            if i == source_i:
                continue
            sub, score = best_matching_subconfig_scored(
                pop.fingers[i], trace, weights, seg_len
            )
            if score < best_score:
                best_i, best_score, best_sub = i, score, sub
        mr_x = best_i
        control = best_sub
    elif design == "RS":
        others = [i for i in eligible if i != source_i]
        mr_x = others[int(rng.integers(0, len(others)))]
        finger = pop.fingers[mr_x]
        subset2 = rng.choice(finger.n, size=k, replace=False)
        control = Configuration(tuple(finger.minutiae[i] for i in subset2))
    else:
        raise PreconditionError(f"unknown design {design!r}")

    # The defence population is everyone but Mr. X (with enough minutiae).
    m2_fingers = tuple(pop.fingers[i] for i in eligible if i != mr_x)
    return trace, control, Population(m2_fingers, seed=pop.seed)


def run_experiment(
    design: str,
    pop: Population,
    k_list: list[int],
    cases: int,
    methods: list[Method],
    n_total: int,
    m: int,
    seed: int,
    p_floor: float = DEFAULT_P_FLOOR,
    weights=DEFAULT_WEIGHTS,
    seg_len: float = 30.0,
    threads: int | None = None,
) -> list[dict]:
    """All (k, case, method) runs of one design; rows sorted deterministically."""
    if design not in _DESIGN_CODES:
        raise PreconditionError(f"unknown design {design!r}")
    jobs = [(k, c) for k in k_list for c in range(cases)]

    def one(job):
        k, case = job
        case_seed = _case_seed(seed, _DESIGN_CODES[design], k, case)
        rng = np.random.default_rng(np.random.SeedSequence([case_seed, 0xCA5E]))
        trace, control, m2pop = _build_case(design, pop, k, rng, weights, seg_len)
        rows = []
        for method in methods:
            cfg = RunConfig(
                n_total=n_total, m_denominator=m, p_floor=p_floor,
                method=method, master_seed=case_seed,
            )
            res = run(
                trace, control, m2pop, weights,
                ModelPrior(), cfg, seg_len=seg_len, threads=1,
            )
            rows.append({
                "design": design, "k": k, "case": case, "method": method.value,
                "bf_log10": res.bf_log10, "p_used": res.p_used,
            })
        return rows

    with ThreadPoolExecutor(max_workers=worker_count(threads)) as pool:
        nested = list(pool.map(one, jobs))
    return [row for rows in nested for row in rows]


def cmd_experiment(args) -> int:
    pop = load_population(args.pop)
    weights = load_weights(args.weights) if args.weights else DEFAULT_WEIGHTS
    k_list = _parse_int_list(args.k_list)
    methods = [Method(v) for v in _parse_str_list(args.methods)]
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    rows = run_experiment(
        args.design, pop, k_list, args.cases, methods,
        args.n, args.m, args.seed, p_floor=args.p_floor,
        weights=weights, seg_len=args.seg_len,
    )
    csv_path = out_dir / f"experiment_{args.design}.csv"
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# {_provenance(args)}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["design", "k", "case", "method", "bf_log10", "p_used"])
        for r in rows:
            writer.writerow([
                r["design"], r["k"], r["case"], r["method"],
                repr(r["bf_log10"]), repr(r["p_used"]) if r["p_used"] is not None else "",
            ])

    for method in methods:
        groups = []
        for k in k_list:
            vals = [
                r["bf_log10"] for r in rows
                if r["k"] == k and r["method"] == method.value
            ]
            groups.append((str(k), vals))
        svgplot.box_plot(
            out_dir / f"experiment_{args.design}_{method.value}_box.svg",
            groups,
            title=f"{args.design} design, {method.value} method",
            xlabel="minutiae (k)",
            ylabel="log10 BF",
        )
    print(f"wrote {len(rows)} rows to {csv_path}")
    return 0


# --- bench ---------------------------------------------------------------------


def _bench_setup(k: int, n_total: int, seed: int):
    """Generate one synthetic score/covariate set at configuration size k."""
    pop = synth_population(seed + k, 24, minutiae_range=(max(30, k + 10), 60))
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xBE7C, k]))
    source = pop.fingers[0]
    subset = rng.choice(source.n, size=k, replace=False)
    control = Configuration(tuple(source.minutiae[i] for i in subset))
    trace = distort(control, sample_distortion_params(rng, control), rng)
    cfg = RunConfig(n_total=n_total, master_seed=seed + k)
    sims = _FingerprintSims(trace, control, pop, DEFAULT_WEIGHTS, 30.0, DEFAULT_PRIORS)
    models, scores, covs = generate_draws(
        sims.sim1, sims.sim2, sims.score, ModelPrior(), cfg,
        covariate_fn=sims.covariates,
    )
    return models, scores, covs


def cmd_bench(args) -> int:
    k_list = _parse_int_list(args.k_list)
    methods = [Method(v) for v in _parse_str_list(args.methods)]
    rows = []
    for k in k_list:
        models, scores, covs = _bench_setup(k, args.n, args.seed)
        prior = ModelPrior()
        for method in methods:
            cfg = RunConfig(
                n_total=args.n, m_denominator=args.m, method=method,
                master_seed=args.seed,
            )
            # Cheap assignments are timed over an inner loop for stable numbers.
            inner = 10 if method is Method.EMPIRICAL else 1
            for rep in range(args.reps):
                t0 = time.perf_counter()
                for _ in range(inner):
                    assign_bf(models, scores, covs, prior, cfg)
                dt = (time.perf_counter() - t0) / inner
                rows.append((k, method.value, rep, dt))
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# {_provenance(args)}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["k", "method", "rep", "seconds"])
        for row in rows:
            writer.writerow([row[0], row[1], row[2], repr(row[3])])
    for k in k_list:
        for method in methods:
            times = sorted(r[3] for r in rows if r[0] == k and r[1] == method.value)
            med = times[len(times) // 2]
            print(f"k={k:3d} {method.value:10s} median {med * 1000:9.2f} ms")
    print(f"wrote {args.out}")
    return 0


# --- plot ------------------------------------------------------------------------


def cmd_plot(args) -> int:
    models, scores = load_scores(args.scores)
    sample = sample_from_arrays(models, scores)
    prefix = args.out_prefix

    gx1, gy1 = svgplot.gaussian_kde_curve(sample.f_scores)
    gx2, gy2 = svgplot.gaussian_kde_curve(sample.g_scores)
    with open(f"{prefix}_density.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# {_provenance(args)}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["side", "score", "density"])
        for x, y in zip(gx1, gy1):
            writer.writerow(["m1", repr(x), repr(y)])
        for x, y in zip(gx2, gy2):
            writer.writerow(["m2", repr(x), repr(y)])
    svgplot.line_plot(
        f"{prefix}_density.svg",
        [("M1 scores", gx1, gy1), ("M2 scores", gx2, gy2)],
        title="Score densities",
        xlabel="kernel score",
        ylabel="density",
    )

    points = empirical_roc(sample)
    save_roc_csv(f"{prefix}_roc.csv", points, provenance=_provenance(args))
    series = [("empirical", [pt.p for pt in points], [pt.tpr for pt in points])]
    if args.fit:
        params = refine_l2(fit_mle(sample), points)
        grid = np.linspace(0.0, 1.0, 512)
        series.append(("dual-beta fit", grid.tolist(),
                       np.asarray(roc_model_eval(params, grid)).tolist()))
    svgplot.line_plot(
        f"{prefix}_roc.svg", series,
        title="ROC", xlabel="false-positive rate p", ylabel="ROC(p)",
    )
    print(f"wrote {prefix}_density.(svg|csv), {prefix}_roc.(svg|csv)")
    return 0


# --- parser -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rocabc",
        description="ROC-based ABC Bayes factors for point-pattern evidence",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-population", help="build a synthetic donor population")
    p.add_argument("--fingers", type=int, required=True)
    p.add_argument("--minutiae-range", default="30..60")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--area", type=float, default=500.0)
    p.add_argument("--d-min", type=float, default=8.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth_population)

    p = sub.add_parser("sample-trace", help="sample a trace/control pair from a donor")
    p.add_argument("--pop", required=True)
    p.add_argument("--finger", default="0", help="finger index or id")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-trace", required=True)
    p.add_argument("--out-control", required=True)
    p.set_defaults(func=cmd_sample_trace)

    p = sub.add_parser("optimize-weights", help="fit kernel weights by mean AUC")
    p.add_argument("--train", required=True, help="directory of per-case component CSVs")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--restarts", type=int, default=8)
    p.add_argument("--out")
    p.set_defaults(func=cmd_optimize_weights)

    p = sub.add_parser("bf", help="assign a Bayes factor to a trace/control pair")
    p.add_argument("--trace", required=True)
    p.add_argument("--control", required=True)
    p.add_argument("--pop", required=True)
    p.add_argument("--method", default="empirical",
                   choices=[m.value for m in Method])
    p.add_argument("--n", type=int, default=500_000)
    p.add_argument("--m", type=int, default=10)
    p.add_argument("--p-floor", type=float, default=DEFAULT_P_FLOOR)
    p.add_argument("--pi1", type=float, default=0.5)
    p.add_argument("--seg-len", type=float, default=30.0)
    p.add_argument("--weights")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bf)

    p = sub.add_parser("oracle", help="validate methods against analytic truths")
    p.add_argument("--setting", choices=["simple", "composite"], required=True)
    p.add_argument("--n", type=int, default=200_000)
    p.add_argument("--m", type=int, default=100)
    p.add_argument("--p-floor", type=float, default=1e-3)
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--methods", default="empirical,dualbeta,logistic")
    p.add_argument("--d", type=float)
    p.add_argument("--mu1", type=float)
    p.add_argument("--mu2", type=float)
    p.add_argument("--sigma", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("experiment", help="TS/CNM/RS design over a population")
    p.add_argument("--design", choices=sorted(_DESIGN_CODES), required=True)
    p.add_argument("--pop", required=True)
    p.add_argument("--k-list", default="4,7,10,13,16")
    p.add_argument("--cases", type=int, default=50)
    p.add_argument("--methods", default="empirical")
    p.add_argument("--n", type=int, default=50_000)
    p.add_argument("--m", type=int, default=10)
    p.add_argument("--p-floor", type=float, default=DEFAULT_P_FLOOR)
    p.add_argument("--seg-len", type=float, default=30.0)
    p.add_argument("--weights")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("bench", help="time BF assignment per method and k")
    p.add_argument("--k-list", default="5,20")
    p.add_argument("--n", type=int, default=20_000)
    p.add_argument("--m", type=int, default=10)
    p.add_argument("--methods", default="empirical,logistic")
    p.add_argument("--reps", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("plot", help="score densities and ROC overlays")
    p.add_argument("--scores", required=True)
    p.add_argument("--out-prefix", required=True)
    p.add_argument("--fit", action="store_true", help="overlay the dual-beta fit")
    p.add_argument("--m", type=int, default=10)
    p.set_defaults(func=cmd_plot)

    return parser


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    args._argv = argv
    try:
        return args.func(args)
    except PreconditionError as exc:
        print(f"precondition error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
