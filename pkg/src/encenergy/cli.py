"""Command-line entry point: ``encenergy <subcommand> ...``.

Exit codes: 0 success, 2 configuration/usage errors, 3 exhausted trace replay,
4 numerical failures. Every failure prints one ``kind: message`` line to stderr.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from . import __version__, _accel
from .errors import ConfigError, EncEnergyError, FoldError, NumericalError, ProbeExhausted
from .evaluation import (
    ABLATION_SCENARIOS,
    GROUPINGS,
    MODEL_KINDS,
    CvReport,
    ablate,
    compare_models,
    cross_validate,
    export_scatter,
)
from .features import EncodingConfig, Preset, Standard, load_dataset, save_dataset, validate_config
from .gpr import FitOptions
from .gpr import fit as fit_gpr
from .linreg import fit_ols
from .measurement import (
    CitConfig,
    SyntheticProbe,
    TraceReplayProbe,
    measure_until_confident,
    write_measurements,
)
from .persist import load_model, save_model
from .synth import CorpusSpec, OracleParams, generate_corpus, load_json_config

DEFAULT_SEED = 42


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


class _UsageError(Exception):
    pass


def _fmt(v: float) -> str:
    return f"{v:.6g}"


class _Out:
    def __init__(self, quiet: bool):
        self.quiet = quiet

    def info(self, text: str) -> None:
        if not self.quiet:
            print(text)

    def result(self, text: str) -> None:
        print(text)


def _fit_options(args) -> FitOptions:
    return FitOptions(
        restarts=args.restarts,
        max_iterations=args.max_iterations,
        seed=args.seed,
        convergence_tol=args.tol,
    )


def _write_text(path, text: str) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(text, encoding="utf-8")


# -- commands -----------------------------------------------------------------

def cmd_gen(args, out: _Out) -> int:
    spec = load_json_config(args.spec, CorpusSpec) if args.spec else CorpusSpec(seed=args.seed)
    params = load_json_config(args.params, OracleParams) if args.params else OracleParams(seed=args.seed)
    ds = generate_corpus(spec, params)
    save_dataset(ds, args.out)
    out.info(f"# seed: {spec.seed} (corpus), {params.seed} (oracle)")
    out.result(f"samples: {len(ds)}")
    return 0


def cmd_measure(args, out: _Out) -> int:
    cfg = CitConfig(args.alpha, args.beta, args.m_min, args.m_max, args.quantile_convention)
    rows = []
    if args.probe_dir:
        root = Path(args.probe_dir)
        if not root.is_dir():
            raise ConfigError(f"{root} is not a directory")
        jobs = sorted(p for p in root.iterdir() if p.is_dir())
        if not jobs:
            raise ConfigError(f"{root} contains no job directories")
        for job in jobs:
            rows.append((job.name, measure_until_confident(TraceReplayProbe(job), cfg)))
    else:
        for j in range(args.jobs):
            probe = SyntheticProbe(args.synthetic_mu, args.synthetic_sigma_rel, seed=args.seed + j)
            rows.append((f"job{j:03d}", measure_until_confident(probe, cfg)))
    write_measurements(rows, args.out)
    out.info(f"# seed: {args.seed}")
    for seq, r in rows:
        out.info(f"{seq}: {_fmt(r.mean_energy_j)} J  m={r.m}  converged={str(r.converged).lower()}")
    out.result(f"jobs: {len(rows)}  converged: {sum(r.converged for _, r in rows)}")
    return 0


def cmd_fit(args, out: _Out) -> int:
    ds = load_dataset(args.dataset)
    t0 = time.perf_counter()
    if args.model_kind == "gpr":
        model = fit_gpr(ds, _fit_options(args))
    else:
        model = fit_ols(ds)
    elapsed = time.perf_counter() - t0
    save_model(model, args.out)
    out.info(f"# seed: {args.seed}")
    if args.model_kind == "gpr":
        hp = model.hp
        out.info(
            f"sigma_f2={_fmt(hp.sigma_f2)} length_scale={_fmt(hp.length_scale)} "
            f"sigma_n2={_fmt(hp.sigma_n2)} log_likelihood={_fmt(model.log_likelihood)}"
        )
    out.result(f"training time: {_fmt(elapsed)} s ({len(ds)} samples, backend {_accel.backend()})")
    return 0


def cmd_predict(args, out: _Out) -> int:
    model = load_model(args.model)
    if args.input:
        ds = load_dataset(args.input)
        X = ds.feature_matrix()
        t0 = time.perf_counter()
        est = model.predict_matrix(X)
        per = (time.perf_counter() - t0) / max(len(ds), 1)
        lines = ["sample_id,e_est"] + [f"{sid},{repr(float(e))}" for sid, e in zip(ds.sample_ids(), est)]
        if args.out:
            _write_text(args.out, "\n".join(lines) + "\n")
        else:
            for line in lines:
                out.result(line)
        out.info(f"prediction time: {_fmt(per * 1e3)} ms per sample")
        return 0
    missing = [f for f in ("width", "height", "frames", "standard", "preset", "qp") if getattr(args, f) is None]
    if missing:
        raise ConfigError(f"missing --{', --'.join(missing)} (or pass --input)")
    config = EncodingConfig(
        args.sequence_id, args.width, args.height, args.frames,
        Standard.parse(args.standard), Preset.parse(args.preset), args.qp,
    )
    validate_config(config)
    from .features import extract_features

    x = extract_features(config)[None, :]
    t0 = time.perf_counter()
    energy = float(model.predict_matrix(x)[0])
    elapsed = time.perf_counter() - t0
    out.result(f"energy_j: {_fmt(energy)}")
    out.info(f"prediction time: {_fmt(elapsed * 1e3)} ms")
    return 0


def cmd_cv(args, out: _Out) -> int:
    ds = load_dataset(args.dataset)
    t0 = time.perf_counter()
    rep = cross_validate(ds, args.model_kind, args.folds, args.seed, _fit_options(args))
    elapsed = time.perf_counter() - t0
    if args.out:
        _write_text(args.out, rep.to_json())
    if args.csv:
        _write_text(args.csv, rep.to_csv())
    out.info(f"# seed: {args.seed}")
    out.info(f"model: {args.model_kind}  folds: {args.folds}  samples: {len(ds)}  time: {_fmt(elapsed)} s")
    out.result(f"MAPE: {_fmt(rep.mape_percent)}%")
    return 0


def cmd_ablate(args, out: _Out) -> int:
    ds = load_dataset(args.dataset)
    groups = args.groups or [g for _, g, _ in ABLATION_SCENARIOS]
    labels = {g: lab for lab, g, _ in ABLATION_SCENARIOS}
    rows = []
    out.info(f"# seed: {args.seed}")
    out.result("scenario,feature,mape")
    for g in groups:
        if g not in labels:
            raise ConfigError(f"unknown feature group {g!r}")
        m = ablate(ds, g, args.folds, args.seed, _fit_options(args))
        rows.append({"scenario": labels[g], "feature": g, "mape_percent": m})
        out.result(f"{labels[g]},{g},{_fmt(m)}")
    if args.out:
        _write_text(args.out, json.dumps({"seed": args.seed, "k": args.folds, "rows": rows}, indent=1) + "\n")
    return 0


def cmd_compare(args, out: _Out) -> int:
    ds = load_dataset(args.dataset)
    cmp = compare_models(ds, args.folds, args.seed, _fit_options(args))
    if args.out:
        doc = {"seed": args.seed, "k": args.folds, "gpr_mape": cmp.gpr_mape, "lr_mape": cmp.lr_mape}
        _write_text(args.out, json.dumps(doc, indent=1) + "\n")
    out.info(f"# seed: {args.seed}")
    out.result(f"gpr MAPE: {_fmt(cmp.gpr_mape)}%")
    out.result(f"lr MAPE: {_fmt(cmp.lr_mape)}%")
    return 0


def cmd_export(args, out: _Out) -> int:
    ds = load_dataset(args.dataset)
    try:
        rep = CvReport.from_dict(json.loads(Path(args.report).read_text(encoding="utf-8")))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{args.report}: invalid JSON ({exc})") from exc
    path = export_scatter(rep, ds, args.grouping, args.out)
    out.result(f"rows: {len(rep.per_sample)} -> {path}")
    return 0


# -- parser -------------------------------------------------------------------

def _add_fit_flags(p):
    p.add_argument("--restarts", type=int, default=5)
    p.add_argument("--max-iterations", type=int, default=200)
    p.add_argument("--tol", type=float, default=1e-6, help="relative log-likelihood convergence tolerance")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS,
                        help=f"RNG seed for folds, restarts and probes (default {DEFAULT_SEED})")
    common.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS)

    parser = _Parser(prog="encenergy", description=__doc__.splitlines()[0], parents=[common])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen", parents=[common], help="generate a synthetic dataset CSV")
    p.add_argument("--spec", help="CorpusSpec JSON")
    p.add_argument("--params", help="OracleParams JSON")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("measure", parents=[common], help="run the confidence-interval measurement loop")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--probe-dir", help="directory of <job>/dyn_<k>.csv, stat_<k>.csv trace pairs")
    src.add_argument("--synthetic-mu", type=float, help="mean energy (J) of a synthetic probe")
    p.add_argument("--synthetic-sigma-rel", type=float, default=0.0)
    p.add_argument("--jobs", type=int, default=1, help="number of synthetic jobs")
    p.add_argument("--alpha", type=float, default=0.99)
    p.add_argument("--beta", type=float, default=0.02)
    p.add_argument("--m-min", type=int, default=2)
    p.add_argument("--m-max", type=int, default=200)
    p.add_argument("--quantile-convention", choices=("two_sided", "one_sided"), default="two_sided")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_measure)

    p = sub.add_parser("fit", parents=[common], help="fit a model on a dataset CSV")
    p.add_argument("dataset")
    p.add_argument("--model-kind", choices=MODEL_KINDS, default="gpr")
    p.add_argument("--out", required=True)
    _add_fit_flags(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", parents=[common], help="predict encoding energy with a saved model")
    p.add_argument("model")
    p.add_argument("--input", help="dataset CSV to predict row by row")
    p.add_argument("--out", help="CSV output for --input predictions")
    p.add_argument("--sequence-id", default="query")
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--frames", type=int)
    p.add_argument("--standard", choices=[s.name for s in Standard])
    p.add_argument("--preset", choices=[pr.label for pr in Preset])
    p.add_argument("--qp", type=int)
    p.set_defaults(func=cmd_predict)

    for name, func, helptext in (
        ("cv", cmd_cv, "k-fold cross-validated MAPE"),
        ("ablate", cmd_ablate, "feature ablation study"),
        ("compare", cmd_compare, "GPR vs LR on identical folds"),
    ):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("dataset")
        p.add_argument("--folds", type=int, default=10)
        p.add_argument("--out", help="JSON report")
        _add_fit_flags(p)
        p.set_defaults(func=func)
        if name == "cv":
            p.add_argument("--model-kind", choices=MODEL_KINDS, default="gpr")
            p.add_argument("--csv", help="per-sample CSV report")
        if name == "ablate":
            p.add_argument("--groups", nargs="+", help="subset of feature groups")

    p = sub.add_parser("export", parents=[common], help="scatter-plot data from a CV report")
    p.add_argument("dataset")
    p.add_argument("report", help="JSON report written by `cv --out`")
    p.add_argument("--grouping", choices=GROUPINGS, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export)
    return parser


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, FoldError):
        return _exit_code(exc.cause)
    if isinstance(exc, ProbeExhausted):
        return 3
    if isinstance(exc, NumericalError):
        return 4
    return 2


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"UsageError: {exc}", file=sys.stderr)
        return 2
    args.seed = getattr(args, "seed", DEFAULT_SEED)
    args.quiet = getattr(args, "quiet", False)
    try:
        return args.func(args, _Out(args.quiet))
    except EncEnergyError as exc:
        print(f"{exc.kind}: {exc}", file=sys.stderr)
        return _exit_code(exc)
    except (OSError, ValueError) as exc:
        print(f"{type(exc).__name__}: {exc}".replace("\n", " "), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
