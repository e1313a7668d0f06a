"""Command-line surface: ingest-check, train, evaluate, sweep, analyze, synth.

Every command writes into an output directory containing exactly one
manifest (command, config, seeds, input digests). Reruns with identical
inputs and flags produce byte-identical outputs, manifest timestamp aside;
sweep additionally caches per-cell results and skips cells whose cached
digest still matches.
"""

import argparse
import dataclasses
import hashlib
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

from . import __version__, analysis, cv, data, logreg, metrics, pmf, synth


def _sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(outdir: Path, command: str, entries: dict) -> None:
    lines = [
        f"command={command}",
        f"version={__version__}",
        f"timestamp={datetime.now(timezone.utc).isoformat()}",
    ]
    for key in sorted(entries):
        lines.append(f"{key}={entries[key]}")
    (outdir / "manifest.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _grouped_dataset(args, for_pmf: bool) -> data.Dataset:
    ds = data.ingest_attempts(args.input)
    ds = data.apply_replacement_level(ds, args.N)
    if for_pmf:
        ds = data.apply_problem_grouping(ds, args.min_problem_climbers)
    # Guarantee fallback rows whenever grouping is active, so the trained
    # model can score unseen entities later.
    return data.with_reserved_groups(
        ds,
        add_replacement=args.N >= 1,
        add_rare_problem=for_pmf and args.min_problem_climbers >= 1,
    )


def cmd_train(args) -> int:
    out = _outdir(args)
    if args.model == "pmf":
        if args.d is None:
            raise UsageError("--d is required for --model pmf")
        ds = _grouped_dataset(args, for_pmf=True)
        cfg = pmf.PmfConfig(
            d=args.d,
            epochs=args.epochs if args.epochs is not None else 1000,
            learning_rate=args.lr if args.lr is not None else 0.01,
            init_scale=args.init_scale,
            seed=args.seed,
            batch_size=_parse_batch(args.batch_size),
        )
        model = pmf.train_pmf(ds, cfg)
        pmf.save_pmf(model, out / "model.txt")
        probs = pmf.score_attempts(model, ds.attempts)
    else:
        ds = _grouped_dataset(args, for_pmf=False)
        cfg = logreg.TrainConfig(
            learning_rate=args.lr if args.lr is not None else 0.1,
            epochs=args.epochs if args.epochs is not None else 2000,
            seed=args.seed,
            tolerance=args.tolerance,
        )
        model = logreg.train_logreg(ds, cfg)
        logreg.save_logreg(model, out / "model.txt")
        probs = logreg.score_attempts(model, ds.attempts)
    ps = metrics.PredictionSet(tuple((a.outcome, p) for a, p in zip(ds.attempts, probs)))
    (out / "metrics.txt").write_text(metrics.format_report(metrics.evaluate(ps)), encoding="utf-8")
    _write_manifest(out, "train", {
        "model": args.model,
        "input": args.input,
        "input_sha256": _sha256_file(args.input),
        "N": args.N,
        "d": "" if args.d is None else args.d,
        "seed": args.seed,
        "epochs": cfg.epochs,
        "learning_rate": cfg.learning_rate,
        "min_problem_climbers": args.min_problem_climbers if args.model == "pmf" else "",
        "attempts": len(ds.attempts),
        "m": ds.m,
        "n": ds.n,
    })
    print(f"trained {args.model} on {len(ds.attempts)} attempts (m={ds.m}, n={ds.n}) -> {out}")
    return 0


def _load_any_model(path):
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
    if first.startswith("pmf "):
        return "pmf", pmf.load_pmf(path)
    return "logreg", logreg.load_logreg(path)


def cmd_evaluate(args) -> int:
    out = _outdir(args)
    ds = data.ingest_attempts(args.input)
    kind, model = _load_any_model(args.model_file)
    if kind == "pmf":
        probs = pmf.score_attempts(model, ds.attempts)
    else:
        probs = logreg.score_attempts(model, ds.attempts)
    ps = metrics.PredictionSet(tuple((a.outcome, p) for a, p in zip(ds.attempts, probs)))
    report = metrics.evaluate(ps)
    (out / "metrics.txt").write_text(metrics.format_report(report), encoding="utf-8")
    _write_manifest(out, "evaluate", {
        "model_file": args.model_file,
        "model_sha256": _sha256_file(args.model_file),
        "input": args.input,
        "input_sha256": _sha256_file(args.input),
        "attempts": len(ds.attempts),
    })
    sys.stdout.write(metrics.format_report(report))
    return 0


def _cell_digest(input_digest: str, spec: cv.CellSpec, k: int, seed: int) -> str:
    payload = json.dumps(
        {
            "input": input_digest,
            "model": spec.model,
            "N": spec.N,
            "d": spec.d,
            "k": k,
            "seed": seed,
            "min_problem_climbers": spec.min_problem_climbers,
            "pmf": dataclasses.asdict(spec.pmf_config),
            "logreg": dataclasses.asdict(spec.logreg_config),
        },
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode()).hexdigest()


def _report_to_dict(r: metrics.MetricsReport) -> dict:
    return {name: r.value(name) for name in metrics.METRIC_NAMES} | {
        "tp": r.tp, "tn": r.tn, "fp": r.fp, "fn": r.fn,
    }


def _report_from_dict(d: dict) -> metrics.MetricsReport:
    return metrics.MetricsReport(
        accuracy=d["accuracy"], f1=d["f1"], brier=d["brier"], log_loss=d["log_loss"],
        roc_auc=d["roc_auc"], tp=d["tp"], tn=d["tn"], fp=d["fp"], fn=d["fn"],
    )


def cmd_sweep(args) -> int:
    out = _outdir(args)
    cells_dir = out / "cells"
    cells_dir.mkdir(exist_ok=True)
    ds = data.ingest_attempts(args.input)
    input_digest = _sha256_file(args.input)
    grid = cv.ExperimentGrid(
        replacement_levels=tuple(args.levels),
        latent_dims=tuple(args.dims),
        include_logreg=not args.no_logreg,
        k=args.k,
        seed=args.seed,
        pmf_config=pmf.PmfConfig(
            d=1, epochs=args.pmf_epochs, learning_rate=args.pmf_lr, seed=args.seed
        ),
        logreg_config=logreg.TrainConfig(
            learning_rate=args.logreg_lr, epochs=args.logreg_epochs, seed=args.seed
        ),
        min_problem_climbers=args.min_problem_climbers,
    )
    folds = data.split_folds(ds, grid.k, grid.seed)
    specs = cv.enumerate_cells(grid)

    fold_reports = {}
    pending = []
    for spec in specs:
        digest = _cell_digest(input_digest, spec, grid.k, grid.seed)
        cache = cells_dir / f"{spec.cell_id}.json"
        if cache.exists():
            payload = json.loads(cache.read_text(encoding="utf-8"))
            if payload.get("digest") == digest:
                fold_reports[spec.cell_id] = {
                    split: [_report_from_dict(r) for r in payload[split]]
                    for split in cv.SPLITS
                }
                continue
        pending.append((spec, digest, cache))

    def _store(spec, digest, cache, reports):
        fold_reports[spec.cell_id] = reports
        payload = {"digest": digest}
        payload |= {split: [_report_to_dict(r) for r in reports[split]] for split in cv.SPLITS}
        cache.write_text(json.dumps(payload, indent=1, sort_keys=True), encoding="utf-8")

    if args.jobs > 1 and pending:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            computed = pool.map(cv._run_cell_task, [(ds, spec, folds) for spec, _, _ in pending])
            for (spec, digest, cache), (_, reports) in zip(pending, computed):
                _store(spec, digest, cache, reports)
    else:
        for spec, digest, cache in pending:
            _store(spec, digest, cache, cv.run_cell_folds(ds, spec, folds))

    results = []
    for spec in sorted(specs, key=cv._cell_sort_key):
        results.extend(cv.aggregate_cell(spec, fold_reports[spec.cell_id]))
    cv.write_results_csv(out / "results.csv", results)
    for N in sorted(grid.replacement_levels):
        cv.write_facet_csv(out / f"facet_N{N}.csv", results, N)
    _write_manifest(out, "sweep", {
        "input": args.input,
        "input_sha256": input_digest,
        "levels": ",".join(str(x) for x in sorted(grid.replacement_levels)),
        "dims": ",".join(str(x) for x in sorted(grid.latent_dims)),
        "include_logreg": grid.include_logreg,
        "k": grid.k,
        "seed": grid.seed,
        "jobs": args.jobs,
        "pmf_epochs": args.pmf_epochs,
        "pmf_lr": args.pmf_lr,
        "logreg_epochs": args.logreg_epochs,
        "logreg_lr": args.logreg_lr,
        "min_problem_climbers": args.min_problem_climbers,
        "cells": len(specs),
        "cells_computed": len(pending),
    })
    print(f"sweep wrote {len(results)} cell results ({len(pending)} computed, "
          f"{len(specs) - len(pending)} cached) -> {out / 'results.csv'}")
    return 0


def cmd_analyze(args) -> int:
    out = _outdir(args)
    model = pmf.load_pmf(args.model_file)
    ds = data.ingest_attempts(args.input)
    heights = data.ingest_heights(args.heights) if args.heights else None
    lr_model = logreg.load_logreg(args.logreg_model) if args.logreg_model else None
    labels, climber_result = analysis.climber_pca(model)
    vars = analysis.build_climber_variables(model, ds, labels, logreg_model=lr_model, heights=heights)
    corr = analysis.correlation_matrix(climber_result, vars)
    problems = analysis.problem_projection(model, ds)
    analysis.write_climber_pca_csv(out / "climber_pca.csv", labels, climber_result, vars)
    analysis.write_problem_pca_csv(out / "problem_pca.csv", problems)
    analysis.write_correlations_csv(out / "correlations.csv", corr)
    analysis.write_correlation_counts_csv(out / "correlation_counts.csv", corr)
    if args.svg:
        xs = climber_result.scores[:, 0]
        ys = climber_result.scores[:, 1] if climber_result.scores.shape[1] > 1 else xs * 0.0
        colors = [p for p in vars.p_success]
        analysis.write_scatter_svg(out / "climber_embeddings.svg", xs, ys, colors,
                                   title="climber embeddings (PC1 vs PC2, colored by success rate)")
        px = [row["coords"][0] for row in problems]
        py = [row["coords"][1] if len(row["coords"]) > 1 else 0.0 for row in problems]
        pc = [row["success_rate"] if row["success_rate"] is not None else 0.5 for row in problems]
        analysis.write_scatter_svg(out / "problem_embeddings.svg", px, py, pc,
                                   title="problem embeddings (PC1 vs PC2, colored by success rate)")
    _write_manifest(out, "analyze", {
        "model_file": args.model_file,
        "model_sha256": _sha256_file(args.model_file),
        "input": args.input,
        "input_sha256": _sha256_file(args.input),
        "heights": args.heights or "",
        "logreg_model": args.logreg_model or "",
        "climbers_analyzed": len(labels),
        "pca_rows": "all climber rows except REPLACEMENT",
        "explained_variance_ratio": ",".join(
            repr(float(x)) for x in climber_result.explained_variance_ratio
        ),
    })
    print(f"analyzed {len(labels)} climbers and {len(problems)} problems -> {out}")
    return 0


def cmd_synth(args) -> int:
    out = _outdir(args)
    spec = synth.SynthSpec(
        m_climbers=args.m,
        n_problems=args.n,
        d_true=args.d_true,
        density=args.density,
        u_scale=args.u_scale if len(args.u_scale) > 1 else args.u_scale[0],
        v_scale=args.v_scale if len(args.v_scale) > 1 else args.v_scale[0],
        v_shift=args.v_shift if len(args.v_shift) > 1 else args.v_shift[0],
        seed=args.seed,
    )
    dataset, truth = synth.generate(spec)
    data.write_attempts_csv(out / "attempts.csv", dataset.attempts)
    truth_payload = {
        "bayes_log_loss": truth.bayes_log_loss,
        "d_true": spec.d_true,
        "U_true": truth.U_true.tolist(),
        "V_true": truth.V_true.tolist(),
        "cells": [[c, p, prob] for (c, p), prob in truth.cell_probabilities.items()],
    }
    (out / "truth.json").write_text(json.dumps(truth_payload, indent=1), encoding="utf-8")
    _write_manifest(out, "synth", {
        "m": args.m, "n": args.n, "d_true": args.d_true,
        "density": args.density,
        "u_scale": ",".join(str(x) for x in args.u_scale),
        "v_scale": ",".join(str(x) for x in args.v_scale),
        "v_shift": ",".join(str(x) for x in args.v_shift),
        "seed": args.seed,
        "attempts": len(dataset.attempts),
        "m_observed": dataset.m,
        "n_observed": dataset.n,
    })
    print(f"generated {len(dataset.attempts)} attempts (m={dataset.m}, n={dataset.n}) -> {out}")
    return 0


def cmd_ingest_check(args) -> int:
    ds = data.ingest_attempts(args.input)
    print(f"attempts={len(ds.attempts)}")
    print(f"climbers={ds.m}")
    print(f"problems={ds.n}")
    if args.heights:
        heights = data.ingest_heights(args.heights)
        known = {m.climber for m in heights if m.height_cm is not None}
        matched = sum(1 for name in ds.climber_index if name in known)
        print(f"heights_rows={len(heights)}")
        print(f"heights_matched={matched}")
    return 0


class UsageError(ValueError):
    pass


def _parse_batch(value: str):
    if value == pmf.FULL:
        return pmf.FULL
    try:
        return int(value)
    except ValueError:
        raise UsageError(f"--batch-size must be an integer or '{pmf.FULL}', got {value!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="boulderfit",
        description="Fit and analyze models of bouldering attempt outcomes.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest-check", help="validate an attempt file and print a summary")
    p.add_argument("--input", required=True)
    p.add_argument("--heights")
    p.set_defaults(func=cmd_ingest_check)

    p = sub.add_parser("train", help="train one model and write it with its training metrics")
    p.add_argument("--model", choices=("logreg", "pmf"), required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--N", type=int, default=0, help="replacement level (default 0: no merging)")
    p.add_argument("--d", type=int, help="latent dimension (pmf only)")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tolerance", type=float, default=1e-10, help="logreg early-stop tolerance")
    p.add_argument("--init-scale", type=float, default=0.1)
    p.add_argument("--batch-size", default=pmf.FULL)
    p.add_argument("--min-problem-climbers", type=int, default=cv.DEFAULT_MIN_PROBLEM_CLIMBERS)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a saved model on an attempt file")
    p.add_argument("--model-file", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="k-fold sweep over replacement levels and latent dimensions")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--levels", type=int, nargs="+", default=list(cv.DEFAULT_REPLACEMENT_LEVELS))
    p.add_argument("--dims", type=int, nargs="+", default=list(cv.DEFAULT_LATENT_DIMS))
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-logreg", action="store_true")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--pmf-epochs", type=int, default=1000)
    p.add_argument("--pmf-lr", type=float, default=0.01)
    p.add_argument("--logreg-epochs", type=int, default=2000)
    p.add_argument("--logreg-lr", type=float, default=0.1)
    p.add_argument("--min-problem-climbers", type=int, default=cv.DEFAULT_MIN_PROBLEM_CLIMBERS)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("analyze", help="PCA and correlation analysis of a trained pmf model")
    p.add_argument("--model-file", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--heights")
    p.add_argument("--logreg-model", help="optional logreg model supplying the lr_coef variable")
    p.add_argument("--out", required=True)
    p.add_argument("--svg", action="store_true", help="also emit scatter SVGs")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("synth", help="generate synthetic attempts with known ground truth")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--d-true", type=int, required=True)
    p.add_argument("--density", type=float, default=1.0)
    p.add_argument("--u-scale", type=float, nargs="+", default=[1.0])
    p.add_argument("--v-scale", type=float, nargs="+", default=[1.0])
    p.add_argument("--v-shift", type=float, nargs="+", default=[0.0])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as e:
        parser.error(str(e))
    except (data.IngestError, ValueError, KeyError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
