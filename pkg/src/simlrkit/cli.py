"""Command-line pipeline: preprocess, cluster, select-k, characterize, assoc, synth.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.
Every subcommand accepts ``--config FILE`` with ``key=value`` lines naming
long options (dashes or underscores); explicit flags override the file.
The thread count of the linear-algebra backend follows SIMLRKIT_NUM_THREADS.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
from itertools import combinations
from pathlib import Path

import numpy as np

from . import __version__
from .cluster import KSelectionResult, select_k
from .graph import DiffusionConfig, NumericalError, diffuse, read_dense_csv, symmetrize, write_dense_csv
from .ingest import (
    DEFAULT_MISSING_TOKENS,
    DataError,
    DataMatrix,
    atomic_write_text,
    load_matrix,
    preprocess,
    write_matrix,
    write_report,
)
from .kernels import build_kernel_set, pairwise_sq_dist
from .pipeline import GRAPH_METHODS, METHODS, base_similarity, run_method
from .stats import (
    GroupedSamples,
    anova_oneway,
    contingency_table,
    dunn_test,
    kruskal_wallis,
    logistic_fit,
)
from .synth import BlobSpec, write_blobs, write_labels

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
THREADS_ENV = "SIMLRKIT_NUM_THREADS"


class UsageError(Exception):
    pass


# -- small IO helpers -----------------------------------------------------------------

def read_labels(path, id_column: str = "subject_id", label_column: str = "label") -> dict[str, str]:
    import csv

    path = Path(path)
    if not path.is_file():
        raise DataError(f"{path}: no such file")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or id_column not in reader.fieldnames or label_column not in reader.fieldnames:
            raise DataError(f"{path}: expected columns {id_column!r} and {label_column!r}")
        out = {}
        for lineno, row in enumerate(reader, start=2):
            sid = row[id_column].strip()
            if sid in out:
                raise DataError(f"{path}:{lineno}: duplicate subject id {sid!r}")
            out[sid] = row[label_column].strip()
    return out


def align(ids, mapping: dict, what: str) -> list:
    missing = [sid for sid in ids if sid not in mapping]
    if missing:
        raise DataError(f"subject {missing[0]!r} missing from {what}")
    return [mapping[sid] for sid in ids]


def write_csv_rows(path, header, rows) -> None:
    def fmt(v):
        if isinstance(v, (float, np.floating)):
            return repr(float(v))
        if isinstance(v, np.integer):
            return str(int(v))
        return str(v)

    text = "\n".join([",".join(header)] + [",".join(fmt(v) for v in row) for row in rows]) + "\n"
    atomic_write_text(path, text)


def write_kv_report(path, items: dict) -> None:
    """Plain-text ``key: value`` report plus a JSON twin at ``<path>.json``."""
    lines = [f"{k}: {v}" for k, v in items.items()]
    atomic_write_text(path, "\n".join(lines) + "\n")
    atomic_write_text(Path(str(path) + ".json"), json.dumps(items, indent=2, default=str))


def write_kselection(path, result: KSelectionResult) -> None:
    rows = [(k, c, int(ok)) for k, c, ok in zip(result.candidate_ks, result.costs, result.converged)]
    write_csv_rows(path, ("K", "cost", "converged"), rows)


# -- subcommands ------------------------------------------------------------------------

def cmd_preprocess(args) -> int:
    X = load_matrix(args.input, args.id_column, missing_tokens=args.missing_token or DEFAULT_MISSING_TOKENS)
    Xp, report = preprocess(X, args.max_missing, args.iqr_factor, impute=not args.no_impute)
    write_matrix(Xp, args.output, id_column=args.id_column)
    write_report(report, args.report or f"{args.output}.report.txt")
    print(f"{Xp.shape[0]} subjects x {Xp.shape[1]} features written to {args.output}")
    return EXIT_OK


def _diffusion_from(args) -> DiffusionConfig:
    return DiffusionConfig(tau=args.tau, N=args.neighbors, T=args.diffusion_steps)


def _load_features(path, id_column) -> DataMatrix:
    X = load_matrix(path, id_column)
    if X.missing.any():
        raise DataError(f"{path}: {int(X.missing.sum())} missing cells; run preprocess first")
    return X


def cmd_cluster(args) -> int:
    X = _load_features(args.input, args.id_column)
    values = X.dense()
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    diffusion = _diffusion_from(args)
    start = time.perf_counter()
    D = kernels = None
    report: dict = {"method": args.method, "input": str(args.input), "seed": args.seed}

    if args.method in GRAPH_METHODS or args.k == "auto":
        D = pairwise_sq_dist(values)
        kernels = build_kernel_set(D)
        report["similarity_input"] = f"uniform-weight fusion of {kernels.m} Gaussian kernels, row-normalized"
        report["laplacian"] = "unnormalized D - theta"

    if args.k == "auto":
        # K must be fixed before SIMLR runs, so choose it on the base similarity
        base = base_similarity(kernels)
        base = diffuse(base, diffusion) if args.method.endswith("diffusion") else symmetrize(base)
        k_max = min(args.k_max, values.shape[0])
        sel = select_k(base, args.k_min, k_max, rule=args.k_rule)
        write_kselection(outdir / "kselect.csv", sel)
        K = sel.chosen_k
        report["k_selection"] = str(outdir / "kselect.csv")
    else:
        try:
            K = int(args.k)
        except ValueError:
            raise UsageError(f"--k must be an integer or 'auto', got {args.k!r}") from None
    if K < 1:
        raise UsageError("--k must be >= 1")
    if K == 1 and args.method != "kmeans":
        raise UsageError("graph methods need K >= 2")
    report["K"] = K

    overrides = {"max_outer_iters": args.max_iters}
    result = run_method(values, args.method, K, seed=args.seed, diffusion=diffusion, kernels=kernels, D=D,
                        simlr_overrides=overrides)

    labels_path = outdir / "labels.csv"
    write_labels(labels_path, X.subject_ids, result.assignment.labels)
    report["labels"] = str(labels_path)
    emb_path = outdir / "embedding.csv"
    write_matrix(
        DataMatrix.from_array(result.embedding, X.subject_ids, [f"dim{j + 1}" for j in range(result.embedding.shape[1])]),
        emb_path,
        id_column="subject_id",
    )
    report["embedding"] = str(emb_path)
    if result.similarity is not None:
        sim_path = outdir / "similarity.csv"
        write_dense_csv(sim_path, result.similarity)
        report["similarity"] = str(sim_path)
    report["silhouette"] = result.silhouette if result.silhouette is not None else "not defined for K=1"
    report["silhouette_space"] = "features" if args.method == "kmeans" else "Laplacian eigenvectors"
    report["cluster_sizes"] = result.assignment.sizes().tolist()
    if result.simlr is not None:
        report["simlr_iterations"] = result.simlr.iterations
        report["simlr_converged"] = result.simlr.converged
        report["simlr_final_rho1"] = result.simlr.rho1_trace[-1]
        report["simlr_final_rho2"] = result.simlr.rho2_trace[-1]
        trace_path = outdir / "objective_trace.csv"
        write_csv_rows(trace_path, ("iteration", "value"), list(enumerate(result.simlr.objective_trace)))
        gap_path = outdir / "eigengap_trace.csv"
        write_csv_rows(gap_path, ("iteration", "value"), list(enumerate(result.simlr.eigengap_trace)))
        report["objective_trace"] = str(trace_path)
        report["eigengap_trace"] = str(gap_path)
    if args.diagnosis:
        dx = read_labels(args.diagnosis, args.diagnosis_id_column, args.diagnosis_column)
        cats = align(X.subject_ids, dx, str(args.diagnosis))
        cont_path = outdir / "contingency.csv"
        atomic_write_text(cont_path, contingency_table(result.assignment.labels, cats))
        report["contingency"] = str(cont_path)
    report["seconds"] = round(time.perf_counter() - start, 3)
    write_kv_report(outdir / "report.txt", report)
    print(f"method={args.method} K={K} silhouette={report['silhouette']}")
    return EXIT_OK


def cmd_select_k(args) -> int:
    if args.similarity:
        S = read_dense_csv(args.input)
        if S.shape[0] != S.shape[1]:
            raise DataError(f"{args.input}: similarity matrix is {S.shape[0]}x{S.shape[1]}, not square")
        S = symmetrize(S)
    else:
        X = _load_features(args.input, args.id_column)
        S = symmetrize(base_similarity(build_kernel_set(pairwise_sq_dist(X.dense()))))
    if args.k_max > S.shape[0]:
        raise UsageError(f"--k-max {args.k_max} exceeds n={S.shape[0]}")
    sel = select_k(S, args.k_min, args.k_max, rule=args.k_rule)
    write_kselection(args.output, sel)
    print(f"chosen K = {sel.chosen_k}")
    return EXIT_OK


def _grouping(labels: dict, ids, control: str | None):
    lab = align(ids, labels, "labels")
    names = sorted({l for l in lab if l != control}, key=lambda s: (len(s), s))
    return np.array(lab), names


def cmd_characterize(args) -> int:
    labels = read_labels(args.labels)
    X = load_matrix(args.features, args.id_column)
    lab, subtypes = _grouping(labels, X.subject_ids, args.control_label)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    notes = []

    omnibus_rows = []
    pair_cols: dict[str, dict[str, float]] = {}
    for j, feat in enumerate(X.feature_names):
        observed = ~X.missing[:, j]
        col = X.values[:, j]
        groups, names = [], []
        for name in subtypes + ([args.control_label] if args.control_label else []):
            vals = col[(lab == name) & observed]
            if vals.size < 2:
                notes.append(f"{feat}: group {name!r} has {vals.size} observations; skipped")
                continue
            groups.append(vals)
            names.append(name)
        sub_idx = [i for i, nm in enumerate(names) if nm != args.control_label]
        if len(sub_idx) >= 2:
            sub = GroupedSamples([groups[i] for i in sub_idx], [names[i] for i in sub_idx])
            an = anova_oneway(sub)
            kw = kruskal_wallis(sub)
            for flag in an.flags + kw.flags:
                notes.append(f"{feat}: {flag}")
            omnibus_rows.append((feat, an.statistic, an.p_value, kw.statistic, kw.p_value))
        if len(groups) >= 2:
            g = GroupedSamples(groups, names)
            try:
                pairs = dunn_test(g)
            except ValueError as exc:
                notes.append(f"{feat}: Dunn skipped ({exc})")
                continue
            for r in pairs:
                a, b = r.group_a, r.group_b
                if b != args.control_label and a == args.control_label:
                    a, b = b, a
                key = f"{a} vs {b}"
                pair_cols.setdefault(key, {})[feat] = r.p_adjusted

    write_csv_rows(outdir / "omnibus.csv", ("feature", "F", "p_anova", "H", "p_kw"), omnibus_rows)
    order = [f"{a} vs {b}" for a, b in combinations(subtypes, 2)]
    if args.control_label:
        order = [f"{s} vs {args.control_label}" for s in subtypes] + order
    rows = [
        (key, *[pair_cols.get(key, {}).get(f, "") for f in X.feature_names]) for key in order
    ]
    write_csv_rows(outdir / "pairwise.csv", ("pair", *X.feature_names), rows)
    write_kv_report(outdir / "characterize.txt", {
        "groups": subtypes,
        "control": args.control_label or "",
        "correction": "bonferroni over all pairs per feature",
        "notes": notes,
    })
    print(f"{len(omnibus_rows)} omnibus rows, {len(rows)} pairwise rows")
    return EXIT_OK


def _parse_contrasts(specs, groups, control):
    if specs:
        out = []
        for spec in specs:
            if ":" not in spec:
                raise UsageError(f"contrast must look like CASE:REFERENCE, got {spec!r}")
            a, b = spec.split(":", 1)
            out.append((a.strip(), b.strip()))
        return out
    if control:
        return [(g, control) for g in groups]
    return list(combinations(groups, 2))


def cmd_assoc(args) -> int:
    labels = read_labels(args.labels)
    V = load_matrix(args.variants, args.id_column)
    ids = V.subject_ids
    lab, groups = _grouping(labels, ids, args.control_label)
    cov_names: tuple[str, ...] = ()
    cov = np.empty((len(ids), 0))
    if args.covariates:
        C = load_matrix(args.covariates, args.id_column)
        if C.missing.any():
            raise DataError(f"{args.covariates}: covariates contain missing cells")
        pos = {sid: i for i, sid in enumerate(C.subject_ids)}
        rows = align(ids, pos, str(args.covariates))
        cov = C.values[rows]
        cov_names = C.feature_names
    rows_out = []
    for case, ref in _parse_contrasts(args.contrast, groups, args.control_label):
        sel = (lab == case) | (lab == ref)
        y_all = (lab == case).astype(float)
        for j, var in enumerate(V.feature_names):
            keep = sel & ~V.missing[:, j]
            y = y_all[keep]
            if y.min() == y.max():
                raise DataError(f"contrast {case}:{ref} has a single class for {var}")
            Xd = np.column_stack([np.ones(keep.sum()), V.values[keep, j], cov[keep]])
            names = ("intercept", var, *cov_names)
            fitres = logistic_fit(y, Xd, names)
            rows_out.append((
                var, f"{case} vs {ref}", float(fitres.coefficients[1]), float(fitres.standard_errors[1]),
                float(fitres.wald_z[1]), float(fitres.p_values[1]), int(fitres.converged),
                int(fitres.p_values[1] < args.alpha), fitres.diagnostic,
            ))
    write_csv_rows(
        args.output,
        ("variant", "contrast", "coefficient", "se", "z", "p", "converged", "significant", "diagnostic"),
        rows_out,
    )
    print(f"{len(rows_out)} association tests written to {args.output}")
    return EXIT_OK


def cmd_synth(args) -> int:
    spec = BlobSpec(args.k, args.n_per_cluster, args.p, args.center_scale, args.noise_std, args.seed)
    X, _ = write_blobs(spec, args.output, args.labels_output or f"{args.output}.labels.csv")
    print(f"{X.shape[0]} x {X.shape[1]} written to {args.output}")
    return EXIT_OK


# -- argument parsing -------------------------------------------------------------------

def _add_common(p):
    p.add_argument("--config", help="key=value file of option defaults")
    p.add_argument("--id-column", default="subject_id", help="subject id column (default: subject_id)")


def _add_diffusion(p):
    p.add_argument("--tau", type=float, default=0.8)
    p.add_argument("--neighbors", type=int, default=10, help="diffusion neighbourhood size N")
    p.add_argument("--diffusion-steps", type=int, default=20, help="diffusion iterations T")


def _add_k_range(p):
    p.add_argument("--k-min", type=int, default=2)
    p.add_argument("--k-max", type=int, default=10)
    p.add_argument("--k-rule", choices=("argmin", "largest-drop"), default="argmin")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="simlrkit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="drop sparse features, winsorize, impute, z-score")
    _add_common(p)
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--report")
    p.add_argument("--max-missing", type=float, default=0.5)
    p.add_argument("--iqr-factor", type=float, default=1.5)
    p.add_argument("--missing-token", action="append", help="repeatable; default: empty and NA")
    p.add_argument("--no-impute", action="store_true")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("cluster", help="cluster a preprocessed matrix")
    _add_common(p)
    p.add_argument("input")
    p.add_argument("--method", choices=METHODS, default="simlr-diffusion")
    p.add_argument("--k", default="auto", help="cluster count or 'auto'")
    p.add_argument("--outdir", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iters", type=int, default=30, help="SIMLR outer iterations")
    p.add_argument("--diagnosis", help="CSV with a diagnosis column for the contingency table")
    p.add_argument("--diagnosis-column", default="diagnosis")
    p.add_argument("--diagnosis-id-column", default="subject_id")
    _add_diffusion(p)
    _add_k_range(p)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("select-k", help="separation-cost curve over a K range")
    _add_common(p)
    p.add_argument("input")
    p.add_argument("--similarity", action="store_true", help="input is a headerless similarity CSV")
    p.add_argument("-o", "--output", required=True)
    _add_k_range(p)
    p.set_defaults(func=cmd_select_k)

    p = sub.add_parser("characterize", help="ANOVA, Kruskal-Wallis and Dunn tables per feature")
    _add_common(p)
    p.add_argument("--labels", required=True, help="CSV subject_id,label")
    p.add_argument("--features", required=True)
    p.add_argument("--control-label", help="label value marking the control group")
    p.add_argument("--outdir", required=True)
    p.set_defaults(func=cmd_characterize)

    p = sub.add_parser("assoc", help="covariate-adjusted logistic association per variant")
    _add_common(p)
    p.add_argument("--labels", required=True)
    p.add_argument("--variants", required=True)
    p.add_argument("--covariates")
    p.add_argument("--contrast", action="append", help="CASE:REFERENCE label pair; repeatable")
    p.add_argument("--control-label")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_assoc)

    p = sub.add_parser("synth", help="write a synthetic Gaussian-blob cohort")
    _add_common(p)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--n-per-cluster", type=int, default=100)
    p.add_argument("--p", type=int, default=63)
    p.add_argument("--center-scale", type=float, default=1.0)
    p.add_argument("--noise-std", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--labels-output")
    p.set_defaults(func=cmd_synth)
    return parser


def read_config(path) -> dict[str, str]:
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"config file {path} not found")
    out = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = line.split("=", 1)
        out[key.strip().lstrip("-").replace("-", "_")] = value.strip()
    return out


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if not getattr(args, "config", None):
        return args
    sub = parser._subparsers._group_actions[0].choices[args.command]
    actions = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, raw in read_config(args.config).items():
        action = actions.get(key)
        if action is None or not action.option_strings:
            raise UsageError(f"unknown config key {key!r}")
        if action.nargs == 0:
            defaults[key] = raw.lower() in ("1", "true", "yes", "on")
        elif isinstance(action, argparse._AppendAction):
            defaults[key] = [v.strip() for v in raw.split(",")]
        else:
            defaults[key] = action.type(raw) if action.type else raw
    for key in defaults:
        actions[key].required = False
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def _limit_threads():
    value = os.environ.get(THREADS_ENV)
    if not value:
        return None
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=int(value))


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
    except UsageError as exc:
        print(f"simlrkit: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:
        return int(exc.code or 0)
    _limit_threads()
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"simlrkit: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        print(f"simlrkit: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"simlrkit: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"simlrkit: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
