"""Command-line experiment driver.

Subcommands: simulate | fit | stability | eval | residual | check.
Every run is a pure function of its arguments and seed: numeric outputs are
byte-identical across repeats (timings go to the stderr log, never into
output files).  Option precedence is flags over config file over defaults;
the JSON config is versioned and unknown keys are rejected.

Exit codes: 0 success, 2 invalid input, 3 no convergence, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import io
from .datagen import SimSpec, gen_confounded, save_instance
from .em import EmRcaConfig, em_rca_fit
from .exceptions import (
    FileIOError,
    InvalidInput,
    NoConvergence,
    NotPositiveDefinite,
    ParseError,
    RescompError,
)
from .glasso import GlassoConfig, glasso_fit, kkt_residual
from .kernels import KernelSpec, TimeGrid, mean_column_variance, rbf_gram, residual_scores
from .linalg import GepDecomp, cholesky, gep_residual, spd_inverse
from .metrics import (
    EdgeScoreSet,
    envelope_frequencies,
    precision_recall,
    roc,
    save_curve_csv,
    save_curve_json,
    scores_from_frequencies,
)
from .rca import ppca_fit, rca_fit
from .stability import (
    edge_list,
    lambda_grid,
    load_edge_path,
    save_edge_path,
    stability_select,
    threshold_edges,
)

logger = logging.getLogger("rescomp")

CONFIG_VERSION = 1

DEFAULTS = {
    "simulate": {"n": 100, "p": 50, "q": 3, "sparsity": 0.01, "snr": 10.0,
                 "seed": 0},
    "fit": {"fitter": "em_rca", "lam": 0.1, "rank": None, "max_iter": None,
            "tol": None, "seed": 0},
    "stability": {"fitter": "glasso", "grid_count": 23, "lo_exp": -8.0,
                  "hi_exp": 3.0, "repeats": 100, "fraction": 0.9,
                  "edge_mode": "support", "jobs": 1, "em_max_iter": None,
                  "seed": 0},
    "eval": {"threshold": 0.5, "seed": 0},
    "residual": {"lengthscale": 20.0, "jitter": 0.01, "seed": 0},
    "check": {"tolerance": 1e-8, "kkt_tol": 1e-6, "seed": 0},
}


def _merge_options(subcommand: str, args: argparse.Namespace) -> dict:
    """defaults <- config file <- explicit flags."""
    options = dict(DEFAULTS[subcommand])
    if args.config is not None:
        raw = io.read_json(args.config)
        version = raw.pop("version", None)
        if version != CONFIG_VERSION:
            raise InvalidInput(f"config version must be {CONFIG_VERSION}, got {version}")
        raw.pop("subcommand", None)
        unknown = set(raw) - set(options)
        if unknown:
            raise InvalidInput(f"unknown config keys: {sorted(unknown)}")
        options.update(raw)
    for key in options:
        flag = getattr(args, key, None)
        if flag is not None:
            options[key] = flag
    return options


def _out_dir(args) -> Path:
    if args.out is None:
        raise InvalidInput("--out is required")
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise FileIOError(out, f"cannot create output directory ({exc})") from exc
    return out


def _load_centered(path):
    data = io.read_matrix_csv(path)
    if data.ndim != 2 or data.shape[0] < 1:
        raise InvalidInput(f"data file {path} is empty")
    means = data.mean(axis=0)
    return data - means, means


def cmd_simulate(args) -> int:
    opts = _merge_options("simulate", args)
    out = _out_dir(args)
    spec = SimSpec(n=int(opts["n"]), p=int(opts["p"]), q=int(opts["q"]),
                   sparsity=float(opts["sparsity"]), snr=float(opts["snr"]),
                   seed=int(opts["seed"]))
    started = time.perf_counter()
    instance = gen_confounded(spec)
    save_instance(instance, out)
    logger.info("simulate: wrote %s in %.2fs", out, time.perf_counter() - started)
    return 0


def cmd_fit(args) -> int:
    opts = _merge_options("fit", args)
    if args.data is None:
        raise InvalidInput("--data is required")
    out = _out_dir(args)
    fitter = opts["fitter"]
    if fitter not in ("glasso", "em_rca", "ppca", "rca"):
        raise InvalidInput(f"unknown fitter {fitter!r}")
    data, means = _load_centered(args.data)
    n, p = data.shape
    second_moment = data.T @ data / n
    started = time.perf_counter()

    artifact = {
        "version": 1,
        "fitter": fitter,
        "n": n,
        "p": p,
        "seed": int(opts["seed"]),
        "column_means": [float(m) for m in means],
        "converged": True,
    }
    if fitter == "glasso":
        config = GlassoConfig() if opts["max_iter"] is None else \
            GlassoConfig(max_iter=int(opts["max_iter"]))
        result = glasso_fit(second_moment, float(opts["lam"]), config=config)
        artifact.update({
            "lam": float(opts["lam"]),
            "precision": [[float(v) for v in row] for row in result.entries],
            "trace": [float(v) for v in result.objective_trace],
            "converged": bool(result.converged),
            "n_iter": int(result.n_iter),
        })
    elif fitter == "em_rca":
        config = EmRcaConfig()
        if opts["max_iter"] is not None:
            config.max_iter = int(opts["max_iter"])
        if opts["tol"] is not None:
            config.tol = float(opts["tol"])
        state = em_rca_fit(data, float(opts["lam"]), config=config)
        sigma = spd_inverse(state.precision.entries) + state.noise_var * np.eye(p)
        solution = rca_fit(second_moment, sigma, role="primal")
        if solution.rank > state.rank:
            solution = solution.truncated(state.rank)
        artifact.update({
            "lam": float(state.lam),
            "noise_var": float(state.noise_var),
            "loadings": [[float(v) for v in row] for row in state.loadings_w],
            "basis": [[float(v) for v in row] for row in solution.basis],
            "values": [float(v) for v in solution.retained_values],
            "precision": [[float(v) for v in row]
                          for row in state.precision.entries],
            # state.trace[0] is the initialization objective; the artifact
            # trace holds one value per iteration
            "initial_objective": float(state.trace[0]),
            "trace": [float(v) for v in state.trace[1:]],
            "converged": bool(state.converged),
            "n_iter": int(state.iteration),
            "role": "primal",
        })
    elif fitter == "ppca":
        noise_var = float(np.trace(second_moment)) / (2.0 * p)
        rank = None if opts["rank"] is None else int(opts["rank"])
        solution = ppca_fit(second_moment, noise_var, rank=rank)
        artifact.update({
            "noise_var": noise_var,
            "loadings": [[float(v) for v in row] for row in solution.loadings],
            "values": [float(v) for v in solution.values],
            "role": "primal",
        })
    else:  # rca
        if args.sigma is None:
            raise InvalidInput("--sigma is required for the rca fitter")
        sigma = io.read_matrix_csv(args.sigma)
        rank = None if opts["rank"] is None else int(opts["rank"])
        solution = rca_fit(second_moment, sigma, rank=rank, role="primal")
        artifact.update({
            "sigma": [[float(v) for v in row] for row in sigma],
            "loadings": [[float(v) for v in row] for row in solution.loadings],
            "basis": [[float(v) for v in row] for row in solution.basis],
            "values": [float(v) for v in solution.retained_values],
            "role": "primal",
        })
    io.write_json(out / "model.json", artifact)
    logger.info("fit(%s): wrote %s in %.2fs", fitter, out / "model.json",
                time.perf_counter() - started)
    if not artifact["converged"]:
        raise NoConvergence(f"{fitter} did not converge; artifact written to {out}")
    return 0


def cmd_stability(args) -> int:
    opts = _merge_options("stability", args)
    if args.data is None:
        raise InvalidInput("--data is required")
    out = _out_dir(args)
    data, _ = _load_centered(args.data)
    grid = lambda_grid(int(opts["grid_count"]), float(opts["lo_exp"]),
                       float(opts["hi_exp"]))
    em_config = None
    if opts["em_max_iter"] is not None:
        em_config = EmRcaConfig(max_iter=int(opts["em_max_iter"]))
    started = time.perf_counter()
    path = stability_select(
        data, opts["fitter"], grid,
        repeats=int(opts["repeats"]), fraction=float(opts["fraction"]),
        seed=int(opts["seed"]), edge_mode=opts["edge_mode"],
        n_jobs=int(opts["jobs"]), em_config=em_config,
    )
    save_edge_path(path, out / "path.json", out / "path.csv")
    logger.info("stability: wrote %s in %.2fs", out, time.perf_counter() - started)
    return 0


def cmd_eval(args) -> int:
    opts = _merge_options("eval", args)
    if args.path is None or args.truth is None:
        raise InvalidInput("--path and --truth are required")
    out = _out_dir(args)
    path = load_edge_path(args.path)
    truth = io.read_edges_csv(args.truth)
    if not truth:
        raise InvalidInput(f"truth edge set in {args.truth} is empty")
    edges = edge_list(path.dim)
    universe = len(edges)
    started = time.perf_counter()

    threshold = float(opts["threshold"])
    curve_rows = []
    auprc_rows = []
    called_rows = []
    for li, lam in enumerate(path.grid.lambdas):
        scored = scores_from_frequencies(path.frequencies[li], edges)
        curve = precision_recall(EdgeScoreSet(scored, truth, universe))
        lam_txt = io.fmt(lam)
        for recall, precision in curve.points:
            curve_rows.append([lam_txt, io.fmt(recall), io.fmt(precision)])
        auprc_rows.append([lam_txt, io.fmt(curve.area)])
        for i, j in sorted(threshold_edges(path, li, threshold)):
            called_rows.append([lam_txt, i, j])
    envelope = precision_recall(EdgeScoreSet(
        scores_from_frequencies(envelope_frequencies(path.frequencies), edges),
        truth, universe))
    auprc_rows.append(["envelope", io.fmt(envelope.area)])
    io.write_rows_csv(out / "curves.csv", ["lambda", "recall", "precision"],
                      curve_rows)
    io.write_rows_csv(out / "called_edges.csv", ["lambda", "i", "j"], called_rows)
    save_curve_csv(out / "envelope.csv", envelope)
    save_curve_json(out / "envelope.json", envelope)
    io.write_rows_csv(out / "auprc.csv", ["lambda", "auprc"], auprc_rows)
    logger.info("eval: wrote %s in %.2fs", out, time.perf_counter() - started)
    return 0


def cmd_residual(args) -> int:
    opts = _merge_options("residual", args)
    if args.data is None or args.grid is None:
        raise InvalidInput("--data and --grid are required")
    out = _out_dir(args)
    grid = TimeGrid.from_csv(args.grid)
    data, means = _load_centered(args.data)
    if data.shape[0] != len(grid):
        raise InvalidInput(
            f"time grid has {len(grid)} rows but data has {data.shape[0]}"
        )
    spec = KernelSpec(lengthscale=float(opts["lengthscale"]),
                      jitter_fraction=float(opts["jitter"]))
    variance = mean_column_variance(data)
    gram = rbf_gram(grid, spec, data_variance=variance)
    started = time.perf_counter()
    scores, rank = residual_scores(data, gram)
    io.write_vector_csv(out / "scores.csv", scores, column="score")
    io.write_json(out / "meta.json", {
        "version": 1,
        "rank": int(rank),
        "lengthscale": float(spec.lengthscale),
        "jitter_fraction": float(spec.jitter_fraction),
        "data_variance": float(variance),
        "column_means": [float(m) for m in means],
    })
    if args.labels is not None:
        labels = io.read_matrix_csv(args.labels).reshape(-1)
        if labels.shape[0] != scores.shape[0]:
            raise InvalidInput("labels length does not match feature count")
        curve = roc(scores, labels > 0.5)
        save_curve_csv(out / "roc.csv", curve)
        save_curve_json(out / "roc.json", curve)
    logger.info("residual: wrote %s in %.2fs", out, time.perf_counter() - started)
    return 0


def cmd_check(args) -> int:
    opts = _merge_options("check", args)
    if args.artifact is None or args.data is None:
        raise InvalidInput("--artifact and --data are required")
    out = _out_dir(args)
    artifact = io.read_json(args.artifact)
    try:
        fitter = artifact["fitter"]
        means = np.asarray(artifact["column_means"], dtype=float)
    except KeyError as exc:
        raise ParseError(f"artifact {args.artifact} is missing {exc}") from exc
    data = io.read_matrix_csv(args.data) - means
    n, p = data.shape
    second_moment = data.T @ data / n
    tol = float(opts["tolerance"])
    report = {"version": 1, "fitter": fitter, "checks": {}}

    def record(name, value, bound):
        report["checks"][name] = {
            "value": float(value),
            "bound": float(bound),
            "pass": bool(value <= bound),
        }

    try:
        if fitter in ("rca", "em_rca"):
            basis = np.asarray(artifact["basis"], dtype=float)
            values = np.asarray(artifact["values"], dtype=float)
            loadings = np.asarray(artifact["loadings"], dtype=float)
            if fitter == "rca":
                sigma = np.asarray(artifact["sigma"], dtype=float)
            else:
                precision = np.asarray(artifact["precision"], dtype=float)
                cholesky(precision)
                report["checks"]["precision_pd"] = {"pass": True}
                sigma = spd_inverse(precision) + \
                    float(artifact["noise_var"]) * np.eye(p)
            decomp = GepDecomp(vectors=basis, values=values)
            record("gep_residual", gep_residual(second_moment, sigma, decomp), tol)
            rebuilt = sigma @ basis @ np.diag(np.sqrt(np.maximum(values - 1.0, 0.0)))
            scale = max(float(np.linalg.norm(loadings)), 1e-300)
            record("loadings_identity",
                   float(np.linalg.norm(rebuilt - loadings)) / scale, tol)
            if basis.shape[1]:
                gram = basis.T @ sigma @ basis
                record("basis_orthonormality",
                       float(np.max(np.abs(gram - np.eye(basis.shape[1])))), 1e-6)
        elif fitter == "glasso":
            precision = np.asarray(artifact["precision"], dtype=float)
            cholesky(precision)
            report["checks"]["precision_pd"] = {"pass": True}
            record("kkt_residual",
                   kkt_residual(precision, second_moment, float(artifact["lam"])),
                   float(opts["kkt_tol"]))
        elif fitter == "ppca":
            loadings = np.asarray(artifact["loadings"], dtype=float)
            noise_var = float(artifact["noise_var"])
            solution = ppca_fit(second_moment, noise_var,
                                rank=loadings.shape[1])
            sign_free = np.minimum(
                np.max(np.abs(solution.loadings - loadings), axis=0,
                       initial=0.0),
                np.max(np.abs(solution.loadings + loadings), axis=0,
                       initial=0.0))
            record("loadings_match",
                   float(np.max(sign_free, initial=0.0)), 1e-6)
        else:
            raise ParseError(f"artifact has unknown fitter {fitter!r}")
    except (KeyError, ValueError) as exc:
        raise ParseError(f"artifact {args.artifact} is malformed: {exc}") from exc
    except NotPositiveDefinite:
        report["checks"]["precision_pd"] = {"pass": False}

    report["pass"] = all(c.get("pass", False) for c in report["checks"].values())
    io.write_json(out / "report.json", report)
    logger.info("check: %s -> %s", "pass" if report["pass"] else "FAIL",
                out / "report.json")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rescomp",
        description="Residual component analysis experiment driver",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--seed", type=int, help="random seed")
        sp.add_argument("--out", help="output directory")

    sp = sub.add_parser("simulate", help="draw a confounded GMRF dataset")
    common(sp)
    sp.add_argument("--n", type=int)
    sp.add_argument("--p", type=int)
    sp.add_argument("--q", type=int)
    sp.add_argument("--sparsity", type=float)
    sp.add_argument("--snr", type=float)

    sp = sub.add_parser("fit", help="fit one model to a data CSV")
    common(sp)
    sp.add_argument("--data", help="input data CSV (rows x features)")
    sp.add_argument("--fitter", choices=["glasso", "em_rca", "ppca", "rca"])
    sp.add_argument("--lam", type=float)
    sp.add_argument("--sigma", help="covariance CSV (rca fitter)")
    sp.add_argument("--rank", type=int)
    sp.add_argument("--max-iter", dest="max_iter", type=int)
    sp.add_argument("--tol", type=float)

    sp = sub.add_parser("stability", help="stability selection over the penalty path")
    common(sp)
    sp.add_argument("--data")
    sp.add_argument("--fitter", choices=["glasso", "em_rca"])
    sp.add_argument("--grid-count", dest="grid_count", type=int)
    sp.add_argument("--lo-exp", dest="lo_exp", type=float)
    sp.add_argument("--hi-exp", dest="hi_exp", type=float)
    sp.add_argument("--repeats", type=int)
    sp.add_argument("--fraction", type=float)
    sp.add_argument("--edge-mode", dest="edge_mode",
                    choices=["support", "negative"])
    sp.add_argument("--jobs", type=int)
    sp.add_argument("--em-max-iter", dest="em_max_iter", type=int)

    sp = sub.add_parser("eval", help="precision-recall from an edge path")
    common(sp)
    sp.add_argument("--path", help="edge-path JSON from the stability step")
    sp.add_argument("--truth", help="ground-truth edges CSV")
    sp.add_argument("--threshold", type=float)

    sp = sub.add_parser("residual", help="score features against a temporal model")
    common(sp)
    sp.add_argument("--data", help="timepoints x features CSV")
    sp.add_argument("--grid", help="time grid CSV (time, group)")
    sp.add_argument("--lengthscale", type=float)
    sp.add_argument("--jitter", type=float)
    sp.add_argument("--labels", help="optional 0/1 labels CSV for a ROC curve")

    sp = sub.add_parser("check", help="verify a saved model artifact")
    common(sp)
    sp.add_argument("--artifact", help="model.json path")
    sp.add_argument("--data", help="data CSV the model was fit to")
    sp.add_argument("--tolerance", type=float)
    sp.add_argument("--kkt-tol", dest="kkt_tol", type=float)

    return parser


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "stability": cmd_stability,
    "eval": cmd_eval,
    "residual": cmd_residual,
    "check": cmd_check,
}


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.subcommand](args)
    except NoConvergence as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (FileIOError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except RescompError as exc:
        # invalid input, parse failures, non-PD inputs, unavailable ranks
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
