"""
Command-line surface.

Every subcommand resolves its settings (defaults, MDP_* environment, --config
file, flags), prints them, runs and prints per-phase timings. Exit codes:
0 success, 1 runtime or input error, 2 usage error.
"""
import argparse
import json
import sys
import time
from contextlib import contextmanager
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd
from pydantic import ValidationError

from src.basis.kernel_basis import build_basis
from src.batchvb.coordinate_ascent import BatchOptions, fit_batch_designs
from src.cli.datasets import Dataset, ingest_csv, parse_columns, train_test_split
from src.cli.metrics import insample_fit, metrics
from src.config.settings import Settings, load_settings
from src.model.hyperparameters import Hyperparameters
from src.model.persistence import load_state, save_state
from src.predictive.mixture import predictive_mean, predictive_mixture
from src.priorcheck.bioassay import BioassaySimulator, simulate_corpus
from src.priorcheck.scan import ScanConfig, fit_scan_model, prior_scan
from src.regadjust.adjustment import predict_adjusted_rows
from src.utils.exceptions import ConfigFileError, DomainError, MdpError
from src.utils.logger import bind_run_context, get_application_logger, setup_logging
from src.vsugs.online import OnlineOptions, fit_online

logger = get_application_logger(__name__)

FLOAT_FORMAT = "%.12g"


class Timer:
    """Wall-clock seconds per named phase."""

    def __init__(self):
        self.phases: Dict[str, float] = {}

    @contextmanager
    def phase(self, name: str):
        start = time.perf_counter()
        try:
            yield
        finally:
            self.phases[name] = self.phases.get(name, 0.0) + time.perf_counter() - start

    def report(self) -> None:
        for name, seconds in self.phases.items():
            print(f"timing {name}: {seconds:.3f}s")


def _write_csv(frame: pd.DataFrame, path: Optional[str]) -> None:
    if path is None:
        return
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    logger.info(f"Wrote {len(frame)} rows to {path}")


def _require(value: Optional[str], flag: str) -> str:
    if not value:
        raise ConfigFileError(f"{flag} is required")
    return value


def _print_settings(settings: Settings) -> None:
    print("config " + json.dumps(settings.model_dump(), sort_keys=True, default=str))


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    mapping = {
        "seed": "seed",
        "basis": "basis_count",
        "trunc": "trunc",
        "alpha": "alpha",
        "warm": "warm_count",
        "max_iter": "max_iter",
        "tol": "tol",
        "tau_mode": "tau_mode",
        "kernel": "kernel",
        "k": "k_neighbors",
        "point": "point_estimate",
        "test_count": "test_count",
        "transform": "bioassay_transform",
        "workers": "workers",
    }
    return {key: getattr(args, flag) for flag, key in mapping.items() if getattr(args, flag, None) is not None}


def _fit_prelude(args, settings: Settings, timer: Timer):
    with timer.phase("ingest"):
        data = ingest_csv(_require(args.train, "--train"), _require(args.responses, "--responses"))
    rng = np.random.default_rng(settings.seed)
    with timer.phase("basis"):
        basis = build_basis(
            data.X, settings.basis_count, rng, settings.kernel, settings.bandwidth_mode, settings.bandwidth_subsample
        )
    h = Hyperparameters.from_settings(settings, data.Y.shape[1], basis.count)
    return data, basis, h


def _report_insample(data: Dataset, fitted: np.ndarray, path: Optional[str]) -> None:
    report = metrics(data.Y, fitted)
    print(report.to_frame(data.y_names).to_string(index=False))
    _write_csv(pd.DataFrame(fitted, columns=list(data.y_names)), path)


def cmd_fit_batch(args, settings: Settings, timer: Timer) -> int:
    data, basis, h = _fit_prelude(args, settings, timer)
    opts = BatchOptions(max_iter=settings.max_iter, tol=settings.tol, seed=settings.seed)
    with timer.phase("batch_fit"):
        E = basis.design(data.X)
        fit = fit_batch_designs(data.Y, E, h, opts)
    print(f"sweeps {fit.diagnostics.iterations} converged {fit.diagnostics.converged} occupied {fit.state.occupied}")
    _report_insample(data, insample_fit(fit.state, fit.alloc.q, E), args.fitted_out)
    save_state(fit.state, h, basis, _require(args.out, "--out"))
    return 0


def cmd_fit_online(args, settings: Settings, timer: Timer) -> int:
    data, basis, h = _fit_prelude(args, settings, timer)
    opts = OnlineOptions(
        warm_count=settings.warm_count,
        seed=settings.seed,
        max_iter=settings.max_iter,
        tol=settings.tol,
        tau_mode=settings.tau_mode,
        track_elbo=settings.track_elbo or args.elbo_out is not None,
    )
    fit = fit_online(zip(data.X, data.Y), h, basis, opts)
    timer.phases.update(fit.timings)
    print(f"seen {fit.state.seen} occupied {fit.state.occupied}")
    _report_insample(data, insample_fit(fit.state, fit.alloc_history, basis.design(data.X)), args.fitted_out)
    if args.elbo_out is not None:
        offset = settings.warm_count
        rows = [b.to_row(offset + i + 1) for i, b in enumerate(fit.bound_trace)]
        _write_csv(pd.DataFrame(rows), args.elbo_out)
    save_state(fit.state, h, basis, _require(args.out, "--out"))
    return 0


def _response_names(args, m: int) -> List[str]:
    names = parse_columns(args.responses)
    return names if len(names) == m else [f"y{l + 1}" for l in range(m)]


def cmd_predict(args, settings: Settings, timer: Timer) -> int:
    with timer.phase("ingest"):
        state, h, basis = load_state(_require(args.state, "--state"))
        data = ingest_csv(_require(args.test, "--test"), args.responses)
    names = _response_names(args, state.response_dim)
    levels = [float(q) for q in parse_columns(args.quantiles)]
    if any(not 0 < q < 1 for q in levels):
        raise DomainError("quantile levels must lie strictly inside (0, 1)")

    rows = []
    with timer.phase("predict"):
        for x in data.X:
            mix = predictive_mixture(x, state, basis, h)
            row = dict(zip(names, predictive_mean(mix)))
            if levels:
                marg = mix.marginals()
                for l, name in enumerate(names):
                    qs = marg.quantile(l, np.array([levels]))[0]
                    row.update({f"{name}_q{q:g}": v for q, v in zip(levels, qs)})
            rows.append(row)
    _write_csv(pd.DataFrame(rows), _require(args.out, "--out"))
    return 0


def cmd_adjust(args, settings: Settings, timer: Timer) -> int:
    with timer.phase("ingest"):
        state, h, basis = load_state(_require(args.state, "--state"))
        train = ingest_csv(_require(args.train, "--train"), _require(args.responses, "--responses"))
        test = ingest_csv(_require(args.test, "--test"), args.test_responses or args.responses)
    if train.Y.shape[1] != state.response_dim:
        raise DomainError(f"training file has {train.Y.shape[1]} responses, state expects {state.response_dim}")
    with timer.phase("adjust"):
        pred = predict_adjusted_rows(
            test.X, state, basis, h, train.X, train.Y, settings.k_neighbors, settings.point_estimate
        )
    _write_csv(pd.DataFrame(pred, columns=list(train.y_names)), _require(args.out, "--out"))
    return 0


def cmd_evaluate(args, settings: Settings, timer: Timer) -> int:
    with timer.phase("ingest"):
        pred = pd.read_csv(_require(args.pred, "--pred"))
        columns = [c for c in pred.columns if "_q" not in c]
        truth = ingest_csv(_require(args.truth, "--truth"), ",".join(columns))
    report = metrics(truth.Y, pred[columns].to_numpy(dtype=float))
    frame = report.to_frame(columns)
    print(frame.to_string(index=False))
    _write_csv(frame, args.out)
    return 0


def cmd_split(args, settings: Settings, timer: Timer) -> int:
    with timer.phase("ingest"):
        data = ingest_csv(_require(args.data, "--data"), args.responses)
    rng = np.random.default_rng(settings.seed)
    train, test = train_test_split(data, settings.test_count, rng, args.train_size, args.test_size)
    _write_csv(train.to_frame(), _require(args.train_out, "--train-out"))
    _write_csv(test.to_frame(), _require(args.test_out, "--test-out"))
    print(f"train rows {train.n} test rows {test.n}")
    return 0


def _scan_hyperparameters(settings: Settings, response_dim: int) -> Hyperparameters:
    return Hyperparameters.defaults(
        response_dim=response_dim,
        basis_count=settings.scan_basis_count,
        trunc=settings.scan_trunc,
        alpha=settings.scan_alpha,
        a_tau=settings.a_tau,
        b_tau=settings.b_tau,
        a_omega=settings.scan_a_omega,
        b_omega=settings.scan_b_omega,
        sigma_dof=settings.scan_sigma_dof,
        occupancy_threshold=settings.occupancy_threshold,
    )


class _CsvSampler:
    """Baseline-only stand-in for a simulator when the corpus comes from a CSV."""

    def __init__(self, baseline: np.ndarray):
        self.baseline = baseline

    def __call__(self, lam, rng, size):
        if size > self.baseline.shape[0]:
            raise DomainError(f"baseline CSV has {self.baseline.shape[0]} rows, {size} requested")
        return self.baseline[:size]


def cmd_prior_scan(args, settings: Settings, timer: Timer) -> int:
    rng = np.random.default_rng(settings.seed)
    cfg = ScanConfig.from_settings(settings)
    if settings.scan_simulator == "bioassay":
        simulator = BioassaySimulator(settings.bioassay_trials, settings.bioassay_prior_sd, settings.bioassay_transform)
        bounds = ((settings.scan_sigma0_min, settings.scan_sigma0_max), (settings.scan_sigma1_min, settings.scan_sigma1_max))
        with timer.phase("simulate"):
            lambdas, stats = simulate_corpus(cfg.sim_count, rng, simulator, bounds)
    else:
        lam_cols = parse_columns(settings.scan_lambda_cols)
        stat_cols = parse_columns(settings.scan_stat_cols)
        with timer.phase("ingest"):
            corpus = ingest_csv(settings.scan_simulator, stat_cols)
            lambdas = pd.DataFrame(corpus.X, columns=list(corpus.x_names))[lam_cols].to_numpy()
            stats = corpus.Y
            baseline = ingest_csv(_require(settings.scan_baseline_csv, "scan_baseline_csv"), stat_cols).Y
        if cfg.baseline_mode == "direct":
            raise ConfigFileError("direct baseline mode needs the builtin simulator")
        simulator = _CsvSampler(baseline)

    h = _scan_hyperparameters(settings, stats.shape[1])
    opts = OnlineOptions(warm_count=settings.scan_warm_count, seed=settings.seed, max_iter=settings.max_iter, tol=settings.tol)
    with timer.phase("fit"):
        model = fit_scan_model(lambdas, stats, h, rng, opts, settings.kernel, settings.bandwidth_mode)
    with timer.phase("scan"):
        result = prior_scan(simulator, cfg, model)
    _write_csv(result.to_frame(tuple(parse_columns(settings.scan_lambda_cols))), _require(args.out, "--out"))
    _write_csv(result.pvalue_frame(), args.pvalues_out)
    return 0


def cmd_demo_bioassay(args, settings: Settings, timer: Timer) -> int:
    rng = np.random.default_rng(settings.seed)
    simulator = BioassaySimulator(settings.bioassay_trials, settings.bioassay_prior_sd, settings.bioassay_transform)
    count = args.count or settings.scan_sim_count
    with timer.phase("simulate"):
        if args.sigma0 is not None and args.sigma1 is not None:
            lambdas = np.tile([args.sigma0, args.sigma1], (count, 1))
            stats = simulator.simulate_rows(lambdas, rng)
        else:
            bounds = ((settings.scan_sigma0_min, settings.scan_sigma0_max), (settings.scan_sigma1_min, settings.scan_sigma1_max))
            lambdas, stats = simulate_corpus(count, rng, simulator, bounds)
    frame = pd.DataFrame({"sigma0": lambdas[:, 0], "sigma1": lambdas[:, 1], "p2": stats[:, 0], "p3": stats[:, 1]})
    _write_csv(frame, _require(args.out, "--out"))
    return 0


COMMANDS = {
    "fit-batch": cmd_fit_batch,
    "fit-online": cmd_fit_online,
    "predict": cmd_predict,
    "adjust": cmd_adjust,
    "evaluate": cmd_evaluate,
    "prior-scan": cmd_prior_scan,
    "demo-bioassay": cmd_demo_bioassay,
    "split": cmd_split,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="Random seed")
    common.add_argument("--config", help="Plain-text key=value settings file")
    common.add_argument("--out", help="Main output path")

    model = argparse.ArgumentParser(add_help=False)
    model.add_argument("--train", help="Training CSV")
    model.add_argument("--responses", help="Response columns, comma-separated names or indices")
    model.add_argument("--basis", type=int, help="Number of kernel centres")
    model.add_argument("--trunc", type=int, help="Truncation level")
    model.add_argument("--alpha", type=float, help="DP concentration")
    model.add_argument("--kernel", choices=["literal", "gaussian-sq"])
    model.add_argument("--max-iter", dest="max_iter", type=int)
    model.add_argument("--tol", type=float)
    model.add_argument("--fitted-out", dest="fitted_out", help="CSV of in-sample fitted values")

    parser = argparse.ArgumentParser(prog="mdpreg", description="Matrix-variate DP mixture regression")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("fit-batch", parents=[common, model], help="Batch variational fit")

    p = sub.add_parser("fit-online", parents=[common, model], help="One-pass online fit")
    p.add_argument("--warm", type=int, help="Rows fitted in batch before the online pass")
    p.add_argument("--tau-mode", dest="tau_mode", choices=["accumulate", "recompute"])
    p.add_argument("--elbo-out", dest="elbo_out", help="CSV of per-step lower-bound terms")

    p = sub.add_parser("predict", parents=[common], help="Predictive means")
    p.add_argument("--state", help="State file")
    p.add_argument("--test", help="CSV of covariates")
    p.add_argument("--responses", help="Response columns present in the test file (dropped from covariates)")
    p.add_argument("--quantiles", help="Comma-separated marginal quantile levels")

    p = sub.add_parser("adjust", parents=[common], help="Regression-adjusted predictions")
    p.add_argument("--state")
    p.add_argument("--train")
    p.add_argument("--test")
    p.add_argument("--responses")
    p.add_argument("--test-responses", dest="test_responses")
    p.add_argument("--k", type=int)
    p.add_argument("--point", choices=["mean", "median"])

    p = sub.add_parser("evaluate", parents=[common], help="RMSE and MAPE of predictions")
    p.add_argument("--pred")
    p.add_argument("--truth")

    p = sub.add_parser("prior-scan", parents=[common], help="Weak-informativity scan")
    p.add_argument("--workers", type=int)
    p.add_argument("--transform", choices=["printed", "conventional"])
    p.add_argument("--pvalues-out", dest="pvalues_out")

    p = sub.add_parser("demo-bioassay", parents=[common], help="Simulate bioassay statistics")
    p.add_argument("--count", type=int)
    p.add_argument("--sigma0", type=float)
    p.add_argument("--sigma1", type=float)
    p.add_argument("--transform", choices=["printed", "conventional"])

    p = sub.add_parser("split", parents=[common], help="Seeded train/test split")
    p.add_argument("--data")
    p.add_argument("--responses")
    p.add_argument("--test-count", dest="test_count", type=int)
    p.add_argument("--train-size", dest="train_size", type=int)
    p.add_argument("--test-size", dest="test_size", type=int)
    p.add_argument("--train-out", dest="train_out")
    p.add_argument("--test-out", dest="test_out")
    return parser


def run_cli(argv: Optional[List[str]] = None) -> int:
    """Parse argv, run one subcommand and return its exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if isinstance(e.code, int) else 2

    timer = Timer()
    try:
        settings = load_settings(args.config, _overrides(args))
        setup_logging(settings.log_level)
        bind_run_context(command=args.command, seed=settings.seed)
        _print_settings(settings)
        code = COMMANDS[args.command](args, settings, timer)
        timer.report()
        return code
    except (MdpError, OSError, ValidationError) as e:
        logger.error(f"{args.command} failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
