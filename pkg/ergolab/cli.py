"""Command line interface for the ergolab experiments."""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import typer
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

from . import __version__
from . import config as config_mod
from .config import ConfigError, parse_grid, parse_list
from .dynamics import (
    NonDegeneracyViolation,
    estimate_nondegeneracy,
    k_independence_statistics,
    law_moments,
    make_function,
    make_system,
    potential,
    sample_omega,
)
from .ids import (
    ids_counts,
    ids_table,
    skew_shift_one_wrap_gap,
    skewshift_counts,
    skewshift_report,
    subinterval_resonance_frequency,
    wegner_probability,
    wegner_to_resonance_bound,
)
from .models import ErgodicSystem, RunConfig, SamplingFunction, WegnerParams
from .multiscale import (
    SCALE_BASE,
    HypothesisViolated,
    MissingBound,
    greens_to_lyapunov,
    initial_criticality,
    initlarge_parameters,
    run_induction,
    scale_schedule,
    verify_witness,
)
from .operators import ConsistencyFailure, NearSingular, Unverifiable, WindowTooShort
from .storage import ReportWriter, StorageError, ids_rows, outcome_to_dict, read_sampling_table, witness_to_dict
from .summarizer import Summarizer
from .transfer import (
    CHUNK_TRIALS,
    NotGood,
    StepTooLarge,
    deviation_probability,
    free_growth,
    growth_rates,
    growth_table,
    ldt_bound,
    ldt_params,
    ldt_rates,
    prufer_evolve,
    prufer_functionals,
    recurrence_residual,
    summarize_growth,
    zeta_sums,
)

app = typer.Typer(add_completion=False, help="Numerical laboratory for ergodic Schroedinger operators.")
console = Console()

EXIT_CODES: Tuple[Tuple[type, int], ...] = (
    (ConfigError, 3),
    (StorageError, 3),
    (WindowTooShort, 3),
    (HypothesisViolated, 1),
    (NonDegeneracyViolation, 1),
    (StepTooLarge, 1),
    (NotGood, 1),
    (ConsistencyFailure, 2),
    (NearSingular, 2),
    (Unverifiable, 2),
)
IDS_CHUNK = 1024
RESONANCE_MAX_M = 200
NONDEGEN_EPS = (1e-1, 3e-2, 1e-2, 3e-3, 1e-3)
_EXTRA = {"allow_extra_args": True, "ignore_unknown_options": True}

CONFIG_OPTION = typer.Option(None, "--config", help="Key = value configuration file or an emitted summary.json.")
WORKERS_OPTION = typer.Option(None, "--workers", help="Worker processes for Monte Carlo tasks.")
OUTPUT_OPTION = typer.Option(None, "--output", help="Directory for results.csv and summary.json.")
STRICT_OPTION = typer.Option(False, "--strict", help="Fail when a theorem hypothesis does not hold.")

Runner = Callable[[RunConfig, Summarizer, Dict[str, Any]], Tuple[Sequence[str], List[List[Any]]]]


@app.callback(invoke_without_command=True)
def main(
    ctx: typer.Context,
    version: bool = typer.Option(False, "--version", help="Show version and exit"),
    verbose: bool = typer.Option(False, "--verbose", help="Log progress at INFO level"),
    debug: bool = typer.Option(False, "--debug", help="Log per-step diagnostics"),
) -> None:
    if version:
        typer.echo(f"ergolab v{__version__}")
        raise typer.Exit()

    level = logging.DEBUG if debug else logging.INFO if verbose else logging.WARNING
    logging.basicConfig(
        level=level,
        format="%(message)s",
        handlers=[RichHandler(console=Console(stderr=True), show_path=False)],
        force=True,
    )

    if ctx.invoked_subcommand is None:
        typer.echo(ctx.get_help())
        raise typer.Exit()


@app.command(context_settings=_EXTRA)
def lyapunov(
    ctx: typer.Context,
    config: Optional[Path] = CONFIG_OPTION,
    workers: Optional[int] = WORKERS_OPTION,
    output: Optional[Path] = OUTPUT_OPTION,
    strict: bool = STRICT_OPTION,
) -> None:
    """Scan Lyapunov exponents over an energy grid."""

    _execute("lyapunov", _run_lyapunov, ctx.args, config, workers, output, strict)


@app.command("prufer-check", context_settings=_EXTRA)
def prufer_check(
    ctx: typer.Context,
    config: Optional[Path] = CONFIG_OPTION,
    workers: Optional[int] = WORKERS_OPTION,
    output: Optional[Path] = OUTPUT_OPTION,
    strict: bool = STRICT_OPTION,
) -> None:
    """Check Pruefer reconstruction and the growth functionals."""

    _execute("prufer-check", _run_prufer, ctx.args, config, workers, output, strict)


@app.command(context_settings=_EXTRA)
def ldt(
    ctx: typer.Context,
    config: Optional[Path] = CONFIG_OPTION,
    workers: Optional[int] = WORKERS_OPTION,
    output: Optional[Path] = OUTPUT_OPTION,
    strict: bool = STRICT_OPTION,
) -> None:
    """Compare empirical large deviations of log rho with the bound."""

    _execute("ldt", _run_ldt, ctx.args, config, workers, output, strict)


@app.command("msa-certify", context_settings=_EXTRA)
def msa_certify(
    ctx: typer.Context,
    config: Optional[Path] = CONFIG_OPTION,
    workers: Optional[int] = WORKERS_OPTION,
    output: Optional[Path] = OUTPUT_OPTION,
    strict: bool = STRICT_OPTION,
) -> None:
    """Build an initial witness and run the multiscale induction."""

    _execute("msa-certify", _run_msa, ctx.args, config, workers, output, strict)


@app.command(context_settings=_EXTRA)
def ids(
    ctx: typer.Context,
    config: Optional[Path] = CONFIG_OPTION,
    workers: Optional[int] = WORKERS_OPTION,
    output: Optional[Path] = OUTPUT_OPTION,
    strict: bool = STRICT_OPTION,
) -> None:
    """Tabulate the finite-volume integrated density of states."""

    _execute("ids", _run_ids, ctx.args, config, workers, output, strict)


@app.command("wegner-skew", context_settings=_EXTRA)
def wegner_skew(
    ctx: typer.Context,
    config: Optional[Path] = CONFIG_OPTION,
    workers: Optional[int] = WORKERS_OPTION,
    output: Optional[Path] = OUTPUT_OPTION,
    strict: bool = STRICT_OPTION,
) -> None:
    """Check the skew-shift Wegner bounds by Monte Carlo."""

    _execute("wegner-skew", _run_wegner_skew, ctx.args, config, workers, output, strict)


@app.command(context_settings=_EXTRA)
def nondegen(
    ctx: typer.Context,
    config: Optional[Path] = CONFIG_OPTION,
    workers: Optional[int] = WORKERS_OPTION,
    output: Optional[Path] = OUTPUT_OPTION,
    strict: bool = STRICT_OPTION,
) -> None:
    """Fit the non-degeneracy profile of a sampling function."""

    _execute("nondegen", _run_nondegen, ctx.args, config, workers, output, strict)


def build_config(
    subcommand: str,
    args: Sequence[str],
    config_path: Optional[Path] = None,
    workers: Optional[int] = None,
    output: Optional[Path] = None,
    strict: bool = False,
) -> RunConfig:
    """Defaults, then the config file, then ``--key value`` overrides, then explicit flags."""

    cfg = config_mod.load_config(config_path)
    config_mod.update_config(cfg, **config_mod.parse_overrides(args))
    cfg.subcommand = subcommand
    if workers is not None:
        cfg.workers = workers
    if output is not None:
        cfg.output = str(output)
    if strict:
        cfg.strict = True
    config_mod.validate_config(cfg)
    return cfg


def run(cfg: RunConfig, runner: Optional[Runner] = None) -> int:
    """Execute one validated configuration, write its reports and return the exit code."""

    runner = runner or RUNNERS[cfg.subcommand]
    summary = Summarizer()
    artifacts: Dict[str, Any] = {}
    started = time.perf_counter()
    columns: Sequence[str] = ()
    rows: List[List[Any]] = []
    error: Optional[str] = None
    try:
        columns, rows = runner(cfg, summary, artifacts)
        code = summary.exit_code
    except Exception as exc:  # noqa: BLE001 - mapped to the documented exit codes below
        code = _exit_code(exc)
        if code is None:
            raise
        error = f"{type(exc).__name__}: {exc}"
        summary.violation(type(exc).__name__, str(exc))
        if code == 3:
            raise
    wall_time = time.perf_counter() - started

    writer = ReportWriter(output_directory(cfg))
    if columns:
        writer.write_results(columns, rows)
    for name, payload in artifacts.items():
        writer.write_artifact(name, payload)
    writer.write_summary(summary.payload(cfg, code, wall_time, error))
    config_mod.save_config(cfg, writer.directory / "config.txt")
    _print_summary(cfg, summary, code)
    if error:
        typer.secho(error, fg=typer.colors.RED, err=True)
    return code


def output_directory(cfg: RunConfig) -> Path:
    if cfg.output:
        return Path(cfg.output).expanduser()
    return config_mod.results_root() / cfg.subcommand


def _execute(
    subcommand: str,
    runner: Runner,
    args: Sequence[str],
    config_path: Optional[Path],
    workers: Optional[int],
    output: Optional[Path],
    strict: bool,
) -> None:
    try:
        cfg = build_config(subcommand, args, config_path, workers, output, strict)
        code = run(cfg, runner)
    except (ConfigError, StorageError, WindowTooShort) as exc:
        typer.secho(str(exc), fg=typer.colors.RED, err=True)
        raise typer.Exit(code=3) from exc
    if code:
        raise typer.Exit(code=code)


def _exit_code(exc: BaseException) -> Optional[int]:
    for kind, code in EXIT_CODES:
        if isinstance(exc, kind):
            return code
    return None


def _print_summary(cfg: RunConfig, summary: Summarizer, code: int) -> None:
    table = Table(title=f"ergolab {cfg.subcommand}")
    table.add_column("Metric", style="cyan")
    table.add_column("Value", justify="right")
    for key, value in summary.metrics.items():
        if isinstance(value, (int, float, str, bool)):
            table.add_row(key, f"{value:.6g}" if isinstance(value, float) else str(value))
    for name, counts in summary.tally().items():
        table.add_row(f"check {name}", f"{counts['passed']} passed / {counts['failed']} failed")
    table.add_row("exit code", str(code))
    console.print(table)


def _map(func: Callable[[Any], Any], tasks: Sequence[Any], workers: int) -> List[Any]:
    """Evaluate independent tasks, merging results in task order."""

    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(func, tasks))
    return [func(task) for task in tasks]


def _chunks(count: int, size: int) -> List[List[int]]:
    return [list(range(lo, min(lo + size, count))) for lo in range(0, count, size)]


def _system_and_function(cfg: RunConfig) -> Tuple[ErgodicSystem, SamplingFunction]:
    system = make_system(cfg.system, cfg.alpha, cfg.dimension, cfg.law, cfg.seed)
    if cfg.f == "table":
        xs, ys = read_sampling_table(Path(cfg.table))
        return system, make_function("table", xs, ys)
    return system, make_function(cfg.f)


def _skew_system(cfg: RunConfig) -> Tuple[ErgodicSystem, SamplingFunction]:
    return make_system("skew-shift", cfg.alpha, cfg.dimension, seed=cfg.seed), make_function("linear-centered")


def _require(summary: Summarizer, cfg: RunConfig, hypotheses: Dict[str, bool]) -> bool:
    """Record theorem hypotheses; in strict mode a failing one aborts the run."""

    summary.metrics.setdefault("hypotheses", {}).update({k: bool(v) for k, v in hypotheses.items()})
    failing = [name for name, ok in hypotheses.items() if not ok]
    if failing and cfg.strict:
        raise HypothesisViolated(f"hypotheses fail: {', '.join(failing)}")
    return not failing


# -- task functions run in worker processes --------------------------------------------
# Tasks carry the plain config dict and their trial indices; each worker rebuilds
# the system and sampling function from the dict.


def _growth_task(task: Tuple[Dict[str, Any], List[int]]) -> np.ndarray:
    cfg, trials = RunConfig(**task[0]), task[1]
    system, f = _system_and_function(cfg)
    return growth_table(system, f, cfg.coupling, parse_grid(cfg.energies), cfg.n, trials)


def _prufer_task(task: Tuple[Dict[str, Any], List[int]]) -> List[List[float]]:
    cfg, trials = RunConfig(**task[0]), task[1]
    system, f = _system_and_function(cfg)
    N, kappa = cfg.n, cfg.kappa
    rows = []
    for trial in trials:
        window_ = potential(system, f, cfg.coupling, sample_omega(system, trial), N)
        traj = prufer_evolve(window_, kappa, cfg.theta)
        F1, F2, F3, F4, gap = prufer_functionals(traj, window_, kappa)
        z1, z2 = zeta_sums(traj)
        rows.append(
            [trial, float(traj.log_rho[-1]) / N, F1, F2, F3, F4, gap, recurrence_residual(traj, window_), z1, z2]
        )
    return rows


def _ldt_task(task: Tuple[Dict[str, Any], int, List[int]]) -> np.ndarray:
    cfg, N, trials = RunConfig(**task[0]), task[1], task[2]
    params = ldt_params(cfg.law, cfg.coupling, cfg.kappa, N)
    return ldt_rates(params, trials, cfg.seed, cfg.theta)


def _ids_task(task: Tuple[Dict[str, Any], List[int]]) -> np.ndarray:
    cfg, trials = RunConfig(**task[0]), task[1]
    system, f = _system_and_function(cfg)
    return ids_counts(system, f, cfg.coupling, cfg.n, parse_grid(cfg.energies), trials)


def _skew_task(task: Tuple[Dict[str, Any], List[int]]) -> Dict[str, np.ndarray]:
    cfg, trials = RunConfig(**task[0]), task[1]
    system, f = _skew_system(cfg)
    return skewshift_counts(system, f, cfg.coupling, cfg.n, parse_list(cfg.eps), parse_grid(cfg.energies), trials)


# -- subcommand runners ------------------------------------------------------------------


def _run_lyapunov(cfg: RunConfig, summary: Summarizer, artifacts: Dict[str, Any]):
    system, f = _system_and_function(cfg)
    energies = parse_grid(cfg.energies)
    lam, N = cfg.coupling, cfg.n
    if N < 1000:
        raise ConfigError("lyapunov estimates need n >= 1000")
    logging.info("lyapunov: %s/%s lambda=%s, %d energies", system.kind, f.kind, lam, energies.size)
    tasks = [(asdict(cfg), chunk) for chunk in _chunks(cfg.samples, CHUNK_TRIALS)]
    table = np.vstack(_map(_growth_task, tasks, cfg.workers))
    estimates = summarize_growth(energies, table, N)

    sigma2 = law_moments(cfg.law)[1] if system.kind == "iid" else math.nan
    rows = []
    for est in estimates:
        if lam == 0.0:
            reference = free_growth(est.E)
            summary.check(
                "free-closed-form",
                abs(est.value - reference) <= max(3.0 * est.stderr, 1e-3),
                f"E={est.E:.6g}: {est.value:.6g} vs {reference:.6g}",
            )
        elif system.kind == "iid" and abs(est.E) < 2.0:
            reference = sigma2 * lam * lam / (2.0 * (4.0 - est.E * est.E))
        else:
            reference = math.nan
        rows.append([est.E, est.value, est.stderr, est.N, est.samples, reference])

    if lam > 36.0:
        rate = math.log(lam) / 5.0
        fraction = float(np.mean([est.value >= rate for est in estimates]))
        summary.record(large_coupling_rate=rate, fraction_above_rate=fraction)
        summary.check("large-coupling-rate", fraction >= 0.9, f"only {fraction:.1%} of energies reach log(lambda)/5")
    summary.record(energies=int(energies.size), N=N, samples=cfg.samples)
    return ("E", "L", "stderr", "N", "samples", "reference"), rows


def _run_prufer(cfg: RunConfig, summary: Summarizer, artifacts: Dict[str, Any]):
    system, _ = _system_and_function(cfg)
    lam, kappa, N = cfg.coupling, cfg.kappa, cfg.n
    params = ldt_params(cfg.law, lam, kappa, N)
    hypotheses = {"condN1": params.cond_n1, "condlam1": params.cond_lam1, "iid": system.kind == "iid"}
    holds = _require(summary, cfg, hypotheses)
    tasks = [(asdict(cfg), chunk) for chunk in _chunks(cfg.trials, CHUNK_TRIALS)]
    rows = [row for part in _map(_prufer_task, tasks, cfg.workers) for row in part]

    for row in rows:
        trial, gap, residual = row[0], row[6], row[7]
        summary.check("recurrence", residual < 1e-10, f"trial {trial}: relative residual {residual:.3g}")
        if holds:
            summary.check("functional-gap", gap <= params.gamma1 / 12.0, f"trial {trial}: gap {gap:.3g}")
    summary.record(
        gamma1=params.gamma1,
        E=2.0 * math.cos(kappa),
        max_gap=max(row[6] for row in rows),
        max_residual=max(row[7] for row in rows),
        zeta_bound=N / (172.0 * params.sigma2),
    )
    columns = ("trial", "rate", "F1", "F2", "F3", "F4", "gap", "residual", "zeta_sum", "zeta2_sum")
    return columns, rows


def _run_ldt(cfg: RunConfig, summary: Summarizer, artifacts: Dict[str, Any]):
    if cfg.trials < 100:
        raise ConfigError("ldt experiments need at least 100 trials")
    lam, kappa = cfg.coupling, cfg.kappa
    sizes = sorted({max(cfg.n // 100, 1), max(cfg.n // 10, 1), cfg.n})
    rows = []
    previous: Optional[Tuple[float, float]] = None
    for N in sizes:
        params = ldt_params(cfg.law, lam, kappa, N)
        holds = _require(summary, cfg, {f"condN1@{N}": params.cond_n1, f"condlam1@{N}": params.cond_lam1})
        if params.gamma1 == 0.0:
            probability, mean_rate = 0.0, 0.0
        else:
            tasks = [(asdict(cfg), N, chunk) for chunk in _chunks(cfg.trials, CHUNK_TRIALS)]
            rates = np.concatenate(_map(_ldt_task, tasks, cfg.workers))
            probability, mean_rate = deviation_probability(params, rates), float(rates.mean())
        bound = ldt_bound(params)
        slack = 3.0 * math.sqrt(max(probability * (1.0 - probability), 1.0 / cfg.trials) / cfg.trials)
        if holds and bound < 1.0:
            summary.check("ldt-bound", probability <= bound + slack, f"N={N}: {probability:.4g} > {bound:.4g}")
        if previous is not None:
            summary.check(
                "ldt-monotone",
                probability <= previous[0] + previous[1] + slack,
                f"probability rises to {probability:.4g} at N={N}",
            )
        previous = (probability, slack)
        rows.append([N, probability, bound, params.gamma1, mean_rate, params.cond_n1, params.cond_lam1])
    summary.record(trials=cfg.trials, law=cfg.law)
    return ("N", "probability", "bound", "gamma1", "mean_rate", "condN1", "condlam1"), rows


def _run_msa(cfg: RunConfig, summary: Summarizer, artifacts: Dict[str, Any]):
    system, f = _system_and_function(cfg)
    lam, sigma, N = cfg.coupling, cfg.sigma, cfg.n
    E0 = float(parse_grid(cfg.energies)[0])
    window_ = potential(system, f, lam, sample_omega(system, 0), N)

    if cfg.block > 0:
        K, gamma, energies = cfg.block, math.log(lam) / 5.0 if lam > 1.0 else 0.0, (E0 - 1.0, E0 + 1.0)
    else:
        if system.kind == "iid" and cfg.law == "uniform" and f.kind == "coordinate":
            F, alpha = 1.0, 1.0
        else:
            profile = estimate_nondegeneracy(f, system, None, NONDEGEN_EPS, max(cfg.samples, 10_000))
            F, alpha = profile.F, profile.alpha
        K, gamma, energies = initlarge_parameters(lam, sigma, F, alpha, E0)
    if cfg.gamma > 0:
        gamma = cfg.gamma
    if gamma <= 0:
        raise ConfigError("a positive gamma is needed; set gamma or use lambda > 1")

    witness = initial_criticality(window_, K, gamma, energies, sigma, cfg.grid)
    artifacts["witness.json"] = witness_to_dict(witness)
    summary.record(K=K, gamma=gamma, L=witness.L, bad_fraction=witness.bad_fraction)
    if witness.is_critical:
        summary.check("witness-replay", verify_witness(window_, witness), "re-running the Green checks changed the bad set")

    schedule = scale_schedule(witness.delta, sigma, witness.L, N, cfg.coarse or SCALE_BASE)
    summary.record(j_max=schedule.j_max)
    result = run_induction(window_, witness, schedule, cfg.variant, cfg.q_max, None, cfg.strict)
    _require(summary, cfg, result.hypotheses)
    artifacts["steps.json"] = {"steps": [outcome_to_dict(step) for step in result.steps]}

    kappa = math.exp(-8.0 * sigma - 1.0 / 99.0) / 5.0
    summary.record(
        surviving_fraction=result.surviving_fraction,
        surviving_intervals=len(result.surviving),
        certified_rate=result.certified_rate,
        kappa_log_lambda=kappa * math.log(lam) if lam > 0 else 0.0,
    )
    if result.surviving:
        mids = [0.5 * (a + b) for a, b in result.surviving]
        measured = growth_rates(window_.values, mids)[0]
        for E, value in zip(mids, measured):
            summary.check("transfer-growth", value >= result.certified_rate, f"E={E:.6g}: growth {value:.6g}")
        try:
            bound = greens_to_lyapunov(window_, result.gamma, mids[0], N - 1)
        except MissingBound as exc:
            logging.info("no Green's function bound for the rate conversion: %s", exc)
            summary.record(greens_to_lyapunov="missing")
        else:
            summary.record(greens_to_lyapunov=bound)

    rows = [
        [i, step.variant, step.M, step.L, step.delta, step.sigma, step.Q, len(step.eliminated), len(step.children)]
        for i, step in enumerate(result.steps)
    ]
    return ("step", "variant", "M", "L", "delta", "sigma", "Q", "eliminated", "children"), rows


def _run_ids(cfg: RunConfig, summary: Summarizer, artifacts: Dict[str, Any]):
    system, f = _system_and_function(cfg)
    grid = parse_grid(cfg.energies)
    if np.any(np.diff(grid) < 0):
        raise ConfigError("IDS grid must be increasing")
    lam, M = cfg.coupling, cfg.n
    tasks = [(asdict(cfg), chunk) for chunk in _chunks(cfg.samples, IDS_CHUNK)]
    counts = np.vstack(_map(_ids_task, tasks, cfg.workers))
    table = ids_table(counts, M, grid, lam, {"system": system.kind, "f": f.kind, "seed": system.seed})
    summary.check("ids-range", bool(np.all((table.values >= 0.0) & (table.values <= 1.0))), "value outside [0, 1]")
    summary.check("ids-monotone", bool(np.all(np.diff(table.values) >= 0.0)), "values decrease along the grid")

    params = WegnerParams(C=cfg.wegner_c, beta=cfg.wegner_beta, rho_exp=cfg.rho_exp)
    E = float(grid[grid.size // 2])
    wegner = []
    for eps in parse_list(cfg.eps):
        if not 0.0 < eps < 0.5 or M > RESONANCE_MAX_M:
            continue
        probability = wegner_probability(system, f, lam, M, E, eps, cfg.samples)
        frequency = subinterval_resonance_frequency(system, f, lam, M, E, eps, cfg.samples)
        bound = wegner_to_resonance_bound(params, M, eps)
        if bound < 1.0:
            slack = 3.0 * math.sqrt(max(frequency * (1.0 - frequency), 1.0 / cfg.samples) / cfg.samples)
            summary.check("resonance-bound", frequency <= bound + slack, f"eps={eps:g}: {frequency:.4g} > {bound:.4g}")
        wegner.append({"E": E, "eps": eps, "probability": probability, "frequency": frequency, "bound": bound})
    summary.record(M=M, samples=cfg.samples, exponents_ok=params.exponents_ok, wegner=wegner)
    return ("E", "k_M", "stderr", "M", "samples", "lambda"), ids_rows(table)


def _run_wegner_skew(cfg: RunConfig, summary: Summarizer, artifacts: Dict[str, Any]):
    if cfg.n < 10:
        raise ConfigError("the skew-shift Wegner check needs n >= 10")
    if cfg.f != "linear-centered":
        logging.warning("wegner-skew always samples with f = linear-centered (configured: %s)", cfg.f)
    system, f = _skew_system(cfg)
    lam, N = cfg.coupling, cfg.n
    eps, grid = parse_list(cfg.eps), parse_grid(cfg.energies)
    tasks = [(asdict(cfg), chunk) for chunk in _chunks(cfg.samples, IDS_CHUNK)]
    parts = _map(_skew_task, tasks, cfg.workers)
    counts = {key: np.concatenate([part[key] for part in parts]) for key in ("increments", "near")}
    holder_alpha = estimate_nondegeneracy(f, system, None, NONDEGEN_EPS, max(cfg.samples, 10_000)).alpha
    report = skewshift_report(counts, lam, N, eps, grid, cfg.rho_exp, holder_alpha)
    for row in report["rows"]:
        summary.check("idstoy", row["toy_ok"], f"E={row['E']:.6g} eps={row['eps']:g}")
        summary.check("idsskew", row["skew_ok"], f"E={row['E']:.6g} eps={row['eps']:g}")
    if N <= 50:
        gap = skew_shift_one_wrap_gap(system, f, lam, np.asarray(sample_omega(system, 0)), N, grid)
        summary.check("rank-one-interlacing", gap <= 1, f"count gap {gap}")
    summary.record(samples=report["samples"], holder_alpha=holder_alpha, loghoelder_C=report["loghoelder_C"])
    columns = ("E", "eps", "increment", "stderr", "toy_bound", "probability", "skew_bound")
    rows = [[row[key] for key in columns] for row in report["rows"]]
    return columns, rows


def _run_nondegen(cfg: RunConfig, summary: Summarizer, artifacts: Dict[str, Any]):
    system, f = _system_and_function(cfg)
    eps = parse_list(cfg.eps)
    if len(eps) < 2:
        eps = list(NONDEGEN_EPS)
    profile = estimate_nondegeneracy(f, system, None, eps, cfg.samples)
    summary.check("tails-monotone", bool(np.all(np.diff(profile.measured_tails) <= 0)), "tails grow as eps shrinks")
    summary.record(
        F=profile.F, alpha=profile.alpha, fit_residual=profile.fit_residual, slack=profile.slack,
        degenerate=profile.degenerate,
    )
    if system.kind == "skew-shift":
        stats = k_independence_statistics(system, cfg.samples, cfg.seed)
        summary.record(ks_max=max(stats["ks"]), max_corr=stats["max_corr"])
        if cfg.samples >= 10_000:
            summary.check("k-independence", max(stats["ks"]) < 0.02 and stats["max_corr"] < 0.05, str(stats))
    rows = [
        [e, tail, profile.F * e**profile.alpha if not profile.degenerate else 0.0]
        for e, tail in zip(profile.epsilon_grid, profile.measured_tails)
    ]
    return ("eps", "tail", "fit"), rows


RUNNERS: Dict[str, Runner] = {
    "lyapunov": _run_lyapunov,
    "prufer-check": _run_prufer,
    "ldt": _run_ldt,
    "msa-certify": _run_msa,
    "ids": _run_ids,
    "wegner-skew": _run_wegner_skew,
    "nondegen": _run_nondegen,
}
