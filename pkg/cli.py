"""
MCCE command line: fit a predictor, explain individuals, run benchmarks and
subsample studies, or write a synthetic dataset.

    python cli.py synth --kind mixed-types --n 5000 --out data/
    python cli.py bench --data data/data.csv --schema data/schema.json --out out/
"""

import json
import logging
import os
import time
from typing import List, Optional
import click
from dotenv import load_dotenv

from config.mcce_consts import (
    BENCHMARK_BIG_K, BIG_K, CUTOFF, EPOCHS, K_NEIGHBORS, LABEL_COLUMN, LEARNING_RATE, N_TEST, SUBSAMPLE_ALL,
)
from data_class.experiment_params import (
    CTreeConfig, ExperimentConfig, FilterWeights, Method, MLPConfig, Selection,
)
from model.predictor import save_predictor, train_mlp
from tabular.preprocess import load_labeled_csv, load_schema, save_csv, save_schema
from tabular.synthetic import SyntheticKind, make_synthetic
from pipelines import Experiment
from pipelines.generator import fit_chain
from pipelines.report import format_table, write_reports

load_dotenv()

logger = logging.getLogger("mcce")


# ==========================================
# SHARED OPTIONS
# ==========================================

def _data_options(f):
    f = click.option("--data", "data_path", required=True, type=click.Path(), help="Labeled CSV.")(f)
    f = click.option("--schema", "schema_path", required=True, type=click.Path(), help="Schema JSON.")(f)
    f = click.option("--label", "label_column", default=LABEL_COLUMN, show_default=True)(f)
    f = click.option("--discrete-as-numeric", is_flag=True, help="Range-scale discrete features in Gower.")(f)
    return f


def _run_options(f):
    options = [
        click.option("--model", "model_path", type=click.Path(), help="Predictor JSON (trained when absent)."),
        click.option("--k", "k_neighbors", default=K_NEIGHBORS, show_default=True, help="Neighbors for yNN/feasibility."),
        click.option("--big-k", default=BIG_K, show_default=True, help=f"Samples per individual (K); benchmarks use {BENCHMARK_BIG_K:,}."),
        click.option("--n-test", default=N_TEST, show_default=True),
        click.option("--cutoff", default=CUTOFF, show_default=True),
        click.option("--seed", default=0, show_default=True),
        click.option("--method", default=Method.MCCE.value, show_default=True,
                     type=click.Choice([m.value for m in Method] + ["all"])),
        click.option("--selection", default=Selection.IDEAL.value, show_default=True,
                     type=click.Choice([s.value for s in Selection])),
        click.option("--weights", default=None, help="Five comma-separated weights (gower,sparsity,feasibility,yNN,redundancy)."),
        click.option("--n-ce", "n_counterfactuals", default=1, show_default=True, help="Counterfactuals per individual."),
        click.option("--hold-out-test", is_flag=True, help="Exclude test individuals from the generator's data."),
        click.option("--out", "output_path", type=click.Path(), help="Output directory."),
        click.option("--valid-set-dump", type=click.Path(), help="CSV of the first individual's valid candidates (method name appended)."),
        click.option("--candidates-dump", type=click.Path(), help="CSV of the first individual's full candidate set (method name appended)."),
        click.option("--n-jobs", default=None, type=int, help="Workers (default: MCCE_N_JOBS or 1)."),
    ]
    for option in reversed(options):
        f = option(f)
    return f


def _parse_weights(text: Optional[str]) -> FilterWeights:
    if not text:
        return FilterWeights()
    try:
        values = [float(v) for v in text.split(",")]
    except ValueError:
        raise click.BadParameter(f"Weights must be numbers, got '{text}'")
    if len(values) != 5:
        raise click.BadParameter(f"Expected 5 weights, got {len(values)}")
    return FilterWeights(gower=values[0], sparsity=values[1], feasibility=values[2], ynn=values[3], redundancy=values[4])


def _n_jobs(value: Optional[int]) -> int:
    return value if value is not None else int(os.getenv("MCCE_N_JOBS", "1"))


def _build_config(options: dict, **extra) -> ExperimentConfig:
    method = options.pop("method")
    options["weights"] = _parse_weights(options.pop("weights"))
    options["n_jobs"] = _n_jobs(options.pop("n_jobs"))
    options["selection"] = Selection(options["selection"])
    options.update(extra)
    return ExperimentConfig(method=Method.MCCE if method == "all" else Method(method), **options)


def _methods(options: dict) -> List[Method]:
    return list(Method) if options["method"] == "all" else [Method(options["method"])]


# ==========================================
# COMMANDS
# ==========================================

@click.group()
@click.option("--log-level", default=None, help="DEBUG, INFO, WARNING (default: MCCE_LOG_LEVEL or INFO).")
def cli(log_level: Optional[str]):
    level = (log_level or os.getenv("MCCE_LOG_LEVEL", "INFO")).upper()
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")


@cli.command()
@_data_options
@click.option("--out", "output_path", required=True, type=click.Path(), help="Predictor JSON to write.")
@click.option("--cutoff", default=CUTOFF, show_default=True)
@click.option("--epochs", default=EPOCHS, show_default=True)
@click.option("--learning-rate", default=LEARNING_RATE, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--trees-out", type=click.Path(), help="Also fit the generator chain and dump its trees as JSON.")
def fit(data_path, schema_path, label_column, discrete_as_numeric, output_path, cutoff, epochs, learning_rate, seed, trees_out):
    """Train the MLP predictor and save it."""
    try:
        schema = load_schema(schema_path)
        ds, labels = load_labeled_csv(data_path, schema, label_column, discrete_as_numeric)
        pred = train_mlp(ds, labels, MLPConfig(epochs=epochs, learning_rate=learning_rate, seed=seed), cutoff)
        save_predictor(pred, output_path)
        click.echo(f"Saved predictor to {output_path}")
        if trees_out:
            chain = fit_chain(ds, CTreeConfig())
            with open(trees_out, "w", encoding="utf-8") as f:
                json.dump(chain.to_dict(), f, indent=2)
            click.echo(f"Saved {chain.q} trees to {trees_out}")
    except (ValueError, FileNotFoundError) as exc:
        raise click.ClickException(str(exc))


@cli.command()
@_data_options
@_run_options
def explain(**options):
    """Explain the test individuals and write their counterfactual rows."""
    _run(options, print_rows=True)


@cli.command()
@_data_options
@_run_options
def bench(**options):
    """Benchmark report (report.csv, report.txt, timing.csv, counterfactuals.csv)."""
    _run(options, print_rows=False)


def _run(options: dict, print_rows: bool) -> None:
    methods = _methods(options)
    try:
        cfg = _build_config(options)
        experiment = Experiment(cfg)
        started = time.perf_counter()
        reports = [experiment.run(method) for method in methods]
        logger.info("Finished in %.1f s", time.perf_counter() - started)
        if cfg.output_path:
            write_reports(reports, experiment.ds, cfg.output_path)
    except (ValueError, FileNotFoundError) as exc:
        raise click.ClickException(str(exc))

    click.echo(format_table(reports))
    if print_rows:
        for report in reports:
            for outcome in report.outcomes:
                if not outcome.counterfactuals:
                    click.echo(f"[{report.method}] individual {outcome.record.index}: no counterfactual found")
                    continue
                changed = {
                    name: value for name, value in experiment.ds.decode(outcome.counterfactuals[0]).items()
                    if value != experiment.ds.decode(outcome.individual)[name]
                }
                click.echo(f"[{report.method}] individual {outcome.record.index}: {changed}")


@cli.command()
@_data_options
@_run_options
@click.option("--sizes", default="100,1000,all", show_default=True, help="Comma-separated training sizes; 'all' = every row.")
@click.option("--repetitions", default=1, show_default=True)
@click.option("--refit-predictor", is_flag=True, help="Retrain the MLP on each subset instead of keeping the full-data one.")
def subsample(sizes, repetitions, refit_predictor, **options):
    """Repeat the experiment on random training subsets of each size."""
    parsed = [SUBSAMPLE_ALL if s.strip() == "all" else int(s) for s in sizes.split(",")]
    methods = _methods(options)
    try:
        cfg = _build_config(options, subsample_sizes=parsed, repetitions=repetitions, refit_predictor=refit_predictor)
        experiment = Experiment(cfg)
        reports = [r for method in methods for r in experiment.run_subsample(method)]
        if cfg.output_path:
            write_reports(reports, experiment.ds, cfg.output_path, counterfactuals=False)
    except (ValueError, FileNotFoundError) as exc:
        raise click.ClickException(str(exc))
    click.echo(format_table(reports))


@cli.command()
@click.option("--kind", type=click.Choice([k.value for k in SyntheticKind]), default=SyntheticKind.MIXED_TYPES.value, show_default=True)
@click.option("--n", default=5000, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "output_path", required=True, type=click.Path(), help="Directory for data.csv and schema.json.")
def synth(kind, n, seed, output_path):
    """Write a synthetic labeled dataset and its schema."""
    try:
        ds, labels = make_synthetic(SyntheticKind(kind), n, seed)
    except ValueError as exc:
        raise click.ClickException(str(exc))
    os.makedirs(output_path, exist_ok=True)
    save_csv(ds, os.path.join(output_path, "data.csv"), labels, LABEL_COLUMN)
    save_schema(ds.schema, os.path.join(output_path, "schema.json"))
    click.echo(f"Wrote {ds.n_rows} rows ({kind}) to {output_path}")


if __name__ == "__main__":
    cli()
