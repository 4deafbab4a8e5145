#!/usr/bin/env python3

"""
This is the main CLI for blackout
"""


import os
import tempfile
from typing import Callable, Optional

import click
import numpy as np

import blackout
import blackout.config as CFG
import blackout.general_ctmc as ctmc
import blackout.log
import blackout.suites
from blackout.evaluate import empirical_pmf, moment_report, tv_distance, write_report
from blackout.exceptions import BlackoutError
from blackout.parser import (
    dump_pgm,
    dump_samples,
    parse_dataset,
    parse_generator,
    read_mlp,
    write_mlp,
)
from blackout.pipeline import (
    DeathRateAdapter,
    Sampler,
    generate,
    generate_tau_leaping,
    train,
)
from blackout.predictor import MlpPredictor, OraclePredictor
from blackout.pure_death import PureDeathLaw, StateSpace
from blackout.rng import GENERATE_STREAM, INIT_STREAM, substream
from blackout.schemas import GenConfigSchema, ScheduleSchema, TrainConfigSchema, load_settings

SCHEDULE_HEADER = ("k", "t_k", "exp_neg_t_k")
VALIDATE_HEADER = ("suite", "check", "value", "tolerance", "passed")
TRACE_HEADER = ("iteration", "loss", "excess")
SIMULATE_HEADER = ("m", "empirical", "analytic")


def common_options(fn):
    """Options shared by every subcommand"""
    options = [
        click.option("--debug", "debug", is_flag=True, default=False),
        click.option(
            "-l",
            "--log",
            "log_path",
            type=click.Path(writable=True),
            default=os.path.join(tempfile.gettempdir(), "blackout.log"),
        ),
        click.option(
            "--out",
            "out_dir",
            type=click.Path(file_okay=False),
            default=None,
            help=f"Directory for the output files ({CFG.OUT_ENV_VAR})",
        ),
        click.option(
            "--threads",
            "threads",
            type=click.IntRange(min=1),
            default=None,
            help="Worker threads for sample generation (default 1); "
            "other subcommands run single-threaded",
        ),
        click.option(
            "--config",
            "config_file",
            type=click.File("r"),
            default=None,
            help="YAML file with settings; explicit flags take precedence",
        ),
    ]
    for option in reversed(options):
        fn = option(fn)
    return fn


def _run(debug: bool, log_path: str, fn: Callable):
    """Install the log, run ``fn`` and turn failures into CLI errors"""
    if debug:
        CFG.LOG = blackout.log.create_log(log_path)
    else:
        CFG.LOG = blackout.log.create_null_log()

    try:
        return fn()
    except (click.ClickException, click.Abort):
        raise
    except BlackoutError as e:
        if debug:
            CFG.get_log().exception(str(e))
        raise click.ClickException(str(e))
    except Exception as e:
        click.echo(f"Error: {e}")
        if not debug:
            click.echo("Rerun with --debug to view the full traceback in logs")
        else:
            CFG.get_log().exception(f"Error: {e}")
            click.echo(f"See {log_path} for traceback")
        raise click.Abort()


def _read(file) -> Optional[str]:
    return None if file is None else file.read()


def _load_dataset(file):
    try:
        return parse_dataset(file.read())
    except BlackoutError as e:
        raise click.ClickException(f"{file.name}: {e}")


@click.group("blackout")
@click.version_option(blackout.__version__)
def main():
    """blackout - exact discrete-state diffusion on count data.

    Build schedules, simulate the forward process, train and sample
    generative models, and run the validation suites.
    """


@main.command("schedule")
@common_options
@click.option("--T", "num_steps", type=int, default=None, help="Number of steps (default 1000)")
@click.option("--horizon", "horizon", type=float, default=None, help="Final time t_T (default 15)")
def schedule_cmd(debug, log_path, out_dir, threads, config_file, num_steps, horizon):
    """Write the observation-time schedule to schedule.csv"""

    def run():
        sched = load_settings(
            ScheduleSchema(), _read(config_file), {"T": num_steps, "horizon": horizon}
        )
        out = CFG.resolve_out_dir(out_dir)
        path = write_report(os.path.join(out, "schedule.csv"), SCHEDULE_HEADER, sched.to_rows())
        click.echo(f"wrote {sched.T} schedule times to {path}")

    _run(debug, log_path, run)


@main.command("simulate")
@common_options
@click.option(
    "--process",
    "process",
    default="pure-death",
    show_default=True,
    help="'pure-death' or the path of a generator file",
)
@click.option("--o", "start", type=click.IntRange(min=0), required=True, help="Start state X_0")
@click.option("--t", "t", type=click.FloatRange(min=0), required=True, help="Observation time")
@click.option("--paths", "paths", type=click.IntRange(min=1), default=10000, show_default=True)
@click.option("--M", "max_label", type=click.IntRange(min=1), default=None, help="Largest label (pure death)")
@click.option("--seed", "seed", type=int, required=True)
def simulate_cmd(debug, log_path, out_dir, threads, config_file, process, start, t, paths, max_label, seed):
    """Simulate X_t from X_0 = o and compare it with the exact law"""

    def run():
        rng = substream(seed, GENERATE_STREAM)
        if process == "pure-death":
            law = PureDeathLaw(StateSpace(max_label or max(start, 1)))
            samples = law.sample_forward(np.full(paths, start), t, rng)
            analytic = np.zeros(law.space.num_labels)
            analytic[: start + 1] = law.forward_pmf(start, t)
        else:
            with open(process, "r") as f:
                g = parse_generator(f.read())
            samples = ctmc.simulate_exact(g, start, t, rng, size=paths)
            analytic = ctmc.forward_solve(g, ctmc.Distribution.point_mass(g.max_label, start), t).probs

        empirical = empirical_pmf(samples, analytic.size)
        out = CFG.resolve_out_dir(out_dir)
        rows = [(m, float(empirical[m]), float(analytic[m])) for m in range(analytic.size)]
        write_report(os.path.join(out, "simulate.csv"), SIMULATE_HEADER, rows)
        click.echo(f"total variation: {tv_distance(samples, analytic):.6g}")
        if process == "pure-death":
            report = moment_report(samples, start, t)
            click.echo(f"mean error: {report.mean_error:.6g} (stderr {report.mean_stderr:.3g})")
            click.echo(f"variance error: {report.variance_error:.6g} (stderr {report.variance_stderr:.3g})")

    _run(debug, log_path, run)


@main.command("train")
@common_options
@click.option("--dataset", "dataset", type=click.File("r"), required=True)
@click.option("--loss", "loss", type=click.Choice(["inst", "finite"]), default=None)
@click.option("--T", "num_steps", type=int, default=None)
@click.option("--horizon", "horizon", type=float, default=None)
@click.option("--iters", "iterations", type=int, default=None)
@click.option("--batch-size", "batch_size", type=int, default=None)
@click.option("--lr", "learning_rate", type=float, default=None)
@click.option("--momentum", "momentum", type=float, default=None)
@click.option("--hidden", "hidden", default=None, help="Comma-separated hidden layer widths")
@click.option("--seed", "seed", type=int, required=True)
def train_cmd(
    debug,
    log_path,
    out_dir,
    threads,
    config_file,
    dataset,
    loss,
    num_steps,
    horizon,
    iterations,
    batch_size,
    learning_rate,
    momentum,
    hidden,
    seed,
):
    """Train an MLP predictor; writes model.mlp and loss_trace.csv"""

    def run():
        ds = _load_dataset(dataset)
        widths = None
        if hidden is not None:
            try:
                widths = [int(x) for x in hidden.split(",") if x.strip()]
            except ValueError:
                raise click.BadParameter(f"not a list of integers: {hidden!r}", param_hint="--hidden")
        cfg = load_settings(
            TrainConfigSchema(),
            _read(config_file),
            {
                "seed": seed,
                "loss": loss,
                "T": num_steps,
                "horizon": horizon,
                "iterations": iterations,
                "batch_size": batch_size,
                "learning_rate": learning_rate,
                "momentum": momentum,
                "hidden": widths,
            },
        )
        sched = cfg.schedule()
        predictor = MlpPredictor.create(
            ds.space, sched, cfg.hidden, substream(cfg.seed, INIT_STREAM), cfg.init_scale
        )
        trained, trace = train(ds, predictor, cfg)

        out = CFG.resolve_out_dir(out_dir)
        write_mlp(os.path.join(out, "model.mlp"), trained.params)
        write_report(os.path.join(out, "loss_trace.csv"), TRACE_HEADER, trace.to_rows())
        if trace.loss.size:
            click.echo(f"final loss: {trace.loss[-1]:.6g}")
        click.echo(f"wrote model to {os.path.join(out, 'model.mlp')}")

    _run(debug, log_path, run)


@main.command("generate")
@common_options
@click.option("--model", "model", required=True, help="Path of an MLP file, or 'oracle'")
@click.option("--dataset", "dataset", type=click.File("r"), default=None, help="Dataset (required with the oracle)")
@click.option("--sampler", "sampler", type=click.Choice([s.value for s in Sampler]), default=None)
@click.option("--count", "count", type=click.IntRange(min=1), default=None)
@click.option("--T", "num_steps", type=int, default=None)
@click.option("--horizon", "horizon", type=float, default=None)
@click.option("--M", "max_label", type=click.IntRange(min=1), default=None, help="Largest label (MLP without dataset)")
@click.option("--posterior", "posterior", type=click.Choice(OraclePredictor.MODES), default="sample", show_default=True)
@click.option(
    "--poisson-verbatim",
    "poisson_verbatim",
    is_flag=True,
    default=False,
    help="Do not multiply Poisson means by the step length",
)
@click.option("--block-size", "block_size", type=click.IntRange(min=1), default=None)
@click.option("--pgm", "pgm", is_flag=True, default=False, help="Also write every sample as a PGM image")
@click.option("--seed", "seed", type=int, required=True)
def generate_cmd(
    debug,
    log_path,
    out_dir,
    threads,
    config_file,
    model,
    dataset,
    sampler,
    count,
    num_steps,
    horizon,
    max_label,
    posterior,
    poisson_verbatim,
    block_size,
    pgm,
    seed,
):
    """Generate samples; writes samples.txt"""

    def run():
        file_text = _read(config_file)
        cfg = load_settings(
            GenConfigSchema(),
            file_text,
            {
                "seed": seed,
                "sampler": sampler,
                "count": count,
                "poisson_dt": False if poisson_verbatim else None,
                "block_size": block_size,
                "threads": threads,
            },
        )
        sched = load_settings(ScheduleSchema(), file_text, {"T": num_steps, "horizon": horizon})
        ds = None if dataset is None else _load_dataset(dataset)

        if model == "oracle":
            if ds is None:
                raise click.UsageError("--dataset is required with --model oracle")
            space = ds.space
            predictor = OraclePredictor(ds, sched, posterior)
        else:
            params = read_mlp(model)
            if ds is not None:
                space = ds.space
            elif max_label is not None:
                space = StateSpace(max_label, params.output_dim)
            else:
                raise click.UsageError("--dataset or --M is required with an MLP model")
            predictor = MlpPredictor(params, sched, space.max_label)

        if cfg.sampler is Sampler.TAU:
            g = ctmc.Generator.pure_death(space.max_label)
            samples = generate_tau_leaping([DeathRateAdapter(predictor, space, sched)], g, space, sched, cfg)
        else:
            samples = generate(predictor, space, sched, cfg)

        out = CFG.resolve_out_dir(out_dir)
        with open(os.path.join(out, "samples.txt"), "w") as f:
            f.write(dump_samples(samples, space))
        if pgm:
            for idx, sample in enumerate(samples):
                with open(os.path.join(out, f"sample_{idx}.pgm"), "w") as f:
                    f.write(dump_pgm(sample, space.max_label))
        click.echo(f"wrote {samples.shape[0]} samples to {os.path.join(out, 'samples.txt')}")

    _run(debug, log_path, run)


@main.command("validate")
@common_options
@click.option(
    "--suite",
    "suite",
    default="all",
    show_default=True,
    help="Comma-separated suite names, 'all', or 'help' to list the suites",
)
@click.option("--M", "max_label", type=click.IntRange(min=1), default=8, show_default=True)
@click.option("--seed", "seed", type=int, default=None, help="Required by randomized suites")
@click.pass_context
def validate_cmd(ctx, debug, log_path, out_dir, threads, config_file, suite, max_label, seed):
    """Run validation suites; writes validate.csv and exits 1 on failure"""
    names = [x.strip() for x in suite.split(",") if x.strip()]
    if names == ["help"]:
        click.echo(blackout.suites.get_suite_help())
        return

    def run():
        suites = blackout.suites.get_suites(names)
        if seed is None and any(s.randomized for s in suites):
            raise click.UsageError("--seed is required by the randomized suites")
        checks = blackout.suites.run_suites(names, max_label, seed)
        out = CFG.resolve_out_dir(out_dir)
        write_report(os.path.join(out, "validate.csv"), VALIDATE_HEADER, [c.to_row() for c in checks])
        for check in checks:
            status = "PASS" if check.passed else "FAIL"
            click.echo(f"{status} {check.suite}.{check.name}: {check.value:.3g} (< {check.tolerance:g})")
        return all(c.passed for c in checks)

    if not _run(debug, log_path, run):
        ctx.exit(1)


if __name__ == "__main__":
    main()
