"""``ft-lab`` command line: one subcommand per registered experiment.

Rows go to stdout (or ``--output``) as JSON lines.  ``--csv`` also writes a
flattened table and ``--plot-data`` replaces rows by (x, y, yerr) points.
Exit codes: 0 success, 2 configuration error, 3 budget error.
"""

from __future__ import annotations

import csv
import functools
import json
import sys
from pathlib import Path
from typing import Callable, Iterable

import click

from .circuit_model import BudgetError
from .experiments import REGISTRY, ConfigError, ResultRow

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

SEED_ENV = "FTLAB_SEED"


def _load_config(ctx: click.Context, param: click.Parameter, path: str | None) -> str | None:
    """Read a TOML file into the command's default map so explicit flags win."""
    if path is None:
        return None
    try:
        data = tomllib.loads(Path(path).read_text())
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise click.BadParameter(str(exc), ctx=ctx, param=param) from exc
    name = ctx.info_name
    section = data.get(name, data)
    if not isinstance(section, dict):
        raise click.BadParameter(f"section {name!r} must be a table", ctx=ctx, param=param)
    known = {p.name for p in ctx.command.params}
    values = {}
    for key, value in section.items():
        if isinstance(value, dict):
            continue
        k = key.replace("-", "_")
        if k not in known:
            raise click.BadParameter(f"unknown key {key!r}", ctx=ctx, param=param)
        values[k] = value
    ctx.default_map = {**(ctx.default_map or {}), **values}
    return path


def _emit(rows: Iterable[ResultRow], output: str | None, csv_path: str | None, plot_data: bool) -> None:
    out = open(output, "w") if output else sys.stdout
    flat = []
    try:
        for row in rows:
            if plot_data:
                point = row.plot_point()
                if point is not None:
                    out.write(json.dumps(point) + "\n")
            else:
                out.write(json.dumps(row.to_json(), default=str) + "\n")
            out.flush()
            flat.append(row.flat())
    finally:
        if output:
            out.close()
    if csv_path:
        fields: list = []
        for r in flat:
            fields.extend(k for k in r if k not in fields)
        with open(csv_path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=fields)
            writer.writeheader()
            writer.writerows(flat)


def experiment_command(name: str) -> Callable:
    """Common options plus error-to-exit-code mapping for one experiment."""

    def decorate(fn: Callable) -> click.Command:
        @functools.wraps(fn)
        def run(output: str | None, csv_path: str | None, plot_data: bool, config: str | None, **kw) -> None:
            try:
                rows = fn(**kw)
                _emit(rows, output, csv_path, plot_data)
            except ConfigError as exc:
                raise click.UsageError(str(exc)) from exc
            except BudgetError as exc:
                click.echo(f"budget error: {exc}", err=True)
                sys.exit(3)

        cmd = click.option("--config", type=click.Path(exists=True, dir_okay=False), callback=_load_config, is_eager=True, expose_value=True, help="TOML file of defaults; flags override it.")(run)
        cmd = click.option("--plot-data", is_flag=True, help="Emit (x, y, yerr) points instead of rows.")(cmd)
        cmd = click.option("--csv", "csv_path", type=click.Path(dir_okay=False), help="Also write a flattened CSV table.")(cmd)
        cmd = click.option("--output", type=click.Path(dir_okay=False), help="JSON-lines destination (default stdout).")(cmd)
        return main.command(name)(cmd)

    return decorate


def seed_option(fn: Callable) -> Callable:
    return click.option("--seed", type=int, default=0, envvar=SEED_ENV, show_default=True, help=f"RNG seed (env {SEED_ENV}).")(fn)


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
def main() -> None:
    """Fault-tolerant communication experiments."""


@experiment_command("interface-failure")
@click.option("--level", type=click.IntRange(1, 2), default=1, show_default=True)
@click.option("--p", type=click.FloatRange(0, 1), required=True)
@click.option("--trials", type=click.IntRange(min=1), default=100000, show_default=True)
@click.option("--exact/--no-exact", default=None, help="Exact weight<=2 expansion (default: on at level 1).")
@seed_option
def interface_failure_cmd(level: int, p: float, trials: int, exact: bool | None, seed: int):
    """Failure rates of the encoding and decoding interfaces."""
    return REGISTRY["interface-failure"](level, p, trials, seed, exact)


@experiment_command("effective-channel")
@click.option("--channel", type=click.Choice(["identity", "depolarizing", "iq"]), default="identity", show_default=True)
@click.option("--strength", type=click.FloatRange(0, 1), default=0.0, show_default=True)
@click.option("--level", type=click.IntRange(1, 2), default=1, show_default=True)
@click.option("--p", type=click.FloatRange(0, 1), required=True)
@click.option("--trials", type=click.IntRange(min=1), default=100000, show_default=True)
@click.option("--exact", is_flag=True, help="Use the exact weight<=2 expansion (level 1).")
@seed_option
def effective_channel_cmd(channel: str, strength: float, level: int, p: float, trials: int, exact: bool, seed: int):
    """Effective logical channel around a physical Pauli channel."""
    return REGISTRY["effective-channel"](channel, strength, level, p, trials, seed, exact)


def _float_list(ctx: click.Context, param: click.Parameter, value) -> list:
    if isinstance(value, (list, tuple)):
        return [float(v) for v in value]
    try:
        return [float(v) for v in str(value).split(",")]
    except ValueError as exc:
        raise click.BadParameter("comma separated numbers expected") from exc


@experiment_command("threshold-scan")
@click.option("--grid", callback=_float_list, default="1e-9,3e-9,1e-8,3e-8,1e-7", show_default=True)
@click.option("--levels", callback=_float_list, default="1,2", show_default=True)
@click.option("--gadget", type=click.Choice(["cnot", "h"]), default="cnot", show_default=True)
@click.option("--samples", type=click.IntRange(min=2), default=2000, show_default=True)
@click.option("--max-weight", type=click.IntRange(min=2), default=8, show_default=True)
@seed_option
def threshold_scan_cmd(grid: list, levels: list, gadget: str, samples: int, max_weight: int, seed: int):
    """Probability that an extended rectangle is not good, per level."""
    return REGISTRY["threshold-scan"](grid, tuple(int(v) for v in levels), gadget, samples, max_weight, seed)


@experiment_command("exrec-audit")
@click.option("--level", type=click.IntRange(1, 2), default=1, show_default=True)
def exrec_audit_cmd(level: int):
    """Exhaustive single-fault check of good patterns on a small circuit."""
    return REGISTRY["exrec-audit"](level)


@experiment_command("bounds")
@click.option("--name", required=True, help="Bound identifier, e.g. good_code, ft_cq, avp_quantum, alpha0.")
@click.option("--p", type=float)
@click.option("--q", type=float)
@click.option("--c", type=float)
@click.option("--d", type=int)
@click.option("--d1", type=int)
@click.option("--d2", type=int)
@click.option("--dA", "dA", type=int)
@click.option("--dB", "dB", type=int)
@click.option("--k", type=int)
@click.option("--m", type=int)
@click.option("--j", type=int)
@click.option("--delta", type=float)
@click.option("--alpha", type=float)
@click.option("--eps-m", "eps_m", type=float)
@click.option("--p0", type=float)
@click.option("--capacity", "C", type=float, help="Classical capacity C(T).")
@click.option("--quantum-capacity", "Q", type=float, help="Quantum capacity Q(T).")
@click.option("--value-k", "value_k", type=float, help="k-letter Holevo quantity or coherent information.")
@click.option("--rate", "R", type=float)
@click.option("--mu-min", "mu_min", type=float)
def bounds_cmd(name: str, **kw):
    """Evaluate a closed-form capacity bound or constant."""
    return REGISTRY["bounds"](name, **kw)


@experiment_command("capacity")
@click.option("--kind", type=click.Choice(["holevo_cq", "coherent", "holevo"]), required=True)
@click.option("--channel", required=True, help="zero_plus, orthogonal, trivial; or depolarizing, amplitude_damping, completely_depolarizing, identity.")
@click.option("--strength", type=click.FloatRange(0, 1), default=0.0, show_default=True)
@click.option("--restarts", type=click.IntRange(min=1), default=16, show_default=True)
@click.option("--tol", type=float, default=1e-6, show_default=True)
@seed_option
def capacity_cmd(kind: str, channel: str, strength: float, restarts: int, tol: float, seed: int):
    """Holevo quantity or coherent information of a named channel."""
    return REGISTRY["capacity"](kind, channel, strength, restarts, seed, tol)


@experiment_command("shannon")
@click.option("--kind", type=click.Choice(["typical", "packing"]), required=True)
@click.option("--dist", default="0.9,0.05,0.05", show_default=True)
@click.option("--n", type=click.IntRange(min=1), default=4, show_default=True)
@click.option("--delta", type=float, default=0.1, show_default=True)
@click.option("--trials", type=click.IntRange(min=1), default=100000, show_default=True)
@click.option("--codebooks", type=click.IntRange(min=1), default=50, show_default=True)
@click.option("--messages", type=click.IntRange(min=1), default=2, show_default=True)
@click.option("--channel", default="zero_plus", show_default=True)
@seed_option
def shannon_cmd(kind: str, dist: str, n: int, delta: float, trials: int, codebooks: int, messages: int, channel: str, seed: int):
    """Typicality probabilities or random-codebook packing."""
    return REGISTRY["shannon"](kind, dist, n, delta, trials, codebooks, messages, channel, seed)


@experiment_command("end-to-end")
@click.option("--level", type=click.IntRange(1, 2), default=1, show_default=True)
@click.option("--p", type=click.FloatRange(0, 1), required=True)
@click.option("--q", type=click.FloatRange(0, 1), required=True)
@click.option("--m", type=int, default=7, show_default=True)
@click.option("--blocks", type=click.IntRange(min=1), default=20000, show_default=True)
@click.option("--quantum-trials", type=click.IntRange(min=0), default=0, show_default=True)
@seed_option
def end_to_end_cmd(level: int, p: float, q: float, m: int, blocks: int, quantum_trials: int, seed: int):
    """Classical messages through the encoded pipeline over I_q."""
    return REGISTRY["end-to-end"](level, p, q, m, blocks, quantum_trials, seed)


if __name__ == "__main__":
    main()
