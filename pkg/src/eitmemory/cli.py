"""Command-line entry point: ``eitmem simulate | sweep | verify | oracle-compare``.

Exit codes: 0 success, 1 verify failure, 2 invalid config or request,
3 propagation did not converge. Artifacts are written only after a command's
computation has succeeded, so a failed run leaves the output directory alone.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np
import yaml

from . import checks
from . import config as cfg
from .analysis import (
    analytic_leakage,
    fmt,
    leakage_from_stored,
    normalize_axis,
    roundtrip_fidelity,
    stored_ratios,
    sweep,
)
from .dynamics import PropagationError, evolve_modes, launch_vector, retrieval_map, storage_map
from .model import ProfileSpec, dark_mode_vector, mixing_angles
from .oracle import (
    MAX_ATOMS,
    MAX_DIMENSION,
    DimensionBudgetError,
    ExactRegister,
    compare_to_bosonic,
    contiguous_partition,
    sector_dimension,
)

log = logging.getLogger("eitmemory")


class UsageError(ValueError):
    """Request that cannot be served (exit 2)."""


def _csv(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([v if isinstance(v, str) else fmt(v) for v in row])
    return buf.getvalue()


def _write(out: Path, files: dict[str, str]) -> None:
    out.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        (out / name).write_text(text)


def _json(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, default=_jsonable) + "\n"


def _jsonable(x):
    if isinstance(x, complex):
        return [x.real, x.imag]
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not serializable: {type(x).__name__}")


# --- simulate --------------------------------------------------------------


def trajectory_csv(config, schedule, start, numerics) -> tuple[str, object]:
    """Mode populations and dark-mode overlap along the schedule, from ``start``."""
    prop = evolve_modes(config, schedule, **numerics)
    states = prop.apply(start)
    f = schedule.envelope(prop.times)
    m = config.m
    header = ["t", "f", "theta", "pop_a", *(f"pop_A{k}" for k in range(1, m + 1)), *(f"pop_C{k}" for k in range(1, m + 1)), "dark_overlap"]
    rows = []
    for t, fv, psi in zip(prop.times, f, states):
        dark = np.asarray(dark_mode_vector(config, float(fv)))
        rows.append(
            [t, fv, mixing_angles(config, float(fv)).theta, *(np.abs(psi) ** 2), abs(np.vdot(dark, psi)) ** 2]
        )
    return _csv(header, rows), prop


def cmd_simulate(args) -> int:
    run = cfg.load(args.config)
    if run.system is None:
        raise UsageError("simulate needs a system section")
    config, schedule, numerics = run.system, run.schedule, run.numerics_kwargs
    summary = {
        "command": "simulate",
        "config": config.to_dict(),
        "schedule": schedule.to_dict(),
        "input": run.input.to_dict(),
        "launch": run.launch,
        "numerics": run.numerics,
    }
    if schedule.direction == "retrieval":
        start = np.asarray(dark_mode_vector(config, 0.0), dtype=complex)
        released = retrieval_map(config, schedule, start, **numerics)
        summary.update(photon_population=released.photon_population, released_population=released.released_population)
    elif schedule.direction == "storage":
        start = launch_vector(config, schedule.f_start, run.launch)
        stored = storage_map(config, schedule, run.input, run.launch, **numerics)
        rep = leakage_from_stored(stored)
        ratios = stored_ratios(config, schedule, **numerics).rows()
        summary.update(xi=rep.xi, overlap=rep.overlap, xi_analytic=_analytic(config, run.input), ratios=ratios)
    else:
        start = launch_vector(config, schedule.f_start, run.launch)
        rep = roundtrip_fidelity(config, schedule, state=run.input, launch=run.launch, **numerics)
        summary.update(
            xi=rep.midpoint.xi,
            overlap=rep.midpoint.overlap,
            xi_analytic=_analytic(config, run.input),
            fidelity=rep.fidelity,
            infidelity=rep.infidelity,
            photon_population=rep.photon_population,
            released_population=rep.released_population,
        )
    text, prop = trajectory_csv(config, schedule, start, numerics)
    summary.update(unitarity_defect=prop.unitarity_defect, steps_per_ramp=prop.steps)
    _write(Path(args.out), {"trajectory.csv": text, "summary.json": _json(summary)})
    for key in ("xi", "xi_analytic", "fidelity", "photon_population", "released_population"):
        if summary.get(key) is not None:
            print(f"{key:<20} {fmt(summary[key])}")
    return 0


def _analytic(config, state):
    if state.kind != "fock" or sum(abs(c) > 0 for c in state.fock_coefficients) != 1:
        return None
    n = next(i for i, c in enumerate(state.fock_coefficients) if abs(c) > 0)
    return analytic_leakage(config, n)


# --- sweep -----------------------------------------------------------------


def _parse_grid(text: str) -> list[float]:
    try:
        grid = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"cannot parse grid {text!r}; expected comma-separated numbers") from None
    if not grid:
        raise UsageError("grid is empty")
    return grid


def cmd_sweep(args) -> int:
    run = cfg.load(args.config)
    axis = args.axis or run.sweep.get("axis")
    if axis is None:
        raise UsageError("no sweep axis given (--axis or sweep.axis)")
    try:
        axis = normalize_axis(axis)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    grid = _parse_grid(args.grid) if args.grid else run.sweep.get("grid")
    if not grid:
        raise UsageError("no sweep grid given (--grid or sweep.grid)")
    template = run.template()
    if template is None:
        raise UsageError("sweep needs a system section")
    if axis == "m" and not isinstance(template, ProfileSpec):
        raise UsageError("the m axis needs system.profile")
    table = sweep(
        template,
        axis,
        grid,
        run.schedule,
        run.input,
        run.launch,
        m=run.sweep.get("m", run.raw.get("system", {}).get("profile", {}).get("m", 4)),
        workers=run.sweep.get("workers", 1),
        **run.numerics_kwargs,
    )
    summary = {
        "command": "sweep",
        "axis": axis,
        "grid": list(grid),
        "schedule": run.schedule.to_dict(),
        "input": run.input.to_dict(),
        "xi_increasing": table.is_monotone("xi", increasing=True),
        "infidelity_nonincreasing": table.is_monotone("infidelity", increasing=False),
    }
    _write(Path(args.out), {"sweep.csv": table.to_csv(), "summary.json": _json(summary)})
    sys.stdout.write(table.to_csv())
    return 0


# --- verify ----------------------------------------------------------------


def cmd_verify(args) -> int:
    out = Path(args.out)
    if args.replay:
        try:
            record = yaml.safe_load(Path(args.replay).read_text())
            result = checks.replay(record)
        except (OSError, yaml.YAMLError, KeyError, TypeError) as exc:
            raise UsageError(f"cannot replay {args.replay}: {exc}") from None
        print(result.line())
        return 0 if result.passed else 1
    selected = args.suite or [s.name for s in checks.SUITES]
    try:
        suites = [checks.suite(name) for name in selected]
    except KeyError as exc:
        raise UsageError(str(exc.args[0])) from None
    failed = None
    for s in suites:
        result = checks.run_suite(s, args.seed)
        print(result.line())
        if not result.passed and failed is None:
            failed = result
    if failed is not None:
        record = {"suite": failed.name, "seed": args.seed, "case": failed.counterexample}
        _write(out, {"counterexample.yaml": yaml.safe_dump(record, sort_keys=True)})
        print(f"counterexample written to {out / 'counterexample.yaml'}")
        return 1
    print("all suites passed")
    return 0


# --- oracle-compare --------------------------------------------------------


def cmd_oracle_compare(args) -> int:
    run = cfg.load(args.config)
    if run.oracle is None:
        raise UsageError("oracle-compare needs an oracle section")
    o = run.oracle
    photons = int(o.get("photons", 1))
    s = float(o.get("inhomogeneity", 0.0))
    partitions = [int(m) for m in o.get("partitions", [1])]
    counts = [int(n) for n in o["atom_counts"]]
    # check the whole request against the budget before computing anything
    for n in counts:
        dim = sector_dimension(n, photons, photons)
        if n > MAX_ATOMS or dim > MAX_DIMENSION:
            raise DimensionBudgetError(
                f"dimension over budget: N={n} gives sector dimension {dim} (caps: {MAX_ATOMS} atoms, {MAX_DIMENSION} states)",
                dim,
            )
        for m in partitions:
            if m > n:
                raise UsageError(f"cannot split {n} atoms into {m} groups")
    schedule = cfg.oracle_schedule(run)
    numerics = run.numerics_kwargs
    header = ["N", "dimension"]
    for m in partitions:
        header += [f"overlap_m{m}", f"deviation_m{m}", f"leaked_m{m}"]
    rows, files, reports = [], {}, []
    for n in counts:
        reg = ExactRegister.linear(n, s, n_exc=photons)
        row = [str(n), str(reg.dimension)]
        for m in partitions:
            rep = compare_to_bosonic(reg, contiguous_partition(n, m), schedule, photons, **numerics)
            row += [rep.final_overlap, rep.max_deviation, rep.final_leaked_weight]
            files[f"trajectory_N{n}_m{m}.csv"] = _csv(
                ["t", "deviation", "leaked"], zip(rep.times, rep.deviation, rep.leaked_weight)
            )
            reports.append({"N": n, "m": m, **rep.summary()})
        rows.append(row)
    table = _csv(header, rows)
    files["oracle.csv"] = table
    files["summary.json"] = _json(
        {"command": "oracle-compare", "schedule": schedule.to_dict(), "inhomogeneity": s, "photons": photons, "runs": reports}
    )
    _write(Path(args.out), files)
    sys.stdout.write(table)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eitmem", description="EIT quantum-memory simulator with sub-ensemble inhomogeneity")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="trajectory, leakage and roundtrip fidelity for one config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default="eitmem-out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="leakage and fidelity along one parameter axis")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default="eitmem-out")
    p.add_argument("--axis", help="inhomogeneity | m | ramp-time | photon-number")
    p.add_argument("--grid", help="comma-separated grid values")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify", help="randomized invariant suites")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="eitmem-out")
    p.add_argument("--suite", action="append", help="run only this suite (repeatable)")
    p.add_argument("--replay", help="re-run a counterexample file")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("oracle-compare", help="exact few-atom register vs bosonic model")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default="eitmem-out")
    p.set_defaults(func=cmd_oracle_compare)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ValueError as exc:
        # ConfigError, UsageError and DimensionBudgetError are all ValueErrors
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except PropagationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
