"""Experiment runner: seeds, per-run pipeline, CSV rows and JSON summaries.

Seed mixing rule: every random stream comes from
``numpy.random.SeedSequence([master, tag, *indices])``.

* ``tag 0, (replicate)``        scenario positions and fading, shared by all
  schemes and grid points of one replicate (common random numbers);
* ``tag 1, (scheme, point, replicate)`` the scheduler's own draws
  (subset selection in UTSA, initial channels in RMSA), with ``scheme``
  the index of the scheme in :data:`~noma_v2x.scheduler.SCHEMES`.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from . import scheduler as sched
from .channel import ChannelState
from .config import ExperimentConfig
from .metrics import latency_satisfaction_ratio, mean_ci, packet_reception_probability, simulate_period
from .powerctrl import run_control_portion
from .scenario import KMH, generate_urban_grid
from .schedule import ConstraintReport, Schedule, check_constraints
from .scenario import Scenario

log = logging.getLogger(__name__)

CSV_COLUMNS = (
    "scheme", "point", "replicate", "seed", "v", "r", "k_max", "rate_threshold", "n_users",
    "prp", "latency_ratio", "rotations_utsa", "rotations_rmsa", "unsatisfied_power",
    "status", "reason",
)

SCHEME_FN = {sched.MCD: sched.noma_mcd, sched.GGA: sched.noma_gga, sched.OMA: sched.oma_baseline}


def scenario_streams(master: int, replicate: int) -> tuple[np.random.Generator, np.random.Generator, int]:
    ss = np.random.SeedSequence([master, 0, replicate])
    a, b = ss.spawn(2)
    return np.random.default_rng(a), np.random.default_rng(b), int(ss.generate_state(1)[0])


def algorithm_stream(master: int, scheme: str, point: int, replicate: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([master, 1, sched.SCHEMES.index(scheme), point, replicate]))


@dataclass
class RunArtifacts:
    """Everything one run produced, for replay and inspection."""

    scenario: object
    state: ChannelState
    result: sched.ScheduleResult
    schedule: object
    outcome: object


def apply_power_control(result: sched.ScheduleResult, scenario, state, radio, cfg: ExperimentConfig):
    """Run the control portion in every slot and attach final powers."""
    s = result.schedule
    powers, unsatisfied = {}, 0
    for i in range(1, s.n_slots + 1):
        txs = s.transmitters(i)
        if not txs:
            continue
        ctrl = run_control_portion(i, {j: s.channels_of(j, i) for j in txs}, state, scenario, radio,
                                   cfg.power)
        powers.update({(i, j, k): p for (j, k), p in ctrl.powers.items()})
        unsatisfied += len(ctrl.unsatisfied)
    return s.with_powers(powers), unsatisfied


def execute(cfg: ExperimentConfig, scheme: str, point: int, replicate: int) -> RunArtifacts:
    scen_rng, fade_rng, _ = scenario_streams(cfg.seed, replicate)
    radio, scfg = cfg.for_scheme(scheme)
    scenario = generate_urban_grid(cfg.scenario, scen_rng)
    state = ChannelState.draw(scenario, radio, scfg.n_channels, fade_rng)
    result = SCHEME_FN[scheme](scenario, radio, scfg, algorithm_stream(cfg.seed, scheme, point, replicate))
    if scheme == sched.OMA:
        schedule, unsatisfied = result.schedule, 0
    else:
        schedule, unsatisfied = apply_power_control(result, scenario, state, radio, cfg)
    report = check_constraints(schedule, scenario, scfg.k_max, scfg.t_max, scfg.k_u)
    if not report.ok:
        raise sched.SchedulingError("constraint check failed: " + "; ".join(
            f"({c}) {v[0]}" for c, v in report.violations.items() if v))
    outcome = simulate_period(schedule, scenario, state, radio.rate_threshold, cfg.required_rate(scheme),
                              sic=scheme != sched.OMA)
    outcome.rotations_utsa = result.rotations_utsa
    outcome.rotations_rmsa = result.rotations_rmsa
    outcome.unsatisfied = unsatisfied
    return RunArtifacts(scenario, state, result, schedule, outcome)


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return "" if math.isnan(x) else repr(x)
    return str(x)


def run_one(cfg: ExperimentConfig, scheme: str, point: int, replicate: int,
            export_dir: str | Path | None = None) -> dict:
    value = cfg.points[point]
    pcfg = cfg.at(value)
    _, _, seed = scenario_streams(cfg.seed, replicate)
    radio, scfg = pcfg.for_scheme(scheme)
    row = {
        "scheme": scheme, "point": point, "replicate": replicate, "seed": seed,
        "v": pcfg.scenario.speed / KMH, "r": pcfg.scenario.comm_range, "k_max": scfg.k_max,
        "rate_threshold": radio.rate_threshold, "n_users": pcfg.scenario.n_users,
        "prp": None, "latency_ratio": None, "rotations_utsa": None, "rotations_rmsa": None,
        "unsatisfied_power": None, "status": "ok", "reason": "",
    }
    try:
        art = execute(pcfg, scheme, point, replicate)
    except Exception as exc:  # a failed run is recorded, the sweep goes on
        log.warning("%s point %d replicate %d failed: %s", scheme, point, replicate, exc)
        row.update(status="failed", reason=f"{type(exc).__name__}: {exc}")
        return row
    if export_dir is not None:
        export_run(art, export_dir, f"{scheme}_p{point}_r{replicate}")
    out = art.outcome
    row.update(
        n_users=art.scenario.n_users,
        prp=packet_reception_probability(out),
        latency_ratio=latency_satisfaction_ratio(out),
        rotations_utsa=out.rotations_utsa,
        rotations_rmsa=out.rotations_rmsa,
        unsatisfied_power=out.unsatisfied,
    )
    return row


def plan(cfg: ExperimentConfig) -> list[tuple[str, int, int]]:
    return [(scheme, p, rep) for p in range(len(cfg.points)) for scheme in cfg.schemes
            for rep in range(cfg.seeds_per_point)]


def _run_task(args):
    cfg, scheme, point, rep, export_dir = args
    return run_one(cfg, scheme, point, rep, export_dir)


def run(cfg: ExperimentConfig, jobs: int = 1, progress=None, export_dir: str | Path | None = None) -> list[dict]:
    """All rows of the plan, in plan order whatever the worker count."""
    tasks = [(cfg, *t, export_dir) for t in plan(cfg)]
    rows = []
    if jobs <= 1:
        for n, t in enumerate(tasks):
            rows.append(_run_task(t))
            if progress:
                progress(n + 1, len(tasks))
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for n, row in enumerate(pool.map(_run_task, tasks, chunksize=1)):
                rows.append(row)
                if progress:
                    progress(n + 1, len(tasks))
    return rows


def rows_to_csv(rows: Iterable[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\r\n", quoting=csv.QUOTE_MINIMAL)
    writer.writeheader()
    for row in rows:
        writer.writerow({c: _fmt(row.get(c)) for c in CSV_COLUMNS})
    return buf.getvalue()


def summarize(cfg: ExperimentConfig, rows: list[dict]) -> dict:
    """Mean and 95% CI of each metric per (scheme, grid point)."""
    points = []
    for p, value in enumerate(cfg.points):
        for scheme in cfg.schemes:
            sel = [r for r in rows if r["point"] == p and r["scheme"] == scheme]
            ok = [r for r in sel if r["status"] == "ok"]
            entry = {"scheme": scheme, "point": p, "value": value, "runs": len(sel), "failed": len(sel) - len(ok)}
            for metric in ("prp", "latency_ratio", "rotations_utsa", "rotations_rmsa"):
                vals = [r[metric] for r in ok if r[metric] is not None]
                mean, half, n = mean_ci(vals)
                entry[metric] = {"mean": None if math.isnan(mean) else mean,
                                 "ci95": None if math.isnan(half) else half, "n": n}
            points.append(entry)
    return {
        "sweep": {"var": cfg.sweep_var, "values": list(cfg.sweep_values)},
        "master_seed": cfg.seed,
        "seeds_per_point": cfg.seeds_per_point,
        "prp_definition": "timely decoded (tx, rx, slot) deliveries / intended in-range deliveries",
        "points": points,
        "config": cfg.to_dict(),
    }


def write_outputs(cfg: ExperimentConfig, rows: list[dict], out: str | Path) -> tuple[Path, Path]:
    out = Path(out)
    if out.suffix.lower() != ".csv":
        out.mkdir(parents=True, exist_ok=True)
        out = out / "results.csv"
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
    out.write_bytes(rows_to_csv(rows).encode("utf-8"))
    summary = out.with_name(out.stem + "_summary.json")
    summary.write_text(json.dumps(summarize(cfg, rows), indent=2, sort_keys=False) + "\n")
    return out, summary


def export_run(art: RunArtifacts, directory: str | Path, stem: str) -> tuple[Path, Path]:
    """Write the scenario and schedule tables of one run for later replay or checking."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    scen = directory / f"{stem}_scenario.csv"
    sch = directory / f"{stem}_schedule.csv"
    scen.write_text(art.scenario.to_csv())
    sch.write_text(art.schedule.to_csv())
    return sch, scen


def check_schedule(schedule_text: str, scenario_text: str, cfg: ExperimentConfig,
                   scheme: str = sched.MCD) -> ConstraintReport:
    """Parse both tables and run the constraint checker under ``cfg``'s limits.

    Raises :class:`ScheduleFormatError` or :class:`ScenarioError` on bad input.
    """
    radio, scfg = cfg.for_scheme(scheme)
    scenario = Scenario.from_csv(cfg.scenario, scenario_text)
    schedule = Schedule.from_csv(schedule_text, scenario.n_users, scenario.n_slots, scfg.n_channels, scheme=scheme)
    return check_constraints(schedule, scenario, scfg.k_max, scfg.t_max, scfg.k_u)
