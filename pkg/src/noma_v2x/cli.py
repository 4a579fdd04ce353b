"""Command-line client.

Exit codes: 0 success, 1 run failure, 2 verification failure, 3 config error.
Every verb runs in-process unless ``--url`` points it at a running service.
"""
from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click

from . import harness
from .config import PRESETS, ConfigError, dump, load, override, preset
from .scenario import ScenarioError
from .schedule import ScheduleFormatError
from .scheduler import MCD, SCHEMES

EXIT_OK, EXIT_RUN, EXIT_VERIFY, EXIT_CONFIG = 0, 1, 2, 3


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _config(config_path: str | None, preset_name: str | None):
    if config_path and preset_name:
        raise ConfigError("give --config or --preset, not both")
    return load(config_path) if config_path else preset(preset_name or "standard")


def _post(url: str, path: str, payload: dict, timeout: float | None = None) -> dict:
    import httpx

    try:
        resp = httpx.post(url.rstrip("/") + path, json=payload, timeout=timeout)
    except httpx.HTTPError as exc:
        _fail(EXIT_RUN, f"service unreachable: {exc}")
    if resp.status_code == 422:
        detail = resp.json().get("detail")
        message = detail.get("message") if isinstance(detail, dict) else json.dumps(detail)
        _fail(EXIT_CONFIG, message)
    if resp.status_code >= 400:
        _fail(EXIT_RUN, f"service returned {resp.status_code}: {resp.text[:200]}")
    return resp.json()


def _write(out: Path, csv_text: str, summary: dict) -> tuple[Path, Path]:
    if out.suffix.lower() != ".csv":
        out.mkdir(parents=True, exist_ok=True)
        out = out / "results.csv"
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
    out.write_bytes(csv_text.encode("utf-8"))
    summary_path = out.with_name(out.stem + "_summary.json")
    summary_path.write_text(json.dumps(summary, indent=2) + "\n")
    return out, summary_path


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log failed runs as they happen.")
def main(verbose: bool):
    """Scheduling experiments for NOMA V2X broadcasting."""
    logging.basicConfig(level=logging.INFO if verbose else logging.ERROR, format="%(levelname)s %(message)s")


config_option = click.option("--config", "config_path", type=click.Path(dir_okay=False), help="YAML config file.")
preset_option = click.option("--preset", "preset_name", help="Named preset (see `preset list`); default standard.")
url_option = click.option("--url", help="Send the request to a running service instead of running locally.")


@main.command()
@config_option
@preset_option
@click.option("--seed", type=int, help="Master seed.")
@click.option("--seeds-per-point", type=int, help="Replicates per grid point.")
@click.option("--out", type=click.Path(), default="results", show_default=True,
              help="Output directory, or a .csv path.")
@click.option("--scheme", "schemes", multiple=True, type=click.Choice(SCHEMES), help="Repeat to pick several.")
@click.option("--sweep", help="Sweep grid as var=a,b,c (v, r, k_max, rate_threshold, n_users, w).")
@click.option("--jobs", type=int, default=1, show_default=True, help="Worker processes.")
@click.option("--export-schedules", type=click.Path(file_okay=False), help="Also write every run's tables here.")
@url_option
def run(config_path, preset_name, seed, seeds_per_point, out, schemes, sweep, jobs, export_schedules, url):
    """Run a sweep and write the CSV plus a JSON summary."""
    try:
        if jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        base = _config(config_path, preset_name)
        cfg = override(base, seed, seeds_per_point, schemes, sweep)
    except ConfigError as exc:
        _fail(EXIT_CONFIG, str(exc))
    if url:
        if export_schedules:
            _fail(EXIT_CONFIG, "--export-schedules only works locally")
        data = _post(url, "/run", {"config": cfg.to_dict(), "jobs": jobs})
        csv_text, summary, failed = data["csv"], data["summary"], data["failed"]
        n_rows = data["rows"]
    else:
        total = len(harness.plan(cfg))
        with click.progressbar(length=total, label="runs", file=sys.stderr) as bar:
            last = [0]

            def progress(done, _):
                bar.update(done - last[0])
                last[0] = done

            rows = harness.run(cfg, jobs=jobs, progress=progress, export_dir=export_schedules)
        csv_text, summary = harness.rows_to_csv(rows), harness.summarize(cfg, rows)
        failed, n_rows = sum(r["status"] != "ok" for r in rows), len(rows)
    csv_path, summary_path = _write(Path(out), csv_text, summary)
    click.echo(f"{n_rows} rows -> {csv_path}")
    click.echo(f"summary -> {summary_path}")
    for entry in summary["points"]:
        prp = entry["prp"]
        if prp["mean"] is not None:
            ci = f" +/- {prp['ci95']:.4f}" if prp["ci95"] is not None else ""
            click.echo(f"  {entry['scheme']:<9} point {entry['point']} ({entry['value']}): PRP {prp['mean']:.4f}{ci}")
    if failed:
        _fail(EXIT_RUN, f"{failed} of {n_rows} runs failed; see the status and reason columns")


@main.command()
@click.option("--level", type=click.Choice(["fast", "full"]), default="fast", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--planted-bug", is_flag=True, hidden=True, help="Disable the rotation validity check (negative control).")
@url_option
def verify(level, seed, planted_bug, url):
    """Run the self-checks; exit 2 naming each failed invariant."""
    if url:
        data = _post(url, "/verify", {"level": level, "seed": seed, "planted_bug": planted_bug})
        for c in data["checks"]:
            click.echo(f"{'PASS' if c['passed'] else 'FAIL'} {c['name']}: {c['detail']}")
        passed, failed = data["passed"], data["failed"]
    else:
        from .verification import verify as run_verify

        report = run_verify(level, seed, planted_bug, progress=lambda c: click.echo(c.line()))
        passed, failed = report.passed, report.failed
    if not passed:
        _fail(EXIT_VERIFY, "failed invariants: " + ", ".join(failed))
    click.echo("all checks passed")


@main.command("check-schedule")
@click.argument("schedule_file", type=click.Path(dir_okay=False))
@click.argument("scenario_file", type=click.Path(dir_okay=False))
@config_option
@preset_option
@click.option("--scheme", type=click.Choice(SCHEMES), default=MCD, show_default=True,
              help="Selects the channel count and caps the schedule is checked against.")
@url_option
def check_schedule(schedule_file, scenario_file, config_path, preset_name, scheme, url):
    """Check a schedule table against the scheduling constraints."""
    try:
        cfg = _config(config_path, preset_name)
        schedule_text = Path(schedule_file).read_text()
        scenario_text = Path(scenario_file).read_text()
    except ConfigError as exc:
        _fail(EXIT_CONFIG, str(exc))
    except OSError as exc:
        _fail(EXIT_CONFIG, f"cannot read input: {exc}")
    if url:
        data = _post(url, "/check-schedule", {"config": cfg.to_dict(), "schedule_csv": schedule_text,
                                              "scenario_csv": scenario_text, "scheme": scheme})
        violations = {c: v["witnesses"] for c, v in data["constraints"].items()}
    else:
        try:
            report = harness.check_schedule(schedule_text, scenario_text, cfg, scheme)
        except (ScheduleFormatError, ScenarioError) as exc:
            _fail(EXIT_CONFIG, f"{schedule_file if isinstance(exc, ScheduleFormatError) else scenario_file}: {exc}")
        violations = report.violations
    for c, v in violations.items():
        click.echo(f"{c}: {'satisfied' if not v else 'VIOLATED'}")
        for w in v[:20]:
            click.echo(f"    {w}")
        if len(v) > 20:
            click.echo(f"    ... {len(v) - 20} more")
    if any(violations.values()):
        sys.exit(EXIT_VERIFY)


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
def serve(host, port):
    """Start the HTTP service that the --url options talk to."""
    import uvicorn

    uvicorn.run("noma_v2x.api:app", host=host, port=port)


@main.group("preset")
def preset_group():
    """Named configurations."""


@preset_group.command("list")
def preset_list():
    for name, (doc, _) in PRESETS.items():
        click.echo(f"{name:<8} {doc}")


@preset_group.command("show")
@click.argument("name")
def preset_show(name):
    """Print a preset as YAML, ready to edit and pass back with --config."""
    try:
        click.echo(dump(preset(name)), nl=False)
    except ConfigError as exc:
        _fail(EXIT_CONFIG, str(exc))


if __name__ == "__main__":
    main()
