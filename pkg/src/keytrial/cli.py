"""Command line: decision tables, scenario generation, studies, service.

Local subcommands (``table``, ``scenario``, ``simulate``) run in
process; ``serve`` starts the HTTP service; the ``trial`` group is a
thin client for a running service.

``simulate`` exit codes: 0 success, 2 spec validation failure,
3 scenario-generator exhaustion.
"""

from __future__ import annotations

import csv as csv_mod
import io
import json
import sys

import click
import numpy as np

from .keys import build_decision_table
from .scenarios import (
    GeneratorConfig,
    ScenarioExhaustedError,
    count_mtds,
    generate_with_mtd_count,
)
from .simulate import SimSpec, SpecValidationError, export_results, run_study


@click.group()
def main():
    """Keyboard dose-finding designs for phase I trials."""


@main.command()
@click.option("--phi", type=float, required=True, help="Target DLT rate.")
@click.option("--eps1", type=float, required=True)
@click.option("--eps2", type=float, required=True)
@click.option("--nmax", type=int, default=16, show_default=True)
@click.option("--format", "fmt", type=click.Choice(["csv", "json", "md"]),
              default="csv", show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="Write to a file instead of stdout.")
def table(phi, eps1, eps2, nmax, fmt, out):
    """Pre-tabulated escalation/de-escalation DLT boundaries."""
    try:
        t = build_decision_table(phi, eps1, eps2, nmax)
    except ValueError as exc:
        raise click.ClickException(str(exc))
    text = {"csv": t.to_csv, "json": lambda: t.to_json() + "\n",
            "md": t.to_markdown}[fmt]()
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        click.echo(text, nl=False)


@main.command()
@click.option("--rows", type=int, required=True)
@click.option("--cols", type=int, required=True)
@click.option("--phi", type=float, required=True)
@click.option("--eps1", type=float, required=True)
@click.option("--eps2", type=float, required=True)
@click.option("--mtds", type=int, default=None,
              help="Accept only matrices with exactly this many doses "
                   "inside [phi-eps1, phi+eps2].")
@click.option("--count", type=int, default=1, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--max-attempts", type=int, default=10_000, show_default=True)
@click.option("--pmax-fixed/--pmax-random", default=False, show_default=True,
              help="Fix the top-toxicity bound at its mean instead of drawing it.")
@click.option("--format", "fmt", type=click.Choice(["json", "csv"]),
              default="json", show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
def scenario(rows, cols, phi, eps1, eps2, mtds, count, seed, max_attempts,
             pmax_fixed, fmt, out):
    """Generate random partial-order toxicity matrices."""
    config = GeneratorConfig(
        rows=rows, cols=cols, phi=phi, eps1=eps1, eps2=eps2,
        target_mtd_count=mtds, max_attempts=max_attempts,
        pmax_fixed_at_mean=pmax_fixed,
    )
    try:
        config.validate()
    except ValueError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    scenarios = []
    try:
        for i in range(count):
            rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1, i)))
            scenarios.append(generate_with_mtd_count(config, rng))
    except ScenarioExhaustedError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(3)
    if fmt == "json":
        docs = []
        for i, sc in enumerate(scenarios):
            doc = sc.to_json_dict()
            doc["scenario_id"] = i
            doc["mtd_count"] = count_mtds(sc, phi, eps1, eps2)
            docs.append(doc)
        text = json.dumps(docs, indent=2) + "\n"
    else:
        buf = io.StringIO()
        writer = csv_mod.writer(buf, lineterminator="\n")
        writer.writerow(["scenario_id", "j", "k", "p"])
        for i, sc in enumerate(scenarios):
            for j in range(1, rows + 1):
                for k in range(1, cols + 1):
                    writer.writerow([i, j, k, repr(sc.prob(j, k))])
        text = buf.getvalue()
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        click.echo(text, nl=False)


@main.command()
@click.option("--spec", "spec_path", type=click.Path(exists=True, dir_okay=False),
              required=True, help="Study spec JSON.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@click.option("--seed", type=int, default=None,
              help="Override the spec's master seed.")
@click.option("--threads", type=int, default=1, show_default=True)
@click.option("--keep-records/--no-keep-records", default=False, show_default=True,
              help="Include per-trial records in study.json.")
def simulate(spec_path, out_dir, seed, threads, keep_records):
    """Run a Monte Carlo operating-characteristics study."""
    try:
        with open(spec_path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        click.echo(f"error: {spec_path}: invalid JSON: {exc}", err=True)
        sys.exit(2)
    try:
        spec = SimSpec.from_json_dict(doc)
    except SpecValidationError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    if seed is not None:
        spec.master_seed = seed
    try:
        result = run_study(spec, threads=threads, keep_records=keep_records)
    except ScenarioExhaustedError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(3)
    csv_path, json_path = export_results(out_dir, spec, result)
    m = result.metrics
    click.echo(
        f"pcs={m.pcs:.2f} pca={m.pca:.2f} overdose={m.overdose_pct:.2f} "
        f"underdose={m.underdose_pct:.2f} safety_stop={m.safety_stop_pct:.2f}"
    )
    click.echo(f"wrote {csv_path} and {json_path}")


@main.command()
@click.option("--data", "data_dir", type=click.Path(file_okay=False),
              default="./keytrial-data", show_default=True)
@click.option("--addr", default="127.0.0.1:8710", show_default=True,
              help="HOST:PORT to bind.")
def serve(data_dir, addr):
    """Start the trial-conduct HTTP service."""
    import uvicorn

    from .service import create_app

    host, _, port = addr.rpartition(":")
    if not host or not port.isdigit():
        raise click.ClickException(f"--addr must be HOST:PORT, got {addr!r}")
    uvicorn.run(create_app(data_dir), host=host, port=int(port), log_level="info")


@main.group()
@click.option("--server", default="http://127.0.0.1:8710", show_default=True,
              envvar="KEYTRIAL_SERVER")
@click.pass_context
def trial(ctx, server):
    """Thin client against a running keytrial service."""
    ctx.obj = server.rstrip("/")


def _client(server: str):
    import httpx

    return httpx.Client(base_url=server, timeout=30.0)


def _show_error(resp) -> None:
    try:
        detail = resp.json().get("detail")
    except Exception:
        detail = resp.text
    raise click.ClickException(f"HTTP {resp.status_code}: {detail}")


@trial.command("create")
@click.option("--rows", type=int, required=True)
@click.option("--cols", type=int, required=True)
@click.option("--phi", type=float, required=True)
@click.option("--eps1", type=float, required=True)
@click.option("--eps2", type=float, required=True)
@click.option("--max-n", type=int, required=True)
@click.option("--cohort-size", type=int, default=1, show_default=True)
@click.option("--cutoff", type=float, default=0.95, show_default=True)
@click.option("--algorithm", type=click.Choice(["key1", "key2", "key3", "key4", "key5"]),
              default="key1", show_default=True)
@click.option("--seed", type=int, default=None)
@click.pass_obj
def trial_create(server, rows, cols, phi, eps1, eps2, max_n, cohort_size,
                 cutoff, algorithm, seed):
    """Create a trial and print its id and starting dose."""
    with _client(server) as client:
        resp = client.post("/trials", json={
            "rows": rows, "cols": cols, "phi": phi, "eps1": eps1, "eps2": eps2,
            "max_n": max_n, "cohort_size": cohort_size, "cutoff": cutoff,
            "algorithm": algorithm, "seed": seed,
        })
        if resp.status_code not in (200, 201):
            _show_error(resp)
        doc = resp.json()
    click.echo(json.dumps({
        "id": doc["id"], "current": doc["state"]["current"],
        "revision": doc["revision"],
    }))


@trial.command("show")
@click.argument("trial_id")
@click.pass_obj
def trial_show(server, trial_id):
    """Print the full trial resource."""
    with _client(server) as client:
        resp = client.get(f"/trials/{trial_id}")
        if resp.status_code != 200:
            _show_error(resp)
        click.echo(json.dumps(resp.json(), indent=2))


@trial.command("list")
@click.pass_obj
def trial_list(server):
    with _client(server) as client:
        resp = client.get("/trials")
        if resp.status_code != 200:
            _show_error(resp)
        click.echo(json.dumps(resp.json(), indent=2))


@trial.command("cohort")
@click.argument("trial_id")
@click.option("--dlt", type=int, required=True, help="DLTs in the cohort.")
@click.option("--revision", type=int, default=None,
              help="Expected revision (defaults to the server's current).")
@click.pass_obj
def trial_cohort(server, trial_id, dlt, revision):
    """Record a cohort outcome and print the recommendation."""
    with _client(server) as client:
        if revision is None:
            head = client.get(f"/trials/{trial_id}")
            if head.status_code != 200:
                _show_error(head)
            revision = head.json()["revision"]
        resp = client.post(f"/trials/{trial_id}/cohorts", json={
            "dlt_count": dlt, "expected_revision": revision,
        })
        if resp.status_code != 200:
            _show_error(resp)
        doc = resp.json()
    click.echo(json.dumps({
        "decision": doc["decision"], "next_dose": doc["next_dose"],
        "newly_eliminated": doc["newly_eliminated"], "status": doc["status"],
        "revision": doc["trial"]["revision"],
    }))


@trial.command("finalize")
@click.argument("trial_id")
@click.option("--force", is_flag=True, default=False,
              help="Close an active trial at its current sample size.")
@click.pass_obj
def trial_finalize(server, trial_id, force):
    """Run the MTD selection and print it."""
    with _client(server) as client:
        resp = client.post(f"/trials/{trial_id}/finalize", json={"force": force})
        if resp.status_code != 200:
            _show_error(resp)
        click.echo(json.dumps(resp.json()["selection"], indent=2))


if __name__ == "__main__":
    main()
