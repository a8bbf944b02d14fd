"""Command line entry point: ``vecoffload train | evaluate | compare | oracle-check``."""

from __future__ import annotations

import logging
from pathlib import Path

import click

from vecoffload import __version__
from vecoffload.config import ConfigError
from vecoffload.harness import (
    MissingRun,
    compare_policies,
    experiment_spec_from_mapping,
    load_experiment_spec,
    load_summaries,
    run_experiment,
    write_comparison,
)


def _parse_seeds(value: str | None) -> tuple[int, ...] | None:
    if not value:
        return None
    seeds: list[int] = []
    for part in value.split(","):
        part = part.strip()
        if "-" in part:
            lo, hi = part.split("-", 1)
            seeds.extend(range(int(lo), int(hi) + 1))
        elif part:
            seeds.append(int(part))
    return tuple(seeds)


def _load_spec(config: str | None, paper_scale: bool, mode: str, policies: tuple[str, ...]):
    overrides = {"mode": mode}
    if policies:
        overrides["policies"] = [p.upper() for p in policies]
    elif not config and mode == "evaluate":
        overrides["policies"] = ["AL"]
    try:
        if config:
            return load_experiment_spec(config, paper_scale, overrides)
        return experiment_spec_from_mapping(overrides, paper_scale)
    except (ConfigError, OSError) as exc:
        raise click.ClickException(str(exc)) from exc


def _report(manifest) -> None:
    ok = len(manifest.runs) - len(manifest.failures)
    click.echo(f"{ok}/{len(manifest.runs)} runs succeeded; outputs in {manifest.output_dir}")
    for r in manifest.failures:
        click.echo(f"FAILED {r.point} {r.policy} seed {r.seed}: {r.error}", err=True)


def _progress(rec) -> None:
    click.echo(f"[{rec.status}] {rec.point} {rec.policy} seed {rec.seed}")


config_option = click.option("--config", "config", type=click.Path(exists=True, dir_okay=False), help="Experiment YAML file.")
out_option = click.option("--out", "out", type=click.Path(file_okay=False), help="Output directory (overrides $VECOFFLOAD_OUTPUT_ROOT).")
seeds_option = click.option("--seeds", help="Seed list such as '0,1,2' or '0-4'.")
episodes_option = click.option("--eval-episodes", type=int, help="Evaluation episodes per run.")


@click.group()
@click.version_option(__version__)
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def main(verbose: bool) -> None:
    """Simulate, train and compare offloading policies in one VEC cell."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")


@main.command()
@config_option
@out_option
@seeds_option
@episodes_option
@click.option("--episodes", type=int, help="Training episodes (overrides the preset).")
@click.option("--policy", "policies", multiple=True, help="Baselines to evaluate next to the learned policy.")
@click.option("--paper-scale", is_flag=True, help="Use the full-scale trainer preset.")
@click.pass_context
def train(ctx, config, out, seeds, eval_episodes, episodes, policies, paper_scale):
    """Train MADDPG at every sweep point and seed, then evaluate it."""
    spec = _load_spec(config, paper_scale, "train", policies)
    changes = {}
    if seeds:
        changes["seeds"] = _parse_seeds(seeds)
    if eval_episodes is not None:
        changes["eval_episodes"] = eval_episodes
    if episodes is not None:
        changes["trainer"] = spec.trainer.replace(episodes=episodes)
    try:
        spec = spec.replace(**changes)
    except (ConfigError, ValueError) as exc:
        raise click.ClickException(str(exc)) from exc
    manifest = run_experiment(spec, out, progress=_progress)
    _report(manifest)
    ctx.exit(1 if manifest.failures else 0)


@main.command()
@config_option
@out_option
@seeds_option
@episodes_option
@click.option("--policy", "policies", multiple=True, help="AL, AV, RD, EDG or LEARNED; repeatable.")
@click.option("--checkpoint", help="Checkpoint for LEARNED; may contain {point} and {seed}.")
@click.option("--paper-scale", is_flag=True, help="Use the full-scale trainer preset.")
@click.pass_context
def evaluate(ctx, config, out, seeds, eval_episodes, policies, checkpoint, paper_scale):
    """Roll out fixed policies on evaluation episodes and write metrics."""
    spec = _load_spec(config, paper_scale, "evaluate", policies)
    changes = {}
    if seeds:
        changes["seeds"] = _parse_seeds(seeds)
    if eval_episodes is not None:
        changes["eval_episodes"] = eval_episodes
    if checkpoint:
        changes["checkpoint"] = checkpoint
    try:
        spec = spec.replace(**changes)
    except (ConfigError, ValueError) as exc:
        raise click.ClickException(str(exc)) from exc
    manifest = run_experiment(spec, out, progress=_progress)
    _report(manifest)
    ctx.exit(1 if manifest.failures else 0)


@main.command()
@click.option("--out", "out", required=True, type=click.Path(exists=True, file_okay=False), help="Experiment output directory.")
@click.option("--policy", "policies", multiple=True, help="Policies to compare; default all but the reference.")
@click.option("--reference", default="RD", show_default=True, help="Reference policy.")
@seeds_option
def compare(out, policies, reference, seeds):
    """Paired per-seed comparison against a reference policy."""
    reference = reference.upper()
    try:
        summaries = load_summaries(out)
        names = tuple(p.upper() for p in policies) or tuple(
            sorted({s.policy for s in summaries} - {reference})
        )
        rows = compare_policies(summaries, names, reference, _parse_seeds(seeds))
    except MissingRun as exc:
        raise click.ClickException(str(exc)) from exc
    path = write_comparison(Path(out) / f"comparison_vs_{reference}.csv", rows)
    for r in rows:
        click.echo(
            f"{r.point} {r.policy:>7} vs {reference}: energy {r.mean_energy_j:.4g} J vs {r.reference_energy_j:.4g} J "
            f"(delta {r.energy_delta_mean:+.3g} +/- {r.energy_delta_std:.2g}), "
            f"delay {r.mean_delay_ms:.3g} ms vs {r.reference_delay_ms:.3g} ms, "
            f"energy <= reference on {r.share_seeds_energy_le:.0%} of seeds"
        )
    click.echo(f"wrote {path}")


@main.command("oracle-check")
@click.option("--instances", default=200, show_default=True, help="Number of seeded small instances.")
@click.option("--seed", default=0, show_default=True, help="First instance seed.")
@click.option("--share-grid", default="0,0.25,0.5,0.75,1", show_default=True, help="Oracle CPU share grid.")
@click.pass_context
def oracle_check(ctx, instances, seed, share_grid):
    """Check that no baseline beats the exhaustive optimum on small cells."""
    from vecoffload.oracle import dominance_check

    grid = tuple(float(x) for x in share_grid.split(","))
    report = dominance_check(instances, seed, grid)
    for s, name, energy, best in report.violations:
        click.echo(f"instance {s}: {name} energy {energy!r} below oracle {best!r}", err=True)
    for s, energy, best in report.edg_single_mismatches:
        click.echo(f"instance {s}: single-vehicle EDG energy {energy!r} differs from oracle {best!r}", err=True)
    click.echo(
        f"{instances} instances; feasible baseline decisions compared: {report.compared}; "
        f"dominance violations: {len(report.violations)}; "
        f"single-vehicle EDG matches: {report.edg_single - len(report.edg_single_mismatches)}/{report.edg_single}"
    )
    ctx.exit(0 if report.ok else 1)


if __name__ == "__main__":  # pragma: no cover
    main()
