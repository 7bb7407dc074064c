"""Command-line surface: every inference task at desk scale, file-in/file-out.

Exit codes: 0 on success, 2 on usage errors, 1 on runtime failures
(malformed files, misaligned inputs, solver-level validation).  Every
subcommand is deterministic given identical inputs and ``--seed``.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np

from . import apps, density, formats
from .core import DepthMap, SparseMeasurements, make_patch_grid
from .metrics import error_report, wkdr
from .samplers import SamplerConfig, render_scene, synthesize_samples
from .solver import SolverOptions, make_sparse_cost, map_infer

_SPARSE_MODES = {
    "nn": "nearest-neighbor",
    "bilinear": "bilinear-grid",
}


def _parse_point(value: str, name: str) -> tuple[int, int]:
    parts = value.split(",")
    if len(parts) != 2:
        raise click.BadParameter(f"{name} must look like ROW,COL, got {value!r}")
    try:
        return int(parts[0]), int(parts[1])
    except ValueError:
        raise click.BadParameter(f"{name} must be integers, got {value!r}")


def _load_solver_opts(path) -> SolverOptions | None:
    if path is None:
        return None
    return formats.solver_options_from_json(formats.load_json(path))


def _seed_option(fn):
    return click.option(
        "--seed",
        type=int,
        default=None,
        help="Random seed; overrides any seed stored in config files.",
    )(fn)


@click.group()
def cli():
    """Depth inference over sample-approximated patch distributions."""


# ------------------------------------------------------------------ scene


@cli.group()
def scene():
    """Synthetic ground-truth scenes."""


@scene.command("gen")
@click.option("--spec", "spec_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@_seed_option
def scene_gen(spec_path, out_path, seed):
    """Render a piecewise-planar scene description to a depth file."""
    spec = formats.scene_spec_from_json(formats.load_json(spec_path), seed=seed)
    formats.save_depth(out_path, render_scene(spec))
    click.echo(f"wrote {out_path}")


# ----------------------------------------------------------------- sample


@cli.group()
def sample():
    """Per-patch sample tensors."""


@sample.command("synth")
@click.option("--gt", "gt_path", required=True, type=click.Path(exists=True))
@click.option("--K", "patch", default=33, show_default=True, type=int)
@click.option("--stride", default=4, show_default=True, type=int)
@click.option("--S", "n_samples", default=100, show_default=True, type=int)
@click.option("--cfg", "cfg_path", default=None, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@_seed_option
def sample_synth(gt_path, patch, stride, n_samples, cfg_path, out_path, seed):
    """Draw plausible depth samples for every patch of a ground-truth map."""
    gt = formats.load_depth(gt_path)
    grid = make_patch_grid(gt.shape[0], gt.shape[1], patch, stride)
    if cfg_path is not None:
        cfg = formats.sampler_config_from_json(formats.load_json(cfg_path), seed=seed)
    else:
        cfg = SamplerConfig(seed=seed if seed is not None else 0)
    ss = synthesize_samples(gt, grid, n_samples, cfg)
    formats.save_samples(out_path, ss)
    click.echo(f"wrote {out_path}")


# ------------------------------------------------------------------ infer


@cli.group()
def infer():
    """Dense depth estimates from a sample tensor."""


@infer.command("mean")
@click.option("--samples", "samples_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@_seed_option
def infer_mean(samples_path, out_path, seed):
    """Per-pixel mean estimate (overlap-averaged sample means)."""
    ss = formats.load_samples(samples_path)
    formats.save_depth(out_path, density.mean_depth(ss))
    click.echo(f"wrote {out_path}")


@infer.command("variance")
@click.option("--samples", "samples_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@_seed_option
def infer_variance(samples_path, out_path, seed):
    """Per-pixel predictive variance map."""
    ss = formats.load_samples(samples_path)
    formats.save_depth(out_path, DepthMap(density.variance_map(ss).astype(np.float32)))
    click.echo(f"wrote {out_path}")


@infer.command("complete")
@click.option("--samples", "samples_path", required=True, type=click.Path(exists=True))
@click.option("--meas", "meas_path", required=True, type=click.Path(exists=True))
@click.option(
    "--mode",
    type=click.Choice(["auto", "nn", "bilinear"]),
    default="auto",
    show_default=True,
    help="Residual spreading; auto picks bilinear for lattices, nn otherwise.",
)
@click.option("--lam", default=1.0, show_default=True, type=float)
@click.option("--opts", "opts_path", default=None, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@_seed_option
def infer_complete(samples_path, meas_path, mode, lam, opts_path, out_path, seed):
    """Fuse sparse point measurements into a dense estimate."""
    ss = formats.load_samples(samples_path)
    meas = formats.load_measurements(meas_path, (ss.grid.height, ss.grid.width))
    opts = _load_solver_opts(opts_path)
    if mode == "auto":
        report = apps.complete_sparse(ss, meas, lam=lam, opts=opts)
    else:
        cost = make_sparse_cost(meas, _SPARSE_MODES[mode], lam=lam)
        report = map_infer(ss, cost, opts)
    formats.save_depth(out_path, report.depth)
    click.echo(
        f"wrote {out_path} (iterations={report.iterations}, "
        f"converged={report.converged})"
    )


@infer.command("uncrop")
@click.option("--samples", "samples_path", required=True, type=click.Path(exists=True))
@click.option("--dense", "dense_path", required=True, type=click.Path(exists=True))
@click.option("--mask", "mask_path", default=None, type=click.Path(exists=True))
@click.option(
    "--line",
    "line_row",
    default=None,
    type=int,
    help="Build a 1-pixel-tall line mask at this row; -1 selects the center row.",
)
@click.option(
    "--window",
    "window_spec",
    default=None,
    type=str,
    help="Build a rectangular mask TOP,LEFT,HEIGHT,WIDTH.",
)
@click.option("--lam", default=150.0, show_default=True, type=float)
@click.option("--opts", "opts_path", default=None, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@_seed_option
def infer_uncrop(
    samples_path, dense_path, mask_path, line_row, window_spec, lam, opts_path,
    out_path, seed,
):
    """Extend depth known inside a masked region to the full frame."""
    given = [x for x in (mask_path, line_row, window_spec) if x is not None]
    if len(given) != 1:
        raise click.UsageError("provide exactly one of --mask, --line, --window")
    ss = formats.load_samples(samples_path)
    dense = formats.load_depth(dense_path)
    shape = (ss.grid.height, ss.grid.width)
    if mask_path is not None:
        mask = formats.mask_from_depth(formats.load_depth(mask_path))
    elif line_row is not None:
        mask = apps.line_mask(shape, row=None if line_row < 0 else line_row)
    else:
        parts = window_spec.split(",")
        if len(parts) != 4:
            raise click.UsageError("--window must be TOP,LEFT,HEIGHT,WIDTH")
        try:
            top, left, height, width = (int(p) for p in parts)
        except ValueError:
            raise click.UsageError("--window values must be integers")
        mask = apps.window_mask(shape, top, left, height, width)
    report = apps.uncrop(ss, dense, mask, lam=lam, opts=_load_solver_opts(opts_path))
    formats.save_depth(out_path, report.depth)
    click.echo(
        f"wrote {out_path} (iterations={report.iterations}, "
        f"converged={report.converged})"
    )


@infer.command("modes")
@click.option("--samples", "samples_path", required=True, type=click.Path(exists=True))
@click.option("--M", "count", default=5, show_default=True, type=int)
@click.option("--lambda", "lam", default=10.0, show_default=True, type=float)
@click.option(
    "--mask",
    "mask_paths",
    multiple=True,
    type=click.Path(exists=True),
    help="Annotation mask for mode i (repeat in mode order).",
)
@click.option("--opts", "opts_path", default=None, type=click.Path(exists=True))
@click.option("--out-dir", "out_dir", required=True, type=click.Path())
@_seed_option
def infer_modes(samples_path, count, lam, mask_paths, opts_path, out_dir, seed):
    """Generate diverse candidate estimates; the first is always the mean."""
    ss = formats.load_samples(samples_path)
    masks = [
        formats.mask_from_depth(formats.load_depth(p)) for p in mask_paths
    ]
    modeset = apps.generate_modes(
        ss, count, lam=lam, masks=masks or None, opts=_load_solver_opts(opts_path)
    )
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = []
    for i, (mode, label) in enumerate(zip(modeset.modes, modeset.provenance)):
        name = f"mode_{i:02d}.pmdp"
        formats.save_depth(out / name, mode)
        manifest.append({"file": name, "provenance": label})
    (out / "modes.json").write_text(
        json.dumps({"modes": manifest}, indent=2) + "\n", encoding="utf-8"
    )
    click.echo(f"wrote {count} modes to {out_dir}")


# ------------------------------------------------------------------ guide


@cli.group()
def guide():
    """Measurement placement guidance."""


@guide.command("points")
@click.option("--samples", "samples_path", required=True, type=click.Path(exists=True))
@click.option("--budget", default=100, show_default=True, type=int)
@click.option("--dmin", default=5.0, show_default=True, type=float)
@click.option(
    "--gt",
    "gt_path",
    default=None,
    type=click.Path(exists=True),
    help="If given, also record the true depth at each point so the output "
    "is directly usable as a measurement file.",
)
@click.option("--out", "out_path", required=True, type=click.Path())
@_seed_option
def guide_points(samples_path, budget, dmin, gt_path, out_path, seed):
    """Propose measurement sites at local maxima of the variance map."""
    ss = formats.load_samples(samples_path)
    pts = apps.guided_points(density.variance_map(ss), budget=budget, d_min=dmin)
    if gt_path is not None:
        gt = formats.load_depth(gt_path)
        if gt.shape != (ss.grid.height, ss.grid.width):
            raise ValueError(
                f"ground truth shape {gt.shape} != sample frame "
                f"{(ss.grid.height, ss.grid.width)}"
            )
        rows = [p[0] for p in pts]
        cols = [p[1] for p in pts]
        meas = SparseMeasurements.from_arrays(
            rows, cols, gt.values[rows, cols], gt.shape
        )
        formats.save_measurements(out_path, meas)
    else:
        Path(out_path).write_text(formats.points_to_csv(pts), encoding="utf-8")
    click.echo(f"wrote {len(pts)} points to {out_path}")


# ------------------------------------------------------------------ query


@cli.group()
def query():
    """Distributional queries."""


@query.command("ordinal")
@click.option("--samples", "samples_path", required=True, type=click.Path(exists=True))
@click.option("--a", "a_spec", required=True, type=str, help="First pixel ROW,COL.")
@click.option("--b", "b_spec", required=True, type=str, help="Second pixel ROW,COL.")
@click.option("--tau", default=0.02, show_default=True, type=float)
@click.option("--json", "as_json", is_flag=True, default=False)
@_seed_option
def query_ordinal(samples_path, a_spec, b_spec, tau, as_json, seed):
    """Vote which of two nearby pixels is closer, over all covering samples."""
    ss = formats.load_samples(samples_path)
    a = _parse_point(a_spec, "--a")
    b = _parse_point(b_spec, "--b")
    verdict = apps.ordinal_vote(ss, a, b, tau=tau)
    if as_json:
        click.echo(
            json.dumps(
                {
                    "relation": verdict.relation,
                    "counts": verdict.counts,
                    "pairs": verdict.n_pairs,
                }
            )
        )
    else:
        click.echo(f"relation  {verdict.relation}")
        for name in ("A-closer", "B-closer", "equal"):
            click.echo(f"votes[{name}]  {verdict.counts[name]}")
        click.echo(f"pairs  {verdict.n_pairs}")


# ------------------------------------------------------------------- eval


@cli.group(name="eval")
def eval_group():
    """Accuracy reports."""


@eval_group.command("depth")
@click.option("--pred", "pred_path", required=True, type=click.Path(exists=True))
@click.option("--gt", "gt_path", required=True, type=click.Path(exists=True))
@click.option("--json", "as_json", is_flag=True, default=False)
@_seed_option
def eval_depth(pred_path, gt_path, as_json, seed):
    """Pointwise depth error metrics of a prediction against ground truth."""
    report = error_report(
        [formats.load_depth(pred_path)], [formats.load_depth(gt_path)]
    )
    click.echo(report.to_json() if as_json else report.to_text())


@eval_group.command("wkdr")
@click.option("--pred", "pred_path", required=True, type=click.Path(exists=True))
@click.option("--gt", "gt_path", required=True, type=click.Path(exists=True))
@click.option("--json", "as_json", is_flag=True, default=False)
@_seed_option
def eval_wkdr(pred_path, gt_path, as_json, seed):
    """Ordinal disagreement rates between two verdict files."""
    report = wkdr(
        formats.verdicts_from_csv(Path(pred_path).read_text(encoding="utf-8")),
        formats.verdicts_from_csv(Path(gt_path).read_text(encoding="utf-8")),
    )
    click.echo(report.to_json() if as_json else report.to_text())


# ------------------------------------------------------------------ bench


@cli.group()
def bench():
    """Diagnostic sweeps."""


@bench.command("rank")
@click.option("--samples", "samples_path", required=True, type=click.Path(exists=True))
@click.option("--gt", "gt_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@_seed_option
def bench_rank(samples_path, gt_path, out_path, seed):
    """Accuracy of rank-r composites: rms per rank, r = 0 .. S-1."""
    ss = formats.load_samples(samples_path)
    gt = formats.load_depth(gt_path)
    lines = ["rank,rms"]
    for r in range(ss.n_samples):
        composite = density.rank_composite(ss, gt, r)
        lines.append(f"{r},{error_report([composite], [gt]).rms!r}")
    Path(out_path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    click.echo(f"wrote {out_path}")


# ------------------------------------------------------------------ serve


@cli.command("serve")
@click.option("--port", default=8000, show_default=True, type=int)
@click.option("--host", default="127.0.0.1", show_default=True, type=str)
@click.option(
    "--state-dir",
    "state_dir",
    required=True,
    type=click.Path(),
    help="Directory for session event logs.",
)
def serve(port, host, state_dir):
    """Run the interactive session service over HTTP."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(state_dir), host=host, port=port)


def main():
    try:
        cli(standalone_mode=False)
    except click.exceptions.Exit as exc:
        sys.exit(exc.exit_code)
    except click.ClickException as exc:
        exc.show()
        sys.exit(exc.exit_code)
    except click.Abort:
        click.echo("aborted", err=True)
        sys.exit(1)
    except (ValueError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)


if __name__ == "__main__":
    main()
