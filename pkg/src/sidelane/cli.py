"""Command-line entry points: select, augment, label, eval, review.

Exit codes: 0 on success, 2 on configuration/validation errors, 1 on I/O and
runtime failures.
"""

from __future__ import annotations

import logging
import sys
from pathlib import Path

import click
from pydantic import ValidationError

from .config import PipelineConfig, load_config
from .errors import (
    BackendError,
    ConfigError,
    ConflictError,
    LockError,
    ParseError,
)

EXIT_OK = 0
EXIT_IO = 1
EXIT_CONFIG = 2


def _setup_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )


def _load(ctx: click.Context) -> PipelineConfig:
    path = ctx.obj.get("config")
    if not path:
        raise ConfigError("no config file given; pass --config <path>")
    cfg = load_config(path)
    if ctx.obj.get("overwrite"):
        cfg = cfg.model_copy(update={"overwrite": True})
    return cfg


def _run(ctx: click.Context, body) -> None:
    try:
        body()
    except (ConfigError, ValidationError, ValueError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    except (OSError, ParseError, ConflictError, BackendError, LockError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_IO)


@click.group()
@click.option("--config", "config_path", type=click.Path(), help="Pipeline config JSON.")
@click.option("--jobs", type=int, default=None, help="Worker processes for batch stages.")
@click.option("--overwrite", is_flag=True, help="Allow replacing existing outputs.")
@click.option("--verbose", is_flag=True, help="Debug logging.")
@click.pass_context
def main(ctx, config_path, jobs, overwrite, verbose):
    """Side-camera lane dataset toolkit."""
    _setup_logging(verbose)
    ctx.ensure_object(dict)
    ctx.obj.update(config=config_path, jobs=jobs, overwrite=overwrite)


@main.command()
@click.option("--list-out", type=click.Path(), default=None, help="Split list output path.")
@click.option("--report-out", type=click.Path(), default=None, help="JSON report output path.")
@click.pass_context
def select(ctx, list_out, report_out):
    """Filter source frames by daylight and ROI lane visibility."""

    def body():
        from .pipeline import run_select

        cfg = _load(ctx)
        index, report = run_select(cfg, list_out, report_out)
        click.echo(
            f"kept {report['kept']} frames "
            f"(dark {report['dark']}, out_of_roi {report['out_of_roi']}, "
            f"unlabeled {report['unlabeled']})"
        )

    _run(ctx, body)


@main.command()
@click.option("--list", "list_path", type=click.Path(), default=None,
              help="Split list restricting the frames to augment.")
@click.option("--resume", is_flag=True, help="Skip frames finished by a previous run.")
@click.pass_context
def augment(ctx, list_path, resume):
    """Re-project source frames to the side-camera viewpoint."""

    def body():
        from .culane import parse_list_file
        from .pipeline import run_augment

        cfg = _load(ctx)
        index = None
        if list_path:
            index = parse_list_file(Path(list_path).read_text(), cfg.source_root)
        manifest = run_augment(cfg, index=index, jobs=ctx.obj.get("jobs"), resume=resume)
        counts = manifest.counts()
        click.echo(f"augmented {counts['ok']}/{counts['total']} frames ({counts['failed']} failed)")
        if counts["failed"]:
            sys.exit(EXIT_IO)

    _run(ctx, body)


@main.command()
@click.pass_context
def label(ctx):
    """Run the semi-automatic labeler over the target-frame tree."""

    def body():
        from .pipeline import run_label

        cfg = _load(ctx)
        manifest = run_label(cfg, jobs=ctx.obj.get("jobs"))
        counts = manifest.counts()
        click.echo(f"labeled {counts['ok']}/{counts['total']} frames ({counts['failed']} failed)")
        if counts["failed"]:
            sys.exit(EXIT_IO)

    _run(ctx, body)


@main.command("eval")
@click.option("--pred-root", type=click.Path(), required=True, help="Prediction tree root.")
@click.option("--gt-root", type=click.Path(), default=None,
              help="Ground-truth tree root (default: label_root).")
@click.pass_context
def eval_cmd(ctx, pred_root, gt_root):
    """Score predictions with the CULane IoU protocol."""

    def body():
        from .pipeline import run_eval

        cfg = _load(ctx)
        gt = gt_root or cfg.label_root
        if not gt:
            raise ConfigError("no ground-truth root: pass --gt-root or set label_root")
        report = run_eval(cfg, pred_root, gt)
        click.echo(
            f"tp {report.tp}  fp {report.fp}  fn {report.fn}  "
            f"precision {report.precision:.5f}  recall {report.recall:.5f}  f1 {report.f1:.5f}"
        )

    _run(ctx, body)


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8777, show_default=True, type=int)
@click.pass_context
def review(ctx, host, port):
    """Serve the label review API (and UI, if built) for the labeled tree."""

    def body():
        from .service import serve

        cfg = _load(ctx)
        if not cfg.label_root:
            raise ConfigError("config has no label_root to review")
        serve(cfg.label_root, cfg, host, port)

    _run(ctx, body)


if __name__ == "__main__":
    main()
