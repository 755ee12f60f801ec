"""Command-line entry points.

Subcommands: detect, evaluate, render, export-state, import-state.
Exit codes: 0 success, 2 config error, 3 data error, 4 compute error.
"""

from __future__ import annotations

import functools
import os
import sys
import tarfile
import tempfile
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import click

from .config import (
    CHANNEL_CHOICES,
    PCA_MAPPING,
    RM_MAPPING,
    PipelineConfig,
    config_from_mapping,
    load_config,
)
from .detector import ScalogramAnomalyDetector, load_state, save_state
from .errors import ComputeError, ConfigError, DataError, ScalodetError
from .evaluation import (
    EvalConfig,
    anomaly_segment,
    best_f1,
    evaluate,
    label_runs,
    mode_series,
    render_report,
    report_to_dict,
    threshold_sweep,
    write_sweep_csv,
)
from .imaging import TEST, render_image_png, render_tile_png
from .series import load_bundle, load_labels
from .storage import read_scores_csv, write_json, write_scores_csv

_EXIT_CODES = (
    (ConfigError, 2),
    (DataError, 3),
    (ScalodetError, 4),
)


def _handle_errors(func):
    """Map library exceptions onto the documented exit codes."""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except ScalodetError as exc:
            click.echo(f"error: {exc}", err=True)
            for kind, code in _EXIT_CODES:
                if isinstance(exc, kind):
                    sys.exit(code)

    return wrapper


def _resolve_config(config_path, overrides: dict) -> PipelineConfig:
    """File values first, then explicit flags on top of them."""
    values = load_config(config_path).to_dict() if config_path else {}
    values.update({k: v for k, v in overrides.items() if v is not None})
    return config_from_mapping(values)


def _pipeline_options(func):
    options = [
        click.option("--config", "config_path", type=click.Path(), default=None,
                     help="TOML or JSON config file; flags override it."),
        click.option("--mapping", type=click.Choice([PCA_MAPPING, RM_MAPPING]),
                     default=None, help="Aggregation method."),
        click.option("--window", type=int, default=None, help="Tile size n."),
        click.option("--stride", type=int, default=None, help="Tile stride s."),
        click.option("--headroom", type=float, default=None,
                     help="Imaging headroom factor r."),
        click.option("--ratio", type=float, default=None,
                     help="Coreset subsampling ratio."),
        click.option("--neighbors", type=int, default=None,
                     help="Neighbor count b for scoring."),
        click.option("--p", type=int, default=None,
                     help="Random-mapping density parameter."),
        click.option("--seed", type=int, default=None, help="Random seed."),
        click.option("--n-sp", type=int, default=None,
                     help="Score-partition section width."),
        click.option("--channels", type=click.Choice(CHANNEL_CHOICES),
                     default=None, help="Channel mask."),
        click.option("--backbone", type=click.Path(), default=None,
                     help="ONNX backbone model path."),
        click.option("--fallback-extractor", is_flag=True, default=None,
                     help="Force the statistical extractor even if a "
                          "backbone is configured."),
        click.option("--no-reweight", "reweight", is_flag=True, default=None,
                     flag_value=False, help="Disable neighbor reweighting."),
        click.option("--freq-column", is_flag=True, default=None,
                     help="Add the peak frequency row to the score CSV."),
        click.option("--has-header", is_flag=True, default=None,
                     help="Input CSV files carry a header row."),
        click.option("--out", type=click.Path(), default=None,
                     help="Output directory."),
        click.option("--workers", type=int, default=None,
                     help="Parallel workers for batch mode."),
    ]
    for option in reversed(options):
        func = option(func)
    return func


@click.group()
@click.version_option(package_name="scalodet", prog_name="scalodet")
def main():
    """Training-free time-series anomaly detection via scalogram imaging."""


def _run_detect(bundle_dir: Path, out: Path, cfg: PipelineConfig,
                reuse_state: Path | None = None) -> Path:
    """One full detection run; returns the scores path."""
    bundle = load_bundle(bundle_dir, has_header=cfg.has_header)
    out.mkdir(parents=True, exist_ok=True)
    echo = dict(cfg.to_dict(), out=str(out))
    write_json(echo, out / "config.json")
    if reuse_state is not None:
        detector = load_state(reuse_state)
    else:
        detector = ScalogramAnomalyDetector(**cfg.detector_params())
        detector.fit(bundle.train)
    save_state(detector, out / "state")
    result = detector.detect(bundle.test)
    rows = result.frequency_rows if cfg.freq_column else None
    scores_path = out / "scores.csv"
    write_scores_csv(scores_path, result.series.scores, rows)
    return scores_path


def _batch_worker(args):
    """Run one subdataset in a worker process.

    Returns (name, exit code or None, message); exceptions must not
    escape, the parent turns the tuple back into a process exit code.
    """
    sub_dir, out_dir, values = args
    try:
        cfg = config_from_mapping(values)
        path = _run_detect(Path(sub_dir), Path(out_dir), cfg)
    except ScalodetError as exc:
        for kind, code in _EXIT_CODES:
            if isinstance(exc, kind):
                return Path(sub_dir).name, code, str(exc)
    return Path(sub_dir).name, None, str(path)


def _has_train_file(directory: Path) -> bool:
    return any((directory / f"train{ext}").is_file() for ext in (".csv", ".npy"))


def _run_batch(bundle_dir: Path, out_root: Path, cfg: PipelineConfig) -> None:
    subdirs = sorted(d for d in bundle_dir.iterdir()
                     if d.is_dir() and _has_train_file(d))
    if not subdirs:
        raise DataError(f"no subdatasets with train files under {bundle_dir}")
    jobs = [(str(d), str(out_root / d.name), cfg.to_dict()) for d in subdirs]
    if cfg.workers is not None and cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_batch_worker, jobs))
    else:
        results = [_batch_worker(job) for job in jobs]
    failure = None
    for name, code, message in results:
        if code is None:
            click.echo(f"{name}: {message}")
        else:
            click.echo(f"{name}: error: {message}", err=True)
            failure = failure or code
    if failure is not None:
        sys.exit(failure)


@main.command()
@click.argument("bundle_dir", type=click.Path(exists=True, file_okay=False))
@_pipeline_options
@click.option("--batch", is_flag=True, default=False,
              help="Treat BUNDLE_DIR as a directory of subdataset bundles.")
@click.option("--reuse-state", type=click.Path(), default=None,
              help="Load a saved detector state instead of fitting.")
@_handle_errors
def detect(bundle_dir, config_path, batch, reuse_state, **overrides):
    """Fit on train, score test, write scores.csv plus detector state."""
    cfg = _resolve_config(config_path, overrides)
    bundle_dir = Path(bundle_dir)
    out = Path(cfg.out) if cfg.out else bundle_dir / "scalodet_out"
    if batch:
        if reuse_state is not None:
            raise ConfigError("--reuse-state cannot be combined with --batch")
        _run_batch(bundle_dir, out, cfg)
        return
    reuse = _state_directory(Path(reuse_state)) if reuse_state else None
    path = _run_detect(bundle_dir, out, cfg, reuse)
    click.echo(str(path))


@main.command("evaluate")
@click.argument("scores_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("labels_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--n-sp", type=int, default=100, show_default=True,
              help="Score-partition section width.")
@click.option("--adjustments", default=",".join(EvalConfig().adjustments),
              show_default=True, help="Comma-separated adjustment modes.")
@click.option("--ucr", is_flag=True, default=False,
              help="Judge whether the peak score hits the labeled segment.")
@click.option("--ucr-tolerance", type=int, default=100, show_default=True,
              help="Slack around the segment, in samples.")
@click.option("--has-header", is_flag=True, default=False,
              help="The labels CSV carries a header row.")
@click.option("--out", type=click.Path(), default=None,
              help="Output directory (default: <scores dir>/eval).")
@_handle_errors
def evaluate_cmd(scores_path, labels_path, n_sp, adjustments, ucr,
                 ucr_tolerance, has_header, out):
    """Score a scores CSV against labels; write report and sweeps."""
    modes = tuple(m.strip() for m in adjustments.split(",") if m.strip())
    config = EvalConfig(n_sp=n_sp, adjustments=modes, ucr_tolerance=ucr_tolerance)
    scores_path = Path(scores_path)
    scores, _ = read_scores_csv(scores_path)
    labels = load_labels(labels_path, has_header=has_header).labels
    segment = anomaly_segment(labels) if ucr else None
    report = evaluate(scores, labels, config, segment)
    out = Path(out) if out else scores_path.parent / "eval"
    out.mkdir(parents=True, exist_ok=True)
    write_json(report_to_dict(report), out / "report.json")
    text = render_report(report)
    (out / "report.txt").write_text(text)
    for mode in modes:
        mode_scores, mode_labels = mode_series(scores, labels, mode, n_sp)
        sweep = threshold_sweep(mode_scores, mode_labels)
        write_sweep_csv(out / f"sweep_{mode}.csv", sweep)
    click.echo(text, nl=False)


def _render_score_plot(scores, labels, path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(10, 3.2))
    for start, end in label_runs(labels):
        ax.axvspan(start, end, color="tab:red", alpha=0.2, linewidth=0)
    ax.plot(scores, color="tab:blue", linewidth=0.9, label="anomaly score")
    if labels.any():
        threshold = best_f1(scores, labels)
        ax.axhline(threshold.delta, color="tab:green", linestyle="--",
                   linewidth=0.9, label=f"best-F1 threshold {threshold.delta:.4g}")
    ax.set_xlabel("t")
    ax.set_ylabel("score")
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


@main.command()
@click.argument("run_dir", type=click.Path(exists=True, file_okay=False))
@click.argument("dataset_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--has-header", is_flag=True, default=False,
              help="Input CSV files carry a header row.")
@click.option("--out", type=click.Path(), default=None,
              help="Output directory (default: RUN_DIR/render).")
@_handle_errors
def render(run_dir, dataset_dir, has_header, out):
    """Write tile PNGs, the full test image, and the score plot."""
    run_dir = Path(run_dir)
    state_dir = run_dir / "state"
    if not (state_dir / "state.json").is_file():
        raise DataError(f"no detector state found in {run_dir}")
    detector = load_state(state_dir)
    bundle = load_bundle(dataset_dir, has_header=has_header)
    out = Path(out) if out else run_dir / "render"
    out.mkdir(parents=True, exist_ok=True)
    image, tiles = detector.render_tiles(bundle.test, TEST)
    for tile in tiles:
        render_tile_png(tile, out)
    render_image_png(image, out / "test_image.png")
    scores_path = run_dir / "scores.csv"
    if scores_path.is_file():
        scores, _ = read_scores_csv(scores_path)
    else:
        scores = detector.detect(bundle.test).series.scores
    _render_score_plot(scores, bundle.labels.labels, out / "scores.png")
    click.echo(f"{len(tiles)} tiles, image and score plot in {out}")


def _state_directory(path: Path) -> Path:
    if (path / "state.json").is_file():
        return path
    nested = path / "state"
    if (nested / "state.json").is_file():
        return nested
    raise DataError(f"no detector state found in {path}")


@main.command("export-state")
@click.argument("run_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--out", type=click.Path(), default=None,
              help="Archive path (default: <state dir parent>/state.tar.gz).")
@_handle_errors
def export_state(run_dir, out):
    """Pack a saved detector state into a tar.gz archive."""
    state_dir = _state_directory(Path(run_dir))
    out = Path(out) if out else state_dir.parent / "state.tar.gz"
    out.parent.mkdir(parents=True, exist_ok=True)
    fd, temp_name = tempfile.mkstemp(dir=out.parent, suffix=".tmp")
    os.close(fd)
    try:
        with tarfile.open(temp_name, "w:gz") as archive:
            for item in sorted(state_dir.iterdir()):
                if item.is_file():
                    archive.add(item, arcname=item.name)
        os.replace(temp_name, out)
    except BaseException:
        if os.path.exists(temp_name):
            os.unlink(temp_name)
        raise
    click.echo(str(out))


@main.command("import-state")
@click.argument("archive", type=click.Path(exists=True, dir_okay=False))
@click.argument("dest", type=click.Path(file_okay=False))
@_handle_errors
def import_state(archive, dest):
    """Unpack a state archive and verify that it loads."""
    dest = Path(dest)
    dest.mkdir(parents=True, exist_ok=True)
    try:
        with tarfile.open(archive, "r:gz") as handle:
            for member in handle.getmembers():
                name = member.name
                if (not member.isfile() or Path(name).is_absolute()
                        or "/" in name or "\\" in name or name in (".", "..")):
                    raise DataError(f"unsafe archive member {name!r}")
                source = handle.extractfile(member)
                (dest / name).write_bytes(source.read())
    except tarfile.ReadError as exc:
        raise DataError(f"not a valid state archive: {exc}") from exc
    load_state(dest)
    click.echo(str(dest))


if __name__ == "__main__":
    main()
