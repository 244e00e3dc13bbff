"""Main CLI interface for dmt."""

import argparse
import asyncio
import csv
import logging
import re
import sys
from pathlib import Path

import numpy as np

from . import __version__, logs, process
from .datasets import DATASET_NAMES, Dataset, generate, load_csv, write_csv
from .errors import ConfigError, DataError, DmtError, ExitCode
from .metrics import MetricsReport, evaluate_all
from .network import EncoderNetwork, load_checkpoint
from .numerics import derived_rng, make_rng
from .plot import pca_project, write_scatter
from .presets import PresetManager
from .report import (
    EMBEDDING_NAME, MANIFEST_NAME, METRICS_NAME,
    DataSource, RunManifest,
    format_flat, metrics_lines, read_embedding, read_flat, replay_config,
    write_embedding, write_flat, write_matrix_csv,
)
from .settings import CONFIG_KEYS, LIST_KEYS, ConfigEntry, ConfigManager, LossConfig, TrainConfig, format_value
from .trainer import export_layer_activations, interpolate_latent, train_autoencoder, train_encoder
from .util.terminal import print_error, print_info, print_success, print_table, print_warning

process.setup(source=__name__)

logger: logging.Logger = logging.getLogger(__name__)

SUBSAMPLE_STREAM = 2
SWEEP_KEYS = "q", "q_latent", "nu_end"
PLOT_NAME = "embedding.svg"
SUMMARY_NAME = "summary.csv"
SUMMARY_COLUMNS = "value", "final_loss", "con", "tru", "rre", "dpc", "srm", "acc", "status"

DEFAULT_SIZES = {
    "swissroll": 1500,
    "smileface": 1500,
    "threegauss": 1500,
    "repeatpoints": 300,
}

LIST_FLAGS = frozenset(f"--{key.replace('_', '-')}" for key in LIST_KEYS)
LIST_VALUE = re.compile(r"^-\d+(,-?\d+)*$")
LIST_EXAMPLES = {"dims": "-1,8,2", "layers": "-1,2"}


class ArgumentParser(argparse.ArgumentParser):
    """Argument parser whose usage errors exit with ``ExitCode.USAGE``."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(ExitCode.USAGE, f"{self.prog}: error: {message}\n")

    def parse_known_args(self, args=None, namespace=None):
        args = sys.argv[1:] if args is None else list(args)
        return super().parse_known_args(join_list_values(args), namespace)


def join_list_values(argv: list[str]) -> list[str]:
    """Attach a list value starting with -1 to its flag, which argparse would read as an option."""
    joined: list[str] = []
    for arg in argv:
        if joined and joined[-1] in LIST_FLAGS and LIST_VALUE.match(arg):
            joined[-1] = f"{joined[-1]}={arg}"
        else:
            joined.append(arg)
    return joined


def load_data(path: Path | str, label_col: int | None, max_rows: int | None = None, seed: int = 0) -> Dataset:
    """Read a data CSV, subsampling from a stream derived from the run seed."""
    rng = derived_rng(seed, SUBSAMPLE_STREAM) if max_rows is not None else None
    return load_csv(path, label_col, max_rows, rng)


def check_width(ds: Dataset, net: EncoderNetwork) -> None:
    if ds.width != net.input_width:
        raise DataError(f"data has {ds.width} features but the checkpoint expects {net.input_width}")


def config_sources(args, config_manager: ConfigManager) -> list[dict[str, ConfigEntry]]:
    """Preset, config file and per-key flags, in increasing precedence."""
    sources = []
    if args.preset:
        sources.append(PresetManager(config_manager).load_preset(args.preset).entries)
    if args.config:
        sources.append(config_manager.read(args.config))

    flags = {key: getattr(args, f"set_{key}") for key in CONFIG_KEYS}
    sources.append(config_manager.overrides({k: v for k, v in flags.items() if v is not None}))
    return sources


def execute_run(
    ds: Dataset,
    source: DataSource,
    cfg: TrainConfig,
    out_dir: Path,
    resume: Path | None = None,
) -> RunManifest:
    """Train, evaluate and write every artifact of one run into ``out_dir``."""
    out_dir.mkdir(parents=True, exist_ok=True)

    with logs.run_log(out_dir):
        logger.info("Training %s (%d rows, %d features) into %s", ds.name, ds.size, ds.width, out_dir)
        if cfg.autoencoder:
            _, _, report = train_autoencoder(ds, cfg, run_dir=out_dir, resume=resume)
        else:
            _, report = train_encoder(ds, cfg, run_dir=out_dir, resume=resume)

        metrics = evaluate_all(ds.features, report.embedding, ds.labels, seed=cfg.seed)
        logger.info("Finished %s in %.1fs", ds.name, report.wall_time)

    write_embedding(out_dir / EMBEDDING_NAME, ds.row_ids, report.embedding, ds.labels)
    write_flat(out_dir / METRICS_NAME, metrics_lines(metrics))
    if report.embedding.shape[1] == 2:
        write_scatter(out_dir / PLOT_NAME, report.embedding, ds.labels, title=ds.name)

    manifest = RunManifest(
        version=__version__,
        data=source,
        config=cfg,
        losses=report.losses,
        kernel_evaluations=report.kernel_evaluations,
        reconstruction=report.reconstruction,
        metric_history=report.metrics,
        metrics=metrics,
        wall_time=report.wall_time,
    )
    manifest.write(out_dir / MANIFEST_NAME)
    return manifest


def print_metrics(title: str, report: MetricsReport) -> None:
    rows = [
        (name, f"{value:.4f}" if value is not None else f"skipped: {report.skipped.get(name, 'unavailable')}")
        for name, value in report.values().items()
    ]
    rows.append(("k_used", report.k_used))
    print_table(title, ("metric", "value"), rows)


async def cmd_generate(args) -> int:
    """Generate a toy dataset."""
    size = args.copies if args.copies is not None else args.size
    if size is None:
        size = DEFAULT_SIZES[args.name]

    ds = generate(args.name, size, make_rng(args.seed), noise=args.noise, dim=args.dim)
    output = args.output or Path(f"{args.name}.csv")
    write_csv(ds, output)

    print_success(f"Wrote {ds.size} rows × {ds.width} features of {args.name} to {output}")
    return 0


async def cmd_train(args) -> int:
    """Train an encoder (or autoencoder) and write the run directory."""
    config_manager = ConfigManager()
    sources = []

    data_path, label_col, max_rows = args.data, args.label_col, args.max_rows
    fingerprint = None

    if args.replay:
        values = read_flat(args.replay)
        sources.append(config_manager.overrides(replay_config(values), source=str(args.replay)))
        data_path = data_path or values.get("data.path")
        label_col = _optional_int(values.get("data.label_col"))
        max_rows = _optional_int(values.get("data.max_rows"))
        fingerprint = values.get("data.fingerprint")

    if data_path is None:
        raise ConfigError("a data file is required (or --replay a manifest)")

    sources += config_sources(args, config_manager)
    cfg = config_manager.resolve(*sources)

    ds = load_data(data_path, label_col, max_rows, cfg.seed)
    if fingerprint is not None and ds.fingerprint() != fingerprint:
        raise DataError(f"{data_path} does not match the data recorded in {args.replay}")

    output = args.output or Path("runs") / Path(data_path).stem
    source = DataSource.describe(ds, data_path, label_col, max_rows)
    manifest = await asyncio.to_thread(execute_run, ds, source, cfg, output, args.resume)

    print_success(f"Trained {ds.name} for {cfg.epochs} epochs, final loss {manifest.losses[-1]:.6g}")
    print_info(f"Run written to {output}")
    print_metrics(f"{ds.name} ({cfg.loss.mode})", manifest.metrics)
    return 0


def _optional_int(text: str | None) -> int | None:
    if text is None or text.lower() in ("", "none", "null"):
        return None
    try:
        return int(text)
    except ValueError as e:
        raise DataError(f"expected an integer, got {text!r}") from e


async def cmd_eval(args) -> int:
    """Evaluate an embedding against its input data."""
    ds = load_csv(args.data, args.label_col)
    embedding = read_embedding(args.embedding)

    n = embedding.coords.shape[0]
    if n > ds.size:
        raise DataError(f"{args.embedding} has {n} rows but {args.data} has only {ds.size}")
    if n and (embedding.ids.min() < 0 or embedding.ids.max() >= ds.size):
        raise DataError(f"{args.embedding} has ids outside 0..{ds.size - 1}")

    labels = ds.labels[embedding.ids] if ds.labels is not None else embedding.labels
    report = evaluate_all(ds.features[embedding.ids], embedding.coords, labels, k=args.k, seed=args.seed)

    if args.output:
        write_flat(args.output, metrics_lines(report))
        print_metrics(Path(args.embedding).name, report)
        print_info(f"Metrics written to {args.output}")
    else:
        sys.stdout.write(format_flat(metrics_lines(report)))

    return 0


async def cmd_plot(args) -> int:
    """Render a 2-D embedding as an SVG scatter plot."""
    embedding = read_embedding(args.embedding)
    if embedding.coords.shape[1] != 2:
        raise DataError(f"{args.embedding} has {embedding.coords.shape[1]} coordinates per point; plots need 2")

    output = args.output or Path(args.embedding).with_suffix(".svg")
    write_scatter(output, embedding.coords, embedding.labels, title=args.title or Path(args.embedding).stem)
    print_success(f"Plotted {embedding.coords.shape[0]} points to {output}")
    return 0


async def cmd_layers(args) -> int:
    """Export every encoder layer's activations."""
    ckpt = load_checkpoint(args.checkpoint)
    ds = load_csv(args.data, args.label_col)
    check_width(ds, ckpt.encoder)

    args.output.mkdir(parents=True, exist_ok=True)
    activations = export_layer_activations(ckpt.encoder, ds)

    for layer, A in enumerate(activations):
        write_matrix_csv(args.output / f"layer-{layer}.csv", A, ds.row_ids)
        if args.svg and A.shape[1] >= 2:
            coords = A if A.shape[1] == 2 else pca_project(A)
            write_scatter(args.output / f"layer-{layer}.svg", coords, ds.labels, title=f"layer {layer}")

    print_success(f"Exported {len(activations)} layers to {args.output}")
    return 0


async def cmd_sweep(args) -> int:
    """Train one run per value of a single hyperparameter."""
    if len(set(args.values)) != len(args.values):
        raise ConfigError(f"sweep values for {args.key} must be distinct")
    if args.jobs < 1:
        raise ConfigError("--jobs must be at least 1")

    config_manager = ConfigManager()
    sources = config_sources(args, config_manager)
    configs = [
        config_manager.resolve(*sources, config_manager.overrides({args.key: value}, source="sweep"))
        for value in args.values
    ]

    ds = load_data(args.data, args.label_col, args.max_rows, configs[0].seed)
    source = DataSource.describe(ds, args.data, args.label_col, args.max_rows)
    semaphore = asyncio.Semaphore(args.jobs)

    async def sweep_run(value: float, cfg: TrainConfig) -> RunManifest:
        async with semaphore:
            run_dir = args.output / f"{args.key}-{format_value(value)}"
            return await asyncio.to_thread(execute_run, ds, source, cfg, run_dir)

    results = await asyncio.gather(
        *(sweep_run(value, cfg) for value, cfg in zip(args.values, configs)),
        return_exceptions=True,
    )
    await asyncio.to_thread(logs.flush)

    exit_code = ExitCode.OK
    rows = []
    for value, result in zip(args.values, results):
        if isinstance(result, DmtError):
            print_error(f"{args.key} = {format_value(value)}: {result}")
            exit_code = max(exit_code, result.exit_code)
            rows.append([value, None, None, None, None, None, None, None, f"failed: {result}"])
        elif isinstance(result, BaseException):
            raise result
        else:
            m = result.metrics
            rows.append([value, result.losses[-1], m.con, m.tru, m.rre, m.dpc, m.srm, m.acc, "ok"])

    summary = args.output / SUMMARY_NAME
    try:
        with summary.open("w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow([args.key, *SUMMARY_COLUMNS[1:]])
            for row in rows:
                writer.writerow(["" if cell is None else format_value(cell) for cell in row])
    except OSError as e:
        raise DataError(f"cannot write {summary}: {e}") from e

    print_table(
        f"Sweep over {args.key}",
        [args.key, *SUMMARY_COLUMNS[1:]],
        [[format_value(row[0]), *(f"{c:.4f}" if isinstance(c, float) else c for c in row[1:])] for row in rows],
    )
    print_info(f"Summary written to {summary}")
    return int(exit_code)


async def cmd_preset(args) -> int:
    """Inspect the shipped per-dataset presets."""
    preset_manager = PresetManager()

    match args.preset_action:
        case 'list':
            discovered = preset_manager.discover_presets()
            if not discovered:
                print_warning("No presets found in preset.d directories")
                print_info(f"Search paths: {', '.join(str(p) for p in preset_manager.presetd_paths)}")
                return 0

            rows = []
            for name in discovered:
                preset = preset_manager.load_preset(name)
                raw = {key: entry.raw for key, entry in preset.entries.items()}
                rows.append((name, raw.get("nu_end"), raw.get("q"), preset.description))
            print_table(f"Available presets ({len(rows)})", ("name", "nu_end", "q", "description"), rows)
            return 0

        case 'show':
            preset = preset_manager.load_preset(args.name)
            cfg = preset_manager.config_manager.resolve(preset.entries)
            print_info(f"{preset.name}: {preset.description} ({preset.path})")
            sys.stdout.write(ConfigManager.format(cfg))
            return 0

    return ExitCode.USAGE


async def cmd_interpolate(args) -> int:
    """Decode points spaced evenly between the embeddings of two rows."""
    ckpt = load_checkpoint(args.checkpoint)
    if ckpt.decoder is None:
        raise DataError(f"{args.checkpoint} has no decoder; train with 'autoencoder = true'")

    ds = load_csv(args.data, args.label_col)
    check_width(ds, ckpt.encoder)
    for row in (args.start, args.end):
        if not 0 <= row < ds.size:
            raise DataError(f"row {row} is outside 0..{ds.size - 1}")

    Z = ckpt.encoder(ds.features[[args.start, args.end]])
    X = interpolate_latent(ckpt.decoder, Z[0], Z[1], args.steps)
    output = args.output or Path(f"interpolate-{args.start}-{args.end}.csv")
    write_matrix_csv(output, X, np.arange(args.steps))

    print_success(f"Decoded {args.steps} points from row {args.start} to row {args.end} into {output}")
    return 0


def _field_help(key: str) -> str:
    field = TrainConfig.model_fields.get(key) or LossConfig.model_fields[key]
    text = field.description or key
    if key in LIST_KEYS:
        text += f" (comma separated, e.g. --{key} {LIST_EXAMPLES[key]})"
    return text.replace("%", "%%")


def add_data_args(parser: argparse.ArgumentParser, *, subsample: bool = False) -> None:
    parser.add_argument('--label-col', type=int, default=0, help='Column holding integer labels (default: 0)')
    parser.add_argument('--no-labels', dest='label_col', action='store_const', const=None, help='Data has no label column')
    if subsample:
        parser.add_argument('--max-rows', type=int, help='Randomly subsample this many rows (seeded by the run seed)')


def add_config_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--preset', help='Start from a named preset (see "dmt preset list")')
    parser.add_argument('--config', type=Path, help='Flat key = value config file')

    group = parser.add_argument_group('run configuration', 'Override a single configuration key')
    for key in CONFIG_KEYS:
        group.add_argument(f"--{key.replace('_', '-')}", dest=f"set_{key}", metavar='VALUE', help=_field_help(key))


def create_parser() -> argparse.ArgumentParser:
    """Create the command line parser."""
    parser = ArgumentParser(
        prog='dmt',
        description='dmt - train and evaluate neural manifold embeddings',
        epilog='Use "dmt <command> --help" for more information about a command.'
    )

    parser.add_argument(
        '--version', '-V',
        action='version',
        version=f'%(prog)s {__version__}',
    )

    subparsers = parser.add_subparsers(dest='subcommand', help='Commands')

    generate_parser = subparsers.add_parser('generate', help='Generate a toy dataset as CSV')
    generate_parser.add_argument('name', choices=DATASET_NAMES, help='Dataset name')
    generate_parser.add_argument('--size', type=int, help='Number of points')
    generate_parser.add_argument('--copies', type=int, help='Copies per location (repeatpoints)')
    generate_parser.add_argument('--dim', type=int, help='Ambient dimension (threegauss, repeatpoints; default: 100)')
    generate_parser.add_argument('--noise', type=float, default=0.0, help='Gaussian noise (swissroll)')
    generate_parser.add_argument('--seed', type=int, default=0, help='Random seed (default: 0)')
    generate_parser.add_argument('--output', '-o', type=Path, help='Output CSV (default: <name>.csv)')

    train_parser = subparsers.add_parser('train', help='Train an embedding')
    train_parser.add_argument('data', nargs='?', help='Data CSV (optional with --replay)')
    add_data_args(train_parser, subsample=True)
    train_parser.add_argument('--replay', type=Path, help='Re-run the run recorded in this manifest')
    train_parser.add_argument('--resume', type=Path, help='Resume from a checkpoint of the same run')
    train_parser.add_argument('--output', '-o', type=Path, help='Run directory (default: runs/<data name>)')
    add_config_args(train_parser)

    eval_parser = subparsers.add_parser('eval', help='Evaluate an embedding')
    eval_parser.add_argument('data', help='Input data CSV')
    eval_parser.add_argument('embedding', help='Embedding CSV')
    add_data_args(eval_parser)
    eval_parser.add_argument('-k', type=int, help='Neighborhood size (default: max(1, M/20))')
    eval_parser.add_argument('--seed', type=int, default=0, help='Seed for sampled measures (default: 0)')
    eval_parser.add_argument('--output', '-o', type=Path, help='Report file (default: stdout)')

    plot_parser = subparsers.add_parser('plot', help='Plot a 2-D embedding as SVG')
    plot_parser.add_argument('embedding', help='Embedding CSV')
    plot_parser.add_argument('--title', help='Plot title')
    plot_parser.add_argument('--output', '-o', type=Path, help='Output SVG (default: next to the embedding)')

    layers_parser = subparsers.add_parser('layers', help='Export per-layer activations')
    layers_parser.add_argument('checkpoint', type=Path, help='Checkpoint file')
    layers_parser.add_argument('data', help='Data CSV')
    add_data_args(layers_parser)
    layers_parser.add_argument('--no-svg', dest='svg', action='store_false', help='Skip the per-layer plots')
    layers_parser.add_argument('--output', '-o', type=Path, default=Path('layers'), help='Output directory (default: layers)')

    sweep_parser = subparsers.add_parser('sweep', help='Train one run per hyperparameter value')
    sweep_parser.add_argument('data', help='Data CSV')
    sweep_parser.add_argument('--key', required=True, choices=SWEEP_KEYS, help='Hyperparameter to vary')
    sweep_parser.add_argument('--values', required=True, nargs='+', type=float, help='Values to try')
    sweep_parser.add_argument('--jobs', '-j', type=int, default=1, help='Runs trained concurrently (default: 1)')
    sweep_parser.add_argument('--output', '-o', type=Path, default=Path('sweep'), help='Output directory (default: sweep)')
    add_data_args(sweep_parser, subsample=True)
    add_config_args(sweep_parser)

    preset_parser = subparsers.add_parser('preset', help='Inspect presets')
    preset_subparsers = preset_parser.add_subparsers(dest='preset_action', help='Preset actions', required=True)

    preset_subparsers.add_parser('list', help='List available presets')

    preset_show = preset_subparsers.add_parser('show', help='Show the resolved configuration of a preset')
    preset_show.add_argument('name', help='Preset name')

    interpolate_parser = subparsers.add_parser('interpolate', help='Decode between two embedded rows')
    interpolate_parser.add_argument('checkpoint', type=Path, help='Autoencoder checkpoint file')
    interpolate_parser.add_argument('data', help='Data CSV the checkpoint was trained on')
    add_data_args(interpolate_parser)
    interpolate_parser.add_argument('--from', dest='start', type=int, required=True, help='First row')
    interpolate_parser.add_argument('--to', dest='end', type=int, required=True, help='Last row')
    interpolate_parser.add_argument('--steps', type=int, default=10, help='Number of decoded points (default: 10)')
    interpolate_parser.add_argument('--output', '-o', type=Path, help='Output CSV')

    return parser


async def run(argv: list[str] | None = None) -> int:
    """Main entry point."""
    parser = create_parser()
    args = parser.parse_args(argv)

    if not args.subcommand:
        parser.print_help()
        return ExitCode.USAGE

    commands = {
        'generate': cmd_generate,
        'train': cmd_train,
        'eval': cmd_eval,
        'plot': cmd_plot,
        'layers': cmd_layers,
        'sweep': cmd_sweep,
        'preset': cmd_preset,
        'interpolate': cmd_interpolate,
    }

    try:
        return int(await commands[args.subcommand](args))
    except DmtError as e:
        for line in str(e).splitlines():
            print_error(line)
        return int(e.exit_code)


def main():
    """Run the CLI.
    """
    process.setup()
    sys.exit(asyncio.run(run()))


if __name__ == '__main__':
    main()
