"""Command-line interface.

Exit codes: 0 on success (and for a safe track), 1 on a runtime error, 2 on
a usage error and 3 if `inspect` finds the track not safe.
"""

import contextlib
import functools
import logging
import pathlib
import sys

import click
import numpy as np

from trackscan import plots
from trackscan.components import (
    NUM_CASES,
    NUM_TRIALS,
    ComponentKind,
    DefectSet,
    FootageId,
    ManifestError,
    PairingPolicy,
    build_run_manifest,
    parse_number_range,
)
from trackscan.config import ConfigError, resolve_config, save_run_config
from trackscan.datasets import (
    GROUND_TRUTH_FILE,
    DirectoryIterator,
    build_cnn_dataset,
    generate_experiment,
)
from trackscan.images import read_image, to_grayscale, write_image
from trackscan.inspection import (
    Verdict,
    format_text_report,
    inspect,
    overlay_has_marks,
    render_overlay,
)
from trackscan.metrics import (
    ConfusionMatrix,
    UndefinedRateError,
    confusion_from_sets,
    fpr,
    overall_acceptance,
    read_likert_csv,
    roc_sweep,
    score_report,
    tpr,
    write_confusion_csv,
    write_histogram_csv,
    write_likert_csv,
    write_roc_csv,
    write_stats_csv,
)
from trackscan.model_files import load_model, save_model
from trackscan.network import build_default_model, evaluate, predict
from trackscan.report_files import NAME, VERSION, load_ground_truth, save_report
from trackscan.scene import derive_seed, standard_geometry
from trackscan.training import freeze_and_retrain, train

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_RUNTIME_ERROR = 1
EXIT_USAGE_ERROR = 2
EXIT_NOT_SAFE = 3

MODEL_FILE = "model.rcnn"
HISTORY_FILE = "history.csv"


def setup_logging(quiet: bool, verbose: bool) -> None:
    if verbose:
        level = logging.DEBUG
    elif quiet:
        level = logging.WARNING
    else:
        level = logging.INFO
    logging.basicConfig(
        level=level, format="%(levelname)s %(name)s: %(message)s", force=True
    )


@contextlib.contextmanager
def handle_errors():
    """Map configuration errors to usage errors and the rest to exit 1."""
    try:
        yield
    except (ConfigError, ManifestError) as exc:
        raise click.UsageError(str(exc)) from exc
    except (OSError, ValueError, ArithmeticError, RuntimeError) as exc:
        logger.error("%s", exc)
        sys.exit(EXIT_RUNTIME_ERROR)


def common_options(func):
    """Add --config, --seed, --out, --quiet and --verbose to a command."""

    @click.option(
        "--config",
        "config_path",
        type=click.Path(exists=True, dir_okay=False, path_type=pathlib.Path),
        help="TOML configuration file.",
    )
    @click.option("--seed", type=click.IntRange(0, 2**63 - 1), help="Seed for all randomness.")
    @click.option(
        "--out",
        type=click.Path(file_okay=False, path_type=pathlib.Path),
        default=pathlib.Path("out"),
        show_default=True,
        help="Output directory.",
    )
    @click.option("--quiet", is_flag=True, help="Only log warnings and errors.")
    @click.option("--verbose", is_flag=True, help="Log debugging information.")
    @functools.wraps(func)
    def wrapper(*args, quiet, verbose, **kwargs):
        setup_logging(quiet, verbose)
        return func(*args, progress=not quiet, **kwargs)

    return wrapper


def parse_selection(text: str, what: str) -> list[int]:
    try:
        numbers = parse_number_range(text)
    except ValueError:
        raise click.BadParameter(f"cannot parse {text!r}", param_hint=what) from None
    if not numbers:
        raise click.BadParameter("empty selection", param_hint=what)
    return numbers


def parse_thresholds(text: str) -> list[int]:
    """Parse '1:60' (inclusive) or a comma-separated list of thresholds."""
    try:
        if ":" in text:
            start, stop = (int(v) for v in text.split(":", 1))
            return list(range(start, stop + 1))
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise click.BadParameter(f"cannot parse {text!r}", param_hint="--thresholds") from None


def without_none(**settings) -> dict:
    return {key: value for key, value in settings.items() if value is not None}


@click.group()
@click.version_option(VERSION, prog_name=NAME)
def cli():
    """Inspect simulated railway tracks for missing components."""


@cli.command()
@click.option("--experiment", is_flag=True, help="Render the inspection experiment frames.")
@click.option("--dataset", is_flag=True, help="Render the classifier dataset.")
@click.option("--kinds", help="Comma-separated defect kinds for the dataset, e.g. block,screw.")
@click.option("--cases", default="1-15", show_default=True, help="Test cases to render.")
@click.option("--trials", default="1-5", show_default=True, help="Trials to render.")
@click.option("--image-size", type=click.IntRange(min=8), help="Dataset image size in pixels.")
@common_options
def generate(experiment, dataset, kinds, cases, trials, image_size, config_path, seed, out, progress):
    """Generate experiment frames and/or a classifier dataset."""
    if not (experiment or dataset):
        raise click.UsageError("Specify --experiment, --dataset or both.")
    cases = parse_selection(cases, "--cases")
    trials = parse_selection(trials, "--trials")
    dataset_settings = without_none(image_size=image_size)
    if kinds is not None:
        try:
            dataset_settings["defect_kinds"] = [
                ComponentKind.from_name(k.strip()).value for k in kinds.split(",") if k.strip()
            ]
        except ValueError as exc:
            raise click.BadParameter(str(exc), param_hint="--kinds") from None

    with handle_errors():
        config = resolve_config(config_path, {"dataset": dataset_settings}, seed)
        save_run_config(config, out)
        if experiment:
            target = out / "experiment" if dataset else out
            if max(cases) > NUM_CASES or max(trials) > NUM_TRIALS or min(cases + trials) < 1:
                raise ManifestError(
                    f"Cases must be in 1..{NUM_CASES} and trials in 1..{NUM_TRIALS}"
                )
            generate_experiment(target, cases, trials, config.scene, progress=progress)
        if dataset:
            target = out / "dataset" if experiment else out
            build_cnn_dataset(target, config.dataset, config.scene, progress=progress)


@cli.command("inspect")
@click.argument("control", type=click.Path(exists=True, dir_okay=False, path_type=pathlib.Path))
@click.argument("variable", type=click.Path(exists=True, dir_okay=False, path_type=pathlib.Path))
@click.option("--threshold", type=click.IntRange(1, 254), help="Pixel difference threshold.")
@common_options
def inspect_command(control, variable, threshold, config_path, seed, out, progress):
    """Inspect a VARIABLE image against a CONTROL image."""
    with handle_errors():
        config = resolve_config(
            config_path, {"pipeline": without_none(diff_threshold=threshold)}, seed
        )
        save_run_config(config, out)
        control_image = read_image(control)
        variable_image = read_image(variable)
        height, width = control_image.shape[:2]
        geometry = standard_geometry(
            config.scene.model_copy(update={"width": width, "height": height})
        )
        report = inspect(
            control_image,
            variable_image,
            geometry,
            config.pipeline,
            control_name=control.name,
            variable_name=variable.name,
        )
        save_report(report, out / "report.json")
        if report.verdict is None:
            logger.error("Inspection failed: %s", report.step_log[-1].detail)
            sys.exit(EXIT_RUNTIME_ERROR)
        lines = format_text_report(report)
        (out / "report.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
        write_image(out / "overlay.png", render_overlay(control_image, variable_image, report))
    for line in lines:
        click.echo(line)
    sys.exit(EXIT_NOT_SAFE if report.verdict is Verdict.NOT_SAFE else EXIT_OK)


def _load_pairs(experiment: pathlib.Path, manifest):
    """Images and expected defects of the manifest pairs found on disk.

    Returns:
        tuple: list of (pair, control image, variable image, expected
            defects) and the list of missing file names.
    """
    ground_truth = load_ground_truth(experiment / GROUND_TRUTH_FILE)
    cache = {}
    missing = []

    def image(footage: FootageId):
        path = experiment / f"{footage.name}.png"
        if path not in cache:
            cache[path] = read_image(path) if path.is_file() else None
            if cache[path] is None:
                logger.error("Missing frame %s", path)
                missing.append(path.name)
        return cache[path]

    loaded = []
    for pair in manifest:
        control_image = image(pair.control)
        variable_image = image(pair.variable)
        if control_image is None or variable_image is None:
            continue
        expected = pair.expected
        labels = ground_truth.ground_truth.get(pair.variable.name)
        if labels is not None:
            expected = DefectSet.from_labels(labels)
        loaded.append((pair, control_image, variable_image, expected))
    return loaded, missing


def _manifest(cases: str, trials: str, pairing: str):
    cases = parse_selection(cases, "--cases")
    trials = parse_selection(trials, "--trials")
    try:
        return build_run_manifest(cases, trials, PairingPolicy(pairing))
    except ManifestError as exc:
        raise click.UsageError(str(exc)) from exc


experiment_option = click.option(
    "--experiment",
    required=True,
    type=click.Path(exists=True, file_okay=False, path_type=pathlib.Path),
    help="Directory written by 'generate --experiment'.",
)
pairing_option = click.option(
    "--pairing",
    type=click.Choice([p.value for p in PairingPolicy]),
    default=PairingPolicy.SAME_TRIAL.value,
    show_default=True,
    help="Which control trial each variable frame is compared to.",
)
cases_option = click.option("--cases", default="1-15", show_default=True, help="Test cases.")
trials_option = click.option("--trials", default="1-5", show_default=True, help="Trials.")


@cli.command("inspect-batch")
@experiment_option
@pairing_option
@cases_option
@trials_option
@common_options
def inspect_batch(experiment, pairing, cases, trials, config_path, seed, out, progress):
    """Inspect all runs of an experiment and score them."""
    manifest = _manifest(cases, trials, pairing)
    with handle_errors():
        config = resolve_config(config_path, None, seed)
        save_run_config(config, out)
        loaded, missing = _load_pairs(experiment, manifest)
        if not loaded:
            raise FileNotFoundError(f"No frames of the selected runs in {experiment}")
        reports_dir = out / "reports"
        overlays_dir = out / "overlays"
        reports_dir.mkdir(parents=True, exist_ok=True)
        overlays_dir.mkdir(parents=True, exist_ok=True)
        height, width = loaded[0][1].shape[:2]
        geometry = standard_geometry(
            config.scene.model_copy(update={"width": width, "height": height})
        )

        confusion_rows = []
        scores = []
        correct = 0
        for pair, control_image, variable_image, expected in loaded:
            name = pair.variable.name
            report = inspect(
                control_image,
                variable_image,
                geometry,
                config.pipeline,
                control_name=pair.control.name,
                variable_name=name,
            )
            save_report(report, reports_dir / f"{name}.json")
            marked = None
            if report.is_complete:
                lines = format_text_report(report, ".png")
                (reports_dir / f"{name}.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
                overlay = render_overlay(control_image, variable_image, report)
                write_image(overlays_dir / f"{name}.png", overlay)
                marked = overlay_has_marks(overlay)
                correct += report.verdict is (
                    Verdict.SAFE if expected.is_safe else Verdict.NOT_SAFE
                )
                reported = report.defects
            else:
                reported = DefectSet()
            confusion_rows.append((name, confusion_from_sets(expected, reported)))
            scores.append(
                score_report(report, expected, pair.variable.case_number, pair.variable.trial, marked)
            )

        write_confusion_csv(confusion_rows, out / "confusion.csv")
        write_likert_csv(scores, out / "likert.csv")
        write_stats_csv(scores, out / "stats.csv")
        write_histogram_csv(scores, out / "histogram.csv")

        total = sum((cm for _, cm in confusion_rows), ConfusionMatrix())
        logger.info("Correct verdicts: %d of %d runs", correct, len(loaded))
        try:
            logger.info("TPR %.4f, FPR %.4f", tpr(total), fpr(total))
        except UndefinedRateError as exc:
            logger.info("Rates undefined: %s", exc)
        if not missing:
            selected_cases = sorted({p.variable.case_number for p in manifest})
            selected_trials = sorted({p.variable.trial for p in manifest})
            acceptance = overall_acceptance(scores, selected_cases, selected_trials)
            logger.info("Overall acceptance: %.3f%%", acceptance)
        else:
            logger.error("%d frames missing: %s", len(missing), ", ".join(missing))
            sys.exit(EXIT_RUNTIME_ERROR)


@cli.command("train")
@click.option(
    "--data",
    required=True,
    type=click.Path(exists=True, file_okay=False, path_type=pathlib.Path),
    help="Dataset directory with train and valid splits.",
)
@click.option("--epochs", type=click.IntRange(min=1), help="Number of epochs.")
@click.option("--batch", type=click.IntRange(min=1), help="Batch size.")
@click.option("--dropout", type=click.FloatRange(0, 1, max_open=True), help="Dropout rate.")
@click.option("--lr", type=click.FloatRange(0, min_open=True), help="Learning rate.")
@click.option("--steps-per-epoch", type=click.IntRange(min=0), help="Batches per epoch.")
@click.option("--validation-steps", type=click.IntRange(min=1), help="Validation batches.")
@click.option("--augment/--no-augment", default=None, help="Augment training images.")
@click.option(
    "--base",
    type=click.Path(exists=True, dir_okay=False, path_type=pathlib.Path),
    help="Trained model to retrain with frozen layers.",
)
@click.option("--freeze", type=click.IntRange(min=0), default=0, help="Layers to freeze with --base.")
@common_options
def train_command(
    data,
    epochs,
    batch,
    dropout,
    lr,
    steps_per_epoch,
    validation_steps,
    augment,
    base,
    freeze,
    config_path,
    seed,
    out,
    progress,
):
    """Train the classifier on a generated dataset."""
    overrides = {
        "train": without_none(
            epochs=epochs,
            batch_size=batch,
            dropout_rate=dropout,
            learning_rate=lr,
            steps_per_epoch=steps_per_epoch,
            validation_steps=validation_steps,
            augment=augment,
        )
    }
    with handle_errors():
        config = resolve_config(config_path, overrides, seed)
        save_run_config(config, out)
        settings = config.train
        train_iterator = DirectoryIterator(
            data / "train",
            settings.batch_size,
            shuffle=settings.shuffle,
            seed=settings.seed,
            augment_config=config.augment if settings.augment else None,
        )
        valid_iterator = DirectoryIterator(
            data / "valid",
            settings.batch_size,
            shuffle=settings.shuffle,
            seed=derive_seed(settings.seed, 1),
        )
        if base is not None:
            model, history = freeze_and_retrain(
                load_model(base), freeze, train_iterator, valid_iterator, settings, progress
            )
        else:
            model = build_default_model(
                input_shape=train_iterator.image_shape,
                dropout_rate=settings.dropout_rate,
                seed=settings.seed,
                precision=settings.precision,
            )
            history = train(model, train_iterator, valid_iterator, settings, progress)
        save_model(model, out / MODEL_FILE)
        history.to_csv(out / HISTORY_FILE)
        plots.plot_history(history, out / "history.png")


@cli.command("predict")
@click.argument("model_path", type=click.Path(exists=True, dir_okay=False, path_type=pathlib.Path))
@click.argument("image_path", type=click.Path(exists=True, dir_okay=False, path_type=pathlib.Path))
@common_options
def predict_command(model_path, image_path, config_path, seed, out, progress):
    """Classify an image as safe or defective."""
    with handle_errors():
        model = load_model(model_path)
        image = read_image(image_path)
        if model.input_shape[2] == 1:
            image = to_grayscale(image)
        label, probabilities = predict(model, image)
    click.echo(f"{label} safe={probabilities[0]:.4f} defective={probabilities[1]:.4f}")


@cli.command("evaluate")
@click.argument("model_path", type=click.Path(exists=True, dir_okay=False, path_type=pathlib.Path))
@click.option(
    "--data",
    required=True,
    type=click.Path(exists=True, file_okay=False, path_type=pathlib.Path),
    help="Split directory with safe and defective images, e.g. data/test.",
)
@click.option("--batch", type=click.IntRange(min=1), default=20, show_default=True)
@common_options
def evaluate_command(model_path, data, batch, config_path, seed, out, progress):
    """Confusion matrix of a trained classifier on a dataset split."""
    with handle_errors():
        config = resolve_config(config_path, None, seed)
        save_run_config(config, out)
        model = load_model(model_path)
        iterator = DirectoryIterator(data, batch, shuffle=False)
        matrix = evaluate(model, iterator)
        write_confusion_csv([(data.name, matrix)], out / "confusion.csv")
        plots.plot_confusion_matrix(matrix, out / "confusion.png")
    click.echo(
        f"tp={matrix.tp} fn={matrix.fn} fp={matrix.fp} tn={matrix.tn} "
        f"accuracy={matrix.accuracy:.4f}"
    )


@cli.command("roc")
@experiment_option
@click.option("--thresholds", default="1:60", show_default=True, help="e.g. 1:60 or 5,10,20.")
@pairing_option
@cases_option
@trials_option
@common_options
def roc_command(experiment, thresholds, pairing, cases, trials, config_path, seed, out, progress):
    """Sweep the difference threshold over an experiment."""
    manifest = _manifest(cases, trials, pairing)
    thresholds = parse_thresholds(thresholds)
    with handle_errors():
        config = resolve_config(config_path, None, seed)
        save_run_config(config, out)
        loaded, missing = _load_pairs(experiment, manifest)
        if missing:
            raise FileNotFoundError(f"{len(missing)} frames missing in {experiment}")
        height, width = loaded[0][1].shape[:2]
        geometry = standard_geometry(
            config.scene.model_copy(update={"width": width, "height": height})
        )
        pairs = [(c, v, expected) for _, c, v, expected in loaded]
        curve = roc_sweep(pairs, geometry, config.pipeline, thresholds, progress=progress)
        write_roc_csv(curve, out / "roc.csv")
        plots.plot_roc(curve, out / "roc.png")


@cli.command("report")
@click.option(
    "--batch",
    "batch_dir",
    required=True,
    type=click.Path(exists=True, file_okay=False, path_type=pathlib.Path),
    help="Output directory of 'inspect-batch'.",
)
@common_options
def report_command(batch_dir, config_path, seed, out, progress):
    """Statistics, histogram and figures of a batch run."""
    with handle_errors():
        config = resolve_config(config_path, None, seed)
        save_run_config(config, out)
        scores = read_likert_csv(batch_dir / "likert.csv")
        write_stats_csv(scores, out / "stats.csv")
        write_histogram_csv(scores, out / "histogram.csv")
        plots.plot_likert_histogram(scores, out / "likert_histogram.png")
        plots.plot_case_stddev(scores, out / "case_stddev.png")
        plots.plot_false_positives(scores, out / "false_positives.png")

        cases = sorted({s.case for s in scores})
        trials = sorted({s.trial for s in scores})
        acceptance = overall_acceptance(scores, cases, trials)
    click.echo(f"Overall acceptance: {acceptance:.3f}%")
    click.echo(f"Mean score: {np.mean([float(s.score) for s in scores]):.4f}")


def main():
    cli()


if __name__ == "__main__":
    main()
