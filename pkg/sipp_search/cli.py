"""`sipp-search` command line.

Subcommands: augment, build, tune-lsh, search, evaluate, gen-synth and repro. Every
artifact gets a `<artifact>.manifest.json` next to it. Exit codes: 0 success, 1 usage
error, 2 data or format error, 3 acceptance or tuning failure.
"""

import csv
import json
import os
import sys
from collections.abc import Sequence
from dataclasses import replace
from pathlib import Path
from typing import Any

import fire
import numpy as np
from fire.core import FireExit

from mcp.server.fastmcp.utilities.logging import configure_logging, get_logger

from sipp_search.calibration import calibrate_outlier_sigma
from sipp_search.config_loaders import load_config
from sipp_search.errors import AcceptanceError, ConfigError, DataFormatError, SippError, UsageError
from sipp_search.evaluation import (
    DEFAULT_PRECISIONS,
    coverage_at_precision,
    label_predictions,
    precision_coverage_curve,
    read_predictions,
    read_truth,
    split_report,
    write_curve,
    write_predictions,
)
from sipp_search.gallery.builder import build_gallery
from sipp_search.gallery.feature_files import load_features
from sipp_search.gallery.gallery_files import load_gallery, read_gallery_file, save_gallery
from sipp_search.image_io import augmented_file_name, read_image, write_image
from sipp_search.lsh.index import build_lsh
from sipp_search.lsh.params import LshParams
from sipp_search.lsh.tuning import DEFAULT_TARGET_RECALL, MIN_VALIDATION_QUERIES, tune_lsh
from sipp_search.manifest import make_manifest, write_manifest
from sipp_search.search.registry import (
    init as init_search_registry,
    registered_strategy_names,
    resolve_search_strategy,
    run_strategy,
)
from sipp_search.search.strategies import DEFAULT_THRESHOLD_T
from sipp_search.svd_augment import DEFAULT_FRACTIONS, augment_combinations, augment_image
from sipp_search.synth import QueryPersons, SynthConfig, generate

logger = get_logger(__name__)

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")
REPRO_PRECISIONS = (0.99, 0.97, 0.95)
REPRO_TUNE_QUERIES = 500
# repro runs the contest protocol: novel persons are queried against both sets
REPRO_SYNTH_DEFAULTS: dict[str, Any] = {
    "query_persons": QueryPersons.NOVEL.value,
    "label_noise": 0.05,
}
REPRO_KEYS = ("lsh", "threshold_t", "precisions", "target_recall")
ORDERED_STRATEGIES = ("base0", "svd-brute", "mean", "mean-brute")
LSH_TOLERANCE = 0.95
BASE0_COVERAGE_RANGE = (0.10, 0.40)

_argv: list[str] = []


def _threads(threads: int | None) -> int:
    if threads is None:
        threads = os.environ.get("SIPP_THREADS") or os.cpu_count() or 1
    try:
        threads = int(threads)
    except (TypeError, ValueError):
        raise UsageError(f"thread count must be an integer, got {threads!r}")
    if threads < 1:
        raise UsageError(f"thread count must be >= 1, got {threads}")
    return threads


def _floats(value: Any, name: str) -> tuple[float, ...]:
    if isinstance(value, str):
        value = [part for part in value.split(",") if part.strip()]
    elif isinstance(value, (int, float)):
        value = [value]
    try:
        floats = tuple(float(v) for v in value)
    except (TypeError, ValueError):
        raise UsageError(f"{name} must be a comma separated list of numbers, got {value!r}")
    if not floats:
        raise UsageError(f"{name} must not be empty")
    return floats


def _paths(value: Any) -> list[Path]:
    if isinstance(value, (list, tuple)):
        return [Path(str(v)) for v in value]
    return [Path(part) for part in str(value).split(",") if part]


def _column(precision: float) -> str:
    return f"P{round(precision * 100, 4):g}"


def _manifest(command: str, artifact: Path, params: dict, inputs=(), seeds=None) -> None:
    write_manifest(artifact, make_manifest(command, _argv, params, seeds=seeds, inputs=inputs))


def _lsh_params(
    lsh_params: str | None,
    tables: int | None,
    hashes: int | None,
    width: float | None,
    probes: int,
    seed: int,
) -> LshParams | None:
    if lsh_params is not None:
        data = load_config(lsh_params)
        return LshParams.from_dict(data.get("lsh", data))
    if width is None:
        return None
    if tables is None or hashes is None:
        raise UsageError("--tables and --hashes are required together with --width")
    return LshParams(tables, hashes, float(width), probes, seed)


def augment(
    image: str,
    out_dir: str,
    fractions: Any = DEFAULT_FRACTIONS,
    ext: str | None = None,
):
    """Write |fractions|^3 SVD energy-truncated variants of an RGB image.

    Args:
        image: input PNG or PPM image; grayscale input is replicated to three channels.
        out_dir: directory for `<stem>_iII_jJJ_kKK.<ext>` outputs.
        fractions: comma separated energy fractions in (0, 1].
        ext: output extension, defaults to the input's.
    """
    fractions = _floats(fractions, "fractions")
    source = Path(str(image))
    out = Path(str(out_dir))
    out.mkdir(parents=True, exist_ok=True)
    ext = (ext or source.suffix.lstrip(".") or "png").lstrip(".")
    variants = augment_image(read_image(source), fractions)
    for (i, j, k), variant in zip(augment_combinations(fractions), variants):
        write_image(variant, out / augmented_file_name(source.stem, i, j, k, ext))
    _manifest(
        "augment",
        out / source.stem,
        {"fractions": fractions, "ext": ext, "outputs": len(variants)},
        inputs=[source],
    )
    logger.info(f"wrote {len(variants)} augmented images to {out}")


def build(
    base: str,
    novel: Any,
    out: str,
    lsh: bool = False,
    lsh_params: str | None = None,
    tables: int | None = None,
    hashes: int | None = None,
    width: float | None = None,
    probes: int = 1,
    lsh_seed: int = 0,
    tune_queries: str | None = None,
    target_recall: float = DEFAULT_TARGET_RECALL,
    threads: int | None = None,
):
    """Build a gallery file from base and novel feature files.

    Args:
        base: base-person feature file.
        novel: novel feature file(s), comma separated (originals and augmented vectors).
        out: gallery file to write.
        lsh: also build and store an LSH index.
        lsh_params: JSON/YAML file with LSH parameters, as written by tune-lsh.
        tables: LSH table count, with --hashes and --width.
        hashes: hash functions per table.
        width: bucket width.
        probes: buckets probed per table.
        lsh_seed: LSH seed.
        tune_queries: feature file of validation queries; tunes the index when no
            parameters are given.
        target_recall: recall the tuned index must reach.
        threads: worker threads, defaults to SIPP_THREADS or the CPU count.
    """
    threads = _threads(threads)
    base_path = Path(str(base))
    novel_paths = _paths(novel)
    base_entries = load_features(base_path)
    dim = base_entries[0].vector.shape[0] if base_entries else None
    novel_entries = [e for path in novel_paths for e in load_features(path, dim=dim)]
    gallery = build_gallery(base_entries, novel_entries)
    inputs = [base_path, *novel_paths]

    index = None
    params = None
    if lsh:
        params = _lsh_params(lsh_params, tables, hashes, width, probes, lsh_seed)
        if params is None:
            if tune_queries is None:
                raise UsageError(
                    "--lsh needs --lsh-params, --tables/--hashes/--width or --tune-queries"
                )
            validation = load_features(str(tune_queries), dim=gallery.dim)
            inputs.append(Path(str(tune_queries)))
            params = tune_lsh(
                gallery,
                np.stack([e.vector for e in validation]),
                target_recall=target_recall,
                seed=lsh_seed,
                threads=threads,
            )
        index = build_lsh(gallery, params, threads=threads)

    out_path = Path(str(out))
    save_gallery(gallery, out_path, index=index)
    _manifest(
        "build",
        out_path,
        {"lsh": params.to_dict() if params else None, "target_recall": target_recall},
        inputs=inputs,
        seeds={"lsh": params.seed} if params else None,
    )
    logger.info(f"wrote gallery {out_path} ({len(gallery)} entries, {len(gallery.means)} persons)")


def tune_lsh_command(
    gallery: str,
    queries: str,
    out: str,
    target_recall: float = DEFAULT_TARGET_RECALL,
    seed: int = 0,
    threads: int | None = None,
):
    """Pick the cheapest LSH parameters reaching the target top-1 recall.

    Args:
        gallery: gallery file.
        queries: validation query feature file, at least 100 vectors.
        out: JSON file for the selected parameters, readable by build --lsh-params.
        target_recall: required top-1 recall against exact search.
        seed: LSH seed.
        threads: worker threads.
    """
    threads = _threads(threads)
    loaded = load_gallery(str(gallery))
    validation = load_features(str(queries), dim=loaded.dim)
    if not validation:
        raise DataFormatError(f"{queries}: no validation queries")
    params = tune_lsh(
        loaded,
        np.stack([e.vector for e in validation]),
        target_recall=target_recall,
        seed=seed,
        threads=threads,
    )
    out_path = Path(str(out))
    out_path.write_text(json.dumps({"lsh": params.to_dict()}, indent=2) + "\n")
    _manifest(
        "tune-lsh",
        out_path,
        {"target_recall": target_recall, "lsh": params.to_dict()},
        inputs=[Path(str(gallery)), Path(str(queries))],
        seeds={"lsh": seed},
    )
    logger.info(f"wrote LSH parameters to {out_path}")


def search(
    gallery: str,
    queries: str,
    out: str,
    strategy: str = "mean-brute",
    threshold_t: float = DEFAULT_THRESHOLD_T,
    threads: int | None = None,
):
    """Answer every query with one person id and a confidence score.

    Args:
        gallery: gallery file, with an LSH index for mean-lsh.
        queries: query feature file; the image id is the query id.
        out: predictions CSV (query_image_id,person_id,score).
        strategy: base0, svd-brute, mean, mean-brute or mean-lsh.
        threshold_t: fusion margin T.
        threads: worker threads.
    """
    threads = _threads(threads)
    search_strategy = resolve_search_strategy(str(strategy))
    loaded, index = read_gallery_file(str(gallery))
    if search_strategy.needs_index and index is None:
        raise UsageError(f"strategy {search_strategy.name} needs a gallery built with --lsh")
    entries = load_features(str(queries), dim=loaded.dim)
    if not entries:
        raise DataFormatError(f"{queries}: no queries")
    query_ids = [e.image_id for e in entries]
    if len(set(query_ids)) != len(query_ids):
        raise DataFormatError(f"{queries}: query image ids are not unique")
    results = run_strategy(
        loaded,
        np.stack([e.vector for e in entries]),
        search_strategy.name,
        threshold_t=threshold_t,
        index=index,
        threads=threads,
    )
    out_path = Path(str(out))
    write_predictions(out_path, ((q, r.person_id, r.score) for q, r in zip(query_ids, results)))
    _manifest(
        "search",
        out_path,
        {"strategy": search_strategy.name, "threshold_t": threshold_t},
        inputs=[Path(str(gallery)), Path(str(queries))],
    )
    logger.info(f"wrote {len(results)} predictions to {out_path}")


def evaluate(
    predictions: str,
    truth: str,
    precisions: Any = DEFAULT_PRECISIONS,
    curve_out: str | None = None,
    out: str | None = None,
):
    """Coverage at each target precision, for all queries and per subset.

    Args:
        predictions: predictions CSV.
        truth: truth CSV (query_id,person_id,subset).
        precisions: comma separated target precisions in (0, 1].
        curve_out: optional CSV of the full precision/coverage curve.
        out: optional report CSV; the report is printed either way.
    """
    precisions = _floats(precisions, "precisions")
    truth_rows = read_truth(str(truth))
    labeled = label_predictions(read_predictions(str(predictions)), truth_rows)
    if len(labeled) < len(truth_rows):
        logger.warning(
            f"{len(truth_rows) - len(labeled)} of {len(truth_rows)} truth queries have no "
            "prediction and count as unanswered"
        )
    membership = {qid: subset for qid, (_, subset) in truth_rows.items()}
    reports = split_report(labeled, membership, precisions)

    header = ["subset", "queries", "answered", "precision", *(_column(p) for p in precisions)]
    rows = [
        [
            r.subset,
            r.queries,
            r.answered,
            f"{r.precision:.4f}",
            *(f"{r.coverage[p]:.4f}" for p in precisions),
        ]
        for r in reports
    ]
    _print_table(header, rows)
    inputs = [Path(str(predictions)), Path(str(truth))]
    params = {"precisions": precisions}
    if out is not None:
        _write_table(Path(str(out)), header, rows)
        _manifest("evaluate", Path(str(out)), params, inputs=inputs)
    if curve_out is not None:
        write_curve(Path(str(curve_out)), precision_coverage_curve(labeled, len(truth_rows)))
        _manifest("evaluate", Path(str(curve_out)), params, inputs=inputs)


def gen_synth(
    out_dir: str,
    config: str | None = None,
    dim: int | None = None,
    base_persons: int | None = None,
    imgs_per_base: int | None = None,
    novel_persons: int | None = None,
    queries_per_person: int | None = None,
    query_persons: str | None = None,
    label_noise: float | None = None,
    outlier_sigma: float | None = None,
    seed: int | None = None,
):
    """Generate a seeded synthetic base/novel benchmark.

    Args:
        out_dir: directory for base, novel_original, novel_augmented, queries and truth files.
        config: optional JSON/YAML file of SynthConfig fields; flags override it.
        dim: vector dimension.
        base_persons: number of base persons.
        imgs_per_base: images per base person.
        novel_persons: number of novel persons.
        queries_per_person: queries per queried person.
        query_persons: all or novel.
        label_noise: fraction of base images drawn around a foreign center.
        outlier_sigma: spread of those images around the foreign center.
        seed: generator seed.
    """
    data = dict(load_config(config))
    overrides = {
        "dim": dim,
        "n_base_persons": base_persons,
        "imgs_per_base": imgs_per_base,
        "n_novel_persons": novel_persons,
        "queries_per_person": queries_per_person,
        "query_persons": query_persons,
        "label_noise": label_noise,
        "outlier_sigma": outlier_sigma,
        "seed": seed,
    }
    data.update({k: v for k, v in overrides.items() if v is not None})
    synth_config = SynthConfig.from_dict(data)
    artifacts = generate(synth_config, Path(str(out_dir)))
    inputs = [Path(str(config))] if config is not None else []
    for path in artifacts.paths():
        _manifest(
            "gen-synth",
            path,
            synth_config.to_dict(),
            inputs=inputs,
            seeds={"synth": synth_config.seed},
        )


def repro(
    out_dir: str = "repro",
    config: str | None = None,
    seed: int = 42,
    precisions: Any = REPRO_PRECISIONS,
    threshold_t: float | None = None,
    target_recall: float | None = None,
    exhaustive_lsh: bool = False,
    check_ordering: bool = False,
    calibrate: bool = True,
    threads: int | None = None,
):
    """Compare all five strategies end to end on synthetic data.

    Runs gen-synth, build (with a tuned LSH index), every strategy and evaluation, then
    writes table.csv with coverage at each precision per strategy plus curve CSVs.

    Args:
        out_dir: output directory.
        config: optional JSON/YAML file of SynthConfig fields plus lsh, threshold_t,
            precisions and target_recall.
        seed: synthetic data and LSH seed.
        precisions: comma separated precision columns.
        threshold_t: fusion margin T.
        target_recall: LSH tuning target.
        exhaustive_lsh: probe every bucket, making mean-lsh equal mean-brute.
        check_ordering: fail with exit 3 unless coverage at the first precision is
            ordered base0 <= svd-brute <= mean <= mean-brute, mean-lsh keeps 95%
            of mean-brute and base0 lies within [0.10, 0.40].
        calibrate: bisect outlier_sigma so base0 coverage at the first precision is
            near 0.25; skipped when the config sets outlier_sigma or has no label noise.
        threads: worker threads.
    """
    threads = _threads(threads)
    out = Path(str(out_dir))
    out.mkdir(parents=True, exist_ok=True)

    file_config = dict(load_config(config))
    repro_options = {k: file_config.pop(k) for k in REPRO_KEYS if k in file_config}
    synth_config = SynthConfig.from_dict({**REPRO_SYNTH_DEFAULTS, **file_config, "seed": seed})
    if threshold_t is None:
        threshold_t = float(repro_options.get("threshold_t", DEFAULT_THRESHOLD_T))
    if target_recall is None:
        target_recall = float(repro_options.get("target_recall", DEFAULT_TARGET_RECALL))
    precisions = _floats(repro_options.get("precisions", precisions), "precisions")

    calibration = None
    if calibrate and "outlier_sigma" not in file_config and synth_config.label_noise > 0:
        calibration = calibrate_outlier_sigma(synth_config, precisions[0], threads=threads)
        synth_config = replace(synth_config, outlier_sigma=calibration.outlier_sigma)

    artifacts = generate(synth_config, out / "data")
    gallery = build_gallery(
        load_features(artifacts.base),
        load_features(artifacts.novel_original) + load_features(artifacts.novel_augmented),
    )
    query_entries = load_features(artifacts.queries, dim=gallery.dim)
    queries = np.stack([e.vector for e in query_entries])
    query_ids = [e.image_id for e in query_entries]
    truth = read_truth(artifacts.truth)

    if "lsh" in repro_options:
        params = LshParams.from_dict(repro_options["lsh"])
    else:
        rng = np.random.default_rng(seed)
        count = min(len(queries), max(REPRO_TUNE_QUERIES, MIN_VALIDATION_QUERIES))
        sample = queries[np.sort(rng.choice(len(queries), size=count, replace=False))]
        params = tune_lsh(gallery, sample, target_recall=target_recall, seed=seed, threads=threads)
    if exhaustive_lsh:
        params = params.with_exhaustive_probing()
    index = build_lsh(gallery, params, threads=threads)
    gallery_path = out / "gallery.sipg"
    save_gallery(gallery, gallery_path, index=index)

    coverage: dict[str, dict[float, float]] = {}
    for name in registered_strategy_names():
        results = run_strategy(
            gallery, queries, name, threshold_t=threshold_t, index=index, threads=threads
        )
        rows = [(q, r.person_id, r.score) for q, r in zip(query_ids, results)]
        write_predictions(out / f"predictions_{name}.csv", rows)
        labeled = label_predictions(rows, truth)
        write_curve(out / f"curve_{name}.csv", precision_coverage_curve(labeled, len(truth)))
        coverage[name] = {p: coverage_at_precision(labeled, p, len(truth))[0] for p in precisions}
        logger.info(
            f"{name}: " + ", ".join(f"{_column(p)} {c:.4f}" for p, c in coverage[name].items())
        )

    header = ["strategy", *(_column(p) for p in precisions)]
    rows = [[name, *(f"{c:.4f}" for c in cov.values())] for name, cov in coverage.items()]
    table_path = out / "table.csv"
    _write_table(table_path, header, rows)
    _print_table(header, rows)
    _manifest(
        "repro",
        table_path,
        {
            "synth": synth_config.to_dict(),
            "calibration": calibration.to_dict() if calibration is not None else None,
            "lsh": params.to_dict(),
            "threshold_t": threshold_t,
            "target_recall": target_recall,
            "precisions": precisions,
        },
        inputs=[Path(str(config))] if config is not None else [],
        seeds={"synth": synth_config.seed, "lsh": params.seed},
    )

    if check_ordering:
        problems = ordering_violations({name: cov[precisions[0]] for name, cov in coverage.items()})
        if problems:
            raise AcceptanceError(
                f"strategy ordering at {_column(precisions[0])} does not hold: " + "; ".join(problems)
            )


def ordering_violations(coverage: dict[str, float]) -> list[str]:
    """Broken links of base0 <= svd-brute <= mean <= mean-brute, mean-lsh >= 0.95 mean-brute
    and base0 within BASE0_COVERAGE_RANGE."""
    problems = []
    low, high = BASE0_COVERAGE_RANGE
    if not low <= coverage["base0"] <= high:
        problems.append(f"base0 {coverage['base0']:.4f} outside [{low:.2f}, {high:.2f}]")
    for lower, upper in zip(ORDERED_STRATEGIES, ORDERED_STRATEGIES[1:]):
        if coverage[lower] > coverage[upper]:
            problems.append(f"{lower} {coverage[lower]:.4f} > {upper} {coverage[upper]:.4f}")
    if coverage["mean-lsh"] < LSH_TOLERANCE * coverage["mean-brute"]:
        problems.append(
            f"mean-lsh {coverage['mean-lsh']:.4f} < {LSH_TOLERANCE} x mean-brute "
            f"{coverage['mean-brute']:.4f}"
        )
    return problems


def _write_table(path: Path, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        writer.writerows(rows)


def _print_table(header: Sequence[str], rows: Sequence[Sequence[Any]]) -> None:
    cells = [list(map(str, header)), *([str(c) for c in row] for row in rows)]
    widths = [max(len(row[i]) for row in cells) for i in range(len(header))]
    for row in cells:
        print("  ".join(cell.ljust(width) for cell, width in zip(row, widths)).rstrip())


COMMANDS = {
    "augment": augment,
    "build": build,
    "tune-lsh": tune_lsh_command,
    "search": search,
    "evaluate": evaluate,
    "gen-synth": gen_synth,
    "repro": repro,
}


def _pop_log_level(argv: list[str]) -> tuple[list[str], str]:
    level = os.environ.get("SIPP_LOG_LEVEL", "INFO")
    rest = []
    position = 0
    while position < len(argv):
        arg = argv[position]
        if arg in ("--log-level", "--log_level") and position + 1 < len(argv):
            level = argv[position + 1]
            position += 2
            continue
        if arg.startswith(("--log-level=", "--log_level=")):
            level = arg.split("=", 1)[1]
        else:
            rest.append(arg)
        position += 1
    level = level.upper()
    if level not in LOG_LEVELS:
        raise ConfigError(f"log level must be one of {LOG_LEVELS}, got {level!r}")
    return rest, level


def main(argv: list[str] | None = None) -> int:
    global _argv
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        argv, level = _pop_log_level(argv)
    except SippError as e:
        print(f"sipp-search: {e}", file=sys.stderr)
        return e.exit_code
    configure_logging(level)
    init_search_registry()
    _argv = argv

    try:
        fire.Fire(COMMANDS, command=argv, name="sipp-search")
    except FireExit as e:
        # fire reports bad flags with 2 and help with 0
        return 1 if e.code else 0
    except SippError as e:
        logger.error(str(e))
        return e.exit_code
    except Exception as e:
        logger.error(f"unexpected failure: {e}", exc_info=True)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
