"""Command-line entry point: symdyn {fit,reduce,simulate,analyze,features}."""
import argparse
import os
import sys
from typing import List, Optional, Sequence

import pandas as pd
from pydantic import ValidationError

from config.logging_config import get_logger, setup_logging
from config.settings import PipelineConfig, Settings
from . import __version__
from .distort import distortion_by_cut
from .exceptions import (
    DataFormatError,
    DegeneratePartition,
    InvalidSeries,
    LagTooLarge,
    SchemaMismatch,
    SequenceTooShort,
    ZeroProbability,
    ZeroVariance,
)
from .ingest import load_series
from .metrics import feature_frame
from .models import database
from .models.documents import DistortionDocument, ModelDocument, ReductionDocument
from .reduce import cut, hierarchical_cluster, pairwise_kl_distance, reduce_model
from .run_ledger import record_run
from .services import pipeline
from .services.persist import (
    dendrogram_to_document,
    document_to_model,
    document_to_partition,
    document_to_reduced,
    load_document,
    make_provenance,
    model_to_document,
    reduced_to_document,
    write_csv,
    write_document,
)
from .utils.helpers import sha256_file

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_OTHER = 1
EXIT_IO = 2
EXIT_DEGENERATE = 3
EXIT_SCHEMA = 4

DEGENERATE_ERRORS = (ZeroVariance, DegeneratePartition, SequenceTooShort, InvalidSeries, ZeroProbability, LagTooLarge)

# CLI flag -> PipelineConfig field
CONFIG_FLAGS = {
    'alphabet': 'alphabet_size',
    'epsilon': 'epsilon',
    'dmax': 'd_max',
    'depth_floor': 'depth_floor',
    'prior': 'prior_weight',
    'weighting': 'weighting',
    'criterion': 'criterion',
    'seed': 'seed',
    'column': 'column',
    'skip_header': 'skip_header',
    'input_format': 'input_format',
    'max_lag': 'max_lag',
    'n_min': 'n_min',
    'n_max': 'n_max',
    'bound_threshold': 'bound_threshold',
    'length': 'simulate_length',
    'trials': 'trials',
}


class ConfigError(Exception):
    code = 'InvalidConfig'


def exit_code_for(error: BaseException) -> int:
    if isinstance(error, (SchemaMismatch, ValidationError)):
        return EXIT_SCHEMA
    if isinstance(error, DEGENERATE_ERRORS):
        return EXIT_DEGENERATE
    if isinstance(error, (OSError, DataFormatError)):
        return EXIT_IO
    return EXIT_OTHER


def error_code_for(error: BaseException) -> str:
    return getattr(error, 'code', None) or type(error).__name__


# --- Argument parsing --- #

def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group('analysis parameters (override --config)')
    group.add_argument('--config', type=str, default=None, help='YAML file with PipelineConfig values')
    group.add_argument('--alphabet', type=int, default=None, help='Alphabet size |A| (default 3)')
    group.add_argument('--epsilon', type=float, default=None, help='Spectral tolerance for depth (default 0.05)')
    group.add_argument('--dmax', type=int, default=None, help='Depth cap D_max (default 8)')
    group.add_argument('--depth-floor', type=int, default=None, help='Smallest depth considered (default 1)')
    group.add_argument('--prior', type=float, default=None, help='Uniform prior weight for emission counts (default 1)')
    group.add_argument('--weighting', choices=['stationary', 'empirical'], default=None, help='Emission aggregation weights')
    group.add_argument('--criterion', choices=['aic', 'bic', 'bound'], default=None, help='Model selection criterion (default bic)')
    group.add_argument('--seed', type=int, default=None, help='Random seed for simulation')
    group.add_argument('--column', type=int, default=None, help='CSV column index to read')
    group.add_argument('--skip-header', action='store_const', const=True, default=None, help='Skip the first CSV line')
    group.add_argument('--format', dest='input_format', choices=['csv', 'float32', 'float64'], default=None, help='Input file format')
    group.add_argument('--max-lag', type=int, default=None, help='Largest ACF lag searched')
    group.add_argument('--bound-threshold', type=float, default=None, help='Hamming bound threshold for --criterion bound')
    parser.add_argument('--out-dir', type=str, default='output', help='Directory for output files')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='symdyn',
        description='Reduced-order Markov models of time series via symbolic dynamics',
    )
    parser.add_argument('--version', action='version', version=f'symdyn {__version__}')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('fit', help='Fit a D-Markov model to one series')
    p.add_argument('input', help='Series file')
    _add_config_flags(p)

    p = sub.add_parser('reduce', help='Cluster states, score all cuts and write the selected reduced model')
    p.add_argument('model', help='Model JSON written by fit')
    p.add_argument('input', help='Series file; the training series or a new one for re-estimation')
    p.add_argument('--n-min', type=int, default=None, help='Smallest cut scored')
    p.add_argument('--n-max', type=int, default=None, help='Largest cut scored')
    p.add_argument('--write-cuts', action='store_true', help='Also write a reduced model for every scored cut')
    _add_config_flags(p)

    p = sub.add_parser('simulate', help='Coupled simulation of a model and its reduction')
    p.add_argument('model', help='Model JSON written by fit')
    p.add_argument('reduced', help='Reduced model JSON written by reduce')
    p.add_argument('--length', type=int, default=None, help='Symbols per sequence (default 1000)')
    p.add_argument('--trials', type=int, default=None, help='Number of sequence pairs (default 100)')
    p.add_argument('--by-cut', action='store_true', help='Also write distortion box-plot data for every cut')
    _add_config_flags(p)

    p = sub.add_parser('analyze', help='Anomaly statistics for every series in a directory')
    p.add_argument('batch_dir', help='Directory of series files')
    p.add_argument('--clusters', type=int, default=None, help='Reduced size for delta_m_reduced (default 4)')
    _add_config_flags(p)

    p = sub.add_parser('features', help='Reduced emission features for every series in a directory')
    p.add_argument('batch_dir', help='Directory of series files')
    p.add_argument('--clusters', type=int, default=2, help='Number of reduced states N (default 2)')
    _add_config_flags(p)
    return parser


def build_config(args: argparse.Namespace) -> PipelineConfig:
    """Defaults < YAML file < explicit flags."""
    overrides = {field: getattr(args, flag) for flag, field in CONFIG_FLAGS.items() if getattr(args, flag, None) is not None}
    if args.command == 'analyze' and args.clusters is not None:
        overrides['metric_clusters'] = args.clusters
    try:
        if args.config:
            return PipelineConfig.from_yaml(args.config, **overrides)
        return PipelineConfig(**overrides)
    except ValidationError as e:
        raise ConfigError(f"Invalid configuration: {e.errors()[0].get('msg', e)}") from e


# --- Commands --- #

def _out(out_dir: str, name: str) -> str:
    return os.path.join(out_dir, name)


def _stem(path: str) -> str:
    return os.path.splitext(os.path.basename(path))[0]


def _stem_of_model(path: str) -> str:
    stem = _stem(path)
    return stem[:-len('.model')] if stem.endswith('.model') else stem


def cmd_fit(args: argparse.Namespace, config: PipelineConfig, settings: Settings) -> int:
    raw = load_series(args.input, config.input_format, config.column, config.skip_header)
    digest = sha256_file(args.input)
    fit = pipeline.fit_series(raw, config)
    provenance = make_provenance(config, {os.path.basename(args.input): digest})
    stem = _stem(args.input)
    write_document(_out(args.out_dir, f"{stem}.model.json"),
                   model_to_document(fit.model, fit.partition, fit.preprocessing, provenance))
    write_document(_out(args.out_dir, f"{stem}.diagnostics.json"), pipeline.fit_diagnostics(fit, provenance))
    logger.info(f"fit: D={fit.model.depth}, lag={fit.lag.lag}, outputs in {args.out_dir}.")
    _record(settings, 'fit', sample_id=stem, input_sha256=digest, output_dir=args.out_dir)
    return EXIT_OK


def cmd_reduce(args: argparse.Namespace, config: PipelineConfig, settings: Settings) -> int:
    doc = load_document(args.model, ModelDocument)
    model = document_to_model(doc)
    partition = document_to_partition(doc)
    raw = load_series(args.input, config.input_format, config.column, config.skip_header)
    digest = sha256_file(args.input)
    reestimate = digest not in doc.provenance.inputs.values()
    if reestimate:
        logger.info(f"{args.input} is not the training series; reduced parameters are re-estimated from it.")
    sequence = pipeline.encode_with(raw, doc.preprocessing, partition, config)
    result = pipeline.reduce_fitted(model, sequence, config, reestimate=reestimate)

    provenance = make_provenance(config, {
        os.path.basename(args.model): sha256_file(args.model),
        os.path.basename(args.input): digest,
    })
    stem = _stem_of_model(args.model)
    write_csv(_out(args.out_dir, f"{stem}.scores.csv"), result.table.to_frame(), provenance)
    write_document(_out(args.out_dir, f"{stem}.dendrogram.json"),
                   dendrogram_to_document(result.dendrogram, model.fingerprint, provenance))
    row = result.table.row(result.selected_n)
    write_document(_out(args.out_dir, f"{stem}.reduced.json"),
                   reduced_to_document(result.reduced, provenance, row.kappa, row.bound, selected_by=config.criterion))
    if args.write_cuts:
        for r in result.table.rows:
            reduced = reduce_model(model, cut(result.dendrogram, r.n_clusters), config.weighting)
            if reestimate:
                reduced = pipeline.reestimated_model(reduced, sequence, config.prior_weight)
            write_document(_out(args.out_dir, f"{stem}.reduced.N{r.n_clusters}.json"),
                           reduced_to_document(reduced, provenance, r.kappa, r.bound))
    logger.info(f"reduce: selected N={result.selected_n} by {config.criterion.upper()}.")
    _record(settings, 'reduce', sample_id=stem, input_sha256=digest, output_dir=args.out_dir)
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace, config: PipelineConfig, settings: Settings) -> int:
    model = document_to_model(load_document(args.model, ModelDocument))
    reduced = document_to_reduced(load_document(args.reduced, ReductionDocument))
    if reduced.source_fingerprint != model.fingerprint:
        raise SchemaMismatch(f"{args.reduced} was not derived from {args.model}.")
    n_jobs = settings.threads
    results, report = pipeline.simulate(model, reduced, config, n_jobs=n_jobs)

    provenance = make_provenance(config, {
        os.path.basename(args.model): sha256_file(args.model),
        os.path.basename(args.reduced): sha256_file(args.reduced),
    })
    stem = _stem_of_model(args.model)
    write_csv(_out(args.out_dir, f"{stem}.sequences.csv"), pipeline.trials_frame(results, model.alphabet_size), provenance)
    write_document(_out(args.out_dir, f"{stem}.distortion.json"),
                   DistortionDocument(n_clusters=reduced.n_states, provenance=provenance, **report.to_dict()))
    if args.by_cut:
        dendrogram = hierarchical_cluster(pairwise_kl_distance(model))
        frame = distortion_by_cut(model, dendrogram, config.weighting, config.simulate_length, config.trials, config.seed, n_jobs,
                                  n_min=config.n_min, n_max=config.n_max)
        write_csv(_out(args.out_dir, f"{stem}.distortion_by_cut.csv"), frame, provenance)
    _record(settings, 'simulate', sample_id=stem, output_dir=args.out_dir)
    return EXIT_OK


def _batch_provenance(config: PipelineConfig, items: Sequence[pipeline.BatchItem]):
    return make_provenance(config, {os.path.basename(i.path): i.input_sha256 for i in items if i.input_sha256})


def _record_batch(settings: Settings, command: str, items: Sequence[pipeline.BatchItem], out_dir: str) -> None:
    for i in items:
        _record(settings, command, sample_id=i.sample_id, input_sha256=i.input_sha256, output_dir=out_dir,
                status=i.status, error_code=i.error_code, message=i.message)


def cmd_analyze(args: argparse.Namespace, config: PipelineConfig, settings: Settings) -> int:
    paths = pipeline.list_batch(args.batch_dir)
    items = pipeline.analyze_batch(paths, config, n_jobs=settings.threads)
    provenance = _batch_provenance(config, items)
    write_csv(_out(args.out_dir, 'anomaly_trend.csv'), pipeline.anomaly_frame(items), provenance)
    write_csv(_out(args.out_dir, 'batch_summary.csv'), pipeline.summary_frame(items), provenance)
    _record_batch(settings, 'analyze', items, args.out_dir)
    return EXIT_OK


def cmd_features(args: argparse.Namespace, config: PipelineConfig, settings: Settings) -> int:
    paths = pipeline.list_batch(args.batch_dir)
    items = pipeline.features_batch(paths, config, args.clusters, n_jobs=settings.threads)
    ok = [i for i in items if i.status == 'Success']
    provenance = _batch_provenance(config, items)
    features = feature_frame({i.sample_id: i.features for i in ok}, args.clusters, config.alphabet_size)
    write_csv(_out(args.out_dir, 'features.csv'), features, provenance)
    simplex = pd.concat([i.simplex for i in ok], ignore_index=True) if ok else pd.DataFrame(
        columns=['sample_id', 'state_id', *[f"p{s}" for s in range(config.alphabet_size)]])
    write_csv(_out(args.out_dir, 'simplex.csv'), simplex, provenance)
    write_csv(_out(args.out_dir, 'batch_summary.csv'), pipeline.summary_frame(items), provenance)
    _record_batch(settings, 'features', items, args.out_dir)
    return EXIT_OK


COMMANDS = {
    'fit': cmd_fit,
    'reduce': cmd_reduce,
    'simulate': cmd_simulate,
    'analyze': cmd_analyze,
    'features': cmd_features,
}


def _record(settings: Settings, command: str, **fields) -> None:
    if settings.record_runs:
        record_run(command, **fields)


def _report_error(error: BaseException, code: int) -> None:
    message = ' '.join(str(error).split())
    print(f"symdyn: error={error_code_for(error)} exit={code} message={message}", file=sys.stderr)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    settings = Settings()
    setup_logging(settings.log_dir, settings.log_level)
    if settings.record_runs:
        try:
            database.init_db(settings.database_url)
        except Exception as e:
            logger.warning(f"Run ledger disabled: {e}")
            settings = settings.model_copy(update={'record_runs': False})

    try:
        config = build_config(args)
        return COMMANDS[args.command](args, config, settings)
    except Exception as e:
        code = exit_code_for(e)
        logger.error(f"{args.command} failed ({error_code_for(e)}): {e}", exc_info=code == EXIT_OTHER)
        if settings.record_runs:
            record_run(args.command, status='Failed', error_code=error_code_for(e), message=str(e),
                       sample_id=_stem(getattr(args, 'input', '') or getattr(args, 'batch_dir', '') or ''))
        _report_error(e, code)
        return code


if __name__ == '__main__':
    sys.exit(main())
