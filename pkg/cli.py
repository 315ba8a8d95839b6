#!/usr/bin/env python3
"""
RecogPass CLI - Command-line entry point for the recognition-password analyzer
Synthetic data, SAX encoding, recognizer evaluation, Markov attacks and security metrics
"""

import sys
import argparse
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import orjson
import pandas as pd

from artifacts import provenance, write_records, write_table
from batch_runner import BatchRunner
from config import TOOL_NAME, TOOL_VERSION, AnalyzerConfig, config
from errors import ConfigError, RecogPassError, TraceFormatError
from eval_roc import (compare_recognizers, param_sweep, plan_pairs, roc_curve, roc_frame,
                      score_plan, sweep_frame)
from guess_metrics import (ProbHistogram, bounds_report, build_prob_histogram, crossval_guessing,
                           guessing_entropy, parameter_security_table, partial_guessing,
                           power_of_two_checkpoints)
from markov_model import Smoothing, enumerate_best_first, load_model, save_model, train
from pattern_baseline import (MAX_LENGTH, MIN_LENGTH, PatternModel, enumerate_valid_patterns,
                              format_patterns, parse_pattern_file, synth_patterns)
from bias_analysis import ngram_coverage, start_end_heatmap
from recognizers import Recognizer, RecognizerType, ScoreRecord
from sax_core import SaxParams, encode_dataset, space_size
from trace_io import (FORMAT_TAGS, SynthSpec, TraceSet, guess_format, parse_shape_mix, parse_trace_file,
                      serialize_trace_set, synth_gestures)

logger = logging.getLogger(__name__)

# argparse dest -> config setting
FLAG_SETTINGS = {
    'seed': 'SEED',
    'threads': 'THREADS',
    'log_level': 'LOG_LEVEL',
    'omega': 'SAX_OMEGA',
    'beta': 'SAX_BETA',
    'n': 'MARKOV_ORDER',
    'lam': 'ADDITIVE_LAMBDA',
    'impostor_cap': 'IMPOSTOR_CAP',
    'protractor_points': 'PROTRACTOR_POINTS',
    'bucket_width': 'BUCKET_WIDTH_BITS',
    'folds': 'CV_FOLDS',
    'max_guesses': 'MAX_GUESSES',
    'grid': 'HEATMAP_GRID',
}


# ---------------------------------------------------------------------------
# Argument types

def int_range(text: str) -> List[int]:
    """'4..12' (inclusive), '4,6,8' or '8'"""
    try:
        if '..' in text:
            low, high = (int(part) for part in text.split('..', 1))
            values = list(range(low, high + 1))
        else:
            values = [int(part) for part in text.split(',') if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a range like 4..12 or 4,6,8, got {text!r}")
    if not values:
        raise argparse.ArgumentTypeError(f"empty range {text!r}")
    return values


def float_list(text: str) -> List[float]:
    try:
        values = [float(part) for part in text.split(',') if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
    if not values:
        raise argparse.ArgumentTypeError(f"empty list {text!r}")
    return values


def guess_count(text: str) -> int:
    """Plain integer or 2^k"""
    try:
        if '^' in text:
            base, exponent = (int(part) for part in text.split('^', 1))
            value = base ** exponent
        else:
            value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a guess count like 65536 or 2^26, got {text!r}")
    if value < 1:
        raise argparse.ArgumentTypeError(f"guess count must be >= 1, got {text!r}")
    return value


# ---------------------------------------------------------------------------
# Shared helpers

def load_dataset(path: str, format_tag: Optional[str] = None) -> TraceSet:
    source = Path(path)
    if not source.exists():
        raise TraceFormatError(f"dataset not found: {source}")
    return parse_trace_file(source.read_bytes(), format_tag or guess_format(source.name), source.name)


def sax_params(cfg: AnalyzerConfig) -> SaxParams:
    return SaxParams(omega=cfg.SAX_OMEGA, beta=cfg.SAX_BETA)


def output_path(args, default: str) -> Path:
    return Path(args.out or default)


def header(args, cfg: AnalyzerConfig, **extra) -> Dict[str, object]:
    return provenance(args.command_name, cfg, **extra)


def recognizer_for(tag: str, cfg: AnalyzerConfig) -> Recognizer:
    return Recognizer(RecognizerType(tag), sax_params(cfg), cfg.PROTRACTOR_POINTS)


# ---------------------------------------------------------------------------
# Commands

def cmd_gen_synth(args, cfg: AnalyzerConfig) -> int:
    spec = SynthSpec(
        accounts=args.accounts,
        samples_per_account=args.samples,
        jitter=args.jitter,
        shape_mix=parse_shape_mix(args.shape_mix) if args.shape_mix else SynthSpec().shape_mix,
        points_per_trace=args.points,
        start_bias=args.start_bias,
    )
    seed = cfg.derive_seed('synth')
    trace_set = synth_gestures(spec, seed)
    out = output_path(args, 'synthetic.csv')
    format_tag = args.format or guess_format(out.name)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_bytes(serialize_trace_set(trace_set, format_tag, header(args, cfg, synth_seed=seed)))
    print(f"✅ Generated {len(trace_set)} traces for {spec.accounts} accounts -> {out}")
    return 0


def cmd_encode(args, cfg: AnalyzerConfig) -> int:
    dataset = load_dataset(args.dataset, args.format)
    params = sax_params(cfg)
    words = encode_dataset(dataset, params)
    rows = []
    for account_id, traces in dataset.accounts().items():
        for trace, word in zip(traces, words[account_id]):
            rows.append((account_id, trace.sample_id, word.to_text(), word.n_original))
    frame = pd.DataFrame(rows, columns=['account_id', 'sample_id', 'word', 'n_original'])
    out = write_table(frame, output_path(args, 'encoded.csv'), header(args, cfg))
    print(f"🔤 Encoded {len(rows)} traces with omega={params.omega}, beta={params.beta} "
          f"({space_size(params)} possible words) -> {out}")
    return 0


def cmd_score(args, cfg: AnalyzerConfig) -> int:
    template_set = load_dataset(args.template, args.format)
    attempt_set = load_dataset(args.attempt, args.format)
    recognizer = recognizer_for(args.recognizer, cfg)
    template, attempt = template_set.traces[0], attempt_set.traces[0]
    score = recognizer.score_traces(template, attempt)
    record = ScoreRecord(
        recognizer=recognizer.tag,
        template=f"{template.account_id}/{template.sample_id}",
        attempt=f"{attempt.account_id}/{attempt.sample_id}",
        score=score.value,
        parameters=recognizer.describe(),
    )
    if args.out:
        write_records([record.model_dump()], args.out, header(args, cfg))
    print(orjson.dumps(record.model_dump(), option=orjson.OPT_SORT_KEYS).decode())
    return 0


def cmd_sweep_params(args, cfg: AnalyzerConfig) -> int:
    dataset = load_dataset(args.dataset, args.format)
    runner = BatchRunner(cfg.THREADS)
    plan = plan_pairs(dataset, cfg.IMPOSTOR_CAP, cfg.derive_seed('pairs'))
    omegas = args.omega_range or [cfg.SAX_OMEGA]
    betas = args.beta_range or [cfg.SAX_BETA]

    cells = param_sweep(dataset, omegas, betas, plan, runner)
    out = write_table(sweep_frame(cells), output_path(args, 'grid.csv'), header(args, cfg))
    best = max(cells, key=lambda c: (c.auroc, -c.omega, -c.beta))
    print(f"📈 {len(cells)} cells over {len(plan.genuine)} genuine / {len(plan.impostor)} impostor pairs -> {out}")
    print(f"   Best: omega={best.omega} beta={best.beta} AUROC={best.auroc:.4f}")

    if args.compare_out:
        recognizers = [recognizer_for(r.value, cfg) for r in RecognizerType]
        comparison = compare_recognizers(dataset, recognizers, plan, runner)
        write_table(comparison, args.compare_out, header(args, cfg))
        for row in comparison.itertuples():
            print(f"   {row.recognizer:<11} AUROC={row.auroc:.4f}")

    if args.roc_out:
        samples = score_plan(dataset, plan, recognizer_for(RecognizerType.SAX.value, cfg), runner)
        write_table(roc_frame(roc_curve(samples)), args.roc_out, header(args, cfg))

    if args.security_out:
        table = parameter_security_table(dataset, omegas, betas, args.alpha, cfg.MARKOV_ORDER,
                                         bucket_width=cfg.BUCKET_WIDTH_BITS, runner=runner)
        write_table(table, args.security_out, header(args, cfg))
    return 0


def cmd_train(args, cfg: AnalyzerConfig) -> int:
    dataset = load_dataset(args.dataset, args.format)
    params = sax_params(cfg)
    corpus = [w for words in encode_dataset(dataset, params).values() for w in words]
    smoothing = Smoothing.parse(args.smoothing, cfg.ADDITIVE_LAMBDA)
    model = train(corpus, cfg.MARKOV_ORDER, smoothing)
    out = save_model(model, output_path(args, 'model.mm'), header(args, cfg))
    print(f"🧠 Trained {model.n}-gram model ({smoothing.label}) on {len(corpus)} words -> {out}")
    return 0


def cmd_attack(args, cfg: AnalyzerConfig) -> int:
    max_guesses = cfg.MAX_GUESSES
    out_path = output_path(args, 'curve.csv')

    if args.model:
        if not args.targets:
            raise ConfigError("attack --model needs --targets")
        model = load_model(args.model)
        if model.word_length is None or model.beta is None:
            raise ConfigError("attack needs a model trained on SAX words")
        params = SaxParams(omega=model.word_length, beta=model.beta)
        targets = [words[0] for words in encode_dataset(load_dataset(args.targets, args.format), params).values()]
        curve = guessing_entropy(enumerate_best_first(model, max_guesses), targets,
                                 power_of_two_checkpoints(max_guesses))
        frame = pd.DataFrame(list(curve.points), columns=['guesses', 'cracked_fraction'])
        write_table(frame, out_path, header(args, cfg, targets=len(targets)))
        print(f"🎯 Attacked {len(targets)} accounts: {curve.points[-1][1]:.4f} cracked "
              f"after {curve.points[-1][0]} guesses -> {out_path}")
        return 0

    if not args.dataset:
        raise ConfigError("attack needs either --model with --targets, or --dataset for cross-validation")
    dataset = load_dataset(args.dataset, args.format)
    result = crossval_guessing(
        dataset, folds=cfg.CV_FOLDS, params=sax_params(cfg), n=cfg.MARKOV_ORDER,
        smoothing=Smoothing.parse(args.smoothing, cfg.ADDITIVE_LAMBDA), max_guesses=max_guesses,
        seed=cfg.derive_seed('folds'), runner=BatchRunner(cfg.THREADS),
    )
    write_table(result.frame(), out_path, header(args, cfg))
    print(f"🎯 {len(result.fold_curves)}-fold attack: mean {result.mean[-1]:.4f} "
          f"(± {result.std[-1]:.4f}) cracked after {result.checkpoints[-1]} guesses -> {out_path}")
    return 0


def _report_frame(reports) -> pd.DataFrame:
    return pd.DataFrame([r.as_row() for r in reports],
                        columns=['alpha', 'mu_alpha', 'lambda_mu', 'g_alpha', 'bits', 'method', 'error_bound_bits'])


def _print_reports(reports):
    for r in reports:
        print(f"   alpha={r.alpha:<5g} mu={r.mu_alpha:.6g} lambda={r.lambda_mu:.4f} "
              f"G={r.g_alpha:.6g} bits={r.bits:.2f}")


def cmd_pgm(args, cfg: AnalyzerConfig) -> int:
    model = load_model(args.model)
    if args.method == 'histogram':
        histogram = build_prob_histogram(model, cfg.BUCKET_WIDTH_BITS)
        reports = [partial_guessing(histogram, alpha) for alpha in args.alpha]
        if args.histogram_out:
            write_table(histogram.frame(), args.histogram_out, header(args, cfg))
    else:
        reports = [partial_guessing(enumerate_best_first(model, cfg.MAX_GUESSES), alpha, cfg.MAX_GUESSES)
                   for alpha in args.alpha]
    out = write_table(_report_frame(reports), output_path(args, 'report.csv'), header(args, cfg))
    print(f"🔐 Partial guessing ({args.method}) -> {out}")
    _print_reports(reports)
    return 0


def cmd_bounds(args, cfg: AnalyzerConfig) -> int:
    dataset = load_dataset(args.dataset, args.format)
    table = bounds_report(dataset, args.fractions, args.alpha, sax_params(cfg), cfg.derive_seed('subsample'),
                          cfg.BUCKET_WIDTH_BITS, BatchRunner(cfg.THREADS))
    out = write_table(table, output_path(args, 'bounds.csv'), header(args, cfg))
    print(f"🔐 Security bounds for {len(args.fractions)} dataset fractions -> {out}")
    for row in table.itertuples():
        print(f"   fraction={row.fraction:<5g} {row.bound:<5} alpha={row.alpha:<5g} bits={row.bits:.2f}")
    return 0


def cmd_pattern_pgm(args, cfg: AnalyzerConfig) -> int:
    source = Path(args.corpus)
    if not source.exists():
        raise ConfigError(f"pattern corpus not found: {source}")
    patterns, rejected = parse_pattern_file(source.read_text(encoding='utf-8'))
    model = PatternModel(patterns, 3, Smoothing.parse('additive', cfg.ADDITIVE_LAMBDA))
    if args.method == 'histogram':
        histogram: ProbHistogram = model.histogram(cfg.BUCKET_WIDTH_BITS)
        reports = [partial_guessing(histogram, alpha) for alpha in args.alpha]
    else:
        reports = [partial_guessing(model.guess_stream(), alpha) for alpha in args.alpha]
    out = write_table(_report_frame(reports), output_path(args, 'pattern_report.csv'),
                      header(args, cfg, corpus=len(patterns), rejected=len(rejected)))
    print(f"🔢 Pattern model on {len(patterns)} patterns ({len(rejected)} rejected) -> {out}")
    _print_reports(reports)
    return 0


def cmd_pattern_gen_synth(args, cfg: AnalyzerConfig) -> int:
    seed = cfg.derive_seed('patterns')
    patterns = synth_patterns(args.count, seed)
    out = output_path(args, 'patterns.txt')
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(format_patterns(patterns, header(args, cfg, patterns_seed=seed)), encoding='utf-8')
    print(f"✅ Generated {len(patterns)} synthetic unlock patterns -> {out}")
    return 0


def cmd_pattern_count(args, cfg: AnalyzerConfig) -> int:
    patterns = enumerate_valid_patterns()
    by_length = {length: 0 for length in range(MIN_LENGTH, MAX_LENGTH + 1)}
    for p in patterns:
        by_length[len(p)] += 1
    frame = pd.DataFrame(sorted(by_length.items()), columns=['length', 'count'])
    if args.out:
        write_table(frame, args.out, header(args, cfg))
    print(f"🔢 {len(patterns)} valid unlock patterns")
    for length, count in sorted(by_length.items()):
        print(f"   length {length}: {count}")
    return 0


def cmd_bias_heatmap(args, cfg: AnalyzerConfig) -> int:
    dataset = load_dataset(args.dataset, args.format)
    heatmap = start_end_heatmap(dataset, cfg.heatmap_dims())
    out = write_table(heatmap.frame(), output_path(args, 'heatmap.csv'), header(args, cfg))
    rows, cols = heatmap.start.shape
    r, c = divmod(int(heatmap.start.argmax()), cols)
    print(f"🗺️  {len(dataset)} traces on a {rows}x{cols} grid; most common start cell ({r}, {c}) "
          f"holds {heatmap.start[r, c]:.3f} -> {out}")
    return 0


def cmd_bias_ngrams(args, cfg: AnalyzerConfig) -> int:
    dataset = load_dataset(args.dataset, args.format)
    corpus = [w for words in encode_dataset(dataset, sax_params(cfg)).values() for w in words]
    coverage = ngram_coverage(corpus, args.ngram, args.top)
    out = write_table(coverage.frame(), output_path(args, 'ngrams.csv'), header(args, cfg))
    print(f"📊 Top {args.top} {args.ngram}-grams cover {coverage.coverage:.2%} of {coverage.total} occurrences "
          f"({len(coverage.ranked)} distinct) -> {out}")
    return 0


# ---------------------------------------------------------------------------
# Parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--seed', type=int, help='global seed (default from RECOGPASS_SEED)')
    common.add_argument('--config', help='JSON config file, layered under flags')
    common.add_argument('--out', help='output artifact path')
    common.add_argument('--threads', type=int, help='worker threads')
    common.add_argument('--log-level', dest='log_level', choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'])
    common.add_argument('--format', choices=FORMAT_TAGS, help='dataset format (default: by file extension)')

    sax = argparse.ArgumentParser(add_help=False)
    sax.add_argument('--omega', type=int, help='SAX word length')
    sax.add_argument('--beta', type=int, help='SAX alphabet size per dimension')

    markov = argparse.ArgumentParser(add_help=False)
    markov.add_argument('--n', type=int, choices=[2, 3], help='Markov gram order')
    markov.add_argument('--smoothing', default='good-turing', help='none | additive[:lambda] | good-turing')
    markov.add_argument('--lambda', dest='lam', type=float, help='additive smoothing constant')

    parser = argparse.ArgumentParser(prog=TOOL_NAME, description='Recognition-password security analyzer')
    parser.add_argument('--version', action='version', version=f"{TOOL_NAME} {TOOL_VERSION}")
    commands = parser.add_subparsers(dest='command', required=True)

    def add(subparsers, name, handler, parents, command_name=None, **kwargs):
        sub = subparsers.add_parser(name, parents=[common] + parents, **kwargs)
        sub.set_defaults(handler=handler, command_name=command_name or name)
        return sub

    p = add(commands, 'gen-synth', cmd_gen_synth, [], help='generate a synthetic gesture dataset')
    p.add_argument('--accounts', type=int, default=100)
    p.add_argument('--samples', type=int, default=5, help='samples per account')
    p.add_argument('--jitter', type=float, default=0.05)
    p.add_argument('--shape-mix', dest='shape_mix', help="e.g. 'circle=0.5,zigzag=0.5'")
    p.add_argument('--points', type=int, default=64, help='points per trace')
    p.add_argument('--start-bias', dest='start_bias', type=float, default=0.0)

    p = add(commands, 'encode', cmd_encode, [sax], help='SAX-encode every trace of a dataset')
    p.add_argument('--dataset', required=True)

    p = add(commands, 'score', cmd_score, [sax], help='score one attempt against one template')
    p.add_argument('--recognizer', choices=[r.value for r in RecognizerType], default='sax')
    p.add_argument('--template', required=True)
    p.add_argument('--attempt', required=True)
    p.add_argument('--protractor-points', dest='protractor_points', type=int)

    p = add(commands, 'sweep-params', cmd_sweep_params, [], help='AUROC grid over SAX parameters')
    p.add_argument('--dataset', required=True)
    p.add_argument('--omega', dest='omega_range', type=int_range, help='e.g. 4..12')
    p.add_argument('--beta', dest='beta_range', type=int_range, help='e.g. 3..10')
    p.add_argument('--recognizer', choices=['sax'], default='sax')
    p.add_argument('--impostor-cap', dest='impostor_cap', type=int, help='impostor pairs per template, 0 = all')
    p.add_argument('--protractor-points', dest='protractor_points', type=int)
    p.add_argument('--compare-out', dest='compare_out', help='AUROC of sax, dtw and protractor on the same pairs')
    p.add_argument('--roc-out', dest='roc_out', help='ROC curve of the configured SAX parameters')
    p.add_argument('--security-out', dest='security_out', help='bits per (omega, beta, alpha)')
    p.add_argument('--alpha', type=float_list, default=[0.1, 0.2, 0.5])
    p.add_argument('--n', type=int, choices=[2, 3])
    p.add_argument('--bucket-width', dest='bucket_width', type=float)

    p = add(commands, 'train', cmd_train, [sax, markov], help='train a Markov model on a dataset')
    p.add_argument('--dataset', required=True)

    p = add(commands, 'attack', cmd_attack, [sax, markov], help='guessing-entropy attack')
    p.add_argument('--model', help='trained model file')
    p.add_argument('--targets', help='dataset whose accounts are attacked')
    p.add_argument('--dataset', help='cross-validate on this dataset instead of using --model')
    p.add_argument('--folds', type=int)
    p.add_argument('--max-guesses', dest='max_guesses', type=guess_count)

    p = add(commands, 'pgm', cmd_pgm, [], help='partial guessing metric of a model')
    p.add_argument('--model', required=True)
    p.add_argument('--alpha', type=float_list, default=[0.1, 0.2, 0.5])
    p.add_argument('--method', choices=['histogram', 'stream'], default='histogram')
    p.add_argument('--bucket-width', dest='bucket_width', type=float)
    p.add_argument('--max-guesses', dest='max_guesses', type=guess_count)
    p.add_argument('--histogram-out', dest='histogram_out')

    p = add(commands, 'bounds', cmd_bounds, [sax], help='upper/lower security bounds per dataset fraction')
    p.add_argument('--dataset', required=True)
    p.add_argument('--fractions', type=float_list, default=[0.25, 0.5, 0.75, 1.0])
    p.add_argument('--alpha', type=float_list, default=[0.1, 0.2, 0.5])
    p.add_argument('--bucket-width', dest='bucket_width', type=float)

    pattern = commands.add_parser('pattern', help='Android unlock-pattern baseline')
    pattern_commands = pattern.add_subparsers(dest='pattern_command', required=True)
    p = add(pattern_commands, 'pgm', cmd_pattern_pgm, [], command_name='pattern pgm',
            help='partial guessing metric of a pattern corpus')
    p.add_argument('--corpus', required=True)
    p.add_argument('--alpha', type=float_list, default=[0.2])
    p.add_argument('--method', choices=['exact', 'histogram'], default='exact')
    p.add_argument('--lambda', dest='lam', type=float)
    p.add_argument('--bucket-width', dest='bucket_width', type=float)
    p = add(pattern_commands, 'gen-synth', cmd_pattern_gen_synth, [], command_name='pattern gen-synth',
            help='generate a human-biased synthetic pattern corpus')
    p.add_argument('--count', type=int, default=1000)
    add(pattern_commands, 'count', cmd_pattern_count, [], command_name='pattern count',
        help='count valid unlock patterns')

    bias = commands.add_parser('bias', help='human-bias reports')
    bias_commands = bias.add_subparsers(dest='bias_command', required=True)
    p = add(bias_commands, 'heatmap', cmd_bias_heatmap, [], command_name='bias heatmap',
            help='start/end point heatmaps')
    p.add_argument('--dataset', required=True)
    p.add_argument('--grid', help="ROWSxCOLS, e.g. 10x10")
    p = add(bias_commands, 'ngrams', cmd_bias_ngrams, [sax], command_name='bias ngrams',
            help='n-gram coverage of SAX words')
    p.add_argument('--dataset', required=True)
    p.add_argument('--n', dest='ngram', type=int, choices=[2, 3], default=3)
    p.add_argument('--top', type=int, default=200)

    return parser


def resolve_config(args, base: AnalyzerConfig = config) -> AnalyzerConfig:
    overrides = {setting: getattr(args, dest, None) for dest, setting in FLAG_SETTINGS.items()}
    return base.layered(args.config, overrides)


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Parse argv, run one command; 0 on success, 1 on analyzer errors, 2 on usage errors"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    try:
        cfg = resolve_config(args)
        logging.basicConfig(
            level=cfg.LOG_LEVEL,
            format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
            force=True,
        )
        logger.debug("Resolved config: %s", cfg.resolved())
        return args.handler(args, cfg)
    except RecogPassError as e:
        print(f"❌ {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(run())
