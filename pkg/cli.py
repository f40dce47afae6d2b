# cli.py

"""
cli.py

Command-line entry point of the event verification toolkit. Each subcommand loads the
settings, configures logging and hands over to the backend in main.py; errors are
reported on stderr and mapped to fixed exit codes.

Subcommands:
- synth: Generate a synthetic corpus with ground truth.
- esw: Learn and export the signature windows of event types.
- train: Select sensors, train and select verifiers, write one bundle per event.
- evaluate: Score bundles on a split and write the CSV report.
- verify: Decide claims (`event_type,timestamp_ns`) and print verdicts as CSV.
"""

import argparse
import logging
import sys

from config import load_settings
from main import evaluate_bundles, learn_selections, run_synth, train_events, verify_claims
from modules.errors import EXIT_COVERAGE, EXIT_OK, SpoofGuardError
from modules.logger import setup_logging

VERDICT_FLOAT_FORMAT = '%.10g'

# flag destination -> settings key
_SETTING_FLAGS = {
    'sample_every': 'sample_every',
    'rmi_threshold': 'rmi_threshold',
    'band': 'band',
    'cv_folds': 'cv_folds',
    'grid': 'grid',
    'pipeline': 'pipeline',
    'seed': 'seed',
    'threads': 'threads',
    'max_prototypes': 'max_prototypes',
    'log_file': 'log_file',
    'log_level': 'log_level',
}


def _add_common(parser):
    parser.add_argument('--settings', metavar='PATH', help='JSON settings file')
    parser.add_argument('--threads', type=int, metavar='N', help='worker threads (default: machine parallelism)')
    parser.add_argument('--log-file', dest='log_file', metavar='PATH')
    parser.add_argument('--log-level', dest='log_level', choices=('DEBUG', 'INFO', 'WARNING', 'ERROR'))


def _add_training(parser):
    parser.add_argument('--data', required=True, metavar='DIR', help='corpus directory')
    parser.add_argument('--event', default='all', help="event type, or 'all'")
    parser.add_argument('--sample-every', dest='sample_every', type=int, metavar='N',
                        help='0-instance grid step in seconds')
    parser.add_argument('--rmi-threshold', dest='rmi_threshold', type=float, metavar='X')
    parser.add_argument('--band', metavar='R', help="Sakoe-Chiba band: radius, percentage ('10%%') or 'unbounded'")
    parser.add_argument('--pipeline', choices=('dtw', 'statistical', 'e2e'))
    parser.add_argument('--seed', type=int)


def build_parser():
    parser = argparse.ArgumentParser(prog='spoofguard', description='Verify claimed IoT events against sensor evidence.')
    sub = parser.add_subparsers(dest='command', required=True)

    synth = sub.add_parser('synth', help='generate a synthetic corpus')
    source = synth.add_mutually_exclusive_group()
    source.add_argument('--config', metavar='PATH', help='scenario JSON')
    source.add_argument('--default', action='store_true', help='use the default scenario')
    synth.add_argument('--out', required=True, metavar='DIR')
    synth.add_argument('--seed', type=int)
    _add_common(synth)

    esw = sub.add_parser('esw', help='learn and export signature windows')
    _add_training(esw)
    esw.add_argument('--out', required=True, metavar='DIR')
    _add_common(esw)

    train = sub.add_parser('train', help='train verifiers')
    _add_training(train)
    train.add_argument('--cv-folds', dest='cv_folds', type=int, metavar='K')
    train.add_argument('--grid', choices=('small', 'full'))
    train.add_argument('--max-prototypes', dest='max_prototypes', type=int, metavar='N')
    train.add_argument('--out', required=True, metavar='DIR', help='bundle directory (one <event>.json per event)')
    train.add_argument('--report', metavar='PATH', help='cross-validation ranking CSV')
    train.add_argument('--export-embedding', dest='export_embedding', metavar='DIR')
    _add_common(train)

    evaluate = sub.add_parser('evaluate', help='evaluate bundles on a split')
    evaluate.add_argument('--bundle', required=True, metavar='PATH', help='bundle file or directory')
    evaluate.add_argument('--data', required=True, metavar='DIR')
    evaluate.add_argument('--split', default='test', choices=('dev', 'train', 'test'))
    evaluate.add_argument('--report', metavar='PATH')
    _add_common(evaluate)

    verify = sub.add_parser('verify', help='verify claims')
    verify.add_argument('--bundle', required=True, metavar='PATH', help='bundle file or directory')
    verify.add_argument('--data', required=True, metavar='DIR')
    verify.add_argument('--claims', required=True, metavar='PATH', help='CSV with event_type,timestamp_ns')
    _add_common(verify)
    return parser


def _settings_from(args, environ=None):
    overrides = {key: getattr(args, dest) for dest, key in _SETTING_FLAGS.items()
                 if getattr(args, dest, None) is not None}
    return load_settings(args.settings, overrides, environ)


def cmd_synth(args, settings):
    run_synth(args.out, None if args.default else args.config, args.seed, settings=settings)
    return EXIT_OK


def cmd_esw(args, settings):
    learn_selections(args.data, args.event, args.out, settings)
    return EXIT_OK


def cmd_train(args, settings):
    train_events(args.data, args.event, args.out, settings, report_path=args.report,
                 export_dir=args.export_embedding)
    return EXIT_OK


def cmd_evaluate(args, settings):
    evaluate_bundles(args.bundle, args.data, settings, split=args.split, report_path=args.report)
    return EXIT_OK


def cmd_verify(args, settings, stdout=None):
    frame, uncovered = verify_claims(args.bundle, args.data, args.claims, settings)
    frame.to_csv(stdout or sys.stdout, index=False, float_format=VERDICT_FLOAT_FORMAT, lineterminator='\n')
    return EXIT_COVERAGE if uncovered else EXIT_OK


COMMANDS = {'synth': cmd_synth, 'esw': cmd_esw, 'train': cmd_train, 'evaluate': cmd_evaluate, 'verify': cmd_verify}


def main(argv=None, environ=None):
    """
    Runs one subcommand.

    Parameters:
    - argv (list or None): Arguments; sys.argv[1:] when None.
    - environ (mapping or None): Environment for SPOOFGUARD_* overrides.

    Returns:
    - int: Exit code (0 ok, 2 config or corpus, 3 untrainable, 4 incompatible bundle, 5 coverage).
    """
    args = build_parser().parse_args(argv)
    try:
        settings = _settings_from(args, environ)
        setup_logging(settings['log_file'], settings['log_level'])
        return COMMANDS[args.command](args, settings)
    except SpoofGuardError as e:
        setup_logging()
        logging.error(e.message)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
