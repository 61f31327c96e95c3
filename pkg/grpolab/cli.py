"""
Command-line entry point: ``grpolab <subcommand> ...``.

Exit status 0 on success, 1 for a domain failure, 2 for bad arguments or an
invalid config, 3 when the environment is missing something (for example
the program runner). On failure a one-line JSON object
``{"error": ..., "message": ..., "exit_code": ...}`` is written to stderr.
"""
import sys
import logging
import argparse
from pathlib import Path

from jsonschema import ValidationError
from ruamel.yaml import YAMLError

from . import json, __version__
from .config import (TrainerConfig, load_config, config_hash, dump_config,
                     dump_default_config)
from .curation import CommandClassifier, Task, curate, load_jsonl, save_tasks
from .errors import (EXIT_ENVIRONMENT, EXIT_OK, EXIT_USAGE, GrpoLabError,
                     UsageError)
from .resampling import EpochLedger, rebuild_dataset, rebuild_decisions
from .rewards import grade_response
from .analysis import (PatternLexicon, aha_by_step, aha_stats, export_metrics, load_corpus,
                       load_lexicon)
from .trainer import MetricsLog, train, write_run

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(name)s %(levelname)s %(message)s"


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _trainer_config(args, overrides=None):
    return load_config(args.config, preset=getattr(args, "preset", None), overrides=overrides)


def provenance(config):
    return {"config_hash": config_hash(config), "seed": config["seed"], "version": __version__,
            "preset": config["preset"]}


def cmd_train_sim(args):
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.workers is not None:
        overrides["workers"] = args.workers
    config = _trainer_config(args, overrides)
    cfg = TrainerConfig.from_dict(config)
    log = train(cfg)
    prov = dict(provenance(config), config=config)
    out_dir = write_run(log, args.out, prov)
    dump_config(config, str(Path(out_dir) / "config.json"))
    print(json.dumps({"status": log.status, "steps": len(log), "out": str(out_dir),
                      "config_hash": prov["config_hash"]}, sort_keys=True))
    return EXIT_OK


def cmd_curate(args):
    config = _trainer_config(args)
    cfg = TrainerConfig.from_dict(config)
    records = load_jsonl(args.input)
    classifier = CommandClassifier(args.classifier) if args.classifier else None
    tasks, report = curate(records, cfg.templates, cfg.thresholds, cfg.executor, classifier,
                           provenance=args.provenance or Path(args.input).stem,
                           workers=cfg.workers)
    save_tasks(tasks, args.out)
    report = dict(report, input=str(args.input), **provenance(config))
    with open(args.report, 'w') as f:
        json.dump(report, f, indent=2, sort_keys=True)
        f.write("\n")
    print(json.dumps({"kept": report["kept"], "rejected": report["rejected"]}, sort_keys=True))
    return EXIT_OK


def cmd_grade(args):
    cfg = TrainerConfig.from_dict(_trainer_config(args))
    with open(args.task, 'r') as f:
        task = Task.from_record(json.load(f))
    with open(args.response, 'r') as f:
        response = f.read()
    breakdown = grade_response(response, task, cfg.rewards, cfg.executor)
    print(json.dumps(breakdown.to_record(task.id), sort_keys=True))
    return EXIT_OK


def cmd_resample(args):
    with open(args.ledger, 'r') as f:
        ledger = EpochLedger.from_record(json.load(f))
    with open(args.dataset, 'r') as f:
        dataset = json.load(f)
    if isinstance(dataset, dict):
        dataset = dataset.get("tasks", [])
    dataset = frozenset(str(t) for t in dataset)
    result = {"epoch": ledger.epoch,
              "kept": sorted(rebuild_dataset(ledger, dataset)),
              "decisions": rebuild_decisions(ledger, dataset)}
    text = json.dumps(result, indent=2, sort_keys=True) + "\n"
    if args.out:
        with open(args.out, 'w') as f:
            f.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_analyze(args):
    lexicon = load_lexicon(args.lexicon) if args.lexicon else PatternLexicon()
    records, unit = load_corpus(args.corpus)
    stats = [aha_stats([(r["text"], r["length"]) for r in records], lexicon, unit)]
    if records and all("step" in r for r in records):
        stats += aha_by_step(records, lexicon, args.bucket_size, unit)
    log = MetricsLog()
    if args.metrics:
        with open(args.metrics, 'r') as f:
            log = MetricsLog.read_jsonl(f)
    export_metrics(log, stats, args.out)
    print(json.dumps(stats[0].to_record(), sort_keys=True))
    return EXIT_OK


def cmd_config(args):
    if args.preset == "full" or args.config:
        config = _trainer_config(args)
        sys.stdout.write(dump_config(config))
    else:
        dump_default_config(f=sys.stdout, format=args.format)
    return EXIT_OK


def build_parser():
    parser = _ArgumentParser(prog="grpolab", description=__doc__.strip().splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--log-level", default="WARNING",
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = parser.add_subparsers(dest="command", parser_class=_ArgumentParser)
    sub.required = True

    p = sub.add_parser("train-sim", help="Train the toy policy and write metrics")
    p.add_argument("--config")
    p.add_argument("--preset", choices=["toy", "full"])
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--out", default="grpolab-run")
    p.set_defaults(func=cmd_train_sim)

    p = sub.add_parser("curate", help="Clean, filter, verify and bucket raw samples")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--config")
    p.add_argument("--provenance")
    p.add_argument("--classifier", nargs="+",
                   help="External keep/reject command, e.g. --classifier python3 judge.py")
    p.set_defaults(func=cmd_curate)

    p = sub.add_parser("grade", help="Grade one response against a task")
    p.add_argument("--task", required=True)
    p.add_argument("--response", required=True)
    p.add_argument("--config")
    p.set_defaults(func=cmd_grade)

    p = sub.add_parser("resample", help="Rebuild a dataset from an epoch ledger")
    p.add_argument("--ledger", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_resample)

    p = sub.add_parser("analyze", help="Count reflection patterns in a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--lexicon")
    p.add_argument("--metrics", help="metrics.jsonl of a train-sim run to export alongside")
    p.add_argument("--bucket-size", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("config", help="Print the default configuration")
    p.add_argument("--config")
    p.add_argument("--preset", choices=["toy", "full"])
    p.add_argument("--format", default="yaml-with-comments",
                   choices=["json", "yaml", "yaml-with-comments"])
    p.set_defaults(func=cmd_config)
    return parser


def _fail(ex, exit_code):
    sys.stderr.write(json.dumps({"error": type(ex).__name__, "message": str(ex),
                                 "exit_code": exit_code}) + "\n")
    return exit_code


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except UsageError as ex:
        return _fail(ex, EXIT_USAGE)
    logging.basicConfig(level=getattr(logging, args.log_level), format=LOG_FORMAT,
                        stream=sys.stderr)
    try:
        return args.func(args)
    except GrpoLabError as ex:
        return _fail(ex, ex.exit_code)
    except (ValidationError, YAMLError, KeyError, ValueError) as ex:
        return _fail(ex, EXIT_USAGE)
    except (FileNotFoundError, IsADirectoryError) as ex:
        return _fail(ex, EXIT_USAGE)
    except OSError as ex:
        return _fail(ex, EXIT_ENVIRONMENT)


if __name__ == "__main__":
    sys.exit(main())
