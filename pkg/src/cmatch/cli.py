"""Experiment command line.

Subcommands: generate | pretrain | adapt | decode | evaluate |
compare-assignments.  Every command is deterministic given its inputs and
seed; progress notes go to stderr, all data outputs are seed-stable bytes.

Exit codes: 0 success, 2 usage or configuration error, 3 data error
(corpora, checkpoints, shapes), 4 numerical failure (non-finite loss).

CSV schemas (column order is stable):
  evaluate:             utterance_id,cer,wer,char_edits,ref_chars,word_edits,ref_words
                        (final row aggregates as utterance_id=ALL; empty
                        references report NA rates)
  adapt metrics:        epoch,source_loss,target_loss,match_loss,total_loss,dev_cer
  pretrain metrics:     epoch,train_loss,dev_loss
  compare-assignments:  strategy,cer,wer
"""

from __future__ import annotations

import argparse
import os
import shutil
import sys

from . import __version__
from .adapt import (
    adapt,
    adapt_domain_mmd,
    decode_corpus,
    filter_pseudo,
    pretrain,
    pseudo_label,
)
from .config import default_config, load_config
from .corpus import read_corpus, write_corpus
from .errors import (
    CMatchError,
    ConfigError,
    EvaluationError,
    InvalidShapeError,
    ParseError,
)
from .model import load_checkpoint, save_checkpoint

METHODS = ("cmatch", "mmd-domain", "source-only", "self-training-only")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _config_from_args(args) -> "RunConfig":
    cfg = load_config(args.config) if args.config else default_config()
    if args.seed is not None:
        cfg = cfg.with_overrides(seed=args.seed)
    return cfg


def cmd_generate(args) -> int:
    from .experiments import generate_domain_pair
    cfg = _config_from_args(args)
    source, target = generate_domain_pair(cfg)
    clean_dir = os.path.join(args.out, "clean")
    target_dir = os.path.join(args.out, cfg["shift_tag"])
    write_corpus(source, clean_dir)
    write_corpus(target, target_dir)
    _log(f"wrote {len(source)} clean utterances to {clean_dir}")
    _log(f"wrote {len(target)} shifted utterances to {target_dir}")
    return EXIT_OK


def cmd_pretrain(args) -> int:
    cfg = _config_from_args(args)
    train_cfg = cfg.adapt_config("pretrain")
    source = read_corpus(args.corpus)
    result = pretrain(source, train_cfg, metrics_path=args.out + ".metrics.csv")
    save_checkpoint(result.params, args.out,
                    meta={"ctc_weight": train_cfg.ctc_weight, "seed": train_cfg.seed})
    _log(f"pretrained {len(result.epoch_rows)} epochs "
         f"({result.skipped_utterances} utterances skipped); checkpoint at {args.out}")
    return EXIT_OK


def cmd_adapt(args) -> int:
    cfg = _config_from_args(args)
    if args.method == "source-only":
        # no updates at all: the checkpoint is copied verbatim
        load_checkpoint(args.checkpoint)  # validate before copying
        shutil.copyfile(args.checkpoint, args.out)
        _log(f"source-only: copied {args.checkpoint} to {args.out}")
        return EXIT_OK
    run_cfg = cfg.adapt_config("adapt")
    params, meta = load_checkpoint(args.checkpoint)
    source = read_corpus(args.source)
    target = read_corpus(args.target)
    _check_dims(params, source)
    _check_dims(params, target)
    pseudo = filter_pseudo(pseudo_label(params, target, run_cfg), run_cfg.keep_ratio)
    _log(f"pseudo labels: kept {len(pseudo)} of {len(target)} utterances")
    if args.method == "self-training-only":
        from dataclasses import replace
        run_cfg = replace(run_cfg, match_weight=0.0)
        result = adapt(params, source, target, pseudo, run_cfg,
                       metrics_path=args.out + ".metrics.csv")
    elif args.method == "mmd-domain":
        result = adapt_domain_mmd(params, source, target, pseudo, run_cfg,
                                  metrics_path=args.out + ".metrics.csv")
    else:
        result = adapt(params, source, target, pseudo, run_cfg,
                       metrics_path=args.out + ".metrics.csv")
    save_checkpoint(result.params, args.out,
                    meta={**meta, "method": args.method, "match_weight": run_cfg.match_weight})
    _log(f"adapted {len(result.epoch_rows)} epochs; "
         f"{result.skipped_utterances} utterances skipped, "
         f"{result.steps_without_overlap} steps without character overlap; "
         f"checkpoint at {args.out}")
    return EXIT_OK


def _check_dims(params, corpus) -> None:
    for utt in corpus.utterances[:1]:
        if utt.frames.shape[1] != params.dims.input_dim:
            raise InvalidShapeError(
                f"corpus frames have dim {utt.frames.shape[1]}, "
                f"checkpoint expects {params.dims.input_dim}")


def cmd_decode(args) -> int:
    cfg = _config_from_args(args)
    run_cfg = cfg.adapt_config("adapt")
    params, _ = load_checkpoint(args.checkpoint)
    corpus = read_corpus(args.corpus)
    _check_dims(params, corpus)
    lines = []
    for utt_id, hyp in decode_corpus(params, corpus, run_cfg):
        lines.append(f"{utt_id}\t{hyp.text(params.charset)}")
    with open(args.out, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    _log(f"decoded {len(lines)} utterances to {args.out}")
    return EXIT_OK


def _read_transcripts(path) -> dict[str, str]:
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh.read().splitlines(), start=1):
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) == 1:
                parts = [parts[0], ""]
            if len(parts) != 2:
                raise ParseError(path, lineno, "expected 'id<TAB>transcript'")
            out[parts[0]] = parts[1]
    return out


def cmd_evaluate(args) -> int:
    from .experiments import evaluation_report
    hyps = _read_transcripts(args.transcripts)
    ref = read_corpus(args.reference)
    text, _, _ = evaluation_report(hyps, ref)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
        _log(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_compare_assignments(args) -> int:
    from .experiments import compare_assignment_strategies
    cfg = _config_from_args(args)
    rows = compare_assignment_strategies(args.checkpoint, args.source, args.target, cfg)
    lines = ["strategy,cer,wer"]
    for strategy, cer, wer in rows:
        lines.append(f"{strategy},{repr(cer) if cer is not None else 'NA'},"
                     f"{repr(wer) if wer is not None else 'NA'}")
    with open(args.out, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    _log(f"wrote {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cmatch",
        description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"cmatch {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=True):
        p.add_argument("--config", help="key=value run configuration file")
        p.add_argument("--seed", type=int, help="override the configured seed")
        p.add_argument("--out", required=out_required, help="output path")

    p = sub.add_parser("generate", help="write a clean corpus and its shifted twin")
    common(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("pretrain", help="train on a labeled source corpus")
    common(p)
    p.add_argument("corpus", help="source corpus directory")
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("adapt", help="adapt a pretrained model to a target corpus")
    common(p)
    p.add_argument("--method", choices=METHODS, default="cmatch")
    p.add_argument("checkpoint", help="pretrained checkpoint")
    p.add_argument("source", help="labeled source corpus directory")
    p.add_argument("target", help="unlabeled target corpus directory")
    p.set_defaults(func=cmd_adapt)

    p = sub.add_parser("decode", help="beam-decode a corpus to transcripts")
    common(p)
    p.add_argument("checkpoint")
    p.add_argument("corpus")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("evaluate", help="score decoded transcripts against references")
    common(p, out_required=False)
    p.add_argument("transcripts", help="id<TAB>hypothesis file from decode")
    p.add_argument("reference", help="reference corpus directory")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare-assignments",
                       help="adapt with each label-assignment strategy and score all three")
    common(p)
    p.add_argument("checkpoint")
    p.add_argument("source")
    p.add_argument("target")
    p.set_defaults(func=cmd_compare_assignments)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        _log(f"configuration error: {e}")
        return EXIT_USAGE
    except EvaluationError as e:
        _log(f"numerical failure: {e}")
        return EXIT_NUMERIC
    except (CMatchError, FileNotFoundError, OSError) as e:
        _log(f"data error: {e}")
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
