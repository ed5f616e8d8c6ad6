"""Command line interface: train, eval, predict and synth verbs."""

from __future__ import annotations

import argparse
import logging
import sys

from . import harness
from .config import RunConfig
from .errors import CmtmlError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cmtml", description="Temporal moment localization toolkit")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model from a JSON run config")
    p_train.add_argument("--config", required=True, help="path to the run config JSON")

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint on annotated queries")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--annotations", default=None, help="override the checkpoint's annotations path")
    p_eval.add_argument("--features", default=None, help="override the checkpoint's features directory")
    p_eval.add_argument("--n", type=int, nargs="+", default=[1], help="recall cutoffs")
    p_eval.add_argument("--m", type=float, nargs="+", default=[0.3, 0.5, 0.7], help="IoU thresholds")
    p_eval.add_argument("--out", default=None, help="write the recall table as CSV")

    p_pred = sub.add_parser("predict", help="localize a query in one video")
    p_pred.add_argument("--checkpoint", required=True)
    p_pred.add_argument("--video", required=True, help="feature file of the video")
    p_pred.add_argument("--query", required=True)
    p_pred.add_argument("--dump-map", default=None, help="directory for PGM + CSV map dumps")

    p_synth = sub.add_parser("synth", help="generate a synthetic dataset")
    p_synth.add_argument("--spec", required=True, help="JSON file with n_samples/l/d/noise_std/seed")
    p_synth.add_argument("--out", required=True, help="output directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "train":
            config = RunConfig.from_json(args.config)
            final = harness.train(config)
            print(f"checkpoint written to {final}")
        elif args.command == "eval":
            result = harness.evaluate(
                args.checkpoint, args.annotations, args.features,
                n_list=tuple(args.n), m_list=tuple(args.m), out_csv=args.out,
            )
            for (n, m, group), value in sorted(result.recalls.items(), key=lambda kv: (kv[0][2], kv[0][0], kv[0][1])):
                print(f"R@{n}, IoU@{m:g} [{group}]: {value:.4f}")
            if result.n_skipped:
                print(f"skipped queries (missing features): {result.n_skipped}")
            if args.out:
                print(f"recall table written to {args.out}")
        elif args.command == "predict":
            prediction = harness.predict(args.checkpoint, args.video, args.query, args.dump_map)
            flag = " (degenerate map)" if prediction.degenerate else ""
            print(
                f"moment: {prediction.t_start:.3f}s .. {prediction.t_end:.3f}s "
                f"(score {prediction.score:.4f}){flag}"
            )
        elif args.command == "synth":
            spec = harness.synthesize(args.spec, args.out)
            print(f"wrote {spec.n_samples} synthetic samples to {args.out}")
    except CmtmlError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
