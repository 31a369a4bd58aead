import argparse
import sys

from .errors import EXIT_INPUT, EXIT_OK, EXIT_SCORING, DatasetRecordError, ExportError
from .export import ExportJob, export_logprobs


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="logprob-export",
        description="Score a preference dataset with a policy/reference checkpoint pair "
                    "and write per-token response logprobs.",
    )
    parser.add_argument("--dataset", required=True, help="preference dataset (JSONL: id/prompt/chosen/rejected)")
    parser.add_argument("--policy", required=True, help="policy model path or identifier")
    parser.add_argument("--reference", required=True, help="reference model path or identifier")
    parser.add_argument("--output", required=True, help="logprob file to write")
    parser.add_argument("--device", default="cpu", help="torch device (default cpu)")
    parser.add_argument("--batch-size", type=int, default=8, dest="batch_size")
    parser.add_argument("--apply-chat-template", action="store_true", dest="apply_chat_template",
                        help="render prompts through the tokenizer's chat template")
    parser.add_argument("--permissive", action="store_false", dest="strict", default=True,
                        help="skip pairs that fail to encode instead of aborting")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    job = ExportJob(
        dataset=args.dataset,
        policy=args.policy,
        reference=args.reference,
        output=args.output,
        device=args.device,
        batch_size=args.batch_size,
        apply_chat_template=args.apply_chat_template,
        strict=args.strict,
    )
    try:
        stats = export_logprobs(job)
    except (DatasetRecordError, FileNotFoundError, OSError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ExportError as exc:
        print(f"export error: {exc}", file=sys.stderr)
        return EXIT_SCORING
    print(f"exported {stats.records} records for {stats.pairs} pairs -> {job.output}")
    if stats.failures:
        print(f"skipped {len(stats.failures)} pair(s):", file=sys.stderr)
        for pid, why in stats.failures:
            print(f"  {pid}: {why}", file=sys.stderr)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
