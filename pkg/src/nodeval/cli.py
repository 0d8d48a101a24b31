"""``nodeval`` command line.

Exit codes: 0 success, 1 input/validation error, 2 statistical degeneracy.
"""

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

from nodeval import DegenerateError
from nodeval.agreement import parse_merge
from nodeval.cohort import load_cohort, save_cohort, summarize
from nodeval.preprocess import (detect_calipers, load_calipers, preprocess,
                                read_pgm, resize_bilinear, to_uint8, write_pgm)
from nodeval.report import EvalConfig, csv_text, emit, evaluate, evaluate_kappa, summary_dict
from nodeval.synth import CohortSpec, cross_template, generate_caliper_image, generate_cohort
from nodeval.tinycnn import infer_nodule, load_weights


def cmd_summarize(args):
    summary = summary_dict(summarize(load_cohort(args.input)))
    Path(args.out).write_text(json.dumps(summary, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def cmd_evaluate(args):
    cfg = EvalConfig(replicates=args.boot, level=args.level, estimator=args.estimator, seed=args.seed,
                     group_by=args.group_by, min_group=args.min_group,
                     merge=tuple(parse_merge(args.merge)), workers=args.workers)
    report = evaluate(load_cohort(args.input), cfg)
    emit(report, args.out, args.format)


def cmd_kappa(args):
    pairs = evaluate_kappa(load_cohort(args.input), parse_merge(args.merge))["pairs"]
    rows = [["pair", "kappa"]] + [[k, v["text"]] for k, v in pairs.items()]
    Path(args.out).write_text(csv_text(rows), encoding="utf-8")


def cmd_preprocess(args):
    image = read_pgm(args.image)
    net_input, box = preprocess(image, load_calipers(args.calipers), args.margin, args.size)
    write_pgm(args.out, to_uint8(net_input))
    if args.box:
        Path(args.box).write_text(box.to_json() + "\n")


def cmd_detect(args):
    found = detect_calipers(read_pgm(args.image), read_pgm(args.template), args.expected)
    Path(args.out).write_text(found.to_json() + "\n")


def _load_view(path, size):
    img = read_pgm(path)
    if img.shape != (size, size):
        return resize_bilinear(img, size, size)
    return img / 255.0


def cmd_infer(args):
    model = load_weights(args.model)
    size = model.input_size
    res = infer_nodule(model, _load_view(args.trans, size), _load_view(args.long, size))
    Path(args.out).write_text(json.dumps(asdict(res), indent=2) + "\n")


def cmd_synth_cohort(args):
    spec = CohortSpec.from_json(Path(args.spec).read_text()) if args.spec else CohortSpec()
    save_cohort(generate_cohort(spec), args.out)


def cmd_synth_image(args):
    image, truth = generate_caliper_image(args.width, args.height, args.n_calipers, args.seed, arm=args.arm)
    write_pgm(args.out, image)
    if args.truth:
        Path(args.truth).write_text(truth.to_json() + "\n")
    if args.template_out:
        write_pgm(args.template_out, cross_template(args.arm))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nodeval", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("summarize", help="cohort summary statistics")
    s.add_argument("--input", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_summarize)

    s = sub.add_parser("evaluate", help="AUCs, bootstrap CIs, DeLong tests and kappas")
    s.add_argument("--input", required=True)
    s.add_argument("--boot", type=int, default=2000)
    s.add_argument("--level", type=float, default=0.95)
    s.add_argument("--estimator", choices=("binormal", "empirical"), default="binormal")
    s.add_argument("--seed", type=int, default=42)
    s.add_argument("--group-by", choices=("scanner", "none"), default="scanner")
    s.add_argument("--min-group", type=int, default=10)
    s.add_argument("--merge", default="3:2", help="kappa category merges, e.g. 3:2 (empty for none)")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--format", choices=("json", "text", "csv"), default="json")
    s.add_argument("--out", required=True, help="file for json/text, directory for csv")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("kappa", help="pairwise Cohen's kappa between readers")
    s.add_argument("--input", required=True)
    s.add_argument("--merge", default="3:2")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_kappa)

    s = sub.add_parser("preprocess", help="crop around calipers and resize to the network input")
    s.add_argument("--image", required=True)
    s.add_argument("--calipers", required=True)
    s.add_argument("--margin", type=int, default=32)
    s.add_argument("--size", type=int, default=160)
    s.add_argument("--out", required=True)
    s.add_argument("--box")
    s.set_defaults(func=cmd_preprocess)

    s = sub.add_parser("detect", help="locate calipers by template matching")
    s.add_argument("--image", required=True)
    s.add_argument("--template", required=True)
    s.add_argument("--expected", type=int, choices=(2, 4), default=4)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_detect)

    s = sub.add_parser("infer", help="two-view malignancy probability")
    s.add_argument("--model", required=True)
    s.add_argument("--trans", required=True)
    s.add_argument("--long", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_infer)

    synth = sub.add_parser("synth", help="synthetic data generators").add_subparsers(dest="what", required=True)
    s = synth.add_parser("cohort")
    s.add_argument("--spec", help="JSON cohort spec; built-in reference cohort when omitted")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth_cohort)
    s = synth.add_parser("image")
    s.add_argument("--n-calipers", type=int, choices=(2, 4), default=4)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--width", type=int, default=400)
    s.add_argument("--height", type=int, default=300)
    s.add_argument("--arm", type=int, default=7)
    s.add_argument("--out", required=True)
    s.add_argument("--truth")
    s.add_argument("--template-out")
    s.set_defaults(func=cmd_synth_image)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except DegenerateError as exc:
        print(f"nodeval: statistical degeneracy: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, KeyError) as exc:
        print(f"nodeval: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
