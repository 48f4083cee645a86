"""Command-line surface: gen-model, decode, sweep, heatmap, eval.

Exit codes: 0 success, 2 configuration/parameter error, 3 I/O error,
4 data error (malformed or mismatched inputs).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .attention import export_heatmap, format_sparsity_report, mask_stats
from .encoder import EncoderConfig
from .errors import (
    AudioFormatError,
    DataError,
    ModelFormatError,
    ParameterError,
    SparseRnntError,
)
from .metrics import breakdown_json, corpus_cer, edit_alignment, sweep_report
from .model_io import Model, ModelConfig, Vocabulary, load_model, random_model, save_model
from .pipeline import (
    DecodeOptions,
    decode_file,
    parse_policy,
    parse_segmentation,
)
from .transducer import SrsParams

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_DATA = 4


def _atomic_write(path, text: str) -> None:
    tmp = str(path) + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _load_config(path: str | None) -> ModelConfig:
    if path is None:
        return ModelConfig.desk_scale()
    d = json.loads(Path(path).read_text(encoding="utf-8"))
    base = ModelConfig.desk_scale().to_dict()
    for key, val in d.items():
        if key in ("encoder", "vocab") and isinstance(val, dict):
            base[key].update(val)
        else:
            base[key] = val
    return ModelConfig.from_dict(base)


def _decode_options(args) -> DecodeOptions:
    return DecodeOptions(
        policy=parse_policy(args.mask, args.w),
        beam=args.beam,
        srs=SrsParams(t_sil=args.t_sil, enabled=args.srs),
        segmentation=parse_segmentation(args.segmentation, args.overlap),
    )


def _read_tsv(path) -> dict[str, str]:
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        if "\t" not in line:
            raise DataError(f"{path}: line without tab separator: {line!r}")
        utt_id, text = line.split("\t", 1)
        out[utt_id] = text
    return out


def cmd_gen_model(args) -> int:
    cfg = _load_config(args.config)
    model = random_model(cfg, args.seed)
    save_model(model, args.out)
    print(f"wrote model ({len(cfg.vocab)} tokens, "
          f"{cfg.encoder.num_layers} layers) to {args.out}")
    return EXIT_OK


def _decode_one(model, path, opts):
    return decode_file(model, path, opts)


def cmd_decode(args) -> int:
    model = load_model(args.model)
    opts = _decode_options(args)
    paths = [Path(p) for p in args.inputs]
    failures = []
    results = [None] * len(paths)
    def work(i):
        try:
            results[i] = _decode_one(model, paths[i], opts)
        except (SparseRnntError, OSError) as exc:
            failures.append((paths[i], exc))
    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            list(pool.map(work, range(len(paths))))
    else:
        for i in range(len(paths)):
            work(i)
    for path, exc in failures:
        print(f"error: {path}: {exc}", file=sys.stderr)
    lines = []
    detail_lines = []
    stats_blocks = []
    for path, res in zip(paths, results):
        if res is None:
            continue
        utt_id = path.stem
        lines.append(f"{utt_id}\t{res.text}")
        if args.detail:
            detail_lines.append(json.dumps({
                "id": utt_id,
                "tokens": [
                    {"token": model.config.vocab.tokens[t.token_id],
                     "time": round(t.time, 6)}
                    for t in res.tokens
                ],
                "log_prob": res.log_prob,
            }, sort_keys=True))
        if args.stats and res.diagnostics:
            for si, diags in enumerate(res.diagnostics):
                report = mask_stats(
                    [d.masks for d in diags], [d.global_masks for d in diags]
                )
                stats_blocks.append(f"# {utt_id} segment {si}\n"
                                    + format_sparsity_report(report))
    text = "\n".join(lines) + ("\n" if lines else "")
    if args.out:
        _atomic_write(args.out, text)
    else:
        sys.stdout.write(text)
    if args.detail:
        _atomic_write(args.detail, "\n".join(detail_lines)
                      + ("\n" if detail_lines else ""))
    if args.stats:
        _atomic_write(args.stats, "".join(stats_blocks))
    if not failures:
        return EXIT_OK
    io_like = (AudioFormatError, ModelFormatError, OSError)
    return EXIT_IO if any(isinstance(e, io_like) for _, e in failures) else EXIT_DATA


def cmd_sweep(args) -> int:
    model = load_model(args.model)
    refs = _read_tsv(args.refs)
    paths = [Path(p) for p in args.inputs]
    missing = [p.stem for p in paths if p.stem not in refs]
    if missing:
        raise DataError(f"no reference for: {', '.join(sorted(missing))}")
    results = {}
    for mask in args.masks.split(","):
        for seg_spec in args.segmentations.split(","):
            seg = parse_segmentation(seg_spec, args.overlap)
            opts = DecodeOptions(
                policy=parse_policy(mask, args.w),
                beam=args.beam,
                srs=SrsParams(t_sil=args.t_sil, enabled=args.srs),
                segmentation=seg,
            )
            pairs = []
            for path in paths:
                res = decode_file(model, path, opts)
                pairs.append((refs[path.stem], res.text))
            key = (mask.strip(), seg.kind, seg.doi_length)
            results[key] = corpus_cer(pairs)
    sweep_report(results, args.out)
    print(f"wrote {len(results)} sweep rows to {args.out}")
    return EXIT_OK


def cmd_heatmap(args) -> int:
    model = load_model(args.model)
    opts = DecodeOptions(policy=parse_policy(args.mask, args.w))
    res = decode_file(model, args.input, opts)
    if not res.diagnostics:
        raise DataError(f"{args.input}: input produced no encoder frames")
    diags = res.diagnostics[0]
    if not 0 <= args.layer < len(diags):
        raise ParameterError(
            f"layer {args.layer} out of range [0, {len(diags)})"
        )
    heads = diags[args.layer].scores
    if not 0 <= args.head < len(heads):
        raise ParameterError(f"head {args.head} out of range [0, {len(heads)})")
    export_heatmap(heads[args.head], args.out)
    print(f"wrote {heads[args.head].length}x{heads[args.head].length} "
          f"heatmap to {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    refs = _read_tsv(args.refs)
    hyps = _read_tsv(args.hyps)
    missing = sorted(set(refs) - set(hyps))
    if missing:
        raise DataError(f"hypotheses missing for ids: {', '.join(missing)}")
    jsonl = []
    pairs = []
    for utt_id in sorted(refs):
        b = edit_alignment(refs[utt_id], hyps[utt_id])
        jsonl.append(breakdown_json(utt_id, b))
        pairs.append((refs[utt_id], hyps[utt_id]))
    summary = corpus_cer(pairs)
    if args.out:
        _atomic_write(args.out, "\n".join(jsonl) + "\n")
    print(
        f"cer={summary.cer:.6f} del={summary.deletions} ins={summary.insertions} "
        f"sub={summary.substitutions} ref_len={summary.ref_len}"
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sparse-rnnt",
        description="Sparse self-attention RNN-T inference and evaluation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-model", help="create a seeded random model file")
    p.add_argument("--config", help="JSON config overriding desk-scale defaults")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_model)

    def add_decode_flags(p):
        p.add_argument("--mask", default="dense",
                       help="dense | local | local+sgm1|sgm2|sgm3")
        p.add_argument("--w", type=int, default=40, help="local half-window")
        p.add_argument("--beam", type=int, default=4)
        p.add_argument("--srs", action=argparse.BooleanOptionalAction, default=False)
        p.add_argument("--t-sil", type=int, default=15, dest="t_sil")
        p.add_argument("--overlap", type=float, default=2.0)

    p = sub.add_parser("decode", help="transcribe wav or feature files")
    p.add_argument("--model", required=True)
    p.add_argument("inputs", nargs="+")
    add_decode_flags(p)
    p.add_argument("--segmentation", default="none",
                   help="none | doi:<seconds> | epd")
    p.add_argument("--out", help="transcript file (default stdout)")
    p.add_argument("--detail", help="JSON-lines per-token detail file")
    p.add_argument("--stats", help="sparsity report file")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("sweep", help="mask x segmentation grid with CER report")
    p.add_argument("--model", required=True)
    p.add_argument("inputs", nargs="+")
    p.add_argument("--refs", required=True, help="TSV id<TAB>reference")
    p.add_argument("--masks", default="dense,local,local+sgm3")
    p.add_argument("--segmentations", default="doi:20",
                   help="comma list of none|epd|doi:<seconds>")
    add_decode_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("heatmap", help="export a dense attention heatmap CSV")
    p.add_argument("--model", required=True)
    p.add_argument("input")
    p.add_argument("--layer", type=int, required=True)
    p.add_argument("--head", type=int, required=True)
    p.add_argument("--mask", default="dense")
    p.add_argument("--w", type=int, default=40)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_heatmap)

    p = sub.add_parser("eval", help="score hypotheses against references")
    p.add_argument("--refs", required=True)
    p.add_argument("--hyps", required=True)
    p.add_argument("--out", help="per-utterance JSON-lines breakdown")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ParameterError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (AudioFormatError, ModelFormatError, FileNotFoundError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (DataError, SparseRnntError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
