"""Command-line surface: model generation, encoding, campaigns, scans, reports.

Exit codes: 0 success, 1 usage error, 2 precondition violation, 3 I/O failure.
Every command is deterministic once --seed is given; omitting --seed draws one
from system entropy and prints it so the run can be reproduced.
"""

from __future__ import annotations

import argparse
import csv
import secrets
import sys

import numpy as np

from .bitcodec import LAYOUTS, float_dtype, layout_key
from .campaign import (BITSCAN_MODES, DEFAULT_BERS, CampaignConfig, bitscan,
                       run_campaign)
from .container import ContainerError, load_model, save_image, save_model
from .evalharness import (DEFAULT_EPOCHS, DEFAULT_EVAL_SIZE, DEFAULT_FEATURES,
                          DEFAULT_HIDDEN, DEFAULT_LR, DEFAULT_TRAIN_SIZE,
                          TinyModel, accuracy, gen_dataset, quantize_model,
                          train_model)
from .oracle import exhaustive_double_flip, exhaustive_single_flip
from .schemes import (ConfigError, LineFate, SchemeConfig, SchemeKind,
                      feasible_chunk_sizes, overhead_report, pack_image,
                      secded_code)

RESULTS_HEADER = ["scheme", "line_width", "dtype", "ber", "mean_accuracy",
                  "std", "iterations", "mean_flips", "corrected", "due"]
BITSCAN_HEADER = ["bit", "mode", "clean_accuracy", "repetition", "accuracy"]
CHUNK_HEADER = ["chunk_size", "ber", "mean_accuracy", "std", "iterations",
                "mean_flips", "corrected", "due", "flag"]

_SCHEME_NAMES = [k.value for k in SchemeKind]
_PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
            "#8c564b", "#17becf", "#7f7f7f"]


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors; the contract here says 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: usage: {message}", file=sys.stderr)
        raise SystemExit(1)


def _resolve_seed(args) -> int:
    if args.seed is not None:
        return int(args.seed)
    seed = secrets.randbits(32)
    print(f"seed: {seed}")
    return seed


def _scheme_from(name: str, line_width: int, chunk: int) -> SchemeConfig:
    try:
        kind = SchemeKind(name)
    except ValueError:
        raise ConfigError(f"unknown scheme {name!r}; choose from {_SCHEME_NAMES}")
    return SchemeConfig(kind=kind, line_width=line_width, chunk_size=chunk)


def _scheme_label(scheme: SchemeConfig) -> str:
    if scheme.kind.word_codec == "cep":
        return f"{scheme.kind.value}:c{scheme.chunk_size}"
    return scheme.kind.value


def _parse_bers(text: str):
    out = []
    for tok in text.split(","):
        tok = tok.strip()
        if not tok:
            continue
        try:
            out.append(float(tok))
        except ValueError:
            raise ConfigError(f"bad BER value {tok!r}")
    if not out:
        raise ConfigError("no BER values given")
    return tuple(out)


def _load_model_bundle(path):
    tensors, meta = load_model(path)
    model = TinyModel.from_tensors(tensors)
    needed = ("dataset_seed", "eval_size", "features", "train_size")
    if not all(k in meta for k in needed):
        raise ConfigError(f"model container lacks dataset metadata {needed}")
    _, eval_set = gen_dataset(int(meta["dataset_seed"]),
                              train_size=int(meta["train_size"]),
                              eval_size=int(meta["eval_size"]),
                              n_features=int(meta["features"]))
    return model, eval_set, meta


def _quantized_tensors(model: TinyModel, layout):
    dt = float_dtype(layout)
    return {name: arr.astype(dt) for name, arr in model.tensors().items()}


# ---------------------------------------------------------------------------
# Commands

def cmd_gen_model(args) -> int:
    seed = _resolve_seed(args)
    train, eval_set = gen_dataset(seed, train_size=args.train_size,
                                  eval_size=args.eval_size,
                                  n_features=args.features)
    model = train_model(train, seed, hidden=args.hidden,
                        epochs=args.epochs, lr=args.lr)
    acc = accuracy(model, eval_set)
    meta = {
        "dataset_seed": seed,
        "hidden": args.hidden,
        "features": args.features,
        "train_size": args.train_size,
        "eval_size": args.eval_size,
        "epochs": args.epochs,
        "lr": args.lr,
        "clean_accuracy": round(acc, 6),
    }
    save_model(args.out, model.tensors(), dtype="fp32", meta=meta)
    print(f"clean accuracy: {acc:.4f}")
    print(f"wrote {args.out} ({model.param_count} params)")
    return 0


def cmd_encode(args) -> int:
    tensors, _ = load_model(args.model)
    model = TinyModel.from_tensors(tensors)
    layout = LAYOUTS[args.dtype]
    scheme = _scheme_from(args.scheme, args.line, args.chunk)
    scheme.validate(layout)
    image = pack_image(_quantized_tensors(model, layout), layout, scheme)
    save_image(args.out, image)
    print(overhead_report(scheme, model.param_count, layout))
    print(f"wrote {args.out} ({image.n_lines} lines of {scheme.line_width} bits)")
    return 0


def cmd_campaign(args) -> int:
    seed = _resolve_seed(args)
    model, eval_set, _ = _load_model_bundle(args.model)
    layout = LAYOUTS[args.dtype]
    qmodel = quantize_model(model, layout)
    bers = _parse_bers(args.bers)
    scheme_names = [s.strip() for s in args.image_scheme.split(",") if s.strip()]
    if not scheme_names:
        raise ConfigError("no schemes given")

    rows_out = []
    for name in scheme_names:
        scheme = _scheme_from(name, args.line, args.chunk)
        scheme.validate(layout)
        image = pack_image(_quantized_tensors(model, layout), layout, scheme)
        config = CampaignConfig(
            scheme=scheme, bers=bers, seed=seed,
            min_iterations=args.min_iterations,
            max_iterations=args.max_iterations,
            convergence_tolerance=args.tolerance,
            convergence_window=args.window,
            metric=args.metric,
        )
        label = _scheme_label(scheme)

        def show(row, label=label):
            print(f"{label} ber={row.ber:g}: mean={row.mean_accuracy:.4f} "
                  f"std={row.sample_std:.4f} iters={row.iterations_run}")

        result = run_campaign(config, qmodel, image, eval_set, progress=show)
        for row in result.rows:
            rows_out.append([label, scheme.line_width, layout_key(layout),
                             f"{row.ber:g}", f"{row.mean_accuracy:.6f}",
                             f"{row.sample_std:.6f}", row.iterations_run,
                             f"{row.mean_flips:.4f}", row.corrected_count,
                             row.due_count])
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RESULTS_HEADER)
        w.writerows(rows_out)
    print(f"wrote {args.out} ({len(rows_out)} rows)")
    return 0


def cmd_bitscan(args) -> int:
    seed = _resolve_seed(args)
    model, eval_set, _ = _load_model_bundle(args.model)
    layout = LAYOUTS[args.dtype]
    if args.all_bits:
        bits = list(range(layout.total_bits))
    else:
        if args.bit is None:
            raise ConfigError("give either --bit K or --all-bits")
        bits = [args.bit]
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(BITSCAN_HEADER)
        for b in bits:
            res = bitscan(model, eval_set, layout, b, repetitions=args.reps,
                          seed=seed, mode=args.scheme)
            print(f"bit {b:2d} mode {res.mode}: clean={res.clean_accuracy:.4f} "
                  f"mean={res.mean_accuracy:.4f} min={res.min_accuracy:.4f}")
            for k, acc in enumerate(res.accuracies):
                w.writerow([b, res.mode, f"{res.clean_accuracy:.6f}",
                            k, f"{acc:.6f}"])
    print(f"wrote {args.out}")
    return 0


def cmd_chunk_explore(args) -> int:
    seed = _resolve_seed(args)
    model, eval_set, _ = _load_model_bundle(args.model)
    layout = LAYOUTS[args.dtype]
    qmodel = quantize_model(model, layout)
    sizes = sorted(feasible_chunk_sizes(layout.total_bits))
    results = []
    for c in sizes:
        scheme = SchemeConfig(kind=SchemeKind.CEP, line_width=args.line,
                              chunk_size=c)
        image = pack_image(_quantized_tensors(model, layout), layout, scheme)
        config = CampaignConfig(scheme=scheme, bers=(args.ber,), seed=seed,
                                min_iterations=args.min_iterations,
                                max_iterations=args.max_iterations)
        row = run_campaign(config, qmodel, image, eval_set).rows[0]
        results.append((c, row))
        print(f"c={c:2d}: mean={row.mean_accuracy:.4f} std={row.sample_std:.4f} "
              f"iters={row.iterations_run}")

    # flag any chunk size that beats the smallest one by more than noise
    base_c, base = results[0]
    flags = []
    for c, row in results:
        se = np.hypot(base.sample_std / np.sqrt(base.iterations_run),
                      row.sample_std / np.sqrt(row.iterations_run))
        if c != base_c and row.mean_accuracy > base.mean_accuracy + 2.0 * se:
            flags.append(f"beats-c{base_c}")
        else:
            flags.append("ok")
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CHUNK_HEADER)
        for (c, row), flag in zip(results, flags):
            w.writerow([c, f"{row.ber:g}", f"{row.mean_accuracy:.6f}",
                        f"{row.sample_std:.6f}", row.iterations_run,
                        f"{row.mean_flips:.4f}", row.corrected_count,
                        row.due_count, flag])
    best = max(results, key=lambda cr: cr[1].mean_accuracy)
    print(f"best chunk size: c={best[0]} (mean {best[1].mean_accuracy:.4f})")
    if any(f != "ok" for f in flags):
        print("note: a larger chunk size beat the smallest beyond noise; "
              "see the flag column")
    print(f"wrote {args.out}")
    return 0


def _random_bits(rng, width: int) -> int:
    out = 0
    for shift in range(0, width, 32):
        out |= int(rng.integers(0, 1 << 32)) << shift
    return out & ((1 << width) - 1)


def _verify_secded(rng, n_lines):
    out = []
    for width in (64, 128):
        code = secded_code(width)
        scheme = SchemeConfig(kind=SchemeKind.SECDED, line_width=width)
        singles_ok = doubles_due = miscorrections = 0
        n_single = width + code.r + 1
        n_double = n_single * (n_single - 1) // 2
        for _ in range(n_lines):
            line = _random_bits(rng, width)
            singles = exhaustive_single_flip(line, scheme)
            doubles = exhaustive_double_flip(line, scheme)
            singles_ok += singles.exact_count
            doubles_due += doubles.count_fate(LineFate.DETECTED_UNCORRECTABLE)
            miscorrections += len(doubles.miscorrections())
        out.append({
            "check": f"secded-w{width}",
            "singles_exact": singles_ok,
            "singles_total": n_lines * n_single,
            "doubles_due": doubles_due,
            "doubles_total": n_lines * n_double,
            "miscorrections": miscorrections,
            "ok": (singles_ok == n_lines * n_single
                   and doubles_due == n_lines * n_double
                   and miscorrections == 0),
        })
    return out


def _verify_mset(rng, n_words):
    from .schemes import mset_decode, mset_encode
    from .bitcodec import Word
    out = []
    for key, layout in LAYOUTS.items():
        n = layout.total_bits
        sites = (n - 2, 1, 0)
        ok = 0
        for _ in range(n_words):
            w = Word(_random_bits(rng, n), layout)
            enc = mset_encode(w)
            want_msb = (w.bits >> (n - 2)) & 1
            good = True
            for s in sites:
                dec = mset_decode(Word(enc.bits ^ (1 << s), layout))
                msb = (dec.bits >> (n - 2)) & 1
                if msb != want_msb or (dec.bits & 0b11) != 0:
                    good = False
            ok += good
        out.append({"check": f"mset-{key}", "words_ok": ok,
                    "words_total": n_words, "ok": ok == n_words})
    return out


def _verify_cep(rng, n_words):
    from .schemes import cep_decode, cep_encode
    from .bitcodec import Word
    out = []
    for key, layout in LAYOUTS.items():
        n = layout.total_bits
        for c in sorted(feasible_chunk_sizes(n)):
            k = n // (c + 1)
            ok = 0
            for _ in range(n_words):
                w = Word(_random_bits(rng, n), layout)
                enc = cep_encode(w, c)
                base = cep_decode(enc, c).bits
                good = True
                for pos in range(n):
                    dec = cep_decode(Word(enc.bits ^ (1 << pos), layout), c).bits
                    group = (n - 1 - pos) // (c + 1)
                    # the zeroed chunk sits at tightly packed offsets after decode
                    chunk_mask = ((1 << c) - 1) << (n - c * (group + 1))
                    if dec != (base & ~chunk_mask):
                        good = False
                        break
                ok += good
            out.append({"check": f"cep-{key}-c{c}", "groups_per_word": k,
                        "words_ok": ok, "words_total": n_words,
                        "ok": ok == n_words})
    return out


def cmd_verify(args) -> int:
    seed = _resolve_seed(args)
    rng = np.random.default_rng((seed, 0x5E1F))
    reports = []
    if args.scheme in ("secded", "all"):
        reports += _verify_secded(rng, args.lines)
    if args.scheme in ("mset", "all"):
        reports += _verify_mset(rng, args.words)
    if args.scheme in ("cep", "all"):
        reports += _verify_cep(rng, args.words)
    if args.json:
        import json
        print(json.dumps(reports, indent=2))
    else:
        for r in reports:
            status = "ok" if r["ok"] else "FAIL"
            detail = ", ".join(f"{k}={v}" for k, v in r.items()
                               if k not in ("check", "ok"))
            print(f"{r['check']}: {status} ({detail})")
    if not all(r["ok"] for r in reports):
        raise ConfigError("verification failed; see report above")
    return 0


def _read_results_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ConfigError(f"{path} is empty")
        if header != RESULTS_HEADER:
            raise ConfigError(f"{path} does not have the campaign CSV header")
        rows = [row for row in reader if row]
    if not rows:
        raise ConfigError(f"{path} has no data rows")
    return rows


def _svg_plot(series, title):
    """Hand-rolled line plot: log10 BER on x, accuracy on y, one polyline per scheme."""
    width, height = 640, 420
    ml, mr, mt, mb = 60, 150, 40, 50
    pw, ph = width - ml - mr, height - mt - mb
    xs = [np.log10(b) for pts in series.values() for b, _ in pts]
    x0, x1 = min(xs), max(xs)
    if x1 - x0 < 1e-9:
        x0, x1 = x0 - 0.5, x1 + 0.5

    def px(lx):
        return ml + (lx - x0) / (x1 - x0) * pw

    def py(y):
        return mt + (1.0 - y) * ph

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{ml + pw / 2:.1f}" y="20" text-anchor="middle" font-size="14">{title}</text>',
        f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>',
    ]
    for k in range(6):
        y = k / 5.0
        parts.append(f'<line x1="{ml}" y1="{py(y):.1f}" x2="{ml + pw}" y2="{py(y):.1f}" '
                     f'stroke="#ddd"/>')
        parts.append(f'<text x="{ml - 8}" y="{py(y) + 4:.1f}" text-anchor="end">{y:.1f}</text>')
    for d in range(int(np.ceil(x0)), int(np.floor(x1)) + 1):
        parts.append(f'<line x1="{px(d):.1f}" y1="{mt}" x2="{px(d):.1f}" '
                     f'y2="{mt + ph}" stroke="#eee"/>')
        parts.append(f'<text x="{px(d):.1f}" y="{mt + ph + 18}" text-anchor="middle">1e{d}</text>')
    parts.append(f'<text x="{ml + pw / 2:.1f}" y="{height - 12}" text-anchor="middle">'
                 f'bit error rate</text>')
    parts.append(f'<text x="18" y="{mt + ph / 2:.1f}" text-anchor="middle" '
                 f'transform="rotate(-90 18 {mt + ph / 2:.1f})">mean accuracy</text>')
    for idx, (name, pts) in enumerate(series.items()):
        color = _PALETTE[idx % len(_PALETTE)]
        coords = " ".join(f"{px(np.log10(b)):.1f},{py(a):.1f}" for b, a in pts)
        parts.append(f'<polyline points="{coords}" fill="none" stroke="{color}" '
                     f'stroke-width="2"/>')
        for b, a in pts:
            parts.append(f'<circle cx="{px(np.log10(b)):.1f}" cy="{py(a):.1f}" '
                         f'r="3" fill="{color}"/>')
        ly = mt + 10 + idx * 18
        parts.append(f'<line x1="{ml + pw + 10}" y1="{ly}" x2="{ml + pw + 34}" '
                     f'y2="{ly}" stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{ml + pw + 40}" y="{ly + 4}">{name}</text>')
    parts.append("</svg>")
    return "\n".join(parts)


def cmd_report(args) -> int:
    rows = _read_results_csv(args.infile)
    series: dict[str, list] = {}
    skipped = 0
    for row in rows:
        scheme, ber, acc = row[0], float(row[3]), float(row[4])
        if ber <= 0.0:
            skipped += 1
            continue
        series.setdefault(scheme, []).append((ber, acc))
    if not series:
        raise ConfigError("no rows with positive BER to plot")
    for pts in series.values():
        pts.sort(key=lambda p: p[0])
    if skipped:
        print(f"note: skipped {skipped} rows with non-positive BER", file=sys.stderr)
    svg = _svg_plot(series, args.title)
    with open(args.svg, "w") as fh:
        fh.write(svg)
    print(f"wrote {args.svg} ({len(series)} series)")
    return 0


# ---------------------------------------------------------------------------
# Parser wiring

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="bitshield",
                description="memory-protection codecs and bit-flip campaigns "
                            "for neural-network parameters")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-model", help="train and save the pinned tiny classifier")
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--out", required=True)
    g.add_argument("--hidden", type=int, default=DEFAULT_HIDDEN)
    g.add_argument("--features", type=int, default=DEFAULT_FEATURES)
    g.add_argument("--train-size", type=int, default=DEFAULT_TRAIN_SIZE)
    g.add_argument("--eval-size", type=int, default=DEFAULT_EVAL_SIZE)
    g.add_argument("--epochs", type=int, default=DEFAULT_EPOCHS)
    g.add_argument("--lr", type=float, default=DEFAULT_LR)
    g.set_defaults(func=cmd_gen_model)

    e = sub.add_parser("encode", help="quantize and pack a model into a protected image")
    e.add_argument("--model", required=True)
    e.add_argument("--scheme", required=True, choices=_SCHEME_NAMES)
    e.add_argument("--line", type=int, default=64, choices=(64, 128))
    e.add_argument("--chunk", type=int, default=3)
    e.add_argument("--dtype", default="fp32", choices=sorted(LAYOUTS))
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_encode)

    c = sub.add_parser("campaign", help="Monte-Carlo BER sweep over one or more schemes")
    c.add_argument("--model", required=True)
    c.add_argument("--image-scheme", required=True,
                   help="comma-separated scheme list, e.g. none,secded,cep")
    c.add_argument("--bers", default=",".join(f"{b:g}" for b in DEFAULT_BERS))
    c.add_argument("--line", type=int, default=64, choices=(64, 128))
    c.add_argument("--chunk", type=int, default=3)
    c.add_argument("--dtype", default="fp16", choices=sorted(LAYOUTS))
    c.add_argument("--seed", type=int, default=None)
    c.add_argument("--min-iterations", type=int, default=100)
    c.add_argument("--max-iterations", type=int, default=1500)
    c.add_argument("--tolerance", type=float, default=0.01)
    c.add_argument("--window", type=int, default=50)
    c.add_argument("--metric", default="model_accuracy",
                   choices=("model_accuracy", "numeric_metrics"))
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_campaign)

    b = sub.add_parser("bitscan", help="per-bit vulnerability scan")
    b.add_argument("--model", required=True)
    b.add_argument("--dtype", default="fp16", choices=sorted(LAYOUTS))
    b.add_argument("--bit", type=int, default=None)
    b.add_argument("--all-bits", action="store_true")
    b.add_argument("--reps", type=int, default=1000)
    b.add_argument("--scheme", default="none", choices=BITSCAN_MODES)
    b.add_argument("--seed", type=int, default=None)
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_bitscan)

    x = sub.add_parser("chunk-explore", help="sweep feasible chunk sizes at one BER")
    x.add_argument("--model", required=True)
    x.add_argument("--dtype", default="fp16", choices=sorted(LAYOUTS))
    x.add_argument("--ber", type=float, default=3e-5)
    x.add_argument("--line", type=int, default=64, choices=(64, 128))
    x.add_argument("--seed", type=int, default=None)
    x.add_argument("--min-iterations", type=int, default=100)
    x.add_argument("--max-iterations", type=int, default=1500)
    x.add_argument("--out", required=True)
    x.set_defaults(func=cmd_chunk_explore)

    v = sub.add_parser("verify", help="run the exhaustive codec verification report")
    v.add_argument("--scheme", default="all",
                   choices=("secded", "mset", "cep", "all"))
    v.add_argument("--lines", type=int, default=10,
                   help="random lines per width for the ECC tables")
    v.add_argument("--words", type=int, default=500,
                   help="random words per codec variant")
    v.add_argument("--seed", type=int, default=None)
    v.add_argument("--json", action="store_true")
    v.set_defaults(func=cmd_verify)

    r = sub.add_parser("report", help="render a campaign CSV as an SVG line plot")
    r.add_argument("--in", dest="infile", required=True, metavar="CSV")
    r.add_argument("--svg", required=True)
    r.add_argument("--title", default="accuracy vs bit error rate")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: precondition: {exc}", file=sys.stderr)
        return 2
    except (IndexError, ValueError) as exc:
        print(f"error: precondition: {exc}", file=sys.stderr)
        return 2
    except (ContainerError, OSError) as exc:
        print(f"error: io: {exc}", file=sys.stderr)
        return 3


def entry() -> None:
    raise SystemExit(main(sys.argv[1:]))
