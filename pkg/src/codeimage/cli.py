"""Command-line entry point: ``codeimage <subcommand> ...``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from . import cnn, harness
from .corpus import write_synthetic_corpus
from .embed import HASHED, TRAINED, save_embedding
from .errors import CodeImageError
from .imagegen import BASE_ROWS, load_image, save_image
from .ingest import load_corpus, write_samples
from .oversample import DEFAULT_K

log = logging.getLogger("codeimage")

IMAGE_SUFFIX = ".vmcimg"


def _k_list(text: str) -> list[int]:
    try:
        values = [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad k list {text!r}") from None
    if not values or min(values) < 1:
        raise argparse.ArgumentTypeError("k values must be positive integers")
    return values


def _train_config(args) -> cnn.TrainConfig:
    return cnn.TrainConfig(
        batch_size=args.batch, learning_rate=args.lr, epochs=args.epochs,
        class_weighting=args.class_weighting,
    )


def _add_training(p: argparse.ArgumentParser, epochs: int = 100) -> None:
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--epochs", type=int, default=epochs)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--class-weighting", action="store_true", help="weight the loss by inverse class frequency")
    p.add_argument("--seed", type=int, default=0)


def _add_imaging(p: argparse.ArgumentParser) -> None:
    p.add_argument("--in", dest="input", required=True, help="corpus directory (<label>/<file> or manifest.csv)")
    p.add_argument("--rows", type=int, default=BASE_ROWS, help="base row count; images have rows*k rows")
    p.add_argument("--embed", choices=(TRAINED, HASHED), default=TRAINED)
    p.add_argument("--embed-epochs", type=int, default=5)
    p.add_argument("--workers", type=int, default=1)


def _structures(args) -> list[harness.Structure]:
    samples = load_corpus(args.input)
    log.info("loaded %d functions from %s", len(samples), args.input)
    return harness.analyze(samples, workers=args.workers)


def _config(args, k: int) -> harness.PipelineConfig:
    return harness.PipelineConfig(
        k=k, base_rows=args.rows, embed_mode=args.embed, embed_epochs=args.embed_epochs,
        num_folds=args.folds, seed=args.seed, train=_train_config(args),
    )


# -- subcommands --------------------------------------------------------------------


def cmd_generate(args) -> int:
    paths = write_synthetic_corpus(args.out, args.pairs, args.seed)
    print(f"wrote {len(paths)} files to {args.out}")
    return 0


def cmd_pipeline(args) -> int:
    out = Path(args.out)
    (out / "images").mkdir(parents=True, exist_ok=True)
    structures = _structures(args)
    samples = [st.sample for st in structures]
    model = harness.embedding_for(samples, args.embed, harness.derive_seed(args.seed, "embed"), args.embed_epochs)
    save_embedding(model, out / "embedding.vmcemb")
    embedder = harness.CachedEmbedder(model)
    write_samples(out / "samples.jsonl", samples)
    with open(out / "index.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", "label", "path", "lines", "rows", "populated_rows"])
        for st in structures:
            image = harness.image_for(st, embedder, args.k, args.rows)
            rel = f"images/{st.sample.id}{IMAGE_SUFFIX}"
            save_image(image, out / rel)
            writer.writerow([st.sample.id, st.sample.label, st.sample.origin.path,
                             st.sample.line_count, image.rows, image.populated_rows])
    print(f"wrote {len(structures)} images to {out / 'images'}")
    return 0


def _load_images(root: Path):
    folder = root / "images" if (root / "images").is_dir() else root
    paths = sorted(folder.glob(f"*{IMAGE_SUFFIX}"))
    if not paths:
        raise CodeImageError(f"no {IMAGE_SUFFIX} files under {root}")
    return sorted((load_image(p) for p in paths), key=lambda im: im.sample_id)


def cmd_train(args) -> int:
    images = _load_images(Path(args.images))
    config = harness.PipelineConfig(k=images[0].k, num_folds=args.folds, seed=args.seed, train=_train_config(args))
    folds = harness.evaluate_images(images, config)
    harness.write_fold_report(args.report, folds)
    for f in folds:
        harness.write_trace(harness.trace_path(args.report, f.fold), f.trace)
    mean = harness.mean_metrics([f.metrics for f in folds])
    print(" ".join(f"{name}={mean[name]:.3f}" for name in harness.METRIC_COLUMNS))
    return 0


def cmd_ksweep(args) -> int:
    table = harness.run_ksweep(_structures(args), args.k, _config(args, DEFAULT_K))
    harness.write_csv(args.report, table, ("k",) + harness.METRIC_COLUMNS)
    for row in table:
        print(f"k={row['k']} ACC={row['ACC']:.3f}")
    return 0


def cmd_repeat(args) -> int:
    rows = harness.run_repeated(_structures(args), args.repeats, _config(args, args.k))
    harness.write_csv(args.report, rows, ("repeat", "mean_acc", "std_acc"))
    summary = rows[-1]
    print(f"ACC {summary['mean_acc']:.3f} +/- {summary['std_acc']:.3f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="codeimage", description="Code-image vulnerability detection pipeline.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic paired corpus")
    p.add_argument("--pairs", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    for name in ("pipeline", "imagesize"):
        p = sub.add_parser(name, help="build code images for a corpus")
        _add_imaging(p)
        p.add_argument("--k", type=int, default=DEFAULT_K)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", required=True)
        p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("train", help="k-fold train/test on built images")
    p.add_argument("--images", required=True)
    p.add_argument("--report", required=True)
    _add_training(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("ksweep", help="evaluate several oversampling factors")
    _add_imaging(p)
    _add_training(p)
    p.add_argument("--k", type=_k_list, default=[1, 2, 3, 4, 5, 6, 7])
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_ksweep)

    p = sub.add_parser("repeat", help="repeat k-fold evaluation with fresh splits")
    _add_imaging(p)
    _add_training(p)
    p.add_argument("--k", type=int, default=DEFAULT_K)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_repeat)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CodeImageError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
