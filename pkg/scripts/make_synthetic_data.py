"""Generate the synthetic corpora used by the experiments, as text,label CSVs.

Example:
    python3 scripts/make_synthetic_data.py marker --n-docs 200 --n-classes 2 --out train.csv
"""

import argparse
import sys

from descnet.synth import buried_signal_corpus, marker_corpus, news_like_corpus, write_csv


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("kind", choices=("marker", "buried", "news"))
    parser.add_argument("--n-docs", type=int, default=200)
    parser.add_argument("--n-classes", type=int, default=4)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", required=True)
    args = parser.parse_args(argv)

    if args.kind == "marker":
        rows, names = marker_corpus(args.n_docs, n_classes=args.n_classes, seed=args.seed)
    elif args.kind == "buried":
        rows, names = buried_signal_corpus(args.n_docs, n_classes=args.n_classes, seed=args.seed)
    else:
        rows, names = news_like_corpus(args.n_docs, n_classes=args.n_classes, seed=args.seed)
    write_csv(rows, args.out)
    print(f"wrote {args.n_docs} documents to {args.out}; labels: {','.join(names)}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
