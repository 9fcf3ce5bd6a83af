"""Head-importance study: train briefly, then re-evaluate with each
attention head silenced in turn and report the perplexity change.

The per-layer standard deviation of those changes is the dispersion
statistic; --ref compares a second model's dispersion row by row.
"""

import argparse

import numpy as np

from memxl import run_prune_experiment
from memxl.data import load_corpus
from memxl.train import load_model


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("checkpoint", help="model checkpoint from `memxl train`")
    parser.add_argument("corpus", help="text file to score")
    parser.add_argument("--context", type=int, default=32)
    parser.add_argument("--block", type=int, default=16)
    parser.add_argument("--ref", help="comma-separated per-layer stddevs to compare against")
    args = parser.parse_args()

    model, vocab = load_model(args.checkpoint)
    corpus = load_corpus(args.corpus, "char", vocab=vocab)
    reference = None
    if args.ref is not None:
        reference = np.array([float(v) for v in args.ref.split(",")])

    report = run_prune_experiment(model, corpus.ids, args.context, args.block, reference)
    print(report.table())


if __name__ == "__main__":
    main()
