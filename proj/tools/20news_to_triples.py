#!/usr/bin/env python3
"""Write 20 Newsgroups as triples, labels and vocabulary for `wgae ingest`.

Headers, footers and quotes are stripped; the vocabulary keeps the 2000 most
frequent non-stopword terms. Documents left empty by pruning are dropped
because the cosine graph is undefined for them.
"""
import argparse
import pathlib

from sklearn.datasets import fetch_20newsgroups
from sklearn.feature_extraction.text import CountVectorizer


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("dst", type=pathlib.Path)
    ap.add_argument("--vocab-size", type=int, default=2000)
    args = ap.parse_args()
    args.dst.mkdir(parents=True, exist_ok=True)

    corpus = fetch_20newsgroups(subset="all", remove=("headers", "footers", "quotes"))
    vectorizer = CountVectorizer(stop_words="english", max_features=args.vocab_size, token_pattern=r"(?u)\b[a-zA-Z]{2,}\b")
    x = vectorizer.fit_transform(corpus.data).tocsr()
    keep = [i for i in range(x.shape[0]) if x[i].nnz > 0]

    with open(args.dst / "features.tsv", "w") as out:
        out.write(f"# nodes {len(keep)} vocab {x.shape[1]}\n")
        for node, row in enumerate(keep):
            r = x[row]
            for term, count in sorted(zip(r.indices, r.data)):
                out.write(f"{node}\t{term}\t{count}\n")
    with open(args.dst / "labels.txt", "w") as out:
        for node, row in enumerate(keep):
            out.write(f"{node} {corpus.target_names[corpus.target[row]]}\n")
    (args.dst / "vocab.txt").write_text("".join(w + "\n" for w in vectorizer.get_feature_names_out()))


if __name__ == "__main__":
    main()
