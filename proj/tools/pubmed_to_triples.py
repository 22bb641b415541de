#!/usr/bin/env python3
"""Convert the Pubmed-Diabetes tables into the triples layout read by `wgae ingest`.

Each nonzero TF-IDF weight becomes a count of 1, so documents are word-presence
vectors like the other citation datasets.
"""
import argparse
import pathlib


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("src", type=pathlib.Path, help="directory with Pubmed-Diabetes.NODE.paper.tab")
    ap.add_argument("dst", type=pathlib.Path)
    args = ap.parse_args()
    args.dst.mkdir(parents=True, exist_ok=True)

    lines = (args.src / "Pubmed-Diabetes.NODE.paper.tab").read_text().splitlines()
    # line 0: "NO_FEATURES"; line 1: "cat=... numeric:w-word:0.0 ... summary"
    words = [f.split(":")[1] for f in lines[1].split("\t") if f.startswith("numeric:")]
    index = {w: i for i, w in enumerate(words)}
    ids, entries, labels = {}, [], []
    for line in lines[2:]:
        fields = line.split("\t")
        if len(fields) < 2:
            continue
        node = ids.setdefault(fields[0], len(ids))
        labels.append((node, fields[1].split("=")[1]))
        for f in fields[2:]:
            if "=" not in f or f.startswith("summary"):
                continue
            word, value = f.split("=")
            if word in index and float(value) > 0:
                entries.append((node, index[word]))

    with open(args.dst / "features.tsv", "w") as out:
        out.write(f"# nodes {len(ids)} vocab {len(words)}\n")
        for node, term in sorted(entries):
            out.write(f"{node}\t{term}\t1\n")
    with open(args.dst / "labels.txt", "w") as out:
        for node, label in labels:
            out.write(f"{node} {label}\n")
    (args.dst / "vocab.txt").write_text("".join(w.removeprefix("w-") + "\n" for w in words))

    cites = (args.src / "Pubmed-Diabetes.DIRECTED.cites.tab").read_text().splitlines()
    with open(args.dst / "edges.tsv", "w") as out:
        for line in cites[2:]:
            fields = line.split("\t")
            if len(fields) != 4:
                continue
            a, b = fields[1].split(":")[1], fields[3].split(":")[1]
            if a in ids and b in ids and a != b:
                out.write(f"{ids[a]}\t{ids[b]}\n")
    with open(args.dst / "ids.txt", "w") as out:
        for pid in ids:
            out.write(pid + "\n")


if __name__ == "__main__":
    main()
