#!/usr/bin/env python3
"""From-definition corpus BLEU and chrF over seeded random corpora.

BLEU: whitespace tokens, clipped n-gram matches for n = 1..4 summed over the
corpus, orders with no hypothesis n-grams left out, geometric mean times the
brevity penalty exp(1 - r/c) when c <= r.
chrF: whitespace removed, character n-grams n = 1..6, corpus-level precision
and recall per order, averaged over orders present on both sides, F-beta with
beta = 2, times 100.
Writes textdiv_cases.json next to this script."""
import json
import math
import random
from collections import Counter
from pathlib import Path


def ngrams(seq, n):
    return Counter(tuple(seq[i:i + n]) for i in range(len(seq) - n + 1))


def bleu(hyps, refs, max_order=4):
    match = [0] * (max_order + 1)
    total = [0] * (max_order + 1)
    c = r = 0
    for h, ref in zip(hyps, refs):
        ht, rt = h.split(), ref.split()
        c += len(ht)
        r += len(rt)
        for n in range(1, max_order + 1):
            hc, rc = ngrams(ht, n), ngrams(rt, n)
            total[n] += sum(hc.values())
            match[n] += sum(min(v, rc[g]) for g, v in hc.items())
    if c == 0:
        return 0.0
    logs = []
    for n in range(1, max_order + 1):
        if total[n] == 0:
            continue
        if match[n] == 0:
            return 0.0
        logs.append(math.log(match[n] / total[n]))
    if not logs:
        return 0.0
    bp = 1.0 if c > r else math.exp(1 - r / c)
    return bp * math.exp(sum(logs) / len(logs))


def chrf(hyps, refs, order=6, beta=2.0):
    match = [0] * (order + 1)
    htot = [0] * (order + 1)
    rtot = [0] * (order + 1)
    for h, ref in zip(hyps, refs):
        hc_ = [ch for ch in h if not ch.isspace()]
        rc_ = [ch for ch in ref if not ch.isspace()]
        for n in range(1, order + 1):
            hc, rc = ngrams(hc_, n), ngrams(rc_, n)
            htot[n] += sum(hc.values())
            rtot[n] += sum(rc.values())
            match[n] += sum(min(v, rc[g]) for g, v in hc.items())
    ps, rs = [], []
    for n in range(1, order + 1):
        if htot[n] and rtot[n]:
            ps.append(match[n] / htot[n])
            rs.append(match[n] / rtot[n])
    if not ps:
        return 0.0
    p, r = sum(ps) / len(ps), sum(rs) / len(rs)
    b2 = beta * beta
    if b2 * p + r == 0:
        return 0.0
    return 100 * (1 + b2) * p * r / (b2 * p + r)


def main() -> None:
    rng = random.Random(99)
    vocab = ["the", "cat", "sat", "on", "mat", "a", "dog", "ran", "über", "naïve", "x", "y"]
    cases = []
    for _ in range(50):
        m = rng.randint(1, 6)
        hyps, refs = [], []
        for _ in range(m):
            base = [rng.choice(vocab) for _ in range(rng.randint(1, 12))]
            hyp = [w if rng.random() < 0.7 else rng.choice(vocab) for w in base]
            if rng.random() < 0.3:
                hyp = hyp[: max(1, len(hyp) - rng.randint(0, 3))]
            hyps.append(" ".join(hyp))
            refs.append(" ".join(base))
        cases.append({"hyps": hyps, "refs": refs, "bleu": bleu(hyps, refs), "chrf": chrf(hyps, refs)})
    fixed = [{"hyps": ["the cat sat"], "refs": ["the cat sat down"]}]
    for f in fixed:
        f["bleu"] = bleu(f["hyps"], f["refs"])
        f["chrf"] = chrf(f["hyps"], f["refs"])
    path = Path(__file__).resolve().parent / "textdiv_cases.json"
    path.write_text(json.dumps({"random": cases, "fixed": fixed}, ensure_ascii=False, indent=1) + "\n",
                    encoding="utf-8")


if __name__ == "__main__":
    main()
