#!/usr/bin/env python3
"""Reference evaluation of the amplitude engine, written independently of the
Rust implementation. Used once to compute the frozen expected values in the
test suite; re-run with `python3 reference.py` to regenerate them.

Everything here is direct formula evaluation with plain loops.
"""

import json
import math
import os
import sys

HERE = os.path.dirname(os.path.abspath(__file__))
FIXTURES = os.path.join(HERE, "..", "..", "fixtures")
DATA = os.path.join(HERE, "..", "data")

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
MASK = (1 << 64) - 1


def fnv1a(data: bytes) -> int:
    h = FNV_OFFSET
    for b in data:
        h ^= b
        h = (h * FNV_PRIME) & MASK
    return h


def tokens(text):
    out, cur = [], []
    for ch in text:
        if ch.isalnum():
            cur.append(ch)
        elif cur:
            out.append("".join(cur).lower())
            cur = []
    if cur:
        out.append("".join(cur).lower())
    return out


def embed(text, dim=256):
    v = [0.0] * dim
    for t in tokens(text):
        h = fnv1a(t.encode("utf-8"))
        v[h % dim] += -1.0 if (h >> 63) & 1 else 1.0
    n = math.sqrt(sum(x * x for x in v))
    return [x / n for x in v]


def cos(a, b):
    return max(-1.0, min(1.0, sum(x * y for x, y in zip(a, b))))


MARKS = {"check": 1.0, "cross": -1.0, "ambiguous": 0.0}


def load(path):
    with open(path) as f:
        case = json.load(f)
    for o in case["observations"]:
        o["overrides"] = {
            k: (MARKS[v] if isinstance(v, str) else float(v))
            for k, v in o.get("overrides", {}).items()
        }
    return case


def interference(case):
    hs = case["hypotheses"]
    n = len(hs)
    theta = case["config"]["interference_offset"]
    emb = [embed(h["statement"], case["config"]["embed_dim"]) for h in hs]
    m = [[0.0] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            if i != j:
                m[i][j] = max(-1.0, min(1.0, cos(emb[i], emb[j]) - theta))
    for ov in case.get("interference_overrides", []):
        i, j = ov["i"] - 1, ov["j"] - 1
        m[i][j] = m[j][i] = ov["value"]
    return m


def step(alpha, e, inter, eta):
    n = len(alpha)
    raw = []
    for i in range(n):
        s = 0.0
        for k in range(n):
            if k != i:
                s += inter[i][k] * alpha[k]
        raw.append(alpha[i] + eta * (e[i] + s))
    norm = math.sqrt(sum(x * x for x in raw))
    return [x / norm for x in raw]


def collapse(alpha, inter, cfg):
    n = len(alpha)
    sq = [a * a for a in alpha]
    top = max(sq)
    if top >= cfg["collapse_threshold"]:
        return ("dominant", [sq.index(top)])
    s = [i for i in range(n) if sq[i] >= cfg["hybrid_ratio"] * top]
    if len(s) >= 2 and all(inter[a][b] > 0 for a in s for b in s if a != b):
        return ("hybrid", s)
    return ("deferred", [i for i in range(n) if sq[i] > 1.0 / n - 1e-9])


def run(case, stop_on_collapse=True):
    hs = case["hypotheses"]
    n = len(hs)
    emb_h = [embed(h["statement"], case["config"]["embed_dim"]) for h in hs]
    inter = interference(case)
    cfg = case["config"]
    alpha = [1.0 / math.sqrt(n)] * n
    history = [list(alpha)]
    outcome = collapse(alpha, inter, cfg) if not case["observations"] else None
    for o in case["observations"]:
        e = []
        for i, h in enumerate(hs):
            if h["id"] in o["overrides"]:
                p = o["overrides"][h["id"]]
            else:
                p = cos(emb_h[i], embed(o["statement"], cfg["embed_dim"]))
            e.append(o["weight"] * p)
        alpha = step(alpha, e, inter, cfg["eta"])
        history.append(list(alpha))
        outcome = collapse(alpha, inter, cfg)
        if stop_on_collapse and outcome[0] != "deferred":
            break
    return alpha, history, outcome


def row_scan(path):
    with open(path) as f:
        lines = [l.strip().split(",") for l in f if l.strip()]
    survivors = []
    for row in lines[1:]:
        if "-" not in row[1:]:
            survivors.append(row[0])
    return survivors


def main():
    print("# FNV-1a freeze: token -> (index mod 256, sign)")
    words = [
        "dna", "alpha", "beta", "gamma", "nuclear", "mitochondrial", "haplotype",
        "suicide", "murder", "struggle", "seizure", "drowning", "botulism",
        "paralysis", "continents", "drift", "fixism", "court", "ruling", "h1",
    ]
    for w in words:
        h = fnv1a(w.encode())
        print(f'("{w}", {h % 256}, {-1 if (h >> 63) & 1 else 1}),  // {h:#018x}')

    a, b = embed("alpha"), embed("beta")
    print("cos(alpha, beta) =", cos(a, b))

    print("# step examples")
    s = 1 / math.sqrt(2)
    print(step([s, s], [1, 0], [[0, 0], [0, 0]], 0.1))
    print(step([0.8, 0.6], [0, 0], [[0, 0.5], [0.5, 0]], 0.1))

    for name in ["ludwig", "bossetti", "medical", "drift"]:
        case = load(os.path.join(FIXTURES, name + ".json"))
        inter = interference(case)
        print(f"# {name} interference")
        for row in inter:
            print("  ", [round(x, 6) for x in row])
        for stop in (True, False):
            alpha, hist, out = run(case, stop)
            print(f"# {name} stop={stop} steps={len(hist) - 1} outcome={out}")
            print("   final", [repr(x) for x in alpha])
            print("   min |a| over steps", min(min(abs(x) for x in h) for h in hist))
            sq = [x * x for x in alpha]
            print("   argmax", sq.index(max(sq)) + 1, "coherence", max(sq))

    case = load(os.path.join(FIXTURES, "bossetti.json"))
    case["observations"] = [o for o in case["observations"] if o["id"] != "O7"]
    alpha, _, out = run(case, False)
    print("# bossetti without O7 final", [repr(x) for x in alpha], out)

    w = load(os.path.join(DATA, "order_witness.json"))
    ab, _, _ = run(w, False)
    w["observations"].reverse()
    ba, _, _ = run(w, False)
    print("# order witness (a,b)", [repr(x) for x in ab])
    print("# order witness (b,a)", [repr(x) for x in ba])

    print("# row scan survivors")
    print("  ludwig", row_scan(os.path.join(DATA, "ludwig_marks.csv")))
    print("  bossetti", row_scan(os.path.join(DATA, "bossetti_marks.csv")))

    # one observation (+1, -1, -1) repeated until coherence >= 0.6
    alpha = [1 / math.sqrt(3)] * 3
    zero = [[0.0] * 3 for _ in range(3)]
    steps = 0
    while max(x * x for x in alpha) < 0.6:
        alpha = step(alpha, [1.0, -1.0, -1.0], zero, 0.1)
        steps += 1
    print("# repeated (+1,-1,-1): steps", steps, [repr(x) for x in alpha])


if __name__ == "__main__":
    sys.exit(main())
