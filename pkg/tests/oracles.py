"""Brute-force reference implementations used as test oracles.

Everything here is written with plain Python loops and floats, independent
of the vectorized code paths under test.
"""

from __future__ import annotations

import math


def pearson_oracle(x, y):
    """Unclamped Pearson by direct summation; None when variance is zero."""
    n = len(x)
    mx = sum(x) / n
    my = sum(y) / n
    sxx = sum((a - mx) ** 2 for a in x)
    syy = sum((b - my) ** 2 for b in y)
    if sxx == 0.0 or syy == 0.0:
        return None
    sxy = sum((a - mx) * (b - my) for a, b in zip(x, y))
    return sxy / (math.sqrt(sxx) * math.sqrt(syy))


def class_average_oracle(deltas, labels):
    """Per-class componentwise means via explicit accumulation."""
    out = {}
    for c in sorted(set(labels)):
        rows = [row for row, lab in zip(deltas, labels) if lab == c]
        t = len(rows[0])
        out[c] = [sum(row[i] for row in rows) / len(rows) for i in range(t)]
    return out


def cld_scores_oracle(train_deltas, train_labels, val_deltas, val_labels, mode):
    """Per-row correlation against the matching validation mean; degenerate
    rows map to (0.0, True)."""
    per_class = class_average_oracle(val_deltas, val_labels)
    t = len(val_deltas[0])
    global_mean = [
        sum(row[i] for row in val_deltas) / len(val_deltas) for i in range(t)
    ]
    scores = []
    for row, lab in zip(train_deltas, train_labels):
        ref = global_mean if mode == "global" else per_class[lab]
        r = pearson_oracle(list(row), ref)
        if r is None:
            scores.append((0.0, True))
        else:
            scores.append((min(1.0, max(-1.0, r)), False))
    return scores


def cld_infl_oracle(a, b):
    """Nested-loop pairwise correlations; degenerate pairs are 0."""
    out = []
    for ra in a:
        row = []
        for rb in b:
            r = pearson_oracle(list(ra), list(rb))
            row.append(0.0 if r is None else min(1.0, max(-1.0, r)))
        out.append(row)
    return out


def topk_oracle(sample_ids, labels, scores, quotas):
    """Sort each whole class by (score desc, id asc), take the quota prefix."""
    chosen = []
    for c, kc in sorted(quotas.items()):
        members = [
            (sid, sc)
            for sid, lab, sc in zip(sample_ids, labels, scores)
            if lab == c
        ]
        members.sort(key=lambda t: (-t[1], t[0]))
        chosen += [sid for sid, _ in members[:kc]]
    return sorted(chosen)


def spearman_oracle(x, y):
    """Rank correlation via explicit average ranks."""

    def ranks(v):
        order = sorted(range(len(v)), key=lambda i: v[i])
        out = [0.0] * len(v)
        i = 0
        while i < len(v):
            j = i
            while j + 1 < len(v) and v[order[j + 1]] == v[order[i]]:
                j += 1
            for p in range(i, j + 1):
                out[order[p]] = 0.5 * (i + j) + 1.0
            i = j + 1
        return out

    return pearson_oracle(ranks(list(x)), ranks(list(y)))
