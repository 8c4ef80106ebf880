"""Brute-force reference implementations used to check the library.

Each oracle recomputes a quantity from first principles with plain loops
over raw triples or items, sharing no code with the package.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def scan_context(triples, pair):
    """(middle, subject-side, object-side) relation-name sets by full scan."""
    s, o = pair
    middle = {r for (a, r, b) in triples if a == s and b == o}
    subj = {r for (a, r, b) in triples if a == s and b != o}
    obj = {r for (a, r, b) in triples if b == o and a != s}
    return middle, subj, obj


def join_parallel(source_triples, target_triples):
    """Nested-loop join of entity pairs present in both triple lists."""
    out = {}
    for a, _, b in source_triples:
        for c, r, d in target_triples:
            if a == c and b == d:
                out.setdefault((a, b), set()).add(r)
    return out


def count_source_given_target(source_triples, labeled_pairs):
    """P(r | r') = #pairs with r and r' / #pairs with r', from raw lists."""
    raw = {}
    targets = sorted({t for _, gold in labeled_pairs for t in gold})
    for t in targets:
        with_t = [pair for pair, gold in labeled_pairs if t in gold]
        for r in sorted({r for (_, r, _) in source_triples}):
            hits = 0
            for pair in with_t:
                if any(a == pair[0] and b == pair[1] and rr == r for (a, rr, b) in source_triples):
                    hits += 1
            if hits:
                raw[(t, r)] = hits / len(with_t)
    return raw


def bm25_exhaustive(docs, query, k1=1.2, b=0.75):
    """Score every document from scratch; documents and query are token lists."""
    n = len(docs)
    avg = sum(len(d) for d in docs) / n
    scores = []
    for d in docs:
        total = 0.0
        for tok in query:
            df = sum(1 for other in docs if tok in other)
            if df == 0:
                continue
            idf = math.log(1 + (n - df + 0.5) / (df + 0.5))
            tf = d.count(tok)
            total += idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * len(d) / avg))
        scores.append(total)
    return scores


def top_k(scores, k):
    ranked = sorted((i for i, s in enumerate(scores) if s > 0), key=lambda i: (-scores[i], i))
    return ranked[:k]


def step_sum_ap(scores, labels):
    """Average precision over distinct thresholds, from counts at each cut."""
    n_gold = sum(labels)
    total = 0.0
    prev_rec = 0.0
    for t in sorted(set(scores), reverse=True):
        kept = [y for s, y in zip(scores, labels) if s >= t]
        prec = sum(kept) / len(kept)
        rec = sum(kept) / n_gold
        total += prec * (rec - prev_rec)
        prev_rec = rec
    return total


def pr_points(scores, labels):
    n_gold = sum(labels)
    out = []
    for t in sorted(set(scores), reverse=True):
        kept = [y for s, y in zip(scores, labels) if s >= t]
        out.append((sum(kept) / len(kept), sum(kept) / n_gold))
    return out


def best_labeling(probs):
    """Exhaustive argmax of prod p^y (1-p)^(1-y) over all 0/1 labelings."""
    best, best_score = None, -np.inf
    for ys in itertools.product((0, 1), repeat=len(probs)):
        score = sum(math.log(p) if y else math.log(1 - p) for p, y in zip(probs, ys))
        if score > best_score:
            best, best_score = ys, score
    return {i for i, y in enumerate(best) if y}


def central_differences(f, arrays, h=1e-4):
    """Numerical gradient of scalar f() w.r.t. each array, perturbed in place."""
    grads = []
    for a in arrays:
        g = np.zeros_like(a)
        it = np.nditer(a, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            keep = a[idx]
            a[idx] = keep + h
            up = f()
            a[idx] = keep - h
            down = f()
            a[idx] = keep
            g[idx] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def adamw_reference(w, g, steps, lr=0.01, b1=0.9, b2=0.999, eps=1e-8, wd=0.01):
    """Scalar AdamW written out term by term."""
    m = v = 0.0
    for t in range(1, steps + 1):
        w = w - lr * wd * w
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        w = w - lr * m_hat / (math.sqrt(v_hat) + eps)
    return w


def gradient_check(arrays, loss_fn, analytic, h=1e-4):
    """Max elementwise relative error between analytic and central-difference gradients.

    ``loss_fn()`` evaluates the loss at the current (in-place perturbed)
    arrays. Relative error is |a - n| / max(|a|, |n|, 1e-6).
    """
    numeric = central_differences(loss_fn, arrays, h)
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-6)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


def gradcheck_draw(seed, arity, variant, n_source=7, n_target=5, batch_size=4):
    """One random parameter/input draw; returns the max relative gradient error."""
    from relint.neural import ModelParams, loss_and_grads

    rng = np.random.default_rng(seed)
    params = ModelParams.init(
        n_source, n_target, arity, dim=4, hidden=(6,), n_target=n_target if arity == 6 else 0, seed=seed
    )
    params.biases[0][:] = rng.normal(0.0, 0.1, params.biases[0].shape)
    batch = [
        [sorted(rng.choice(params.n_rows, size=rng.integers(0, 4), replace=False).tolist()) for _ in range(arity)]
        for _ in range(batch_size)
    ]
    golds = [frozenset(rng.choice(n_target, size=rng.integers(1, 3), replace=False).tolist()) for _ in range(batch_size)]
    _, grads = loss_and_grads(params, batch, golds, variant=variant)
    arrays = list(params.arrays().values())
    return gradient_check(
        arrays, lambda: loss_and_grads(params, batch, golds, variant=variant)[0], list(grads.arrays().values())
    )
