"""Brute-force reference implementations used only by the test suite.

Everything here trades efficiency for obviousness: exhaustive path
enumeration, O(n^2) double sums, and plain recursion.  None of it shares
code with the library being tested.
"""

import itertools
import math

import numpy as np


def collapse(path, blank):
    """Merge repeats, then drop blanks."""
    out = []
    prev = None
    for p in path:
        if p != prev and p != blank:
            out.append(p)
        prev = p
    return tuple(out)


def ctc_path_sum(log_probs, labels, blank):
    """log sum prob over all frame paths collapsing to ``labels``.

    Returns -inf when no path matches.  Enumerates all |V|^N paths.
    """
    n, v = log_probs.shape
    want = tuple(int(x) for x in labels)
    total = -math.inf
    for path in itertools.product(range(v), repeat=n):
        if collapse(path, blank) != want:
            continue
        lp = sum(log_probs[t, s] for t, s in enumerate(path))
        total = np.logaddexp(total, lp)
    return float(total)


def ctc_path_max(log_probs, labels, blank):
    """log prob of the single best path collapsing to ``labels``."""
    n, v = log_probs.shape
    want = tuple(int(x) for x in labels)
    best = -math.inf
    for path in itertools.product(range(v), repeat=n):
        if collapse(path, blank) != want:
            continue
        lp = sum(log_probs[t, s] for t, s in enumerate(path))
        best = max(best, lp)
    return float(best)


def random_lattice(rng, frames, vocab):
    """Random row-stochastic lattice in log space."""
    raw = rng.uniform(0.05, 1.0, size=(frames, vocab))
    raw /= raw.sum(axis=1, keepdims=True)
    return np.log(raw)


def mmd_sq_double_sum(xs, xt, kernel):
    """Biased squared MMD by direct double loops over all pairs."""
    m, n = len(xs), len(xt)
    a = sum(kernel(xs[i], xs[j]) for i in range(m) for j in range(m)) / (m * m)
    b = sum(kernel(xt[i], xt[j]) for i in range(n) for j in range(n)) / (n * n)
    c = sum(kernel(xs[i], xt[j]) for i in range(m) for j in range(n)) / (m * n)
    return max(a + b - 2.0 * c, 0.0)


def linear_kernel(x, y):
    return float(np.dot(x, y))


def rbf_kernel(bandwidth):
    def k(x, y):
        d = np.asarray(x) - np.asarray(y)
        return float(np.exp(-np.dot(d, d) / (2.0 * bandwidth * bandwidth)))
    return k


def edit_distance_recursive(ref, hyp):
    """Minimal edit count by exhaustive path search (no DP table).

    When the heads match, taking the match is always optimal, which keeps
    the recursion tractable; mismatches branch over all three edits.
    """
    if not ref:
        return len(hyp)
    if not hyp:
        return len(ref)
    if ref[0] == hyp[0]:
        return edit_distance_recursive(ref[1:], hyp[1:])
    sub = edit_distance_recursive(ref[1:], hyp[1:])
    dele = edit_distance_recursive(ref[1:], hyp)
    ins = edit_distance_recursive(ref, hyp[1:])
    return 1 + min(sub, dele, ins)


def all_label_sequences(symbols, max_len):
    """All blank-free index sequences up to ``max_len`` (includes empty)."""
    for length in range(max_len + 1):
        yield from itertools.product(symbols, repeat=length)
