"""Edit-distance scoring: substitution/insertion/deletion counts, CER, WER.

CER runs over characters, WER over whitespace-split tokens; both divide
the minimal edit count by the reference length.  An empty reference has
no defined rate and is reported as None rather than raising.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence


@dataclass(frozen=True)
class EditCounts:
    substitutions: int
    insertions: int
    deletions: int

    @property
    def total(self) -> int:
        return self.substitutions + self.insertions + self.deletions

    def rate(self, ref_len: int) -> float | None:
        """(S+I+D)/ref_len; None when the reference is empty."""
        if ref_len == 0:
            return None
        return self.total / ref_len


def levenshtein(ref: Sequence, hyp: Sequence) -> EditCounts:
    """Minimal edit counts turning ``ref`` into ``hyp``.

    Deletions are reference tokens missing from the hypothesis;
    insertions are hypothesis tokens absent from the reference.  Ties
    between decompositions of equal total cost are broken
    deterministically (substitution, then deletion, then insertion).
    """
    n, m = len(ref), len(hyp)
    # cell: (total, subs, ins, dels); lexicographic min is deterministic
    prev = [(j, 0, j, 0) for j in range(m + 1)]
    for i in range(1, n + 1):
        cur = [(i, 0, 0, i)]
        for j in range(1, m + 1):
            if ref[i - 1] == hyp[j - 1]:
                t, s, a, d = prev[j - 1]
                cur.append((t, s, a, d))
                continue
            t, s, a, d = prev[j - 1]
            best = (t + 1, s + 1, a, d)          # substitute
            t, s, a, d = prev[j]
            cand = (t + 1, s, a, d + 1)          # delete from ref
            if cand < best:
                best = cand
            t, s, a, d = cur[j - 1]
            cand = (t + 1, s, a + 1, d)          # insert from hyp
            if cand < best:
                best = cand
            cur.append(best)
        prev = cur
    total, subs, ins, dels = prev[m]
    assert total == subs + ins + dels
    return EditCounts(substitutions=subs, insertions=ins, deletions=dels)


def char_error_rate(ref: str, hyp: str) -> float | None:
    return levenshtein(ref, hyp).rate(len(ref))


def word_error_rate(ref: str, hyp: str) -> float | None:
    ref_tokens = ref.split()
    return levenshtein(ref_tokens, hyp.split()).rate(len(ref_tokens))


def corpus_error_rates(pairs: Sequence[tuple[str, str]]) -> tuple[float | None, float | None]:
    """Aggregate (CER, WER) over (ref, hyp) pairs: total edits / total length."""
    c_err = c_len = w_err = w_len = 0
    for ref, hyp in pairs:
        c_err += levenshtein(ref, hyp).total
        c_len += len(ref)
        rt = ref.split()
        w_err += levenshtein(rt, hyp.split()).total
        w_len += len(rt)
    cer = c_err / c_len if c_len else None
    wer = w_err / w_len if w_len else None
    return cer, wer
