"""A walking tour of the CTC machinery on a lattice small enough to check by hand.

Run: python demos/ctc_basics.py
"""

import itertools
import math

import numpy as np

from cmatch import CharSet, LogProbLattice, ctc_forced_align, ctc_greedy_predict, ctc_loss

cs = CharSet.from_letters("ab")
print("character set:", cs.symbols, "blank at index", cs.blank_index)

# Two frames, vocab {blank, a}, everything uniform.  The paths that collapse
# to "a" are (a,a), (a,-), (-,a): three paths at probability 0.25 each.
uniform = LogProbLattice(np.log(np.full((2, 3), 1.0 / 3)))
loss, grad = ctc_loss(uniform, cs.to_indices("a"), cs)
print("\nuniform 2-frame lattice, transcript 'a':")
print("  loss          =", loss)
print("  -log(3 * 1/9) =", -math.log(3 / 9.0))
print("  gradient rows (d loss / d log-prob):")
print(np.round(grad, 4))

# The same number by brute force: enumerate every path.
total = 0.0
for path in itertools.product(range(3), repeat=2):
    collapsed = [s for i, s in enumerate(path) if s != 0 and (i == 0 or s != path[i - 1])]
    if collapsed == [1]:
        total += (1.0 / 3) ** 2
print("  brute-force path sum:", -math.log(total))

# Forced alignment picks the single best frame labeling for a transcript.
probs = np.array([
    [0.80, 0.15, 0.05],   # mostly blank
    [0.02, 0.95, 0.03],   # a, confidently
    [0.10, 0.80, 0.10],   # a again, hedged
    [0.02, 0.03, 0.95],   # b, confidently
])
lat = LogProbLattice(np.log(probs))
fla = ctc_forced_align(lat, cs.to_indices("ab"), cs)
print("\nforced alignment of 'ab' over 4 frames:")
print("  labels   :", [cs.symbols[i] for i in fla.labels])
print("  keep mask:", fla.keep_mask.tolist(), "(blanks are dropped)")

# Greedy prediction with the 0.9 confidence filter: only frames whose argmax
# clears the threshold (and is not blank) survive.
fla9 = ctc_greedy_predict(lat, 0.9, cs)
print("\ngreedy frame labels at threshold 0.9:")
for t in range(4):
    mark = "kept" if fla9.keep_mask[t] else "dropped"
    print(f"  frame {t}: {cs.symbols[fla9.labels[t]]!r} p={probs[t].max():.2f} -> {mark}")
