"""Writes the toy parameter files used by toy.ini (deterministic, seed 2024)."""

import json
import random
from pathlib import Path

AA = "ACDEFGHIKLMNPQRSTVWY"
WT = "MKTAYI"
L, V = len(WT), len(AA)
here = Path(__file__).parent
rng = random.Random(2024)


def r(x):
    return round(x, 6)


h = [r(rng.gauss(0, 0.3)) for _ in range(L * V)]
J = [r(rng.gauss(0, 0.3)) for _ in range(L * L * V * V)]
(here / "potts.json").write_text(
    json.dumps({"format": "potts", "tokens": AA, "L": L, "V": V, "h": h, "J": J}, separators=(",", ":")) + "\n")

truth = [r(rng.gauss(0, 1)) for _ in range(L * V)]
(here / "linear.json").write_text(
    json.dumps({"format": "linear", "tokens": AA, "L": L, "V": V, "w": truth, "b": 0.0}, separators=(",", ":")) + "\n")


def activity(seq):
    return sum(truth[i * V + AA.index(c)] for i, c in enumerate(seq))


rows = [(WT, activity(WT))]
seen = {WT}
while len(rows) < 80:
    s = list(WT)
    for _ in range(rng.choice([1, 1, 2, 3])):
        s[rng.randrange(L)] = rng.choice(AA)
    s = "".join(s)
    if s in seen:
        continue
    seen.add(s)
    rows.append((s, activity(s) + rng.gauss(0, 0.1)))
with open(here / "labeled.csv", "w") as f:
    f.write("sequence,activity\n")
    for s, a in rows:
        f.write(f"{s},{a:.6f}\n")

(here / "wt.fasta").write_text(">toy wild type\n" + WT + "\n")
