"""Regenerates reference_linear.json and conformance.txt.

Independent of the C++ code: responses are computed here from the model
definition and serialized with compact separators, which matches the
byte layout of the C++ serializer for the values used (multiples of 1/4).
"""
import json
from pathlib import Path

HERE = Path(__file__).parent
TOKENS = "YWVTSRQPNMLKIHGFEDCA"
L, V = 3, len(TOKENS)
W = [((7 * i + 3 * a) % 11 - 5) / 4 for i in range(L) for a in range(V)]
B = 0.5


def dump(obj):
    return json.dumps(obj, separators=(",", ":"))


def score(seqs):
    return [B + sum(W[i * V + t] for i, t in enumerate(s)) for s in seqs]


def ok_scores(rid, seqs):
    return dump({"id": rid, "ok": True, "values": score(seqs), "grads": [W for _ in seqs]})


def err(rid, msg):
    return dump({"id": rid, "ok": False, "error": msg})


pairs = []


def case(title, request, response):
    pairs.append((title, request, response))


case("handshake", dump({"id": 1, "op": "info"}),
     dump({"id": 1, "ok": True, "L": L, "V_model": V, "tokens": TOKENS}))
seqs = [[0, 0, 0], [19, 19, 19], [1, 2, 3], [5, 10, 15], [19, 0, 7], [4, 4, 4], [12, 3, 18]]
for k, s in enumerate(seqs):
    rid = 2 + k
    case(f"single sequence {s}", dump({"id": rid, "op": "score_and_grad", "sequences": [s]}),
         ok_scores(rid, [s]))
case("batch of two", dump({"id": 20, "op": "score_and_grad", "sequences": [[0, 1, 2], [3, 4, 5]]}),
     ok_scores(20, [[0, 1, 2], [3, 4, 5]]))
batch3 = [[9, 8, 7], [6, 5, 4], [3, 2, 1]]
case("batch of three", dump({"id": 21, "op": "score_and_grad", "sequences": batch3}), ok_scores(21, batch3))
case("id zero", dump({"id": 0, "op": "score_and_grad", "sequences": [[2, 2, 2]]}), ok_scores(0, [[2, 2, 2]]))
case("large id", dump({"id": 9007199254740993, "op": "info"}),
     dump({"id": 9007199254740993, "ok": True, "L": L, "V_model": V, "tokens": TOKENS}))
case("token index equal to V_model", dump({"id": 30, "op": "score_and_grad", "sequences": [[0, 20, 0]]}),
     err(30, "token index 20 >= V_model 20 at sequence 0 position 1"))
case("negative token index", dump({"id": 31, "op": "score_and_grad", "sequences": [[0, 0, -1]]}),
     err(31, "token index -1 >= V_model 20 at sequence 0 position 2"))
case("bad index in second batch item",
     dump({"id": 32, "op": "score_and_grad", "sequences": [[0, 0, 0], [25, 0, 0]]}),
     err(32, "token index 25 >= V_model 20 at sequence 1 position 0"))
case("wrong length", dump({"id": 33, "op": "score_and_grad", "sequences": [[0, 0]]}),
     err(33, "sequence 0 has length 2, expected L 3"))
case("empty batch", dump({"id": 34, "op": "score_and_grad", "sequences": []}), err(34, "empty batch"))
case("malformed JSON", '{"id":35,"op":', err(-1, "malformed JSON record"))
case("not an object", "[1,2,3]", err(-1, "record is not a JSON object"))
case("missing id", dump({"op": "info"}), err(-1, "missing integer id"))
case("unknown op", dump({"id": 36, "op": "train"}), err(-1, "unknown op 'train'"))
case("missing op", dump({"id": 37}), err(-1, "missing op"))
case("missing sequences", dump({"id": 38, "op": "score_and_grad"}),
     err(-1, "score_and_grad needs a sequences array"))
case("non-integer tokens", dump({"id": 39, "op": "score_and_grad", "sequences": [["A", "C", "D"]]}),
     err(-1, "sequences must be lists of integers"))
case("shutdown", dump({"id": 40, "op": "shutdown"}), dump({"id": 40, "ok": True}))

model = {"format": "linear", "tokens": TOKENS, "L": L, "V": V, "w": W, "b": B}
(HERE / "reference_linear.json").write_text(dump(model) + "\n")
with open(HERE / "conformance.txt", "w") as f:
    f.write("# Golden request/response pairs for reference_linear.json.\n")
    f.write("# '>' lines are sent verbatim; '<' lines are the exact expected reply.\n")
    f.write("# Pairs are replayed in order over one connection.\n")
    for title, req, res in pairs:
        f.write(f"\n# {title}\n> {req}\n< {res}\n")
print(len(pairs), "pairs")
