"""Writes word2vec-style embedding files the way word2vec.c does
(fprintf for the header and words, fwrite of raw float32 for vectors)."""
import struct

WORDS = ["</s>", "the", "king", "queen", "été"]
DIM = 3
VECS = [[0.0, 0.5, -0.25], [1.0, -1.0, 0.125], [0.1, 0.2, 0.3], [-3.5, 2.0, 1e-3], [7.0, 0.0, -0.0625]]

with open("golden.bin", "wb") as f:
    f.write(b"%d %d\n" % (len(WORDS), DIM))
    for w, v in zip(WORDS, VECS):
        f.write(w.encode() + b" ")
        f.write(struct.pack("<%df" % DIM, *v))
        f.write(b"\n")

with open("golden_crlf.txt", "wb") as f:
    f.write(b"%d %d\r\n" % (len(WORDS), DIM))
    for w, v in zip(WORDS, VECS):
        f.write(w.encode() + b" " + " ".join("%.6f" % x for x in v).encode() + b" \r\n")

with open("golden_values.txt", "w") as f:
    for w, v in zip(WORDS, VECS):
        f.write(w + " " + " ".join(repr(struct.unpack("<f", struct.pack("<f", x))[0]) for x in v) + "\n")
