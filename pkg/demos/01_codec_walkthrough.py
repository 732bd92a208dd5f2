"""Encoding entities as a word-pair grid and reading them back."""

from gridner import Entity, LabelSet, Sentence, decode_grid, encode_grid
from gridner.codec import format_grid_dump, render_grid

# Two discontinuous symptoms share the words "aching in".
tokens = ("I", "am", "having", "aching", "in", "legs", "and", "shoulders")
sentence = Sentence(tokens, (Entity((3, 4, 5), "Symptom"), Entity((3, 4, 7), "Symptom")))
labels = LabelSet(("Symptom",))

# Upper triangle: NNW links each word to the next word of the same mention.
# Lower triangle: THW marks the (tail, head) cell and carries the type.
grid = encode_grid(sentence, labels)
print(render_grid(grid, labels, tokens))

print("dump format, one line per non-empty cell:")
print(format_grid_dump(grid, labels, tokens))

# Decoding follows NNW paths from every head up to the tail named by a THW cell.
for e in decode_grid(grid, labels):
    print(e.etype, [tokens[i] for i in e.indices])

# A nested mention and a crossing pair decode just as cleanly.
X = LabelSet(("X",))
nested = Sentence(tuple("ABCDE"), (Entity((0, 1, 2), "X"), Entity((1, 2), "X")))
crossing = Sentence(tuple("ABCDE"), (Entity((0, 2, 3), "X"), Entity((1, 2, 4), "X")))
for s in (nested, crossing):
    back = decode_grid(encode_grid(s, X), X)
    print("".join(s.tokens), "->", ["".join(s.tokens[i] for i in e.indices) for e in back])
