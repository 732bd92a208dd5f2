"""Training on a small synthetic corpus and looking at the predictions."""

from gridner import LabelSet, ModelConfig, SynthSpec, TrainConfig, build_vocab, gen_synthetic, train_epochs
from gridner.train import predict_entities

train = gen_synthetic(SynthSpec(n_sentences=200, max_len=12, seed=0))
dev = gen_synthetic(SynthSpec(n_sentences=40, max_len=12, seed=1))
labels = LabelSet(("PER", "LOC", "SYM"))
vocab = build_vocab(train)
print(f"{len(train)} training sentences, vocabulary of {len(vocab)}")

cfg = ModelConfig(vocab_size=len(vocab), relation_count=labels.relation_count, d_word=32, d_h=64, d_c=32,
                  d_biaffine=32, d_mlp=64, dropout_p=0.1)
tc = TrainConfig(learning_rate=3e-3, epochs=15, seed=0)

# Entity words are drawn per type, but span boundaries are random, so dev F1 stays modest.
# Fitting the training set itself is the meaningful check here (see the acceptance suite).
result = train_epochs(train, labels, vocab, cfg, tc, dev=dev,
                      on_epoch=lambda r: print(f"epoch {r.epoch:2d}  loss {r.loss:.4f}  dev F1 {r.dev_f1:.3f}"))
print("kept parameters from epoch", result.best_epoch)

s = next(d for d in dev if d.entities)
print(" ".join(s.tokens))
print("gold:", [(e.indices, e.etype) for e in s.entities])
print("pred:", [(e.indices, e.etype) for e in predict_entities(vocab.encode(s.tokens), result.params, cfg, labels)])
