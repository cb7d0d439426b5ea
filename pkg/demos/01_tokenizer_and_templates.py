"""Walkthrough: learning a subword vocabulary and building model inputs.

Run with:  python3 demos/01_tokenizer_and_templates.py
"""

from candgen import synthetic
from candgen.bpe import train_bpe
from candgen.templates import build_entity_sequence, build_mention_sequence, format_sequence

# ---------------------------------------------------------------------------
# 1. Byte-pair encoding on a tiny corpus
# ---------------------------------------------------------------------------
# The tokenizer starts from single characters (plus an end-of-word marker)
# and repeatedly merges the most frequent adjacent pair. Frequent words end
# up as single tokens; rare words split into subwords.

corpus = [
    "the quick brown fox jumps over the lazy dog",
    "the dog sleeps",
    "a quick brown dog",
]
vocab = train_bpe(corpus, target_vocab_size=80)
print(f"learned {len(vocab)} tokens ({len(vocab.merges)} merges)")

for word in ["dog", "quick", "foxes"]:
    ids = vocab.encode(word)
    print(f"  {word!r} -> {[vocab.id_to_token[i] for i in ids]}")

# Special tokens never split, no matter what the merges say:
print("  '[CLS]' ->", [vocab.id_to_token[i] for i in vocab.encode("[CLS]")])

# ---------------------------------------------------------------------------
# 2. Mention and entity templates
# ---------------------------------------------------------------------------
# A mention is a span inside a context document. The template wraps the
# span in [Ms]/[Me] markers and spends the remaining token budget evenly
# on left and right context.

world = synthetic.make_toy_world(n_entities=5, n_mentions=10, seed=0)
vocab = synthetic.toy_vocabulary(world)

mention = world.mentions[0]
context = world.documents[mention.context_document_id]
print("\ncontext words:", context)

seq = build_mention_sequence(mention, context, vocab, max_len=16)
print("mention sequence:")
print(format_sequence(seq, vocab))

# Entities render their title and description around an [ENT] separator.
entity = world.entities[0]
seq = build_entity_sequence(entity, vocab, max_len=16)
print("entity sequence:")
print(format_sequence(seq, vocab))

# With a tight budget the tail of the description is dropped, but the
# structural tokens always survive:
seq = build_entity_sequence(entity, vocab, max_len=8)
print("entity sequence, max_len=8:")
print(format_sequence(seq, vocab))
