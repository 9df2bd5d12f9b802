from crab.model import CrabModel
from crab.text import NormRules, build_vocab, normalize, tokenize

SMALL = dict(dim=16, max_len=8, h1=16, h2=16, layers=1, attn_heads=2)


def tiny_model(corpus, seed=0, **overrides):
    rules = NormRules.default()
    vocab = build_vocab(tokenize(normalize(t, rules)) for t in corpus.texts)
    return CrabModel.init(vocab, rules, corpus.class_names, seed, **{**SMALL, **overrides})
