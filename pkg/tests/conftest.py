import numpy as np
import pytest

from fgnmt.model import ModelConfig, NMTModel


def tiny_config(variant="atty2d", context=False, **kw):
    sizes = dict(src_vocab=10, tgt_vocab=10, emb_dim=8, hidden_dim=6, align_hidden_dim=12, seed=1)
    sizes.update(kw)
    return ModelConfig(variant=variant, contextualization=context, **sizes)


def tiny_model(variant="atty2d", context=False, scale=None, **kw):
    model = NMTModel.init(tiny_config(variant, context, **kw))
    if scale is not None:
        rng = np.random.default_rng(model.config.seed + 1000)
        for p in model.params.values():
            p.data[...] = rng.normal(0.0, scale, p.shape)
    return model


VARIANTS = ["att", "atty", "atty2d"]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def oracle_model(seed, vocab=4, scale=1.5):
    """Random frozen model with an enumerable target vocabulary."""
    model = tiny_model("atty2d", False, src_vocab=6, tgt_vocab=vocab, seed=seed)
    rng = np.random.default_rng(seed)
    for p in model.params.values():
        p.data[...] = rng.normal(0.0, scale, p.shape)
    model.params["out.b"].data[0] -= 2.0
    return model


def exhaustive_best(model, src, max_len):
    """Best sequence by brute force: EOS-terminated, or cut at max_len."""
    from itertools import product

    from fgnmt.model import EOS

    V = model.config.tgt_vocab
    cands = []
    for n in range(max_len):
        cands += [list(p) + [EOS] for p in product(range(1, V), repeat=n)]
    cands += [list(p) for p in product(range(1, V), repeat=max_len)]
    scored = [(model.sequence_log_prob(src, c).item(), c) for c in cands]
    return max(scored, key=lambda sc: sc[0])
