import io

import numpy as np
import pytest

from conftest import tiny_model
from fgnmt.data import ParallelCorpus, Vocabulary
from fgnmt.errors import DataError, NumericError
from fgnmt.model import EOS
from fgnmt.numerics import Tensor
from fgnmt.training import (
    AdamState,
    Trainer,
    TrainSchedule,
    adam_step,
    clip_grad_norm,
    early_stop_loop,
    encode_corpus,
    length_filter,
    log_line,
    make_batches,
    pad_batch,
    train_epoch,
)

VOCAB = Vocabulary([f"w{i}" for i in range(7)])
ONE_PAIR = [([3, 4, 5], [6, 7, EOS])]


def toy_pairs(rng, n=12):
    return [
        (list(rng.integers(3, 10, size=rng.integers(1, 5))), list(rng.integers(3, 10, size=rng.integers(1, 5))) + [EOS])
        for _ in range(n)
    ]


def test_adam_defaults():
    s = AdamState()
    assert (s.alpha, s.beta1, s.beta2, s.epsilon, s.step) == (1e-3, 0.9, 0.999, 1e-8, 0)


def test_adam_zero_gradient_leaves_parameters():
    p = {"w": Tensor(np.array([1.0, -2.0, 3.0]))}
    state = adam_step(p, {"w": np.zeros(3)}, AdamState())
    assert p["w"].data.tolist() == [1.0, -2.0, 3.0]
    assert state.step == 1 and state.m["w"].shape == (3,)


def test_adam_first_step_is_signed_alpha():
    g = np.array([0.5, -3.0, 1e-3, -1e-2])
    p = {"w": Tensor(np.zeros(4))}
    adam_step(p, {"w": g}, AdamState())
    expected = -np.sign(g) * 1e-3 * np.abs(g) / (np.abs(g) + 1e-8)
    np.testing.assert_allclose(p["w"].data, expected, rtol=1e-12)
    np.testing.assert_allclose(p["w"].data, -np.sign(g) * 1e-3, rtol=1e-5)


def test_adam_quadratic_matches_reference_simulation():
    # f(x) = (x - 3)^2, simulated independently in plain Python
    x_ref, m, v = 0.0, 0.0, 0.0
    a, b1, b2, eps = 0.1, 0.9, 0.999, 1e-8
    p = {"x": Tensor(np.array([0.0]))}
    state = AdamState(alpha=a)
    for t in range(1, 101):
        g = 2 * (x_ref - 3)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        x_ref -= a * (m / (1 - b1**t)) / ((v / (1 - b2**t)) ** 0.5 + eps)
        adam_step(p, {"x": 2 * (p["x"].data - 3)}, state)
    assert abs(p["x"].data[0] - x_ref) < 1e-12
    assert abs(x_ref - 3) < abs(0 - 3) / 2


def test_adam_rejects_non_finite():
    p = {"enc.w": Tensor(np.zeros(2))}
    with pytest.raises(NumericError, match="enc.w"):
        adam_step(p, {"enc.w": np.array([1.0, np.nan])}, AdamState())


def test_clip_grad_norm_bound(rng):
    grads = {"a": rng.normal(size=(3, 4)) * 10, "b": rng.normal(size=5)}
    clipped, norm = clip_grad_norm(grads, 1.0)
    total = np.sqrt(sum((g**2).sum() for g in clipped.values()))
    assert norm > 1.0 and total <= 1.0 + 1e-12
    small = {"a": np.array([0.1, 0.2])}
    assert clip_grad_norm(small, 1.0)[0]["a"] is small["a"]


def test_trainer_grad_norm_is_clipped():
    model = tiny_model(scale=2.0)
    trainer = Trainer(model, TrainSchedule(clip_norm=0.5))
    trainer.step(ONE_PAIR)
    assert trainer.last_grad_norm > 0.5


def test_length_filter_at_fifty():
    long_src = ([3] * 51, [4, EOS])
    edge = ([3] * 50, [4] * 50 + [EOS])
    long_tgt = ([3], [4] * 51 + [EOS])
    assert length_filter([long_src, edge, long_tgt], 50) == [edge]
    with pytest.raises(DataError):
        length_filter([long_src], 50)
    assert TrainSchedule().max_len == 50


def test_pad_batch_layout():
    src, sm, tgt, tm = pad_batch([([3, 4], [5, EOS]), ([6], [7, 8, EOS])])
    assert src.tolist() == [[3, 4], [6, 0]] and sm.tolist() == [[1, 1], [1, 0]]
    assert tgt.tolist() == [[5, EOS, EOS], [7, 8, EOS]] and tm.tolist() == [[1, 1, 0], [1, 1, 1]]


def test_batches_are_length_sorted_and_complete(rng):
    pairs = toy_pairs(rng, 40)
    batches = make_batches(pairs, 8, np.random.default_rng(0))
    assert sorted(map(repr, (p for b in batches for p in b))) == sorted(map(repr, pairs))
    lens = [[len(s) for s, _ in b] for b in batches]
    for a, b in zip(lens, lens[1:]):
        assert a == sorted(a)
    assert make_batches(pairs, 8, np.random.default_rng(0)) == batches


def test_one_pair_loss_decreases_in_most_seeds():
    monotone = 0
    for seed in range(10):
        trainer = Trainer(tiny_model(seed=seed), TrainSchedule(seed=seed))
        losses = [trainer.step(ONE_PAIR) for _ in range(10)]
        monotone += all(b < a for a, b in zip(losses, losses[1:]))
    assert monotone >= 9


def test_loss_trajectory_is_deterministic(rng):
    pairs = toy_pairs(rng)

    def run():
        trainer = Trainer(tiny_model("atty2d", True), TrainSchedule(batch_size=4, seed=3))
        return [train_epoch(trainer, pairs) for _ in range(2)]

    assert run() == run()


def test_zero_gradient_step_keeps_loss():
    model = tiny_model()
    trainer = Trainer(model, TrainSchedule())
    before = trainer.loss(ONE_PAIR)[0].item()
    adam_step(model.params, {k: np.zeros(p.shape) for k, p in model.params.items()}, trainer.adam)
    assert trainer.loss(ONE_PAIR)[0].item() == before


def test_train_epoch_rejects_filtered_corpus():
    trainer = Trainer(tiny_model(), TrainSchedule(max_len=2))
    with pytest.raises(DataError):
        train_epoch(trainer, [([3, 4, 5], [6, EOS])])


def test_frozen_model_stops_at_second_validation(rng):
    pairs = toy_pairs(rng, 8)
    sched = TrainSchedule(batch_size=4, valid_interval=2, patience=1, learning_rate=0.0, max_steps=100)
    log = io.StringIO()
    best = early_stop_loop(tiny_model(), pairs, pairs[:4], sched, VOCAB, log_file=log)
    assert [h[0] for h in best.history] == [2, 4]
    assert best.step == 2
    lines = log.getvalue().splitlines()
    assert len(lines) == 2 and all(len(line.split("\t")) == 3 for line in lines)


def test_best_checkpoint_dominates_history(rng):
    pairs = toy_pairs(rng, 16)
    sched = TrainSchedule(batch_size=4, valid_interval=3, patience=3, max_steps=30, learning_rate=0.02)
    seen = []
    best = early_stop_loop(tiny_model(), pairs, pairs[:6], sched, VOCAB, on_validate=lambda *a: seen.append(a))
    assert best.bleu >= max(b for _, _, b in best.history)
    assert seen == best.history


def test_early_stop_rejects_empty_validation(rng):
    with pytest.raises(DataError):
        early_stop_loop(tiny_model(), toy_pairs(rng), [], TrainSchedule(), VOCAB)


def test_encode_corpus_appends_eos():
    corpus = ParallelCorpus([["w0", "w1"]], [["w2"]])
    assert encode_corpus(corpus, VOCAB, VOCAB) == [([3, 4], [5, EOS])]


def test_log_line_format():
    assert log_line(500, 1.25, 33.3) == "500\t1.250000\t33.3000"
