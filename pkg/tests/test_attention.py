import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fgnmt import numerics as nx
from fgnmt.attention import (
    AnnotationSet,
    AttentionKeys,
    Variant,
    attend,
    combine_finegrained,
    combine_temporal,
    normalize_dimensionwise,
    normalize_temporal,
    score_att,
    score_atty,
    score_atty2d,
)
from fgnmt.errors import DimensionError, NumericError
from fgnmt.layers import FeedForwardParams
from fgnmt.numerics import Tensor

Z, D, E, A = 3, 4, 2, 5


def zero_net(n_in, n_out, b2):
    return FeedForwardParams(
        Tensor(np.zeros((A, n_in))), Tensor(np.zeros(A)), Tensor(np.zeros((n_out, A))), Tensor(np.asarray(b2, float))
    )


def random_net(rng, n_in, n_out, scale=1.0):
    return FeedForwardParams(
        Tensor(rng.normal(0, scale, (A, n_in)), requires_grad=True),
        Tensor(rng.normal(0, scale, A), requires_grad=True),
        Tensor(rng.normal(0, scale, (n_out, A)), requires_grad=True),
        Tensor(rng.normal(0, scale, n_out), requires_grad=True),
    )


def test_zero_weights_return_output_bias(rng):
    z, h, y = (Tensor(rng.normal(size=n)) for n in (Z, D, E))
    assert score_att(zero_net(Z + D, 1, [0.7]), z, h).item() == 0.7
    assert score_atty(zero_net(Z + D + E, 1, [-0.2]), z, h, y).item() == -0.2
    b2 = [0.1, 0.2, 0.3, 0.4]
    assert score_atty2d(zero_net(Z + D + E, D, b2), z, h, y).data.tolist() == b2


def test_score_att_permutation(rng):
    f = random_net(rng, Z + D, 1)
    z = Tensor(rng.normal(size=Z))
    H = rng.normal(size=(5, D))
    perm = rng.permutation(5)
    scores = [score_att(f, z, Tensor(h)).item() for h in H]
    permuted = [score_att(f, z, Tensor(h)).item() for h in H[perm]]
    assert permuted == [scores[i] for i in perm]


def test_score_finite_for_bounded_inputs(rng):
    f = random_net(rng, Z + D, 1, scale=3.0)
    for _ in range(20):
        z, h = rng.normal(size=Z), rng.normal(size=D)
        z *= 10 / np.linalg.norm(z)
        h *= 10 / np.linalg.norm(h)
        assert np.isfinite(score_att(f, Tensor(z), Tensor(h)).item())


def test_atty_reduces_to_att_when_y_block_is_zero(rng):
    f = random_net(rng, Z + D + E, 1)
    f.w1.data[:, Z + D :] = 0.0
    g = FeedForwardParams(Tensor(f.w1.data[:, : Z + D]), f.b1, f.w2, f.b2)
    z, h, y = (Tensor(rng.normal(size=n)) for n in (Z, D, E))
    assert score_atty(f, z, h, y).item() == pytest.approx(score_att(g, z, h).item(), abs=1e-15)


def test_atty_depends_on_previous_word(rng):
    f = random_net(rng, Z + D + E, 1)
    z, h = Tensor(rng.normal(size=Z)), Tensor(rng.normal(size=D))
    a = score_atty(f, z, h, Tensor([1.0, 0.0])).item()
    b = score_atty(f, z, h, Tensor([0.0, 1.0])).item()
    assert a != b


def test_atty2d_identical_rows_give_equal_scores(rng):
    f = random_net(rng, Z + D + E, D)
    f.w2.data[:] = f.w2.data[0]
    f.b2.data[:] = 0.3
    out = score_atty2d(f, *(Tensor(rng.normal(size=n)) for n in (Z, D, E))).data
    assert out.shape == (D,) and np.all(out == out[0])


def test_atty2d_output_length_is_annotation_dim(rng):
    f = random_net(rng, Z + D + E, D)
    assert score_atty2d(f, *(Tensor(rng.normal(size=n)) for n in (Z, D, E))).shape == (D,)
    with pytest.raises(DimensionError):
        score_atty2d(random_net(rng, Z + D + E, 1), *(Tensor(rng.normal(size=n)) for n in (Z, D, E)))


def test_normalize_temporal_examples():
    np.testing.assert_allclose(normalize_temporal(Tensor(np.full(4, 2.5))).data, 0.25, atol=1e-16)
    np.testing.assert_allclose(normalize_temporal(Tensor([0.0, np.log(3.0)])).data, [0.25, 0.75], atol=1e-15)
    assert normalize_temporal(Tensor([3.0])).data.tolist() == [1.0]
    with pytest.raises(NumericError):
        normalize_temporal(Tensor([np.inf, 0.0]))


def test_normalize_dimensionwise_examples(rng):
    out = normalize_dimensionwise(Tensor([[0.0, 0.0], [np.log(2.0), 0.0]])).data
    np.testing.assert_allclose(out[:, 0], [1 / 3, 2 / 3], atol=1e-15)
    np.testing.assert_allclose(out[:, 1], [0.5, 0.5], atol=1e-15)
    assert normalize_dimensionwise(Tensor(rng.normal(size=(1, 3)))).data.tolist() == [[1.0, 1.0, 1.0]]
    col = rng.normal(size=5)
    same = normalize_dimensionwise(Tensor(np.repeat(col[:, None], 3, axis=1))).data
    ref = normalize_temporal(Tensor(col)).data
    for d in range(3):
        np.testing.assert_array_equal(same[:, d], ref)


def test_combine_temporal_examples(rng):
    H = rng.normal(size=(4, D))
    C = AnnotationSet(Tensor(H))
    np.testing.assert_array_equal(combine_temporal(Tensor(np.eye(4)[2]), C).data, H[2])
    np.testing.assert_allclose(combine_temporal(Tensor(np.full(4, 0.25)), C).data, H.mean(axis=0), atol=1e-15)
    with pytest.raises(DimensionError):
        combine_temporal(Tensor(np.full(3, 1 / 3)), C)


def test_combine_finegrained_examples(rng):
    H = rng.normal(size=(4, D))
    C = AnnotationSet(Tensor(H))
    a = rng.dirichlet(np.ones(4))
    np.testing.assert_allclose(
        combine_finegrained(Tensor(np.repeat(a[:, None], D, axis=1)), C).data,
        combine_temporal(Tensor(a), C).data,
        atol=1e-15,
    )
    picks = [3, 0, 2, 2]
    alpha = np.zeros((4, D))
    alpha[picks, range(D)] = 1.0
    np.testing.assert_array_equal(combine_finegrained(Tensor(alpha), C).data, H[picks, range(D)])
    with pytest.raises(DimensionError):
        combine_finegrained(Tensor(np.ones((3, D)) / 3), C)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 6), st.integers(1, 5), st.integers(0, 2**31 - 1))
def test_combinations_are_convex(T, dim, seed):
    rng = np.random.default_rng(seed)
    H = rng.normal(size=(T, dim)) * 5
    C = AnnotationSet(Tensor(H))
    lo, hi = H.min(axis=0) - 1e-12, H.max(axis=0) + 1e-12
    c1 = combine_temporal(Tensor(rng.dirichlet(np.ones(T))), C).data
    c2 = combine_finegrained(Tensor(rng.dirichlet(np.ones(T), size=dim).T), C).data
    for c in (c1, c2):
        assert np.all(c >= lo) and np.all(c <= hi)


def _keys(variant, f, H, mask=None):
    C = AnnotationSet(Tensor(H), mask)
    return C, AttentionKeys.build(variant, f, C, Z, E)


@pytest.mark.parametrize("variant", list(Variant))
def test_batched_scores_match_per_position_functions(variant, rng):
    n_in = Z + D + (E if variant.uses_target else 0)
    f = random_net(rng, n_in, D if variant.fine_grained else 1)
    H = rng.normal(size=(5, D))
    z, y = Tensor(rng.normal(size=Z)), Tensor(rng.normal(size=E))
    C, keys = _keys(variant, f, H)
    batched = keys.scores(z, y if variant.uses_target else None).data
    for t in range(5):
        h = Tensor(H[t])
        if variant is Variant.ATT:
            ref = [score_att(f, z, h).item()]
        elif variant is Variant.ATTY:
            ref = [score_atty(f, z, h, y).item()]
        else:
            ref = score_atty2d(f, z, h, y).data
        np.testing.assert_allclose(batched[t], ref, atol=1e-14)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 7), st.integers(0, 2**31 - 1))
def test_reduction_finegrained_to_temporal(T, seed):
    rng = np.random.default_rng(seed)
    f1 = random_net(rng, Z + D + E, 1, scale=2.0)
    f2 = FeedForwardParams(f1.w1, f1.b1, Tensor(np.repeat(f1.w2.data, D, axis=0)), Tensor(np.repeat(f1.b2.data, D)))
    H = rng.normal(size=(T, D))
    z, y = Tensor(rng.normal(size=Z)), Tensor(rng.normal(size=E))
    C1, k1 = _keys(Variant.ATTY, f1, H)
    C2, k2 = _keys(Variant.ATTY2D, f2, H)
    ctx1, a1 = attend(k1, C1, z, y)
    ctx2, a2 = attend(k2, C2, z, y)
    np.testing.assert_allclose(ctx2.data, ctx1.data, rtol=0, atol=1e-9)
    for d in range(D):
        np.testing.assert_allclose(a2.data[:, d], a1.data, rtol=0, atol=1e-9)


@pytest.mark.parametrize("variant", list(Variant))
def test_permutation_equivariance(variant, rng):
    n_in = Z + D + (E if variant.uses_target else 0)
    f = random_net(rng, n_in, D if variant.fine_grained else 1)
    H = rng.normal(size=(6, D))
    perm = rng.permutation(6)
    z, y = Tensor(rng.normal(size=Z)), Tensor(rng.normal(size=E))
    y = y if variant.uses_target else None
    ctx, alpha = attend(_keys(variant, f, H)[1], AnnotationSet(Tensor(H)), z, y)
    ctx_p, alpha_p = attend(_keys(variant, f, H[perm])[1], AnnotationSet(Tensor(H[perm])), z, y)
    np.testing.assert_allclose(alpha_p.data, alpha.data[perm], atol=1e-15)
    np.testing.assert_allclose(ctx_p.data, ctx.data, atol=1e-14)


@pytest.mark.parametrize("variant", list(Variant))
def test_simplex_with_padding(variant, rng):
    n_in = Z + D + (E if variant.uses_target else 0)
    f = random_net(rng, n_in, D if variant.fine_grained else 1, scale=3.0)
    mask = np.array([[1, 1, 1, 1], [1, 1, 0, 0]], float)
    C, keys = _keys(variant, f, rng.normal(size=(2, 4, D)), mask)
    z, y = Tensor(rng.normal(size=(2, Z))), Tensor(rng.normal(size=(2, E)))
    _, alpha = attend(keys, C, z, y if variant.uses_target else None)
    a = alpha.data
    axis = -2 if variant.fine_grained else -1
    np.testing.assert_allclose(a.sum(axis=axis), 1.0, rtol=0, atol=1e-12)
    assert np.all(a[0] > 0) and np.all(a[1, :2] > 0) and np.all(a[1, 2:] == 0)


@pytest.mark.parametrize("variant", list(Variant))
def test_attention_pipeline_grad_check(variant, rng):
    n_in = Z + D + (E if variant.uses_target else 0)
    f = random_net(rng, n_in, D if variant.fine_grained else 1)
    H = Tensor(rng.normal(size=(4, D)), requires_grad=True)
    z = Tensor(rng.normal(size=Z), requires_grad=True)
    y = Tensor(rng.normal(size=E), requires_grad=True)
    w = Tensor(rng.normal(size=D))

    def loss():
        C = AnnotationSet(H)
        keys = AttentionKeys.build(variant, f, C, Z, E)
        ctx, _ = attend(keys, C, z, y if variant.uses_target else None)
        return nx.tsum(ctx * w)

    params = {"H": H, "z": z, "y": y, "w1": f.w1, "b1": f.b1, "w2": f.w2, "b2": f.b2}
    assert nx.grad_check_params(loss, params, eps=1e-5) < 1e-4
