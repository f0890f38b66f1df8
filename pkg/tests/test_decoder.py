import numpy as np
import pytest

from cen import tensor as T
from cen.decoder import (
    DecoderConfig,
    add_channel,
    batch_loss,
    channel_features,
    init_decoder_params,
    kernel_name,
    score_all,
    score_batch,
)
from cen.params import ParamStore
from cen.tensor import Tape, Tensor, backward


def conv_loop(pair, kernels):
    c, _, m = kernels.shape
    d = pair.shape[1]
    p = (m - 1) // 2
    out = np.zeros((c, d))
    for ci in range(c):
        for j in range(d):
            for i in range(2):
                for t in range(m):
                    col = j + t - p
                    if 0 <= col < d:
                        out[ci, j] += kernels[ci, i, t] * pair[i, col]
    return out


def score_loop_oracle(query, reps_arrays, rel_embed, kernels_by_k, w_out, b_out, act):
    """Fully naive scoring: loops only, no shared code with the decoder."""
    s, r = query
    num_entities = reps_arrays[0].shape[0]
    scores = np.zeros(num_entities)
    for reps, kernels in zip(reps_arrays, kernels_by_k):
        feats = conv_loop(np.stack([reps[s], rel_embed[r]]), kernels).reshape(-1)
        head = act(feats @ w_out + b_out)
        for o in range(num_entities):
            scores[o] += float(head @ reps[o])
    return scores


def build(num_entities=5, dim=4, channels=2, num_kernels=2, kernel_width=3,
          num_relations_total=4, seed=0, activation="relu", single_channel=False):
    cfg = DecoderConfig(dim=dim, num_kernels=num_kernels, kernel_width=kernel_width,
                        dropout=0.0, activation=activation, single_channel=single_channel)
    store = ParamStore()
    rng = np.random.default_rng(seed)
    store.add("relation_embed", rng.normal(size=(num_relations_total, dim)))
    init_decoder_params(store, cfg, channels, rng)
    reps = [Tensor(rng.normal(size=(num_entities, dim))) for _ in range(channels)]
    return store, cfg, reps


def test_zero_pair_gives_zero_features():
    store, cfg, _ = build()
    out = channel_features(Tensor(np.zeros(4)), Tensor(np.zeros(4)),
                           store[kernel_name(1, cfg)])
    np.testing.assert_array_equal(out.data, np.zeros(8))


def test_selector_kernel_features_equal_subject_vector():
    cfg = DecoderConfig(dim=4, num_kernels=1, kernel_width=1, dropout=0.0)
    s = np.array([1.0, -2.0, 0.5, 3.0])
    out = channel_features(Tensor(s), Tensor(np.ones(4)),
                           Tensor(np.array([[[1.0], [0.0]]])))
    np.testing.assert_array_equal(out.data, s)


def test_channel_features_match_loop_conv():
    rng = np.random.default_rng(4)
    s, r = rng.normal(size=4), rng.normal(size=4)
    kernels = rng.normal(size=(3, 2, 3))
    out = channel_features(Tensor(s), Tensor(r), Tensor(kernels))
    np.testing.assert_allclose(out.data, conv_loop(np.stack([s, r]), kernels).reshape(-1),
                               atol=1e-12)


def test_score_all_matches_naive_oracle():
    store, cfg, reps = build(num_entities=5, dim=4, channels=2, num_kernels=2, seed=3)
    relu = lambda x: np.maximum(x, 0.0)
    for s in range(5):
        for r in range(4):
            got = score_all((s, r), reps, store, cfg)
            want = score_loop_oracle(
                (s, r), [t.data for t in reps], store["relation_embed"].data,
                [store[kernel_name(1, cfg)].data, store[kernel_name(2, cfg)].data],
                store["decoder.w_out"].data, store["decoder.b_out"].data, relu,
            )
            np.testing.assert_allclose(got.data, want, atol=1e-10)


def test_constructed_projection_scores_alignment():
    # C=1, M=1 selector kernel + identity head: logits = reps @ s
    store, cfg, _ = build(num_entities=4, dim=4, channels=1, num_kernels=1,
                          kernel_width=1, activation="identity", seed=5)
    store[kernel_name(1, cfg)].data = np.array([[[1.0], [0.0]]])
    store["decoder.w_out"].data = np.eye(4)
    store["decoder.b_out"].data[:] = 0.0
    reps = [Tensor(np.eye(4))]  # orthonormal rows
    logits = score_all((2, 1), reps, store, cfg)
    np.testing.assert_allclose(logits.data, np.eye(4)[2], atol=1e-14)
    assert int(np.argmax(logits.data)) == 2


def test_channel_additivity_is_exact():
    store, cfg, reps = build(channels=2, seed=7)
    both = score_all((1, 2), reps, store, cfg).data
    zap = lambda k: _with_zeroed_channel(store, cfg, k)
    with zap(2):
        only1 = score_all((1, 2), reps, store, cfg).data
    with zap(1):
        only2 = score_all((1, 2), reps, store, cfg).data
    np.testing.assert_allclose(both, only1 + only2, atol=1e-12)


class _with_zeroed_channel:
    def __init__(self, store, cfg, k):
        self.param = store[kernel_name(k, cfg)]

    def __enter__(self):
        self.saved = self.param.data.copy()
        self.param.data[:] = 0.0

    def __exit__(self, *exc):
        self.param.data = self.saved


def test_permuting_reps_changes_logits_with_distinct_kernels():
    store, cfg, reps = build(channels=2, seed=9)
    a = score_all((0, 1), reps, store, cfg).data
    b = score_all((0, 1), list(reversed(reps)), store, cfg).data
    assert not np.allclose(a, b)


def test_single_channel_flag_makes_reps_order_irrelevant():
    store, cfg, reps = build(channels=2, seed=9, single_channel=True)
    a = score_all((0, 1), reps, store, cfg).data
    b = score_all((0, 1), list(reversed(reps)), store, cfg).data
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_batch_scores_equal_single_scores():
    store, cfg, reps = build(channels=2, seed=11)
    queries = np.array([[0, 1, 0], [3, 2, 1], [2, 0, 4]])
    batch = score_batch(queries, reps, store, cfg).data
    for i, (s, r, _) in enumerate(queries):
        np.testing.assert_allclose(
            batch[i], score_all((s, r), reps, store, cfg).data, atol=1e-12)


def test_batch_loss_uniform_logits_is_log_v():
    store, cfg, reps = build(num_entities=4, channels=2, seed=13)
    store[kernel_name(1, cfg)].data[:] = 0.0
    store[kernel_name(2, cfg)].data[:] = 0.0
    store["decoder.b_out"].data[:] = 0.0
    queries = np.array([[0, 1, 2], [1, 0, 3]])
    loss = batch_loss(queries, reps, store, cfg)
    assert loss.item() == pytest.approx(np.log(4.0), abs=1e-12)


def test_batch_of_one_equals_single_query_loss():
    store, cfg, reps = build(seed=15)
    q = np.array([[2, 1, 3]])
    loss_batch = batch_loss(q, reps, store, cfg)
    logits = score_all((2, 1), reps, store, cfg)
    loss_single = T.cross_entropy(T.reshape(logits, (1, logits.shape[0])), [3])
    assert loss_batch.item() == pytest.approx(loss_single.item(), abs=1e-14)


def test_batch_loss_groups_queries_by_time():
    store, cfg, reps = build(seed=17)
    other_reps = [Tensor(r.data * 0.5) for r in reps]
    queries = np.array([[0, 1, 2, 7], [1, 0, 3, 9], [2, 2, 1, 7]])
    loss = batch_loss(queries, {7: reps, 9: other_reps}, store, cfg)
    part7 = score_batch(queries[[0, 2]], reps, store, cfg)
    part9 = score_batch(queries[[1]], other_reps, store, cfg)
    expected = T.cross_entropy(T.concat_rows([part7, part9]), [2, 1, 3])
    assert loss.item() == pytest.approx(expected.item(), abs=1e-14)


def test_decoder_gradients_match_finite_differences():
    store, cfg, reps = build(num_entities=5, dim=4, channels=2, seed=19,
                             activation="sigmoid")
    queries = np.array([[0, 1, 2], [3, 2, 4]])

    def loss_fn():
        return batch_loss(queries, reps, store, cfg)

    err = T.grad_check(loss_fn, store, eps=1e-5)
    assert err <= 1e-4


def test_add_channel_warm_start_copies_previous_kernels():
    store, cfg, reps = build(channels=2, seed=21)
    add_channel(store, cfg, 3, np.random.default_rng(0), warm_start=True)
    np.testing.assert_array_equal(store[kernel_name(3, cfg)].data,
                                  store[kernel_name(2, cfg)].data)
    # fed identical reps, the new channel's isolated logits equal its source's
    same = [reps[0]] * 3
    with _with_zeroed_channel(store, cfg, 1), _with_zeroed_channel(store, cfg, 3):
        only2 = score_all((0, 1), same, store, cfg).data
    with _with_zeroed_channel(store, cfg, 1), _with_zeroed_channel(store, cfg, 2):
        only3 = score_all((0, 1), same, store, cfg).data
    np.testing.assert_allclose(only2, only3, atol=1e-14)


def test_add_channel_fresh_init_differs():
    store, cfg, _ = build(channels=2, seed=23)
    add_channel(store, cfg, 3, np.random.default_rng(1), warm_start=False)
    assert not np.array_equal(store[kernel_name(3, cfg)].data,
                              store[kernel_name(2, cfg)].data)
