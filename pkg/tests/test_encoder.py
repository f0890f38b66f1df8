import numpy as np
import pytest

from cen import tensor as T
from cen.encoder import (
    EncoderConfig,
    encode_all,
    encode_sequence,
    init_encoder_params,
    rgcn_layer,
    rgcn_stack,
    skip_connection,
)
from cen.errors import ContractError
from cen.params import ParamStore
from cen.tensor import Tape, Tensor, backward


def rgcn_loop_oracle(h, rel, facts, w_msg, w_self):
    """Per-edge loop aggregation: mean incoming message + self loop, no act."""
    out = np.zeros_like(h)
    for o in range(h.shape[0]):
        incoming = [(s, r) for s, r, oo in facts if oo == o]
        msg = np.zeros(h.shape[1])
        for s, r in incoming:
            msg += w_msg @ (h[s] + rel[r])
        if incoming:
            msg /= len(incoming)
        out[o] = msg + w_self @ h[o]
    return out


def make_params(num_entities, num_rel_total, dim, layers=1, seed=0,
                activation="identity", normalize=False):
    cfg = EncoderConfig(num_entities, num_rel_total, dim, layers=layers,
                        dropout=0.0, activation=activation,
                        normalize_embed=normalize)
    store = ParamStore()
    init_encoder_params(store, cfg, np.random.default_rng(seed))
    return store, cfg


def test_empty_snapshot_is_self_loop_only():
    store, cfg = make_params(3, 2, 4)
    h = store["entity_embed"]
    out = rgcn_layer(h, store["relation_embed"], np.empty((0, 3)),
                     store["rgcn.0.w_msg"], store["rgcn.0.w_self"], T.identity)
    np.testing.assert_allclose(out.data, h.data @ store["rgcn.0.w_self"].data.T, atol=1e-14)


def test_single_fact_hand_arithmetic():
    # (0, 0, 1) with identity weights and zero relation vector: h1' = h0 + h1
    store, _ = make_params(2, 2, 3)
    store["rgcn.0.w_msg"].data = np.eye(3)
    store["rgcn.0.w_self"].data = np.eye(3)
    store["relation_embed"].data[:] = 0.0
    h = store["entity_embed"]
    out = rgcn_layer(h, store["relation_embed"], np.array([[0, 0, 1]]),
                     store["rgcn.0.w_msg"], store["rgcn.0.w_self"], T.identity)
    np.testing.assert_allclose(out.data[1], h.data[0] + h.data[1], atol=1e-14)
    np.testing.assert_allclose(out.data[0], h.data[0], atol=1e-14)


def test_rgcn_layer_matches_loop_oracle():
    rng = np.random.default_rng(5)
    store, _ = make_params(6, 4, 5, seed=5)
    facts = np.stack([rng.integers(6, size=10), rng.integers(4, size=10),
                      rng.integers(6, size=10)], axis=1)
    out = rgcn_layer(store["entity_embed"], store["relation_embed"], facts,
                     store["rgcn.0.w_msg"], store["rgcn.0.w_self"], T.identity)
    expected = rgcn_loop_oracle(
        store["entity_embed"].data, store["relation_embed"].data, facts,
        store["rgcn.0.w_msg"].data, store["rgcn.0.w_self"].data,
    )
    np.testing.assert_allclose(out.data, expected, atol=1e-12)


def test_skip_connection_saturations():
    rng = np.random.default_rng(1)
    h_new = Tensor(rng.normal(size=(4, 3)))
    h_prev = Tensor(rng.normal(size=(4, 3)))
    w = Tensor(np.zeros((3, 3)))
    closed = skip_connection(h_new, h_prev, w, Tensor(np.full(3, -30.0)))
    np.testing.assert_allclose(closed.data, h_prev.data, atol=1e-10)
    opened = skip_connection(h_new, h_prev, w, Tensor(np.full(3, 30.0)))
    np.testing.assert_allclose(opened.data, h_new.data, atol=1e-10)


def test_skip_connection_output_between_inputs():
    rng = np.random.default_rng(2)
    for _ in range(100):
        h_new = rng.normal(size=(3, 4))
        h_prev = rng.normal(size=(3, 4))
        out = skip_connection(
            Tensor(h_new), Tensor(h_prev),
            Tensor(rng.normal(size=(4, 4))), Tensor(rng.normal(size=4)),
        ).data
        lo = np.minimum(h_new, h_prev)
        hi = np.maximum(h_new, h_prev)
        assert np.all(out >= lo - 1e-12) and np.all(out <= hi + 1e-12)


def test_encode_sequence_k1_is_one_stack_plus_gate():
    store, cfg = make_params(4, 4, 3, layers=2, seed=3, activation="relu")
    snap = np.array([[0, 1, 2], [3, 0, 1]])
    out = encode_sequence(1, [snap], store, cfg)
    h_hat = rgcn_stack(store["entity_embed"], store, snap, cfg)
    expected = skip_connection(h_hat, store["entity_embed"],
                               store["gate.weight"], store["gate.bias"])
    np.testing.assert_array_equal(out.data, expected.data)


def test_all_empty_snapshots_with_identity_update_return_initial_matrix():
    # identity self weights + identity activation make the snapshot update a
    # no-op, so the gate mixes H with H and every unroll returns H exactly
    store, cfg = make_params(4, 4, 3)
    store["rgcn.0.w_self"].data = np.eye(3)
    empty = np.empty((0, 3))
    out = encode_sequence(3, [empty] * 3, store, cfg)
    np.testing.assert_array_equal(out.data, store["entity_embed"].data)


def test_encode_sequence_matches_manual_chaining():
    store, cfg = make_params(5, 4, 4, layers=2, seed=7, activation="relu")
    rng = np.random.default_rng(9)
    snaps = [np.stack([rng.integers(5, size=4), rng.integers(4, size=4),
                       rng.integers(5, size=4)], axis=1) for _ in range(3)]
    out = encode_sequence(3, snaps, store, cfg)
    h = store["entity_embed"]
    for snap in snaps:
        h = skip_connection(rgcn_stack(h, store, snap, cfg), h,
                            store["gate.weight"], store["gate.bias"])
    np.testing.assert_array_equal(out.data, h.data)


def test_encode_sequence_contract_errors():
    store, cfg = make_params(3, 2, 3)
    with pytest.raises(ContractError):
        encode_sequence(0, [], store, cfg)
    with pytest.raises(ContractError):
        encode_sequence(2, [np.empty((0, 3))], store, cfg)


def test_encode_all_truncation_rule():
    store, cfg = make_params(4, 4, 3, seed=11, activation="relu")
    rng = np.random.default_rng(11)
    history = [np.stack([rng.integers(4, size=3), rng.integers(4, size=3),
                         rng.integers(4, size=3)], axis=1) for _ in range(2)]
    reps = encode_all(5, history, store, cfg)
    assert len(reps) == 5
    # lengths beyond the available history alias the longest encoding
    assert reps[2] is reps[1] and reps[3] is reps[1] and reps[4] is reps[1]
    np.testing.assert_array_equal(
        reps[1].data, encode_sequence(2, history, store, cfg).data)


def test_encode_all_single_length():
    store, cfg = make_params(4, 4, 3, seed=2, activation="relu")
    history = [np.array([[0, 1, 2]])]
    reps = encode_all(1, history, store, cfg)
    assert len(reps) == 1
    np.testing.assert_array_equal(
        reps[0].data, encode_sequence(1, history, store, cfg).data)


def test_encode_all_middle_entry_equals_standalone():
    store, cfg = make_params(5, 4, 4, seed=13, activation="relu")
    rng = np.random.default_rng(13)
    history = [np.stack([rng.integers(5, size=4), rng.integers(4, size=4),
                         rng.integers(5, size=4)], axis=1) for _ in range(3)]
    reps = encode_all(3, history, store, cfg)
    standalone = encode_sequence(2, history[-2:], store, cfg)
    np.testing.assert_array_equal(reps[1].data, standalone.data)


def test_entities_absent_from_history_stay_finite():
    store, cfg = make_params(10, 4, 4, layers=2, seed=17, activation="relu")
    history = [np.array([[0, 0, 1]]), np.array([[1, 1, 2]])]  # entities 3..9 absent
    reps = encode_all(3, history, store, cfg)
    for r in reps:
        assert np.all(np.isfinite(r.data))


def test_shared_weights_receive_gradient_from_every_length():
    store, cfg = make_params(5, 4, 4, layers=1, seed=19, activation="relu")
    rng = np.random.default_rng(19)
    history = [np.stack([rng.integers(5, size=5), rng.integers(4, size=5),
                         rng.integers(5, size=5)], axis=1) for _ in range(3)]
    for k in range(3):
        with Tape():
            reps = encode_all(3, history, store, cfg)
            grads = backward(T.sum_all(reps[k]), store)
        assert np.abs(grads["rgcn.0.w_msg"]).max() > 0, f"no gradient from length {k + 1}"


def test_normalized_unroll_starts_from_unit_rows():
    store, cfg = make_params(4, 4, 3, seed=29, activation="relu", normalize=True)
    out = encode_sequence(1, [np.empty((0, 3))], store, cfg)
    h0 = store["entity_embed"].data
    unit = h0 / np.linalg.norm(h0, axis=1, keepdims=True)
    h_hat = rgcn_stack(Tensor(unit), store, np.empty((0, 3)), cfg)
    expected = skip_connection(h_hat, Tensor(unit),
                               store["gate.weight"], store["gate.bias"])
    np.testing.assert_allclose(out.data, expected.data, atol=1e-14)


def test_train_mode_dropout_varies_only_with_seed():
    store, cfg = make_params(5, 4, 4, seed=23, activation="relu")
    cfg.dropout = 0.4
    history = [np.array([[0, 1, 2], [3, 0, 4]])]
    a = encode_sequence(1, history, store, cfg, train=True, rng=np.random.default_rng(5))
    b = encode_sequence(1, history, store, cfg, train=True, rng=np.random.default_rng(5))
    c = encode_sequence(1, history, store, cfg, train=True, rng=np.random.default_rng(6))
    np.testing.assert_array_equal(a.data, b.data)
    assert not np.array_equal(a.data, c.data)
    # eval mode is deterministic and dropout-free
    d1 = encode_sequence(1, history, store, cfg)
    d2 = encode_sequence(1, history, store, cfg)
    np.testing.assert_array_equal(d1.data, d2.data)
