import numpy as np
import pytest

from geoprog import ModelConfig, Vocabulary, init_model, load_registry, preprocess, validate
from geoprog import encode
from geoprog import registry as reg
from geoprog.generator import (
    OE_MODE,
    OP_MODE,
    SubArtifacts,
    decode_step,
    feed,
    greedy_decode,
    initial_state,
    step_mask,
    update_cache,
)

from conftest import make_tiny_state, tiny_problem


def make_state(seed=0, hidden=10, cache_strategy="last_operand_query"):
    registry = load_registry()
    problems = [preprocess("calculate 3 and 5 then △ABC"),
                preprocess("prove △DEF and ⊙GH")]
    vocab = Vocabulary.build(problems)
    cfg = ModelConfig(hidden=hidden, layers=1, patch_dim=4,
                      cache_strategy=cache_strategy)
    return init_model(cfg, registry, vocab, seed=seed), problems


def test_initial_state_shapes():
    state, problems = make_state()
    p = problems[0]
    rep = encode(state, p)
    dec = initial_state(state, rep, p)
    n = state.registry.static_size + len(p.number_spans) + len(p.element_spans)
    assert dec.values.data.shape == (n, state.config.hidden)
    assert dec.keys.data.shape == (n, state.config.hidden)
    assert dec.last == state.registry.sos_id
    assert dec.filled == 0


def test_step_mask_operator_positions():
    state, problems = make_state()
    p = problems[0]
    r = state.registry
    tmask = r.type_mask("cal", p)
    table_size = len(r.table_for(p))
    m0 = step_mask(state, tmask, table_size, OP_MODE, t=0, operand_index=0, filled=0)
    assert m0[r.lookup("add")]
    assert not m0[r.eop_id]  # an empty program is never a legal outcome
    assert not m0[r.lookup("C_pi")] and not m0[r.eos_operand_id]
    assert not m0[r.static_size:].any()
    m1 = step_mask(state, tmask, table_size, OP_MODE, t=1, operand_index=0, filled=1)
    assert m1[r.eop_id]
    assert not m1[r.lookup("R_0")]  # other type's operators stay off


def test_step_mask_operand_positions():
    state, problems = make_state()
    p = problems[0]
    r = state.registry
    tmask = r.type_mask("cal", p)
    table_size = len(r.table_for(p))
    m = step_mask(state, tmask, table_size, OE_MODE, t=0, operand_index=0, filled=0)
    assert m[r.lookup("C_pi")] and m[r.static_size:].all()
    assert not m[r.eos_operand_id]  # empty operand lists are not emittable
    assert not m[r.lookup("add")] and not m[r.eop_id]
    assert not any(m[c] for c in r.cache_ids)  # nothing cached yet
    m2 = step_mask(state, tmask, table_size, OE_MODE, t=2, operand_index=1, filled=2)
    assert m2[r.eos_operand_id]
    assert m2[r.cache_ids[0]] and m2[r.cache_ids[1]]
    assert not m2[r.cache_ids[2]]  # own slot is a forward reference


def test_decode_step_distribution_masked_and_normalized():
    state, problems = make_state()
    p = problems[0]
    r = state.registry
    rep = encode(state, p)
    tmask = r.type_mask("cal", p)
    dec = initial_state(state, rep, p)
    q, dist, dec = decode_step(state, rep, dec, tmask, OP_MODE, 0)
    mask = step_mask(state, tmask, dist.data.shape[1], OP_MODE, 0, 0, 0)
    assert dist.data[0, ~mask].sum() == 0.0
    assert dist.data[0].sum() == pytest.approx(1.0, abs=1e-6)
    assert q.data.shape == (1, state.config.hidden)


def test_literal_softmax_mode_leaks_no_mass_outside_mask():
    state, problems = make_state()
    state.config.softmax_mode = "literal"
    p = problems[0]
    r = state.registry
    rep = encode(state, p)
    tmask = r.type_mask("cal", p)
    dec = initial_state(state, rep, p)
    _, dist, _ = decode_step(state, rep, dec, tmask, OP_MODE, 0)
    mask = step_mask(state, tmask, dist.data.shape[1], OP_MODE, 0, 0, 0)
    assert dist.data[0, ~mask].sum() == 0.0
    assert dist.data[0].sum() <= 1.0 + 1e-9


def test_feed_changes_only_last():
    state, problems = make_state()
    p = problems[0]
    rep = encode(state, p)
    dec = initial_state(state, rep, p)
    sid = state.registry.lookup("add")
    dec2 = feed(dec, sid)
    assert dec2.last == sid
    assert dec2.values is dec.values and dec2.h_op is dec.h_op


def test_update_cache_rewrites_value_and_key_rows():
    for strategy in ("last_operand_query", "operator_query", "operator_embedding"):
        state, problems = make_state(cache_strategy=strategy)
        p = problems[0]
        r = state.registry
        rep = encode(state, p)
        tmask = r.type_mask("cal", p)
        dec = initial_state(state, rep, p)
        q_op, dist, dec = decode_step(state, rep, dec, tmask, OP_MODE, 0)
        op = int(np.argmax(dist.data[0]))
        dec = feed(dec, op)
        q_oe, dist, dec = decode_step(state, rep, dec, tmask, OE_MODE, 0, 0)
        before_v = dec.values.data.copy()
        before_k = dec.keys.data.copy()
        dec = update_cache(state, dec, 0, SubArtifacts(q_op, q_oe, op))
        cache_row = r.cache_ids[0]
        assert dec.filled == 1
        assert not np.allclose(dec.values.data[cache_row], before_v[cache_row])
        assert not np.allclose(dec.keys.data[cache_row], before_k[cache_row])
        other = [i for i in range(before_v.shape[0]) if i != cache_row]
        np.testing.assert_allclose(dec.values.data[other], before_v[other])
        np.testing.assert_allclose(dec.keys.data[other], before_k[other])


def test_cache_strategies_give_different_rows():
    rows = {}
    for strategy in ("last_operand_query", "operator_query", "operator_embedding"):
        state, problems = make_state(seed=2, cache_strategy=strategy)
        p = problems[0]
        r = state.registry
        rep = encode(state, p)
        tmask = r.type_mask("cal", p)
        dec = initial_state(state, rep, p)
        q_op, dist, dec = decode_step(state, rep, dec, tmask, OP_MODE, 0)
        op = int(np.argmax(dist.data[0]))
        dec = feed(dec, op)
        q_oe, _, dec = decode_step(state, rep, dec, tmask, OE_MODE, 0, 0)
        dec = update_cache(state, dec, 0, SubArtifacts(q_op, q_oe, op))
        rows[strategy] = dec.values.data[r.cache_ids[0]].copy()
    assert not np.allclose(rows["last_operand_query"], rows["operator_query"])
    assert not np.allclose(rows["operator_query"], rows["operator_embedding"])


def test_greedy_decode_output_is_structurally_valid():
    for seed in range(6):
        state, problems = make_state(seed=seed)
        for p in problems:
            prog = greedy_decode(state, p)
            table = state.registry.table_for(p)
            validate(prog, table)  # must not raise
            assert 1 <= len(prog.subs) <= state.registry.max_op


def test_greedy_trace_rows_are_distributions():
    state, problems = make_state(seed=1)
    trace = []
    greedy_decode(state, problems[0], trace=trace)
    assert trace, "decode must take at least one step"
    for mode, t, sid, probs in trace:
        assert mode in (OP_MODE, OE_MODE)
        assert probs.sum() == pytest.approx(1.0, abs=1e-6)
        assert probs[sid] == probs.max()


def test_greedy_decode_deterministic():
    state, problems = make_state(seed=3)
    a = greedy_decode(state, problems[0])
    b = greedy_decode(state, problems[0])
    assert a.subs == b.subs


def test_tiny_instance_decodes(tiny_registry):
    state = make_tiny_state(tiny_registry, seed=0)
    p = tiny_problem()
    prog = greedy_decode(state, p)
    assert 1 <= len(prog.subs) <= 2
    for sub in prog.subs:
        assert 1 <= len(sub.args) <= 2
