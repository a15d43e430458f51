import math

import numpy as np
import pytest

from geoprog import (
    SolutionProgram,
    SubProgram,
    build_registry,
    canonical_equal,
    execute_cal,
    from_flat,
    operand_count_histogram,
    preprocess,
    to_flat,
    validate,
)
from geoprog.errors import (
    CacheTokenForwardReference,
    DivisionByZero,
    MalformedProgram,
    NonExecutableOperator,
    OperatorInArgPosition,
    Truncated,
    UnboundNumber,
)


def cal_problem(registry, text="values 3 and 5 and 30"):
    p = preprocess(text)
    p.problem_type = registry.problem_type("cal")
    return p


def build(table, *subs):
    ptype = table.registry.problem_type("cal")
    return SolutionProgram(
        tuple(SubProgram(table.lookup(op), tuple(table.lookup(a) for a in args))
              for op, *args in subs),
        ptype)


def test_flat_round_trip_example(registry):
    p = cal_problem(registry)
    table = registry.table_for(p)
    prog = build(table, ("add", "N_0", "N_1"), ("div", "#0", "C_2"))
    flat = to_flat(prog, table)
    assert flat == ["add", "N_0", "N_1", "eos_operand",
                    "div", "#0", "C_2", "eos_operand", "eop"]
    again = from_flat(flat, table, p.problem_type)
    assert canonical_equal(prog, again)


def test_from_flat_accepts_cache_alias(registry):
    p = cal_problem(registry)
    table = registry.table_for(p)
    prog = from_flat(["add", "N_0", "N_1", "eos_operand",
                      "div", "V_0", "C_2", "eos_operand", "eop"],
                     table, p.problem_type)
    assert table.surface(prog.subs[1].args[0]) == "#0"


def test_from_flat_tolerant_mode(registry):
    # sequences without explicit terminators parse when each operator cut is
    # unambiguous
    p = cal_problem(registry)
    table = registry.table_for(p)
    prog = from_flat(["add", "N_0", "N_1", "mul", "#0", "C_2"],
                     table, p.problem_type, tolerant=True)
    assert len(prog.subs) == 2
    assert [table.surface(s.op) for s in prog.subs] == ["add", "mul"]


def test_from_flat_strict_rejects_unterminated(registry):
    p = cal_problem(registry)
    table = registry.table_for(p)
    with pytest.raises(Truncated):
        from_flat(["add", "N_0", "N_1"], table, p.problem_type)
    with pytest.raises(OperatorInArgPosition):
        from_flat(["add", "N_0", "mul", "N_1", "eos_operand", "eop"],
                  table, p.problem_type)


def test_validate_rejects_structural_errors(registry):
    p = cal_problem(registry)
    table = registry.table_for(p)
    add_id = table.lookup("add")
    n0 = table.lookup("N_0")
    with pytest.raises(MalformedProgram):
        validate(SolutionProgram((), p.problem_type), table)
    with pytest.raises(MalformedProgram):  # operand list above the global limit
        validate(SolutionProgram((SubProgram(add_id, (n0,) * (registry.max_oe + 1)),),
                                 p.problem_type), table)
    with pytest.raises(OperatorInArgPosition):
        validate(SolutionProgram((SubProgram(add_id, (n0, add_id)),), p.problem_type), table)
    with pytest.raises(CacheTokenForwardReference):
        validate(SolutionProgram(
            (SubProgram(add_id, (n0, table.lookup("#1"))),
             SubProgram(add_id, (n0, n0))), p.problem_type), table)


def test_round_trip_random_programs(registry):
    # 1000 seeded random valid programs survive to_flat -> from_flat unchanged
    rng = np.random.default_rng(20240817)
    p = cal_problem(registry, "given 4 and 9 and 25 and 7")
    table = registry.table_for(p)
    ops = [sid for sid in registry.operator_ids
           if "cal" in registry.entries[sid].types]
    operand_pool = [table.lookup(s) for s in ("C_pi", "C_1", "C_2", "C_180",
                                              "N_0", "N_1", "N_2", "N_3")]
    for _ in range(1000):
        n_subs = int(rng.integers(1, registry.max_op + 1))
        subs = []
        for t in range(n_subs):
            op = ops[int(rng.integers(0, len(ops)))]
            entry = registry.entries[op]
            arity = int(rng.integers(entry.min_args, entry.max_args + 1))
            pool = operand_pool + [table.lookup(f"#{j}") for j in range(t)]
            args = tuple(pool[int(rng.integers(0, len(pool)))] for _ in range(arity))
            subs.append(SubProgram(op, args))
        prog = SolutionProgram(tuple(subs), p.problem_type)
        validate(prog, table)
        again = from_flat(to_flat(prog, table), table, p.problem_type)
        assert canonical_equal(prog, again)


def test_execute_cal_circle_area(registry):
    # pi comes from the registry constant, so the area of a radius-2 circle
    # is 3.141593 * 4
    p = cal_problem(registry, "radius 2")
    table = registry.table_for(p)
    prog = build(table, ("Circle_R_Area", "N_0"))
    assert execute_cal(prog, [2.0], table) == pytest.approx(12.566372, abs=1e-6)


def test_execute_cal_chained_average(registry):
    p = cal_problem(registry, "given 3 and 5")
    table = registry.table_for(p)
    prog = build(table, ("add", "N_0", "N_1"), ("div", "#0", "C_2"))
    assert execute_cal(prog, [3.0, 5.0], table) == 4.0


def test_execute_cal_trig_degrees(registry):
    p = cal_problem(registry, "angle 30")
    table = registry.table_for(p)
    prog = build(table, ("sin_deg", "N_0"))
    assert execute_cal(prog, [30.0], table) == pytest.approx(0.5, abs=1e-6)
    prog = build(table, ("cos_deg", "N_0"))
    assert execute_cal(prog, [60.0], table) == pytest.approx(0.5, abs=1e-6)


def test_execute_cal_error_cases(registry):
    p = cal_problem(registry, "given 3 and 0")
    table = registry.table_for(p)
    with pytest.raises(DivisionByZero):
        execute_cal(build(table, ("div", "N_0", "N_1")), [3.0, 0.0], table)
    with pytest.raises(UnboundNumber):
        execute_cal(build(table, ("add", "N_0", "N_1")), [3.0], table)
    prv = preprocess("show △ABC")
    prv.problem_type = registry.problem_type("prv")
    tprv = registry.table_for(prv)
    theorem = SolutionProgram(
        (SubProgram(tprv.lookup("R_0"), (tprv.lookup("E_0"),)),),
        prv.problem_type)
    with pytest.raises(NonExecutableOperator):
        execute_cal(theorem, [], tprv)


def test_execute_matches_direct_arithmetic(registry):
    p = cal_problem(registry, "given 7 and 2")
    table = registry.table_for(p)
    cases = [
        (build(table, ("sub", "N_0", "N_1")), 5.0),
        (build(table, ("mul", "N_0", "N_1")), 14.0),
        (build(table, ("pow", "N_1", "C_2")), 4.0),
        (build(table, ("add", "N_0", "C_1"), ("mul", "#0", "N_1")), 16.0),
    ]
    for prog, want in cases:
        assert execute_cal(prog, [7.0, 2.0], table) == pytest.approx(want)


def test_operand_count_histogram(registry):
    p = cal_problem(registry, "given 3 and 5")
    table = registry.table_for(p)
    progs = [
        build(table, ("add", "N_0", "N_1")),
        build(table, ("Circle_R_Area", "N_0")),
        build(table, ("add", "N_0", "N_1"), ("div", "#0", "C_2")),
    ]
    hist = operand_count_histogram(progs)
    assert hist == {1: 1, 2: 3}


def test_canonical_equality_ignores_nothing(registry):
    # identity is at symbol-id level: same ops, same operands, same order
    p = cal_problem(registry, "given 3 and 5")
    table = registry.table_for(p)
    a = build(table, ("add", "N_0", "N_1"))
    b = build(table, ("add", "N_1", "N_0"))
    assert not canonical_equal(a, b)
    assert canonical_equal(a, build(table, ("add", "N_0", "N_1")))


def test_validate_operand_count_bounds():
    # validity is the global 1..max_oe window, not each operator's declared
    # arity; declared arity guides synthesis only
    doc = {
        "types": ["x"],
        "operators": [{"surface": "f", "types": ["x"], "min_args": 1, "max_args": 3}],
        "constants": [{"surface": "k", "value": 1.0, "types": ["x"]}],
        "limits": {"max_op": 2, "max_oe": 3},
    }
    r = build_registry(doc)
    p = preprocess("anything")
    p.problem_type = r.problem_type("x")
    table = r.table_for(p)
    f, k = table.lookup("f"), table.lookup("k")
    for arity in (1, 2, 3):
        validate(SolutionProgram((SubProgram(f, (k,) * arity),), p.problem_type), table)
    with pytest.raises(MalformedProgram):
        validate(SolutionProgram((SubProgram(f, ()),), p.problem_type), table)
