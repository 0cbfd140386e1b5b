from fractions import Fraction

import numpy as np
import pytest

import oracle
from minprec.precision import BINARY32, BINARY64, DEFAULT_LATTICE, PrecisionSpec, prec_arith
from minprec.solvers import (
    Arith,
    DenseMatrix,
    DivergenceError,
    GMRESBenchmark,
    IRBenchmark,
    IRConfig,
    InvalidKnobsError,
    SingularMatrixError,
    StagnationError,
    direct_solve,
    forward_error,
    gen_matrix,
    gmres_m,
    ir_solve,
    lu_factor,
    lu_solve,
)
from minprec.tuner import TuneRequest, tune

S24E11 = PrecisionSpec(24, 11)
MIXED = IRConfig(BINARY64, BINARY32, BINARY64, 2.0**-50, 50)


def test_gen_matrix_examples():
    a = gen_matrix(1, 1, 3).data
    assert a.shape == (1, 1) and abs(a[0, 0]) == pytest.approx(1.0, abs=1e-15)
    m = gen_matrix(50, 1e3, 7)
    assert 5e2 <= np.linalg.cond(m.data) <= 2e3
    assert np.array_equal(m.data, gen_matrix(50, 1e3, 7).data)
    assert not np.array_equal(m.data, gen_matrix(50, 1e3, 8).data)
    with pytest.raises(ValueError):
        DenseMatrix(np.ones((2, 3)))


@pytest.mark.parametrize("op", ["add", "sub", "mul", "div"])
def test_emulated_arith_matches_scalar_oracle(op):
    rng = np.random.default_rng(1)
    a = rng.standard_normal(300) * 10
    b = rng.standard_normal(300)
    ar = Arith(S24E11)
    a, b = ar.round(a), ar.round(b)
    got = getattr(ar, op)(a, b)
    assert all(g == prec_arith(op, (x, y), S24E11) for g, x, y in zip(got, a, b))


def test_native_arith_is_binary32():
    rng = np.random.default_rng(2)
    a, b = (rng.standard_normal(100).astype(np.float32) for _ in range(2))
    ar = Arith(BINARY32)
    assert np.array_equal(ar.mul(a, b), (a * b).astype(np.float64))
    assert ar.scalar("div", 1.0, 3.0) == prec_arith("div", (1.0, 3.0), BINARY32)


@pytest.mark.parametrize("op", ["add", "mul", "div", "sqrt"])
def test_random_rounding_at_double_picks_neighbours(op):
    rng = np.random.default_rng(3)
    a = rng.uniform(0.5, 4, 200)
    b = rng.uniform(0.5, 4, 200)
    ar = Arith(BINARY64, seed=11)
    got = ar.sqrt(a) if op == "sqrt" else getattr(ar, op)(a, b)
    ups = 0
    for g, x, y in zip(got, a, b):
        if op == "sqrt":
            lo, hi = oracle.sqrt_neighbours(x, 53, 11)
        else:
            lo, hi = oracle.neighbours(oracle.exact(op, (x, y)), 53, 11)
        assert Fraction(g) in (lo, hi)
        ups += lo != hi and Fraction(g) == hi
    assert 50 < ups < 150


def test_lu_matches_direct_solve():
    a = gen_matrix(30, 10, 0)
    b = np.arange(30.0)
    f = lu_factor(a.data, Arith(BINARY64))
    assert forward_error(lu_solve(f, b), direct_solve(a, b)) < 1e-13


def test_ir_identity():
    b = np.random.default_rng(0).standard_normal(8)
    res = ir_solve(np.eye(8), b, IRConfig(BINARY64, BINARY64, BINARY64))
    assert np.array_equal(res.x, b) and res.iterations == 1
    b32 = b.astype(np.float32).astype(np.float64)
    res = ir_solve(np.eye(8), b32, MIXED)
    assert np.array_equal(res.x, b32) and res.iterations == 1


def test_ir_mixed_precision_converges():
    a = gen_matrix(100, 1e3, 0)
    b = np.random.default_rng(0).standard_normal(100)
    res = ir_solve(a, b, MIXED)
    assert res.iterations <= 10
    assert forward_error(res.x, direct_solve(a, b)) <= 1e-12
    assert all(x > y for x, y in zip(res.history, res.history[1:]))


def test_ir_double_converges_fast():
    for seed in range(3):
        a = gen_matrix(60, 1e6, seed)
        b = np.ones(60)
        res = ir_solve(a, b, IRConfig(BINARY64, BINARY64, BINARY64))
        assert res.iterations <= 2


def test_ir_errors():
    with pytest.raises(SingularMatrixError):
        ir_solve(np.array([[1.0, 2.0], [2.0, 4.0]]), np.ones(2), MIXED)
    with pytest.raises(DivergenceError) as info:
        ir_solve(gen_matrix(40, 1e10, 0), np.ones(40), MIXED)
    assert len(info.value.history) >= 4
    with pytest.raises(ValueError):
        IRConfig(BINARY32, BINARY64, BINARY64)
    with pytest.raises(ValueError):
        IRConfig(tol=0)


def test_ir_deterministic():
    a = gen_matrix(40, 1e3, 4)
    b = np.ones(40)
    r1, r2 = ir_solve(a, b, MIXED), ir_solve(a, b, MIXED)
    assert np.array_equal(r1.x, r2.x) and r1.history == r2.history


def test_gmres_identity():
    b = np.arange(1.0, 7.0)
    res = gmres_m(np.eye(6), b, 3, BINARY64, BINARY64, 1e-10, 5)
    assert res.inner_iterations == 1 and res.restarts == 1
    assert np.array_equal(res.x, b)
    # a binary32 inner cycle is only good to binary32 accuracy
    res = gmres_m(np.eye(6), b, 3, BINARY32, BINARY64, 1e-10, 5)
    assert res.restarts <= 3 and np.linalg.norm(res.x - b) <= 1e-10 * np.linalg.norm(b)


def test_gmres_diagonal_closed_form():
    a = np.diag(np.arange(1.0, 11.0))
    res = gmres_m(a, np.ones(10), 5, BINARY32, BINARY64, 1e-10, 20)
    expected = 1.0 / np.arange(1.0, 11.0)
    assert np.max(np.abs(res.x - expected) / expected) <= 1e-9
    assert res.restarts <= 20


def test_gmres_double_never_worse():
    for seed in range(2):
        a = gen_matrix(80, 1e3, seed)
        b = np.random.default_rng(seed).standard_normal(80)
        mixed = gmres_m(a, b, 80, BINARY32, BINARY64, 1e-10, 30)
        double = gmres_m(a, b, 80, BINARY64, BINARY64, 1e-10, 30)
        assert double.history[-1] <= mixed.history[-1]
        assert double.restarts <= mixed.restarts
        assert mixed.history[-1] <= 10 * mixed.inner_estimate
        assert mixed.inner_estimate <= 10 * mixed.history[-1]


def test_gmres_stagnation():
    a = gen_matrix(60, 1e3, 0)
    with pytest.raises(StagnationError) as info:
        gmres_m(a, np.ones(60), 4, BINARY32, BINARY64, 1e-10, 50)
    h = info.value.history
    assert h[-1] > 0.99 * h[-4]


def test_gmres_deterministic():
    a = gen_matrix(30, 1e2, 1)
    r1 = gmres_m(a, np.ones(30), 30, BINARY32, BINARY64)
    r2 = gmres_m(a, np.ones(30), 30, BINARY32, BINARY64)
    assert np.array_equal(r1.x, r2.x) and r1.history == r2.history


def test_tuning_ir_demotes_factorization():
    rep = tune(TuneRequest(IRBenchmark(100, 1e3, 0), 10, DEFAULT_LATTICE))
    assert rep.config["u_f"].significand_bits < rep.config["u_r"].significand_bits
    assert min(rep.achieved_digits.values()) >= 10


def test_benchmark_knob_ordering():
    g = GMRESBenchmark(n=10, m=10)
    with pytest.raises(InvalidKnobsError):
        g.evaluate({"inner": BINARY64, "outer": BINARY32})
    with pytest.raises(InvalidKnobsError):
        IRBenchmark(10).evaluate({"u": BINARY64, "u_f": BINARY64, "u_r": BINARY32})
