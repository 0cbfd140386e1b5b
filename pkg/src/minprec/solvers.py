"""Mixed-precision dense solvers with tunable precision knobs.

Two benchmarks: LU-based iterative refinement with separate storage,
factorization and residual precisions, and restarted GMRES whose Arnoldi
cycle runs in a lower precision than the restart residual.

All arithmetic goes through :class:`Arith`, which rounds every elementary
operation to its precision. IEEE formats with a numpy dtype run natively;
other formats compute in binary64 and round the result (exact for
significands up to 26 bits, since binary64 then has enough guard bits).
With a random generator attached every inexact result is rounded up or
down with probability 1/2, which is how stochastic references are built.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .eft import twoprod_array, twosum_array
from .precision import (
    BINARY16,
    BINARY32,
    BINARY64,
    NEAREST,
    PrecisionSpec,
    RandomStream,
    RangeOverflowError,
    prec_arith,
    random_updown,
    round_array,
)
from .stochastic import DigitEstimate, StochasticValue, estimate_digits

_NATIVE = {BINARY16: np.float16, BINARY32: np.float32, BINARY64: np.float64}
PIVOT_FLOOR = 2.0**-500


class SolverError(ArithmeticError):
    kind = "solver"

    def __init__(self, message: str, history: list[float] | None = None):
        super().__init__(message)
        self.history = list(history or [])


class SingularMatrixError(SolverError):
    kind = "singular"


class DivergenceError(SolverError):
    kind = "divergence"


class StagnationError(SolverError):
    kind = "stagnation"


class NotConvergedError(SolverError):
    kind = "not-converged"


class InvalidKnobsError(SolverError):
    """A precision assignment that violates a solver's ordering invariant."""

    kind = "invalid-knobs"


class Arith:
    """Elementwise and reduction arithmetic rounded to one precision."""

    def __init__(self, spec: PrecisionSpec, seed: int | np.random.SeedSequence | None = None):
        self.spec = spec
        self.random = seed is not None
        if self.random:
            ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
            vec_ss, scalar_ss = ss.spawn(2)
            self.rng = np.random.Generator(np.random.PCG64(vec_ss))
            self._directive = random_updown(RandomStream(scalar_ss))
        else:
            self.rng = None
            self._directive = NEAREST
        self.dtype = None if self.random else _NATIVE.get(spec)

    # -- elementwise ----------------------------------------------------

    def round(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if self.dtype is not None:
            with np.errstate(over="ignore"):
                out = x.astype(self.dtype).astype(np.float64)
            return _finite(out, self.spec)
        return round_array(x, self.spec, self.rng)

    def _native(self, fn, *args) -> np.ndarray:
        dt = self.dtype
        with np.errstate(over="ignore", invalid="ignore"):
            out = fn(*(np.asarray(a, dtype=np.float64).astype(dt) for a in args)).astype(np.float64)
        return _finite(out, self.spec)

    def _random53(self, r: np.ndarray, err_sign: np.ndarray) -> np.ndarray:
        """Random up/down at binary64 given the nearest result and the sign of exact - r."""
        toward = np.nextafter(r, np.where(err_sign > 0, np.inf, -np.inf))
        bits = self.rng.integers(0, 2, size=r.shape)
        out = np.where((err_sign != 0) & (bits == 1), toward, r)
        return _finite(out, self.spec)

    def add(self, a, b) -> np.ndarray:
        if self.dtype is not None:
            return self._native(np.add, a, b)
        if self.random and self.spec == BINARY64:
            s, e = twosum_array(a, b)
            return self._random53(_finite(s, self.spec), np.sign(e))
        return self.round(np.add(a, b))

    def sub(self, a, b) -> np.ndarray:
        return self.add(a, -np.asarray(b, dtype=np.float64))

    def mul(self, a, b) -> np.ndarray:
        if self.dtype is not None:
            return self._native(np.multiply, a, b)
        if self.random and self.spec == BINARY64:
            p, e = twoprod_array(a, b)
            return self._random53(_finite(p, self.spec), np.sign(e))
        return self.round(np.multiply(a, b))

    def div(self, a, b) -> np.ndarray:
        b = np.asarray(b, dtype=np.float64)
        if np.any(b == 0):
            raise SingularMatrixError("division by zero")
        if self.dtype is not None:
            return self._native(np.divide, a, b)
        if self.random and self.spec == BINARY64:
            a = np.asarray(a, dtype=np.float64)
            q = a / b
            p, pe = twoprod_array(q, b)
            # a - p is exact (p is within a factor 2 of a)
            sign = np.sign((a - p) - pe) * np.sign(b)
            return self._random53(_finite(q, self.spec), sign)
        return self.round(np.divide(a, b))

    def sqrt(self, a) -> np.ndarray:
        a = np.asarray(a, dtype=np.float64)
        if self.dtype is not None:
            return self._native(np.sqrt, a)
        if self.random and self.spec == BINARY64:
            s = np.sqrt(a)
            p, pe = twoprod_array(s, s)
            return self._random53(s, np.sign((a - p) - pe))
        return self.round(np.sqrt(a))

    # -- reductions -----------------------------------------------------

    def sum(self, x: np.ndarray, axis: int = -1) -> np.ndarray:
        """Pairwise (tree) summation along an axis, rounding every addition."""
        x = np.moveaxis(np.asarray(x, dtype=np.float64), axis, -1)
        if x.shape[-1] == 0:
            return np.zeros(x.shape[:-1])
        if self.dtype is not None:
            # numpy's own reductions are pairwise as well
            with np.errstate(over="ignore"):
                return _finite(x.astype(self.dtype).sum(axis=-1).astype(np.float64), self.spec)
        while x.shape[-1] > 1:
            h = x.shape[-1] // 2
            s = self.add(x[..., :h], x[..., h : 2 * h])
            x = np.concatenate([s, x[..., 2 * h :]], axis=-1) if x.shape[-1] % 2 else s
        return x[..., 0]

    def dot(self, x: np.ndarray, y: np.ndarray) -> float:
        if self.dtype is not None:
            return float(self._native(np.dot, x, y))
        return float(self.sum(self.mul(x, y)))

    def matvec(self, a: np.ndarray, x: np.ndarray) -> np.ndarray:
        if self.dtype is not None:
            return self._native(np.matmul, a, x)
        return self.sum(self.mul(a, np.asarray(x)[None, :]), axis=1)

    def orthogonalize(self, w: np.ndarray, basis: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Modified Gram-Schmidt of w against the rows of basis."""
        h = np.zeros(len(basis))
        if self.dtype is not None:
            dt = self.dtype
            w = w.astype(dt)
            vs = basis.astype(dt)
            with np.errstate(over="ignore", invalid="ignore"):
                for i, v in enumerate(vs):
                    hi = np.dot(w, v)
                    w = w - hi * v
                    h[i] = hi
            return _finite(w.astype(np.float64), self.spec), _finite(h, self.spec)
        for i, v in enumerate(basis):
            h[i] = self.dot(w, v)
            w = self.sub(w, self.mul(h[i], v))
        return w, h

    def norm2(self, x: np.ndarray) -> float:
        return float(self.sqrt(self.dot(x, x)))

    # -- scalars --------------------------------------------------------

    def scalar(self, op: str, *args: float) -> float:
        if self.dtype is not None:
            t = self.dtype
            vals = [t(a) for a in args]
            with np.errstate(over="ignore", invalid="ignore"):
                if op == "add":
                    r = vals[0] + vals[1]
                elif op == "sub":
                    r = vals[0] - vals[1]
                elif op == "mul":
                    r = vals[0] * vals[1]
                elif op == "div":
                    if vals[1] == 0:
                        raise SingularMatrixError("division by zero")
                    r = vals[0] / vals[1]
                else:
                    r = np.sqrt(vals[0])
            r = float(r)
            if not math.isfinite(r):
                raise RangeOverflowError(f"scalar {op} overflowed {self.spec}")
            return r
        if op == "div" and args[1] == 0:
            raise SingularMatrixError("division by zero")
        return prec_arith(op, [float(a) for a in args], self.spec, self._directive)


def _finite(x: np.ndarray, spec: PrecisionSpec) -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise RangeOverflowError(f"value exceeds the range of {spec}")
    return x


# --- matrices ---------------------------------------------------------------


@dataclass(frozen=True)
class DenseMatrix:
    data: np.ndarray
    seed: int | None = None
    cond: float | None = None

    def __post_init__(self):
        a = np.asarray(self.data, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"matrix must be square, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("matrix entries must be finite")
        a = np.ascontiguousarray(a)
        a.setflags(write=False)
        object.__setattr__(self, "data", a)

    @property
    def n(self) -> int:
        return self.data.shape[0]


def gen_matrix(n: int, cond: float, seed: int) -> DenseMatrix:
    """Q1 diag(sigma) Q2^T with sigma geometric from 1 down to 1/cond."""
    if n < 1 or cond < 1:
        raise ValueError("need n >= 1 and cond >= 1")
    rng = np.random.default_rng(seed)
    q1, _ = np.linalg.qr(rng.standard_normal((n, n)))
    q2, _ = np.linalg.qr(rng.standard_normal((n, n)))
    sigma = np.geomspace(1.0, 1.0 / cond, n)
    return DenseMatrix((q1 * sigma) @ q2.T, seed, cond)


def _as_array(a) -> np.ndarray:
    return a.data if isinstance(a, DenseMatrix) else np.asarray(a, dtype=np.float64)


def norm_inf(x: np.ndarray) -> float:
    x = np.asarray(x)
    if x.ndim == 1:
        return float(np.max(np.abs(x))) if x.size else 0.0
    return float(np.max(np.sum(np.abs(x), axis=1)))


# --- LU with partial pivoting ------------------------------------------------


@dataclass
class LUFactors:
    lu: np.ndarray
    perm: np.ndarray
    arith: Arith


def lu_factor(a: np.ndarray, ar: Arith) -> LUFactors:
    a = ar.round(np.array(a, dtype=np.float64))
    n = a.shape[0]
    perm = np.arange(n)
    for k in range(n):
        p = k + int(np.argmax(np.abs(a[k:, k])))
        if abs(a[p, k]) < PIVOT_FLOOR:
            raise SingularMatrixError(f"pivot {a[p, k]!r} at column {k} is below 2^-500")
        if p != k:
            a[[k, p]] = a[[p, k]]
            perm[[k, p]] = perm[[p, k]]
        if k + 1 < n:
            a[k + 1 :, k] = ar.div(a[k + 1 :, k], a[k, k])
            update = ar.mul(a[k + 1 :, k, None], a[None, k, k + 1 :])
            a[k + 1 :, k + 1 :] = ar.sub(a[k + 1 :, k + 1 :], update)
    return LUFactors(a, perm, ar)


def lu_solve(f: LUFactors, b: np.ndarray) -> np.ndarray:
    ar, lu = f.arith, f.lu
    n = lu.shape[0]
    y = ar.round(np.asarray(b, dtype=np.float64)[f.perm])
    for j in range(n - 1):
        y[j + 1 :] = ar.sub(y[j + 1 :], ar.mul(lu[j + 1 :, j], y[j]))
    for j in range(n - 1, -1, -1):
        y[j] = ar.div(y[j], lu[j, j])
        if j:
            y[:j] = ar.sub(y[:j], ar.mul(lu[:j, j], y[j]))
    return y


# --- iterative refinement ------------------------------------------------------


@dataclass(frozen=True)
class IRConfig:
    u: PrecisionSpec = BINARY64
    u_f: PrecisionSpec = BINARY32
    u_r: PrecisionSpec = BINARY64
    tol: float = 2.0**-50
    max_iter: int = 50

    def __post_init__(self):
        if not (self.u_f.significand_bits <= self.u.significand_bits <= self.u_r.significand_bits):
            raise ValueError(f"need u_f <= u <= u_r, got {self.u_f}, {self.u}, {self.u_r}")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")


@dataclass
class IRResult:
    x: np.ndarray
    iterations: int
    history: list[float]


def ir_solve(a, b, c: IRConfig, seed: int | None = None) -> IRResult:
    """LU factorization at u_f refined with residuals at u_r and updates at u.

    ``iterations`` counts residual evaluations. With ``seed`` every
    operation is randomly rounded (three such runs form a stochastic
    reference).
    """
    a = _as_array(a)
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (a.shape[0],):
        raise ValueError(f"right-hand side has shape {b.shape}, expected ({a.shape[0]},)")
    ss = np.random.SeedSequence(seed).spawn(3) if seed is not None else [None] * 3
    ar_f, ar_u, ar_r = Arith(c.u_f, ss[0]), Arith(c.u, ss[1]), Arith(c.u_r, ss[2])
    factors = lu_factor(a, ar_f)
    x = ar_u.round(lu_solve(factors, b))
    a_norm, b_norm = norm_inf(a), norm_inf(b)
    history: list[float] = []
    growths = 0
    for it in range(1, c.max_iter + 1):
        r = ar_r.sub(ar_r.round(b), ar_r.matvec(ar_r.round(a), x))
        rn = norm_inf(r)
        if history and rn >= history[-1]:
            growths += 1
        else:
            growths = 0
        history.append(rn)
        if rn <= c.tol * (a_norm * norm_inf(x) + b_norm):
            return IRResult(x, it, history)
        if growths >= 3:
            raise DivergenceError("residual grew for 3 consecutive iterations", history)
        d = lu_solve(factors, r)
        x = ar_u.add(x, ar_u.round(d))
    raise NotConvergedError(f"no convergence within {c.max_iter} iterations", history)


# --- restarted GMRES ------------------------------------------------------------


@dataclass
class GMRESResult:
    x: np.ndarray
    restarts: int
    history: list[float]
    inner_estimate: float
    inner_iterations: int = 0


def _givens(ar: Arith, a: float, b: float) -> tuple[float, float, float]:
    """Rotation (c, s) zeroing b against a, and the resulting radius."""
    if b == 0.0:
        return 1.0, 0.0, a
    r = ar.scalar("sqrt", ar.scalar("add", ar.scalar("mul", a, a), ar.scalar("mul", b, b)))
    return ar.scalar("div", a, r), ar.scalar("div", b, r), r


def gmres_m(
    a,
    b,
    m: int,
    inner: PrecisionSpec = BINARY32,
    outer: PrecisionSpec = BINARY64,
    tol: float = 1e-10,
    max_restart: int = 50,
    seed: int | None = None,
) -> GMRESResult:
    """GMRES(m): Arnoldi (modified Gram-Schmidt) and Givens least squares at
    ``inner``; the true residual and the solution update at ``outer``."""
    if m < 1:
        raise ValueError("restart length m must be at least 1")
    a = _as_array(a)
    n = a.shape[0]
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (n,):
        raise ValueError(f"right-hand side has shape {b.shape}, expected ({n},)")
    ss = np.random.SeedSequence(seed).spawn(2) if seed is not None else [None] * 2
    ai, ao = Arith(inner, ss[0]), Arith(outer, ss[1])
    a_in, a_out = ai.round(a), ao.round(a)
    b_out = ao.round(b)
    b_norm = float(np.linalg.norm(b))
    x = np.zeros(n)
    history: list[float] = []
    estimate = math.inf
    total_inner = 0
    m = min(m, n)
    unit = 2.0 ** -inner.significand_bits
    for restart in range(max_restart + 1):
        r = ao.sub(b_out, ao.matvec(a_out, x))
        rn = ao.norm2(r)
        history.append(rn)
        if rn <= tol * b_norm:
            return GMRESResult(x, restart, history, estimate if restart else rn, total_inner)
        if len(history) >= 4 and history[-1] > 0.99 * history[-4]:
            raise StagnationError("restart residual fell by less than 1% over 3 restarts", history)
        if restart == max_restart:
            break
        r_in = ai.round(r)
        beta = ai.norm2(r_in)
        v = np.zeros((m + 1, n))
        h = np.zeros((m + 1, m))
        cs, sn = np.zeros(m), np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = beta
        v[0] = ai.div(r_in, beta)
        k = 0
        for j in range(m):
            av = ai.matvec(a_in, v[j])
            w, h[: j + 1, j] = ai.orthogonalize(av, v[: j + 1])
            h[j + 1, j] = ai.norm2(w)
            for i in range(j):
                t = ai.scalar("add", ai.scalar("mul", cs[i], h[i, j]), ai.scalar("mul", sn[i], h[i + 1, j]))
                h[i + 1, j] = ai.scalar("sub", ai.scalar("mul", cs[i], h[i + 1, j]), ai.scalar("mul", sn[i], h[i, j]))
                h[i, j] = t
            # a remainder at rounding level means the Krylov space is numerically invariant
            breakdown = h[j + 1, j] <= unit * float(np.linalg.norm(av))
            if not breakdown:
                v[j + 1] = ai.div(w, h[j + 1, j])
            cs[j], sn[j], h[j, j] = _givens(ai, h[j, j], h[j + 1, j])
            h[j + 1, j] = 0.0
            g[j + 1] = -ai.scalar("mul", sn[j], g[j])
            g[j] = ai.scalar("mul", cs[j], g[j])
            k = j + 1
            estimate = abs(g[j + 1])
            # on breakdown the small least-squares system is solved exactly
            if breakdown or estimate <= tol * b_norm:
                break
        total_inner += k
        y = np.zeros(k)
        for i in range(k - 1, -1, -1):
            acc = g[i]
            for l in range(i + 1, k):
                acc = ai.scalar("sub", acc, ai.scalar("mul", h[i, l], y[l]))
            y[i] = ai.scalar("div", acc, h[i, i])
        dx = np.zeros(n)
        for i in range(k):
            dx = ai.add(dx, ai.mul(y[i], v[i]))
        x = ao.add(x, ao.round(dx))
    raise NotConvergedError(f"no convergence within {max_restart} restarts", history)


# --- benchmark harness -----------------------------------------------------------


def forward_error(x: np.ndarray, x_ref: np.ndarray) -> float:
    return norm_inf(np.asarray(x) - x_ref) / norm_inf(x_ref)


def direct_solve(a, b) -> np.ndarray:
    """Full binary64 LU solve, the oracle for forward errors."""
    return np.linalg.solve(_as_array(a), np.asarray(b, dtype=np.float64))


def _stochastic_outputs(runs: list[np.ndarray], prec: PrecisionSpec) -> dict[str, tuple[float, DigitEstimate]]:
    out = {}
    for i in range(len(runs[0])):
        sv = StochasticValue(tuple(float(r[i]) for r in runs), prec)
        out[f"x{i}"] = (sv.mean, estimate_digits(sv))
    return out


def _solution(n: int, seed: int) -> np.ndarray:
    return np.random.default_rng([seed, 1]).uniform(1.0, 2.0, n)


class IRBenchmark:
    """Iterative refinement as a tuning target; knobs u, u_f and u_r.

    The right-hand side is A @ x_true with x_true drawn from [1, 2], so
    every solution component is O(1) and not exactly representable.
    """

    variables = ["u", "u_f", "u_r"]

    def __init__(self, n: int = 100, cond: float = 1e3, seed: int = 0, tol: float = 2.0**-50, max_iter: int = 50):
        self.matrix = gen_matrix(n, cond, seed)
        self.x_true = _solution(n, seed)
        self.b = self.matrix.data @ self.x_true
        self.tol = tol
        self.max_iter = max_iter

    def config(self, cfg: dict[str, PrecisionSpec]) -> IRConfig:
        try:
            return IRConfig(cfg["u"], cfg["u_f"], cfg["u_r"], self.tol, self.max_iter)
        except ValueError as exc:
            raise InvalidKnobsError(str(exc)) from exc

    def evaluate(self, cfg: dict[str, PrecisionSpec]) -> dict[str, float]:
        res = ir_solve(self.matrix, self.b, self.config(cfg))
        return {f"x{i}": float(v) for i, v in enumerate(res.x)}

    def reference(self, prec: PrecisionSpec, seed: int) -> dict[str, tuple[float, DigitEstimate]]:
        c = IRConfig(prec, prec, prec, self.tol, self.max_iter)
        seeds = np.random.SeedSequence(seed).generate_state(3)
        runs = [ir_solve(self.matrix, self.b, c, seed=int(s)).x for s in seeds]
        return _stochastic_outputs(runs, prec)

    def cost(self, cfg: dict[str, PrecisionSpec]) -> float:
        n = self.matrix.n
        f, r = cfg["u_f"].significand_bits, cfg["u_r"].significand_bits
        # factorization dominates: n^3/3 multiply-adds at u_f; one residual pass per step at u_r
        return (n**3 / 3) * (f + f * f / 53) + n * n * (r + r * r / 53)


class GMRESBenchmark:
    """Restarted GMRES as a tuning target; knobs inner and outer."""

    variables = ["inner", "outer"]

    def __init__(self, n: int = 40, cond: float = 1e2, seed: int = 0, m: int = 40, tol: float = 1e-10):
        self.matrix = gen_matrix(n, cond, seed)
        self.x_true = _solution(n, seed)
        self.b = self.matrix.data @ self.x_true
        self.m = m
        self.tol = tol

    def evaluate(self, cfg: dict[str, PrecisionSpec]) -> dict[str, float]:
        if cfg["inner"].significand_bits > cfg["outer"].significand_bits:
            raise InvalidKnobsError("inner precision must not exceed outer precision")
        res = gmres_m(self.matrix, self.b, self.m, cfg["inner"], cfg["outer"], self.tol)
        return {f"x{i}": float(v) for i, v in enumerate(res.x)}

    def reference(self, prec: PrecisionSpec, seed: int) -> dict[str, tuple[float, DigitEstimate]]:
        seeds = np.random.SeedSequence(seed).generate_state(3)
        runs = [gmres_m(self.matrix, self.b, self.m, prec, prec, self.tol, seed=int(s)).x for s in seeds]
        return _stochastic_outputs(runs, prec)

    def cost(self, cfg: dict[str, PrecisionSpec]) -> float:
        i, o = cfg["inner"].significand_bits, cfg["outer"].significand_bits
        n = self.matrix.n
        return self.m * n * n * (i + i * i / 53) + n * n * (o + o * o / 53)


__all__ = [
    "Arith",
    "DenseMatrix",
    "DivergenceError",
    "GMRESBenchmark",
    "GMRESResult",
    "IRBenchmark",
    "IRConfig",
    "IRResult",
    "InvalidKnobsError",
    "NotConvergedError",
    "SingularMatrixError",
    "SolverError",
    "StagnationError",
    "direct_solve",
    "forward_error",
    "gen_matrix",
    "gmres_m",
    "ir_solve",
    "lu_factor",
    "lu_solve",
    "norm_inf",
]
