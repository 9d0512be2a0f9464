"""Composable operator descriptions with evaluation on sampled signals.

An :class:`OperatorSpec` wraps one node (stable LTI state space, static
nonlinearity from a registry, scaling, sum, or feedback combinator) together
with optional certified metadata: a declared incremental gain bound and a
declared region containing the operator's scaled relative graph.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Callable

import numpy as np
import scipy.linalg
import scipy.signal

from .signals import Signal, norm, truncate

if TYPE_CHECKING:  # pragma: no cover
    from .srg import Region

__all__ = [
    "OperatorSpec",
    "LtiNode",
    "StaticNlNode",
    "ScaleNode",
    "SumNode",
    "FeedbackNode",
    "GainEstimate",
    "CausalityResult",
    "DeclaredGainViolation",
    "Nonlinearity",
    "NONLINEARITIES",
    "register_nonlinearity",
    "lti",
    "static_nl",
    "scale",
    "op_sum",
    "feedback",
    "apply",
    "estimate_incremental_gain",
    "causality_check",
    "relational_inverse_apply",
]

_HURWITZ_TOL = -1e-9


class DeclaredGainViolation(RuntimeError):
    """An empirical gain estimate exceeded the operator's declared bound."""


# ---------------------------------------------------------------------------
# Static nonlinearity registry.  Every entry ships a closed-form Lipschitz
# constant and slope sector; inversion is available for strictly monotone
# entries only.


@dataclass(frozen=True)
class Nonlinearity:
    name: str
    fn: Callable[[np.ndarray, float | None], np.ndarray]
    lipschitz: Callable[[float | None], float]
    sector: Callable[[float | None], tuple[float, float]]
    monotone: bool
    # Open interval of attainable outputs; None means all of R.
    output_range: Callable[[float | None], tuple[float, float]] | None = None


def _require_param(param: float | None, name: str) -> float:
    if param is None:
        raise ValueError(f"nonlinearity '{name}' requires a parameter")
    return float(param)


NONLINEARITIES: dict[str, Nonlinearity] = {}


def register_nonlinearity(entry: Nonlinearity) -> None:
    if entry.name in NONLINEARITIES:
        raise ValueError(f"nonlinearity '{entry.name}' already registered")
    NONLINEARITIES[entry.name] = entry


register_nonlinearity(Nonlinearity(
    "identity", lambda x, p: x, lambda p: 1.0, lambda p: (1.0, 1.0), True))
register_nonlinearity(Nonlinearity(
    "gain",
    lambda x, p: _require_param(p, "gain") * x,
    lambda p: abs(_require_param(p, "gain")),
    lambda p: (_require_param(p, "gain"),) * 2,
    True))
register_nonlinearity(Nonlinearity(
    "saturation",
    lambda x, p: np.clip(x, -_require_param(p, "saturation"),
                         _require_param(p, "saturation")),
    lambda p: 1.0, lambda p: (0.0, 1.0), False))
register_nonlinearity(Nonlinearity(
    "deadzone",
    lambda x, p: x - np.clip(x, -_require_param(p, "deadzone"),
                             _require_param(p, "deadzone")),
    lambda p: 1.0, lambda p: (0.0, 1.0), False))
register_nonlinearity(Nonlinearity(
    "neg_arctan", lambda x, p: -np.arctan(x), lambda p: 1.0,
    lambda p: (-1.0, 0.0), True,
    lambda p: (-np.pi / 2, np.pi / 2)))
register_nonlinearity(Nonlinearity(
    "tanh", lambda x, p: np.tanh(x), lambda p: 1.0, lambda p: (0.0, 1.0), True,
    lambda p: (-1.0, 1.0)))


# ---------------------------------------------------------------------------
# Operator nodes.


@dataclass(frozen=True, eq=False)
class LtiNode:
    """Continuous-time state space (A, B, C, D); A must be Hurwitz."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray

    def __post_init__(self) -> None:
        a = np.atleast_2d(np.asarray(self.a, dtype=float))
        b = np.atleast_2d(np.asarray(self.b, dtype=float))
        c = np.atleast_2d(np.asarray(self.c, dtype=float))
        d = np.atleast_2d(np.asarray(self.d, dtype=float))
        nx = a.shape[0]
        if a.shape != (nx, nx):
            raise ValueError("A must be square")
        if b.shape[0] != nx:
            raise ValueError("B row count must match A")
        if c.shape[1] != nx:
            raise ValueError("C column count must match A")
        if d.shape != (c.shape[0], b.shape[1]):
            raise ValueError("D must be (n_out, n_in)")
        if np.max(np.linalg.eigvals(a).real) >= _HURWITZ_TOL:
            raise ValueError("A must be Hurwitz (all eigenvalue real parts < 0)")
        for name, m in (("a", a), ("b", b), ("c", c), ("d", d)):
            m = m.copy()
            m.setflags(write=False)
            object.__setattr__(self, name, m)

    @property
    def n_in(self) -> int:
        return self.b.shape[1]

    @property
    def n_out(self) -> int:
        return self.c.shape[0]

    def transfer(self, omega: float | np.ndarray) -> np.ndarray:
        """Frequency response C (jwI - A)^-1 B + D, shape (..., n_out, n_in)."""
        omega = np.atleast_1d(np.asarray(omega, dtype=float))
        nx = self.a.shape[0]
        out = np.empty((omega.size, self.n_out, self.n_in), dtype=complex)
        for i, w in enumerate(omega):
            out[i] = self.c @ np.linalg.solve(1j * w * np.eye(nx) - self.a,
                                              self.b) + self.d
        return out


@dataclass(frozen=True, eq=False)
class StaticNlNode:
    """Samplewise scalar nonlinearity applied to every channel."""

    fn_id: str
    param: float | None = None

    def __post_init__(self) -> None:
        if self.fn_id not in NONLINEARITIES:
            raise ValueError(f"unknown nonlinearity '{self.fn_id}'")
        # Force parameter validation early.
        self.entry.lipschitz(self.param)

    @property
    def entry(self) -> Nonlinearity:
        return NONLINEARITIES[self.fn_id]

    @property
    def lipschitz(self) -> float:
        return float(self.entry.lipschitz(self.param))


@dataclass(frozen=True, eq=False)
class ScaleNode:
    c: float
    inner: "OperatorSpec"


@dataclass(frozen=True, eq=False)
class SumNode:
    left: "OperatorSpec"
    right: "OperatorSpec"


@dataclass(frozen=True, eq=False)
class FeedbackNode:
    """Negative feedback of ``backward`` around ``forward``, scaled by tau."""

    forward: "OperatorSpec"
    backward: "OperatorSpec"
    tau: float

    def __post_init__(self) -> None:
        if not 0.0 <= float(self.tau) <= 1.0:
            raise ValueError("feedback fraction tau must lie in [0, 1]")
        object.__setattr__(self, "tau", float(self.tau))


Node = LtiNode | StaticNlNode | ScaleNode | SumNode | FeedbackNode


@dataclass(frozen=True, eq=False)
class OperatorSpec:
    node: Node
    declared_inc_gain: float | None = None
    declared_srg: "Region | None" = None

    def __post_init__(self) -> None:
        if self.declared_inc_gain is not None:
            g = float(self.declared_inc_gain)
            if g < 0.0:
                raise ValueError("declared incremental gain must be nonnegative")
            object.__setattr__(self, "declared_inc_gain", g)

    @property
    def input_dim(self) -> int | None:
        """Required input dimension, or None when any dimension is accepted."""
        return _in_dim(self.node)

    @property
    def output_dim(self) -> int | None:
        return _out_dim(self.node)

    def effective_inc_gain(self) -> float | None:
        """Declared gain, or one derived from the node structure if available."""
        if self.declared_inc_gain is not None:
            return self.declared_inc_gain
        node = self.node
        if isinstance(node, StaticNlNode):
            return node.lipschitz
        if isinstance(node, ScaleNode):
            g = node.inner.effective_inc_gain()
            return None if g is None else abs(node.c) * g
        if isinstance(node, SumNode):
            gl = node.left.effective_inc_gain()
            gr = node.right.effective_inc_gain()
            return None if gl is None or gr is None else gl + gr
        return None

    def effective_srg(self) -> "Region | None":
        if self.declared_srg is not None:
            return self.declared_srg
        node = self.node
        if isinstance(node, StaticNlNode):
            from .srg import sector_disc

            k1, k2 = node.entry.sector(node.param)
            return sector_disc(k1, k2)
        return None


def _in_dim(node: Node) -> int | None:
    if isinstance(node, LtiNode):
        return node.n_in
    if isinstance(node, StaticNlNode):
        return None
    if isinstance(node, ScaleNode):
        return _in_dim(node.inner.node)
    if isinstance(node, SumNode):
        dl, dr = _in_dim(node.left.node), _in_dim(node.right.node)
        if dl is not None and dr is not None and dl != dr:
            raise ValueError("sum operands disagree on input dimension")
        return dl if dl is not None else dr
    return _in_dim(node.forward.node)


def _out_dim(node: Node) -> int | None:
    if isinstance(node, LtiNode):
        return node.n_out
    if isinstance(node, StaticNlNode):
        return None
    if isinstance(node, ScaleNode):
        return _out_dim(node.inner.node)
    if isinstance(node, SumNode):
        dl, dr = _out_dim(node.left.node), _out_dim(node.right.node)
        if dl is not None and dr is not None and dl != dr:
            raise ValueError("sum operands disagree on output dimension")
        return dl if dl is not None else dr
    return _out_dim(node.forward.node)


# Convenience constructors ---------------------------------------------------


def lti(a, b, c, d, declared_inc_gain=None, declared_srg=None) -> OperatorSpec:
    return OperatorSpec(LtiNode(a, b, c, d), declared_inc_gain, declared_srg)


def static_nl(fn_id: str, param: float | None = None,
              declared_inc_gain=None, declared_srg=None) -> OperatorSpec:
    return OperatorSpec(StaticNlNode(fn_id, param), declared_inc_gain,
                        declared_srg)


def scale(c: float, inner: OperatorSpec,
          declared_inc_gain=None, declared_srg=None) -> OperatorSpec:
    return OperatorSpec(ScaleNode(float(c), inner), declared_inc_gain,
                        declared_srg)


def op_sum(left: OperatorSpec, right: OperatorSpec,
           declared_inc_gain=None, declared_srg=None) -> OperatorSpec:
    return OperatorSpec(SumNode(left, right), declared_inc_gain, declared_srg)


def feedback(forward: OperatorSpec, backward: OperatorSpec, tau: float = 1.0,
             declared_inc_gain=None, declared_srg=None) -> OperatorSpec:
    return OperatorSpec(FeedbackNode(forward, backward, tau),
                        declared_inc_gain, declared_srg)


# ---------------------------------------------------------------------------
# Evaluation.  LTI nodes are simulated by exact zero-order-hold discretization
# with zero initial state; the recursion is realized as convolution with the
# ZOH impulse kernel, which is identical sample-for-sample and keeps the
# evaluation strictly causal.

_ZOH_CACHE: dict[tuple, tuple[np.ndarray, np.ndarray]] = {}
_KERNEL_CACHE: dict[tuple, np.ndarray] = {}


def _zoh_discretize(node: LtiNode, dt: float) -> tuple[np.ndarray, np.ndarray]:
    key = (node.a.tobytes(), node.b.tobytes(), node.a.shape, node.b.shape, dt)
    hit = _ZOH_CACHE.get(key)
    if hit is not None:
        return hit
    nx, nu = node.a.shape[0], node.b.shape[1]
    block = np.zeros((nx + nu, nx + nu))
    block[:nx, :nx] = node.a
    block[:nx, nx:] = node.b
    exp = scipy.linalg.expm(block * dt)
    ad, bd = exp[:nx, :nx], exp[:nx, nx:]
    _ZOH_CACHE[key] = (ad, bd)
    return ad, bd


def _zoh_kernel(node: LtiNode, dt: float, n: int) -> np.ndarray:
    """Markov parameters h[k] = C Ad^(k-1) Bd for k >= 1, h[0] = 0."""
    key = (node.a.tobytes(), node.b.tobytes(), node.c.tobytes(),
           node.a.shape, node.b.shape, node.c.shape, dt, n)
    hit = _KERNEL_CACHE.get(key)
    if hit is not None:
        return hit
    ad, bd = _zoh_discretize(node, dt)
    kernel = np.zeros((n, node.n_out, node.n_in))
    state = bd
    for k in range(1, n):
        kernel[k] = node.c @ state
        state = ad @ state
    kernel.setflags(write=False)
    _KERNEL_CACHE[key] = kernel
    return kernel


def _apply_lti(node: LtiNode, u: Signal) -> Signal:
    if u.dim != node.n_in:
        raise ValueError(f"input dimension {u.dim} != expected {node.n_in}")
    n = u.n_samples
    kernel = _zoh_kernel(node, u.dt, n)
    out = u.samples @ node.d.T
    for j in range(node.n_in):
        conv = scipy.signal.fftconvolve(kernel[:, :, j], u.samples[:, j:j + 1],
                                        axes=0)
        out = out + conv[:n]
    return Signal(out, u.dt)


def apply(op: OperatorSpec, u: Signal) -> Signal:
    """Evaluate the operator on a signal (pure; fresh state per call)."""
    node = op.node
    if isinstance(node, LtiNode):
        return _apply_lti(node, u)
    if isinstance(node, StaticNlNode):
        return Signal(node.entry.fn(u.samples, node.param), u.dt)
    if isinstance(node, ScaleNode):
        return node.c * apply(node.inner, u)
    if isinstance(node, SumNode):
        return apply(node.left, u) + apply(node.right, u)
    if isinstance(node, FeedbackNode):
        from .loop import solve_feedback

        return solve_feedback(u, node.forward, node.backward, node.tau).y
    raise TypeError(f"unknown node type {type(node).__name__}")


# ---------------------------------------------------------------------------
# Empirical estimates and checks.


@dataclass(frozen=True)
class GainEstimate:
    """Empirical gain data; empirical estimates are lower bounds on the truth."""

    gamma: float
    beta: float
    incremental: bool
    empirical: bool
    sample_count: int

    def __post_init__(self) -> None:
        if self.gamma < 0.0 or self.beta < 0.0:
            raise ValueError("gamma and beta must be nonnegative")


def estimate_incremental_gain(
    op: OperatorSpec, pairs: list[tuple[Signal, Signal]],
) -> GainEstimate:
    """Largest output/input difference-norm ratio over the given pairs.

    Raises :class:`DeclaredGainViolation` if the estimate exceeds the
    operator's declared incremental gain beyond round-off.
    """
    if not pairs:
        raise ValueError("at least one signal pair is required")
    worst = 0.0
    for u1, u2 in pairs:
        du = norm(u1 - u2)
        if du <= 1e-12:
            raise ValueError("pair is degenerate: ||u1 - u2|| <= 1e-12")
        ratio = norm(apply(op, u1) - apply(op, u2)) / du
        worst = max(worst, ratio)
    declared = op.effective_inc_gain()
    if declared is not None and worst > declared * (1.0 + 1e-6) + 1e-15:
        raise DeclaredGainViolation(
            f"empirical incremental gain {worst:.6g} exceeds declared bound "
            f"{declared:.6g}")
    return GainEstimate(worst, 0.0, incremental=True, empirical=True,
                        sample_count=len(pairs))


@dataclass(frozen=True)
class CausalityResult:
    passed: bool
    max_violation: float
    threshold: float


def causality_check(
    op, u: Signal, t_list: list[float],
) -> CausalityResult:
    """Empirically test P_T H P_T = P_T H on the given truncation times.

    ``op`` may be an :class:`OperatorSpec` or any callable Signal -> Signal
    (useful for checking deliberately anti-causal maps).
    """
    evaluate = (lambda s: apply(op, s)) if isinstance(op, OperatorSpec) else op
    full = evaluate(u)
    threshold = 1e-6 * (1.0 + norm(u))
    worst = 0.0
    for t_cut in t_list:
        left = truncate(evaluate(truncate(u, t_cut)), t_cut)
        right = truncate(full, t_cut)
        worst = max(worst, norm(left - right))
    return CausalityResult(worst <= threshold, worst, threshold)


# ---------------------------------------------------------------------------
# Relational inverse evaluation.


def _bisect_inverse(entry: Nonlinearity, param: float | None,
                    target: np.ndarray) -> np.ndarray:
    """Solve fn(x) = target per sample by bisection; fn strictly monotone."""
    if entry.output_range is not None:
        lo_y, hi_y = entry.output_range(param)
        if np.any(target <= lo_y) or np.any(target >= hi_y):
            raise ValueError(
                f"target outside the range ({lo_y:.6g}, {hi_y:.6g}) of "
                f"'{entry.name}'")
    flat = target.ravel()
    lo = np.full_like(flat, -1.0)
    hi = np.full_like(flat, 1.0)
    f = lambda x: entry.fn(x, param) - flat
    # Expand the bracket until a sign change is enclosed everywhere.
    for _ in range(80):
        bad = f(lo) * f(hi) > 0
        if not np.any(bad):
            break
        lo[bad] *= 2.0
        hi[bad] *= 2.0
    else:
        raise ValueError(f"bisection bracket failure for '{entry.name}'")
    increasing = np.all(f(hi) >= f(lo))
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        val = f(mid)
        if np.max(np.abs(val)) <= 1e-13 and np.max(hi - lo) <= 1e-13:
            break
        go_up = (val < 0) if increasing else (val > 0)
        lo = np.where(go_up, mid, lo)
        hi = np.where(go_up, hi, mid)
    return (0.5 * (lo + hi)).reshape(target.shape)


def relational_inverse_apply(op: OperatorSpec, y: Signal) -> Signal:
    """Evaluate the relational inverse of the operator at ``y``.

    Supported nodes: strictly monotone static nonlinearities (samplewise
    bisection), LTI with invertible feedthrough (inverse realization), and
    scalings of either.
    """
    node = op.node
    if isinstance(node, StaticNlNode):
        if not node.entry.monotone:
            raise ValueError(
                f"'{node.fn_id}' is not strictly monotone; no inverse")
        if node.fn_id == "gain" and node.param == 0.0:
            raise ValueError("zero gain has no inverse")
        return Signal(_bisect_inverse(node.entry, node.param, y.samples), y.dt)
    if isinstance(node, LtiNode):
        d = node.d
        if d.shape[0] != d.shape[1] or abs(np.linalg.det(d)) < 1e-12:
            raise ValueError("LTI inverse requires an invertible D matrix")
        d_inv = np.linalg.inv(d)
        a_inv = node.a - node.b @ d_inv @ node.c
        # The inverse realization need not be stable; simulate it directly.
        inv_node = object.__new__(LtiNode)
        for name, m in (("a", a_inv), ("b", node.b @ d_inv),
                        ("c", -d_inv @ node.c), ("d", d_inv)):
            m = np.atleast_2d(np.asarray(m, dtype=float)).copy()
            m.setflags(write=False)
            object.__setattr__(inv_node, name, m)
        return _apply_lti(inv_node, y)
    if isinstance(node, ScaleNode):
        if node.c == 0.0:
            raise ValueError("zero scaling has no inverse")
        return relational_inverse_apply(node.inner, (1.0 / node.c) * y)
    raise ValueError(f"no relational inverse for {type(node).__name__}")
