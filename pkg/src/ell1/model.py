"""Problem and solver records shared by every algorithm module.

The objective all lambda-form solvers minimize is
    F(x) = 1/2 ||b - A x||_2^2 + lambda ||x||_1
and the equality-constrained solvers target min ||x||_1 subject to A x = b.
"""

from collections import namedtuple
from dataclasses import dataclass, field

import numpy as np

TraceEntry = namedtuple("TraceEntry", "iteration objective residual_norm support_size")

StopRecord = namedtuple("StopRecord", "x objective kkt")
StopRecord.__new__.__defaults__ = (None,)

_STOP_KINDS = ("relative-objective", "relative-estimate",
               "ground-truth-distance", "kkt-residual")


@dataclass(frozen=True)
class StoppingRule:
    """Named termination criterion with its threshold."""

    kind: str
    threshold: float

    def __post_init__(self):
        if self.kind not in _STOP_KINDS:
            raise ValueError("unknown stopping rule %r (choose from %s)"
                             % (self.kind, ", ".join(_STOP_KINDS)))
        if not self.threshold > 0:
            raise ValueError("threshold must be positive")


@dataclass
class ProblemInstance:
    """Dense instance: measurement matrix A (d x n), observation b (d,).

    ground_truth and noise_sigma are optional bookkeeping for synthetic
    instances; solvers never read them.
    """

    A: np.ndarray
    b: np.ndarray
    ground_truth: np.ndarray = None
    noise_sigma: float = None

    def __post_init__(self):
        self.A = np.ascontiguousarray(self.A, dtype=np.float64)
        self.b = np.ascontiguousarray(self.b, dtype=np.float64)
        if self.A.ndim != 2:
            raise ValueError("A must be a matrix, got shape %r" % (self.A.shape,))
        if self.b.ndim != 1 or self.b.shape[0] != self.A.shape[0]:
            raise ValueError("b must be a vector of length %d, got shape %r"
                             % (self.A.shape[0], self.b.shape))
        if not (np.all(np.isfinite(self.A)) and np.all(np.isfinite(self.b))):
            raise ValueError("A and b must be finite")
        if self.ground_truth is not None:
            self.ground_truth = np.ascontiguousarray(self.ground_truth,
                                                     dtype=np.float64)
            if self.ground_truth.shape != (self.A.shape[1],):
                raise ValueError("ground truth must have length n")

    @property
    def d(self):
        return self.A.shape[0]

    @property
    def n(self):
        return self.A.shape[1]


@dataclass
class SolverConfig:
    """Common solver knobs.

    lam=None means the default 1e-2 * ||A^T b||_inf resolved per instance.
    stopping=None lets each solver use its native criterion (KKT residual
    for the lambda-form solvers). Algorithm-specific constants are read
    from `options` and documented in the solver docstrings.
    """

    lam: float = None
    tol: float = 1e-6
    max_iter: int = 5000
    stopping: StoppingRule = None
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.lam is not None and not self.lam >= 0:
            raise ValueError("lambda must be nonnegative")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if not self.max_iter >= 1:
            raise ValueError("max_iter must be at least 1")

    def resolved_lambda(self, problem):
        if self.lam is not None:
            return float(self.lam)
        return default_lambda(problem)

    def opt(self, name, default):
        return self.options.get(name, default)


@dataclass
class SolverResult:
    """What every solver returns."""

    x_star: np.ndarray
    iterations: int
    wall_time_seconds: float
    converged: bool
    trace: list
    notes: tuple = ()

    def __post_init__(self):
        if self.iterations < 0 or self.wall_time_seconds < 0:
            raise ValueError("iterations and wall time must be nonnegative")
        if len(self.trace) > self.iterations + 1:
            raise ValueError("trace may hold at most one entry per iteration")


def default_lambda(problem):
    """Default regularization weight: 1e-2 * ||A^T b||_inf."""
    scale = float(np.max(np.abs(problem.A.T @ problem.b))) if problem.n else 0.0
    return 1e-2 * scale


def objective(x, problem, lam):
    """F(x) = 1/2 ||b - A x||^2 + lam ||x||_1."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (problem.n,):
        raise ValueError("x must have length n=%d, got shape %r"
                         % (problem.n, x.shape))
    if not lam >= 0:
        raise ValueError("lambda must be nonnegative")
    r = problem.b - problem.A @ x
    return 0.5 * float(r @ r) + lam * float(np.sum(np.abs(x)))


def kkt_residual(x, problem, lam):
    """Max violation of the first-order conditions of F at x.

    With c = A^T (b - A x): |c_i - lam sgn(x_i)| on the support,
    max(|c_i| - lam, 0) off it. Zero iff x minimizes F.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (problem.n,):
        raise ValueError("x must have length n=%d, got shape %r"
                         % (problem.n, x.shape))
    if not lam > 0:
        raise ValueError("lambda must be positive")
    c = problem.A.T @ (problem.b - problem.A @ x)
    return kkt_from_correlation(x, c, lam)


def kkt_from_correlation(x, c, lam):
    """kkt_residual when the correlation c = A^T (b - A x) is already known.

    Iterative solvers compute c as part of their own gradient work; this
    avoids paying the matrix products twice.
    """
    on = x != 0.0
    worst = 0.0
    if np.any(on):
        worst = float(np.max(np.abs(c[on] - lam * np.sign(x[on]))))
    off = ~on
    if np.any(off):
        worst = max(worst, float(np.max(np.abs(c[off])) - lam), 0.0)
    return worst


def stop_wanted(config, history, problem):
    """Solver-side hook for the optional user stopping rule.

    Returns False when no rule is set or a relative rule lacks history;
    otherwise defers to check_stop.
    """
    rule = config.stopping
    if rule is None or not history:
        return False
    if rule.kind in ("relative-objective", "relative-estimate") \
            and len(history) < 2:
        return False
    return check_stop(history, rule, ground_truth=problem.ground_truth)


def check_stop(history, rule, ground_truth=None):
    """Evaluate a stopping rule on the latest iterate snapshot(s).

    history is a sequence of StopRecord(x, objective, kkt); relative rules
    need the last two records, the others only the last.
    """
    if not isinstance(rule, StoppingRule):
        raise ValueError("rule must be a StoppingRule")
    if len(history) == 0:
        raise ValueError("history is empty")
    last = history[-1]
    if rule.kind in ("relative-objective", "relative-estimate"):
        if len(history) < 2:
            raise ValueError("relative rules need at least two history entries")
        prev = history[-2]
        if rule.kind == "relative-objective":
            denom = abs(prev.objective)
            delta = abs(last.objective - prev.objective)
        else:
            denom = float(np.linalg.norm(prev.x))
            delta = float(np.linalg.norm(np.asarray(last.x) - np.asarray(prev.x)))
        return delta <= rule.threshold * denom
    if rule.kind == "ground-truth-distance":
        if ground_truth is None:
            raise ValueError("ground-truth-distance rule needs a ground truth")
        gt = np.asarray(ground_truth, dtype=np.float64)
        denom = float(np.linalg.norm(gt))
        if denom == 0.0:
            raise ValueError("ground truth must be nonzero")
        return float(np.linalg.norm(np.asarray(last.x) - gt)) <= rule.threshold * denom
    # kkt-residual
    if last.kkt is None:
        raise ValueError("kkt-residual rule needs records carrying kkt values")
    return last.kkt <= rule.threshold


def support_size(x, rel_tol=1e-10):
    """Number of entries meaningfully away from zero."""
    x = np.asarray(x)
    if x.size == 0:
        return 0
    cutoff = rel_tol * max(float(np.max(np.abs(x))), 1.0)
    return int(np.count_nonzero(np.abs(x) > cutoff))


def relative_error(x, reference):
    """||x - reference|| / ||reference||."""
    reference = np.asarray(reference, dtype=np.float64)
    denom = float(np.linalg.norm(reference))
    if denom == 0.0:
        raise ValueError("reference must be nonzero")
    return float(np.linalg.norm(np.asarray(x) - reference)) / denom
