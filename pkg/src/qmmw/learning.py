"""Matrix multiplicative weights with full, two-point and one-point feedback.

Each player keeps a dual matrix ``Y_i`` and plays ``X_i = exp(Y_i) / tr exp(Y_i)``.
Every step adds ``gamma_t Z_i`` to ``Y_i``, where ``Z_i`` is the exact payoff
gradient (``mmw``) or a zeroth-order estimate of it built from payoff
queries at perturbed strategies (``3mw-2pe``, ``3mw-1pe``).
"""

import enum
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import game as qg
from ._backend import kernels
from .basis import build_basis, safety_radius
from .hermitian import (
    ScheduleError,
    ValidationError,
    as_density,
    digits_table,
    eigh,
    frob_inner,
    hermitize,
    log_sum_exp,
    pack_profile,
    softmax_density,
)

BLOCK = 4096
BREGMAN_CLAMP = 1e-15
ENERGY_TOL = 1e-8


class Algo(str, enum.Enum):
    """Learning algorithm, named by its gradient feedback."""

    MMW = "mmw"
    TWO_POINT = "3mw-2pe"
    ONE_POINT = "3mw-1pe"

    @property
    def kernel_kind(self):
        return {Algo.MMW: kernels.FULL, Algo.TWO_POINT: kernels.TWO_POINT,
                Algo.ONE_POINT: kernels.ONE_POINT}[self]


def as_algo(kind):
    if isinstance(kind, Algo):
        return kind
    aliases = {"full": Algo.MMW, "fullinfo": Algo.MMW, "2pe": Algo.TWO_POINT,
               "twopoint": Algo.TWO_POINT, "1pe": Algo.ONE_POINT, "onepoint": Algo.ONE_POINT}
    key = str(kind).lower().replace("_", "").replace(" ", "")
    try:
        return Algo(str(kind).lower())
    except ValueError:
        pass
    if key in aliases:
        return aliases[key]
    raise ValidationError(f"unknown algorithm {kind!r}; choose from {[a.value for a in Algo]}")


# ---------------------------------------------------------------- schedules


@dataclass(frozen=True)
class Schedule:
    """Step size ``gamma_t = gamma0 t^-p`` and radius ``delta_t = delta0 t^-q``.

    A constant schedule is the ``p = q = 0`` case.
    """

    gamma0: float
    delta0: float = 0.0
    p: float = 0.0
    q: float = 0.0

    def __post_init__(self):
        if not (self.gamma0 > 0 and math.isfinite(self.gamma0)):
            raise ScheduleError(f"step size must be positive, got {self.gamma0!r}")
        if not (self.delta0 >= 0 and math.isfinite(self.delta0)):
            raise ScheduleError(f"radius must be non-negative, got {self.delta0!r}")

    @classmethod
    def constant(cls, gamma, delta=0.0):
        return cls(float(gamma), float(delta))

    @classmethod
    def power(cls, gamma0, p, delta0, q):
        return cls(float(gamma0), float(delta0), float(p), float(q))

    @property
    def kind(self):
        return "constant" if self.p == 0 and self.q == 0 else "power"

    def gamma(self, t):
        return self.gamma0 * float(t) ** (-self.p)

    def delta(self, t):
        return self.delta0 * float(t) ** (-self.q)

    def gammas(self, t0, t1):
        """Step sizes for ``t = t0, ..., t1 - 1``."""
        t = np.arange(t0, t1, dtype=float)
        return self.gamma0 * t ** (-self.p) if self.p else np.full(t.shape, self.gamma0)

    def deltas(self, t0, t1):
        t = np.arange(t0, t1, dtype=float)
        return self.delta0 * t ** (-self.q) if self.q else np.full(t.shape, self.delta0)

    def to_dict(self):
        return {"kind": self.kind, "gamma0": self.gamma0, "delta0": self.delta0,
                "p": self.p, "q": self.q}


@dataclass(frozen=True)
class SeriesVerdict:
    name: str
    ok: bool
    reason: str


@dataclass(frozen=True)
class VSScheduleReport:
    """Verdicts for the three series conditions of a power schedule."""

    p: float
    q: float
    series: tuple

    @property
    def valid(self):
        return all(s.ok for s in self.series)

    @property
    def failing(self):
        return [s for s in self.series if not s.ok]


def schedule_validate_vs(p, q):
    """Check a power schedule ``gamma ~ t^-p, delta ~ t^-q`` for last-iterate use.

    Needs ``sum gamma = inf`` (p <= 1), ``sum gamma delta < inf`` (p + q > 1)
    and ``sum gamma^2 / delta^2 < inf`` (2p - 2q > 1).
    """
    p = float(p)
    q = float(q)
    e2 = p + q
    e3 = 2 * p - 2 * q
    series = (
        SeriesVerdict("sum gamma diverges", p <= 1,
                      f"exponent {p:g} {'<=' if p <= 1 else '>'} 1"),
        SeriesVerdict("sum gamma*delta converges", e2 > 1,
                      f"exponent p+q = {e2:g} {'>' if e2 > 1 else '<='} 1"),
        SeriesVerdict("sum gamma^2/delta^2 converges", e3 > 1,
                      f"exponent 2p-2q = {e3:g} {'>' if e3 > 1 else '<='} 1"),
    )
    return VSScheduleReport(p, q, series)


def _dim_constants(dims):
    Ds = [d * d - 1 for d in dims]
    return max(Ds), min(safety_radius(d) for d in dims)


def minimal_feasible_T(kind, consts, dims):
    """Smallest horizon whose theorem tuning keeps ``delta < min_i r_i``."""
    kind = as_algo(kind)
    if kind is Algo.MMW:
        return 1
    _, r = _dim_constants(dims)
    h, L, L2, B = consts.hmax, consts.L, consts.L2, consts.B
    if kind is Algo.TWO_POINT:
        bound = h * L * L / (8.0 * L2 * L2 * r * r)
    else:
        bound = 0.5 * h * (B / (4.0 * L2 * r * r)) ** 2
    T = max(1, int(math.floor(bound)) + 1)
    while _tuned(kind, T, consts, dims)[1] >= r:
        T += 1
    while T > 1 and _tuned(kind, T - 1, consts, dims)[1] < r:
        T -= 1
    return T


def _tuned(kind, T, c, dims):
    D, _ = _dim_constants(dims)
    h = c.hmax
    if kind is Algo.MMW:
        return math.sqrt(2.0 * h / T) / c.L, 0.0
    if kind is Algo.TWO_POINT:
        s = math.sqrt(h / (8.0 * T))
        return s / (D * c.L), (c.L / c.L2) * s
    s = h / (2.0 * T)
    gamma = s ** 0.75 / (2.0 * D * math.sqrt(c.B * c.L2))
    delta = s ** 0.25 * math.sqrt(c.B / (4.0 * c.L2))
    return gamma, delta


def theorem_tuning(kind, T, consts, dims):
    """Constant schedule prescribed by the convergence theorems.

    Parameters
    ----------
    kind : Algo or str
        ``mmw``, ``3mw-2pe`` or ``3mw-1pe``.
    T : int
        Horizon.
    consts : GameConstants
    dims : sequence of int
        Player dimensions (fix ``D = max d_i^2 - 1`` and the safety radius).

    Raises
    ------
    ScheduleError
        If the tuned radius reaches ``min_i r_i``; the message names the
        minimal feasible horizon.
    """
    kind = as_algo(kind)
    T = int(T)
    if T < 1:
        raise ScheduleError(f"horizon must be >= 1, got {T}")
    for name in ("L", "hmax") + (() if kind is Algo.MMW else ("L2", "B")):
        if not getattr(consts, name) > 0:
            raise ScheduleError(f"theorem tuning needs {name} > 0, got {getattr(consts, name)!r}")
    gamma, delta = _tuned(kind, T, consts, dims)
    if kind is not Algo.MMW:
        _, r = _dim_constants(dims)
        if delta >= r:
            tmin = minimal_feasible_T(kind, consts, dims)
            raise ScheduleError(
                f"tuned radius {delta:.6g} >= safety radius {r:.6g} at T={T}; "
                f"minimal feasible T is {tmin}"
            )
    return Schedule.constant(gamma, delta)


def bound_curve(kind, t, consts, dims, schedule):
    """Theorem bound on the expected gap of the ergodic average after ``t`` steps.

    ``h/(gamma t) + gamma L^2/2`` for full information,
    ``h/(gamma t) + 8 D^2 L^2 gamma + 16 D L2 delta`` for two-point and
    ``h/(gamma t) + 2 D^2 B^2 gamma/delta^2 + 16 D L2 delta`` for one-point feedback,
    at the constant step/radius of ``schedule``.
    """
    kind = as_algo(kind)
    t = np.asarray(t, dtype=float)
    D, _ = _dim_constants(dims)
    g, dl = schedule.gamma0, schedule.delta0
    h, L, L2, B = consts.hmax, consts.L, consts.L2, consts.B
    if kind is Algo.MMW:
        return h / (g * t) + g * L * L / 2.0
    if kind is Algo.TWO_POINT:
        return h / (g * t) + 8.0 * D * D * L * L * g + 16.0 * D * L2 * dl
    return h / (g * t) + 2.0 * D * D * B * B * g / (dl * dl) + 16.0 * D * L2 * dl


# ---------------------------------------------------------------- state and steps


@dataclass(frozen=True)
class LearnerState:
    """Per-player dual matrices and the step counter."""

    Y: tuple
    t: int = 0

    @classmethod
    def initial(cls, dims):
        return cls(tuple(np.zeros((d, d), dtype=np.complex128) for d in dims), 0)

    @property
    def profile(self):
        return [softmax_density(y) for y in self.Y]


@dataclass
class GradientEstimate:
    """Per-player gradient estimates with the draws that produced them."""

    Z: list
    indices: tuple = None
    signs: tuple = None
    payoffs: tuple = None
    outcome: int = None


def mmw_step(state, gamma, estimate):
    """``Y_i <- Y_i + gamma Z_i`` for every player."""
    Z = estimate.Z if isinstance(estimate, GradientEstimate) else estimate
    if len(Z) != len(state.Y):
        raise ValidationError("estimate and state have different numbers of players")
    new = []
    for y, z in zip(state.Y, Z):
        z = np.asarray(z, dtype=np.complex128)
        if z.shape != y.shape:
            raise ValidationError(f"estimate shape {z.shape} does not match {y.shape}")
        if not np.all(np.isfinite(z)):
            raise ValidationError("non-finite gradient estimate")
        new.append(hermitize(y + gamma * z))
    return LearnerState(tuple(new), state.t + 1)


def full_info_estimate(game, profile):
    return GradientEstimate(qg.gradients(game, profile))


def draw_block(rng, Ds, n):
    """Pre-draw ``n`` steps of randomness: direction indices, signs, uniforms."""
    Ds = list(Ds)
    idx = np.empty((n, len(Ds)), dtype=np.intp)
    for i, D in enumerate(Ds):
        idx[:, i] = rng.integers(D, size=n)
    signs = (2 * rng.integers(2, size=(n, len(Ds))) - 1).astype(np.intp)
    unif = rng.random(n)
    return idx, signs, unif


@dataclass
class _Geometry:
    dims: tuple
    bases: list
    Ds: np.ndarray
    radii: np.ndarray

    @classmethod
    def of(cls, game):
        if min(game.dims) < 2:
            raise ValidationError("estimators need every player dimension >= 2")
        bases = [build_basis(d) for d in game.dims]
        Ds = np.array([len(b) for b in bases], dtype=float)
        radii = np.array([safety_radius(d) for d in game.dims])
        return cls(game.dims, bases, Ds, radii)


def _check_delta(delta, geom):
    r = float(geom.radii.min())
    if not 0.0 < delta < r:
        raise ScheduleError(f"sampling radius {delta!r} outside (0, {r!r})")


def _batch_kron(mats):
    """Row-wise Kronecker product of per-player stacks ``(k, d_j, d_j)``."""
    rho = mats[0]
    for m in mats[1:]:
        k, a, _ = rho.shape
        b = m.shape[1]
        rho = np.einsum("kac,kbd->kabcd", rho, m).reshape(k, a * b, a * b)
    return rho


def _probes(profile, delta, idx, signs, geom, sign_of_probe):
    """Per-player stacks ``pivot(X_i) + sign_of_probe * s_i delta W_i``."""
    out = []
    for i, (x, d) in enumerate(zip(profile, geom.dims)):
        xhat = x + (delta / geom.radii[i]) * (np.eye(d) / d - x)
        dirs = geom.bases[i].elements[idx[:, i]] * signs[:, i, None, None]
        out.append(xhat[None] + sign_of_probe * delta * dirs)
    return out


def _trace_rows(w, rho):
    return np.einsum("ab,kba->k", w, rho).real


def estimator_coefficients(game, profile, kind, delta, idx, signs, unif):
    """Scalar coefficients ``c[k, i]`` with ``Z_i = c[k, i] * W_{idx[k, i]}``.

    Vectorized over the ``k`` pre-drawn samples; the sign is folded into
    the coefficient. Also returns the realized outcomes (1PE) or ``None``.
    """
    kind = as_algo(kind)
    geom = _Geometry.of(game)
    _check_delta(delta, geom)
    profile = [as_density(x, f"X_{i + 1}") for i, x in enumerate(profile)]
    n_players = game.n_players
    if kind is Algo.TWO_POINT:
        rho_a = _batch_kron(_probes(profile, delta, idx, signs, geom, +1.0))
        rho_b = _batch_kron(_probes(profile, delta, idx, signs, geom, -1.0))
        coef = np.empty(idx.shape)
        for i in range(n_players):
            diff = _trace_rows(game.observables[i], rho_a) - _trace_rows(game.observables[i], rho_b)
            coef[:, i] = geom.Ds[i] / (2.0 * delta) * diff * signs[:, i]
        return coef, None
    if kind is Algo.ONE_POINT:
        if not game.is_povm:
            raise ValidationError("bandit mode requires POVM form")
        rho = _batch_kron(_probes(profile, delta, idx, signs, geom, +1.0))
        probs = np.einsum("wab,kba->kw", game.povm, rho).real
        mass = probs.sum(axis=1)
        if np.any(~(np.abs(mass - 1.0) < qg.PROB_MASS_TOL)):
            raise ValidationError("outcome probabilities do not sum to 1 at a probe profile")
        probs = np.clip(probs, 0.0, 1.0)
        cum = np.cumsum(probs / probs.sum(axis=1, keepdims=True), axis=1)
        omega = np.minimum((cum <= unif[:, None]).sum(axis=1), probs.shape[1] - 1)
        rows = np.arange(len(omega))
        stuck = (probs[rows, omega] == 0.0) & (omega > 0)
        while np.any(stuck):
            omega[stuck] -= 1
            stuck = (probs[rows, omega] == 0.0) & (omega > 0)
        coef = geom.Ds[None, :] / delta * game.payoffs[omega] * signs
        return coef, omega
    raise ValidationError("estimator_coefficients is for the 2PE and 1PE estimators")


def _single_estimate(game, profile, kind, delta, rng):
    geom = _Geometry.of(game)
    idx, signs, unif = draw_block(rng, geom.Ds.astype(int), 1)
    coef, omega = estimator_coefficients(game, profile, kind, delta, idx, signs, unif)
    Z = [coef[0, i] * geom.bases[i].elements[idx[0, i]] for i in range(game.n_players)]
    return GradientEstimate(
        [np.array(z) for z in Z],
        indices=tuple(int(a) for a in idx[0]),
        signs=tuple(int(s) for s in signs[0]),
        payoffs=None if omega is None else tuple(float(u) for u in game.payoffs[omega[0]]),
        outcome=None if omega is None else int(omega[0]),
    )


def estimate_2pe(game, profile, delta, rng):
    """Two-point estimate from exact mixed payoffs at ``pivot +/- s delta W``.

    Every player draws its own basis index and Rademacher sign; the joint
    profile is perturbed in both queries.
    """
    return _single_estimate(game, profile, Algo.TWO_POINT, float(delta), rng)


def estimate_1pe(game, profile, delta, rng):
    """One-point (bandit) estimate from a single sampled outcome shared by all players."""
    return _single_estimate(game, profile, Algo.ONE_POINT, float(delta), rng)


def estimate(game, profile, kind, delta, rng):
    kind = as_algo(kind)
    if kind is Algo.MMW:
        return full_info_estimate(game, profile)
    return _single_estimate(game, profile, kind, float(delta), rng)


# ---------------------------------------------------------------- divergences


def _negentropy(p):
    w = np.clip(eigh(p).eigenvalues, 0.0, None)
    nz = w[w > 0]
    return float(np.sum(nz * np.log(nz)))


def _bregman_single(p, x, stats):
    p = np.asarray(p, dtype=np.complex128)
    dec = eigh(x)
    w = dec.eigenvalues
    low = w < BREGMAN_CLAMP
    if np.any(low):
        stats["clamped"] += int(low.sum())
        stats["clamped_mass"] += float(np.sum(BREGMAN_CLAMP - w[low]))
    logx = (dec.unitary * np.log(np.maximum(w, BREGMAN_CLAMP))) @ dec.unitary.conj().T
    return _negentropy(p) - frob_inner(p, hermitize(logx))


def bregman(p, x, return_info=False):
    """Quantum relative entropy ``tr P (log P - log X)``.

    Accepts two matrices or two profiles (summed over players). Eigenvalues
    of ``X`` below 1e-15 are clamped; a warning is issued when the clamped
    mass exceeds 1e-6.
    """
    stats = {"clamped": 0, "clamped_mass": 0.0}
    if isinstance(p, np.ndarray) and p.ndim == 2:
        total = _bregman_single(p, x, stats)
    else:
        if len(p) != len(x):
            raise ValidationError("profiles have different numbers of players")
        total = sum(_bregman_single(a, b, stats) for a, b in zip(p, x))
    if stats["clamped_mass"] > 1e-6:
        warnings.warn(f"Bregman divergence clamped eigenvalue mass {stats['clamped_mass']:.3g}",
                      RuntimeWarning, stacklevel=2)
    return (total, stats) if return_info else total


def bregman_from_dual(p, Y):
    """``D(P, softmax(Y))`` computed from the dual matrices without a matrix log.

    Uses ``log X = Y - logsumexp(eig Y) I``, exact for MMW iterates.
    """
    if isinstance(p, np.ndarray) and p.ndim == 2:
        p, Y = [p], [Y]
    total = 0.0
    for a, y in zip(p, Y):
        total += _negentropy(a) - frob_inner(a, y) + log_sum_exp(eigh(y).eigenvalues)
    return total


def energy_audit(p, state, next_state, gamma, estimate):
    """Residual of the one-step energy inequality, ``RHS - LHS``.

    ``D(P, X_{t+1}) <= D(P, X_t) + gamma tr(Z (X_t - P)) + gamma^2/2 ||Z||^2``
    holds for any ``Z``; the residual must be >= -1e-8.
    """
    Z = estimate.Z if isinstance(estimate, GradientEstimate) else estimate
    xs = state.profile
    lin = sum(frob_inner(z, x - a) for z, x, a in zip(Z, xs, p))
    quad = sum(frob_inner(z, z) for z in Z)
    d0 = bregman_from_dual(p, state.Y)
    d1 = bregman_from_dual(p, next_state.Y)
    return d0 + gamma * lin + 0.5 * gamma * gamma * quad - d1


# ---------------------------------------------------------------- runs


def record_grid(T, stride=None, per_decade=100):
    """Recorded steps: every ``stride``-th step, or the default grid.

    The default records every step for ``T <= 10**4`` and a logarithmic grid
    with ``per_decade`` points per decade above. Step 1 and ``T`` are always
    included.
    """
    T = int(T)
    if stride is not None:
        stride = int(stride)
        if stride < 1:
            raise ValidationError("stride must be >= 1")
        grid = np.arange(stride, T + 1, stride)
    elif T <= 10_000:
        grid = np.arange(1, T + 1)
    else:
        n = int(math.ceil(per_decade * math.log10(T))) + 1
        grid = np.round(np.logspace(0.0, math.log10(T), n))
    grid = np.unique(np.concatenate([[1, T], grid]).astype(np.int64))
    return grid[(grid >= 1) & (grid <= T)]


@dataclass
class Trajectory:
    """Recorded rows of one run.

    Row ``k`` refers to step ``t[k]``: ``X[k]`` is the profile played at
    that step, ``Xbar[k]`` the running mean of the profiles played so far,
    ``gap`` the duality gap of ``Xbar[k]`` (zero-sum games), ``bregman`` the
    divergence ``D(ref, X[k])`` and ``residual`` the smallest energy
    residual over the steps since the previous row.
    """

    algo: str
    dims: tuple
    T: int
    t: np.ndarray
    X: np.ndarray = field(repr=False)
    Xbar: np.ndarray = field(repr=False)
    gap: np.ndarray = field(repr=False)
    bregman: np.ndarray = field(repr=False)
    payoffs: np.ndarray = field(repr=False)
    residual: np.ndarray = field(repr=False)
    gamma: np.ndarray = field(repr=False)
    delta: np.ndarray = field(repr=False)
    final_state: LearnerState = field(repr=False, default=None)
    outcome_counts: np.ndarray = field(repr=False, default=None)

    def profile(self, k):
        return [self.X[k, i, :d, :d].copy() for i, d in enumerate(self.dims)]

    def average(self, k):
        return [self.Xbar[k, i, :d, :d].copy() for i, d in enumerate(self.dims)]

    @property
    def final_bregman(self):
        return float(self.bregman[-1])

    @property
    def min_residual(self):
        r = self.residual[np.isfinite(self.residual)]
        return float(r.min()) if r.size else float("nan")


def _batch_gradients(game, xs):
    """``V_i`` for each row of a packed profile stack ``(k, N, dmax, dmax)``."""
    dims = list(game.dims)
    n_players = len(dims)
    letters = "abcdefghijklmnopqrstuvwxy"
    rows = letters[:n_players]
    cols = letters[n_players:2 * n_players]
    out = []
    for i in range(n_players):
        tensor = game.observables[i].reshape(dims + dims)
        operands = [tensor]
        terms = [rows + cols]
        for j in range(n_players):
            if j != i:
                operands.append(xs[:, j, : dims[j], : dims[j]])
                terms.append("z" + cols[j] + rows[j])
        spec = ",".join(terms) + "->z" + rows[i] + cols[i]
        g = np.einsum(spec, *operands)
        out.append(0.5 * (g + np.conj(np.swapaxes(g, 1, 2))))
    return out


def batch_duality_gap(game, xs):
    """Duality gap for each row of a packed profile stack."""
    qg._require_zero_sum(game)
    v1, v2 = _batch_gradients(game, xs)
    gaps = np.empty(xs.shape[0])
    for k in range(xs.shape[0]):
        gaps[k] = kernels.eigh(v1[k])[0][-1] + kernels.eigh(v2[k])[0][-1]
    return gaps


def _check_schedule_feasible(schedule, algo, geom, T):
    if algo is Algo.MMW:
        return
    r = float(geom.radii.min())
    if schedule.delta0 <= 0:
        raise ScheduleError(f"{algo.value} needs a positive sampling radius")
    # delta_t is nonincreasing in t, so t = 1 is the binding step
    if schedule.delta(1) >= r:
        raise ScheduleError(f"delta_1 = {schedule.delta(1):.6g} >= safety radius {r:.6g}")


def run(game, algo, schedule, T, rng, reference=None, stride=None, backend=None):
    """Run the learner for ``T`` steps from ``Y = 0``.

    Parameters
    ----------
    game : QuantumGame
    algo : Algo or str
        ``mmw``, ``3mw-2pe`` or ``3mw-1pe``.
    schedule : Schedule
    T : int
        Horizon.
    rng : numpy.random.Generator
        Owned by this run; randomness is drawn in fixed blocks, so the
        result does not depend on the recording grid.
    reference : sequence of array_like, optional
        Comparator profile for the Bregman column and the energy audit.
    stride : int, optional
        Recording stride; see :func:`record_grid`.
    backend : module, optional
        Kernel module override (defaults to the active backend).

    Returns
    -------
    Trajectory
    """
    algo = as_algo(algo)
    ker = kernels if backend is None else backend
    T = int(T)
    if T < 1:
        raise ValidationError("horizon must be >= 1")
    if algo is Algo.ONE_POINT and not game.is_povm:
        raise ValidationError("bandit mode requires POVM form")
    dims = tuple(game.dims)
    n_players = len(dims)
    dmax = max(dims)
    n = game.size
    if algo is Algo.MMW:
        geom = _Geometry(dims, [], np.zeros(n_players), np.ones(n_players))
        basis = np.zeros((n_players, 1, dmax, dmax), dtype=np.complex128)
    else:
        geom = _Geometry.of(game)
        Dmax = int(geom.Ds.max())
        basis = np.zeros((n_players, Dmax, dmax, dmax), dtype=np.complex128)
        for i, b in enumerate(geom.bases):
            basis[i, : len(b), : dims[i], : dims[i]] = b.elements
    _check_schedule_feasible(schedule, algo, geom, T)

    W = np.ascontiguousarray(game.observables)
    if game.is_povm:
        P = np.ascontiguousarray(game.povm)
        U = np.ascontiguousarray(game.payoffs, dtype=float)
    else:
        P = np.zeros((1, n, n), dtype=np.complex128)
        U = np.zeros((1, n_players))
    digits = digits_table(dims)
    Dn = np.ascontiguousarray(geom.Ds, dtype=float)
    radii = np.ascontiguousarray(geom.radii, dtype=float)

    has_ref = reference is not None
    if has_ref:
        ref_list = [as_density(x, f"reference X_{i + 1}") for i, x in enumerate(reference)]
        ref = pack_profile(ref_list, dims)
        ref_negent = sum(_negentropy(x) for x in ref_list)
    else:
        ref = np.zeros((n_players, dmax, dmax), dtype=np.complex128)
        ref_negent = 0.0

    Y = np.zeros((n_players, dmax, dmax), dtype=np.complex128)
    Yw = np.zeros((n_players, dmax))
    YU = np.zeros((n_players, dmax, dmax), dtype=np.complex128)
    for i in range(n_players):
        YU[i] = np.eye(dmax)
    X = np.zeros((n_players, dmax, dmax), dtype=np.complex128)
    xsum = np.zeros_like(X)

    grid = record_grid(T, stride)
    n_rec = len(grid)
    rec_X = np.zeros((n_rec, n_players, dmax, dmax), dtype=np.complex128)
    rec_Xbar = np.zeros_like(rec_X)
    rec_breg = np.full(n_rec, np.nan)
    rec_resid = np.full(n_rec, np.nan)
    rec_gamma = np.empty(n_rec)
    rec_delta = np.empty(n_rec)
    counts = np.zeros(P.shape[0], dtype=np.int64) if algo is Algo.ONE_POINT else None

    Ds_int = [max(int(D), 1) for D in geom.Ds]
    kind = algo.kernel_kind
    t = 1
    rec = 0
    window_min = np.inf
    while t <= T:
        block_end = min(t + BLOCK, T + 1)
        m = block_end - t
        if algo is Algo.MMW:
            didx = np.zeros((m, n_players), dtype=np.intp)
            signs = np.ones((m, n_players), dtype=np.intp)
            unif = np.zeros(m)
        else:
            didx, signs, unif = draw_block(rng, Ds_int, m)
        gammas = np.ascontiguousarray(schedule.gammas(t, block_end))
        deltas = (np.zeros(m) if algo is Algo.MMW
                  else np.ascontiguousarray(schedule.deltas(t, block_end)))
        energy = np.zeros(m)
        resid = np.full(m, np.nan)
        outcome = np.full(m, -1, dtype=np.intp)
        pos = 0
        while pos < m:
            # advance to the next recorded step (inclusive) or the block end
            nxt = grid[rec] if rec < n_rec else T + 1
            stop = min(nxt - t + 1, m) if nxt < block_end else m
            sl = slice(pos, stop)
            status, k = ker.run_block(
                kind, np.asarray(dims, dtype=np.intp), digits, W, P, U, basis, Dn, radii,
                Y, Yw, YU, X, xsum,
                gammas[sl], deltas[sl], didx[sl], signs[sl], unif[sl],
                has_ref, ref, float(ref_negent),
                energy[sl], resid[sl], outcome[sl],
            )
            if status != kernels.OK:
                step = t + pos + k
                if status == kernels.ERR_PROBABILITY:
                    raise ValidationError(f"outcome probabilities do not sum to 1 at step {step}")
                raise ValidationError(f"non-finite gradient estimate at step {step}")
            if has_ref:
                window_min = min(window_min, float(np.min(resid[sl])))
            last = t + stop - 1
            if rec < n_rec and last == grid[rec]:
                rec_X[rec] = X
                rec_Xbar[rec] = xsum / last
                rec_gamma[rec] = gammas[stop - 1]
                rec_delta[rec] = deltas[stop - 1]
                if has_ref:
                    rec_breg[rec] = energy[stop - 1]
                    rec_resid[rec] = window_min
                window_min = np.inf
                rec += 1
            pos = stop
        if counts is not None:
            counts += np.bincount(outcome, minlength=len(counts))
        t = block_end

    if game.zero_sum and n_players == 2:
        gaps = batch_duality_gap(game, rec_Xbar)
    else:
        gaps = np.full(n_rec, np.nan)
    pays = np.empty((n_rec, n_players))
    for k in range(n_rec):
        rho = ker.kron_profile(rec_X[k], list(dims))
        for i in range(n_players):
            pays[k, i] = ker.trace_product(W[i], rho)

    final = LearnerState(tuple(Y[i, :d, :d].copy() for i, d in enumerate(dims)), T)
    return Trajectory(algo.value, dims, T, grid, rec_X, rec_Xbar, gaps, rec_breg, pays,
                      rec_resid, rec_gamma, rec_delta, final, counts)
