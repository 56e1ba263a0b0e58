"""Quantum games: payoffs, gradients, outcome sampling and game constants.

A game with ``N`` players acts on the product space of dimension
``n = d_1 * ... * d_N``. It is given either by a POVM ``{P_w}`` with
scalar payoffs ``u_i(w)`` or directly by payoff observables ``W_i``.
Each player maximizes ``u_i(X) = tr(W_i X_1 (x) ... (x) X_N)``.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from ._backend import kernels
from .hermitian import (
    ValidationError,
    as_density,
    digits_table,
    eigh,
    frob_inner,
    hermiticity_residual,
    pack_profile,
    random_density,
)

COMPLETENESS_TOL = 1e-10
ZERO_SUM_TOL = 1e-10
PROB_MASS_TOL = 1e-8


def _frozen(a):
    a = np.ascontiguousarray(a, dtype=np.complex128)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class QuantumGame:
    """An N-player quantum game.

    Use :meth:`from_povm` or :meth:`from_observables`; both store the
    payoff observables, so every query works on either form. Construction
    only checks shapes; :func:`validate` checks the model invariants.
    """

    dims: tuple
    observables: np.ndarray = field(repr=False)
    povm: np.ndarray = field(default=None, repr=False)
    payoffs: np.ndarray = field(default=None, repr=False)
    zero_sum: bool = False
    name: str = ""
    equilibrium: tuple = field(default=None, repr=False)

    @property
    def n_players(self):
        return len(self.dims)

    @property
    def size(self):
        return int(np.prod(self.dims))

    @property
    def is_povm(self):
        return self.povm is not None

    @property
    def n_outcomes(self):
        return 0 if self.povm is None else self.povm.shape[0]

    @classmethod
    def from_povm(cls, dims, povm, payoffs, zero_sum=False, name="", equilibrium=None):
        """Build from POVM elements ``povm[w]`` and payoffs ``payoffs[w, i]``."""
        dims = _check_dims(dims)
        n = int(np.prod(dims))
        povm = np.asarray(povm, dtype=np.complex128)
        payoffs = np.asarray(payoffs, dtype=float)
        if povm.ndim != 3 or povm.shape[1:] != (n, n) or povm.shape[0] < 1:
            raise ValidationError(f"POVM must have shape (outcomes, {n}, {n}), got {povm.shape}")
        if payoffs.shape != (povm.shape[0], len(dims)):
            raise ValidationError(
                f"payoffs must have shape ({povm.shape[0]}, {len(dims)}), got {payoffs.shape}"
            )
        if not (np.all(np.isfinite(povm)) and np.all(np.isfinite(payoffs))):
            raise ValidationError("game data has non-finite entries")
        w = np.einsum("wi,wab->iab", payoffs.astype(np.complex128), povm)
        pay = np.array(payoffs, dtype=float)
        pay.setflags(write=False)
        return cls(dims, _frozen(w), _frozen(povm), pay, bool(zero_sum), name,
                   _freeze_profile(equilibrium, dims))

    @classmethod
    def from_observables(cls, dims, observables, zero_sum=False, name="", equilibrium=None):
        """Build from one payoff observable per player on the product space."""
        dims = _check_dims(dims)
        n = int(np.prod(dims))
        w = np.asarray(observables, dtype=np.complex128)
        if w.shape != (len(dims), n, n):
            raise ValidationError(f"observables must have shape {(len(dims), n, n)}, got {w.shape}")
        if not np.all(np.isfinite(w)):
            raise ValidationError("game data has non-finite entries")
        return cls(dims, _frozen(w), None, None, bool(zero_sum), name,
                   _freeze_profile(equilibrium, dims))


def _check_dims(dims):
    dims = tuple(int(d) for d in dims)
    if len(dims) < 2:
        raise ValidationError(f"a game needs at least 2 players, got {len(dims)}")
    if any(d < 1 for d in dims):
        raise ValidationError(f"player dimensions must be positive, got {dims}")
    return dims


def _freeze_profile(profile, dims):
    if profile is None:
        return None
    if len(profile) != len(dims):
        raise ValidationError("equilibrium candidate has the wrong number of players")
    return tuple(_frozen(x) for x in profile)


@dataclass
class ValidationReport:
    """Outcome of :func:`validate`; ``issues`` lists (invariant, magnitude, detail)."""

    issues: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.issues

    def add(self, name, magnitude, detail=""):
        self.issues.append((name, float(magnitude), detail))

    def lines(self):
        if self.ok:
            return ["pass"]
        return [f"fail: {n} {m:.6g}" + (f" ({d})" if d else "") for n, m, d in self.issues]


def validate(game):
    """Check the model invariants of ``game`` and report every violation."""
    rep = ValidationReport()
    n = game.size
    if game.is_povm:
        for w, p in enumerate(game.povm):
            res = hermiticity_residual(p)
            if res > 1e-12:
                rep.add("hermiticity", res, f"POVM element {w}")
                continue
            lo = float(eigh(p).eigenvalues[0])
            if lo < -COMPLETENESS_TOL:
                rep.add("positivity", -lo, f"POVM element {w}")
        total = game.povm.sum(axis=0)
        res = float(np.max(np.abs(total - np.eye(n))))
        if res > COMPLETENESS_TOL:
            rep.add("completeness", res, "sum of POVM elements differs from I")
    else:
        for i, w in enumerate(game.observables):
            res = hermiticity_residual(w)
            if res > 1e-12:
                rep.add("hermiticity", res, f"observable W_{i + 1}")
    if game.zero_sum:
        if game.n_players != 2:
            rep.add("zero-sum", float("nan"), "zero-sum flag needs exactly 2 players")
        else:
            res = float(np.max(np.abs(game.observables[0] + game.observables[1])))
            if res > ZERO_SUM_TOL:
                rep.add("zero-sum residual", res, "W_1 + W_2 != 0")
    if game.equilibrium is not None:
        for i, x in enumerate(game.equilibrium):
            try:
                as_density(x, f"equilibrium X_{i + 1}")
            except ValidationError as exc:
                rep.add("equilibrium", float("nan"), str(exc))
    return rep


def observables_from_povm(game):
    """Payoff observables ``W_i = sum_w u_i(w) P_w``."""
    if not game.is_povm:
        raise ValidationError("observables_from_povm needs a POVM-form game")
    return [np.array(w) for w in game.observables]


def _check_profile(game, profile):
    if len(profile) != game.n_players:
        raise ValidationError(f"profile has {len(profile)} entries, game has {game.n_players} players")
    for j, (x, d) in enumerate(zip(profile, game.dims)):
        if np.shape(x) != (d, d):
            raise ValidationError(f"profile entry {j} has shape {np.shape(x)}, expected {(d, d)}")


def joint_state(game, profile):
    """``X_1 (x) ... (x) X_N`` on the product space."""
    _check_profile(game, profile)
    return np.asarray(kernels.kron_profile(pack_profile(profile, game.dims), list(game.dims)))


def payoff(game, profile, i):
    """Mixed payoff ``tr(W_i X_1 (x) ... (x) X_N)`` of player ``i``."""
    rho = joint_state(game, profile)
    return float(kernels.trace_product(game.observables[i], rho))


def payoffs(game, profile):
    rho = joint_state(game, profile)
    return np.array([kernels.trace_product(w, rho) for w in game.observables])


def gradient(game, profile, i):
    """Individual payoff gradient ``V_i``; entry ``i`` of the profile is ignored."""
    if not 0 <= i < game.n_players:
        raise ValidationError(f"player index {i} out of range")
    profile = list(profile)
    if len(profile) == game.n_players:
        profile[i] = np.eye(game.dims[i], dtype=np.complex128)
    _check_profile(game, profile)
    xs = pack_profile(profile, game.dims)
    g = kernels.contract(game.observables[i], xs, list(game.dims), digits_table(game.dims), i)
    return np.asarray(g)


def gradients(game, profile):
    return [gradient(game, profile, i) for i in range(game.n_players)]


def outcome_probabilities(game, profile, clamp=True):
    """Outcome distribution ``tr(P_w X_1 (x) ... (x) X_N)``.

    Raises ``ValidationError`` when the mass is off by 1e-8 or more; small
    round-off is clamped to [0, 1] and renormalized when ``clamp`` is set.
    """
    if not game.is_povm:
        raise ValidationError("outcome sampling requires a POVM-form game")
    rho = joint_state(game, profile)
    probs = np.array([kernels.trace_product(p, rho) for p in game.povm])
    mass = float(probs.sum())
    if not abs(mass - 1.0) < PROB_MASS_TOL:
        raise ValidationError(f"outcome probabilities sum to {mass!r}")
    if clamp:
        probs = np.clip(probs, 0.0, 1.0)
        probs /= probs.sum()
    return probs


def sample_outcome(rng, game, profile):
    probs = outcome_probabilities(game, profile)
    return int(rng.choice(len(probs), p=probs))


def _require_zero_sum(game):
    if game.n_players != 2 or not game.zero_sum:
        raise ValidationError("duality gap is defined for 2-player zero-sum games only")


def best_response_value(g):
    """max over densities X of tr(G X), attained at a top eigenvector."""
    return float(eigh(g).eigenvalues[-1])


def duality_gap(game, profile):
    """``max_X1 L(X1, X2) - min_X2 L(X1, X2)`` with ``u_1 = L`` and ``u_2 = -L``."""
    _require_zero_sum(game)
    v1, v2 = gradients(game, profile)
    return best_response_value(v1) + best_response_value(v2)


@dataclass(frozen=True)
class GameConstants:
    """Payoff bound ``B``, Lipschitz ``L``, smoothness ``L2``, modulus ``K``, ``hmax``.

    ``L_mc`` and ``L2_mc`` are sampled lower estimates of the analytic
    bounds (``nan`` when not computed).
    """

    B: float
    L: float
    L2: float
    K: float
    hmax: float
    L_mc: float = float("nan")
    L2_mc: float = float("nan")


def _op_norm(w):
    ev = eigh(w).eigenvalues
    return float(max(abs(ev[0]), abs(ev[-1])))


def lipschitz_bound(dims, op_norms):
    """Conservative bound on ``||V(X)||`` and on each payoff's Lipschitz constant.

    ``||V_i(X)||_F <= sqrt(d_i) ||W_i||_op`` on densities, and the full
    gradient of ``u_i`` over the profile has norm at most
    ``sqrt(sum_j d_j) ||W_i||_op``.
    """
    dims = np.asarray(dims, dtype=float)
    ops = np.asarray(op_norms, dtype=float)
    field_norm = math.sqrt(float(np.sum(dims * ops**2)))
    payoff_lip = math.sqrt(float(dims.sum())) * float(ops.max())
    return max(field_norm, payoff_lip)


def smoothness_bound(dims, op_norms):
    """Conservative Lipschitz constant of ``V`` in the Frobenius norm.

    The block ``dV_i / dX_j`` has norm at most ``sqrt(d_i d_j) ||W_i||_op``;
    the block matrix norm is bounded by the top eigenvalue of that pattern.
    """
    dims = np.asarray(dims, dtype=float)
    m = np.sqrt(np.outer(dims, dims))
    np.fill_diagonal(m, 0.0)
    return float(np.max(op_norms)) * float(np.linalg.eigvalsh(m)[-1])


def constants(game, n_mc=0, rng=None):
    """Game constants; with ``n_mc > 0`` also sampled estimates of L and L2."""
    ops = [_op_norm(w) for w in game.observables]
    if game.is_povm:
        B = float(np.max(np.abs(game.payoffs)))
    else:
        B = float(max(ops))
    L = lipschitz_bound(game.dims, ops)
    L2 = smoothness_bound(game.dims, ops)
    hmax = float(sum(math.log(d) for d in game.dims))
    L_mc = L2_mc = float("nan")
    if n_mc > 0:
        rng = np.random.default_rng() if rng is None else rng
        L_mc, L2_mc = _sampled_constants(game, n_mc, rng)
    return GameConstants(B, L, L2, 1.0, hmax, L_mc, L2_mc)


def _field_norm(vs):
    return math.sqrt(sum(frob_inner(v, v) for v in vs))


def _traceless(v):
    d = v.shape[0]
    return v - (np.trace(v).real / d) * np.eye(d)


def _sampled_constants(game, n_mc, rng):
    """Sampled lower estimates of L and L2 over random profiles.

    Gradients are projected onto the traceless directions, the ones along
    which the payoff varies on the spectraplex.
    """
    best_l = 0.0
    best_l2 = 0.0
    for _ in range(n_mc):
        x = [random_density(rng, d, rank=int(rng.integers(1, d + 1))) for d in game.dims]
        y = [random_density(rng, d, rank=int(rng.integers(1, d + 1))) for d in game.dims]
        vx = [_traceless(v) for v in gradients(game, x)]
        vy = [_traceless(v) for v in gradients(game, y)]
        best_l = max(best_l, _field_norm(vx))
        dist = _field_norm([a - b for a, b in zip(x, y)])
        if dist <= 1e-12:
            continue
        for i in range(game.n_players):
            du = abs(payoff(game, x, i) - payoff(game, y, i))
            best_l = max(best_l, du / dist)
        best_l2 = max(best_l2, _field_norm([a - b for a, b in zip(vx, vy)]) / dist)
    return best_l, best_l2


def vs_value(game, profile, candidate):
    """``sum_i tr(V_i(X) (X_i - X*_i))``; negative near a stable equilibrium."""
    vs = gradients(game, profile)
    return sum(frob_inner(v, x - c) for v, x, c in zip(vs, profile, candidate))


@dataclass(frozen=True)
class VSReport:
    """Sampled variational-stability check around a candidate profile."""

    max_value: float
    violation_fraction: float
    n_samples: int
    n_used: int
    radius: float

    @property
    def plausible(self):
        return self.n_used > 0 and self.max_value < -1e-10


def vs_certificate(game, candidate, radius, n_samples, rng):
    """Sample feasible profiles within ``radius`` of ``candidate`` and test stability.

    Each sample is ``(1 - lam) X* + lam R`` with ``R`` a random density
    profile and ``lam`` drawn so that the distance to ``X*`` is uniform in
    volume over the ball, capped at the segment end. Samples closer than
    1e-12 to ``X*`` are excluded.

    Returns
    -------
    VSReport
        ``plausible`` iff the maximum over used samples is below -1e-10.
    """
    radius = float(radius)
    if radius <= 0:
        raise ValidationError("radius must be positive")
    candidate = [as_density(x, f"candidate X_{i + 1}") for i, x in enumerate(candidate)]
    m = sum(d * d - 1 for d in game.dims)
    best = -math.inf
    bad = 0
    used = 0
    for _ in range(int(n_samples)):
        r = [random_density(rng, d) for d in game.dims]
        span = _field_norm([a - b for a, b in zip(r, candidate)])
        if span <= 1e-12:
            continue
        lam = min(1.0, radius * rng.random() ** (1.0 / max(m, 1)) / span)
        x = [(1.0 - lam) * c + lam * a for c, a in zip(candidate, r)]
        if _field_norm([a - b for a, b in zip(x, candidate)]) <= 1e-12:
            continue
        val = vs_value(game, x, candidate)
        used += 1
        best = max(best, val)
        if val >= -1e-10:
            bad += 1
    frac = bad / used if used else 0.0
    return VSReport(float(best), frac, int(n_samples), used, radius)


def profile_distance(p, q):
    return _field_norm([np.asarray(a) - np.asarray(b) for a, b in zip(p, q)])


def uniform_profile(game):
    return [np.eye(d, dtype=np.complex128) / d for d in game.dims]


__all__ = [
    "QuantumGame",
    "ValidationReport",
    "GameConstants",
    "VSReport",
    "validate",
    "observables_from_povm",
    "joint_state",
    "payoff",
    "payoffs",
    "gradient",
    "gradients",
    "outcome_probabilities",
    "sample_outcome",
    "duality_gap",
    "best_response_value",
    "constants",
    "lipschitz_bound",
    "smoothness_bound",
    "vs_value",
    "vs_certificate",
    "profile_distance",
    "uniform_profile",
]
