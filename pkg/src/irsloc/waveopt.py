"""Joint transmit-waveform / IRS-phase design for the next cycle.

The design maximizes the weighted sum of pairwise inter-hypothesis
distances (symmetrized relative entropy between the Gaussian echo laws,
which reduces to scaled squared mean differences).  With the IRS phases
shared between transmission and reception the distance is quartic in the
phase vector theta, so the problem is lifted: Q = theta theta^H turns each
distance into

    phi_ij = s (|a_i|^2 tr(Q^H A_ii Q B_ii)
              - 2 Re{a_i a_j^* tr(Q^H A_ij Q B_ij)}
              + |a_j|^2 tr(Q^H A_jj Q B_jj)),    s = L / sigma^2,

with A_ij fixed per hypothesis pair and B_ij rank-one in the waveform x.
The rank-1 coupling Q = theta theta^H is enforced by a penalty
(1/2 rho)(Re{theta^H Q theta} - N^2) whose weight grows as rho shrinks
geometrically in an outer loop; the inner loop is block coordinate descent
with closed-form updates:

* each entry of Q is a phase projection of its linear coefficient,
* x is the power-saturated dominant eigenvector of an assembled Hermitian
  matrix,
* each entry of theta is a phase projection against the Hermitian part
  of Q.

Every single update is an exact coordinate maximization, so the penalized
objective never decreases within an inner loop.  A noiseless run
(sigma^2 = 0) drops the 1/sigma^2 normalization; the maximizers are
unaffected by the positive rescaling.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class DistanceContext:
    """Everything the distance objective needs from the current cycle.

    ``channels[i]`` is the hypothesis-i signed channel diag(delta_i) G_hat
    (N x M); ``steering[:, i]`` its grid steering vector; ``alphas[i]`` its
    latest target-coefficient estimate; ``weights[i, j]`` the pair priority
    (posterior product).  ``scale`` is snapshots / noise_power, or just
    snapshots when noise_power = 0.
    """

    channels: list
    steering: np.ndarray
    alphas: np.ndarray
    weights: np.ndarray
    snapshots: int
    noise_power: float
    coupling: list = field(repr=False, default=None)

    def __post_init__(self):
        n_hyp = len(self.channels)
        if self.steering.shape[1] != n_hyp or self.alphas.size != n_hyp:
            raise ValueError("inconsistent hypothesis count")
        if self.coupling is None:
            self.coupling = [[self._build_a(i, j) for j in range(n_hyp)]
                             for i in range(n_hyp)]

    @property
    def n_hypotheses(self) -> int:
        return len(self.channels)

    @property
    def n_elements(self) -> int:
        return self.steering.shape[0]

    @property
    def scale(self) -> float:
        if self.noise_power > 0:
            return self.snapshots / self.noise_power
        return float(self.snapshots)

    def _build_a(self, i: int, j: int) -> np.ndarray:
        # A_ij = (G_j^* G_i^T) hadamard (a_i a_j^H)^T
        g_i, g_j = self.channels[i], self.channels[j]
        a_i, a_j = self.steering[:, i], self.steering[:, j]
        return (g_j.conj() @ g_i.T) * np.outer(a_j.conj(), a_i)

    def b_matrix(self, i: int, j: int, x: np.ndarray) -> np.ndarray:
        """B_ij = (a_j^* a_i^T) hadamard (G_i x x^H G_j^H)^T (rank one)."""
        a_i, a_j = self.steering[:, i], self.steering[:, j]
        left = a_j.conj() * (self.channels[j] @ x).conj()
        right = a_i * (self.channels[i] @ x)
        return np.outer(left, right)

    def term_list(self):
        """Flat weighted trace terms: sum_k w_k tr(Q^H A_{ik,jk} Q B_{ik,jk}).

        Diagonal terms are consolidated across pairs; the two conjugate
        cross terms of each pair appear separately.  Weights fold in the
        scale, the pair priorities, and the alpha products.
        """
        n_hyp = self.n_hypotheses
        terms = []
        for i in range(n_hyp):
            w = sum(self.weights[min(i, j), max(i, j)]
                    for j in range(n_hyp) if j != i)
            w *= abs(self.alphas[i]) ** 2 * self.scale
            if w != 0:
                terms.append((complex(w), i, i))
        for i in range(n_hyp):
            for j in range(i + 1, n_hyp):
                w = self.weights[i, j] * self.scale
                if w == 0:
                    continue
                cross = -w * self.alphas[i] * np.conj(self.alphas[j])
                if cross != 0:
                    terms.append((complex(cross), i, j))
                    terms.append((complex(np.conj(cross)), j, i))
        return terms


def build_context(g_hat: np.ndarray, belief, grid, snapshots: int,
                  noise_power: float) -> DistanceContext:
    """Assemble the context from the belief state of the finished cycle."""
    probs = np.asarray(belief.probs, dtype=float)
    n_hyp = probs.size
    weights = np.zeros((n_hyp, n_hyp))
    for i in range(n_hyp):
        for j in range(i + 1, n_hyp):
            weights[i, j] = probs[i] * probs[j]
    channels = [belief.deltas[i][:, None] * g_hat for i in range(n_hyp)]
    return DistanceContext(channels=channels, steering=grid.steering,
                           alphas=np.asarray(belief.alphas, dtype=complex),
                           weights=weights, snapshots=snapshots,
                           noise_power=noise_power)


def _trace_qaqb(q: np.ndarray, a: np.ndarray, b: np.ndarray) -> complex:
    return complex(np.einsum("ba,bc,cd,da->", q.conj(), a, q, b))


def pair_distance(ctx: DistanceContext, q: np.ndarray, x: np.ndarray,
                  i: int, j: int) -> float:
    """Inter-hypothesis distance phi_ij evaluated on a lifted matrix Q."""
    if i == j:
        return 0.0
    a_i, a_j = ctx.alphas[i], ctx.alphas[j]
    t_ii = _trace_qaqb(q, ctx.coupling[i][i], ctx.b_matrix(i, i, x))
    t_jj = _trace_qaqb(q, ctx.coupling[j][j], ctx.b_matrix(j, j, x))
    t_ij = _trace_qaqb(q, ctx.coupling[i][j], ctx.b_matrix(i, j, x))
    val = (abs(a_i) ** 2 * t_ii - 2.0 * np.real(a_i * np.conj(a_j) * t_ij)
           + abs(a_j) ** 2 * t_jj)
    return ctx.scale * float(np.real(val))


class _TraceStack:
    """Weighted trace terms with O(K N) per-entry Gauss-Seidel bookkeeping.

    Maintains QB_k = Q @ B_k per term so a single Q-entry change is a
    rank-one row update and the gradient entry [sum_k w_k A_k Q B_k]_{m,n}
    is one contraction.
    """

    def __init__(self, ctx: DistanceContext, q: np.ndarray, x: np.ndarray):
        self.ctx = ctx
        n = ctx.n_elements
        terms = ctx.term_list()
        k = len(terms)
        self.a_stack = np.empty((k, n, n), dtype=complex)
        self.b_stack = np.empty((k, n, n), dtype=complex)
        for idx, (w, i, j) in enumerate(terms):
            self.a_stack[idx] = w * ctx.coupling[i][j]
            self.b_stack[idx] = ctx.b_matrix(i, j, x)
        self.terms = terms
        self.qb_stack = np.einsum("ab,kbc->kac", q, self.b_stack) \
            if k else np.zeros((0, n, n), dtype=complex)
        # chi[m, n] = sum_k w_k A_k(m, m) B_k(n, n): the self-quadratic
        # coefficient removed from the gradient when reading the linear part
        diag_a = np.einsum("kii->ki", self.a_stack)
        diag_b = np.einsum("kii->ki", self.b_stack)
        self.chi = np.einsum("km,kn->mn", diag_a, diag_b)

    def gradient_entry(self, m: int, n: int) -> complex:
        if not self.terms:
            return 0.0 + 0.0j
        return complex(np.einsum("kc,kc->", self.a_stack[:, m, :],
                                 self.qb_stack[:, :, n]))

    def apply_entry_delta(self, m: int, n: int, delta: complex):
        if self.terms:
            self.qb_stack[:, m, :] += delta * self.b_stack[:, n, :]

    def distance(self, q: np.ndarray) -> float:
        if not self.terms:
            return 0.0
        total = np.einsum("cm,kcd,kdm->", q.conj(), self.a_stack, self.qb_stack)
        return float(np.real(total))


def weighted_distance(ctx: DistanceContext, q: np.ndarray, x: np.ndarray) -> float:
    """Weighted sum of pairwise distances at (Q, x)."""
    total = 0.0
    for w, i, j in ctx.term_list():
        total += np.real(w * _trace_qaqb(q, ctx.coupling[i][j],
                                         ctx.b_matrix(i, j, x)))
    return float(total)


def penalty_value(q: np.ndarray, theta: np.ndarray, rho: float) -> float:
    n = theta.size
    return (np.real(theta.conj() @ q @ theta) - n * n) / (2.0 * rho)


def constraint_violation(q: np.ndarray, theta: np.ndarray) -> float:
    """xi = (N^2 - Re{theta^H Q theta}) / N^2; zero iff Q = theta theta^H."""
    n = theta.size
    return float((n * n - np.real(theta.conj() @ q @ theta)) / (n * n))


@dataclass
class OptimizerState:
    """Block variables and penalty bookkeeping of one design run."""

    q: np.ndarray
    theta: np.ndarray
    x: np.ndarray
    rho: float
    power_budget: float

    def validate(self):
        if np.abs(np.abs(self.q) - 1.0).max() > 1e-9:
            raise ValueError("Q entries must be unit modulus")
        if np.abs(np.abs(self.theta) - 1.0).max() > 1e-9:
            raise ValueError("theta must be unit modulus")
        if np.linalg.norm(self.x) ** 2 > self.power_budget * (1 + 1e-9):
            raise ValueError("waveform exceeds the power budget")

    def objective(self, ctx: DistanceContext) -> float:
        return weighted_distance(ctx, self.q, self.x) \
            + penalty_value(self.q, self.theta, self.rho)


def update_q(state: OptimizerState, ctx: DistanceContext,
             on_update=None) -> OptimizerState:
    """One Gauss-Seidel sweep over all Q entries (phase projections).

    Each entry is set to the phase of its linear coefficient in the
    penalized objective: the weighted distance gradient minus the
    self-quadratic part, plus the penalty's theta theta^H term.
    """
    stack = _TraceStack(ctx, state.q, state.x)
    q = state.q
    theta = state.theta
    quarter_rho = 1.0 / (4.0 * state.rho)
    n = ctx.n_elements
    for m in range(n):
        theta_m = theta[m]
        for col in range(n):
            mu = stack.gradient_entry(m, col)
            mu += quarter_rho * theta_m * np.conj(theta[col])
            mu -= q[m, col] * stack.chi[m, col]
            if mu == 0:
                continue
            new = np.exp(1j * np.angle(mu))
            delta = new - q[m, col]
            if delta != 0:
                q[m, col] = new
                stack.apply_entry_delta(m, col, delta)
            if on_update is not None:
                on_update()
    return state


def assemble_waveform_matrix(ctx: DistanceContext, q: np.ndarray) -> np.ndarray:
    """Hermitian matrix Z with x^H Z x = weighted sum distance at fixed Q."""
    n_bs = ctx.channels[0].shape[1]
    z = np.zeros((n_bs, n_bs), dtype=complex)
    for w, i, j in ctx.term_list():
        a_ij = ctx.coupling[i][j]
        core = (q.T @ a_ij.T @ q.conj()) * np.outer(ctx.steering[:, j].conj(),
                                                    ctx.steering[:, i])
        z += w * (ctx.channels[j].conj().T @ core @ ctx.channels[i])
    return (z + z.conj().T) / 2.0


def dominant_power_vector(z: np.ndarray, power: float) -> np.ndarray:
    """sqrt(power) times the dominant eigenvector of a Hermitian matrix.

    The global phase is fixed by making the largest-magnitude entry real
    positive, for determinism.
    """
    _, evecs = np.linalg.eigh(z)
    v = evecs[:, -1]
    pivot = int(np.argmax(np.abs(v)))
    v = v * np.exp(-1j * np.angle(v[pivot]))
    return np.sqrt(power) * v


def update_x(state: OptimizerState, ctx: DistanceContext) -> OptimizerState:
    """Waveform block: power-saturated dominant eigenvector of Z.

    Keeps the previous waveform when the objective has no x dependence
    (single hypothesis or all-zero weights).
    """
    z = assemble_waveform_matrix(ctx, state.q)
    norm = np.linalg.norm(z)
    if not np.isfinite(norm):
        raise FloatingPointError("waveform matrix is not finite")
    if norm == 0:
        return state
    state.x = dominant_power_vector(z, state.power_budget)
    return state


def update_theta(state: OptimizerState, on_update=None) -> OptimizerState:
    """One sweep of phase projections of theta against (Q + Q^H) / 2."""
    p = (state.q + state.q.conj().T) / 2.0
    theta = state.theta
    for m in range(theta.size):
        v = p[m, :] @ theta - p[m, m] * theta[m]
        if v == 0:
            continue
        theta[m] = np.exp(1j * np.angle(v))
        if on_update is not None:
            on_update()
    return state


@dataclass
class WaveformDesign:
    """Result of one penalty-method design run."""

    x: np.ndarray
    theta: np.ndarray
    violation: float
    converged: bool
    outer_iterations: int
    objective: float
    distance: float
    q: np.ndarray = field(repr=False, default=None)
    trace: list = field(repr=False, default_factory=list)


def optimize(ctx: DistanceContext, x_init: np.ndarray, theta_init: np.ndarray,
             power_budget: float, accuracy: float = 1e-7,
             penalty_scale: float = 0.5, inner_tol: float = 1e-6,
             outer_cap: int = 60, inner_cap: int = 100,
             rho_init: float | None = None,
             on_block_update=None) -> WaveformDesign:
    """Penalty method with inner three-block coordinate descent.

    Starts from the feasible lift Q = theta theta^H (zero violation) and a
    power-saturated version of ``x_init``; the outer loop shrinks rho by
    ``penalty_scale`` until the violation indicator falls below
    ``accuracy``.  ``on_block_update``, when given, is called as
    ``f(objective, rho)`` after every single block update (Q entry, x,
    theta entry); objective values are only comparable within one rho
    stage.
    """
    if not 0 < penalty_scale < 1:
        raise ValueError("penalty scale must lie in (0, 1)")
    if accuracy <= 0:
        raise ValueError("accuracy must be positive")
    if rho_init is not None and rho_init <= 0:
        raise ValueError("penalty parameter must be positive")
    theta = np.asarray(theta_init, dtype=complex).copy()
    theta = np.exp(1j * np.angle(theta))
    x = np.asarray(x_init, dtype=complex).copy()
    x_norm = np.linalg.norm(x)
    if x_norm == 0:
        raise ValueError("waveform initialization must be nonzero")
    x = np.sqrt(power_budget) * x / x_norm

    q = np.outer(theta, theta.conj())
    q = np.exp(1j * np.angle(q))  # exact unit modulus
    d0 = weighted_distance(ctx, q, x)
    rho = rho_init if rho_init is not None else 1e-2 * (d0 + 1.0)
    state = OptimizerState(q=q, theta=theta, x=x, rho=rho,
                           power_budget=power_budget)
    state.validate()

    trace = []
    converged = False
    outer = 0
    for outer in range(1, outer_cap + 1):
        prev = state.objective(ctx)
        if on_block_update is not None:
            report = lambda: on_block_update(state.objective(ctx), state.rho)  # noqa: E731
        for _ in range(inner_cap):
            if on_block_update is None:
                update_q(state, ctx)
                update_x(state, ctx)
                update_theta(state)
            else:
                update_q(state, ctx, on_update=report)
                update_x(state, ctx)
                report()
                update_theta(state, on_update=report)
            cur = state.objective(ctx)
            if cur - prev <= inner_tol * max(1.0, abs(prev)):
                prev = cur
                break
            prev = cur
        xi = constraint_violation(state.q, state.theta)
        trace.append((outer, state.rho, xi, prev,
                      weighted_distance(ctx, state.q, state.x)))
        if xi < accuracy:
            converged = True
            break
        state.rho *= penalty_scale
        # Between outer stages, pull Q back toward Hermitian structure if
        # the phase updates let it drift (the theta block only sees the
        # Hermitian part).
        drift = np.abs(state.q - state.q.conj().T).max()
        if drift > 1e-9:
            sym = (state.q + state.q.conj().T) / 2.0
            nonzero = np.abs(sym) > 1e-30
            state.q = np.where(nonzero, np.exp(1j * np.angle(sym)), state.q)

    state.validate()
    return WaveformDesign(x=state.x, theta=state.theta,
                          violation=constraint_violation(state.q, state.theta),
                          converged=converged, outer_iterations=outer,
                          objective=state.objective(ctx),
                          distance=weighted_distance(ctx, state.q, state.x),
                          q=state.q, trace=trace)
