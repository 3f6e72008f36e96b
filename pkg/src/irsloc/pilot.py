"""Full-duplex differential pilot protocol for BS-IRS channel sounding.

The BS splits its M antennas into a transmit set A (size M_t) and a receive
set B; every C(M, M_t) split gets one subframe.  Within a subframe the IRS
steps through a sequence of phase states and the receive antennas observe,
per difference index l, the change of the reflected pilot between two slots
that share the same transmit vector:

    ytilde_B(p, l) = G_B^T dTheta(p, l) G_A x_A(p, l) + dn_B(p, l)

Differencing removes the static self-interference and environment-scatter
terms exactly; each difference uses its own pair of slots, so the
differenced noise is i.i.d. CN(0, 2 sigma^2 I).  Stacking the C differences
gives the linear model ytilde_B(p) = Phi omega(p) + dn_B(p) with
omega(p) = vec(G_A^T kr G_B^T) (kr = column-wise Kronecker product), whose
coordinates are the pairwise products g_{n,a} g_{n,b}.

The observation model leaves the pattern design free; here the IRS states
are columns of a DFT-phase matrix and dtheta rows are differences of
consecutive columns; with M_t > 1 each pattern is held for M_t difference
slots while the pilot vector cycles through an orthogonal DFT set, which
keeps the stacked design matrix full rank and well conditioned.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from math import comb

import numpy as np

from .scene import Scene
from .util import as_rng, crandn, khatri_rao, vec


class IdentifiabilityError(ValueError):
    """Raised when the pilot design cannot identify the channel products."""


@dataclass
class PilotSchedule:
    """Antenna splits, IRS phase-difference patterns and pilot symbols.

    ``delta_theta`` has one row per difference index (C x N); ``irs_base``
    holds the IRS state of the first slot of each difference (the second
    slot state is ``irs_base + delta_theta``).  ``pilots`` has one transmit
    vector per difference index (C x M_t).  All subframes share the same
    sequences, so they share one design matrix and one LS error covariance.
    """

    m_antennas: int
    m_t: int
    n_elements: int
    pilot_power: float
    subframes: list = field(repr=False, default_factory=list)
    delta_theta: np.ndarray = field(repr=False, default=None)
    irs_base: np.ndarray = field(repr=False, default=None)
    pilots: np.ndarray = field(repr=False, default=None)

    @property
    def n_subframes(self) -> int:
        return len(self.subframes)

    @property
    def n_diffs(self) -> int:
        return self.delta_theta.shape[0]

    @property
    def n_rx(self) -> int:
        return self.m_antennas - self.m_t

    def validate(self):
        full = set(range(self.m_antennas))
        for a_set, b_set in self.subframes:
            if set(a_set) | set(b_set) != full or set(a_set) & set(b_set):
                raise ValueError(f"invalid antenna split {a_set} / {b_set}")
        if self.n_diffs < self.n_elements * self.m_t:
            raise IdentifiabilityError(
                f"need C >= N*M_t = {self.n_elements * self.m_t} differences, "
                f"got {self.n_diffs}")
        if self.pilots.shape != (self.n_diffs, self.m_t):
            raise ValueError("pilot array shape mismatch")


def schedule_efficiency(m_antennas: int, m_t: int, n_elements: int) -> float:
    """Product-estimates obtained per pilot slot, 2(M - M_t) / (N M (M-1)).

    With one subframe per antenna split, each row of the channel receives
    M_t (M - M_t) C(M, M_t) product estimates at a cost of C(M, M_t) N M_t
    pilot differences; normalizing by the M(M-1)/2 distinct pairs per row
    gives the closed form.  Maximal at M_t = 1.
    """
    return 2.0 * (m_antennas - m_t) / (n_elements * m_antennas * (m_antennas - 1))


def count_product_estimates(m_antennas: int, m_t: int) -> int:
    """Per-row number of pairwise-product estimates the full schedule yields."""
    return m_t * (m_antennas - m_t) * comb(m_antennas, m_t)


def build_schedule(m_antennas: int, m_t: int, n_elements: int,
                   n_diffs: int | None = None,
                   pilot_power: float = 1.0) -> PilotSchedule:
    """Enumerate all antenna splits and build the IRS / pilot sequences.

    ``n_diffs`` defaults to the identifiability minimum N * M_t.
    """
    if not 1 <= m_t < m_antennas:
        raise ValueError(f"need 1 <= M_t < M, got M_t={m_t}, M={m_antennas}")
    c = n_elements * m_t if n_diffs is None else int(n_diffs)
    if c < n_elements * m_t:
        raise IdentifiabilityError(
            f"C={c} < N*M_t={n_elements * m_t}: design matrix cannot have "
            "full column rank")

    subframes = []
    for a_set in combinations(range(m_antennas), m_t):
        b_set = tuple(i for i in range(m_antennas) if i not in a_set)
        subframes.append((a_set, b_set))

    # IRS states: rows 1..N of a K-point DFT phase matrix, K = n_patterns+1.
    # C >= N*M_t guarantees n_patterns >= N, so every row index stays below
    # K and consecutive-column differences are nonzero for every element.
    n_patterns = -(-c // m_t)  # ceil
    k_pts = n_patterns + 1
    rows = np.arange(1, n_elements + 1)[:, None]
    cols = np.arange(k_pts)[None, :]
    states = np.exp(-2j * np.pi * rows * cols / k_pts)

    dft_mt = np.exp(-2j * np.pi * np.outer(np.arange(m_t), np.arange(m_t)) / m_t)
    pilot_set = np.sqrt(pilot_power / m_t) * dft_mt

    pattern_idx = np.arange(c) // m_t
    pilot_idx = np.arange(c) % m_t
    delta_theta = (states[:, pattern_idx + 1] - states[:, pattern_idx]).T
    irs_base = states[:, pattern_idx].T
    pilots = pilot_set[:, pilot_idx].T

    sched = PilotSchedule(m_antennas=m_antennas, m_t=m_t,
                          n_elements=n_elements, pilot_power=pilot_power,
                          subframes=subframes, delta_theta=delta_theta,
                          irs_base=irs_base, pilots=pilots)
    sched.validate()
    return sched


def build_design_matrix(schedule: PilotSchedule, p: int = 0) -> np.ndarray:
    """Stacked design matrix Phi of shape C(M-M_t) x N M_t (M-M_t).

    Row block l is dtheta(l)^T kron (x^T(l) kron I_{M-M_t}); identical for
    every subframe p since the sequences are shared.
    """
    del p  # shared across subframes by construction
    n_rx = schedule.n_rx
    eye = np.eye(n_rx)
    blocks = [np.kron(schedule.delta_theta[l][None, :],
                      np.kron(schedule.pilots[l][None, :], eye))
              for l in range(schedule.n_diffs)]
    return np.vstack(blocks)


def true_omega(scene: Scene, schedule: PilotSchedule, p: int) -> np.ndarray:
    """Noise-free parameter vector vec(G_A^T kr G_B^T) of subframe p."""
    a_set, b_set = schedule.subframes[p]
    g_a = scene.G[:, list(a_set)]
    g_b = scene.G[:, list(b_set)]
    return vec(khatri_rao(g_a.T, g_b.T))


@dataclass
class ObservationSet:
    """Differential pilot observations of one estimation round.

    ``ytilde`` stacks the C(M - M_t)-dim differential observation of each
    subframe row-wise.  ``phi`` is the shared design matrix and ``gram``
    its Gram matrix Phi^H Phi (the ML weight up to the 1/(2 sigma^2)
    scale).  With sigma2 > 0 the LS estimate covariance is
    2 sigma^2 gram^{-1}.
    """

    schedule: PilotSchedule
    ytilde: np.ndarray
    phi: np.ndarray
    sigma2: float
    gram: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        if self.gram is None:
            self.gram = self.phi.conj().T @ self.phi
        svals = np.linalg.svd(self.phi, compute_uv=False)
        if svals[-1] <= svals[0] * 1e-10:
            raise IdentifiabilityError(
                f"design matrix is rank deficient (cond={svals[0] / max(svals[-1], 1e-300):.3g})")
        self.condition_number = float(svals[0] / svals[-1])

    @property
    def covariance(self) -> np.ndarray:
        """LS error covariance 2 sigma^2 (Phi^H Phi)^{-1}; requires sigma2 > 0."""
        return ls_covariance(self.phi, self.sigma2)


def ls_covariance(phi: np.ndarray, sigma2: float) -> np.ndarray:
    if sigma2 <= 0:
        raise ValueError("covariance defined only for sigma2 > 0")
    gram = phi.conj().T @ phi
    return 2.0 * sigma2 * np.linalg.inv(gram)


def simulate_pilot_round(scene: Scene, schedule: PilotSchedule,
                         seed=None) -> ObservationSet:
    """Simulate one full pilot frame and return the stacked observations.

    Per subframe the static channels (self-interference + scatterers) are
    drawn once and cancel exactly in each difference; receiver noise is
    fresh per slot, so the differenced noise is i.i.d. CN(0, 2 sigma^2 I).
    """
    if schedule.n_elements != scene.config.n_elements \
            or schedule.m_antennas != scene.config.m_antennas:
        raise ValueError("schedule dimensions do not match the scene")
    rng = as_rng(seed)
    cfg = scene.config
    sigma2 = cfg.noise_power
    n_rx, c = schedule.n_rx, schedule.n_diffs

    ytilde = np.empty((schedule.n_subframes, c * n_rx), dtype=complex)
    for p, (a_set, b_set) in enumerate(schedule.subframes):
        g_a = scene.G[:, list(a_set)]
        g_bt = scene.G[:, list(b_set)].T
        h_static = (np.sqrt(cfg.si_power) * crandn(rng, n_rx, schedule.m_t)
                    + np.sqrt(cfg.ref_power) * crandn(rng, n_rx, schedule.m_t))
        for l in range(c):
            x = schedule.pilots[l]
            gax = g_a @ x
            base = schedule.irs_base[l]
            y_pair = []
            for theta in (base, base + schedule.delta_theta[l]):
                y = g_bt @ (theta * gax) + h_static @ x
                if sigma2 > 0:
                    y = y + np.sqrt(sigma2) * crandn(rng, n_rx)
                y_pair.append(y)
            ytilde[p, l * n_rx:(l + 1) * n_rx] = y_pair[1] - y_pair[0]

    phi = build_design_matrix(schedule)
    return ObservationSet(schedule=schedule, ytilde=ytilde, phi=phi,
                          sigma2=sigma2)


def ls_estimate(obs: ObservationSet, p: int) -> np.ndarray:
    """Least-squares estimate of omega(p) from subframe p's observation."""
    sol, _, rank, _ = np.linalg.lstsq(obs.phi, obs.ytilde[p], rcond=None)
    if rank < obs.phi.shape[1]:
        raise IdentifiabilityError("design matrix became rank deficient")
    return sol


def ls_estimates(obs: ObservationSet) -> np.ndarray:
    """LS estimates for all subframes, stacked row-wise (P x dim)."""
    return np.vstack([ls_estimate(obs, p) for p in range(obs.schedule.n_subframes)])
