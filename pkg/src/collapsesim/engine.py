"""Conditional stochastic master equation engine with Markovian feedback.

Implements Ito Euler steps of the monitored dynamics

    drho = -i[H, rho] dt
           - (1/8) iint gamma_rs [A_r, [A_s, rho]] dr ds dt
           + (1/2) iint gamma_rs {A_r - <A_r>, rho} dnoise_s dr ds dt

together with the feedback-completed equation (combined_step composes the
free increment with the expansion of the signal-potential conjugation; its
noise average carries the emergent (1/2) int A_r B_r dr Hamiltonian and
the inverse-kernel double commutator in the B fields), its noise-averaged
linear master equation, and the pure-state diffusive unravelling.  Every
monitored or fed-back observable is position diagonal, so all
non-Hamiltonian terms act element-wise on the density matrix, the
conditioning term is traceless at finite step size, and standalone
feedback is an exact diagonal phase conjugation.

States may carry leading batch axes (rho: (..., n, n); noise fields:
(..., grid dims)); all step functions broadcast over them.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field as dc_field

import numpy as np

from .lattice import GuardError, LatticeGrid, _field_values

STEP_GUARD_FRACTION = 0.1  # reject Euler steps with |increment|_1 above this fraction of |rho|_1


def _diag(rho: np.ndarray) -> np.ndarray:
    return np.diagonal(rho, axis1=-2, axis2=-1)


def expectation(rho: np.ndarray, observable):
    """<D> = sum_x D(x) rho_xx for a diagonal observable."""
    d = _field_values(observable)
    p = _diag(rho).real
    out = np.einsum("...x,x->...", p, d)
    return float(out) if out.ndim == 0 else out


def hcal_apply(observable, rho: np.ndarray) -> np.ndarray:
    """{D - <D>, rho}: the traceless, Hermiticity-preserving conditioning map."""
    d = _field_values(observable)
    mean = np.asarray(expectation(rho, d))
    shifted = d[:, None] + d[None, :] - 2.0 * mean[..., None, None]
    return shifted * rho


@dataclass(frozen=True)
class MonitoringSpec:
    """Simultaneously monitored diagonal observables and their correlation.

    family[nu, x] is the diagonal value of observable nu on configuration x.
    On a lattice the index nu runs over grid sites (A_r = smeared mass
    density at r) and integrals carry the cell volume; for an explicit
    finite observable set (MatrixKernel) sums carry unit weight.

    pair_rate[x, y] = Q_gamma(A(., x) - A(., y)) is precomputed once; it is
    the full kernel-weighted double-commutator rate table, so each Euler
    step only needs element-wise work.
    """

    family: np.ndarray  # (n_obs, n_configs)
    kernel: object  # CorrelationKernel | MatrixKernel
    grid: LatticeGrid | None = None  # set when observables live on grid sites
    sigma: float = 0.0  # smearing width used to build the family (record)
    pair_rate: np.ndarray = dc_field(init=False, repr=False)

    def __post_init__(self):
        fam = np.asarray(self.family, float)
        if fam.ndim != 2:
            raise ValueError("family must have shape (n_obs, n_configs)")
        if self.grid is not None and fam.shape[0] != self.grid.n_sites:
            raise ValueError("family rows must match the grid site count")
        object.__setattr__(self, "family", fam)
        gram = self.weight * fam.T @ self.apply_kernel_columns(fam)
        d = np.diag(gram)
        object.__setattr__(self, "pair_rate", d[:, None] + d[None, :] - gram - gram.T)

    @property
    def weight(self) -> float:
        """Measure of the observable index: cell volume on a grid, else 1."""
        return self.grid.cell_volume if self.grid is not None else 1.0

    def apply_kernel_columns(self, fam: np.ndarray, inverse: bool = False) -> np.ndarray:
        """gamma o f column-by-column for an (n_obs, n_cols) stack of fields."""
        op = self.kernel.apply_inverse if inverse else self.kernel.apply
        if self.grid is None:
            return op(fam.T).T
        cols = np.moveaxis(fam.reshape(self.grid.dims + (-1,)), -1, 0)
        return np.moveaxis(op(cols), 0, -1).reshape(fam.shape)

    def apply_kernel_flat(self, vec: np.ndarray) -> np.ndarray:
        """gamma o v on flat observable vectors (batched on leading axes)."""
        if self.grid is None:
            return self.kernel.apply(vec)
        shaped = vec.reshape(vec.shape[:-1] + self.grid.dims)
        return self.kernel.apply(shaped).reshape(vec.shape)

    def sample_noise_flat(self, dt: float, rng, size=()) -> np.ndarray:
        """Signal noise with covariance gamma^-1/dt, flat observable index."""
        raw = self.kernel.sample_noise(dt, rng, size)
        return raw.reshape(tuple(size) + (self.family.shape[0],))

    def flatten_noise(self, noise: np.ndarray) -> np.ndarray:
        n_obs = self.family.shape[0]
        if noise.shape[-1] == n_obs and (self.grid is None or noise.ndim == 1
                                         or noise.shape[-self.grid.ndim:] != self.grid.dims):
            return noise
        return noise.reshape(noise.shape[:-self.grid.ndim] + (n_obs,))

    def means(self, rho: np.ndarray) -> np.ndarray:
        """<A_nu> for every monitored observable."""
        return np.einsum("ox,...x->...o", self.family, _diag(rho).real)

    def self_quadratic(self) -> np.ndarray:
        """Q_gamma(A(., x), A(., x)) per configuration (cached)."""
        cache = self.__dict__.get("_self_quadratic")
        if cache is None:
            applied = self.apply_kernel_columns(self.family)
            cache = self.weight * np.einsum("ox,ox->x", self.family, applied)
            self.__dict__["_self_quadratic"] = cache
        return cache


@dataclass(frozen=True)
class FeedbackSpec:
    """Diagonal feedback operators B_nu paired index-by-index with the
    monitored observables; owns the back-action decoherence rate table
    (inverse-kernel weighted)."""

    family: np.ndarray  # (n_obs, n_configs)
    kernel: object
    grid: LatticeGrid | None = None
    smeared: bool = False  # whether the optional smearing was applied
    pair_rate_inverse: np.ndarray = dc_field(init=False, repr=False)

    def __post_init__(self):
        fam = np.asarray(self.family, float)
        if fam.ndim != 2:
            raise ValueError("family must have shape (n_obs, n_configs)")
        object.__setattr__(self, "family", fam)
        if self.grid is None:
            applied = self.kernel.apply_inverse(fam.T).T
        else:
            cols = np.moveaxis(fam.reshape(self.grid.dims + (-1,)), -1, 0)
            applied = np.moveaxis(self.kernel.apply_inverse(cols), 0, -1).reshape(fam.shape)
        gram = self.weight * fam.T @ applied
        d = np.diag(gram)
        object.__setattr__(self, "pair_rate_inverse", d[:, None] + d[None, :] - gram - gram.T)

    @property
    def weight(self) -> float:
        return self.grid.cell_volume if self.grid is not None else 1.0

    def potential(self, signal_flat: np.ndarray) -> np.ndarray:
        """Diagonal of int signal_nu B_nu: the fed-back potential."""
        return self.weight * np.einsum("ox,...o->...x", self.family, signal_flat)

    def backaction_diagonal(self, monitoring: MonitoringSpec) -> np.ndarray:
        """Diagonal of (1/2) int A_nu B_nu: the emergent deterministic potential."""
        return 0.5 * self.weight * np.einsum("ox,ox->x", monitoring.family, self.family)


def generate_signal(rho: np.ndarray, spec: MonitoringSpec, dt: float, rng, size=()):
    """Signal = <A_nu> + noise and the noise itself; rng None is the
    zero-noise testing hook."""
    means = spec.means(rho)
    if rng is None:
        noise = np.zeros(tuple(size) + (spec.family.shape[0],))
    else:
        noise = spec.sample_noise_flat(dt, rng, size)
    return means + noise, noise


def _step_guard(rho, increment, step):
    inc = np.abs(increment).sum(axis=(-2, -1)).max()
    ref = np.abs(rho).sum(axis=(-2, -1)).max()
    if inc > STEP_GUARD_FRACTION * ref:
        raise GuardError(
            "step-size", step,
            f"|increment|_1 = {inc:.3g} exceeds {STEP_GUARD_FRACTION:g} * |rho|_1 = "
            f"{STEP_GUARD_FRACTION * ref:.3g}; reduce dt")


def _conditioning(rho, spec: MonitoringSpec, noise_flat) -> np.ndarray:
    """(1/2) iint gamma_rs {A_r - <A_r>, rho} dnoise_s, element-wise.

    Exactly traceless path-wise: c(x) + c(y) - 2<c> contracts to zero
    against the diagonal of rho.
    """
    w = spec.apply_kernel_flat(noise_flat)
    c = spec.weight * np.einsum("ox,...o->...x", spec.family, w)
    cmean = np.einsum("...x,...x->...", c, _diag(rho).real)
    shifted = c[..., :, None] + c[..., None, :] - 2.0 * cmean[..., None, None]
    return 0.5 * shifted * rho


def _commutator(H, rho):
    return H @ rho - rho @ H


def sme_step(rho: np.ndarray, H: np.ndarray, spec: MonitoringSpec, noise, dt: float,
             step: int | None = None) -> np.ndarray:
    """One Ito Euler step of the monitored dynamics without feedback."""
    noise_flat = spec.flatten_noise(np.asarray(noise))
    inc = -1j * dt * _commutator(H, rho)
    inc = inc - dt * 0.125 * spec.pair_rate * rho
    inc = inc + dt * _conditioning(rho, spec, noise_flat)
    _step_guard(rho, inc, step)
    return rho + inc


def feedback_step(rho_free: np.ndarray, potential, dt: float) -> np.ndarray:
    """Exact conjugation by exp(-i V dt) for a real diagonal potential V."""
    v = _field_values(potential)
    phase = np.exp(-1j * dt * v)
    return phase[..., :, None] * rho_free * phase.conj()[..., None, :]


def combined_step(rho: np.ndarray, H: np.ndarray, spec: MonitoringSpec,
                  fb: FeedbackSpec | None, noise, dt: float,
                  backaction=None, step: int | None = None) -> np.ndarray:
    """One step of the feedback-completed conditional master equation.

    Implements the equation the way it is derived: the free monitored Euler
    increment followed by the second-order expansion of the feedback
    conjugation exp(-i V dt) . exp(+i V dt) with the full signal potential
    V = int signal_r B_r dr, keeping the quadratic noise products path-wise.
    Their Ito means reproduce the printed form exactly -- the emergent
    (1/2) int A B Hamiltonian and the inverse-kernel-weighted double
    commutator in the B fields -- while path-wise the step agrees with the
    exact conjugation to O(dt^{3/2}).  Hermiticity and the unit trace are
    preserved identically (every feedback term is a commutator).

    backaction (the diagonal of (1/2) int A_nu B_nu) is accepted for
    interface symmetry with me_step; the deterministic potential emerges
    here from the noise averages and is not added separately.  With fb None
    this reduces to sme_step.
    """
    if fb is None:
        return sme_step(rho, H, spec, noise, dt, step)
    noise_flat = spec.flatten_noise(np.asarray(noise))
    free = -1j * dt * _commutator(H, rho)
    free = free - dt * 0.125 * spec.pair_rate * rho
    free = free + dt * _conditioning(rho, spec, noise_flat)
    signal = spec.means(rho) + noise_flat
    v = fb.potential(signal)
    vd = v[..., :, None] - v[..., None, :]
    inc = free - 1j * dt * vd * (rho + free) - 0.5 * dt * dt * vd * vd * rho
    _step_guard(rho, inc, step)
    return rho + inc


def me_step(rho: np.ndarray, H: np.ndarray, spec: MonitoringSpec,
            fb: FeedbackSpec | None, dt: float,
            backaction=None, step: int | None = None) -> np.ndarray:
    """Noise-averaged step: deterministic, linear, trace preserving and
    completely positive (double commutators with nonnegative kernels)."""
    inc = -1j * dt * _commutator(H, rho)
    rate = 0.125 * spec.pair_rate
    if fb is not None:
        if backaction is None:
            backaction = fb.backaction_diagonal(spec)
        inc = inc - 1j * dt * (backaction[..., :, None] - backaction[..., None, :]) * rho
        rate = rate + 0.5 * fb.pair_rate_inverse
    inc = inc - dt * rate * rho
    _step_guard(rho, inc, step)
    return rho + inc


def hfb_identity_check(A, B, rho: np.ndarray, tol: float = 1e-12) -> bool:
    """Check -(i/2)[B, {A, rho}] == -(i/4)[{A, B}, rho] with dense matrices.

    The rewriting of the feedback cross term as a pure Hamiltonian one
    needs the tensor symmetry A (x) B = B (x) A of the summed observable
    pairs, not just commutativity: for a single diagonal pair it holds iff
    A and B are proportional (up to constants).  The physically paired
    families satisfy it through the symmetry of the Newton kernel; use
    hfb_family_identity_check for that statement.
    """
    a, b = np.diag(_field_values(A)), np.diag(_field_values(B))
    anti = a @ rho + rho @ a
    lhs = -0.5j * (b @ anti - anti @ b)
    ab = a @ b + b @ a
    rhs = -0.25j * (ab @ rho - rho @ ab)
    return bool(np.abs(lhs - rhs).max() <= tol)


def hfb_family_identity_check(spec: MonitoringSpec, fb: FeedbackSpec,
                              rho: np.ndarray, tol: float = 1e-12) -> bool:
    """Check -(i/2) int dr [B_r, {A_r, rho}] == -i [V, rho] with
    V = (1/2) int dr A_r B_r, summed over the paired families.

    This is the identity that makes the deterministic part of the feedback
    Hamiltonian; it holds because int A_r(x) B_r(y) dr is symmetric in
    (x, y) for density/potential pairs built from one symmetric kernel.
    """
    w = spec.weight
    lhs = np.zeros_like(np.asarray(rho, complex))
    for nu in range(spec.family.shape[0]):
        a, b = np.diag(spec.family[nu]), np.diag(fb.family[nu])
        anti = a @ rho + rho @ a
        lhs += -0.5j * w * (b @ anti - anti @ b)
    vg = np.diag(fb.backaction_diagonal(spec))
    rhs = -1j * (vg @ rho - rho @ vg)
    return bool(np.abs(lhs - rhs).max() <= tol)


def sse_step(psi: np.ndarray, H: np.ndarray, spec: MonitoringSpec,
             fb: FeedbackSpec | None, noise, dt: float,
             step: int | None = None) -> np.ndarray:
    """Norm-preserving diffusive unravelling step.

    Drift and diffusion are the pure-state transcription of the monitored
    master equation (so projectors agree with the density-matrix step to
    O(dt^{3/2})); feedback is composed afterwards as an exact diagonal
    phase built from the full signal, exactly like the operational
    definition.  The state is renormalized each step.
    """
    noise_flat = spec.flatten_noise(np.asarray(noise))
    prob = (psi.conj() * psi).real
    means = np.einsum("ox,...x->...o", spec.family, prob)
    # -(1/8) Q_gamma(A - <A>, A - <A>) evaluated per configuration
    applied_means = spec.apply_kernel_flat(means)
    cross = spec.weight * np.einsum("ox,...o->...x", spec.family, applied_means)
    qmm = spec.weight * np.einsum("...o,...o->...", means, applied_means)
    quad = spec.self_quadratic() - 2.0 * cross + qmm[..., None]
    # +(1/2) (gamma o dnoise) contracted with (A - <A>)
    w = spec.apply_kernel_flat(noise_flat)
    c = spec.weight * np.einsum("ox,...o->...x", spec.family, w)
    cmean = np.einsum("...x,...x->...", c, prob)
    dpsi = -1j * dt * np.einsum("xy,...y->...x", H, psi)
    dpsi = dpsi + dt * (-0.125 * quad + 0.5 * (c - cmean[..., None])) * psi
    out = psi + dpsi
    if fb is not None:
        signal = means + noise_flat
        out = np.exp(-1j * dt * fb.potential(signal)) * out
    norm = np.linalg.norm(out, axis=-1, keepdims=True)
    if np.any(norm < 0.1):
        raise GuardError("norm-collapse", step, "state norm fell below 0.1 before renormalization")
    return out / norm


@dataclass
class TrajectoryRecord:
    """Time series of one seeded run plus integrity diagnostics."""

    seed: int
    times: np.ndarray
    trace: np.ndarray
    purity: np.ndarray
    positions: np.ndarray  # (n_rec, n_particles): <x_n> along grid axis 0
    density_means: np.ndarray | None = None  # (n_rec, n_obs)
    signals: np.ndarray | None = None  # (n_rec, n_obs) signal of the step just taken
    offdiagonals: np.ndarray | None = None  # (n_rec, n_pairs) |rho_xy|
    min_eigenvalue: np.ndarray | None = None
    snapshots: list = dc_field(default_factory=list)
    positivity_warnings: list = dc_field(default_factory=list)


def run_trajectory(initial: np.ndarray, model, dt: float, steps: int, seed: int,
                   record_every: int = 1, record_density: bool = False,
                   record_signal: bool = False, offdiagonal_pairs=(),
                   snapshot_every: int = 0, monitor_positivity: bool | None = None,
                   unconditional: bool = False) -> TrajectoryRecord:
    """Integrate one seeded trajectory of a built model.

    initial may be a state vector (pure-state unravelling for monitored
    models; required for the mean-field baseline) or a density matrix.  The
    record is fully determined by (model, initial, dt, steps, seed).
    unconditional runs the noise-averaged master equation instead (the seed
    is then irrelevant; recorded signals are the observable means).
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    rng = np.random.Generator(np.random.Philox(seed))
    state = np.asarray(initial, complex).copy()
    pure = state.ndim == 1
    n_cfg = state.shape[-1]
    if monitor_positivity is None:
        monitor_positivity = (not pure) and n_cfg <= 128
    monitored = model.monitoring is not None

    rec_steps = list(range(0, steps + 1, record_every))
    if rec_steps[-1] != steps:
        rec_steps.append(steps)
    times = dt * np.asarray(rec_steps, float)
    n_rec = len(rec_steps)
    trace = np.empty(n_rec)
    purity = np.empty(n_rec)
    positions = np.empty((n_rec, model.particles.count))
    density = np.empty((n_rec, model.monitoring.family.shape[0])) if (record_density and monitored) else None
    signals = np.empty((n_rec, model.monitoring.family.shape[0])) if (record_signal and monitored) else None
    offpairs = np.asarray(offdiagonal_pairs, int).reshape(-1, 2)
    offdiag = np.empty((n_rec, len(offpairs))) if len(offpairs) else None
    mineig = np.empty(n_rec) if monitor_positivity else None
    snapshots = []
    positivity_events = []

    def record(j, istep, state, last_signal):
        rho = np.outer(state, state.conj()) if pure else state
        p = np.diagonal(rho).real
        tr = p.sum()
        trace[j] = tr
        purity[j] = np.einsum("xy,yx->", rho, rho).real / (tr * tr)
        positions[j] = model.position_coordinates @ p / tr
        if density is not None:
            density[j] = model.monitoring.family @ p
        if signals is not None:
            signals[j] = last_signal if last_signal is not None else model.monitoring.family @ p
        for m in range(0 if offdiag is None else len(offpairs)):
            offdiag[j, m] = abs(rho[offpairs[m, 0], offpairs[m, 1]])
        if mineig is not None:
            wmin = float(np.linalg.eigvalsh(rho).min())
            mineig[j] = wmin
            if wmin < -1e-8:
                positivity_events.append((istep, wmin))
        if snapshot_every and (istep % snapshot_every == 0 or istep == steps):
            snapshots.append((istep * dt, state.copy()))

    j = 0
    last_signal = None
    record(j, 0, state, None)
    j += 1
    for i in range(1, steps + 1):
        if unconditional:
            state, last_signal = model.advance_unconditional(state, dt, step=i)
        else:
            state, last_signal = model.advance(state, dt, rng, step=i)
        if j < n_rec and i == rec_steps[j]:
            record(j, i, state, last_signal)
            j += 1
    if positivity_events:
        warnings.warn(
            f"density matrix dipped below the positivity floor at steps "
            f"{[s for s, _ in positivity_events][:5]} (min eigenvalue "
            f"{min(w for _, w in positivity_events):.2e})", RuntimeWarning, stacklevel=2)
    return TrajectoryRecord(seed=seed, times=times, trace=trace, purity=purity,
                            positions=positions, density_means=density, signals=signals,
                            offdiagonals=offdiag, min_eigenvalue=mineig,
                            snapshots=snapshots, positivity_warnings=positivity_events)


def ensemble_mean(model, rho0: np.ndarray, dt: float, steps: int, seeds,
                  chunk: int = 256) -> np.ndarray:
    """Mean density matrix over seeded conditional trajectories.

    Each seed owns its counter-based stream; trajectories advance in
    vectorized batches and are reduced in seed order, so the result does
    not depend on the chunk size.
    """
    seeds = list(seeds)
    n_cfg = rho0.shape[-1]
    acc = np.zeros((n_cfg, n_cfg), complex)
    for start in range(0, len(seeds), chunk):
        batch = seeds[start:start + chunk]
        rngs = [np.random.Generator(np.random.Philox(s)) for s in batch]
        rho = np.broadcast_to(rho0, (len(batch), n_cfg, n_cfg)).copy()
        for i in range(1, steps + 1):
            noise = np.stack([model.monitoring.kernel.sample_noise(dt, rng) for rng in rngs])
            rho = combined_step(rho, model.hamiltonian, model.monitoring, model.feedback,
                                noise, dt, backaction=model.backaction, step=i)
        acc += rho.sum(axis=0)
    return acc / len(seeds)
