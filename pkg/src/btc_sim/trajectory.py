"""Quantum-jump unraveling of the dissipative chain.

Pure states evolve under the non-Hermitian generator H - (i gamma/2) sum_j n_j
between decay events; jumps |sigma>_j -> |0>_j fire stochastically with the
standard first-order probability bookkeeping.  Averaging trajectories
reproduces the master equation, and single realizations expose the
synchronization structure that the averaged moments wash out.

The propagator is a fourth-order Taylor polynomial of the short-time
exponential, so the step must resolve both the jump budget (delta_p small)
and the coherent scales.  Everything here works on the full 3^N ladder and
is capped at small N; the cumulant and permutation-symmetric backends cover
the large sizes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.optimize import least_squares

from .model import (ModelParams, ModelError, build_local_operators,
                    local_hamiltonian, resolve_interactions)
from .permsym import meanfield_frequency

TRAJECTORY_CAP = 10
MAX_DELTA_P = 0.1
_NVEC = np.array([0.0, 1.0, 1.0])
_CHANNEL_LABELS = ("+", "-")
_RNG_BLOCK = 512


class TrajectoryError(RuntimeError):
    """Step-size violations, cap violations, or malformed records."""


def _check_cap(size: int, cap: int):
    if size > cap:
        raise TrajectoryError(
            f"size {size} exceeds trajectory cap {cap}")


def _digit_table(size: int) -> np.ndarray:
    """digits[j, idx] = level of site j in basis state idx (site 0 leftmost)."""
    idx = np.arange(3 ** size)
    return np.stack([(idx // 3 ** (size - 1 - j)) % 3 for j in range(size)])


def _site_sparse(op: np.ndarray, site: int, size: int) -> sp.csr_matrix:
    left = sp.identity(3 ** site, format="csr", dtype=complex)
    right = sp.identity(3 ** (size - 1 - site), format="csr", dtype=complex)
    return sp.kron(sp.kron(left, sp.csr_matrix(op)), right, format="csr")


def effective_hamiltonian(params: ModelParams,
                          cap: int = TRAJECTORY_CAP) -> sp.csr_matrix:
    """H - (i gamma / 2) sum_j n_j as a sparse 3^N x 3^N matrix.

    The Hermitian part is the chain Hamiltonian; the anti-Hermitian part is
    the negative-semidefinite decay ledger, diag(0, -gamma/2, -gamma/2) per
    site.  Norm loss under this generator is exactly the accumulated jump
    probability.
    """
    size = params.size
    _check_cap(size, cap)
    dim = 3 ** size
    h1 = local_hamiltonian(params)
    heff = sp.csr_matrix((dim, dim), dtype=complex)
    for j in range(size):
        heff = heff + _site_sparse(h1, j, size)
    occ = _NVEC[_digit_table(size)]        # (size, dim) occupation per site
    diag = np.zeros(dim, dtype=complex)
    if size >= 2:
        v = resolve_interactions(params).pair_table(size)
        for i in range(size):
            for j in range(i + 1, size):
                diag -= v[i, j] * occ[i] * occ[j]
    diag -= 0.5j * params.local_decay * occ.sum(axis=0)
    return (heff + sp.diags(diag)).tocsr()


def taylor_propagate(heff: sp.spmatrix, state: np.ndarray, dt: float,
                     terms: int = 4) -> np.ndarray:
    """Degree-`terms` Taylor polynomial of exp(-i dt H_eff) applied to state.

    Accepts a single vector (dim,) or a batch (dim, B).  No normalization:
    the returned norm carries the no-jump survival weight.
    """
    scale = -1j * dt
    out = np.array(state, dtype=complex, copy=True)
    term = out.copy()
    for k in range(1, terms + 1):
        term = (scale / k) * (heff @ term)
        out = out + term
    return out


@dataclass
class TrajectoryContext:
    """Precomputed machinery shared by every step of one parameter set."""

    params: ModelParams
    dim: int
    heff: sp.csr_matrix
    occ_total: np.ndarray                  # (dim,) total occupation, diagonal
    jump_src: list                         # [2*site+k] -> indices with level k+1
    jump_dst: list                         # matching indices with level 0
    observable_ops: dict = field(default_factory=dict)

    @property
    def size(self) -> int:
        return self.params.size

    @property
    def n_channels(self) -> int:
        return 2 * self.params.size

    def channel_label(self, channel: int) -> tuple[int, str]:
        return channel // 2, _CHANNEL_LABELS[channel % 2]


def _collective_operator(op: np.ndarray, size: int) -> sp.csr_matrix:
    total = sp.csr_matrix((3 ** size, 3 ** size), dtype=complex)
    for j in range(size):
        total = total + _site_sparse(op, j, size)
    return total.tocsr()


def make_context(params: ModelParams,
                 observables: Sequence[str] = ("s_z", "n", "q", "d"),
                 cap: int = TRAJECTORY_CAP) -> TrajectoryContext:
    """Build the sparse operators and jump index maps for `step`/`run_ensemble`.

    Observable names follow the mean-field component convention
    (n, s_z, s_x, s_y, s_mx, s_my, q, d); each is recorded as the collective
    mean <sum_j op_j>/N.
    """
    size = params.size
    _check_cap(size, cap)
    digits = _digit_table(size)
    local = build_local_operators().as_dict()
    names = {"n": "n", "s_z": "sz", "s_x": "sx", "s_y": "sy",
             "s_mx": "smx", "s_my": "smy", "q": "q", "d": "d"}
    ops = {}
    for name in observables:
        if name not in names:
            raise TrajectoryError(f"unknown observable {name!r}")
        ops[name] = _collective_operator(local[names[name]], size)
    src, dst = [], []
    for j in range(size):
        stride = 3 ** (size - 1 - j)
        for level in (1, 2):
            here = np.nonzero(digits[j] == level)[0]
            src.append(here)
            dst.append(here - level * stride)
    return TrajectoryContext(params=params, dim=3 ** size,
                             heff=effective_hamiltonian(params, cap),
                             occ_total=_NVEC[digits].sum(axis=0),
                             jump_src=src, jump_dst=dst,
                             observable_ops=ops)


def _channel_rates(state: np.ndarray, ctx: TrajectoryContext) -> np.ndarray:
    """gamma <L_c^dag L_c> for the 2N channels, order (site, {+,-})."""
    w2 = np.abs(state) ** 2
    gamma = ctx.params.local_decay
    return gamma * np.array([w2[s].sum() for s in ctx.jump_src])


def jump_probabilities(state: np.ndarray, dt: float,
                       ctx: TrajectoryContext) -> np.ndarray:
    """Per-channel jump probabilities dt * gamma * <sigma_j population>."""
    return dt * _channel_rates(state, ctx)


def _collapse(state: np.ndarray, channel: int,
              ctx: TrajectoryContext) -> np.ndarray:
    out = np.zeros_like(state)
    out[ctx.jump_dst[channel]] = state[ctx.jump_src[channel]]
    nrm = np.linalg.norm(out)
    if nrm == 0.0:
        raise TrajectoryError("jump fired on a channel with zero weight")
    return out / nrm


def _pick_channel(rates: np.ndarray, v: float) -> int:
    cum = np.cumsum(rates)
    return int(np.searchsorted(cum, v * cum[-1], side="right").clip(0, rates.size - 1))


def step(state: np.ndarray, dt: float, rng: np.random.Generator,
         ctx: TrajectoryContext):
    """One stochastic step; returns (new_state, event).

    event is None for a no-jump step, else (site, channel) with channel in
    {"+", "-"}.  A jump replaces the coherent update for its step, which is
    an O(dt) equivalent of applying it at the boundary.  Consumes exactly
    one uniform variate per step: the same draw decides whether a jump fires
    and, rescaled, which channel takes it.
    """
    rates = _channel_rates(state, ctx)
    delta_p = dt * rates.sum()
    if delta_p >= MAX_DELTA_P:
        raise TrajectoryError(
            f"time step too large: delta_p={delta_p:.3g} >= {MAX_DELTA_P}")
    u = rng.random()
    if u < delta_p:
        channel = _pick_channel(rates, u / delta_p)
        site, label = ctx.channel_label(channel)
        return _collapse(state, channel, ctx), (site, label)
    out = taylor_propagate(ctx.heff, state, dt)
    return out / np.linalg.norm(out), None


# ---------------------------------------------------------------------------
# ensembles

@dataclass
class TrajectoryRecord:
    """One realization: sampled observables plus the jump log."""

    times: np.ndarray                      # (T,)
    observables: dict                      # name -> (T,) real array
    jumps: list                            # [(time, site, channel), ...]
    seed: tuple
    params: ModelParams

    def observable(self, name: str) -> np.ndarray:
        if name not in self.observables:
            raise TrajectoryError(f"record has no observable {name!r}")
        return self.observables[name]


@dataclass
class EnsembleResult:
    times: np.ndarray
    means: dict                            # name -> (T,)
    stderrs: dict                          # name -> (T,), NaN for n_traj=1
    records: list
    params: ModelParams

    @property
    def n_traj(self) -> int:
        return len(self.records)


def _trajectory_keys(seeds, n_traj: int) -> list[tuple]:
    if isinstance(seeds, (int, np.integer)):
        return [(int(seeds), k) for k in range(n_traj)]
    seeds = list(seeds)
    if len(seeds) != n_traj:
        raise TrajectoryError(
            f"seed list length {len(seeds)} != n_traj {n_traj}")
    return [(int(s), 0) for s in seeds]


def default_step(params: ModelParams) -> float:
    """Step targeting a per-step jump budget below 0.01 at full excitation."""
    scale = max(params.local_decay * params.size, 1.0)
    return 0.01 / scale


def run_ensemble(params: ModelParams, n_traj: int, t_final: float,
                 seeds=0, dt: float | None = None,
                 sample_dt: float = 0.05,
                 observables: Sequence[str] = ("s_z", "n", "q", "d"),
                 state0: np.ndarray | None = None,
                 cap: int = TRAJECTORY_CAP) -> EnsembleResult:
    """Propagate n_traj jump trajectories in lockstep and average.

    Each trajectory owns a counter-based stream keyed by (seed, index), so
    results are bit-reproducible for a given seed or seed list and do not
    depend on batching.  Means come with the standard error of the mean
    (NaN when n_traj = 1).  Initial state defaults to every site in |0>.
    """
    if n_traj < 1:
        raise TrajectoryError("n_traj must be at least 1")
    if t_final <= 0:
        raise TrajectoryError("t_final must be positive")
    ctx = make_context(params, observables, cap)
    if dt is None:
        dt = default_step(params)
    n_steps = max(1, int(round(t_final / dt)))
    dt = t_final / n_steps
    stride = max(1, int(round(sample_dt / dt)))
    keys = _trajectory_keys(seeds, n_traj)
    gens = [np.random.Generator(np.random.Philox(key=key)) for key in keys]

    psi = np.zeros((ctx.dim, n_traj), dtype=complex)
    if state0 is None:
        psi[0, :] = 1.0                    # every site in |0>
    else:
        state0 = np.asarray(state0, dtype=complex).ravel()
        if state0.shape != (ctx.dim,):
            raise TrajectoryError(
                f"state0 must have length {ctx.dim}, got {state0.size}")
        psi[:, :] = (state0 / np.linalg.norm(state0))[:, None]

    gamma = ctx.params.local_decay
    sample_times = [0.0]
    samples = {name: [] for name in observables}

    def record_samples():
        for name, op in ctx.observable_ops.items():
            vals = np.einsum("ib,ib->b", psi.conj(), op @ psi).real
            samples[name].append(vals / ctx.size)

    record_samples()
    logs = [[] for _ in range(n_traj)]
    block = np.empty((n_traj, 0))
    kk = _RNG_BLOCK
    for istep in range(n_steps):
        if kk >= block.shape[1]:
            block = np.stack([g.random(_RNG_BLOCK) for g in gens])
            kk = 0
        u = block[:, kk]
        kk += 1
        w2 = np.abs(psi) ** 2
        delta_p = dt * gamma * (ctx.occ_total @ w2)
        worst = float(delta_p.max())
        if worst >= MAX_DELTA_P:
            raise TrajectoryError(
                f"time step too large: delta_p={worst:.3g} >= {MAX_DELTA_P}")
        fired = np.nonzero(u < delta_p)[0]
        saved = psi[:, fired].copy() if fired.size else None
        psi = taylor_propagate(ctx.heff, psi, dt)
        psi /= np.linalg.norm(psi, axis=0)
        t_now = (istep + 1) * dt
        for pos, b in enumerate(fired):
            col = saved[:, pos]
            rates = gamma * np.array(
                [(np.abs(col[s]) ** 2).sum() for s in ctx.jump_src])
            channel = _pick_channel(rates, u[b] / delta_p[b])
            psi[:, b] = _collapse(col, channel, ctx)
            site, label = ctx.channel_label(channel)
            logs[b].append((t_now, site, label))
        if (istep + 1) % stride == 0:
            sample_times.append(t_now)
            record_samples()

    times = np.array(sample_times)
    stacked = {name: np.stack(cols) for name, cols in samples.items()}
    means = {name: arr.mean(axis=1) for name, arr in stacked.items()}
    if n_traj > 1:
        stderrs = {name: arr.std(axis=1, ddof=1) / np.sqrt(n_traj)
                   for name, arr in stacked.items()}
    else:
        stderrs = {name: np.full(times.size, np.nan) for name in stacked}
    records = [TrajectoryRecord(
        times=times,
        observables={name: stacked[name][:, b].copy() for name in stacked},
        jumps=logs[b], seed=keys[b], params=params)
        for b in range(n_traj)]
    return EnsembleResult(times=times, means=means, stderrs=stderrs,
                          records=records, params=params)


# ---------------------------------------------------------------------------
# spectral readout of single records

@dataclass
class SpectrumReport:
    frequencies: np.ndarray                # angular, >= 0
    power: np.ndarray
    peak_frequency: float
    purity: float                          # peak power / total non-DC power
    low_resolution: bool


def fourier_spectrum(record: TrajectoryRecord, observable: str = "s_z",
                     transient: float = 0.0,
                     omega_ref: float | None = None) -> SpectrumReport:
    """DFT power of a detrended observable after dropping the transient.

    purity is the fraction of non-DC power held by the dominant bin; a clean
    limit cycle approaches 1 (up to shot noise), while noisy or multi-mode
    signals spread out.  Windows shorter than eight reference periods set
    low_resolution instead of raising; the reference defaults to the
    mean-field frequency of record.params.
    """
    sig = record.observable(observable)
    times = record.times
    keep = times >= transient
    sig, times = sig[keep], times[keep]
    if times.size < 4:
        raise TrajectoryError("too few samples after the transient")
    spacing = np.diff(times)
    if spacing.max() - spacing.min() > 1e-9 * spacing.max():
        raise TrajectoryError("fourier_spectrum needs uniform sampling")
    dt = float(spacing.mean())
    amp = np.fft.rfft(sig - sig.mean())
    power = np.abs(amp) ** 2
    freqs = 2.0 * np.pi * np.fft.rfftfreq(times.size, d=dt)
    peak = 1 + int(np.argmax(power[1:]))
    total = float(power[1:].sum())
    purity = float(power[peak] / total) if total > 0 else 0.0
    if omega_ref is None:
        omega_ref = meanfield_frequency(record.params)
    duration = float(times[-1] - times[0])
    low_res = bool(np.isfinite(omega_ref) and omega_ref > 0
                   and duration < 8.0 * 2.0 * np.pi / omega_ref)
    return SpectrumReport(frequencies=freqs, power=power,
                          peak_frequency=float(freqs[peak]),
                          purity=purity, low_resolution=low_res)


# ---------------------------------------------------------------------------
# exponential-sum compression of the interaction tail

@dataclass
class ExpSumFit:
    """V(r) ~ sum_k a_k b_k^(r-1) + c on r = 1..N-1, bases in (0, 1)."""

    amplitudes: np.ndarray
    bases: np.ndarray
    constant: float
    max_rel_error: float

    def evaluate(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        powers = self.bases[None, :] ** (r[..., None] - 1.0)
        return powers @ self.amplitudes + self.constant


def _expsum_design(bases: np.ndarray, r: np.ndarray) -> np.ndarray:
    cols = [b ** (r - 1.0) for b in bases] + [np.ones_like(r)]
    return np.stack(cols, axis=1)


def _expsum_linear(bases: np.ndarray, r: np.ndarray,
                   target: np.ndarray) -> tuple[np.ndarray, float]:
    m = _expsum_design(bases, r) / target[:, None]
    coef, *_ = np.linalg.lstsq(m, np.ones_like(target), rcond=None)
    return coef[:-1], float(coef[-1])


def _expsum_pack(amps, bases, c):
    u = np.log(bases / (1.0 - bases))      # logit keeps bases in (0, 1)
    return np.concatenate([amps, u, [c]])


def _expsum_unpack(x, m):
    amps = x[:m]
    bases = 1.0 / (1.0 + np.exp(-x[m:2 * m]))
    return amps, bases, float(x[-1])


def _expsum_max_err(amps, bases, c, r, target):
    fit = _expsum_design(bases, r) @ np.concatenate([amps, [c]])
    return float(np.max(np.abs(fit - target) / np.abs(target)))


def fit_exponential_sum(alpha: float, size: int, m: int,
                        profile: str = "PowerLaw") -> ExpSumFit:
    """Compress the Kac-normalized open-chain tail into m exponentials.

    Minimizes the relative misfit of sum_k a_k b_k^(r-1) + c against V(r)
    over r = 1..N-1.  Terms are added one at a time, each stage seeding the
    next, so the reported max_rel_error never increases with m.  A pure
    exponential profile is reproduced exactly by m = 1.
    """
    if m < 1:
        raise TrajectoryError("fit needs at least one exponential term")
    if size - 1 < 2 * m + 1:
        raise TrajectoryError(
            f"m={m} too large for size {size}: need size-1 >= 2m+1")
    try:
        params = ModelParams(size=size, powerlaw_exponent=alpha,
                             profile=profile, boundary="OpenChain")
    except ModelError as err:
        raise TrajectoryError(str(err)) from err
    target = resolve_interactions(params).offsets
    r = np.arange(1, size, dtype=float)

    def residual(x, k):
        amps, bases, c = _expsum_unpack(x, k)
        fit = _expsum_design(bases, r) @ np.concatenate([amps, [c]])
        return fit / target - 1.0

    best = None                            # (max_err, amps, bases, c)
    for k in range(1, m + 1):
        starts = []
        for span in (0.35, 1.0, 3.0):
            lengths = np.geomspace(0.5, max(2.0, span * (size - 1)), k)
            starts.append(np.exp(-1.0 / lengths))
        # tail ratio start: exact for a single geometric decay, so the
        # m=1 fit of an exponential profile lands at machine precision
        ratio = float(np.median(target[1:] / target[:-1]))
        ratios = np.full(k, np.clip(ratio, 1e-6, 1.0 - 1e-9))
        ratios[1:] = ratios[1:] ** np.arange(2, k + 1)
        starts.append(ratios)
        if best is not None:
            # previous solution plus one nearly-dead term: guarantees the
            # stage never regresses
            bases_aug = np.append(best[2], 0.5)
            amps_aug = np.append(best[1], 0.0)
            starts.append(("warm", amps_aug, bases_aug, best[3]))
        stage_best = None
        for start in starts:
            if isinstance(start, tuple):
                _, amps0, bases0, c0 = start
            else:
                bases0 = np.clip(start, 1e-6, 1.0 - 1e-9)
                amps0, c0 = _expsum_linear(bases0, r, target)
            x0 = _expsum_pack(np.asarray(amps0, dtype=float), bases0, c0)
            sol = least_squares(residual, x0, args=(k,), method="lm",
                                xtol=1e-15, ftol=1e-15, max_nfev=4000)
            amps, bases, c = _expsum_unpack(sol.x, k)
            err = _expsum_max_err(amps, bases, c, r, target)
            if stage_best is None or err < stage_best[0]:
                stage_best = (err, amps, bases, c)
        if best is not None and isinstance(starts[-1], tuple):
            # warm start evaluated as-is is the monotonicity floor
            _, amps_aug, bases_aug, c_aug = starts[-1]
            err_aug = _expsum_max_err(amps_aug, bases_aug, c_aug, r, target)
            if err_aug < stage_best[0]:
                stage_best = (err_aug, amps_aug, bases_aug, c_aug)
        best = stage_best
    err, amps, bases, c = best
    order = np.argsort(-bases)
    return ExpSumFit(amplitudes=amps[order], bases=bases[order],
                     constant=c, max_rel_error=err)


# ---------------------------------------------------------------------------
# delimited exports

def record_to_csv(record: TrajectoryRecord) -> str:
    names = list(record.observables)
    lines = ["t," + ",".join(names)]
    for i, t in enumerate(record.times):
        row = [f"{t:.6f}"] + [f"{record.observables[n][i]:.10g}"
                              for n in names]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def jumps_to_csv(record: TrajectoryRecord) -> str:
    lines = ["t,site,channel"]
    for t, site, channel in record.jumps:
        lines.append(f"{t:.6f},{site},{channel}")
    return "\n".join(lines) + "\n"


def ensemble_to_csv(result: EnsembleResult) -> str:
    names = list(result.means)
    header = ["t"]
    for n in names:
        header += [f"{n}_mean", f"{n}_stderr"]
    lines = [",".join(header)]
    for i, t in enumerate(result.times):
        row = [f"{t:.6f}"]
        for n in names:
            row += [f"{result.means[n][i]:.10g}",
                    f"{result.stderrs[n][i]:.10g}"]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"
