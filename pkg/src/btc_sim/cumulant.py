"""Second-order cumulant dynamics for arbitrary interaction profiles.

Pair moments are kept as full (not connected) expectations of the nine
transition operators sigma^{cd} = |c><d| per site, with three-site moments
closed by the Gaussian splitting

    <ABC> ~ <AB><C> + <AC><B> + <BC><A> - 2<A><B><C>.

Two generators are provided: a full inhomogeneous O(N^2) version used as an
oracle at small N, and a translation-invariant O(N log N) reduction for
rings, whose distance-resolved field sums are circular convolutions.  The
local part of both generators is built numerically from the adjoint action
of the single-site Lindbladian, so no hand-derived structure constants enter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import DOP853, RK45, solve_ivp
from scipy.interpolate import PchipInterpolator
from scipy.optimize import minimize

from .model import ModelParams, jump_operators, local_hamiltonian, resolve_interactions

LEVELS = "0pm"
OP_LABELS = tuple(a + b for a in LEVELS for b in LEVELS)  # row-major 3c+d
OP_INDEX = {lab: i for i, lab in enumerate(OP_LABELS)}
PP, MM = OP_INDEX["pp"], OP_INDEX["mm"]
FULL_SIZE_CAP = 60

# excitation indicator per level and its (c,d) difference per operator
_NVEC = np.array([0.0, 1.0, 1.0])
DELTA_N = np.array([_NVEC[i // 3] - _NVEC[i % 3] for i in range(9)])

# representatives of the 21 pair channels: orbits of ordered operator pairs
# under swap (distance reversal) and joint conjugation, on the 8-operator
# basis that drops sigma^{mm} via the completeness identity
PAIR_CHANNELS = (
    ("00", "00"), ("00", "pp"), ("pp", "pp"),
    ("00", "0p"), ("00", "0m"), ("00", "pm"),
    ("pp", "0p"), ("pp", "0m"), ("pp", "pm"),
    ("0p", "0p"), ("0p", "p0"), ("0m", "0m"), ("0m", "m0"),
    ("pm", "pm"), ("pm", "mp"),
    ("0p", "0m"), ("0p", "m0"), ("0p", "pm"), ("0p", "mp"),
    ("0m", "pm"), ("0m", "mp"),
)


class CumulantError(RuntimeError):
    pass


def _dagger_index(op: int) -> int:
    return 3 * (op % 3) + op // 3


def build_local_generator(params: ModelParams) -> np.ndarray:
    """9x9 matrix T with d<sigma^x>/dt = sum_y T[x,y] <sigma^y> for the
    single-site part (drive, detuning, splitting, decay; no interaction)."""
    h = local_hamiltonian(params)
    jumps = jump_operators(params.local_decay)
    t = np.empty((9, 9), dtype=complex)
    for x in range(9):
        sigma = np.zeros((3, 3), dtype=complex)
        sigma[x // 3, x % 3] = 1.0
        out = 1j * (h @ sigma - sigma @ h)
        for L in jumps:
            ld = L.conj().T
            out += ld @ sigma @ L - 0.5 * (ld @ L @ sigma + sigma @ ld @ L)
        t[x] = out.reshape(9)
    return t


def _bond_matrix() -> np.ndarray:
    b = np.empty((9, 9))
    for x in range(9):
        for y in range(9):
            b[x, y] = (_NVEC[x // 3] * _NVEC[y // 3]
                       - _NVEC[x % 3] * _NVEC[y % 3])
    return b


BOND = _bond_matrix()


def ring_offsets(params: ModelParams) -> np.ndarray:
    """W[r] for r = 0..N-1 with W[0] = 0, symmetric under r -> N-r."""
    if params.boundary != "Ring":
        raise CumulantError(
            "translation invariance requires the Ring boundary")
    prof = resolve_interactions(params)
    w = np.zeros(params.size)
    w[1:] = prof.offsets
    return w


# ---------------------------------------------------------------------------
# state containers

@dataclass
class CumulantState:
    """Homogeneous cumulant state: single-site moments and distance-resolved
    pair moments.

    seconds[x, y, r] = <sigma^x_a sigma^y_{a+r}> for r = 1..N-1 (the r = 0
    layer is kept zero).  The full redundant 9x9 set of channels is stored;
    the canonical fields of the five independent first moments and the 21
    independent pair channels are views on it.
    """

    size: int
    firsts: np.ndarray            # (9,) complex
    seconds: np.ndarray           # (9, 9, N) complex

    def __post_init__(self):
        self.firsts = np.asarray(self.firsts, dtype=complex)
        self.seconds = np.asarray(self.seconds, dtype=complex)
        if self.firsts.shape != (9,):
            raise CumulantError("first moments must have shape (9,)")
        if self.seconds.shape != (9, 9, self.size):
            raise CumulantError("pair moments must have shape (9, 9, N)")

    # the five independent single-site expectations
    @property
    def pop0(self) -> float:
        return float(self.firsts[OP_INDEX["00"]].real)

    @property
    def pop_plus(self) -> float:
        return float(self.firsts[PP].real)

    @property
    def coh_0p(self) -> complex:
        return complex(self.firsts[OP_INDEX["0p"]])

    @property
    def coh_0m(self) -> complex:
        return complex(self.firsts[OP_INDEX["0m"]])

    @property
    def coh_pm(self) -> complex:
        return complex(self.firsts[OP_INDEX["pm"]])

    @property
    def s_z(self) -> float:
        return float((self.firsts[PP] - self.firsts[MM]).real)

    def channel(self, first: str, second: str) -> np.ndarray:
        """Distance array <sigma^first_a sigma^second_{a+r}>, r = 1..N-1."""
        return self.seconds[OP_INDEX[first], OP_INDEX[second], 1:]

    def channels(self) -> dict:
        return {pair: self.channel(*pair) for pair in PAIR_CHANNELS}

    def hermitian_violation(self) -> float:
        """Max deviation from the conjugation/distance-reversal pairing."""
        c = self.seconds
        rev = np.roll(c[:, :, ::-1], 1, axis=2)   # r -> (N - r) mod N
        swap = np.transpose(rev, (1, 0, 2))       # <B_a A_{a+N-r}>
        worst = np.abs(c - swap).max()
        dag = np.array([_dagger_index(i) for i in range(9)])
        conj = np.conj(c[np.ix_(dag, dag)])       # <A^+ B^+>* pairing
        worst = max(worst, float(np.abs(c - conj).max()))
        f = self.firsts
        worst = max(worst, float(np.abs(f - np.conj(f[dag])).max()))
        return float(worst)

    def copy(self) -> "CumulantState":
        return CumulantState(self.size, self.firsts.copy(),
                             self.seconds.copy())


def state_from_density(size: int, rho: np.ndarray) -> CumulantState:
    """Uncorrelated product state with every site in the given 3x3 state."""
    rho = np.asarray(rho, dtype=complex)
    firsts = np.array([rho[x % 3, x // 3] for x in range(9)])  # <s^{cd}>=rho_dc
    seconds = np.zeros((9, 9, size), dtype=complex)
    seconds[:, :, 1:] = np.multiply.outer(firsts, firsts)[:, :, None]
    return CumulantState(size, firsts, seconds)


def all_ground(size: int) -> CumulantState:
    rho = np.zeros((3, 3), dtype=complex)
    rho[0, 0] = 1.0
    return state_from_density(size, rho)


def _pack(state: CumulantState) -> np.ndarray:
    return np.concatenate([state.firsts, state.seconds.ravel()])


def _unpack(size: int, y: np.ndarray) -> CumulantState:
    return CumulantState(size, y[:9].copy(),
                         y[9:].reshape(9, 9, size).copy())


# ---------------------------------------------------------------------------
# translation-invariant generator

def cme_rhs_ti(state: CumulantState, params: ModelParams,
               w: np.ndarray | None = None,
               t_local: np.ndarray | None = None) -> CumulantState:
    """Time derivative of the homogeneous cumulant state on a ring."""
    if params.size != state.size:
        raise CumulantError("state size does not match params")
    n = state.size
    if w is None:
        w = ring_offsets(params)
    if t_local is None:
        t_local = build_local_generator(params)
    chi = params.collective_strength
    s, f = state.firsts, state.seconds

    fn = f[:, PP, :] + f[:, MM, :]                  # <sigma^x_a n_{a+r}>
    nbar = s[PP] + s[MM]
    phi = fn @ w                                     # (9,)
    wf = np.fft.fft(w)
    conv = np.fft.ifft(wf * np.fft.fft(fn, axis=1), axis=1)
    conv_rev = np.roll(conv[:, ::-1], 1, axis=1)     # value at N-r
    fn_rev = np.roll(fn[:, ::-1], 1, axis=1)

    ds = t_local @ s - 1j * DELTA_N * phi

    df = (np.einsum("xz,zyr->xyr", t_local, f)
          + np.einsum("yz,xzr->xyr", t_local, f))
    df -= 1j * BOND[:, :, None] * w[None, None, :] * f

    ex_n = nbar * (chi - w)                          # (N,)
    base = (f - 2.0 * np.multiply.outer(s, s)[:, :, None]) * ex_n[None, None, :]
    term_a = base \
        + (phi[:, None] - w[None, :] * fn)[:, None, :] * s[None, :, None] \
        + conv_rev[None, :, :] * s[:, None, None]
    term_b = base \
        + (phi[:, None] - w[None, :] * fn_rev)[None, :, :] * s[:, None, None] \
        + conv[:, None, :] * s[None, :, None]
    df -= 1j * DELTA_N[:, None, None] * term_a
    df -= 1j * DELTA_N[None, :, None] * term_b

    df[:, :, 0] = 0.0
    return CumulantState(n, ds, df)


# ---------------------------------------------------------------------------
# full inhomogeneous generator (oracle scale)

def cme_rhs_full(firsts: np.ndarray, seconds: np.ndarray,
                 params: ModelParams,
                 v: np.ndarray | None = None,
                 t_local: np.ndarray | None = None):
    """Derivatives of site-resolved moments; O(N^2) memory, N <= 60."""
    n = params.size
    if n > FULL_SIZE_CAP:
        raise CumulantError(f"full CME capped at N={FULL_SIZE_CAP}")
    s = np.asarray(firsts, dtype=complex)
    f = np.asarray(seconds, dtype=complex)
    if s.shape != (n, 9) or f.shape != (n, n, 9, 9):
        raise CumulantError("moment arrays have wrong shape")
    if v is None:
        v = resolve_interactions(params).pair_table(n)
    if t_local is None:
        t_local = build_local_generator(params)

    fn = f[:, :, :, PP] + f[:, :, :, MM]            # <sigma^x_a n_b>
    nbar = s[:, PP] + s[:, MM]                      # (N,)
    vn = v @ nbar                                   # (N,)
    phi = np.einsum("ak,akx->ax", v, fn)            # (N, 9)

    ds = s @ t_local.T - 1j * DELTA_N[None, :] * np.einsum(
        "ab,abx->ax", v, fn)

    df = (np.einsum("xz,abzy->abxy", t_local, f)
          + np.einsum("yz,abxz->abxy", t_local, f))
    df -= 1j * v[:, :, None, None] * BOND[None, None, :, :] * f

    ex_a = vn[:, None] - v * nbar[None, :]          # sum_{k!=a,b} V_ak nbar_k
    ex_b = vn[None, :] - v * nbar[:, None]          # sum_{k!=a,b} V_bk nbar_k
    ss = np.einsum("ax,by->abxy", s, s)
    psi = np.einsum("ak,bky->aby", v, fn)           # sum_k V_ak <s^y_b n_k>
    xi = np.einsum("bk,akx->abx", v, fn)            # sum_k V_bk <s^x_a n_k>

    term_a = (f * ex_a[:, :, None, None]
              - 2.0 * ss * ex_a[:, :, None, None]
              + np.einsum("abx,by->abxy",
                          phi[:, None, :] - v[:, :, None] * fn, s)
              + np.einsum("aby,ax->abxy", psi, s))
    fn_ba = np.transpose(fn, (1, 0, 2))             # <sigma^y_b n_a> indexing
    term_b = (f * ex_b[:, :, None, None]
              - 2.0 * ss * ex_b[:, :, None, None]
              + np.einsum("aby,ax->abxy",
                          phi[None, :, :] - v[:, :, None] * fn_ba, s)
              + np.einsum("abx,by->abxy", xi, s))
    df -= 1j * DELTA_N[None, None, :, None] * term_a
    df -= 1j * DELTA_N[None, None, None, :] * term_b

    idx = np.arange(n)
    df[idx, idx] = 0.0
    return ds, df


def full_from_ti(state: CumulantState) -> tuple[np.ndarray, np.ndarray]:
    """Embed a homogeneous state into site-resolved arrays."""
    n = state.size
    s = np.tile(state.firsts, (n, 1))
    f = np.empty((n, n, 9, 9), dtype=complex)
    for a in range(n):
        for b in range(n):
            f[a, b] = state.seconds[:, :, (b - a) % n]
    return s, f


def ti_from_full(firsts: np.ndarray, seconds: np.ndarray) -> CumulantState:
    n = firsts.shape[0]
    sec = np.zeros((9, 9, n), dtype=complex)
    for r in range(1, n):
        sec[:, :, r] = seconds[0, r]
    return CumulantState(n, firsts[0].copy(), sec)


# ---------------------------------------------------------------------------
# integration

@dataclass
class CmeSeries:
    t: np.ndarray
    firsts: np.ndarray                 # (T, 9)
    states: list | None                # full CumulantState samples, optional
    final: CumulantState

    def s_z(self) -> np.ndarray:
        return np.real(self.firsts[:, PP] - self.firsts[:, MM])

    def population(self) -> np.ndarray:
        return np.real(self.firsts[:, PP] + self.firsts[:, MM])


def cme_integrate(state0: CumulantState, params: ModelParams,
                  t_final: float, t_samples=None, rtol: float = 1e-9,
                  atol: float = 1e-11, keep: str = "all",
                  t_start: float = 0.0, method: str = "RK45") -> CmeSeries:
    """Integrate the translation-invariant CME with adaptive stepping.

    keep="all" stores the full state at every sample; keep="firsts" keeps
    only single-site moments at the sample times; keep="steps" keeps the
    single-site moments at the solver's own step endpoints, which is the
    cheap option for very long runs at large N.
    """
    if not t_final > t_start:
        raise CumulantError("t_final must exceed t_start")
    if t_samples is None:
        t_samples = np.linspace(t_start, t_final, 200)
    t_samples = np.asarray(t_samples, dtype=float)
    w = ring_offsets(params)
    t_local = build_local_generator(params)
    size = state0.size

    def rhs(_t, y):
        d = cme_rhs_ti(_unpack(size, y), params, w, t_local)
        return _pack(d)

    if keep == "all":
        sol = solve_ivp(rhs, (t_start, t_final), _pack(state0),
                        t_eval=t_samples, method=method, rtol=rtol,
                        atol=atol)
        if not sol.success:
            if sol.status == -1 and "step size" in sol.message.lower():
                raise CumulantError(f"stiff failure: {sol.message}")
            raise CumulantError(f"integration failed: {sol.message}")
        firsts = sol.y[:9, :].T.copy()
        states = [_unpack(size, sol.y[:, i]) for i in range(sol.y.shape[1])]
        final = _unpack(size, sol.y[:, -1])
        return CmeSeries(t=sol.t, firsts=firsts, states=states, final=final)

    stepper_cls = {"RK45": RK45, "DOP853": DOP853}[method]
    stepper = stepper_cls(rhs, t_start, _pack(state0), t_final,
                          rtol=rtol, atol=atol)
    if keep == "steps":
        t_out = [t_start]
        f_out = [state0.firsts.copy()]
        while stepper.status == "running":
            stepper.step()
            if stepper.status == "failed":
                raise CumulantError("stiff failure: adaptive step collapsed")
            t_out.append(stepper.t)
            f_out.append(stepper.y[:9].copy())
        final = _unpack(size, stepper.y)
        return CmeSeries(t=np.array(t_out), firsts=np.array(f_out),
                         states=None, final=final)

    # keep == "firsts": dense interpolation, first moments only
    out = np.empty((len(t_samples), 9), dtype=complex)
    k = 0
    while k < len(t_samples) and t_samples[k] <= t_start:
        out[k] = state0.firsts
        k += 1
    while stepper.status == "running":
        stepper.step()
        if stepper.status == "failed":
            raise CumulantError("stiff failure: adaptive step collapsed")
        dense = stepper.dense_output()
        while k < len(t_samples) and t_samples[k] <= stepper.t:
            out[k] = dense(t_samples[k])[:9]
            k += 1
    final = _unpack(size, stepper.y)
    return CmeSeries(t=t_samples[:k].copy(), firsts=out[:k], states=None,
                     final=final)


def cme_integrate_full(firsts0: np.ndarray, seconds0: np.ndarray,
                       params: ModelParams, t_final: float, t_samples=None,
                       rtol: float = 1e-9, atol: float = 1e-11):
    """Integrate the site-resolved CME (oracle scale)."""
    n = params.size
    if t_samples is None:
        t_samples = np.linspace(0.0, t_final, 200)
    v = resolve_interactions(params).pair_table(n)
    t_local = build_local_generator(params)
    shape_f = (n, n, 9, 9)

    def rhs(_t, y):
        s = y[:9 * n].reshape(n, 9)
        f = y[9 * n:].reshape(shape_f)
        ds, df = cme_rhs_full(s, f, params, v, t_local)
        return np.concatenate([ds.ravel(), df.ravel()])

    y0 = np.concatenate([np.asarray(firsts0, complex).ravel(),
                         np.asarray(seconds0, complex).ravel()])
    sol = solve_ivp(rhs, (0.0, t_final), y0, t_eval=np.asarray(t_samples),
                    method="RK45", rtol=rtol, atol=atol)
    if not sol.success:
        raise CumulantError(f"integration failed: {sol.message}")
    ts = []
    for i in range(sol.y.shape[1]):
        s = sol.y[:9 * n, i].reshape(n, 9)
        f = sol.y[9 * n:, i].reshape(shape_f)
        ts.append((s, f))
    return sol.t, ts


# ---------------------------------------------------------------------------
# correlation diagnostics

def connected_zz(state: CumulantState) -> np.ndarray:
    """Connected <s^z_a s^z_{a+r}> - <s^z>^2 for r = 1..N-1."""
    f = state.seconds
    czz = (f[PP, PP, 1:] - f[PP, MM, 1:] - f[MM, PP, 1:] + f[MM, MM, 1:])
    return np.real(czz) - state.s_z ** 2


@dataclass
class CoffResult:
    value: float
    stationary: bool
    derivative_norm: float

    @property
    def flag(self) -> str:
        return "" if self.stationary else "time-dependent"


def c_off(state: CumulantState, params: ModelParams,
          stationarity_tol: float = 1e-8) -> CoffResult:
    """Distance-averaged connected zz correlation of a (near-)steady state."""
    deriv = cme_rhs_ti(state, params)
    norm = max(float(np.abs(deriv.firsts).max()),
               float(np.abs(deriv.seconds).max()))
    value = float(np.mean(connected_zz(state)))
    return CoffResult(value=value, stationary=norm <= stationarity_tol,
                      derivative_norm=norm)


def c_off_range(series: CmeSeries, r: int, window: tuple[float, float]
                ) -> float:
    """Range-restricted mean correlation averaged over a time window."""
    if series.states is None:
        raise CumulantError("series was integrated without stored states")
    size = series.states[0].size
    if not 1 <= r < size:
        raise CumulantError("range must satisfy 1 <= r < N")
    t0, t1 = window
    mask = (series.t >= t0) & (series.t <= t1)
    if series.t[0] > t0 or series.t[-1] < t1 or not mask.any():
        raise CumulantError("averaging window exceeds the series")
    vals = []
    for i in np.nonzero(mask)[0]:
        czz = connected_zz(series.states[i])
        vals.append(float(np.mean(czz[:r])))
    return float(np.mean(vals))


# ---------------------------------------------------------------------------
# oscillation lifetime

@dataclass
class LifetimeResult:
    tau: float
    flag: str            # "" | "no-oscillation" | "not-reached"
    contrast_times: np.ndarray = field(default_factory=lambda: np.empty(0))
    contrasts: np.ndarray = field(default_factory=lambda: np.empty(0))


def lifetime(t: np.ndarray, sz: np.ndarray, eps: float = 1e-5,
             transient: float = 0.0) -> LifetimeResult:
    """Time at which the oscillation contrast of s_z first drops below eps.

    Contrast is the half peak-to-trough swing per oscillation period (the
    envelope amplitude for a damped cosine), measured between successive
    mean-upcrossings of the tail after the transient.
    """
    if eps <= 0:
        raise CumulantError("eps must be positive")
    t = np.asarray(t, dtype=float)
    sz = np.asarray(sz, dtype=float)
    keep = t >= transient
    t, sz = t[keep], sz[keep]
    if len(t) < 8:
        return LifetimeResult(tau=0.0, flag="no-oscillation")
    c0 = sz.mean()
    up = np.where((sz[:-1] < c0) & (sz[1:] >= c0))[0]
    if len(up) < 2:
        return LifetimeResult(tau=0.0, flag="no-oscillation")
    times, contrasts = [], []
    for k in range(len(up) - 1):
        seg = sz[up[k]:up[k + 1] + 1]
        times.append(t[up[k]])
        contrasts.append(0.5 * (seg.max() - seg.min()))
    times = np.array(times)
    contrasts = np.array(contrasts)
    below = np.nonzero(contrasts < eps)[0]
    if len(below) == 0:
        return LifetimeResult(tau=math.inf, flag="not-reached",
                              contrast_times=times, contrasts=contrasts)
    return LifetimeResult(tau=float(times[below[0]]), flag="",
                          contrast_times=times, contrasts=contrasts)


def run_lifetime(params: ModelParams, eps: float = 1e-5,
                 t_max: float = 4000.0, chunk: float = 200.0,
                 transient: float = 10.0, rtol: float = 1e-6,
                 atol: float = 1e-9, method: str = "DOP853",
                 state0: CumulantState | None = None) -> LifetimeResult:
    """Chunked integration that stops as soon as the contrast threshold is
    crossed; only the s_z trace at solver steps is accumulated."""
    state = all_ground(params.size) if state0 is None else state0
    t_acc: list[np.ndarray] = []
    z_acc: list[np.ndarray] = []
    t0 = 0.0
    while t0 < t_max:
        t1 = min(t0 + chunk, t_max)
        series = cme_integrate(state, params, t1, rtol=rtol, atol=atol,
                               keep="steps", t_start=t0, method=method)
        state = series.final
        t_acc.append(series.t)
        z_acc.append(series.s_z())
        res = lifetime(np.concatenate(t_acc), np.concatenate(z_acc),
                       eps=eps, transient=transient)
        if res.flag == "":
            return res
        t0 = t1
    return lifetime(np.concatenate(t_acc), np.concatenate(z_acc),
                    eps=eps, transient=transient)


# ---------------------------------------------------------------------------
# finite-size scaling

@dataclass
class ScalingFitReport:
    alpha_c: float
    zeta: float
    nu: float
    residual: float
    grid: list


def _collapse_residual(theta, curves):
    alpha_c, zeta, nu = theta
    if not (0.05 <= nu <= 20.0):
        return 1e6
    rescaled = []
    for n, alpha, coff in curves:
        x = n ** (1.0 / nu) * (alpha - alpha_c)
        y = coff * n ** (-zeta / nu)
        order = np.argsort(x)
        rescaled.append((x[order], y[order]))
    lo = max(x.min() for x, _ in rescaled)
    hi = min(x.max() for x, _ in rescaled)
    if hi <= lo:
        return 1e6
    grid = np.linspace(lo, hi, 64)
    interped = []
    for x, y in rescaled:
        interped.append(PchipInterpolator(x, y)(grid))
    stack = np.array(interped)
    dev = stack - stack.mean(axis=0)
    scale = np.abs(stack).max()
    if scale == 0:
        return 1e6
    return float(np.mean(dev ** 2) / scale ** 2)


def fit_scaling_collapse(rows) -> ScalingFitReport:
    """Collapse C_off(alpha, N) onto N^{zeta/nu} G[N^{1/nu}(alpha-alpha_c)].

    rows: iterable of (N, alpha, C_off) triples, or of sweep-row dicts with
    keys N/alpha/c_off as produced by compare_interaction_tails.
    Derivative-free simplex search from a deterministic multi-start grid.
    """
    rows = [(r["N"], r["alpha"], r["c_off"]) if isinstance(r, dict) else r
            for r in rows]
    rows = [(int(n), float(a), float(c)) for n, a, c in rows]
    sizes = sorted({n for n, _, _ in rows})
    if len(sizes) < 3:
        raise CumulantError("collapse fit needs at least 3 sizes")
    curves = []
    for n in sizes:
        sub = sorted((a, c) for m, a, c in rows if m == n)
        if len(sub) < 8:
            raise CumulantError("collapse fit needs >= 8 alpha values per size")
        curves.append((n, np.array([a for a, _ in sub]),
                       np.array([c for _, c in sub])))
    alphas = sorted({a for _, a, _ in rows})
    a_lo, a_hi = alphas[0], alphas[-1]
    starts = []
    for ac in np.linspace(a_lo + 0.1 * (a_hi - a_lo),
                          a_hi - 0.1 * (a_hi - a_lo), 4):
        for zeta in (-0.5, 0.5):
            for nu in (1.0, 2.0):
                starts.append((ac, zeta, nu))
    best = None
    for x0 in starts:
        res = minimize(_collapse_residual, x0, args=(curves,),
                       method="Nelder-Mead",
                       options={"xatol": 1e-6, "fatol": 1e-12,
                                "maxiter": 4000})
        if best is None or res.fun < best.fun:
            best = res
    if best is None or not np.isfinite(best.fun) or best.fun >= 1e6:
        raise CumulantError("collapse optimizer diverged")
    return ScalingFitReport(alpha_c=float(best.x[0]), zeta=float(best.x[1]),
                            nu=float(best.x[2]), residual=float(best.fun),
                            grid=rows)


# ---------------------------------------------------------------------------
# profile sweeps

def settle_and_measure(params: ModelParams, t_measure: float = 30.0,
                       rtol: float = 1e-8) -> tuple[float, str]:
    """C_off from a window average of one mean-field period around
    t_measure, flagged stationary/time-dependent from the endpoint rhs."""
    period = 1.35
    t0, t1 = t_measure - period / 2, t_measure + period / 2
    samples = np.concatenate([np.linspace(0, t0, 40, endpoint=False),
                              np.linspace(t0, t1, 28)])
    series = cme_integrate(all_ground(params.size), params, t1,
                           t_samples=samples, rtol=rtol, keep="all")
    value = c_off_range(series, params.size - 1, (t0, t1))
    res = c_off(series.final, params)
    return value, res.flag


def compare_interaction_tails(base: ModelParams, alphas, sizes,
                              profiles=("PowerLaw", "Exponential"),
                              t_measure: float = 30.0, rtol: float = 1e-8,
                              jobs: int = 1) -> list[dict]:
    """C_off(alpha) per size and profile; rows for the sweep CSV."""
    tasks = []
    for profile in profiles:
        for n in sizes:
            for alpha in alphas:
                tasks.append((base.with_(size=int(n), profile=profile,
                                         powerlaw_exponent=float(alpha)),
                              t_measure, rtol))
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_tail_point, tasks, chunksize=1))
    else:
        results = [_tail_point(t) for t in tasks]
    rows = []
    for (p, _, _), (value, flag) in zip(tasks, results):
        rows.append({"N": p.size, "alpha": p.powerlaw_exponent,
                     "profile": p.profile, "c_off": value,
                     "tau": math.nan, "flag": flag})
    return rows


def _tail_point(task):
    params, t_measure, rtol = task
    return settle_and_measure(params, t_measure, rtol)


def find_crossings(rows, profile: str) -> list[tuple[int, int, float]]:
    """Alpha values where C_off curves of neighboring sizes intersect."""
    sizes = sorted({r["N"] for r in rows if r["profile"] == profile})
    out = []
    for n1, n2 in zip(sizes, sizes[1:]):
        c1 = sorted((r["alpha"], r["c_off"]) for r in rows
                    if r["profile"] == profile and r["N"] == n1)
        c2 = sorted((r["alpha"], r["c_off"]) for r in rows
                    if r["profile"] == profile and r["N"] == n2)
        a = np.array([x for x, _ in c1])
        d = np.array([y for _, y in c1]) - np.array([y for _, y in c2])
        for k in range(len(d) - 1):
            if d[k] == 0 or d[k] * d[k + 1] < 0:
                frac = d[k] / (d[k] - d[k + 1]) if d[k] != d[k + 1] else 0.0
                out.append((n1, n2, float(a[k] + frac * (a[k + 1] - a[k]))))
    return out


def collapse_report_text(report: ScalingFitReport) -> str:
    return (f"alpha_c = {report.alpha_c:.6g}\n"
            f"zeta = {report.zeta:.6g}\n"
            f"nu = {report.nu:.6g}\n"
            f"residual = {report.residual:.6g}\n")


def sweep_to_csv(rows, path):
    with open(path, "w") as fh:
        fh.write("N,alpha,profile,c_off,tau,flag\n")
        for r in rows:
            fh.write(f"{r['N']},{r['alpha']:.10g},{r['profile']},"
                     f"{r['c_off']:.10g},{r['tau']:.10g},{r['flag']}\n")
