"""Mean-field backend: the eight coupled moment equations, fixed points,
limit-cycle detection, Lyapunov diagnostics, and phase-diagram scans.

State ordering everywhere: (n, s_z, s_x, s_y, s_mx, s_my, q, d).  The mean
field sees the interactions only through the collective strength chi; the
single nonlinearity is the chi*n self-consistent shift of the detuning.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .model import ModelParams, SQRT2

STATE_FIELDS = ("n", "s_z", "s_x", "s_y", "s_mx", "s_my", "q", "d")

# classification tolerances (see classify_phase)
LYAPUNOV_CHAOS_THRESHOLD = 1e-2
CYCLE_PERIOD_SPREAD = 1e-4
CYCLE_POINT_SPREAD = 1e-6
DEFAULT_TRANSIENT_OVER_GAMMA = 50.0


class MeanFieldError(RuntimeError):
    pass


class StiffFailure(MeanFieldError):
    """Integrator step size underflowed; the problem looks stiff."""


@dataclass(frozen=True)
class MeanFieldState:
    n: float = 0.0
    s_z: float = 0.0
    s_x: float = 0.0
    s_y: float = 0.0
    s_mx: float = 0.0
    s_my: float = 0.0
    q: float = 0.0
    d: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.n, self.s_z, self.s_x, self.s_y,
                         self.s_mx, self.s_my, self.q, self.d])

    @staticmethod
    def from_array(x) -> "MeanFieldState":
        return MeanFieldState(*(float(v) for v in x))

    def density_matrix(self) -> np.ndarray:
        """Reconstructed single-site density matrix (unit trace built in)."""
        cp = ((self.s_x + self.s_mx) - 1j * (self.s_y + self.s_my)) / (2 * SQRT2)
        cm = ((self.s_x - self.s_mx) + 1j * (self.s_y - self.s_my)) / (2 * SQRT2)
        g = (self.d - 1j * self.q) / 2
        return np.array([
            [1 - self.n, np.conj(cp), np.conj(cm)],
            [cp, (self.n + self.s_z) / 2, np.conj(g)],
            [cm, g, (self.n - self.s_z) / 2],
        ])


ALL_IN_ZERO = MeanFieldState()


def mf_rhs(state, params: ModelParams) -> np.ndarray:
    """Time derivative of the eight moments."""
    x = state.as_array() if isinstance(state, MeanFieldState) else np.asarray(state)
    return _rhs(0.0, x, params.rabi, params.detuning, params.level_splitting,
                params.collective_strength, params.local_decay)


def _rhs(_t, x, rabi, delta, e, chi, gamma):
    n, sz, sx, sy, smx, smy, q, d = x
    w = rabi / SQRT2
    dt = delta + chi * n
    return np.array([
        w * smy - gamma * n,
        w * sy - gamma * sz,
        e * sy + dt * smy - 0.5 * gamma * sx,
        -w * sz - e * sx - dt * smx - 0.5 * gamma * sy,
        -w * q + e * smy + dt * sy - 0.5 * gamma * smx,
        -w * (3 * n + d - 2) - e * smx - dt * sx - 0.5 * gamma * smy,
        w * smx + 2 * e * d - gamma * q,
        w * smy - 2 * e * q - gamma * d,
    ])


def jacobian(state, params: ModelParams) -> np.ndarray:
    """Analytic 8x8 Jacobian of mf_rhs at the given state."""
    x = state.as_array() if isinstance(state, MeanFieldState) else np.asarray(state)
    n, sz, sx, sy, smx, smy, q, d = x
    w = params.rabi / SQRT2
    e = params.level_splitting
    chi = params.collective_strength
    g = params.local_decay
    dt = params.detuning + chi * n
    j = np.zeros((8, 8))
    # rows follow STATE_FIELDS order
    j[0, 5] = w
    j[0, 0] = -g
    j[1, 3] = w
    j[1, 1] = -g
    j[2, 0] = chi * smy
    j[2, 3] = e
    j[2, 5] = dt
    j[2, 2] = -g / 2
    j[3, 0] = -chi * smx
    j[3, 1] = -w
    j[3, 2] = -e
    j[3, 4] = -dt
    j[3, 3] = -g / 2
    j[4, 0] = chi * sy
    j[4, 6] = -w
    j[4, 5] = e
    j[4, 3] = dt
    j[4, 4] = -g / 2
    j[5, 0] = -3 * w - chi * sx
    j[5, 7] = -w
    j[5, 4] = -e
    j[5, 2] = -dt
    j[5, 5] = -g / 2
    j[6, 4] = w
    j[6, 7] = 2 * e
    j[6, 6] = -g
    j[7, 5] = w
    j[7, 6] = -2 * e
    j[7, 7] = -g
    return j


@dataclass
class TimeSeries:
    t: np.ndarray
    y: np.ndarray  # shape (len(t), 8)

    def state(self, i: int) -> MeanFieldState:
        return MeanFieldState.from_array(self.y[i])

    def column(self, name: str) -> np.ndarray:
        return self.y[:, STATE_FIELDS.index(name)]


def integrate(state0, params: ModelParams, t_final: float,
              rtol: float = 1e-9, atol: float = 1e-11,
              t_samples=None, t_start: float = 0.0) -> TimeSeries:
    """Adaptive RK5(4) integration with dense sampling."""
    if not t_final > t_start:
        raise MeanFieldError("t_final must exceed t_start")
    x0 = (state0.as_array() if isinstance(state0, MeanFieldState)
          else np.asarray(state0, dtype=float))
    if t_samples is None:
        t_samples = np.linspace(t_start, t_final, max(200, int(50 * (t_final - t_start))))
    t_samples = np.asarray(t_samples, dtype=float)
    sol = solve_ivp(_rhs, (t_start, t_final), x0,
                    args=(params.rabi, params.detuning, params.level_splitting,
                          params.collective_strength, params.local_decay),
                    method="RK45", rtol=rtol, atol=atol, t_eval=t_samples)
    if not sol.success:
        if sol.status == -1 and "step size" in sol.message.lower():
            raise StiffFailure(f"stiff failure: {sol.message}")
        raise MeanFieldError(f"integration failed: {sol.message}")
    return TimeSeries(t=sol.t, y=sol.y.T)


# ---------------------------------------------------------------------------
# fixed points

@dataclass
class FixedPointReport:
    state: MeanFieldState
    eigenvalues: np.ndarray
    stability: str           # stable | unstable | center-like
    basin_tag: str           # how many Newton starts converged here
    residual: float


def _newton(x0, params, tol=1e-12, max_iter=60):
    x = np.asarray(x0, dtype=float).copy()
    for _ in range(max_iter):
        f = mf_rhs(x, params)
        norm = np.linalg.norm(f)
        if norm < tol:
            return x
        try:
            step = np.linalg.solve(jacobian(x, params), -f)
        except np.linalg.LinAlgError:
            return None
        lam = 1.0
        for _bt in range(30):  # backtracking on the residual norm
            xn = x + lam * step
            if np.linalg.norm(mf_rhs(xn, params)) < norm:
                break
            lam *= 0.5
        else:
            return None
        x = x + lam * step
    return x if np.linalg.norm(mf_rhs(x, params)) < tol else None


def _start_grid(n_starts: int) -> np.ndarray:
    base = []
    for n in (0.0, 0.25, 0.5, 0.75):
        for sz in (-0.5, 0.0, 0.5):
            x = np.zeros(8)
            x[0], x[1] = n, sz
            base.append(x)
    if n_starts > len(base):
        # deterministic Halton-like extension over (n, s_z, d)
        extra = np.zeros((n_starts - len(base), 8))
        for i in range(len(extra)):
            extra[i, 0] = _vdc(i + 1, 2)
            extra[i, 1] = extra[i, 0] * (2 * _vdc(i + 1, 3) - 1)
            extra[i, 7] = extra[i, 0] * (2 * _vdc(i + 1, 5) - 1)
        return np.vstack([np.array(base), extra])
    return np.array(base)[:max(1, n_starts)]


def _vdc(i: int, base: int) -> float:
    v, denom = 0.0, 1.0
    while i:
        i, rem = divmod(i, base)
        denom *= base
        v += rem / denom
    return v


def find_fixed_points(params: ModelParams, n_starts: int = 12,
                      stability_tol: float = 1e-7) -> list[FixedPointReport]:
    """Damped Newton from a deterministic start grid, de-duplicated."""
    starts = _start_grid(n_starts)
    roots, counts = [], []
    for x0 in starts:
        x = _newton(x0, params)
        if x is None:
            continue
        for k, r in enumerate(roots):
            if np.linalg.norm(r - x) < 1e-6:
                counts[k] += 1
                break
        else:
            roots.append(x)
            counts.append(1)
    reports = []
    for x, cnt in zip(roots, counts):
        lam = np.linalg.eigvals(jacobian(x, params))
        re = lam.real
        if np.all(re < -stability_tol):
            stab = "stable"
        elif np.any(re > stability_tol):
            stab = "unstable"
        else:
            stab = "center-like"
        reports.append(FixedPointReport(
            state=MeanFieldState.from_array(x), eigenvalues=lam,
            stability=stab, basin_tag=f"{cnt}/{len(starts)}",
            residual=float(np.linalg.norm(mf_rhs(x, params)))))
    reports.sort(key=lambda r: r.state.n)
    return reports


# ---------------------------------------------------------------------------
# limit cycles and Lyapunov exponents

@dataclass
class CycleReport:
    is_cycle: bool
    period: float = math.nan
    frequency: float = math.nan
    amplitude: float = math.nan
    period_spread: float = math.nan
    point_spread: float = math.nan


def detect_limit_cycle(series: TimeSeries, observable: str = "s_z",
                       min_periods: int = 20) -> CycleReport:
    """Poincare-section cycle test on an already-transient-free series.

    The section is the hyperplane where the observable crosses its series
    mean upward.  A cycle requires the return times to agree to a relative
    spread < 1e-4 and the full 8-dimensional return points to cluster
    within 1e-6.
    """
    t, y = series.t, series.y
    if len(t) < 4 * min_periods:
        raise MeanFieldError("insufficient data for cycle detection")
    sig = series.column(observable)
    c0 = sig.mean()
    amp = (sig.max() - sig.min()) / 2
    if amp < 1e-12:
        return CycleReport(is_cycle=False, amplitude=amp)
    up = np.where((sig[:-1] < c0) & (sig[1:] >= c0))[0]
    if len(up) < min_periods + 1:
        raise MeanFieldError(
            f"insufficient data: {len(up)} section crossings, "
            f"need {min_periods + 1}")
    t_cross = np.empty(len(up))
    points = np.empty((len(up), y.shape[1]))
    for k, i in enumerate(up):
        t_cross[k], points[k] = _refine_crossing(t, y, sig, c0, i)
    periods = np.diff(t_cross)
    period = periods.mean()
    period_spread = periods.std() / period if period > 0 else math.inf
    point_spread = np.max(np.linalg.norm(points - points.mean(axis=0), axis=1))
    is_cycle = (period_spread < CYCLE_PERIOD_SPREAD
                and point_spread < CYCLE_POINT_SPREAD)
    return CycleReport(is_cycle=bool(is_cycle), period=float(period),
                       frequency=float(2 * math.pi / period),
                       amplitude=float(amp),
                       period_spread=float(period_spread),
                       point_spread=float(point_spread))


def _refine_crossing(t, y, sig, c0, i):
    """Crossing time/point between samples i and i+1 by local cubic fit.

    Linear interpolation leaves O(h^2) scatter in the return points, which
    swamps the 1e-6 clustering threshold at practical sample spacings.
    """
    lo = max(0, i - 1)
    hi = min(len(t), i + 3)
    if hi - lo < 4:  # stencil clipped at the boundary: linear fallback
        f = (c0 - sig[i]) / (sig[i + 1] - sig[i])
        return t[i] + f * (t[i + 1] - t[i]), y[i] + f * (y[i + 1] - y[i])
    tau = t[lo:hi] - t[i]
    coef = np.polyfit(tau, sig[lo:hi] - c0, 3)
    span = t[i + 1] - t[i]
    root = None
    for r in np.roots(coef):
        if abs(r.imag) < 1e-12 * span and -1e-12 <= r.real <= span * (1 + 1e-12):
            root = float(r.real)
            break
    if root is None:
        f = (c0 - sig[i]) / (sig[i + 1] - sig[i])
        root = f * span
    ycoef = np.polyfit(tau, y[lo:hi], 3)  # one fit per state column
    return t[i] + root, np.polyval(ycoef, root)


def lyapunov_exponent(state0, params: ModelParams, t_total: float = 200.0,
                      renorm_dt: float = 1.0, rtol: float = 1e-9) -> float:
    """Largest Lyapunov exponent by tangent-space propagation.

    A single tangent vector is carried along the flow and renormalized every
    renorm_dt (Gram-Schmidt is trivial for one vector); the exponent is the
    averaged log stretching rate.
    """
    x0 = (state0.as_array() if isinstance(state0, MeanFieldState)
          else np.asarray(state0, dtype=float))
    rng = np.random.default_rng(12345)
    v = rng.normal(size=8)
    v /= np.linalg.norm(v)

    args = (params.rabi, params.detuning, params.level_splitting,
            params.collective_strength, params.local_decay)

    def aug_rhs(t, z):
        x, dv = z[:8], z[8:]
        return np.concatenate([_rhs(t, x, *args), jacobian(x, params) @ dv])

    z = np.concatenate([x0, v])
    log_sum = 0.0
    steps = int(round(t_total / renorm_dt))
    for _ in range(steps):
        sol = solve_ivp(aug_rhs, (0.0, renorm_dt), z, method="RK45",
                        rtol=rtol, atol=rtol * 1e-2)
        if not sol.success:
            raise MeanFieldError(f"lyapunov integration failed: {sol.message}")
        z = sol.y[:, -1]
        norm = np.linalg.norm(z[8:])
        log_sum += math.log(norm)
        z[8:] /= norm
    return log_sum / (steps * renorm_dt)


# ---------------------------------------------------------------------------
# phase classification

@dataclass(frozen=True)
class Protocol:
    """Knobs of the classification procedure."""
    n_probes: int = 16
    transient: float | None = None      # default 50/gamma
    window_periods: int = 24
    window_min: float = 40.0
    lyapunov_time: float = 200.0
    rtol: float = 1e-9


@dataclass
class PhaseReport:
    label: str                      # SS | BS1 | BS2 | BTC | CHAOS
    uncertain: bool = False
    omega: float = math.nan
    amplitude: float = math.nan
    lyapunov: float = math.nan
    notes: str = ""


def _probe_states(k: int) -> list[np.ndarray]:
    """Deterministic grid of k physical initial conditions."""
    probes = [np.zeros(8)]
    i = 1
    while len(probes) < k:
        n = _vdc(i, 2)
        sz = n * (2 * _vdc(i, 3) - 1)
        d = n * (2 * _vdc(i, 5) - 1)
        x = np.zeros(8)
        x[0], x[1], x[7] = n, sz, d
        probes.append(x)
        i += 1
    return probes[:k]


def classify_phase(params: ModelParams, protocol: Protocol | None = None
                   ) -> PhaseReport:
    """Combine fixed-point stability with trajectory diagnostics.

    Each basin probe is integrated past the transient and its asymptotic set
    is identified as a fixed point, a limit cycle, or aperiodic motion; the
    label follows from the collection of distinct attractors found.
    """
    proto = protocol or Protocol()
    gamma = params.local_decay
    transient = (DEFAULT_TRANSIENT_OVER_GAMMA / gamma
                 if proto.transient is None else proto.transient)

    fps = find_fixed_points(params)
    stable_fps = [r for r in fps if r.stability == "stable"]

    attractors = []   # ("fp", location) or ("cycle", (omega, amp, mean))
    chaotic = []
    uncertain = False
    omega = amp = math.nan
    lyap = math.nan

    for x0 in _probe_states(proto.n_probes):
        tail = integrate(x0, params, transient, rtol=proto.rtol,
                         t_samples=[transient])
        x1 = tail.y[-1]
        # quick test: already parked on a known stable fixed point
        if any(np.linalg.norm(r.state.as_array() - x1) < 1e-6
               for r in stable_fps):
            _add_attractor(attractors, ("fp", x1))
            continue
        # observation window
        t_est = max(proto.window_min, proto.window_periods * 2.0)
        win = integrate(x1, params, t_est, rtol=proto.rtol,
                        t_samples=np.arange(0.0, t_est, 0.01))
        sig = win.column("s_z")
        try:
            cyc = detect_limit_cycle(win)
        except MeanFieldError:
            cyc = CycleReport(is_cycle=False)
        if cyc.is_cycle:
            _add_attractor(attractors, ("cycle",
                                        (cyc.frequency, cyc.amplitude,
                                         sig.mean())))
            omega, amp = cyc.frequency, cyc.amplitude
            continue
        # fixed-point approach, possibly slower than the transient time:
        # Newton from the window end plus strict contraction across it
        star = _newton(win.y[-1], params)
        if star is not None:
            dist = np.linalg.norm(win.y - star, axis=1)
            lam = np.linalg.eigvals(jacobian(star, params))
            if np.all(lam.real < 1e-9) and (
                    dist[-1] < 1e-6
                    or (dist[-1] < 0.8 * dist[0] and dist[-1] < 1e-2)):
                _add_attractor(attractors, ("fp", star))
                continue
        # aperiodic: measure the Lyapunov exponent once
        if math.isnan(lyap):
            lyap = lyapunov_exponent(x1, params, t_total=proto.lyapunov_time,
                                     rtol=proto.rtol)
        if lyap > LYAPUNOV_CHAOS_THRESHOLD:
            chaotic.append(x1)
        else:
            # slow transient or marginal case
            uncertain = True

    kinds = {a[0] for a in attractors}
    n_fp = sum(1 for a in attractors if a[0] == "fp")
    n_cyc = sum(1 for a in attractors if a[0] == "cycle")
    if chaotic:
        label = "CHAOS"
        if attractors:
            uncertain = True
    elif kinds == {"fp"}:
        label = "SS" if n_fp == 1 else "BS1"
    elif kinds == {"cycle"}:
        label = "BTC"
        if n_cyc > 1:
            uncertain = True
    elif kinds == {"fp", "cycle"}:
        label = "BS2"
    else:
        label = "SS"
        uncertain = True
    return PhaseReport(label=label, uncertain=uncertain, omega=omega,
                       amplitude=amp, lyapunov=lyap,
                       notes=f"fps={n_fp} cycles={n_cyc} chaotic={len(chaotic)}")


def _add_attractor(attractors: list, item):
    kind, data = item
    for k, d in attractors:
        if k != kind:
            continue
        if kind == "fp" and np.linalg.norm(np.asarray(d) - np.asarray(data)) < 1e-4:
            return
        if kind == "cycle":
            w0, a0, m0 = d
            w1, a1, m1 = data
            if abs(w0 - w1) < 1e-2 * abs(w0) and abs(a0 - a1) < 2e-2 \
                    and abs(m0 - m1) < 2e-2:
                return
    attractors.append(item)


# ---------------------------------------------------------------------------
# phase-diagram scans

def _scan_point(args):
    (p1_name, v1, p2_name, v2, params, proto) = args
    p = params.with_(**{p1_name: v1, p2_name: v2})
    try:
        rep = classify_phase(p, proto)
    except MeanFieldError as exc:
        rep = PhaseReport(label="SS", uncertain=True, notes=f"error: {exc}")
    return (v1, v2, rep)


def scan_phase_diagram(params: ModelParams, param1: str, values1,
                       param2: str, values2, protocol: Protocol | None = None,
                       jobs: int = 1):
    """Classify every point of a rectangular grid; returns row-major list of
    (v1, v2, PhaseReport) matching the CSV layout."""
    for name in (param1, param2):
        if name not in ModelParams.__dataclass_fields__:
            raise MeanFieldError(f"unknown scan parameter {name!r}")
    tasks = [(param1, float(v1), param2, float(v2), params, protocol)
             for v1 in values1 for v2 in values2]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_scan_point, tasks, chunksize=1))
    else:
        results = [_scan_point(t) for t in tasks]
    return results


def scan_to_csv(results, param1: str, param2: str, path):
    with open(path, "w") as fh:
        fh.write("param1,param2,label,omega,amplitude,lyapunov\n")
        for v1, v2, rep in results:
            label = rep.label + ("?" if rep.uncertain else "")
            fh.write(f"{v1:.10g},{v2:.10g},{label},{rep.omega:.10g},"
                     f"{rep.amplitude:.10g},{rep.lyapunov:.10g}\n")


def series_to_csv(series: TimeSeries, path):
    with open(path, "w") as fh:
        fh.write("t," + ",".join(STATE_FIELDS) + "\n")
        for t, row in zip(series.t, series.y):
            fh.write(f"{t:.10g}," + ",".join(f"{v:.10g}" for v in row) + "\n")
