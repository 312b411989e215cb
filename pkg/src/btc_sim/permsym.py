"""Exact treatment of the all-to-all model in the permutation-symmetric
sector.

A permutation-invariant operator is stored as one coefficient per symmetry
class.  A class is the 9-tuple counting how many sites occupy each local
bra-ket slot, in the fixed slot order

    (n00, n0+, n0-, n++, n+-, n--, n+0, n-0, n-+)

and the coefficient is the common value of all product-basis matrix elements
in that class.  The collective Liouvillian and collective operators then act
by moving one site between slots with integer multiplicities.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import solve_ivp
from scipy.optimize import curve_fit, nnls

from .model import ModelParams, ModelError, local_hamiltonian

# slot index of the local bra-ket pair (row, col), levels ordered (0, +, -)
SLOT = {(0, 0): 0, (0, 1): 1, (0, 2): 2, (1, 1): 3, (1, 2): 4,
        (2, 2): 5, (1, 0): 6, (2, 0): 7, (2, 1): 8}
PAIR = {v: k for k, v in SLOT.items()}

# above this dimension the LU fill-in of shift-invert becomes the
# bottleneck and everything routes through the exponential map instead
KRYLOV_DIMENSION_SWITCH = 10_000
COMMENSURATE_TOL = 0.05
EXP_MAP_HORIZON = 0.35


class PermSymError(RuntimeError):
    pass


@dataclass(frozen=True)
class SymBasis:
    """Ordered enumeration of the symmetry classes for N sites."""

    size: int
    table: np.ndarray       # (D, 9) int32, lexicographic order
    keys: np.ndarray        # (D,) int64 packed keys, strictly increasing
    _place: np.ndarray      # (9,) int64 positional values of the packing

    @property
    def dim(self) -> int:
        return len(self.keys)

    def index_of(self, cls) -> int:
        cls = np.asarray(cls, dtype=np.int64)
        key = int(cls @ self._place)
        i = int(np.searchsorted(self.keys, key))
        if i >= self.dim or self.keys[i] != key:
            raise PermSymError(f"not a class of N={self.size}: {tuple(cls)}")
        return i

    def lookup(self, keys: np.ndarray) -> np.ndarray:
        return np.searchsorted(self.keys, keys)


def enumerate_basis(size: int) -> SymBasis:
    """All 9-part compositions of N in lexicographic order."""
    if size < 1:
        raise PermSymError("need at least one site")
    combos = np.fromiter(
        itertools.chain.from_iterable(
            itertools.combinations(range(size + 8), 8)),
        dtype=np.int32).reshape(-1, 8)
    table = np.empty((len(combos), 9), dtype=np.int32)
    table[:, 0] = combos[:, 0]
    table[:, 1:8] = np.diff(combos, axis=1) - 1
    table[:, 8] = size + 7 - combos[:, 7]
    expected = math.comb(size + 8, 8)
    if len(table) != expected:
        raise PermSymError("basis enumeration miscounted")
    place = (size + 1) ** np.arange(8, -1, -1, dtype=np.int64)
    keys = table.astype(np.int64) @ place
    return SymBasis(size=size, table=table, keys=keys, _place=place)


# ---------------------------------------------------------------------------
# collective operator primitives

def _one_slot_move(basis: SymBasis, src: int, dst: int, rows, cols, vals):
    """Accumulate the move of one site from slot src to slot dst: the row
    class reads the column class obtained by src -> dst with multiplicity
    n_src(row)."""
    count = basis.table[:, src]
    mask = count > 0
    if src == dst:
        idx = np.nonzero(mask)[0]
        rows.append(idx)
        cols.append(idx)
        vals.append(count[mask].astype(np.float64))
        return
    keys = basis.keys[mask] - basis._place[src] + basis._place[dst]
    rows.append(np.nonzero(mask)[0])
    cols.append(basis.lookup(keys))
    vals.append(count[mask].astype(np.float64))


def collective_left(basis: SymBasis, u: int, v: int) -> sp.csr_matrix:
    """Matrix of rho -> (sum_j |u><v|_j) rho on class coefficients."""
    rows, cols, vals = [], [], []
    for d in range(3):
        _one_slot_move(basis, SLOT[(u, d)], SLOT[(v, d)], rows, cols, vals)
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(basis.dim, basis.dim))


def collective_right(basis: SymBasis, u: int, v: int) -> sp.csr_matrix:
    """Matrix of rho -> rho (sum_j |u><v|_j) on class coefficients."""
    rows, cols, vals = [], [], []
    for c in range(3):
        _one_slot_move(basis, SLOT[(c, v)], SLOT[(c, u)], rows, cols, vals)
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(basis.dim, basis.dim))


def trace_weights(basis: SymBasis) -> np.ndarray:
    """Row vector tau with Tr rho = tau . c (multinomial count of each
    diagonal class)."""
    t = basis.table
    diag = ((t[:, 1] == 0) & (t[:, 2] == 0) & (t[:, 4] == 0)
            & (t[:, 6] == 0) & (t[:, 7] == 0) & (t[:, 8] == 0))
    w = np.zeros(basis.dim)
    n = basis.size
    for i in np.nonzero(diag)[0]:
        a, b, c = int(t[i, 0]), int(t[i, 3]), int(t[i, 5])
        w[i] = float(math.comb(n, a) * math.comb(n - a, b))
    return w


def _excitation_counts(basis: SymBasis):
    t = basis.table
    m_bra = basis.size - (t[:, 0] + t[:, 1] + t[:, 2])
    m_ket = t[:, 1] + t[:, 2] + t[:, 3] + t[:, 4] + t[:, 5] + t[:, 8]
    return m_bra.astype(np.int64), m_ket.astype(np.int64)


def sz_class_weights(basis: SymBasis) -> np.ndarray:
    """Diagonal action of left-multiplication by S_z = sum_j s_j^z."""
    t = basis.table
    return (t[:, 3] + t[:, 4] + t[:, 6] - t[:, 5] - t[:, 7] - t[:, 8]
            ).astype(np.float64)


@dataclass
class SymLiouvillian:
    params: ModelParams
    basis: SymBasis
    matrix: sp.csr_matrix
    trace: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.basis.dim


def build_sym_liouvillian(params: ModelParams) -> SymLiouvillian:
    """Assemble the collective Liouvillian on symmetry classes.

    Valid only for the all-to-all profile, where the interaction is a
    function of the total excitation numbers of bra and ket sides.
    """
    if params.profile != "AllToAll":
        raise PermSymError(
            "permutation symmetry requires the AllToAll profile, "
            f"got {params.profile}")
    basis = enumerate_basis(params.size)
    n, gamma, chi = params.size, params.local_decay, params.collective_strength
    h = local_hamiltonian(params)

    mat = sp.csr_matrix((basis.dim, basis.dim), dtype=complex)
    for u in range(3):
        for v in range(3):
            if h[u, v] == 0:
                continue
            mat = mat + (-1j) * h[u, v] * collective_left(basis, u, v)
            mat = mat + 1j * h[u, v] * collective_right(basis, u, v)

    # recycling: gamma sum_j |0><s|_j rho |s><0|_j moves one (0,0) site
    # to (s,s); multiplicity n00 of the ROW class
    rows, cols, vals = [], [], []
    for s in (1, 2):
        _one_slot_move(basis, SLOT[(0, 0)], SLOT[(s, s)], rows, cols, vals)
    mat = mat + gamma * sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(basis.dim, basis.dim))

    m_bra, m_ket = _excitation_counts(basis)
    diag = -0.5 * gamma * (m_bra + m_ket).astype(np.float64) + 0j
    if n >= 2:
        # all-to-all interaction is a function of total excitation number:
        # -V sum_{i<j} n_i n_j has product-basis eigenvalue -V m(m-1)/2
        v_pair = chi / (n - 1)
        eps_bra = -v_pair * m_bra * (m_bra - 1) / 2.0
        eps_ket = -v_pair * m_ket * (m_ket - 1) / 2.0
        diag = diag - 1j * (eps_bra - eps_ket)
    mat = mat + sp.diags(diag, format="csr")

    return SymLiouvillian(params=params, basis=basis, matrix=mat.tocsr(),
                          trace=trace_weights(basis))


# ---------------------------------------------------------------------------
# observables on class coefficient vectors

def expect_sz(L: SymLiouvillian, c: np.ndarray) -> float:
    w = sz_class_weights(L.basis)
    val = (L.trace * w) @ c
    return float(np.real(val))


def expect_sz2(L: SymLiouvillian, c: np.ndarray) -> float:
    w = sz_class_weights(L.basis)
    val = (L.trace * w * w) @ c
    return float(np.real(val))


def fluctuations(L: SymLiouvillian, c: np.ndarray) -> float:
    """F^2 = (<S_z^2> - <S_z>^2) / N for a symmetric state."""
    sz = (L.trace * sz_class_weights(L.basis)) @ c
    sz2 = (L.trace * sz_class_weights(L.basis) ** 2) @ c
    if abs(sz.imag) > 1e-10 or abs(sz2.imag) > 1e-10:
        raise PermSymError("collective moments came out complex")
    return float((sz2.real - sz.real ** 2) / L.basis.size)


def populations(basis: SymBasis, c: np.ndarray) -> tuple[float, float, float]:
    """Level populations from the binomial-weighted diagonal sums."""
    n = basis.size
    p0 = pp = pm = 0.0
    t = basis.table
    diag = ((t[:, 1] == 0) & (t[:, 2] == 0) & (t[:, 4] == 0)
            & (t[:, 6] == 0) & (t[:, 7] == 0) & (t[:, 8] == 0))
    for i in np.nonzero(diag)[0]:
        n00, npp, nmm = int(t[i, 0]), int(t[i, 3]), int(t[i, 5])
        val = float(np.real(c[i]))
        if n00 >= 1:
            p0 += math.comb(n - 1, n00 - 1) * math.comb(n - n00, npp) * val
        if npp >= 1:
            pp += math.comb(n - 1, npp - 1) * math.comb(n - npp, n00) * val
        if nmm >= 1:
            pm += math.comb(n - 1, nmm - 1) * math.comb(n - nmm, npp) * val
    return p0, pp, pm


def pair_expectation(L: SymLiouvillian, c: np.ndarray,
                     first: tuple[int, int], second: tuple[int, int]) -> complex:
    """<sigma^{cd}_i sigma^{ef}_j> for one ordered pair of distinct sites."""
    n = L.basis.size
    if n < 2:
        raise PermSymError("pair expectation needs at least two sites")
    (a, b), (e, f) = first, second
    big = collective_left(L.basis, a, b) @ (collective_left(L.basis, e, f) @ c)
    total = L.trace @ big
    if b == e:  # same-site contraction sigma^{ab} sigma^{bf} = sigma^{af}
        total = total - L.trace @ (collective_left(L.basis, a, f) @ c)
    return complex(total) / (n * (n - 1))


def reduced_density(L: SymLiouvillian, c: np.ndarray, order: int = 1
                    ) -> np.ndarray:
    """Single-site (3x3) or two-site (9x9) reduced density matrix."""
    n = L.basis.size
    if order == 1:
        rho = np.empty((3, 3), dtype=complex)
        for r in range(3):
            for s in range(3):
                rho[r, s] = (L.trace @ (collective_left(L.basis, s, r) @ c)) / n
        return rho
    if order == 2:
        rho = np.empty((9, 9), dtype=complex)
        for r1 in range(3):
            for r2 in range(3):
                for s1 in range(3):
                    for s2 in range(3):
                        rho[3 * r1 + r2, 3 * s1 + s2] = pair_expectation(
                            L, c, (s1, r1), (s2, r2))
        return rho
    raise PermSymError("order must be 1 or 2")


# ---------------------------------------------------------------------------
# steady state and spectrum

def all_ground_state(basis: SymBasis) -> np.ndarray:
    """Coefficient vector of |0...0><0...0|."""
    c = np.zeros(basis.dim, dtype=complex)
    cls = np.zeros(9, dtype=np.int64)
    cls[SLOT[(0, 0)]] = basis.size
    c[basis.index_of(cls)] = 1.0
    return c


def steady_state(L: SymLiouvillian, degeneracy_tol: float = 1e-10
                 ) -> np.ndarray:
    """Null vector of L normalized to unit trace.

    Dense eigendecomposition for small dimensions, shift-invert Arnoldi at
    a small real target in the mid range, and Arnoldi on the exponential
    map exp(L t) above the LU-fill-in threshold.  The second-nearest
    eigenvalue doubles as a uniqueness check (at reduced resolution on the
    exponential-map path).
    """
    if L.dim <= 500:
        mat = L.matrix.toarray()
        w, vecs = np.linalg.eig(mat)
        order = np.argsort(np.abs(w))
        if abs(w[order[1]]) < degeneracy_tol:
            raise PermSymError("steady state not unique")
        c = vecs[:, order[0]]
    elif L.dim <= KRYLOV_DIMENSION_SWITCH:
        try:
            w, vecs = spla.eigs(L.matrix.tocsc(), k=2, sigma=1e-6, which="LM")
        except spla.ArpackNoConvergence as exc:
            raise PermSymError(f"steady-state solve did not converge: {exc}")
        order = np.argsort(np.abs(w))
        if abs(w[order[1]]) < degeneracy_tol:
            raise PermSymError("steady state not unique")
        c = vecs[:, order[0]]
    else:
        t_relax = 0.5 / L.params.local_decay
        mu, vecs = _exp_map_eigs(L, k=2, t0=t_relax)
        order = np.argsort(-np.abs(mu))
        lam2 = math.log(max(abs(mu[order[1]]), 1e-300)) / t_relax
        if lam2 > -max(degeneracy_tol, 1e-8):
            raise PermSymError("steady state not unique")
        c = vecs[:, order[0]]
    c = c / (L.trace @ c)
    residual = np.abs(L.matrix @ c).max()
    if residual > 1e-9:
        raise PermSymError(f"steady-state residual too large: {residual:.2e}")
    return c


@dataclass
class SpectrumReport:
    eigenvalues: list          # [(lambda, "commensurate"|"incommensurate")]
    gap: float
    omega: float

    def branch_gap(self, branch: str) -> float:
        vals = [lam for lam, tag in self.eigenvalues
                if tag == branch and abs(lam) > 1e-9]
        if not vals:
            return math.nan
        return float(min(abs(lam.real) for lam in vals))


def _tag_branch(lam: complex, omega: float) -> str:
    """Commensurate = the steady state or a mode oscillating at a positive
    integer multiple of the reference frequency; purely relaxational
    (Im = 0) nonzero modes do not join the closing branch."""
    if abs(lam) < 1e-9:
        return "commensurate"
    if not (omega > 0) or math.isnan(omega):
        return "commensurate" if abs(lam.imag) < 1e-6 else "incommensurate"
    j = round(abs(lam.imag) / omega)
    if j >= 1 and abs(abs(lam.imag) - j * omega) <= COMMENSURATE_TOL * omega:
        return "commensurate"
    return "incommensurate"


def _exp_map_eigs(L: SymLiouvillian, k: int, t0: float, ncv: int | None = None
                  ) -> tuple[np.ndarray, np.ndarray]:
    """Dominant eigenpairs of exp(L t0); slow Liouvillian modes become the
    largest-magnitude eigenvalues, with no sparse factorization."""
    a = (L.matrix * t0).tocsr()
    op = spla.LinearOperator((L.dim, L.dim),
                             matvec=lambda v: spla.expm_multiply(a, v),
                             dtype=complex)
    v0 = np.full(L.dim, 1.0 / math.sqrt(L.dim))
    try:
        return spla.eigs(op, k=k, which="LM", v0=v0, ncv=ncv)
    except spla.ArpackNoConvergence as exc:
        raise PermSymError(f"exponential-map eigensolver stalled: {exc}")


def low_spectrum(L: SymLiouvillian, k: int, target: complex = 1e-6 + 0j,
                 omega: float = math.nan, method: str = "auto",
                 t0: float = EXP_MAP_HORIZON) -> SpectrumReport:
    """k slow eigenvalues: nearest `target` for the dense and shift-invert
    paths; the k slowest overall for the exponential-map path (which has no
    target, so `target` is ignored there)."""
    if k < 1:
        raise PermSymError("need k >= 1 eigenvalues")
    if method == "auto":
        if L.dim <= 400 or k >= L.dim - 2:
            method = "dense"
        elif L.dim <= KRYLOV_DIMENSION_SWITCH:
            method = "shift-invert"
        else:
            method = "exp"
    if method == "dense":
        w = np.linalg.eigvals(L.matrix.toarray())
        w = w[np.argsort(np.abs(w - target))][:k]
    elif method == "shift-invert":
        try:
            w, _ = spla.eigs(L.matrix.tocsc(), k=k, sigma=target, which="LM")
        except spla.ArpackNoConvergence as exc:
            raise PermSymError(f"eigensolver did not converge: {exc}")
    elif method == "exp":
        mu, vecs = _exp_map_eigs(L, k, t0 / L.params.local_decay,
                                 ncv=max(3 * k + 8, 40))
        # Rayleigh quotients on L avoid any logarithm branch ambiguity
        w = np.empty(k, dtype=complex)
        for i in range(k):
            v = vecs[:, i]
            v = v / np.linalg.norm(v)
            lv = L.matrix @ v
            w[i] = np.vdot(v, lv)
            if np.linalg.norm(lv - w[i] * v) > 1e-6 * max(1.0, abs(w[i])):
                w[i] = np.nan
        w = w[~np.isnan(w)]
    else:
        raise PermSymError(f"unknown eigensolver method: {method}")
    w = w[np.argsort(np.abs(w.real))]
    eigs = [(complex(lam), _tag_branch(complex(lam), omega)) for lam in w]
    nonzero = [lam for lam in w if abs(lam) > 1e-9]
    gap = float(min(abs(lam.real) for lam in nonzero)) if nonzero else math.nan
    return SpectrumReport(eigenvalues=eigs, gap=gap, omega=omega)


def gather_spectrum(L: SymLiouvillian, k: int, omega: float,
                    targets=None) -> SpectrumReport:
    """Union of shift-invert sweeps at several targets along the branch
    structure (0, +-i omega, +-2i omega by default); one exponential-map
    solve above the factorization threshold since it is target-free."""
    if L.dim > KRYLOV_DIMENSION_SWITCH:
        return low_spectrum(L, k, omega=omega, method="exp")
    if targets is None:
        if omega > 0 and not math.isnan(omega):
            targets = [1e-6 + 0j, 1e-6 + 1j * omega, 1e-6 - 1j * omega,
                       1e-6 + 2j * omega, 1e-6 - 2j * omega]
        else:
            targets = [1e-6 + 0j]
    found: list[complex] = []
    for tgt in targets:
        rep = low_spectrum(L, k, tgt, omega)
        for lam, _ in rep.eigenvalues:
            if all(abs(lam - mu) > 1e-8 for mu in found):
                found.append(lam)
    found.sort(key=lambda lam: abs(lam.real))
    eigs = [(lam, _tag_branch(lam, omega)) for lam in found]
    nonzero = [lam for lam in found if abs(lam) > 1e-9]
    gap = float(min(abs(lam.real) for lam in nonzero)) if nonzero else math.nan
    return SpectrumReport(eigenvalues=eigs, gap=gap, omega=omega)


def meanfield_frequency(params: ModelParams) -> float:
    """Limit-cycle frequency of the mean-field flow at the same parameters
    (nan when the mean field is stationary)."""
    from . import meanfield as mf

    gamma = params.local_decay
    tail = mf.integrate(mf.ALL_IN_ZERO, params, 60.0 / gamma,
                        t_samples=[60.0 / gamma])
    win = 40.0 / gamma
    series = mf.integrate(tail.y[-1], params, win,
                          t_samples=np.arange(0.0, win, 0.005 / gamma))
    try:
        rep = mf.detect_limit_cycle(series)
    except mf.MeanFieldError:
        return math.nan
    return rep.frequency if rep.is_cycle else math.nan


def fit_gap_scaling(points, beta: float | None = None) -> dict:
    """Fit gap(N) = c + a N^(-beta) to (N, gap) pairs.

    With beta free (default) this needs at least four sizes and all three
    parameters come from bounded nonlinear least squares.  Short sequences
    cannot identify c and beta at once: a slow pure power law and a
    saturating curve fit four points about equally well.  Passing a fixed
    beta (for instance the exponent fitted on another branch of the same
    spectrum) reduces the problem to a nonnegative linear fit for c and a,
    which is the honest way to extract an asymptote from desk-size data.
    """
    pts = sorted(points)
    need = 4 if beta is None else 3
    if len(pts) < need:
        raise PermSymError(f"gap fit needs at least {need} sizes")
    n = np.array([p[0] for p in pts], dtype=float)
    g = np.array([p[1] for p in pts], dtype=float)

    def model(x, c, a, beta):
        return c + a * x ** (-beta)

    if beta is not None:
        if beta <= 0:
            raise PermSymError(f"beta must be positive, got {beta}")
        design = np.stack([np.ones_like(n), n ** (-beta)], axis=1)
        coef, _ = nnls(design, g)
        popt = (coef[0], coef[1], float(beta))
    else:
        try:
            popt, _ = curve_fit(model, n, g,
                                p0=[max(g.min() * 0.5, 0.0), g.max(), 0.6],
                                bounds=([0, 0, 0.01], [np.inf, np.inf, 5.0]),
                                maxfev=20000)
        except RuntimeError as exc:
            raise PermSymError(f"gap fit failed: {exc}")
    resid = float(np.sqrt(np.mean((model(n, *popt) - g) ** 2)))
    return {"c": float(popt[0]), "a": float(popt[1]),
            "beta": float(popt[2]), "residual": resid}


# ---------------------------------------------------------------------------
# dynamics and two-time correlation

def evolve(L: SymLiouvillian, c0: np.ndarray, times,
           rtol: float = 1e-9, atol: float = 1e-11) -> np.ndarray:
    """Evolve class coefficients; adaptive RK for small dimensions, Krylov
    exponential stepping above the dimension switch."""
    times = np.asarray(times, dtype=float)
    mat = L.matrix
    if times[-1] == times[0]:
        return np.tile(c0.astype(complex), (len(times), 1))
    if L.dim <= KRYLOV_DIMENSION_SWITCH:
        sol = solve_ivp(lambda _t, y: mat @ y, (times[0], times[-1]),
                        c0.astype(complex), t_eval=times, method="RK45",
                        rtol=rtol, atol=atol)
        if not sol.success:
            raise PermSymError(f"evolution failed: {sol.message}")
        return sol.y.T
    out = np.empty((len(times), L.dim), dtype=complex)
    y = c0.astype(complex)
    t_prev = times[0]
    out[0] = y
    for i, t in enumerate(times[1:], start=1):
        if t > t_prev:
            y = spla.expm_multiply(mat * (t - t_prev), y)
        out[i] = y
        t_prev = t
    return out


def two_time_correlation(L: SymLiouvillian, rho_ss: np.ndarray, times,
                         rtol: float = 1e-9) -> np.ndarray:
    """G(t) of the collective magnetization in the steady state via the
    regression theorem: apply S_z, evolve, trace against S_z."""
    w = sz_class_weights(L.basis)
    sz_mean = float(np.real((L.trace * w) @ rho_ss))
    seeded = w * rho_ss
    evolved = evolve(L, seeded, times, rtol=rtol)
    raw = evolved @ (L.trace * w)
    n = L.basis.size
    return (raw - sz_mean ** 2) / n ** 2


def fit_damped_cosine(times, values) -> dict:
    """Least-squares fit of A exp(-kappa t) cos(omega t + phi) to a real
    series.

    Returns amplitude, kappa, omega, phi and the root-mean-square misfit
    (same units as the amplitude).  The frequency seed comes from the
    spectrum peak, so the grid should be roughly uniform; four phase
    starts guard against the half-period local minimum.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    if len(t) < 16:
        raise PermSymError("need at least 16 samples for the cosine fit")

    def model(tt, a, kappa, omega, phi):
        return a * np.exp(-kappa * tt) * np.cos(omega * tt + phi)

    dt = float(np.median(np.diff(t)))
    spec = np.abs(np.fft.rfft(y - y.mean()))
    freqs = np.fft.rfftfreq(len(t), d=dt)
    w0 = 2 * math.pi * freqs[1 + int(np.argmax(spec[1:]))]
    a0 = float(np.abs(y).max())
    half = len(y) // 2
    r1 = np.sqrt(np.mean(y[:half] ** 2))
    r2 = np.sqrt(np.mean(y[half:] ** 2))
    span = t[-1] - t[0]
    k0 = 2 * math.log(r1 / r2) / span if r2 > 0 and r1 > r2 else 0.0
    best = None
    for phi0 in (0.0, 0.5 * math.pi, math.pi, 1.5 * math.pi):
        try:
            popt, _ = curve_fit(
                model, t, y, p0=[a0, max(k0, 0.0), max(w0, 1e-3), phi0],
                bounds=([0.0, 0.0, 0.0, -2 * math.pi],
                        [np.inf, np.inf, np.inf, 2 * math.pi]),
                maxfev=20000)
        except RuntimeError:
            continue
        resid = float(np.sqrt(np.mean((y - model(t, *popt)) ** 2)))
        if best is None or resid < best[1]:
            best = (popt, resid)
    if best is None:
        raise PermSymError("damped-cosine fit did not converge")
    (a, kappa, omega, phi), resid = best
    return {"amplitude": float(a), "kappa": float(kappa),
            "omega": float(omega), "phi": float(phi), "residual": resid}


def correlation_to_csv(times, g, path):
    with open(path, "w") as fh:
        fh.write("t,re_G,im_G\n")
        for t, val in zip(times, g):
            fh.write(f"{t:.10g},{val.real:.10g},{val.imag:.10g}\n")


def spectrum_to_csv(report: SpectrumReport, path):
    with open(path, "w") as fh:
        fh.write("re,im,branch\n")
        for lam, tag in report.eigenvalues:
            fh.write(f"{lam.real:.10g},{lam.imag:.10g},{tag}\n")


def export_coo(matrix: sp.spmatrix, path):
    coo = matrix.tocoo()
    with open(path, "w") as fh:
        fh.write("row,col,re,im\n")
        for r, c, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{r},{c},{v.real:.17g},{v.imag:.17g}\n")


# ---------------------------------------------------------------------------
# dense-oracle bridges (small N only)

def _digits(idx: int, size: int) -> tuple:
    out = []
    for _ in range(size):
        out.append(idx % 3)
        idx //= 3
    return tuple(reversed(out))


def class_of_pair(alpha: int, beta: int, size: int) -> np.ndarray:
    """Symmetry class of the product-basis matrix element |alpha><beta|."""
    cls = np.zeros(9, dtype=np.int64)
    for a, b in zip(_digits(alpha, size), _digits(beta, size)):
        cls[SLOT[(a, b)]] += 1
    return cls


def project_symmetric(rho: np.ndarray, basis: SymBasis) -> np.ndarray:
    """Class coefficients of a dense density matrix, averaging each orbit."""
    n = basis.size
    dim = 3 ** n
    if rho.shape != (dim, dim):
        raise PermSymError("dense matrix has wrong dimension")
    sums = np.zeros(basis.dim, dtype=complex)
    counts = np.zeros(basis.dim, dtype=np.int64)
    for a in range(dim):
        for b in range(dim):
            i = basis.index_of(class_of_pair(a, b, n))
            sums[i] += rho[a, b]
            counts[i] += 1
    return sums / counts


def embed_symmetric(c: np.ndarray, basis: SymBasis) -> np.ndarray:
    """Dense matrix whose element (alpha, beta) is the coefficient of its
    class (inverse of project_symmetric on symmetric states)."""
    n = basis.size
    dim = 3 ** n
    rho = np.empty((dim, dim), dtype=complex)
    for a in range(dim):
        for b in range(dim):
            rho[a, b] = c[basis.index_of(class_of_pair(a, b, n))]
    return rho
