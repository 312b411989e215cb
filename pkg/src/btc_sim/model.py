"""Model definition: parameters, local spin-1 algebra, interaction profiles,
and a dense brute-force Lindblad oracle.

The local Hilbert space is three-dimensional with ordered basis
(|0>, |+>, |->).  Every other module shares this ordering, the operator
conventions of :func:`build_local_operators`, and the Kac-normalized
interaction tables produced by :func:`resolve_interactions`.

The dense routines at the bottom build the full 3^N-dimensional Hamiltonian
and Lindblad generator.  They scale exponentially and exist purely as an
oracle against which the structured backends (permutation-symmetric,
cumulant, trajectory) are validated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

SQRT2 = math.sqrt(2.0)

# basis indices
B0, BP, BM = 0, 1, 2

PROFILES = ("AllToAll", "PowerLaw", "Exponential")
BOUNDARIES = ("Ring", "OpenChain")

DENSE_CAP_DEFAULT = 8


class ModelError(ValueError):
    """Invalid parameters or inputs to a model operation."""


@dataclass(frozen=True)
class ModelParams:
    """All physical couplings in absolute rate units (gamma=1 is only a
    convention of the defaults, not an assumption of the code)."""

    size: int
    rabi: float = 3.0
    detuning: float = -7.0
    level_splitting: float = 4.0
    local_decay: float = 1.0
    collective_strength: float = 16.0
    powerlaw_exponent: float = 0.0
    profile: str = "AllToAll"
    boundary: str = "Ring"

    def __post_init__(self):
        if self.size < 1 or int(self.size) != self.size:
            raise ModelError(f"size must be a positive integer, got {self.size}")
        if not self.local_decay >= 0:
            # gamma = 0 is allowed: the closed-system limit is a legitimate
            # check point for the unitary parts of every backend
            raise ModelError(f"local_decay must be >= 0, got {self.local_decay}")
        if self.powerlaw_exponent < 0:
            raise ModelError(
                f"powerlaw_exponent must be >= 0, got {self.powerlaw_exponent}")
        if self.profile not in PROFILES:
            raise ModelError(
                f"profile must be one of {PROFILES}, got {self.profile!r}")
        if self.boundary not in BOUNDARIES:
            raise ModelError(
                f"boundary must be one of {BOUNDARIES}, got {self.boundary!r}")
        if self.profile == "Exponential" and not self.powerlaw_exponent > 1:
            raise ModelError(
                "Exponential profile needs decay base alpha > 1, got "
                f"{self.powerlaw_exponent}")

    def with_(self, **kw) -> "ModelParams":
        return replace(self, **kw)


_FIELD_PARSERS = {
    "size": int,
    "rabi": float,
    "detuning": float,
    "level_splitting": float,
    "local_decay": float,
    "collective_strength": float,
    "powerlaw_exponent": float,
    "profile": str,
    "boundary": str,
}

_ENUM_ALIASES = {
    "alltoall": "AllToAll", "all_to_all": "AllToAll",
    "powerlaw": "PowerLaw", "power_law": "PowerLaw",
    "exponential": "Exponential",
    "ring": "Ring",
    "openchain": "OpenChain", "open_chain": "OpenChain",
}


def params_from_dict(items: dict) -> ModelParams:
    """Build ModelParams from a flat key/value mapping; unknown keys error."""
    kw = {}
    for key, raw in items.items():
        if key not in _FIELD_PARSERS:
            raise ModelError(f"unknown parameter key {key!r}")
        val = _FIELD_PARSERS[key](raw)
        if key in ("profile", "boundary"):
            val = _ENUM_ALIASES.get(str(val).lower(), val)
        kw[key] = val
    if "size" not in kw:
        raise ModelError("missing required parameter key 'size'")
    return ModelParams(**kw)


def load_params(path) -> ModelParams:
    """Read a flat ``key = value`` parameter file ('#' starts a comment)."""
    items = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ModelError(f"{path}:{lineno}: expected 'key = value'")
            key, val = (s.strip() for s in line.split("=", 1))
            if key in items:
                raise ModelError(f"{path}:{lineno}: duplicate key {key!r}")
            items[key] = val
    return params_from_dict(items)


# ---------------------------------------------------------------------------
# local operator algebra

def _sigma(c: int, d: int) -> np.ndarray:
    m = np.zeros((3, 3), dtype=complex)
    m[c, d] = 1.0
    return m


@dataclass(frozen=True)
class LocalOperatorSet:
    """The nine Hermitian single-site operators in basis (|0>, |+>, |->).

    sy and smy carry the factor i that makes the raw bra-ket combinations
    Hermitian; the sign convention is the one under which the mean-field
    equations of motion come out with the signs used in :mod:`.meanfield`
    (checked against this dense oracle in the test suite).
    """

    sx: np.ndarray = field(default_factory=lambda: (
        _sigma(B0, BP) + _sigma(BP, B0) + _sigma(B0, BM) + _sigma(BM, B0)) / SQRT2)
    sy: np.ndarray = field(default_factory=lambda: 1j * (
        _sigma(B0, BP) - _sigma(BP, B0) - _sigma(B0, BM) + _sigma(BM, B0)) / SQRT2)
    smx: np.ndarray = field(default_factory=lambda: (
        _sigma(B0, BP) + _sigma(BP, B0) - _sigma(B0, BM) - _sigma(BM, B0)) / SQRT2)
    smy: np.ndarray = field(default_factory=lambda: 1j * (
        _sigma(B0, BP) - _sigma(BP, B0) + _sigma(B0, BM) - _sigma(BM, B0)) / SQRT2)
    sz: np.ndarray = field(default_factory=lambda: _sigma(BP, BP) - _sigma(BM, BM))
    n: np.ndarray = field(default_factory=lambda: _sigma(BP, BP) + _sigma(BM, BM))
    q: np.ndarray = field(default_factory=lambda: 1j * (
        _sigma(BP, BM) - _sigma(BM, BP)))
    d: np.ndarray = field(default_factory=lambda: _sigma(BP, BM) + _sigma(BM, BP))
    identity: np.ndarray = field(default_factory=lambda: np.eye(3, dtype=complex))

    def as_dict(self) -> dict:
        return {"sx": self.sx, "sy": self.sy, "smx": self.smx, "smy": self.smy,
                "sz": self.sz, "n": self.n, "q": self.q, "d": self.d,
                "identity": self.identity}


def build_local_operators() -> LocalOperatorSet:
    return LocalOperatorSet()


def local_hamiltonian(params: ModelParams) -> np.ndarray:
    """Single-site part (Omega/sqrt2) sx - Delta n - E sz as a 3x3 matrix."""
    ops = build_local_operators()
    return (params.rabi / SQRT2 * ops.sx
            - params.detuning * ops.n
            - params.level_splitting * ops.sz)


def jump_operators(gamma: float) -> list[np.ndarray]:
    """The two local decay channels sqrt(gamma)|0><sigma|, sigma = +, -."""
    return [math.sqrt(gamma) * _sigma(B0, BP), math.sqrt(gamma) * _sigma(B0, BM)]


# ---------------------------------------------------------------------------
# interaction profiles

@dataclass(frozen=True)
class InteractionProfile:
    """Resolved pair couplings.

    offsets holds V as a function of site offset; on a ring, offsets[r-1]
    is the coupling between i and i+r (mod N) for r = 1..N-1, symmetrized so
    that offsets[r-1] == offsets[N-r-1].  On an open chain, offsets[r-1] is
    the coupling at chain distance r.  kac_prefactor is the constant C of the
    profile's generator before symmetrization.
    """

    offsets: np.ndarray
    kac_prefactor: float
    profile: str
    boundary: str

    @property
    def total(self) -> float:
        return float(self.offsets.sum())

    def pair_table(self, size: int) -> np.ndarray:
        """Dense (N, N) matrix V_ij with zero diagonal."""
        v = np.zeros((size, size))
        for i in range(size):
            for j in range(size):
                if i == j:
                    continue
                if self.boundary == "Ring":
                    v[i, j] = self.offsets[(j - i) % size - 1]
                else:
                    v[i, j] = self.offsets[abs(j - i) - 1]
        return v


def resolve_interactions(params: ModelParams) -> InteractionProfile:
    """Kac-normalized couplings for all three profiles.

    The generator is V(r) = C/r^alpha (power law) or C/alpha^r (exponential)
    with C fixed by sum_{r=1}^{N-1} V(r) = chi.  On a ring the table is
    symmetrized over r <-> N-r, which keeps V_ij well defined for unordered
    pairs while preserving sum_{j != i} V_ij = chi exactly for every site.
    """
    n = params.size
    if n < 2:
        raise ModelError("no pairs: interactions need size >= 2")
    chi = params.collective_strength
    r = np.arange(1, n, dtype=float)
    if params.profile == "AllToAll":
        c = chi / (n - 1)
        raw = np.full(n - 1, c)
    elif params.profile == "PowerLaw":
        weights = r ** (-params.powerlaw_exponent)
        c = chi / weights.sum()
        raw = c * weights
    else:  # Exponential; alpha > 1 enforced by ModelParams
        weights = params.powerlaw_exponent ** (-r)
        c = chi / weights.sum()
        raw = c * weights
    if params.boundary == "Ring":
        offsets = 0.5 * (raw + raw[::-1])
    else:
        offsets = raw
    return InteractionProfile(offsets=offsets, kac_prefactor=float(c),
                              profile=params.profile, boundary=params.boundary)


# ---------------------------------------------------------------------------
# dense oracle

def _check_cap(n: int, cap: int):
    if n > cap:
        raise ModelError(f"size {n} exceeds dense-oracle cap {cap}")


def _site_operator(op: np.ndarray, site: int, size: int) -> np.ndarray:
    m = np.eye(1, dtype=complex)
    for j in range(size):
        m = np.kron(m, op if j == site else np.eye(3, dtype=complex))
    return m


def build_hamiltonian_dense(params: ModelParams, cap: int = DENSE_CAP_DEFAULT
                            ) -> np.ndarray:
    """Full 3^N x 3^N Hamiltonian (oracle only)."""
    n = params.size
    _check_cap(n, cap)
    h1 = local_hamiltonian(params)
    dim = 3 ** n
    h = np.zeros((dim, dim), dtype=complex)
    for j in range(n):
        h += _site_operator(h1, j, n)
    if n >= 2:
        ops = build_local_operators()
        v = resolve_interactions(params).pair_table(n)
        for i in range(n):
            n_i = _site_operator(ops.n, i, n)
            for j in range(i + 1, n):
                h -= v[i, j] * (n_i @ _site_operator(ops.n, j, n))
    return h


def _dense_jump_ops(params: ModelParams) -> list[np.ndarray]:
    n = params.size
    return [_site_operator(L, j, n)
            for j in range(n) for L in jump_operators(params.local_decay)]


def lindblad_rhs_dense(rho: np.ndarray, params: ModelParams,
                       cap: int = DENSE_CAP_DEFAULT,
                       hamiltonian: np.ndarray | None = None,
                       jumps: list[np.ndarray] | None = None) -> np.ndarray:
    """L(rho) for the full master equation (oracle only).

    hamiltonian/jumps may be passed in to amortize the kron products across
    repeated calls with the same params.
    """
    _check_cap(params.size, cap)
    dim = 3 ** params.size
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (dim, dim):
        raise ModelError(
            f"density matrix shape {rho.shape} does not match dimension {dim}")
    h = build_hamiltonian_dense(params, cap) if hamiltonian is None else hamiltonian
    ls = _dense_jump_ops(params) if jumps is None else jumps
    out = -1j * (h @ rho - rho @ h)
    for L in ls:
        Ld = L.conj().T
        LdL = Ld @ L
        out += L @ rho @ Ld - 0.5 * (LdL @ rho + rho @ LdL)
    return out


def evolve_dense(params: ModelParams, rho0: np.ndarray, times,
                 cap: int = DENSE_CAP_DEFAULT, rtol: float = 1e-10,
                 atol: float = 1e-12) -> np.ndarray:
    """Integrate the dense master equation; returns rho at the sample times."""
    from scipy.integrate import solve_ivp

    _check_cap(params.size, cap)
    dim = 3 ** params.size
    h = build_hamiltonian_dense(params, cap)
    ls = _dense_jump_ops(params)

    def rhs(_t, y):
        rho = y.reshape(dim, dim)
        return lindblad_rhs_dense(rho, params, cap, h, ls).ravel()

    times = np.asarray(times, dtype=float)
    sol = solve_ivp(rhs, (times[0], times[-1]), np.asarray(rho0, complex).ravel(),
                    t_eval=times, rtol=rtol, atol=atol, method="DOP853")
    if not sol.success:
        raise ModelError(f"dense evolution failed: {sol.message}")
    return sol.y.T.reshape(len(times), dim, dim)


def build_superoperator_dense(params: ModelParams, cap: int = 4) -> np.ndarray:
    """Column-stacked superoperator of the dense Lindbladian (N <= 4)."""
    _check_cap(params.size, cap)
    dim = 3 ** params.size
    h = build_hamiltonian_dense(params, max(cap, DENSE_CAP_DEFAULT))
    eye = np.eye(dim, dtype=complex)
    # vec(A rho B) = (B^T kron A) vec(rho) with column stacking; we use row
    # stacking (numpy ravel), for which vec(A rho B) = (A kron B^T) vec(rho).
    sup = -1j * (np.kron(h, eye) - np.kron(eye, h.T))
    for L in _dense_jump_ops(params):
        Ld = L.conj().T
        LdL = Ld @ L
        sup += np.kron(L, L.conj())
        sup -= 0.5 * (np.kron(LdL, eye) + np.kron(eye, LdL.T))
    return sup


def steady_state_dense(params: ModelParams, cap: int = 4) -> np.ndarray:
    """Steady state from the null space of the dense superoperator."""
    sup = build_superoperator_dense(params, cap)
    dim = 3 ** params.size
    w, vecs = np.linalg.eig(sup)
    k = int(np.argmin(np.abs(w)))
    rho = vecs[:, k].reshape(dim, dim)
    rho = 0.5 * (rho + rho.conj().T)
    rho /= np.trace(rho)
    return rho


def collective_expectation(rho: np.ndarray, op: np.ndarray, size: int) -> complex:
    """<sum_j op_j> for a dense density matrix."""
    total = 0.0 + 0.0j
    for j in range(size):
        total += np.trace(_site_operator(op, j, size) @ rho)
    return total
