"""Checks for the shared operator algebra, interaction profiles, and the
dense brute-force oracle."""

import math

import numpy as np
import pytest

from btc_sim.model import (
    ModelError,
    ModelParams,
    build_hamiltonian_dense,
    build_local_operators,
    build_superoperator_dense,
    collective_expectation,
    evolve_dense,
    jump_operators,
    lindblad_rhs_dense,
    load_params,
    local_hamiltonian,
    params_from_dict,
    resolve_interactions,
    steady_state_dense,
)

S2 = math.sqrt(2.0)


def random_density(dim, rng):
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = a @ a.conj().T
    return rho / np.trace(rho)


def random_params(rng, size=2):
    return ModelParams(
        size=size,
        rabi=rng.uniform(0.5, 5),
        detuning=rng.uniform(-10, 2),
        level_splitting=rng.uniform(-2, 6),
        local_decay=rng.uniform(0.3, 3),
        collective_strength=rng.uniform(1, 20),
    )


# ---------------------------------------------------------------------------
# local operators

class TestLocalOperators:
    def test_sz_diagonal(self):
        ops = build_local_operators()
        assert np.array_equal(ops.sz, np.diag([0, 1, -1]).astype(complex))

    def test_n_is_sz_squared(self):
        ops = build_local_operators()
        assert np.array_equal(ops.n, np.diag([0, 1, 1]).astype(complex))
        assert np.array_equal(ops.n, ops.sz @ ops.sz)

    def test_all_hermitian(self):
        for name, op in build_local_operators().as_dict().items():
            assert np.allclose(op, op.conj().T, atol=1e-15), name

    def test_commutator_matches_explicit_arithmetic(self):
        # oracle: the same matrices written out entry by entry
        sx = np.array([[0, 1, 1], [1, 0, 0], [1, 0, 0]], dtype=complex) / S2
        sy = np.array([[0, 1j, -1j], [-1j, 0, 0], [1j, 0, 0]],
                      dtype=complex) / S2
        ops = build_local_operators()
        assert np.allclose(ops.sx, sx, atol=1e-15)
        assert np.allclose(ops.sy, sy, atol=1e-15)
        lhs = ops.sx @ ops.sy - ops.sy @ ops.sx
        assert np.allclose(lhs, sx @ sy - sy @ sx, atol=1e-15)

    def test_doublet_entries(self):
        ops = build_local_operators()
        assert np.array_equal(
            ops.q, np.array([[0, 0, 0], [0, 0, 1j], [0, -1j, 0]]))
        assert np.array_equal(
            ops.d, np.array([[0, 0, 0], [0, 0, 1], [0, 1, 0]], dtype=complex))
        assert ops.smx[0, 1] == pytest.approx(1 / S2)
        assert ops.smx[0, 2] == pytest.approx(-1 / S2)


# ---------------------------------------------------------------------------
# parameters

class TestModelParams:
    def test_defaults_are_canonical_point(self):
        p = ModelParams(size=4)
        assert (p.rabi, p.detuning, p.level_splitting) == (3.0, -7.0, 4.0)
        assert (p.local_decay, p.collective_strength) == (1.0, 16.0)
        assert p.profile == "AllToAll" and p.boundary == "Ring"

    def test_zero_decay_is_the_closed_system(self):
        p = ModelParams(size=2, local_decay=0.0)
        assert p.local_decay == 0.0

    @pytest.mark.parametrize("kw", [
        dict(size=0), dict(size=-2),
        dict(local_decay=-1.0), dict(powerlaw_exponent=-0.5),
        dict(profile="Cubic"), dict(boundary="Torus"),
        dict(profile="Exponential", powerlaw_exponent=1.0),
    ])
    def test_rejects_bad_values(self, kw):
        kw.setdefault("size", 3)
        with pytest.raises(ModelError):
            ModelParams(**kw)

    def test_with_replaces_single_field(self):
        p = ModelParams(size=3).with_(rabi=1.5)
        assert p.rabi == 1.5 and p.size == 3

    def test_dict_round_trip_and_unknown_key(self):
        p = params_from_dict({"size": "6", "rabi": "2.5", "profile": "PowerLaw",
                              "powerlaw_exponent": "1.5"})
        assert p.size == 6 and p.rabi == 2.5 and p.profile == "PowerLaw"
        with pytest.raises(ModelError, match="unknown"):
            params_from_dict({"size": "2", "coupling": "1"})

    def test_load_params_file(self, tmp_path):
        f = tmp_path / "params.txt"
        f.write_text("# canonical point\nsize = 5\nrabi = 3.0\n"
                     "detuning = -7\nboundary = Ring\n")
        assert load_params(f) == ModelParams(size=5)
        f.write_text("size = 5\nsize = 6\n")
        with pytest.raises(ModelError, match="duplicate"):
            load_params(f)


# ---------------------------------------------------------------------------
# interaction profiles

class TestInteractions:
    def test_all_to_all_pair_strength(self):
        prof = resolve_interactions(ModelParams(size=5))
        table = prof.pair_table(5)
        off = table[~np.eye(5, dtype=bool)]
        assert np.allclose(off, 4.0, rtol=1e-14)

    def test_powerlaw_alpha_zero_equals_all_to_all(self):
        pl = resolve_interactions(ModelParams(size=5, profile="PowerLaw",
                                              powerlaw_exponent=0.0))
        ata = resolve_interactions(ModelParams(size=5))
        assert np.array_equal(pl.offsets, ata.offsets)

    def test_open_chain_kac_prefactor(self):
        p = ModelParams(size=4, profile="PowerLaw", powerlaw_exponent=2.0,
                        boundary="OpenChain")
        prof = resolve_interactions(p)
        assert prof.kac_prefactor == pytest.approx(16 / (1 + 1 / 4 + 1 / 9),
                                                   rel=1e-14)

    @pytest.mark.parametrize("profile,alpha", [
        ("AllToAll", 0.0), ("PowerLaw", 0.7), ("PowerLaw", 2.3),
        ("Exponential", 1.8),
    ])
    @pytest.mark.parametrize("size", [2, 3, 7, 12])
    def test_ring_row_sums(self, profile, alpha, size):
        p = ModelParams(size=size, profile=profile, powerlaw_exponent=alpha)
        table = resolve_interactions(p).pair_table(size)
        assert np.allclose(table.sum(axis=1), 16.0, rtol=1e-12)
        assert np.allclose(table, table.T, atol=0)
        assert np.all(np.diag(table) == 0)

    def test_single_site_has_no_pairs(self):
        with pytest.raises(ModelError, match="no pairs"):
            resolve_interactions(ModelParams(size=1))


# ---------------------------------------------------------------------------
# dense oracle

class TestDenseHamiltonian:
    def test_single_site_matrix(self):
        p = ModelParams(size=1, rabi=2.0, detuning=-3.0, level_splitting=1.5)
        h = build_hamiltonian_dense(p)
        expected = np.diag([0, 3.0 - 1.5, 3.0 + 1.5]).astype(complex)
        expected[0, 1] = expected[1, 0] = 2.0 / S2 / S2
        expected[0, 2] = expected[2, 0] = 2.0 / S2 / S2
        assert np.allclose(h, expected, atol=1e-14)
        assert np.allclose(h, local_hamiltonian(p), atol=1e-14)

    def test_two_site_interaction_block(self):
        p = ModelParams(size=2)
        h = build_hamiltonian_dense(p)
        ops = build_local_operators()
        eye = np.eye(3)
        h_loc = local_hamiltonian(p)
        rest = h - np.kron(h_loc, eye) - np.kron(eye, h_loc)
        # V_12 = chi for N=2: -chi on the four doubly excited basis states
        expected = np.zeros(9)
        for a in (1, 2):
            for b in (1, 2):
                expected[3 * a + b] = -16.0
        assert np.allclose(rest, np.diag(expected), atol=1e-14)
        assert np.allclose(np.diag(rest), -16.0 * np.diag(
            np.kron(ops.n, ops.n)).real, atol=1e-14)

    def test_hermitian_for_random_params(self):
        rng = np.random.default_rng(7)
        for _ in range(5):
            h = build_hamiltonian_dense(random_params(rng, size=3))
            assert np.linalg.norm(h - h.conj().T) == 0.0

    def test_cap_enforced(self):
        with pytest.raises(ModelError, match="cap"):
            build_hamiltonian_dense(ModelParams(size=5), cap=4)


class TestLindbladDense:
    def test_dark_state_without_drive(self):
        p = ModelParams(size=2, rabi=0.0)
        rho = np.zeros((9, 9), dtype=complex)
        rho[0, 0] = 1.0
        assert np.linalg.norm(lindblad_rhs_dense(rho, p)) < 1e-14

    def test_trace_annihilation(self):
        rng = np.random.default_rng(11)
        p = random_params(rng, size=2)
        for _ in range(10):
            rho = random_density(9, rng)
            assert abs(np.trace(lindblad_rhs_dense(rho, p))) < 1e-12

    def test_hermiticity_pairing(self):
        rng = np.random.default_rng(13)
        p = random_params(rng, size=2)
        a = rng.normal(size=(9, 9)) + 1j * rng.normal(size=(9, 9))
        lhs = lindblad_rhs_dense(a, p).conj().T
        rhs = lindblad_rhs_dense(a.conj().T, p)
        assert np.linalg.norm(lhs - rhs) < 1e-12

    def test_dimension_mismatch(self):
        with pytest.raises(ModelError, match="dimension"):
            lindblad_rhs_dense(np.eye(4, dtype=complex), ModelParams(size=2))

    def test_jump_operators_scale(self):
        l1, l2 = jump_operators(4.0)
        assert l1[0, 1] == pytest.approx(2.0)
        assert l2[0, 2] == pytest.approx(2.0)


class TestSteadyState:
    def test_null_space_matches_long_time_integration(self):
        p = ModelParams(size=2, rabi=2.0, detuning=-4.0, level_splitting=1.0,
                        collective_strength=6.0)
        rho_ss = steady_state_dense(p)
        assert abs(np.trace(rho_ss) - 1) < 1e-10
        # residual of the claimed steady state
        assert np.linalg.norm(lindblad_rhs_dense(rho_ss, p)) < 1e-10
        rng = np.random.default_rng(3)
        rho0 = random_density(9, rng)
        rho_t = evolve_dense(p, rho0, [0.0, 80.0])[-1]
        assert np.linalg.norm(rho_t - rho_ss) < 1e-7

    def test_superoperator_reproduces_rhs(self):
        rng = np.random.default_rng(5)
        p = random_params(rng, size=2)
        sup = build_superoperator_dense(p)
        rho = random_density(9, rng)
        lhs = (sup @ rho.ravel()).reshape(9, 9)
        assert np.allclose(lhs, lindblad_rhs_dense(rho, p), atol=1e-12)


def test_collective_expectation_counts_excitations():
    ops = build_local_operators()
    rho = np.zeros((9, 9), dtype=complex)
    rho[4, 4] = 1.0  # |++><++|
    assert collective_expectation(rho, ops.n, 2) == pytest.approx(2.0)
    assert collective_expectation(rho, ops.sz, 2) == pytest.approx(2.0)
    rho2 = np.zeros((9, 9), dtype=complex)
    rho2[0, 0] = 1.0
    assert collective_expectation(rho2, ops.n, 2) == pytest.approx(0.0)
