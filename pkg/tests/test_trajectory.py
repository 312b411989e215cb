"""Quantum-jump backend: propagator discipline, oracle agreement, fits."""

import numpy as np
import pytest

from btc_sim import model
from btc_sim import trajectory as tj
from btc_sim.model import ModelParams
from btc_sim.trajectory import TrajectoryError


def dense_reference(params, times, op_key):
    dim = 3 ** params.size
    rho0 = np.zeros((dim, dim), dtype=complex)
    rho0[0, 0] = 1.0
    ops = model.build_local_operators().as_dict()
    sol = model.evolve_dense(params, rho0, times)
    return np.array([model.collective_expectation(r, ops[op_key],
                                                  params.size).real
                     for r in sol]) / params.size


class TestEffectiveHamiltonian:
    def test_matches_dense_oracle(self):
        p = ModelParams(size=3, profile="PowerLaw", powerlaw_exponent=1.3)
        heff = tj.effective_hamiltonian(p).toarray()
        ref = model.build_hamiltonian_dense(p)
        ops = model.build_local_operators()
        for j in range(3):
            ref = ref - 0.5j * p.local_decay * model._site_operator(
                ops.n, j, 3)
        assert np.abs(heff - ref).max() < 1e-13

    def test_single_site_decay_ledger(self):
        h = tj.effective_hamiltonian(ModelParams(size=1)).toarray()
        anti = (h - h.conj().T) / 2.0
        assert np.abs(anti - np.diag([0.0, -0.5j, -0.5j])).max() == 0.0

    def test_anti_hermitian_part_negative_semidefinite(self):
        rng = np.random.default_rng(402)
        for _ in range(5):
            p = ModelParams(size=int(rng.integers(1, 4)),
                            rabi=rng.uniform(0.5, 4),
                            detuning=rng.uniform(-8, 0),
                            level_splitting=rng.uniform(0, 5),
                            local_decay=rng.uniform(0.2, 2),
                            collective_strength=rng.uniform(1, 20))
            h = tj.effective_hamiltonian(p).toarray()
            rates = np.linalg.eigvalsh((h - h.conj().T) / 2j)
            assert rates.max() <= 1e-12

    def test_zero_decay_restores_hermiticity(self):
        p = ModelParams(size=2, local_decay=0.0)
        h = tj.effective_hamiltonian(p)
        assert np.abs((h - h.conj().T.tocsr()).toarray()).max() == 0.0

    def test_cap(self):
        with pytest.raises(TrajectoryError, match="cap"):
            tj.effective_hamiltonian(ModelParams(size=11))


class TestStepDiscipline:
    def test_norm_tracks_jump_budget(self):
        # no-jump survival: |psi|^2 = 1 - delta_p + O(dt^2)
        ctx = tj.make_context(ModelParams(size=2))
        rng = np.random.default_rng(0)
        psi = rng.normal(size=9) + 1j * rng.normal(size=9)
        psi /= np.linalg.norm(psi)
        for dt in (1e-2, 1e-3, 1e-4):
            dp = tj.jump_probabilities(psi, dt, ctx).sum()
            out = tj.taylor_propagate(ctx.heff, psi, dt)
            assert abs(np.linalg.norm(out) ** 2 - (1.0 - dp)) < 1.0 * dt ** 2

    def test_undamped_propagation_is_unitary(self):
        p = ModelParams(size=2, rabi=1.0, detuning=-0.5, level_splitting=0.3,
                        collective_strength=0.5, local_decay=0.0)
        ctx = tj.make_context(p)
        psi = np.zeros(9, dtype=complex)
        psi[0] = 1.0
        for _ in range(5000):                 # t = 10 at dt = 0.002
            psi = tj.taylor_propagate(ctx.heff, psi, 0.002)
        assert abs(np.linalg.norm(psi) - 1.0) < 1e-8

    def test_oversized_step_rejected(self):
        ctx = tj.make_context(ModelParams(size=2))
        psi = np.zeros(9, dtype=complex)
        psi[4] = 1.0                          # both sites excited
        with pytest.raises(TrajectoryError, match="time step too large"):
            tj.step(psi, 0.2, np.random.default_rng(1), ctx)

    def test_step_renormalizes(self):
        ctx = tj.make_context(ModelParams(size=2))
        rng = np.random.Generator(np.random.Philox(key=(9, 0)))
        psi = np.zeros(9, dtype=complex)
        psi[0] = 1.0
        for _ in range(400):
            psi, _ = tj.step(psi, 0.004, rng, ctx)
            assert abs(np.linalg.norm(psi) - 1.0) < 1e-12


class TestEnsembles:
    def test_single_trajectory_equals_step_loop(self):
        p = ModelParams(size=2)
        res = tj.run_ensemble(p, 1, 4.0, seeds=7, dt=0.004, sample_dt=0.2)
        rec = res.records[0]
        ctx = tj.make_context(p)
        rng = np.random.Generator(np.random.Philox(key=(7, 0)))
        psi = np.zeros(ctx.dim, dtype=complex)
        psi[0] = 1.0
        n_steps = int(round(4.0 / 0.004))
        dt = 4.0 / n_steps
        stride = int(round(0.2 / dt))
        jumps, sz = [], [0.0]
        op = ctx.observable_ops["s_z"]
        for k in range(n_steps):
            psi, ev = tj.step(psi, dt, rng, ctx)
            if ev is not None:
                jumps.append(((k + 1) * dt, ev[0], ev[1]))
            if (k + 1) % stride == 0:
                sz.append((psi.conj() @ (op @ psi)).real / 2.0)
        assert jumps == rec.jumps
        assert len(jumps) > 0                 # exercise the jump path
        assert np.abs(np.array(sz) - rec.observables["s_z"]).max() < 1e-14

    def test_bit_reproducible(self):
        p = ModelParams(size=2)
        a = tj.run_ensemble(p, 20, 2.0, seeds=3, dt=0.004)
        b = tj.run_ensemble(p, 20, 2.0, seeds=3, dt=0.004)
        for name in a.means:
            assert np.array_equal(a.means[name], b.means[name])
        assert all(x.jumps == y.jumps for x, y in zip(a.records, b.records))

    def test_seed_list(self):
        p = ModelParams(size=2)
        a = tj.run_ensemble(p, 3, 1.0, seeds=[4, 5, 6])
        b = tj.run_ensemble(p, 3, 1.0, seeds=[4, 5, 6])
        c = tj.run_ensemble(p, 3, 1.0, seeds=[6, 5, 4])
        assert np.array_equal(a.means["n"], b.means["n"])
        assert not np.array_equal(a.means["n"], c.means["n"])
        with pytest.raises(TrajectoryError, match="seed list"):
            tj.run_ensemble(p, 4, 1.0, seeds=[1, 2])

    @pytest.mark.parametrize("size,n_traj,t_final,seed", [
        (2, 600, 6.0, 11),
        (3, 500, 5.0, 11),
    ])
    def test_ensemble_matches_dense(self, size, n_traj, t_final, seed):
        # master-equation oracle within 3 standard errors of the mean
        p = ModelParams(size=size)
        res = tj.run_ensemble(p, n_traj, t_final, seeds=seed, sample_dt=0.25)
        for name, key in (("s_z", "sz"), ("n", "n"), ("q", "q"), ("d", "d")):
            exact = dense_reference(p, res.times, key)
            z = np.abs(res.means[name] - exact)[1:] / res.stderrs[name][1:]
            assert z.max() < 3.0, f"{name}: worst z {z.max():.2f}"

    def test_stderr_halves_from_100_to_400(self):
        p = ModelParams(size=2)
        small = tj.run_ensemble(p, 100, 3.0, seeds=21, sample_dt=0.5)
        large = tj.run_ensemble(p, 400, 3.0, seeds=22, sample_dt=0.5)
        i = len(small.times) - 1
        ratio = small.stderrs["s_z"][i] / large.stderrs["s_z"][i]
        assert 1.6 < ratio < 2.4

    def test_single_trajectory_mean_is_the_record(self):
        p = ModelParams(size=2)
        res = tj.run_ensemble(p, 1, 1.0, seeds=2)
        assert np.array_equal(res.means["n"], res.records[0].observables["n"])
        assert np.all(np.isnan(res.stderrs["n"]))

    def test_jump_logs_well_formed(self):
        p = ModelParams(size=3)
        res = tj.run_ensemble(p, 30, 4.0, seeds=13)
        total = 0
        for rec in res.records:
            t = [j[0] for j in rec.jumps]
            assert all(b > a for a, b in zip(t, t[1:]))
            assert all(0 <= j[1] < 3 for j in rec.jumps)
            assert all(j[2] in ("+", "-") for j in rec.jumps)
            total += len(rec.jumps)
        assert total > 0

    def test_no_jumps_without_decay(self):
        p = ModelParams(size=2, rabi=1.0, detuning=-0.5, level_splitting=0.3,
                        collective_strength=0.5, local_decay=0.0)
        res = tj.run_ensemble(p, 10, 2.0, seeds=1, dt=0.002)
        assert all(len(rec.jumps) == 0 for rec in res.records)

    def test_unknown_observable(self):
        with pytest.raises(TrajectoryError, match="unknown observable"):
            tj.run_ensemble(ModelParams(size=2), 2, 1.0,
                            observables=("s_z", "banana"))


class TestFourierSpectrum:
    def make_record(self, t_final, dt=0.05, omega=2.1):
        t = np.arange(0.0, t_final, dt)
        sig = 0.3 * np.cos(omega * t + 0.4) + 0.02
        return tj.TrajectoryRecord(times=t, observables={"s_z": sig},
                                   jumps=[], seed=(0, 0),
                                   params=ModelParams(size=2))

    def test_peak_and_purity(self):
        rec = self.make_record(40.0)
        rep = tj.fourier_spectrum(rec, omega_ref=2.1)
        assert abs(rep.peak_frequency - 2.1) < 2 * np.pi / 40.0
        assert rep.purity > 0.5
        assert not rep.low_resolution

    def test_short_window_flagged(self):
        rec = self.make_record(5.0)
        rep = tj.fourier_spectrum(rec, omega_ref=2.1)
        assert rep.low_resolution

    def test_nonuniform_sampling_rejected(self):
        rec = self.make_record(10.0)
        rec.times = rec.times.copy()
        rec.times[3] += 0.01
        with pytest.raises(TrajectoryError, match="uniform"):
            tj.fourier_spectrum(rec, omega_ref=2.1)

    def test_transient_removal_too_aggressive(self):
        rec = self.make_record(10.0)
        with pytest.raises(TrajectoryError, match="too few samples"):
            tj.fourier_spectrum(rec, transient=9.9, omega_ref=2.1)


class TestExponentialSumFit:
    def test_pure_exponential_is_exact_at_m1(self):
        fit = tj.fit_exponential_sum(2.0, 30, 1, profile="Exponential")
        assert fit.max_rel_error < 1e-10
        assert fit.bases.shape == (1,)
        assert abs(fit.bases[0] - 0.5) < 1e-8

    def test_flat_profile_is_exact(self):
        fit = tj.fit_exponential_sum(0.0, 20, 1)
        assert fit.max_rel_error < 1e-12

    def test_power_law_error_decreases_with_m(self):
        errs = [tj.fit_exponential_sum(1.3, 40, m).max_rel_error
                for m in (1, 2, 3, 4)]
        assert all(b <= a * (1.0 + 1e-12) for a, b in zip(errs, errs[1:]))
        assert errs[0] > 0.1                  # one term cannot do a power law
        assert errs[3] < 0.01

    def test_bases_inside_unit_interval(self):
        fit = tj.fit_exponential_sum(1.8, 30, 3)
        assert np.all(fit.bases > 0.0) and np.all(fit.bases < 1.0)

    def test_evaluate_matches_reported_error(self):
        fit = tj.fit_exponential_sum(1.5, 25, 2)
        p = ModelParams(size=25, profile="PowerLaw", powerlaw_exponent=1.5,
                        boundary="OpenChain")
        target = model.resolve_interactions(p).offsets
        r = np.arange(1, 25, dtype=float)
        rel = np.abs(fit.evaluate(r) - target) / target
        assert abs(rel.max() - fit.max_rel_error) < 1e-12

    def test_m_zero_rejected(self):
        with pytest.raises(TrajectoryError, match="at least one"):
            tj.fit_exponential_sum(1.3, 40, 0)

    def test_m_too_large_for_chain(self):
        with pytest.raises(TrajectoryError, match="too large for size"):
            tj.fit_exponential_sum(1.3, 6, 3)


class TestExports:
    def setup_method(self):
        self.res = tj.run_ensemble(ModelParams(size=2), 5, 2.0, seeds=17)

    def test_record_csv(self):
        text = tj.record_to_csv(self.res.records[0])
        lines = text.strip().split("\n")
        assert lines[0] == "t,s_z,n,q,d"
        assert len(lines) == 1 + len(self.res.times)

    def test_jump_csv(self):
        rec = max(self.res.records, key=lambda r: len(r.jumps))
        text = tj.jumps_to_csv(rec)
        lines = text.strip().split("\n")
        assert lines[0] == "t,site,channel"
        assert len(lines) == 1 + len(rec.jumps)
        if len(lines) > 1:
            _, site, channel = lines[1].split(",")
            assert channel in ("+", "-") and int(site) in (0, 1)

    def test_ensemble_csv(self):
        text = tj.ensemble_to_csv(self.res)
        header = text.split("\n", 1)[0].split(",")
        assert header[0] == "t"
        assert "s_z_mean" in header and "s_z_stderr" in header
