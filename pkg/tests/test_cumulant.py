"""Pair-cumulant backend: closure accuracy, reductions, and the sweep kit.

Oracle chain: the full master equation at N=2 (exact), the mean-field
equations for product states (closure must reduce to them exactly), and
the dense pair moments.  Large-N behavior is covered by trend tests and
the acceptance suite.
"""

import numpy as np
import pytest

from btc_sim import cumulant as cm
from btc_sim import meanfield as mf
from btc_sim import model
from btc_sim.cumulant import CumulantError
from btc_sim.model import ModelParams


def random_product_density(rng):
    v = rng.normal(size=3) + 1j * rng.normal(size=3)
    v /= np.linalg.norm(v)
    return np.outer(v, v.conj())


def dense_pair_moment(rho, first, second, size):
    ops = {}
    lab = cm.OP_LABELS
    total = np.zeros_like(rho)
    c1, d1 = cm.LEVELS.index(first[0]), cm.LEVELS.index(first[1])
    c2, d2 = cm.LEVELS.index(second[0]), cm.LEVELS.index(second[1])
    s1 = np.zeros((3, 3), dtype=complex); s1[c1, d1] = 1.0
    s2 = np.zeros((3, 3), dtype=complex); s2[c2, d2] = 1.0
    vals = []
    for r in range(1, size):
        acc = 0.0
        for a in range(size):
            op = (model._site_operator(s1, a, size)
                  @ model._site_operator(s2, (a + r) % size, size))
            acc += np.trace(op @ rho)
        vals.append(acc / size)
    return np.array(vals)


class TestStateContainer:
    def test_shape_validation(self):
        with pytest.raises(CumulantError):
            cm.CumulantState(size=4, firsts=np.zeros(8, complex),
                             seconds=np.zeros((9, 9, 4), complex))
        with pytest.raises(CumulantError):
            cm.CumulantState(size=4, firsts=np.zeros(9, complex),
                             seconds=np.zeros((9, 9, 3), complex))

    def test_from_density_mapping(self):
        rng = np.random.default_rng(31)
        rho = random_product_density(rng)
        st = cm.state_from_density(6, rho)
        for c in range(3):
            for d in range(3):
                assert st.firsts[3 * c + d] == pytest.approx(rho[d, c])
        assert st.hermitian_violation() < 1e-14

    def test_all_ground(self):
        st = cm.all_ground(5)
        assert st.pop0 == pytest.approx(1.0)
        assert st.pop_plus == pytest.approx(0.0)
        assert st.s_z == pytest.approx(0.0)

    def test_copy_is_independent(self):
        st = cm.all_ground(4)
        cp = st.copy()
        cp.firsts[0] = 0.5
        assert st.firsts[0] == 1.0


class TestClosureReductions:
    @staticmethod
    def bloch_vars(firsts):
        names = {"n": "n", "s_z": "sz", "s_x": "sx", "s_y": "sy",
                 "s_mx": "smx", "s_my": "smy", "q": "q", "d": "d"}
        ops = model.build_local_operators().as_dict()
        out = []
        for field in mf.STATE_FIELDS:
            o = ops[names[field]]
            out.append(sum(o[c, d] * firsts[3 * c + d]
                           for c in range(3) for d in range(3)))
        return np.array(out)

    def test_product_state_reduces_to_mean_field(self):
        # Gaussian closure on a product state must reproduce the mean-field
        # flow exactly: every first-moment derivative agrees
        rng = np.random.default_rng(57)
        p = ModelParams(size=24)
        rho = random_product_density(rng)
        st = cm.state_from_density(24, rho)
        dst = cm.cme_rhs_ti(st, p)
        got = self.bloch_vars(dst.firsts)
        x = mf.MeanFieldState(*[v.real for v in self.bloch_vars(st.firsts)])
        want = mf.mf_rhs(x, p)
        assert np.abs(got - want).max() < 1e-12
        assert np.abs(got.imag).max() < 1e-12

    def test_ti_matches_full_derivative(self):
        rng = np.random.default_rng(77)
        p = ModelParams(size=6, profile="PowerLaw", powerlaw_exponent=1.3)
        rho = random_product_density(rng)
        st = cm.state_from_density(6, rho)
        st.seconds += 0.01 * (rng.normal(size=st.seconds.shape)
                              + 1j * rng.normal(size=st.seconds.shape))
        st.seconds[:, :, 0] = 0.0
        # symmetrize so the homogeneous state is a valid TI configuration
        herm = np.roll(st.seconds[:, :, ::-1], 1, axis=2).transpose(1, 0, 2)
        st.seconds = 0.5 * (st.seconds + herm)
        d_ti = cm.cme_rhs_ti(st, p)
        firsts, seconds = cm.full_from_ti(st)
        df, ds = cm.cme_rhs_full(firsts, seconds, p)
        assert np.abs(df - d_ti.firsts[None, :]).max() < 1e-12
        back = cm.ti_from_full(df, ds)
        assert np.abs(back.seconds - d_ti.seconds).max() < 1e-12

    def test_all_to_all_equals_flat_power_law(self):
        p1 = ModelParams(size=9)
        p2 = ModelParams(size=9, profile="PowerLaw", powerlaw_exponent=0.0)
        st = cm.all_ground(9)
        d1 = cm.cme_rhs_ti(st, p1)
        d2 = cm.cme_rhs_ti(st, p2)
        assert np.abs(d1.firsts - d2.firsts).max() == 0.0
        assert np.abs(d1.seconds - d2.seconds).max() == 0.0

    def test_no_interaction_stays_factorized(self):
        p = ModelParams(size=4, collective_strength=0.0)
        series = cm.cme_integrate(cm.all_ground(4), p, 3.0, t_samples=[3.0],
                                  rtol=1e-10, atol=1e-12)
        st = series.final
        worst = 0.0
        for x in range(9):
            for y in range(9):
                prod = st.firsts[x] * st.firsts[y]
                worst = max(worst,
                            np.abs(st.seconds[x, y, 1:] - prod).max())
        assert worst < 1e-8


class TestDenseOracle:
    def test_two_site_expectations(self):
        # at N=2 the pair closure is exact: the CME must track the full
        # master equation to integrator accuracy
        p = ModelParams(size=2)
        times = np.linspace(0.0, 10.0, 41)
        series = cm.cme_integrate(cm.all_ground(2), p, 10.0,
                                  t_samples=times, rtol=1e-10, atol=1e-12)
        rho0 = np.zeros((9, 9), dtype=complex)
        rho0[0, 0] = 1.0
        sol = model.evolve_dense(p, rho0, times)
        ops = model.build_local_operators().as_dict()
        sz = np.array([model.collective_expectation(r, ops["sz"], 2).real
                       for r in sol]) / 2.0
        assert np.abs(series.s_z() - sz).max() < 1e-8

    def test_two_site_pair_moments(self):
        p = ModelParams(size=2)
        series = cm.cme_integrate(cm.all_ground(2), p, 4.0, t_samples=[4.0],
                                  rtol=1e-10, atol=1e-12)
        st = series.final
        rho0 = np.zeros((9, 9), dtype=complex)
        rho0[0, 0] = 1.0
        rho = model.evolve_dense(p, rho0, [0.0, 4.0])[-1]
        for first, second in (("pp", "pp"), ("p0", "0p"), ("pm", "mp")):
            want = dense_pair_moment(rho, first, second, 2)
            got = st.channel(first, second)
            assert np.abs(got - want).max() < 1e-8

    def test_hermitian_pairing_preserved(self):
        p = ModelParams(size=10)
        series = cm.cme_integrate(cm.all_ground(10), p, 5.0,
                                  t_samples=[5.0], rtol=1e-9)
        assert series.final.hermitian_violation() < 1e-8

    def test_trace_preserved(self):
        p = ModelParams(size=12)
        series = cm.cme_integrate(cm.all_ground(12), p, 5.0,
                                  t_samples=[5.0], rtol=1e-9)
        f = series.final.firsts
        trace = (f[0] + f[cm.PP] + f[cm.MM]).real
        assert abs(trace - 1.0) < 1e-12

    def test_zero_drive_decays_at_gamma(self):
        p = ModelParams(size=5, rabi=0.0)
        rho_plus = np.zeros((3, 3), dtype=complex)
        rho_plus[1, 1] = 1.0
        st = cm.state_from_density(5, rho_plus)
        times = np.linspace(0.0, 2.0, 9)
        series = cm.cme_integrate(st, p, 2.0, t_samples=times,
                                  rtol=1e-10, atol=1e-12)
        fplus = series.firsts[:, cm.PP].real
        assert np.abs(fplus - np.exp(-times)).max() < 1e-9


class TestIntegrator:
    def test_bad_horizon(self):
        with pytest.raises(CumulantError, match="t_final must exceed"):
            cm.cme_integrate(cm.all_ground(3), ModelParams(size=3), 0.0)

    def test_open_chain_rejected(self):
        p = ModelParams(size=5, boundary="OpenChain")
        with pytest.raises(CumulantError, match="Ring"):
            cm.cme_rhs_ti(cm.all_ground(5), p)

    def test_full_size_cap(self):
        p = ModelParams(size=61)
        f, s = cm.full_from_ti(cm.all_ground(61))
        with pytest.raises(CumulantError, match="capped"):
            cm.cme_rhs_full(f, s, p)

    def test_keep_steps_records_monotone_grid(self):
        p = ModelParams(size=8)
        series = cm.cme_integrate(cm.all_ground(8), p, 3.0, keep="steps",
                                  rtol=1e-7, atol=1e-9, method="DOP853")
        assert series.states is None
        assert np.all(np.diff(series.t) > 0)
        assert series.t[0] == 0.0 and series.t[-1] == pytest.approx(3.0)

    def test_keep_firsts_hits_requested_samples(self):
        p = ModelParams(size=8)
        times = np.linspace(0.0, 2.0, 11)
        series = cm.cme_integrate(cm.all_ground(8), p, 2.0, keep="firsts",
                                  t_samples=times, rtol=1e-8)
        assert np.allclose(series.t, times)
        assert series.firsts.shape == (11, 9)

    def test_solver_families_agree(self):
        p = ModelParams(size=20)
        times = [10.0]
        a = cm.cme_integrate(cm.all_ground(20), p, 10.0, t_samples=times,
                             rtol=1e-8, atol=1e-10, method="RK45")
        b = cm.cme_integrate(cm.all_ground(20), p, 10.0, t_samples=times,
                             rtol=1e-8, atol=1e-10, method="DOP853")
        assert abs(a.final.s_z - b.final.s_z) < 1e-6


class TestCorrelationReadout:
    def test_connected_zz_of_product_state_vanishes(self):
        rng = np.random.default_rng(3)
        st = cm.state_from_density(7, random_product_density(rng))
        assert np.abs(cm.connected_zz(st)).max() < 1e-14

    def test_c_off_flags_time_dependence(self):
        p = ModelParams(size=30)
        series = cm.cme_integrate(cm.all_ground(30), p, 8.0,
                                  t_samples=[8.0], rtol=1e-8)
        res = cm.c_off(series.final, p)
        assert res.flag == "time-dependent"
        assert res.derivative_norm > 1e-8

    def test_c_off_stationary_after_decay(self):
        # no drive: everything relaxes to the dark state, rhs -> 0
        p = ModelParams(size=12, rabi=0.0)
        series = cm.cme_integrate(cm.all_ground(12), p, 30.0,
                                  t_samples=[30.0], rtol=1e-10, atol=1e-12)
        res = cm.c_off(series.final, p)
        assert res.flag == ""
        assert abs(res.value) < 1e-10

    def test_c_off_range_equals_nn_correlator(self):
        p = ModelParams(size=10)
        times = np.linspace(4.0, 6.0, 9)
        series = cm.cme_integrate(cm.all_ground(10), p, 6.0,
                                  t_samples=np.concatenate([[0.0], times]),
                                  rtol=1e-9, keep="all")
        window = (4.0, 6.0)
        got = cm.c_off_range(series, 1, window)
        keep = [s for t, s in zip(series.t, series.states)
                if window[0] <= t <= window[1]]
        want = float(np.mean([cm.connected_zz(s)[0] for s in keep]))
        assert got == pytest.approx(want, abs=1e-12)

    def test_c_off_range_errors(self):
        p = ModelParams(size=6)
        series = cm.cme_integrate(cm.all_ground(6), p, 2.0, keep="steps",
                                  rtol=1e-7)
        with pytest.raises(CumulantError, match="without stored states"):
            cm.c_off_range(series, 1, (0.0, 1.0))
        full = cm.cme_integrate(cm.all_ground(6), p, 2.0,
                                t_samples=[0.0, 1.0, 2.0], rtol=1e-7)
        with pytest.raises(CumulantError, match="range"):
            cm.c_off_range(full, 6, (0.0, 1.0))
        with pytest.raises(CumulantError, match="window"):
            cm.c_off_range(full, 1, (5.0, 6.0))


class TestLifetime:
    def test_damped_cosine_crossing(self):
        # contrast is measured about the sample mean, so pick eps well
        # above it (mean ~ 5e-5 here) to keep upcrossings flowing
        t = np.arange(0.0, 200.0, 0.01)
        sz = np.exp(-0.1 * t) * np.cos(3.0 * t)
        res = cm.lifetime(t, sz, eps=1e-3)
        assert res.flag == ""
        # envelope hits eps at t = ln(1/eps)/kappa ~ 69; tau is the start
        # of the first period below it
        assert abs(res.tau - np.log(1e3) / 0.1) < 2 * (2 * np.pi / 3.0)
        assert np.all(np.diff(res.contrast_times) > 0)

    def test_monotone_signal_has_no_oscillation(self):
        t = np.linspace(0.0, 10.0, 300)
        res = cm.lifetime(t, np.exp(-t))
        assert res.tau == 0.0
        assert res.flag == "no-oscillation"

    def test_threshold_never_reached(self):
        t = np.arange(0.0, 50.0, 0.01)
        sz = np.exp(-0.01 * t) * np.cos(3.0 * t)
        res = cm.lifetime(t, sz, eps=1e-12)
        assert np.isinf(res.tau)
        assert res.flag == "not-reached"

    def test_bad_eps(self):
        with pytest.raises(CumulantError, match="eps"):
            cm.lifetime(np.arange(10.0), np.zeros(10), eps=0.0)

    def test_small_chain_lifetime_is_finite(self):
        p = ModelParams(size=50, profile="PowerLaw", powerlaw_exponent=2.0)
        res = cm.run_lifetime(p, eps=1e-5, t_max=200.0, chunk=50.0)
        assert res.flag == ""
        assert 5.0 < res.tau < 50.0


class TestScalingCollapse:
    def make_rows(self, alpha_c=1.2, zeta=-0.7, nu=1.4):
        rows = []
        for n in (500, 1000, 1500):
            for a in np.linspace(0.7, 1.7, 11):
                x = (a - alpha_c) * n ** (1.0 / nu)
                rows.append((n, a, n ** (zeta / nu)
                             / (1.0 + np.exp(-0.05 * x))))
        return rows

    def test_recovers_synthetic_exponents(self):
        rep = cm.fit_scaling_collapse(self.make_rows())
        assert abs(rep.alpha_c - 1.2) < 0.024
        assert abs(rep.nu - 1.4) < 0.07
        assert abs(rep.zeta + 0.7) < 0.035
        assert rep.residual < 1e-4

    def test_accepts_sweep_row_dicts(self):
        rows = [{"N": n, "alpha": a, "c_off": c}
                for n, a, c in self.make_rows()]
        rep = cm.fit_scaling_collapse(rows)
        assert abs(rep.alpha_c - 1.2) < 0.024

    def test_needs_three_sizes(self):
        rows = [(500, a, 1.0) for a in np.linspace(0.5, 1.5, 11)]
        with pytest.raises(CumulantError, match="3 sizes"):
            cm.fit_scaling_collapse(rows)

    def test_needs_enough_alphas(self):
        rows = [(n, a, 1.0) for n in (500, 1000, 1500)
                for a in (0.5, 1.0, 1.5)]
        with pytest.raises(CumulantError, match="8 alpha"):
            cm.fit_scaling_collapse(rows)

    def test_report_text_format(self):
        rep = cm.fit_scaling_collapse(self.make_rows())
        text = cm.collapse_report_text(rep)
        lines = text.strip().split("\n")
        assert lines[0].startswith("alpha_c = ")
        assert lines[1].startswith("zeta = ")
        assert lines[2].startswith("nu = ")
        assert lines[3].startswith("residual = ")


class TestTailSweep:
    def test_crossing_detector(self):
        rows = []
        for n, slope in ((100, 1.0), (200, 2.0)):
            for a in np.linspace(0.5, 2.0, 7):
                rows.append({"N": n, "alpha": a, "profile": "PowerLaw",
                             "c_off": slope * (a - 1.2), "tau": np.nan,
                             "flag": ""})
                rows.append({"N": n, "alpha": a, "profile": "Exponential",
                             "c_off": 0.1 * n ** 0.1 + 0.01 * a,
                             "tau": np.nan, "flag": ""})
        crossings = cm.find_crossings(rows, "PowerLaw")
        assert len(crossings) == 1
        n1, n2, alpha = crossings[0]
        assert (n1, n2) == (100, 200)
        assert abs(alpha - 1.2) < 1e-9
        assert cm.find_crossings(rows, "Exponential") == []

    def test_sweep_csv_format(self, tmp_path):
        rows = [{"N": 100, "alpha": 1.0, "profile": "PowerLaw",
                 "c_off": 0.01, "tau": np.nan, "flag": ""}]
        out = tmp_path / "sweep.csv"
        cm.sweep_to_csv(rows, out)
        lines = out.read_text().strip().split("\n")
        assert lines[0] == "N,alpha,profile,c_off,tau,flag"
        assert lines[1].startswith("100,1")

    def test_settle_and_measure_smoke(self):
        p = ModelParams(size=40, profile="PowerLaw", powerlaw_exponent=1.5)
        value, flag = cm.settle_and_measure(p, t_measure=12.0, rtol=1e-7)
        assert np.isfinite(value)
        assert flag in ("", "time-dependent")
