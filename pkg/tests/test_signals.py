"""MVAR simulation, SNR calibration, and covariance estimation."""

import numpy as np
import pytest

from rrloc import (
    ContractViolation,
    MvarModel,
    Recording,
    companion_radius,
    estimate_cov,
    generate_leadfields,
    load_recording,
    random_stable_mvar,
    regularize_pd,
    sample_mvar,
    save_recording,
    simulate_recording,
)


@pytest.fixture(scope="module")
def leads():
    return generate_leadfields(m=10, s=30, coherence=0.6, seed=4)


class TestRandomStableMvar:
    def test_identity_mask_decouples(self):
        """mask = I forces diagonal coefficient matrices at every lag: the
        component processes are generated independently."""
        model = random_stable_mvar(4, order=3, mask=np.eye(4), seed=1)
        for a in model.coeffs:
            np.testing.assert_array_equal(a - np.diag(np.diag(a)),
                                          np.zeros((4, 4)))

    def test_dense_mask_couples(self):
        model = random_stable_mvar(3, order=2, mask=np.ones((3, 3)), seed=1)
        off = np.abs(model.coeffs[0] - np.diag(np.diag(model.coeffs[0])))
        assert off.max() > 0

    def test_fractional_mask_scales_coupling(self):
        full = random_stable_mvar(3, order=2, mask=np.ones((3, 3)), seed=5)
        half_mask = 0.5 * np.ones((3, 3))
        np.fill_diagonal(half_mask, 1.0)
        half = random_stable_mvar(3, order=2, mask=half_mask, seed=5)
        # same draw, halved off-diagonal couplings, then a scalar stability
        # rescale: off/diag ratios must come out halved
        i, j = 0, 1
        ratio_full = full.coeffs[0][i, j] / full.coeffs[0][i, i]
        ratio_half = half.coeffs[0][i, j] / half.coeffs[0][i, i]
        np.testing.assert_allclose(ratio_half, 0.5 * ratio_full, atol=1e-12)

    def test_spectral_radius_below_one(self):
        for seed in range(5):
            model = random_stable_mvar(3, order=6, seed=seed)
            rad = companion_radius(model.coeffs)
            assert rad < 1.0
            np.testing.assert_allclose(rad, 0.95, atol=1e-9)

    def test_target_radius_honored(self):
        model = random_stable_mvar(4, order=4, seed=2, target_radius=0.7)
        np.testing.assert_allclose(companion_radius(model.coeffs), 0.7,
                                   atol=1e-9)

    def test_zero_mask_degenerates_to_white_noise(self):
        # all-zero mask kills every coefficient; the process is trivially
        # stable (radius 0) and reduces to its innovations
        model = random_stable_mvar(3, order=2, mask=np.zeros((3, 3)), seed=0)
        np.testing.assert_array_equal(model.coeffs, np.zeros((2, 3, 3)))
        assert companion_radius(model.coeffs) == 0.0

    def test_bad_target_radius_rejected(self):
        with pytest.raises(ContractViolation):
            random_stable_mvar(3, order=2, seed=0, target_radius=1.0)

    def test_model_validation(self):
        with pytest.raises(ContractViolation):
            # radius >= 1 must be rejected by the dataclass itself
            MvarModel(coeffs=np.array([[[1.2]]]), noise_cov=np.eye(1),
                      mask=None)


class TestSampleMvar:
    def test_zero_coeff_white_noise(self):
        """Order-1 model with zero coefficient and unit innovations is white
        noise; the sample covariance converges to I (within 3/sqrt(n) per
        entry at n = 10^4)."""
        model = MvarModel(coeffs=np.zeros((1, 3, 3)), noise_cov=np.eye(3),
                          mask=None)
        n = 10_000
        x = sample_mvar(model, n, seed=0)
        cov = estimate_cov(x)
        np.testing.assert_allclose(cov, np.eye(3), atol=3.0 / np.sqrt(n))

    def test_scalar_ar1_autocorrelation(self):
        """AR(1) with coefficient 0.9: lag-1 autocorrelation is 0.9 (the
        Yule-Walker equations give rho_1 = a for a scalar AR(1))."""
        model = MvarModel(coeffs=np.full((1, 1, 1), 0.9),
                          noise_cov=np.eye(1), mask=None)
        x = sample_mvar(model, 10_000, seed=1)[0]
        x = x - x.mean()
        rho1 = (x[1:] @ x[:-1]) / (x @ x)
        assert abs(rho1 - 0.9) < 0.05

    def test_deterministic(self):
        model = random_stable_mvar(2, order=2, seed=3)
        a = sample_mvar(model, 100, seed=42)
        b = sample_mvar(model, 100, seed=42)
        np.testing.assert_array_equal(a, b)


class TestSimulateRecording:
    def test_snr_exact_at_zero_db(self, leads):
        rec = simulate_recording(leads, (2, 9), snr_db=0.0, seed=5)
        ratio = 10 ** (rec.achieved_snr_db / 20.0)
        assert abs(ratio - 1.0) < 0.01

    def test_snr_exact_across_grid(self, leads):
        for snr in (-10.0, 0.0, 10.0, 60.0):
            rec = simulate_recording(leads, (1, 7, 12), snr_db=snr, seed=8)
            np.testing.assert_allclose(rec.achieved_snr_db, snr, atol=1e-9)

    def test_high_snr_signal_dominates(self, leads):
        """At +60 dB the top l0 eigenvalues of R_hat N_hat^-1 dwarf the
        noise floor of 1."""
        rec = simulate_recording(leads, (3, 11), snr_db=60.0, seed=2,
                                 background_sources=4)
        r_hat, _ = regularize_pd(estimate_cov(rec.post))
        n_hat, _ = regularize_pd(estimate_cov(rec.pre))
        from rrloc import eigvals_product
        lam = eigvals_product(r_hat, n_hat)
        assert lam[1] > 1e3          # both source directions far above 1
        assert abs(lam[-1]) < 10.0   # trailing space stays near the floor

    def test_blocks_and_shapes(self, leads):
        rec = simulate_recording(leads, (0, 5), snr_db=0.0, t_pre=80,
                                 t_post=120, seed=3)
        assert rec.pre.shape == (leads.m, 80)
        assert rec.post.shape == (leads.m, 120)
        assert rec.source_data.shape == (2, 120)

    def test_deterministic(self, leads):
        a = simulate_recording(leads, (4, 8), snr_db=-5.0, seed=11)
        b = simulate_recording(leads, (4, 8), snr_db=-5.0, seed=11)
        np.testing.assert_array_equal(a.pre, b.pre)
        np.testing.assert_array_equal(a.post, b.post)

    def test_source_gains_tilt_power(self, leads):
        flat = simulate_recording(leads, (2, 9), snr_db=0.0, seed=5)
        tilted = simulate_recording(leads, (2, 9), snr_db=0.0, seed=5,
                                    source_gains=np.array([0.5, 1.0]))
        rms = lambda x: np.sqrt((x**2).mean(axis=1))
        r_flat, r_tilt = rms(flat.source_data), rms(tilted.source_data)
        np.testing.assert_allclose(r_tilt[0] / r_flat[0], 0.5, atol=1e-12)
        np.testing.assert_allclose(r_tilt[1] / r_flat[1], 1.0, atol=1e-12)

    def test_source_gains_validated(self, leads):
        with pytest.raises(ContractViolation):
            simulate_recording(leads, (2, 9), snr_db=0.0, seed=5,
                               source_gains=np.array([1.0]))
        with pytest.raises(ContractViolation):
            simulate_recording(leads, (2, 9), snr_db=0.0, seed=5,
                               source_gains=np.array([1.0, -1.0]))

    def test_recording_validation(self):
        with pytest.raises(ContractViolation):
            Recording(pre=np.zeros((3, 0)), post=np.zeros((3, 5)),
                      source_data=np.zeros((1, 5)), theta0=(0,),
                      snr_db=0.0, achieved_snr_db=0.0, seed=0)


class TestEstimateCov:
    def test_constant_block_is_zero(self):
        block = np.ones((3, 50))
        np.testing.assert_array_equal(estimate_cov(block), np.zeros((3, 3)))

    def test_two_sample_hand_value(self):
        """Samples (1, -1), mean-centered, divisor T-1 = 1: variance 2."""
        block = np.array([[1.0, -1.0]])
        np.testing.assert_allclose(estimate_cov(block), [[2.0]])

    def test_divisor_n(self):
        block = np.array([[1.0, -1.0]])
        np.testing.assert_allclose(estimate_cov(block, divisor="n"), [[1.0]])

    def test_lln_white_noise(self):
        rng = np.random.default_rng(0)
        block = rng.standard_normal((4, 100_000))
        cov = estimate_cov(block)
        rel = np.linalg.norm(cov - np.eye(4)) / np.linalg.norm(np.eye(4))
        assert rel < 0.05

    def test_bad_divisor_rejected(self):
        with pytest.raises(ContractViolation):
            estimate_cov(np.ones((2, 4)), divisor="T")


class TestRegularizePd:
    def test_zero_matrix_flagged_not_raised(self):
        """A zero covariance has nothing for a relative ridge to scale
        against; the result stays singular and the flag reports it, but no
        exception escapes."""
        loaded, ok = regularize_pd(np.zeros((4, 4)), ridge_rel=0.01)
        assert not ok
        np.testing.assert_array_equal(loaded, np.zeros((4, 4)))

    def test_identity_nearly_unchanged(self):
        loaded, ok = regularize_pd(np.eye(3), ridge_rel=1e-6)
        assert ok
        np.testing.assert_allclose(loaded, np.eye(3), rtol=1e-5)

    def test_rank_one_becomes_pd(self):
        v = np.array([1.0, 2.0, 3.0])
        c = np.outer(v, v)
        loaded, ok = regularize_pd(c, ridge_rel=1e-6)
        assert ok
        assert np.min(np.linalg.eigvalsh(loaded)) > 0


class TestRecordingSerialization:
    def test_roundtrip(self, tmp_path, leads):
        rec = simulate_recording(leads, (2, 6), snr_db=-3.0, t_pre=40,
                                 t_post=60, seed=13)
        stem = tmp_path / "rec"
        save_recording(rec, stem)
        back = load_recording(stem)
        np.testing.assert_array_equal(back.pre, rec.pre)
        np.testing.assert_array_equal(back.post, rec.post)
        assert back.theta0 == rec.theta0
        assert back.snr_db == rec.snr_db
        assert back.achieved_snr_db == rec.achieved_snr_db
        assert back.seed == rec.seed

    def test_sidecar_files(self, tmp_path, leads):
        rec = simulate_recording(leads, (1,), snr_db=0.0, t_pre=10,
                                 t_post=10, seed=1)
        save_recording(rec, tmp_path / "r")
        assert (tmp_path / "r.csv").is_file()
        assert (tmp_path / "r.json").is_file()
