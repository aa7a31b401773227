import numpy as np
import pytest

from edmloc import dsp, srp

FS = 16000.0
NU = 343.0


def delayed_signals(base, mics, src, rng=None, extra=None):
    """Anechoic free-field signals: the base delayed by each path length."""
    spec = np.fft.rfft(base)
    f = np.fft.rfftfreq(base.size)
    out = []
    for m in range(mics.shape[1]):
        delay = np.linalg.norm(mics[:, m] - src) / NU * FS
        out.append(np.fft.irfft(spec * np.exp(-2j * np.pi * f * delay), base.size))
    return np.stack(out)


def all_pairs(signals, cfg):
    specs = [dsp.stft(s, cfg) for s in signals]
    return [
        dsp.phat_cross_spectrum(specs[i], specs[j], cfg, pair=(i, j))
        for i in range(len(specs))
        for j in range(i)
    ]


def unit_cross_spectra(n_mics, n_frames=3, dft_len=1024):
    return [
        dsp.CrossSpectrum(
            values=np.ones((dft_len // 2 + 1, n_frames), dtype=complex),
            dft_len=dft_len,
            sample_rate=FS,
            pair=(i, j),
        )
        for i in range(n_mics)
        for j in range(i)
    ]


class TestGridConfig:
    def test_counts_inclusive(self):
        axes = [srp._inclusive_axis(d, 0.1) for d in (6.0, 6.0, 2.4)]
        assert [a.size for a in axes] == [61, 61, 25]
        assert srp._grid_points(axes).shape == (61 * 61 * 25, 3)

    def test_validation(self):
        with pytest.raises(ValueError):
            srp.SrpGridConfig(room_dims=(6, 6))
        with pytest.raises(ValueError):
            srp.SrpGridConfig(room_dims=(6, 6, 2.4), fine_step=0.2)
        with pytest.raises(ValueError):
            srp.SrpGridConfig(room_dims=(6, 6, 2.4), refine_count=0)


class TestSrpFunctional:
    def test_all_ones_spectrum_at_equidistant_point(self):
        # regular tetrahedron: its center is equidistant from all mics, so
        # every pair delay vanishes and the score hits pairs * frames * K
        mics = np.array([[1, 1, -1, -1], [1, -1, 1, -1], [1, -1, -1, 1]], float) + 2.0
        cross = unit_cross_spectra(4, n_frames=3)
        score = srp.srp_functional([2.0, 2.0, 2.0], cross, mics)
        assert abs(score - 6 * 3 * 1024) < 1e-6

    def test_single_pair_peaks_at_matching_delay(self):
        # synthetic pure-delay spectrum: psi_{1,0}[k] = exp(-2j pi k n0 / K);
        # along a probe line parallel to the baseline the modelled pair
        # delay is monotone, so the functional peaks where it crosses n0/fs
        mics = np.zeros((3, 2))
        mics[0, 1] = 2.0
        n0 = 10.0
        k = 1024
        psi = np.exp(-2j * np.pi * np.arange(k // 2 + 1) * n0 / k)[:, None]
        cross = [dsp.CrossSpectrum(psi, k, FS, pair=(1, 0))]

        def tau_samples(x):
            p = np.array([x, 1.0, 0.0])
            return (
                (np.linalg.norm(p - mics[:, 1]) - np.linalg.norm(p - mics[:, 0]))
                / NU
                * FS
            )

        xs = np.linspace(-3.0, 3.0, 1201)
        scores = [srp.srp_functional([x, 1.0, 0.0], cross, mics) for x in xs]
        x_star = xs[int(np.argmin([abs(tau_samples(x) - n0) for x in xs]))]
        assert abs(xs[int(np.argmax(scores))] - x_star) < 0.02

    def test_functional_matches_batch_scorer(self, rng):
        mics = rng.uniform(0.5, 3.0, (3, 4))
        signals = delayed_signals(rng.standard_normal(6000), mics, np.array([2.0, 1.5, 1.0]))
        cfg = dsp.StftConfig()
        cross = all_pairs(signals, cfg)
        ordered = srp._check_pairs(cross, 4)
        entries = [(cs.pair, srp._folded_coefficients(cs)) for cs in ordered]
        pts = rng.uniform(0.2, 3.2, (10, 3))
        batch = srp._pair_scores(pts, mics, entries, FS, 1024, NU)
        for i, p in enumerate(pts):
            single = srp.srp_functional(p, cross, mics)
            assert abs(single - batch[i]) <= 1e-9 * max(1.0, abs(single))

    def test_missing_pair_rejected(self):
        cross = unit_cross_spectra(4)[:-1]
        with pytest.raises(ValueError):
            srp.srp_functional([1.0, 1.0, 1.0], cross, np.zeros((3, 4)) + 1.0)

    def test_sign_convention_known_delay(self, rng):
        # mic 1 is farther, so the pair (1, 0) correlation peaks at positive
        # delay; steering must therefore score the true source higher than
        # its mirror image
        mics = np.array([[1.0, 1.0], [1.0, 2.2], [1.0, 1.0]])
        src = np.array([1.0, 0.4, 1.0])  # closer to mic 0
        mirror = np.array([1.0, 2.8, 1.0])  # same |delay| with flipped sign
        signals = delayed_signals(rng.standard_normal(8000), mics, src)
        cross = all_pairs(signals, dsp.StftConfig())
        at_src = srp.srp_functional(src, cross, mics)
        at_mirror = srp.srp_functional(mirror, cross, mics)
        assert at_src > 1.5 * at_mirror


class TestSrpLocalize:
    def test_anechoic_recovery(self, rng):
        mics = rng.uniform(1.5, 3.5, (3, 6))
        mics[2] = rng.uniform(0.8, 1.6, 6)
        src = np.array([2.0, 3.0, 1.2])
        signals = delayed_signals(rng.standard_normal(2 * 16000), mics, src)
        cross = all_pairs(signals, dsp.StftConfig())
        grid = srp.SrpGridConfig(room_dims=(6.0, 6.0, 2.4))
        res = srp.srp_localize(cross, mics, grid)
        assert np.linalg.norm(res.position - src) <= 0.01 * np.sqrt(3) + 1e-9
        assert len(res.coarse_argmax_list) == 3
        # the winning fine point can only improve on the coarse maximum
        # (up to the last-bit difference of the lattice coordinates)
        assert res.score >= res.coarse_argmax_list[0][1] * (1 - 1e-9)

    def test_permutation_invariance(self, rng):
        mics = rng.uniform(1.0, 3.0, (3, 5))
        src = np.array([1.7, 2.4, 1.9])
        signals = delayed_signals(rng.standard_normal(16000), mics, src)
        cfg = dsp.StftConfig()
        grid = srp.SrpGridConfig(room_dims=(4.0, 4.0, 4.0))
        res = srp.srp_localize(all_pairs(signals, cfg), mics, grid)
        perm = np.array([3, 0, 4, 2, 1])
        res_p = srp.srp_localize(all_pairs(signals[perm], cfg), mics[:, perm], grid)
        np.testing.assert_allclose(res_p.position, res.position)
        assert abs(res_p.score - res.score) <= 1e-9 * abs(res.score)

    def test_reduces_to_single_pass_when_steps_equal(self, rng):
        mics = rng.uniform(0.2, 0.8, (3, 4))
        src = np.array([0.55, 0.3, 0.35])
        signals = delayed_signals(rng.standard_normal(8000), mics, src)
        cross = all_pairs(signals, dsp.StftConfig())
        grid = srp.SrpGridConfig(
            room_dims=(1.0, 1.0, 0.5),
            coarse_step=0.1,
            fine_step=0.1,
            refine_count=10**6,
            fine_halfwidth=0.1,
        )
        res = srp.srp_localize(cross, mics, grid)
        axes = [srp._inclusive_axis(d, 0.1) for d in grid.room_dims]
        pts = srp._grid_points(axes)
        ordered = srp._check_pairs(cross, 4)
        entries = [(cs.pair, srp._folded_coefficients(cs)) for cs in ordered]
        scores = srp._pair_scores(pts, mics, entries, FS, 1024, NU)
        np.testing.assert_allclose(res.position, pts[np.argmax(scores)])

    def test_tie_breaks_lexicographic(self):
        # all-ones spectra with two mics at the same point: every grid point
        # scores identically, so the origin must win
        mics = np.full((3, 4), 1.0)
        cross = unit_cross_spectra(4)
        grid = srp.SrpGridConfig(room_dims=(1.0, 1.0, 1.0), coarse_step=0.5, fine_step=0.25)
        res = srp.srp_localize(cross, mics, grid)
        np.testing.assert_allclose(res.position, [0.0, 0.0, 0.0])

    def test_inconsistent_settings_rejected(self):
        cross = unit_cross_spectra(4)
        cross[2] = dsp.CrossSpectrum(cross[2].values, 512, FS, cross[2].pair)
        with pytest.raises(ValueError):
            srp.srp_localize(cross, np.ones((3, 4)), srp.SrpGridConfig(room_dims=(1, 1, 1)))

    def test_truth_dominates_every_evaluated_point(self, rng):
        # noise-free free-field scene: the score at the true source bounds
        # the score of every grid point the search evaluates
        mics = rng.uniform(1.0, 4.0, (3, 6))
        mics[2] = rng.uniform(0.5, 1.9, 6)
        src = np.array([2.6, 1.9, 1.3])
        signals = delayed_signals(rng.standard_normal(16000), mics, src)
        cross = all_pairs(signals, dsp.StftConfig())
        grid = srp.SrpGridConfig(room_dims=(6.0, 6.0, 2.4))
        at_truth = srp.srp_functional(src, cross, mics)
        ordered = srp._check_pairs(cross, 6)
        entries = [(cs.pair, srp._folded_coefficients(cs)) for cs in ordered]
        axes = [srp._inclusive_axis(d, grid.coarse_step) for d in grid.room_dims]
        scores = srp._pair_scores(srp._grid_points(axes), mics, entries, FS, 1024, NU)
        assert at_truth >= scores.max()
        res = srp.srp_localize(cross, mics, grid)
        assert at_truth >= res.score
