import math

import numpy as np
import pytest

import oracles
from ntfp import analytics as an
from ntfp.chipsim import (RNG_ALGORITHM, clopper_pearson, monte_carlo_ber, monte_carlo_keyfail, new_chip,
                          remeasure)
from ntfp.core import TransformParams, dnorm_enroll, fhd, snorm_enroll, uniformity
from ntfp.errors import InvalidArgument

KIB = 8192


class TestChip:
    def test_deterministic(self):
        a = new_chip(4096, 0.1, seed=5)
        b = new_chip(4096, 0.1, seed=5)
        assert np.array_equal(a.enrollment.bits, b.enrollment.bits)
        assert np.array_equal(remeasure(a, 3).bits, remeasure(b, 3).bits)

    def test_zero_noise(self):
        chip = new_chip(4096, 0.0, seed=1)
        assert np.array_equal(remeasure(chip, 1).bits, chip.enrollment.bits)

    def test_full_noise_complements(self):
        chip = new_chip(4096, 1.0, seed=1)
        assert np.array_equal(remeasure(chip, 1).bits, 1 - chip.enrollment.bits)

    def test_weight_concentration(self):
        size = 512 * KIB
        chip = new_chip(size, 0.0, seed=2)
        w = int(chip.enrollment.bits.sum())
        assert abs(w - size / 2) <= 4 * math.sqrt(size / 4)

    def test_remeasure_fhd(self):
        size = 64 * KIB
        chip = new_chip(size, 0.0609, seed=3)
        d = fhd(chip.enrollment, remeasure(chip, 1))
        assert abs(d - 0.0609) <= 4 * math.sqrt(0.0609 * (1 - 0.0609) / size)

    def test_independent_subseeds(self):
        chip = new_chip(8 * KIB, 0.05, seed=4)
        a, b = remeasure(chip, 1, sub_seed=10), remeasure(chip, 1, sub_seed=11)
        assert not np.array_equal(a.bits, b.bits)

    def test_t_index_zero_reserved(self):
        with pytest.raises(InvalidArgument):
            remeasure(new_chip(64, 0.1, 0), 0)

    def test_zero_size(self):
        with pytest.raises(InvalidArgument):
            new_chip(0, 0.1, 0)

    def test_tiny_rate_path(self):
        chip = new_chip(1 << 20, 1e-7, seed=9)
        d = int((remeasure(chip, 1).bits != chip.enrollment.bits).sum())
        assert d <= 10


class TestClopperPearson:
    def test_bounds_bracket_rate(self):
        lo, hi = clopper_pearson(30, 1000)
        assert lo < 0.03 < hi

    def test_zero_errors(self):
        lo, hi = clopper_pearson(0, 1000)
        assert lo == 0.0
        assert hi == pytest.approx(1 - 0.01 ** (1 / 1000), rel=1e-9)


class TestMonteCarlo:
    def test_zero_noise_no_errors(self):
        res = monte_carlo_ber(TransformParams.dnorm(32, 16, 4), 0.0, 64 * KIB, 5)
        assert res.errors == 0 and res.bit_evaluations > 0

    def test_empty_selection(self):
        res = monte_carlo_ber(TransformParams.snorm(31, 15), 0.1, 4 * KIB, 3)
        assert res.empty and res.bit_evaluations == 0
        assert not res.within_bound(1.0)

    def test_metadata_records_rng(self):
        res = monte_carlo_ber(TransformParams.snorm(15, 1), 0.05, 8 * KIB, 2, seed=3)
        assert res.metadata["rng"] == RNG_ALGORITHM
        assert res.to_record()["seed"] == 3

    def test_jobs_do_not_change_totals(self):
        tp = TransformParams.dnorm(32, 4, 2)
        a = monte_carlo_ber(tp, 0.0609, 16 * KIB, 300, seed=11, jobs=1)
        b = monte_carlo_ber(tp, 0.0609, 16 * KIB, 300, seed=11, jobs=4)
        assert (a.errors, a.bit_evaluations) == (b.errors, b.bit_evaluations)

    def test_snorm_theta_zero_matches_exact_model_bound(self):
        res = monte_carlo_ber(TransformParams.snorm(15, 0), 0.0609, 64 * KIB, 30, seed=2)
        exact = float(oracles.snorm_ber(15, 0, oracles.Fraction(0.0609)))
        assert res.ci_upper_99 <= exact

    def test_dnorm_upper_bound_spot(self):
        tp = TransformParams.dnorm(32, 16, 4)
        res = monte_carlo_ber(tp, 0.0609, 64 * KIB, 1000, seed=5)
        assert res.bit_evaluations >= 10**6
        assert res.within_bound(an.dnorm_ber(32, 4, 0.0609))

    def test_keyfail_zero_noise(self):
        res = monte_carlo_keyfail(TransformParams.dnorm(32, 16, 2), 0.0, 128, 50)
        assert res.errors == 0

    def test_keyfail_k1_matches_bit_rate(self):
        # a one-block chip so both harnesses look at the same single bit
        tp = TransformParams.dnorm(16, 8, 1)
        chip = new_chip(16 * 8, 0.0609, seed=8)
        kf = monte_carlo_keyfail(tp, 0.0609, 1, 20000, seed=8, chip=chip)
        br = monte_carlo_ber(tp, 0.0609, chip.size_bits, 20000, seed=9, chip=chip)
        assert kf.selected_bits == br.selected_bits == 1
        assert kf.ci_lower_99 <= br.ci_upper_99 and br.ci_lower_99 <= kf.ci_upper_99

    def test_keyfail_insufficient_yield(self):
        res = monte_carlo_keyfail(TransformParams.dnorm(32, 16, 20), 0.0609, 128, 10, chip_size=8 * KIB)
        assert res.empty and res.metadata["available_bits"] < 128

    def test_trials_validation(self):
        with pytest.raises(InvalidArgument):
            monte_carlo_ber(TransformParams.snorm(15, 1), 0.1, 1024, 0)


class TestSelectionStatistics:
    def test_snorm_selected_count(self):
        size = 64 * KIB
        chip = new_chip(size, 0.0, seed=21)
        mask, _ = snorm_enroll(chip.enrollment, TransformParams.snorm(31, 12))
        groups = size // 31
        p = float(oracles.snorm_select(31, 12))
        assert abs(len(mask) - groups * p) <= 3 * math.sqrt(groups * p * (1 - p)) + 1
        # the efficiency model predicts the same count up to the partial tail group
        assert abs(an.snorm_efficiency(31, 12) * 64 - groups * p) < p + 1e-12

    def test_dnorm_selected_count(self):
        size = 64 * KIB
        chip = new_chip(size, 0.0, seed=22)
        mask, _ = dnorm_enroll(chip.enrollment, TransformParams.dnorm(32, 16, 16))
        blocks = size // (32 * 16)
        p = 0.1242 * 32 * 16 / KIB
        assert abs(len(mask) - blocks * p) <= 3 * math.sqrt(blocks * p * (1 - p))

    def test_dnorm_uniformity(self):
        chip = new_chip(1024 * KIB, 0.0, seed=23)
        _, fp = dnorm_enroll(chip.enrollment, TransformParams.dnorm(16, 4, 2))
        k = fp.k
        assert abs(uniformity(fp) - 0.5) <= 3 * math.sqrt(0.25 / k)
