"""Parameter validation and derived constants."""
import math

import numpy as np
import pytest
from scipy.special import gamma as sp_gamma

from mixedfbm.errors import DomainError
from mixedfbm.model import HurstPair, ModelParams, derive_constants


def constants_for(h1, h2, sigma=1.0):
    return derive_constants(ModelParams(hurst=HurstPair(h1, h2), sigma=sigma))


class TestHurstPair:
    def test_valid_pair(self):
        hp = HurstPair(0.6, 0.9)
        assert hp.h1 == 0.6 and hp.h2 == 0.9

    @pytest.mark.parametrize("h1,h2,fragment", [
        (0.5, 0.9, "h1"),
        (0.45, 0.9, "h1"),
        (0.7, 0.7, "h2"),
        (0.7, 0.65, "h2"),
        (0.6, 1.0, "h2"),
    ])
    def test_invalid_pairs_name_the_inequality(self, h1, h2, fragment):
        with pytest.raises(DomainError) as exc:
            HurstPair(h1, h2)
        assert fragment in str(exc.value)

    def test_solver_admissibility_gate(self):
        assert HurstPair(0.6, 0.9).solver_admissible
        assert HurstPair(0.6, 0.851).solver_admissible
        assert not HurstPair(0.6, 0.7).solver_admissible
        assert not HurstPair(0.6, 0.85).solver_admissible
        HurstPair(0.55, 0.95).require_solver_admissible()
        with pytest.raises(DomainError):
            HurstPair(0.7, 0.9).require_solver_admissible()

    def test_params_validation(self):
        hp = HurstPair(0.6, 0.9)
        with pytest.raises(DomainError):
            ModelParams(hurst=hp, sigma=0.0)
        with pytest.raises(DomainError):
            ModelParams(hurst=hp, sigma=-1.0)
        with pytest.raises(DomainError):
            ModelParams(hurst=hp, horizon_T=0.0)


class TestDerivedConstants:
    def test_alpha_exact(self):
        cons = constants_for(0.75, 0.9)
        assert cons.alpha_h1 == 0.75 * 0.5
        assert cons.alpha_h1 == 0.375

    def test_script_b_gamma_ratio(self):
        # B(3/4, 3/4) through an independent gamma-function route
        cons = constants_for(0.75, 0.9)
        expect = sp_gamma(0.75) ** 2 / sp_gamma(1.5)
        assert math.isclose(cons.script_b, expect, rel_tol=1e-12)

    # frozen from the weighted double-integral variance oracle: gamma^2
    # equals the squared normalizer that makes the bridged martingale
    # variance come out as epsilon * t^(2-2h1)
    @pytest.mark.parametrize("h1,gamma,eps", [
        (0.55, 1.0486395177434811, 1.2218275979703118),
        (0.60, 1.0939107049858326, 1.4958007881032516),
        (0.70, 1.1670995593473755, 2.2702023023813966),
        (0.75, 1.1880764747190656, 2.8230514195617652),
    ])
    def test_gamma_and_epsilon_frozen(self, h1, gamma, eps):
        cons = constants_for(h1, 0.96)
        assert math.isclose(cons.gamma_h1, gamma, rel_tol=1e-12)
        assert math.isclose(cons.epsilon_h1, eps, rel_tol=1e-12)

    def test_gamma_closed_form_identity(self):
        # beta_h * B(h-1/2, 3/2-h) squared == 2h G(3/2-h)^3 G(h+1/2) / G(2-2h)
        for h1 in np.linspace(0.52, 0.93, 12):
            cons = constants_for(h1, 0.97)
            g2 = (2.0 * h1 * sp_gamma(1.5 - h1) ** 3 * sp_gamma(h1 + 0.5)
                  / sp_gamma(2.0 - 2.0 * h1))
            assert math.isclose(cons.gamma_h1 ** 2, g2, rel_tol=1e-12)
            assert math.isclose(cons.epsilon_h1,
                                cons.gamma_h1 ** 2 / (2.0 - 2.0 * h1),
                                rel_tol=1e-14)

    def test_drift_normalizer_wiring(self):
        cons = constants_for(0.6, 0.9, sigma=2.0)
        g, b = cons.gamma_h1, cons.script_b
        assert math.isclose(cons.delta_paper, 0.8 * b / (2.0 * g), rel_tol=1e-14)
        assert math.isclose(cons.drift_norm, 0.8 * b / (2.0 * g * g), rel_tol=1e-14)
        assert math.isclose(cons.drift_norm, cons.delta_paper / g, rel_tol=1e-14)

    def test_scale_functions(self):
        cons = constants_for(0.6, 0.9, sigma=2.0)
        gap = 2.0 * (0.9 - 0.6)
        for T in (1.0, 5.0, 125.0):
            assert math.isclose(cons.mu_of_T(T), T ** gap, rel_tol=1e-14)
            assert math.isclose(cons.lambda_of_T(T),
                                T ** gap / (4.0 * cons.gamma_h1 ** 2),
                                rel_tol=1e-14)

    def test_as_dict_serializable(self):
        cons = constants_for(0.6, 0.9)
        d = cons.as_dict()
        assert d["h1"] == 0.6 and d["h2"] == 0.9
        for v in d.values():
            assert isinstance(v, float)
