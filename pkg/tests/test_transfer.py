"""Channel-to-output coefficients: values, identities, symmetries."""

import math

import numpy as np
import pytest

from trimova import model, transfer
from trimova.model import Squeezing
from trimova.transfer import (AMPLITUDE, PHASE, Channel, MeasurementCase,
                              PoleError, swap_channels)

G0, GE = model.reference_rates()


def config(kind="none", frac=0.0, lossless=False, gamma_m=None, K0=None):
    squeeze = Squeezing() if kind == "none" else Squeezing(kind, frac * G0)
    return model.reference_config(squeeze=squeeze, lossless=lossless,
                                  gamma_m=gamma_m, K0=K0)


def grid(cfg, n=60):
    return np.geomspace(1e-3 * cfg.cavity.gamma0, 1e3 * cfg.cavity.gamma0, n)


# --- elementary coefficients ---------------------------------------------------

def test_reflection_gain_ideal_limits():
    cav = config(lossless=True).cavity
    assert transfer.reflection_gain(cav, 0.0, 0.0, +1) == pytest.approx(1.0)
    assert transfer.reflection_gain(cav, 0.0, 0.0, -1) == pytest.approx(1.0)
    w = grid(config(lossless=True))
    for sign in (+1, -1):
        assert np.abs(transfer.reflection_gain(cav, 0.0, w, sign)) == \
            pytest.approx(np.ones_like(w), abs=1e-14)


def test_reflection_gain_direct_value():
    # Independent evaluation by literal complex arithmetic.
    cav = config().cavity
    kappa, w = 0.5 * G0, G0
    got = transfer.reflection_gain(cav, kappa, w, -1)
    expected = complex(G0 - GE - kappa, w) / complex(G0 + GE + kappa, -w)
    assert got == pytest.approx(expected, rel=1e-14)
    got_p = transfer.reflection_gain(cav, kappa, w, +1)
    expected_p = complex(G0 - GE + kappa, w) / complex(G0 + GE - kappa, -w)
    assert got_p == pytest.approx(expected_p, rel=1e-14)


def test_reflection_gain_pole():
    cav = config().cavity
    with pytest.raises(PoleError):
        transfer.reflection_gain(cav, cav.gamma, 0.0, +1)


def test_loss_leakage_values():
    ideal = config(lossless=True).cavity
    assert transfer.loss_leakage(ideal, 0.0, 1234.5, +1) == 0.0
    balanced = model.OpticalCavity(1e5, 1e5, 0.1, 1.2e15)
    assert transfer.loss_leakage(balanced, 0.0, 0.0, -1) == pytest.approx(1.0)


@pytest.mark.parametrize("sign", [+1, -1])
def test_passive_unitarity(sign):
    cfg = config()
    w = grid(cfg)
    xi = transfer.reflection_gain(cfg.cavity, 0.0, w, sign)
    mu = transfer.loss_leakage(cfg.cavity, 0.0, w, sign)
    assert np.max(np.abs(np.abs(xi) ** 2 + np.abs(mu) ** 2 - 1.0)) < 1e-12


def test_degenerate_passive_unitarity():
    cfg = config("degenerate", 0.0)
    w = grid(cfg)
    zeta, sigma, _ = transfer.degenerate_response(cfg, w)
    total = np.abs(zeta) ** 2 + np.abs(sigma) ** 2 * GE / G0
    assert np.max(np.abs(total - 1.0)) < 1e-12


def test_optomechanical_gain_limits():
    ideal = config(lossless=True)
    assert transfer.optomechanical_gain(ideal, 0.0) == \
        pytest.approx(ideal.derived.K0)
    pumped = config("two_photon", 0.9)
    assert abs(transfer.optomechanical_gain(pumped, 0.0)) > \
        abs(transfer.optomechanical_gain(pumped, 0.0, rate=0.0))
    far = transfer.optomechanical_gain(pumped, 1e4 * G0)
    assert abs(far) < 1e-6 * pumped.derived.K0


def test_optomechanical_gain_pole():
    cfg = config("two_photon", (G0 - GE) / G0)
    with pytest.raises(PoleError):
        transfer.optomechanical_gain(cfg, 0.0)


def test_degenerate_response_limits():
    ideal = config("degenerate", 0.0, lossless=True)
    zeta, sigma, strength = transfer.degenerate_response(ideal, 0.0)
    assert zeta == pytest.approx(1.0)
    assert strength == pytest.approx(ideal.derived.N0)
    # |zeta(0)| decreases monotonically as the pump grows.
    mags = []
    for frac in (0.1, 0.4, 0.7, 0.95):
        cfg = config("degenerate", frac)
        z, _, _ = transfer.degenerate_response(cfg, 0.0)
        mags.append(abs(z))
    assert all(a > b for a, b in zip(mags, mags[1:]))


def test_degenerate_drive_normalization():
    cfg = config("degenerate", 0.5)
    cav = cfg.cavity
    assert cfg.derived.N0 == pytest.approx(
        cfg.derived.K0 * (cav.gamma0 - cav.gamma_e) / cav.gamma, rel=1e-14)


# --- full output vectors ---------------------------------------------------------

def test_sum_port_has_no_mechanical_content():
    cfg = config("two_photon", 0.5)
    tv = transfer.output_transfer(cfg, MeasurementCase(AMPLITUDE, "sum"), G0)
    assert tv.coeffs[Channel.SIGNAL] == 0
    assert tv.coeffs[Channel.THERMAL] == 0
    assert tv.coeffs[Channel.ALPHA_PLUS] != 0
    with pytest.raises(ValueError):
        tv.signal_referenced()


def test_difference_port_back_action_ideal():
    # gamma_e = 0, kappa = 0: the coefficient on the driving vacuum equals
    # -(reflection) * (pump response) / (gamma_m - i Omega), checked by
    # literal arithmetic.
    cfg = config(lossless=True)
    w = 0.3 * G0
    gm = cfg.mechanical.gamma_m
    g = cfg.cavity.gamma
    tv = transfer.output_transfer(cfg, MeasurementCase(AMPLITUDE, "difference"), w)
    xi = complex(g, w) / complex(g, -w)
    pump = cfg.derived.K0 * g * g / (g**2 - (-1j * w) ** 2)
    expected = -xi * pump / complex(gm, -w)
    assert tv.coeffs[Channel.ALPHA_PLUS] == pytest.approx(expected, rel=1e-12)


def test_thermal_tracks_signal():
    for kind, frac in [("two_photon", 0.5), ("degenerate", 0.5), ("none", 0.0)]:
        cfg = config(kind, frac)
        gm = cfg.mechanical.gamma_m
        for port in ("difference", "subtracted"):
            tv = transfer.output_transfer(cfg, MeasurementCase(AMPLITUDE, port),
                                          0.7 * G0)
            assert tv.coeffs[Channel.THERMAL] == pytest.approx(
                math.sqrt(2 * gm) * tv.coeffs[Channel.SIGNAL], rel=1e-13)


def test_signal_referencing():
    cfg = config("two_photon", 0.5)
    tv = transfer.output_transfer(cfg, MeasurementCase(AMPLITUDE, "difference"),
                                  0.2 * G0)
    ref = tv.signal_referenced()
    assert ref.coeffs[Channel.SIGNAL] == 1.0
    assert ref.referenced
    sig = tv.coeffs[Channel.SIGNAL]
    assert ref.coeffs[Channel.ALPHA_MINUS] == \
        pytest.approx(tv.coeffs[Channel.ALPHA_MINUS] / sig, rel=1e-14)


def test_subtraction_complete_without_loss():
    cfg = config("two_photon", 0.5, lossless=True)
    tv = transfer.subtracted_transfer(cfg, 0.05 * G0)
    scale = max(abs(v) for v in tv.coeffs.values())
    assert abs(tv.coeffs[Channel.ALPHA_PLUS]) <= 1e-14 * scale
    assert abs(tv.coeffs[Channel.EPS_PLUS]) <= 1e-14 * scale


def test_subtraction_residual_with_loss():
    cfg = config("two_photon", 0.5)
    w = 0.05 * G0
    tv = transfer.subtracted_transfer(cfg, w)
    scale = max(abs(v) for v in tv.coeffs.values())
    assert abs(tv.coeffs[Channel.ALPHA_PLUS]) <= 1e-14 * scale
    assert abs(tv.coeffs[Channel.EPS_PLUS]) > 0
    # Residual: (reflection * pump)/(gamma_m - i*Omega) * sqrt(ge/g0) divided
    # by the antisqueezed reflection (literal arithmetic).
    gm = cfg.mechanical.gamma_m
    k = cfg.squeeze.rate
    xi_pump = cfg.derived.K0 * (G0 + GE) * (G0 - GE) / complex(G0 + GE + k, -w) ** 2
    xi_plus = complex(G0 - GE + k, w) / complex(G0 + GE - k, -w)
    expected = xi_pump / complex(gm, -w) * math.sqrt(GE / G0) / xi_plus
    assert tv.coeffs[Channel.EPS_PLUS] == pytest.approx(expected, rel=1e-12)


def test_subtraction_nulling_across_parameters():
    for kind, frac in [("two_photon", 0.3), ("two_photon", 0.9),
                       ("degenerate", 0.5), ("none", 0.0)]:
        cfg = config(kind, frac)
        w = grid(cfg, 25)
        coeffs = transfer.transfer_coefficients(
            cfg, MeasurementCase(AMPLITUDE, "subtracted"), w)
        scale = np.max([np.abs(v) for v in coeffs.values()])
        assert np.max(np.abs(coeffs[Channel.ALPHA_PLUS])) <= 1e-14 * scale


def test_degenerate_residual_bracket():
    # The loss residual of the degenerate subtraction equals
    # -(1/zeta)*sqrt(ge/g0) relative to the back-action prefactor.
    cfg = config("degenerate", 0.6)
    w = 0.02 * G0
    tv = transfer.subtracted_transfer(cfg, w)
    zeta, _, strength = transfer.degenerate_response(cfg, w)
    prefactor = -strength / complex(cfg.mechanical.gamma_m, -w)
    bracket = tv.coeffs[Channel.EPS_PLUS] / prefactor
    assert bracket == pytest.approx(-math.sqrt(GE / G0) / zeta, rel=1e-12)


def test_family_symmetry():
    # Amplitude-family coefficients equal phase-family coefficients at the
    # swapped ports, under the sum/difference channel relabelling.
    cfg = config("two_photon", 0.7)
    w = grid(cfg, 20)
    pairs = [(("difference", AMPLITUDE), ("sum", PHASE)),
             (("sum", AMPLITUDE), ("difference", PHASE)),
             (("subtracted", AMPLITUDE), ("subtracted", PHASE))]
    for (port_a, fam_a), (port_p, fam_p) in pairs:
        a = transfer.transfer_coefficients(cfg, MeasurementCase(fam_a, port_a), w)
        p = swap_channels(transfer.transfer_coefficients(
            cfg, MeasurementCase(fam_p, port_p), w))
        for ch in Channel:
            assert np.allclose(a[ch], p[ch], rtol=1e-13, atol=0)


def test_conjugate_symmetry():
    for kind, frac, fam in [("two_photon", 0.5, AMPLITUDE),
                            ("two_photon", 0.5, PHASE),
                            ("degenerate", 0.4, AMPLITUDE),
                            ("degenerate", 0.4, PHASE)]:
        cfg = config(kind, frac)
        w = np.array([0.01, 0.3, 2.0]) * G0
        for port in ("sum", "difference", "subtracted"):
            case = MeasurementCase(fam, port)
            plus = transfer.transfer_coefficients(cfg, case, w)
            minus = transfer.transfer_coefficients(cfg, case, -w)
            for ch in Channel:
                assert np.allclose(minus[ch], np.conj(plus[ch]), rtol=1e-13,
                                   atol=1e-300)


def test_general_angle_identities():
    # An angle of 0 reproduces the amplitude family exactly; pi/2 reproduces
    # the phase family at the partnered port under the rotated-channel
    # labelling (the rotation flips the second mode's phase quadrature, so
    # lab ports pair across families).
    cfg = config("two_photon", 0.5)
    w = 0.1 * G0
    for port in ("sum", "difference", "subtracted"):
        amp = transfer.transfer_coefficients(cfg, MeasurementCase(AMPLITUDE, port), w)
        gen0 = transfer.transfer_coefficients(cfg, MeasurementCase(0.0, port), w)
        for ch in Channel:
            assert gen0[ch] == amp[ch]
        phase_port = {"sum": "difference", "difference": "sum",
                      "subtracted": "subtracted"}[port]
        ph = transfer.transfer_coefficients(
            cfg, MeasurementCase(PHASE, phase_port), w)
        gen90 = transfer.transfer_coefficients(
            cfg, MeasurementCase(math.pi / 2, port), w)
        swapped = swap_channels(ph)
        for ch in Channel:
            assert gen90[ch] == pytest.approx(swapped[ch], rel=1e-13, abs=1e-300)


def test_general_angle_parts():
    cfg = config("two_photon", 0.5)
    w, phi = 0.2 * G0, 0.7
    amp_part, phase_part = transfer.general_angle_parts(cfg, w, phi)
    amp = transfer.transfer_coefficients(
        cfg, MeasurementCase(AMPLITUDE, "difference"), w)
    ph = transfer.transfer_coefficients(cfg, MeasurementCase(PHASE, "sum"), w)
    general = transfer.transfer_coefficients(
        cfg, MeasurementCase(phi, "difference"), w)
    for ch in Channel:
        assert amp_part[ch] == math.cos(phi) * amp[ch]
        assert phase_part[ch] == math.sin(phi) * ph[ch]
        # The two parts add in quadrature to the collapsed coefficient.
        combined = abs(amp_part[ch]) ** 2 + abs(phase_part[transfer._SWAP[ch]]) ** 2
        assert combined == pytest.approx(abs(general[ch]) ** 2, rel=1e-12,
                                         abs=1e-300)


def test_general_angle_degenerate_rejected():
    cfg = config("degenerate", 0.5)
    with pytest.raises(ValueError, match="families"):
        transfer.transfer_coefficients(cfg, MeasurementCase(0.7, "difference"),
                                       0.1 * G0)
    # Multiples of pi/2 remain well defined.
    transfer.transfer_coefficients(cfg, MeasurementCase(math.pi / 2, "sum"),
                                   0.1 * G0)


def test_channel_set_closed():
    cfg = config("two_photon", 0.5)
    tv = transfer.output_transfer(cfg, MeasurementCase(AMPLITUDE, "difference"),
                                  0.1 * G0)
    assert set(tv.coeffs) == set(Channel)
