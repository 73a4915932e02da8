"""Per-frequency transfer coefficients from noise/signal channels to outputs.

The two side-mode outputs are detected separately; sums and differences of
their quadratures form the working ports.  For each spectral frequency Omega
this module gives the complex coefficient with which every input channel
(input-port vacuum, internal-loss vacuum, mechanical thermal force, signal
force) appears in a chosen output combination:

* raw ports ("sum"/"difference" of the selected quadrature family), and
* the "subtracted" combination: the measured port plus a filtered copy of the
  reference port, the filter chosen so that the input-vacuum back-action
  channel cancels exactly.  With internal loss the cancellation is partial: a
  loss-vacuum residual survives.

All four squeezing/family variants share one algebraic shape.  Writing
D(r) = gamma0 + gamma_e + r - i*Omega, the measured port responds through
D(r_own) and the reference port through D(r_ref), with

    two-photon (rate kappa):        r_own = +kappa, r_ref = -kappa
    degenerate (rate upsilon):      r_own = r_ref = +upsilon  (amplitude)
                                    r_own = r_ref = -upsilon  (phase)

and the back-action/measurement strength K0*gamma*(gamma0-gamma_e)/D(r_own)^2.
Two-photon squeezing keeps its coefficients under the amplitude<->phase swap;
only the roles of the lab ports exchange.

Conventions: Fourier kernel exp(-i*Omega*t), so every coefficient obeys
c(-Omega) = conj(c(Omega)).  Square roots take the principal branch (the
back-action denominators have positive real part for stable configs, so
sqrt(strength) = sqrt(K0*gamma*(gamma0-gamma_e))/D); only magnitudes enter
spectral densities, so the branch affects no observable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .model import OpticalCavity, SystemConfig


class PoleError(ArithmeticError):
    """Evaluation at a pole of the coefficient (stability boundary)."""


class Channel(str, Enum):
    """Input channels of one quadrature family; the set is closed."""

    ALPHA_PLUS = "alpha_plus"    # input vacuum, sum combination
    ALPHA_MINUS = "alpha_minus"  # input vacuum, difference combination
    EPS_PLUS = "eps_plus"        # loss vacuum, sum combination
    EPS_MINUS = "eps_minus"      # loss vacuum, difference combination
    THERMAL = "thermal"          # mechanical bath force
    SIGNAL = "signal"            # signal force


VACUUM_CHANNELS = (Channel.ALPHA_PLUS, Channel.ALPHA_MINUS,
                   Channel.EPS_PLUS, Channel.EPS_MINUS)

AMPLITUDE = "amplitude"
PHASE = "phase"

_SWAP = {
    Channel.ALPHA_PLUS: Channel.ALPHA_MINUS,
    Channel.ALPHA_MINUS: Channel.ALPHA_PLUS,
    Channel.EPS_PLUS: Channel.EPS_MINUS,
    Channel.EPS_MINUS: Channel.EPS_PLUS,
    Channel.THERMAL: Channel.THERMAL,
    Channel.SIGNAL: Channel.SIGNAL,
}


def swap_channels(coeffs: dict) -> dict:
    """Exchange sum/difference channel labels (thermal and signal fixed)."""
    return {_SWAP[ch]: v for ch, v in coeffs.items()}


@dataclass(frozen=True)
class MeasurementCase:
    """Which output combination is measured.

    family: "amplitude", "phase", or a homodyne angle in radians (0 is
    amplitude, pi/2 is phase).  port: "sum", "difference", or "subtracted";
    subtraction always acts on the mechanically coupled port (the difference
    port for the amplitude family, the sum port for phase).
    """

    family: object = AMPLITUDE
    port: str = "difference"

    def __post_init__(self):
        if isinstance(self.family, str):
            if self.family not in (AMPLITUDE, PHASE):
                raise ValueError(f"unknown quadrature family {self.family!r}")
        else:
            float(self.family)
        if self.port not in ("sum", "difference", "subtracted"):
            raise ValueError(f"unknown port {self.port!r}")


@dataclass
class TransferVector:
    """Coefficients of all channels at one spectral frequency."""

    omega: float
    coeffs: dict
    referenced: bool = False

    def signal_referenced(self) -> "TransferVector":
        sig = self.coeffs[Channel.SIGNAL]
        if sig == 0:
            raise ValueError("port carries no signal; cannot signal-reference")
        coeffs = {ch: v / sig for ch, v in self.coeffs.items()}
        coeffs[Channel.SIGNAL] = 1.0 + 0.0j
        return replace(self, coeffs=coeffs, referenced=True)


def _guard(denom, scale, what: str):
    if np.any(np.abs(denom) <= 1e-14 * scale):
        raise PoleError(f"{what} evaluated at a pole (stability boundary)")


def _shaped(value, omega):
    """Return ``value`` with the shape of the original omega argument."""
    shape = np.shape(omega)
    arr = np.asarray(value, dtype=complex)
    return arr.reshape(shape) if shape else complex(arr.item())


def reflection_gain(cavity: OpticalCavity, rate: float, omega, sign: int):
    """Cavity reflection of the two-photon sum (+) / difference (-) quadrature.

    +: (g0 - ge + k + iW)/(g0 + ge - k - iW)   (antisqueezed, gain >= 1)
    -: (g0 - ge - k + iW)/(g0 + ge + k - iW)   (squeezed, gain <= 1)
    """
    w = np.atleast_1d(np.asarray(omega, dtype=float))
    g0, ge = cavity.gamma0, cavity.gamma_e
    s = 1 if sign > 0 else -1
    denom = g0 + ge - s * rate - 1j * w
    _guard(denom, g0, "reflection gain")
    return _shaped((g0 - ge + s * rate + 1j * w) / denom, omega)


def loss_leakage(cavity: OpticalCavity, rate: float, omega, sign: int):
    """Loss-port admixture 2*sqrt(g0*ge)/(g0 + ge -/+ k - iW) of the same pair."""
    w = np.atleast_1d(np.asarray(omega, dtype=float))
    g0, ge = cavity.gamma0, cavity.gamma_e
    s = 1 if sign > 0 else -1
    denom = g0 + ge - s * rate - 1j * w
    _guard(denom, g0, "loss leakage")
    return _shaped(2.0 * math.sqrt(g0 * ge) / denom, omega)


def optomechanical_gain(config: SystemConfig, omega, rate: float | None = None):
    """Normalized pump response K0*g*(g0-ge)/(g0^2 - (k + ge - iW)^2).

    The two-photon measurement-strength factor; its on-resonance magnitude
    grows with the parametric rate (pump enhancement).
    """
    if config.squeeze.kind == "degenerate":
        raise ValueError("two-photon gain undefined for degenerate squeezing")
    w = np.atleast_1d(np.asarray(omega, dtype=float))
    cav = config.cavity
    k = config.squeeze.rate if rate is None else rate
    denom = cav.gamma0**2 - (k + cav.gamma_e - 1j * w) ** 2
    _guard(denom, cav.gamma0**2, "optomechanical gain")
    return _shaped(config.derived.K0 * cav.gamma * (cav.gamma0 - cav.gamma_e) / denom,
                   omega)


def degenerate_response(config: SystemConfig, omega, rate: float | None = None):
    """Degenerate-squeezing coefficients (zeta, sigma, strength) at Omega.

    zeta:     (g0 - ge - u + iW)/(g0 + ge + u - iW), reflection of the damped
              quadratures (both ports share it);
    sigma:    2*g0/(g0 + ge + u - iW); the loss channel enters outputs as
              sigma*sqrt(ge/g0), i.e. with weight 4*g0*ge/|g + u - iW|^2;
    strength: K0*g*(g0-ge)/(g + u - iW)^2, the back-action/measurement gain.
    """
    if config.squeeze.kind == "two_photon":
        raise ValueError("degenerate response undefined for two-photon squeezing")
    w = np.atleast_1d(np.asarray(omega, dtype=float))
    cav = config.cavity
    u = config.squeeze.rate if rate is None else rate
    denom = cav.gamma0 + cav.gamma_e + u - 1j * w
    _guard(denom, cav.gamma0, "degenerate response")
    zeta = (cav.gamma0 - cav.gamma_e - u + 1j * w) / denom
    sigma = 2.0 * cav.gamma0 / denom
    strength = config.derived.K0 * cav.gamma * (cav.gamma0 - cav.gamma_e) / denom**2
    return _shaped(zeta, omega), _shaped(sigma, omega), _shaped(strength, omega)


def _resolve_family(config: SystemConfig, family) -> tuple[str, str]:
    """Collapse a family spec to (dynamics family, labelling family).

    A homodyne angle keeps the amplitude-family port names and channel
    labels: its six channels are the rotated unit-variance combinations,
    indexed by their amplitude-family constituents, and for two-photon
    squeezing every angle shares one coefficient map on them (the amplitude
    and phase maps coincide under the label swap).  Degenerate squeezing
    damps the two families at different rates, so a mixed angle has no
    six-channel form and is rejected; pure multiples of pi/2 select the
    corresponding family dynamics.
    """
    if isinstance(family, str):
        return family, family
    phi = float(family)
    c, s = math.cos(phi), math.sin(phi)
    if abs(s) <= 1e-12:
        return AMPLITUDE, AMPLITUDE
    if abs(c) <= 1e-12:
        return PHASE, AMPLITUDE
    if config.squeeze.kind == "degenerate":
        raise ValueError(
            "general-angle ports mix the oppositely squeezed quadrature "
            "families under degenerate squeezing; measure amplitude or phase")
    return AMPLITUDE, AMPLITUDE


def _family_rates(config: SystemConfig, family: str) -> tuple[float, float]:
    """(r_own, r_ref) of the shared algebraic shape; see module docstring."""
    rate = config.squeeze.rate
    if config.squeeze.kind == "degenerate":
        return (-rate, -rate) if family == PHASE else (rate, rate)
    return rate, -rate


def _role_coefficients(config: SystemConfig, w: np.ndarray, family: str) -> dict:
    """Coefficient set in role space (w must be a 1-d float array).

    Roles: own_vac/own_loss (noise entering the measured port directly),
    ref_vac/ref_loss (the reference port), ba_vac/ba_loss (back action fed
    into the measured port by the reference-side vacua), thermal and signal.
    Thermal is sqrt(2*gamma_m) times the signal coefficient.
    """
    cav, mech = config.cavity, config.mechanical
    g0, ge, g = cav.gamma0, cav.gamma_e, cav.gamma
    r_own, r_ref = _family_rates(config, family)

    d_own = g + r_own - 1j * w
    d_ref = g + r_ref - 1j * w
    _guard(d_own, g0, "measured-port response")
    _guard(d_ref, g0, "reference-port response")
    mech_pole = mech.gamma_m - 1j * w
    _guard(mech_pole, max(mech.gamma_m, np.max(np.abs(w)), 1.0) * 1e-2,
           "mechanical response")

    loss_root = math.sqrt(g0 * ge)
    strength = config.derived.K0 * g * (g0 - ge)  # = 4*g0*eta^2*C0^2
    ba = strength / d_own**2
    sig = -math.sqrt(strength) / (d_own * mech_pole)
    return {
        "own_vac": (g0 - ge - r_own + 1j * w) / d_own,
        "own_loss": 2.0 * loss_root / d_own,
        "ref_vac": (g0 - ge - r_ref + 1j * w) / d_ref,
        "ref_loss": 2.0 * loss_root / d_ref,
        "ba_vac": -ba / mech_pole,
        "ba_loss": -ba * math.sqrt(ge / g0) / mech_pole,
        "thermal": math.sqrt(2.0 * mech.gamma_m) * sig,
        "signal": sig,
    }


def _measured_channel_map(family: str):
    """Channel labels of the (own, ba) vacuum/loss pairs at the measured port."""
    if family == PHASE:
        return (Channel.ALPHA_PLUS, Channel.EPS_PLUS,
                Channel.ALPHA_MINUS, Channel.EPS_MINUS)
    # Amplitude family; general angles collapse onto rotated unit-variance
    # channels labelled by their amplitude-family constituents.
    return (Channel.ALPHA_MINUS, Channel.EPS_MINUS,
            Channel.ALPHA_PLUS, Channel.EPS_PLUS)


def measured_port_name(family) -> str:
    """Lab port ("sum"/"difference") that carries the mechanical signal.

    Homodyne angles keep the amplitude-family convention: the rotation flips
    the sign of the second mode's phase quadrature, so the lab difference of
    rotated quadratures stays the mechanically coupled combination at every
    angle.
    """
    return "sum" if family == PHASE else "difference"


def transfer_coefficients(config: SystemConfig, case: MeasurementCase, omega,
                          referenced: bool = False) -> dict:
    """Coefficient map Channel -> complex value(s) for the requested output.

    ``omega`` may be a scalar or an array; outputs match its shape.  With
    ``referenced=True`` coefficients are divided by the signal coefficient
    (mechanically coupled ports only), leaving exactly 1 in the signal slot.
    """
    w = np.atleast_1d(np.asarray(omega, dtype=float))
    dyn_family, label_family = _resolve_family(config, case.family)
    roles = _role_coefficients(config, w, dyn_family)
    own_v, own_l, ba_v, ba_l = _measured_channel_map(label_family)

    coeffs = {ch: np.zeros_like(w, dtype=complex) for ch in Channel}
    measured = measured_port_name(label_family)
    if case.port == "subtracted" or case.port == measured:
        coeffs[own_v] = roles["own_vac"].copy()
        coeffs[own_l] = roles["own_loss"].copy()
        coeffs[ba_v] = roles["ba_vac"].copy()
        coeffs[ba_l] = roles["ba_loss"].copy()
        coeffs[Channel.THERMAL] = roles["thermal"].copy()
        coeffs[Channel.SIGNAL] = roles["signal"].copy()
        if case.port == "subtracted":
            # The filter weight is defined by exact cancellation of the
            # input-vacuum back-action channel, so that coefficient is zero
            # identically; the loss-vacuum channel survives with the
            # algebraically reduced residual.
            cav = config.cavity
            bracket = roles["ref_loss"] / roles["ref_vac"] \
                - math.sqrt(cav.gamma_e / cav.gamma0)
            coeffs[ba_v] = np.zeros_like(w, dtype=complex)
            coeffs[ba_l] = -roles["ba_vac"] * bracket
    else:
        coeffs[ba_v] = roles["ref_vac"].copy()
        coeffs[ba_l] = roles["ref_loss"].copy()

    if referenced:
        sig = coeffs[Channel.SIGNAL]
        if np.all(sig == 0):
            raise ValueError("port carries no signal; cannot signal-reference")
        for ch in Channel:
            coeffs[ch] = coeffs[ch] / sig
        coeffs[Channel.SIGNAL] = np.ones_like(w, dtype=complex)
    return {ch: _shaped(v, omega) for ch, v in coeffs.items()}


def output_transfer(config: SystemConfig, case: MeasurementCase,
                    omega: float) -> TransferVector:
    """TransferVector at a single spectral frequency."""
    coeffs = transfer_coefficients(config, case, omega)
    return TransferVector(float(omega), coeffs)


def subtracted_transfer(config: SystemConfig, omega,
                        family=AMPLITUDE) -> TransferVector:
    """Back-action-subtracted combination of the mechanically coupled port."""
    return output_transfer(config, MeasurementCase(family, "subtracted"), omega)


def subtraction_weight(config: SystemConfig, omega, family=AMPLITUDE):
    """Filter applied to the reference port in the subtracted combination."""
    w = np.atleast_1d(np.asarray(omega, dtype=float))
    dyn_family, _ = _resolve_family(config, family)
    roles = _role_coefficients(config, w, dyn_family)
    return _shaped(-roles["ba_vac"] / roles["ref_vac"], omega)


def general_angle_parts(config: SystemConfig, omega, phi: float,
                        port: str = "difference"):
    """Underlying-family decomposition of a general-angle measurement.

    The measured combination at homodyne angle phi is cos(phi) times the
    amplitude-family port plus sin(phi) times the phase-family partner port
    (acting on the other quadratures' channels).  Returns
    (amplitude_part, phase_part); per rotated channel the two parts add in
    quadrature to the collapsed general-angle coefficient.
    """
    amp = transfer_coefficients(config, MeasurementCase(AMPLITUDE, port), omega)
    partner = {"difference": "sum", "sum": "difference"}.get(port, port)
    ph = transfer_coefficients(config, MeasurementCase(PHASE, partner), omega)
    c, s = math.cos(phi), math.sin(phi)
    return ({ch: c * v for ch, v in amp.items()},
            {ch: s * v for ch, v in ph.items()})
