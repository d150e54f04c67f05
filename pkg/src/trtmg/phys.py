"""Planck spectrum, opacity averages, and material closure in code units.

Units throughout: length cm, time ns, temperature keV (k_B = 1), energy in
jerks (1e9 J).  The photon frequency variable is the photon energy h*nu in
keV.  The spectral emission density B(nu, T) is normalized so that its
integral over all frequencies equals c*a_R*T^4 / 2, which makes the
equilibrium radiation energy density (both half ranges) equal a_R*T^4.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.polynomial.legendre import leggauss

# lowest admissible material/radiation temperature, keV
T_FLOOR = 1e-6

# quarter of the Riemann zeta tail: integral of x^3/(e^x - 1) over [0, inf)
_PI4_15 = np.pi**4 / 15.0

# Planck-weight integrals below this are treated as numerically empty (deep
# Wien tail); group opacities then fall back to a midpoint evaluation.
_WIEN_FLOOR = 1e-300

_GL_NODES, _GL_WEIGHTS = leggauss(16)


@dataclass(frozen=True)
class PhysicalConstants:
    """Unit-system constants.  h is derived from a_R and c so that the
    analytic Planck identities hold exactly in code units."""

    c: float = 29.9792458            # cm/ns
    a_R: float = 0.01372016          # jerks/(cm^3 keV^4)
    k_B: float = 1.0                 # keV/keV
    h: float = 4.135668627819953e-09  # keV ns, = (8 pi^5 kappa / (15 a_R c^3))^(1/3)

    @property
    def planck_prefactor(self) -> float:
        # B(nu, T) = prefactor * nu^3 / (exp(nu/T) - 1)
        return 15.0 * self.c * self.a_R / (2.0 * np.pi**4)


CONST = PhysicalConstants()


@dataclass(frozen=True)
class MaterialModel:
    """Material energy closure eps(T) = c_v * T with constant heat capacity."""

    c_v: float  # jerks/(cm^3 keV)

    def energy(self, T):
        return self.c_v * np.asarray(T, dtype=float)

    def temperature(self, eps):
        return np.asarray(eps, dtype=float) / self.c_v


class FleckCummingsOpacity:
    """sigma(nu, T) = 27 * (1 - exp(-nu/T)) / nu^3, in 1/cm."""

    def __call__(self, nu, T):
        nu = np.asarray(nu, dtype=float)
        T = np.asarray(T, dtype=float)
        return 27.0 * (-np.expm1(-nu / T)) / nu**3


OpacityFunction = Callable[[np.ndarray, np.ndarray], np.ndarray]


def planck_B(nu, T, constants: PhysicalConstants = CONST):
    """Spectral emission density B(nu, T); zero at nu = 0 and in deep Wien tail."""
    nu = np.asarray(nu, dtype=float)
    T = np.asarray(T, dtype=float)
    x = np.divide(nu, T, out=np.zeros(np.broadcast(nu, T).shape), where=T > 0)
    denom = -np.expm1(-x)
    out = np.zeros_like(denom)
    np.divide(constants.planck_prefactor * nu**3 * np.exp(-x), denom,
              out=out, where=denom > 0)
    return out if out.ndim else float(out)


def planck_dB_dT(nu, T, constants: PhysicalConstants = CONST):
    """Temperature derivative of planck_B at fixed nu."""
    nu = np.asarray(nu, dtype=float)
    T = np.asarray(T, dtype=float)
    x = nu / T
    denom = np.expm1(-x) ** 2
    out = np.zeros_like(denom)
    np.divide(constants.planck_prefactor * nu**4 / T**2 * np.exp(-x), denom,
              out=out, where=denom > 0)
    return out if out.ndim else float(out)


# Bernoulli-series coefficients of integral_0^x t^3/(e^t - 1) dt
# = x^3/3 - x^4/8 + sum_k _BERN_C[k] x^(2k+5), from B_{2k+2}/((2k+5)(2k+2)!)
_BERN_C = np.array([
    +1.66666666666666664e-02, -1.98412698412698413e-04,
    +3.67430922986478553e-06, -7.51563251563251607e-08,
    +1.60590438368216149e-09, -3.52279342579166215e-11,
    +7.87208031216745774e-13, -1.78404226122241216e-14,
    +4.08860097917992578e-16, -9.45595086329592140e-18,
    +2.20360113134409181e-19, -5.16832025400463853e-21,
    +1.21886449642395423e-22, -2.88823142807662809e-24,
    +6.87258318890207039e-26])

_PI4_15 = np.pi**4 / 15.0


def _planck_tail(x):
    """Integral of t^3/(e^t - 1) over [x, inf).

    Below x = 2 the complement is integrated by the Bernoulli power series
    of the integrand; above, the exponential series
    sum_n exp(-n x)(x^3/n + 3x^2/n^2 + 6x/n^3 + 6/n^4) with 20 terms.  Both
    truncations sit at or below 1e-15 relative.
    """
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    out = np.empty_like(x)

    small = x < 2.0
    if np.any(small):
        xs = np.where(small, x, 0.0)
        x2 = xs * xs
        acc = np.zeros_like(xs)
        for c in _BERN_C[::-1]:
            acc = (acc + c) * x2
        head = xs**3 * (1.0 / 3.0 - xs / 8.0 + acc)
        out[small] = (_PI4_15 - head)[small]

    big = ~small
    if np.any(big):
        xb = np.where(big, x, 2.0)
        acc = np.zeros_like(xb)
        for n in range(20, 0, -1):
            e = np.exp(-n * xb)
            acc += e * (xb**3 / n + 3.0 * xb**2 / n**2 + 6.0 * xb / n**3
                        + 6.0 / n**4)
        out[big] = acc[big]
    return float(out[0]) if scalar else out


def _planck_dT_tail(x):
    """Integral of t^4 e^t/(e^t - 1)^2 over [x, inf): equals
    x^4/(e^x - 1) + 4 * integral of t^3/(e^t - 1)."""
    x = np.asarray(x, dtype=float)
    denom = -np.expm1(-x)
    lead = np.zeros_like(denom)
    np.divide(x**4 * np.exp(-x), denom, out=lead, where=x > 0)
    return lead + 4.0 * _planck_tail(x)


def planck_group(T: float, interval, constants: PhysicalConstants = CONST) -> float:
    """Integral of planck_B over one frequency interval [nu_lo, nu_hi]."""
    lo, hi = interval
    return float(planck_groups(np.array([T]), np.array([lo, hi]), constants)[0, 0])


def planck_groups(T, edges, constants: PhysicalConstants = CONST):
    """Group integrals of planck_B for all groups at each temperature.

    T has shape (n,), edges (G+1,); returns (n, G).  Any edge at or beyond
    the exp underflow point acts as infinity, so a huge top edge closes the
    spectrum exactly.
    """
    T = np.asarray(T, dtype=float)
    edges = np.asarray(edges, dtype=float)
    x = edges[None, :] / T[:, None]
    tails = np.where(x <= 0.0, _PI4_15, _planck_tail(np.maximum(x, 0.0)))
    pref = constants.planck_prefactor * T**4
    return pref[:, None] * (tails[:, :-1] - tails[:, 1:])


def planck_dT_group(T_r: float, interval, constants: PhysicalConstants = CONST) -> float:
    """Integral of planck_dB_dT over one interval, at temperature T_r."""
    lo, hi = interval
    return float(planck_dT_groups(np.array([T_r]), np.array([lo, hi]), constants)[0, 0])


def planck_dT_groups(T_r, edges, constants: PhysicalConstants = CONST):
    """Group integrals of planck_dB_dT; sums to 2 c a_R T_r^3 over the full range."""
    T_r = np.asarray(T_r, dtype=float)
    edges = np.asarray(edges, dtype=float)
    x = edges[None, :] / T_r[:, None]
    tails = np.where(x <= 0.0, 4.0 * _PI4_15, _planck_dT_tail(np.maximum(x, 0.0)))
    pref = constants.planck_prefactor * T_r**3
    return pref[:, None] * (tails[:, :-1] - tails[:, 1:])


def _log_nodes(edges):
    """16-point Gauss-Legendre nodes/weights in log(nu) for every group.

    A zero lower edge is clamped to 1e-12 of the upper edge; the omitted
    sliver carries a vanishing share of any Planck-weighted integral.
    """
    lo = np.maximum(edges[:-1], edges[1:] * 1e-12)
    hi = edges[1:]
    u0 = np.log(lo)
    half = 0.5 * (np.log(hi) - u0)
    u = u0[:, None] + half[:, None] * (_GL_NODES[None, :] + 1.0)
    nu = np.exp(u)
    w = half[:, None] * _GL_WEIGHTS[None, :] * nu  # includes dnu = nu d(log nu)
    return nu, w


def _averaged_sigma(weight_fn, sigma, T_sigma, edges, harmonic, constants):
    """Weighted group means of sigma over the 16-point log-frequency rule.

    weight_fn(nu) -> (n, G, K) weights; T_sigma (n,) is the temperature at
    which sigma is evaluated.  harmonic=True averages 1/sigma (Rosseland).
    Groups whose weight integral underflows use sigma at the geometric
    midpoint of the (clamped) group.
    """
    nu, w = _log_nodes(np.asarray(edges, dtype=float))
    T_sigma = np.asarray(T_sigma, dtype=float)
    sig = sigma(nu[None, :, :], T_sigma[:, None, None])
    wgt = weight_fn(nu[None, :, :]) * w[None, :, :]
    den_w = wgt.sum(axis=2)
    if harmonic:
        num = den_w
        den = (wgt / sig).sum(axis=2)
    else:
        num = (wgt * sig).sum(axis=2)
        den = den_w
    lo = np.maximum(edges[:-1], edges[1:] * 1e-12)
    mid = np.sqrt(lo * edges[1:])
    fallback = sigma(mid[None, :], T_sigma[:, None])
    empty = den_w < _WIEN_FLOOR
    out = np.where(empty, fallback, num / np.where(empty, 1.0, den))
    return out


def sigma_B_group(T: float, interval, sigma: OpacityFunction,
                  constants: PhysicalConstants = CONST) -> float:
    """Planck-mean opacity of one group at material temperature T."""
    return float(sigma_B_groups(np.array([T]), np.asarray(interval, float), sigma,
                                constants)[0, 0])


def sigma_B_groups(T, edges, sigma, constants: PhysicalConstants = CONST):
    T = np.asarray(T, dtype=float)
    return _averaged_sigma(lambda nu: planck_B(nu, T[:, None, None], constants),
                           sigma, T, edges, False, constants)


def sigma_E_group(T: float, T_r: float, interval, sigma: OpacityFunction,
                  constants: PhysicalConstants = CONST) -> float:
    """Absorption opacity: sigma(., T) weighted by the spectrum at T_r."""
    return float(sigma_E_groups(np.array([T]), np.array([T_r]),
                                np.asarray(interval, float), sigma, constants)[0, 0])


def sigma_E_groups(T, T_r, edges, sigma, constants: PhysicalConstants = CONST):
    T = np.asarray(T, dtype=float)
    T_r = np.asarray(T_r, dtype=float)
    return _averaged_sigma(lambda nu: planck_B(nu, T_r[:, None, None], constants),
                           sigma, T, edges, False, constants)


def sigma_R_group(T: float, T_r: float, interval, sigma: OpacityFunction,
                  constants: PhysicalConstants = CONST) -> float:
    """Rosseland mean: dB/dT-weighted harmonic average of sigma(., T)."""
    return float(sigma_R_groups(np.array([T]), np.array([T_r]),
                                np.asarray(interval, float), sigma, constants)[0, 0])


def sigma_R_groups(T, T_r, edges, sigma, constants: PhysicalConstants = CONST):
    T = np.asarray(T, dtype=float)
    T_r = np.asarray(T_r, dtype=float)
    return _averaged_sigma(lambda nu: planck_dB_dT(nu, T_r[:, None, None], constants),
                           sigma, T, edges, True, constants)


@dataclass
class GroupOpacitySet:
    """Per-cell, per-group coefficients for one temperature state."""

    sig_B: np.ndarray   # (n_x, G) Planck mean at T
    sig_E: np.ndarray   # (n_x, G) absorption mean, spectrum at T_r
    sig_R: np.ndarray   # (n_x, G) Rosseland mean at T_r
    B: np.ndarray       # (n_x, G) group-integrated emission density at T


def build_group_opacities(T, T_r, edges, sigma: OpacityFunction,
                          constants: PhysicalConstants = CONST) -> GroupOpacitySet:
    """Evaluate all group opacities and emission integrals for cell arrays T, T_r.

    Equivalent to calling sigma_B_groups / sigma_E_groups / sigma_R_groups
    separately, but shares the frequency nodes and the sigma(nu, T) samples
    across the three averages (this sits on the hot path of every cycle).
    """
    T = np.asarray(T, dtype=float)
    T_r = np.asarray(T_r, dtype=float)
    edges = np.asarray(edges, dtype=float)
    nu, w = _log_nodes(edges)
    sig = sigma(nu[None, :, :], T[:, None, None])
    lo = np.maximum(edges[:-1], edges[1:] * 1e-12)
    mid = np.sqrt(lo * edges[1:])
    fallback = sigma(mid[None, :], T[:, None])

    def avg(wgt, harmonic):
        den_w = wgt.sum(axis=2)
        if harmonic:
            num, den = den_w, (wgt / sig).sum(axis=2)
        else:
            num, den = (wgt * sig).sum(axis=2), den_w
        empty = den_w < _WIEN_FLOOR
        return np.where(empty, fallback, num / np.where(empty, 1.0, den))

    w_loc = planck_B(nu[None, :, :], T[:, None, None], constants) * w[None, :, :]
    w_rad = planck_B(nu[None, :, :], T_r[:, None, None], constants) * w[None, :, :]
    w_ros = planck_dB_dT(nu[None, :, :], T_r[:, None, None], constants) * w[None, :, :]
    return GroupOpacitySet(
        sig_B=avg(w_loc, False),
        sig_E=avg(w_rad, False),
        sig_R=avg(w_ros, True),
        B=planck_groups(T, edges, constants),
    )


def radiation_temperature(E_total, constants: PhysicalConstants = CONST,
                          floor: float = T_FLOOR):
    """T_r = (E/a_R)^(1/4), floored; negative E is clipped to zero first."""
    E = np.maximum(np.asarray(E_total, dtype=float), 0.0)
    T_r = np.maximum((E / constants.a_R) ** 0.25, floor)
    return T_r if T_r.ndim else float(T_r)
