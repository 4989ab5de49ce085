"""Norms, inequality monitors, energy ledgers, and a-priori bound reports.

Everything here is a pure function of recorded series or supplied fields;
the solver only appends rows.  The Gronwall-style report evaluates two
variants of each a-priori constant: the display form (sup-products of the
headline constants) and an honest form integrated from the recorded
series, which is the one the pass/fail flags use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .harmonics import (
    SpectralField,
    basis_eigenvalues,
    gauss_legendre_grid,
    grid_integral,
    inner_h,
    mode_degrees,
    norm_h,
    scalar_synthesis,
    vector_synthesis,
)
from .operators import OperatorContext, coriolis_apply, stokes_apply, trilinear_b

__all__ = [
    "norms",
    "EnergyLedger",
    "energy_residual",
    "InequalityReport",
    "inequality_report",
    "b_form_constants",
    "gronwall_bound_report",
]

LAMBDA_1 = 2.0  # first positive eigenvalue of the vector Laplacian on the sphere


def _l4_grid(lmax: int):
    # |u|^4 of a band-limited field has degree <= 4 lmax: this grid
    # integrates it exactly (and cheaply, the tables are cached)
    return gauss_legendre_grid(2 * lmax + 2, 4 * lmax + 1)


def l4_norm(field: SpectralField, ctx: OperatorContext | None = None) -> float:
    grid = _l4_grid(field.lmax)
    if field.kind == "stream":
        vec = vector_synthesis(field, grid)
        mag2 = vec.values[0] ** 2 + vec.values[1] ** 2
    else:
        mag2 = scalar_synthesis(field, grid).values ** 2
    return float(grid_integral(grid, mag2**2)) ** 0.25


def norms(field: SpectralField, ctx: OperatorContext) -> dict:
    """H (Parseval), V = |A^{1/2}.|, DA = |A.|, L4 (grid quadrature)."""
    lam_b = basis_eigenvalues(field.lmax)
    _, ms = mode_degrees(field.lmax)
    wm = np.where(ms == 0, 1.0, 2.0)
    c2 = np.abs(field.coeffs) ** 2 * wm
    if field.kind == "stream":
        c2 = c2 * lam_b
    if field.lmax == ctx.lmax:
        lam_s = ctx.lam_stokes
    elif ctx.spectrum == "paper":
        lam_s = lam_b
    else:
        lam_s = np.where(lam_b > 0, lam_b - 2.0, 0.0)
    return {
        "H": float(c2.sum()) ** 0.5,
        "V": float((c2 * lam_s).sum()) ** 0.5,
        "DA": float((c2 * lam_s**2).sum()) ** 0.5,
        "L4": l4_norm(field, ctx),
    }


# ---------------------------------------------------------------------------
# Energy ledger
# ---------------------------------------------------------------------------

_SERIES = ("t", "v_h2", "v_v2", "av2", "b_vvz", "f_v", "F_h2", "z_h2", "z_v2", "u_l4")


@dataclass
class EnergyLedger:
    """Per-step samples of the energy-identity ingredients.

    Series: |v|_H^2, |v|_V^2, |Av|_H^2, b(v,v,z), (F,v), |F|_H^2, |z|_H^2,
    |z|_V^2, |u|_L4 at each recorded time; u0_h2 stores |u(0)|_H^2.
    Integrals are trapezoidal over the recorded grid.
    """

    u0_h2: float = 0.0
    data: dict = field(default_factory=lambda: {k: [] for k in _SERIES})

    @property
    def n(self) -> int:
        return len(self.data["t"])

    def append_row(self, **kw) -> None:
        if set(kw) != set(_SERIES):
            missing = set(_SERIES) ^ set(kw)
            raise ValueError(f"ledger row mismatch: {sorted(missing)}")
        t = float(kw["t"])
        if self.n and t <= self.data["t"][-1]:
            raise ValueError("ledger times must increase")
        row = {k: float(kw[k]) for k in _SERIES}
        for k, val in row.items():
            if not math.isfinite(val):
                raise ValueError(f"non-finite ledger entry {k} at t={t}")
        for k, val in row.items():
            self.data[k].append(val)

    def record_state(self, t: float, v: SpectralField, z: SpectralField,
                     F: SpectralField, ctx: OperatorContext) -> None:
        nv = norms(v, ctx)
        u = SpectralField(v.lmax, v.coeffs + z.coeffs, "stream")
        self.append_row(
            t=t,
            v_h2=nv["H"] ** 2, v_v2=nv["V"] ** 2, av2=nv["DA"] ** 2,
            b_vvz=trilinear_b(v, v, z, ctx),
            f_v=inner_h(F, v),
            F_h2=norm_h(F) ** 2,
            z_h2=norm_h(z) ** 2,
            z_v2=norms(z, ctx)["V"] ** 2,
            u_l4=l4_norm(u, ctx),
        )

    def series(self, name: str) -> np.ndarray:
        return np.asarray(self.data[name], dtype=np.float64)

    def cumulative(self, name: str) -> np.ndarray:
        """Running trapezoidal integral of a series over the time grid."""
        t, y = self.series("t"), self.series(name)
        if t.size == 0:
            return np.zeros(0)
        steps = 0.5 * (y[1:] + y[:-1]) * np.diff(t)
        return np.concatenate([[0.0], np.cumsum(steps)])

    def integral(self, name: str) -> float:
        c = self.cumulative(name)
        return float(c[-1]) if c.size else 0.0

    def sup(self, name: str) -> float:
        y = self.series(name)
        return float(y.max()) if y.size else 0.0


def energy_residual(ledger: EnergyLedger, nu: float) -> float:
    """|v(T)|^2 - |v(0)|^2 + 2 nu int |v|_V^2 - 2 int b(v,v,z) - 2 int (F,v).

    Zero for the continuous flow; shrinks at the scheme order for discrete
    runs with trapezoidal integrals.
    """
    v_h2 = ledger.series("v_h2")
    if v_h2.size == 0:
        return 0.0
    return float(v_h2[-1] - v_h2[0]
                 + 2.0 * nu * ledger.integral("v_v2")
                 - 2.0 * ledger.integral("b_vvz")
                 - 2.0 * ledger.integral("f_v"))


# ---------------------------------------------------------------------------
# Inequality report
# ---------------------------------------------------------------------------

CHECKS = ("poincare", "ladyzhenskaya", "b1", "b2", "b5", "coriolis_zero", "b_antisym")


@dataclass
class InequalityReport:
    """Worst case (largest ratio) of each monitored inequality."""

    checks: dict

    def csv_lines(self) -> list[str]:
        lines = ["check,lhs,rhs,ratio,input_id"]
        for name in CHECKS:
            c = self.checks[name]
            lines.append(f"{name},{c['lhs']:.17g},{c['rhs']:.17g},"
                         f"{c['ratio']:.17g},{c['input_id']}")
        return lines


def _worst(rows: list) -> dict:
    return max(rows, key=lambda r: r["ratio"])


def inequality_report(samples: list, ctx: OperatorContext) -> InequalityReport:
    """Evaluate both sides of every monitored inequality on the samples.

    Trilinear checks consume rotated triples (i, i+1, i+2 mod n) so every
    sample appears in every argument slot.
    """
    if not samples:
        raise ValueError("need at least one sample field")
    n = len(samples)
    per = {name: [] for name in CHECKS}
    nrm = [norms(s, ctx) for s in samples]
    tiny = 1e-300
    for i, (u, nu_) in enumerate(zip(samples, nrm)):
        per["poincare"].append({
            "lhs": LAMBDA_1 * nu_["H"] ** 2, "rhs": nu_["V"] ** 2,
            "ratio": LAMBDA_1 * nu_["H"] ** 2 / max(nu_["V"] ** 2, tiny),
            "input_id": f"s{i}"})
        per["ladyzhenskaya"].append({
            "lhs": nu_["L4"], "rhs": math.sqrt(nu_["H"] * nu_["V"]),
            "ratio": nu_["L4"] / max(math.sqrt(nu_["H"] * nu_["V"]), tiny),
            "input_id": f"s{i}"})
        cu = abs(inner_h(coriolis_apply(u, ctx), u))
        scale = max(2.0 * abs(ctx.omega), 1.0) * nu_["H"] ** 2
        per["coriolis_zero"].append({
            "lhs": cu, "rhs": scale, "ratio": cu / max(scale, tiny),
            "input_id": f"s{i}"})
    for i in range(n):
        j, k = (i + 1) % n, (i + 2) % n
        u, v, w = samples[i], samples[j], samples[k]
        nu_, nv_, nw_ = nrm[i], nrm[j], nrm[k]
        uid = f"s{i}|s{j}|s{k}"
        buvw = abs(trilinear_b(u, v, w, ctx))
        rhs1 = (math.sqrt(nu_["H"] * nu_["V"]) * math.sqrt(nv_["H"] * nv_["V"])
                * nw_["V"])
        per["b1"].append({"lhs": buvw, "rhs": rhs1,
                          "ratio": buvw / max(rhs1, tiny), "input_id": uid})
        rhs2 = (math.sqrt(nu_["H"] * nu_["V"]) * math.sqrt(nv_["V"] * nu_["DA"])
                * nw_["H"])
        per["b2"].append({"lhs": buvw, "rhs": rhs2,
                          "ratio": buvw / max(rhs2, tiny), "input_id": uid})
        rhs5 = nu_["L4"] * nv_["V"] * nw_["L4"]
        per["b5"].append({"lhs": buvw, "rhs": rhs5,
                          "ratio": buvw / max(rhs5, tiny), "input_id": uid})
        bvw_w = abs(trilinear_b(u, w, w, ctx))
        scale = max(nu_["V"] * nw_["V"] ** 2, tiny)
        per["b_antisym"].append({"lhs": bvw_w, "rhs": scale,
                                 "ratio": bvw_w / scale, "input_id": uid})
    return InequalityReport(checks={name: _worst(rows) for name, rows in per.items()})


def b_form_constants(samples: list, ctx: OperatorContext) -> dict:
    """Empirical constants of the convective estimates used by the
    second-level energy bound (all against |Av|^{3/2}-type right sides),
    plus the |b(v,v,z)| <= c |v| |v|_V |z|_V pattern of the first level:

        vvA: |b(v,v,Av)|   / (|v|^{1/2} |v|_V       |Av|^{3/2})
        vzA: |b(v,z,Av)|   / (|v|^{1/2} |v|_V^{1/2} |z|_V^{1/2} |Av|^{3/2})
        zvA: |b(z,v,Av)|   / (|z|^{1/2} |z|_V^{1/2} |v|_V^{1/2} |Av|^{3/2})
        vvz: |b(v,v,z)|    / (|v| |v|_V |z|_V)

    Returns the max ratio per form over rotated sample pairs.
    """
    if len(samples) < 2:
        raise ValueError("need at least two sample fields")
    n = len(samples)
    out = {"vvA": 0.0, "vzA": 0.0, "zvA": 0.0, "vvz": 0.0}
    tiny = 1e-300
    for i in range(n):
        v, z = samples[i], samples[(i + 1) % n]
        nv_, nz_ = norms(v, ctx), norms(z, ctx)
        av = stokes_apply(v, 1.0, ctx)
        da32 = nv_["DA"] ** 1.5
        out["vvA"] = max(out["vvA"], abs(trilinear_b(v, v, av, ctx))
                         / max(math.sqrt(nv_["H"]) * nv_["V"] * da32, tiny))
        out["vzA"] = max(out["vzA"], abs(trilinear_b(v, z, av, ctx))
                         / max(math.sqrt(nv_["H"] * nv_["V"] * nz_["V"]) * da32, tiny))
        out["zvA"] = max(out["zvA"], abs(trilinear_b(z, v, av, ctx))
                         / max(math.sqrt(nz_["H"] * nz_["V"] * nv_["V"]) * da32, tiny))
        out["vvz"] = max(out["vvz"], abs(trilinear_b(v, v, z, ctx))
                         / max(nv_["H"] * nv_["V"] * nz_["V"], tiny))
    return out


# ---------------------------------------------------------------------------
# A-priori bound report
# ---------------------------------------------------------------------------


def gronwall_bound_report(ledger: EnergyLedger, cfg, *, c_emp: float = 1.0,
                          rel_slack: float = 1e-9) -> dict:
    """Evaluate the a-priori constants K1..K4 from a recorded run and flag
    whether the corresponding observed quantities stay below them.

    Splitting parameters: the first energy level uses eps = nu (only
    eps/2 < 2 nu is needed there); the second level must absorb three
    eps |Av|^2 terms plus eps/4, so it uses eps_da = 4 nu / 13, which makes
    its dissipation margin 2 nu - 13 eps_da / 4 = nu exactly.  The Young
    constant of the second level is C(eps) = 27 c^4 / (256 eps^3) with c
    the supplied empirical convective constant (measure with
    b_form_constants; 1.0 is a conservative default).

    K1/K2 are the display forms (their Young steps are exact given the
    convective constant <= 1, which holds empirically with wide margin;
    the Young remainder terms of the force are dropped when int |F|^2 = 0,
    where no splitting of (F, v) is needed at all).  K3/K4 come in two
    variants: *_display (headline sup-products) and the honest
    series-integrated forms, which carry the pass/fail flags.
    """
    nu = float(cfg.nu)
    if nu <= 0:
        raise ValueError("nu must be positive")
    if ledger.n < 2:
        raise ValueError("need a recorded run (>= 2 ledger rows)")

    def _safe_exp(x: float) -> float:
        try:
            return math.exp(x)
        except OverflowError:
            return math.inf
    eps = nu
    eps_da = 4.0 * nu / 13.0
    denom1 = 2.0 * nu - eps / 2.0          # = 3 nu / 2
    denom2 = 2.0 * nu - 13.0 * eps_da / 4.0  # = nu
    C_eps = 27.0 * c_emp**4 / (256.0 * eps_da**3)

    t = ledger.series("t")
    T = float(t[-1] - t[0])
    v_h2, v_v2 = ledger.series("v_h2"), ledger.series("v_v2")
    z_h2, z_v2 = ledger.series("z_h2"), ledger.series("z_v2")
    F_h2 = ledger.series("F_h2")
    int_F2 = ledger.integral("F_h2")
    int_vz = float(np.trapezoid(v_h2 * z_v2, t))

    num1 = v_h2[0] + (2.0 / eps) * int_vz
    if int_F2 > 0.0:
        num1 += (2.0 / eps) * int_F2 + (eps / 2.0) * ledger.integral("v_h2")
    K1 = num1 / denom1
    K2 = denom1 * K1

    theta = C_eps * (v_h2 * v_v2 + v_h2 * z_v2 + z_h2 * z_v2)
    int_theta = float(np.trapezoid(theta, t))
    # heavy-tailed noise paths can push the exponent past float range; the
    # bound is then astronomically large but still a bound, so saturate
    K3 = (v_v2[0] + int_F2 / eps_da) * _safe_exp(int_theta)
    K3_display = (v_v2[0] + int_F2 / nu) * _safe_exp(C_eps * K2 * K1)

    C1, C2 = float(ledger.sup("z_v2")), float(ledger.sup("z_h2"))
    grow = C_eps * (v_h2 * v_v2**2 + v_h2 * v_v2 * z_v2 + z_h2 * z_v2 * v_v2)
    K4 = (v_v2[0] + float(np.trapezoid(grow, t)) + int_F2 / eps_da) / denom2

    def _term(*factors) -> float:
        # a zero factor means the term is structurally absent; never let it
        # turn a saturated (inf) companion factor into nan
        if any(f == 0.0 for f in factors):
            return 0.0
        out = 1.0
        for f in factors:
            out *= float(f)
        return out

    K4_display = (ledger.u0_h2 + T * C_eps * (_term(K2, K3_display**2)
                                              + _term(K2, K3_display, C1)
                                              + _term(C2, C1, K3_display))
                  + int_F2 / eps_da) / denom2

    observed = {
        "int_v2_V": ledger.integral("v_v2"),
        "sup_v_h2": ledger.sup("v_h2"),
        "sup_v_v2": ledger.sup("v_v2"),
        "int_av2": ledger.integral("av2"),
    }
    slack = 1.0 + rel_slack
    satisfied = {
        "K1": observed["int_v2_V"] <= K1 * slack,
        "K2": observed["sup_v_h2"] <= K2 * slack,
        "K3": observed["sup_v_v2"] <= K3 * slack,
        "K4": observed["int_av2"] <= K4 * slack,
    }
    return {
        "K1": K1, "K2": K2, "K3": K3, "K4": K4,
        "K3_display": K3_display, "K4_display": K4_display,
        "C1": C1, "C2": C2, "c_emp": c_emp, "C_eps": C_eps,
        "epsilon": eps, "epsilon_da": eps_da,
        "observed": observed, "satisfied": satisfied,
    }
