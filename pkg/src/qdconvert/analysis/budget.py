"""Signal/background coincidence bookkeeping and rate budgets.

Each arm sees signal photons at ``r_s`` and uncorrelated background (pump
induced photons plus dark counts) at ``r_b``. Accidental coincidences per bin
split into signal/signal, signal/background and background/background classes.
Only the first carries the antibunching dip.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from ..conversion import efficiency, uspdc_rate
from ..correlation import expected_flat


@dataclass(frozen=True)
class BackgroundBudget:
    r_s1: float
    r_s2: float
    r_b1: float
    r_b2: float
    bin_width: float
    T: float
    ss: float
    sb: float
    bb: float
    ss_err: float = 0.0
    sb_err: float = 0.0
    bb_err: float = 0.0

    @property
    def total(self) -> float:
        return self.ss + self.sb + self.bb

    @property
    def signal_fraction(self) -> float:
        """rho_s such that ss = rho_s**2 * total."""
        return math.sqrt(self.ss / self.total) if self.total > 0 else 0.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["total"] = self.total
        return d


def decompose_coincidences(r_s1, r_s2, r_b1, r_b2, bin_width, T) -> BackgroundBudget:
    """Expected flat coincidences per bin by class. Rates in 1/s, ``bin_width`` in ps, ``T`` in s."""
    for name, v in (("r_s1", r_s1), ("r_s2", r_s2), ("r_b1", r_b1), ("r_b2", r_b2), ("T", T)):
        if not v >= 0:
            raise ValueError(f"{name} must be >= 0, got {v}")
    if not bin_width > 0:
        raise ValueError("bin_width must be > 0")
    ss = expected_flat(r_s1, r_s2, bin_width, T)
    sb = expected_flat(r_s1, r_b2, bin_width, T) + expected_flat(r_b1, r_s2, bin_width, T)
    bb = expected_flat(r_b1, r_b2, bin_width, T)
    return BackgroundBudget(float(r_s1), float(r_s2), float(r_b1), float(r_b2), float(bin_width), float(T),
                            ss, sb, bb)


def background_corrected_g2(g2_raw_at_dip, budget: BackgroundBudget) -> float:
    """Remove the flat sb and bb classes and renormalize to the ss level."""
    if not budget.ss > 0:
        raise ZeroDivisionError("signal/signal coincidence level is zero; cannot correct")
    return float((g2_raw_at_dip * budget.total - budget.sb - budget.bb) / budget.ss)


def contrast_from_signal_fraction(rho_s, g2_true_dip) -> float:
    """Measured dip when a fraction ``rho_s`` of each arm's counts is signal."""
    if not 0 <= rho_s <= 1:
        raise ValueError(f"rho_s must lie in [0, 1], got {rho_s}")
    return float(1.0 - rho_s**2 * (1.0 - g2_true_dip))


def expected_rates(config, pump_power=None) -> dict:
    """Expected mean rates (1/s) through the chain described by a PipelineConfig.

    Dead time is ignored; at the configured count rates it removes well under
    one percent of the tags.
    """
    P = config.pump_power if pump_power is None else float(pump_power)
    hbt = config.hbt
    source_rate = config.source.rate * (1.0 - config.coupler_loss)
    if config.conversion is None:
        eta = 1.0
        keep = config.optics_transmission
        bg_prefilter = 0.0
        bg = 0.0
    else:
        eta = efficiency(config.conversion, P, temp=config.crystal_temp)
        filt_t = config.filter.peak_transmission if config.filter is not None else 1.0
        keep = eta * config.optics_transmission * filt_t
        bg_prefilter = uspdc_rate(config.uspdc, P) if config.uspdc is not None else 0.0
        bg = config.optics_transmission * (
            uspdc_rate(config.uspdc, P, config.filter) if config.uspdc is not None else 0.0
        )
    signal = source_rate * keep
    s = hbt.split_ratio
    e1, e2 = hbt.det1.efficiency, hbt.det2.efficiency
    return {
        "pump_power": P,
        "efficiency": eta,
        "signal_keep": keep,
        "signal": signal,
        "background_prefilter": bg_prefilter,
        "background": bg,
        "sbr": signal / bg if bg > 0 else (math.inf if signal > 0 else math.nan),
        "r_s1": signal * s * e1,
        "r_s2": signal * (1 - s) * e2,
        "r_b1": bg * s * e1 + hbt.det1.dark_rate,
        "r_b2": bg * (1 - s) * e2 + hbt.det2.dark_rate,
    }


def budget_for(config, pump_power=None, T=None, pump_rel_sigma=0.0) -> BackgroundBudget:
    """BackgroundBudget at ``pump_power`` with optional pump-power variance propagated.

    ``T`` defaults to the configured duration. The class uncertainties are the
    first-order response to a relative pump-power deviation ``pump_rel_sigma``.
    """
    P = config.pump_power if pump_power is None else float(pump_power)
    T = config.duration * 1e-12 if T is None else float(T)
    bw = config.correlation.bin_width

    def at(p):
        r = expected_rates(config, p)
        return decompose_coincidences(r["r_s1"], r["r_s2"], r["r_b1"], r["r_b2"], bw, T)

    b = at(P)
    if pump_rel_sigma > 0 and P > 0 and config.conversion is not None:
        h = 1e-4 * P
        up, dn = at(P + h), at(P - h)
        scale = pump_rel_sigma * P / (2 * h)
        errs = {k: abs(getattr(up, k) - getattr(dn, k)) * scale for k in ("ss", "sb", "bb")}
        b = BackgroundBudget(**{**asdict(b), "ss_err": errs["ss"], "sb_err": errs["sb"], "bb_err": errs["bb"]})
    return b


BUDGET_COLUMNS = ("pump_power_mW", "efficiency", "signal_per_s", "background_prefilter_per_s",
                  "background_per_s", "sbr", "r1_per_s", "r2_per_s", "ss", "ss_err", "sb", "sb_err",
                  "bb", "bb_err", "total")


def rate_budget(config, powers, T=None, pump_rel_sigma=0.0) -> list[dict]:
    """One row per pump power (W) with rates, SBR and expected flat coincidences per bin."""
    powers = np.atleast_1d(np.asarray(powers, dtype=float))
    if np.any(powers < 0):
        raise ValueError("pump powers must be >= 0")
    rows = []
    for P in powers:
        r = expected_rates(config, P)
        b = budget_for(config, P, T, pump_rel_sigma)
        rows.append({
            "pump_power_mW": P * 1e3,
            "efficiency": r["efficiency"],
            "signal_per_s": r["signal"],
            "background_prefilter_per_s": r["background_prefilter"],
            "background_per_s": r["background"],
            "sbr": r["sbr"],
            "r1_per_s": r["r_s1"] + r["r_b1"],
            "r2_per_s": r["r_s2"] + r["r_b2"],
            "ss": b.ss, "ss_err": b.ss_err,
            "sb": b.sb, "sb_err": b.sb_err,
            "bb": b.bb, "bb_err": b.bb_err,
            "total": b.total,
        })
    return rows


def format_budget_table(rows) -> str:
    """CSV text for ``rate_budget`` rows."""
    lines = [",".join(BUDGET_COLUMNS)]
    for row in rows:
        lines.append(",".join(f"{row[c]:.6g}" for c in BUDGET_COLUMNS))
    return "\n".join(lines) + "\n"
