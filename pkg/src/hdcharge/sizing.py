"""Cost-minimal sizing of the smart charger, on-site PV and energy storage."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import CapacityBelowPeak, DegeneratePrices, EmptyProfiles, InfeasibleEta

SCENARIO1_RATIO = 10.0


@dataclass(frozen=True)
class PriceSet:
    """Unit prices; ``lambda_pv_es`` folds the storage prices into $/kVA of PV."""

    lambda_charger: float  # $/kVA
    lambda_pv: float  # $/kVA
    lambda_es_e: float  # $/kWh
    lambda_es_p: float  # $/kW
    alpha: float = 0.0  # kWh of storage per kVA of PV
    beta: float = 0.0  # kW of storage per kVA of PV

    def __post_init__(self):
        for name in ("lambda_charger", "lambda_pv", "lambda_es_e", "lambda_es_p", "alpha", "beta"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    @property
    def lambda_pv_es(self) -> float:
        return self.lambda_pv + self.alpha * self.lambda_es_e + self.beta * self.lambda_es_p


# Case-study prices ($/kVA charger, $/kVA PV, $/kWh and $/kW storage).
CASE_PRICES = {
    1: PriceSet(5268.0, 1000.0, 661.0, 350.0, 4.75, 1.0),
    2: PriceSet(17956.0, 1000.0, 661.0, 350.0, 4.75, 1.0),
}


@dataclass(frozen=True)
class SizingInputs:
    p_c_max: float  # kW
    q_ref: float  # kvar
    p_ref: float = 0.0  # kW
    eta: float = 1.0
    delta: float = 0.0

    def __post_init__(self):
        if self.p_c_max <= 0:
            raise ValueError("p_c_max must be > 0")
        if not 0 < self.eta <= 1:
            raise ValueError("eta must lie in (0, 1]")
        if not 0 <= self.delta <= 1:
            raise ValueError("delta must lie in [0, 1]")
        if self.q_ref < 0 or self.p_ref < 0:
            raise ValueError("q_ref and p_ref must be >= 0")


@dataclass(frozen=True)
class SizingResult:
    s_charger: float
    s_pv: float
    e_es: float
    p_es: float
    cost: float
    scenario: int
    constraint_binding: bool
    q_charger: float
    q_pv: float
    p_pv: float

    def to_dict(self) -> dict:
        return asdict(self)


def charger_reactive_capacity(s_charger: float, p_c_max: float) -> float:
    """Reactive headroom of a charger rated ``s_charger`` kVA at ``p_c_max`` kW."""
    if s_charger < p_c_max:
        raise CapacityBelowPeak(f"charger {s_charger} kVA below peak draw {p_c_max} kW")
    return math.sqrt(s_charger**2 - p_c_max**2)


def cost(s_charger: float, s_pv: float, prices: PriceSet) -> float:
    if s_charger < 0 or s_pv < 0:
        raise ValueError("sizes must be >= 0")
    return prices.lambda_charger * s_charger + prices.lambda_pv_es * s_pv


def max_charger_size(p_c_max: float, q_ref: float) -> float:
    """Charger rating at which its own vars cover ``q_ref``."""
    return math.hypot(p_c_max, q_ref)


def cost_curve(s_charger, prices: PriceSet, p_c_max: float, q_ref: float, eta: float = 1.0):
    """Total cost as a function of charger size, PV sized to cover the var gap."""
    s = np.asarray(s_charger, dtype=float)
    q_c = np.sqrt(np.clip(s**2 - p_c_max**2, 0.0, None))
    s_pv = np.clip(q_ref - q_c, 0.0, None) / eta
    return prices.lambda_charger * s + prices.lambda_pv_es * s_pv


def cost_derivative(s_charger, prices: PriceSet, p_c_max: float):
    """Analytic slope of the cost curve inside (p_c_max, S_max], with the 1/eta factor dropped."""
    s = np.asarray(s_charger, dtype=float)
    return prices.lambda_charger - prices.lambda_pv_es * s / np.sqrt(s**2 - p_c_max**2)


def classify_scenario(prices: PriceSet, ratio_threshold: float = SCENARIO1_RATIO) -> int:
    """Price regime 1..5 from the charger / PV-ES price ratio.

    1: ratio >= threshold, 2: 1 < ratio < threshold, 3: equal prices,
    4: 1/threshold < ratio < 1, 5: ratio <= 1/threshold.
    """
    lc, lp = prices.lambda_charger, prices.lambda_pv_es
    if math.isclose(lc, lp, rel_tol=1e-12, abs_tol=1e-12):
        return 3
    if lp == 0:
        return 1
    ratio = lc / lp
    if ratio >= ratio_threshold:
        return 1
    if ratio > 1:
        return 2
    if ratio > 1.0 / ratio_threshold:
        return 4
    return 5


def settled_charger_size(lambda_charger: float, lambda_pv_es: float, p_c_max: float) -> float:
    """Stationary point of the cost curve; requires lambda_charger > lambda_pv_es."""
    if lambda_charger <= lambda_pv_es:
        raise DegeneratePrices("interior optimum needs lambda_charger > lambda_pv_es")
    return math.sqrt(lambda_charger**2 * p_c_max**2 / (lambda_charger**2 - lambda_pv_es**2))


def optimal_charger_size(prices: PriceSet, p_c_max: float, q_ref: float) -> float:
    """Settled charger size clamped to the size that alone covers ``q_ref``."""
    if q_ref < 0:
        raise ValueError("q_ref must be >= 0")
    s_set = settled_charger_size(prices.lambda_charger, prices.lambda_pv_es, p_c_max)
    return min(s_set, max_charger_size(p_c_max, q_ref))


def size_system(inputs: SizingInputs, prices: PriceSet,
                ratio_threshold: float = SCENARIO1_RATIO) -> SizingResult:
    p, q_ref, eta = inputs.p_c_max, inputs.q_ref, inputs.eta
    scenario = classify_scenario(prices, ratio_threshold)
    s_max = max_charger_size(p, q_ref)
    if scenario == 2:
        s_ch = optimal_charger_size(prices, p, q_ref)
    elif scenario == 1:
        s_ch = p
    else:
        s_ch = s_max
    q_ch = charger_reactive_capacity(s_ch, p)
    q_pv = max(0.0, q_ref - q_ch)
    s_pv = q_pv / eta
    p_pv = s_pv * math.sqrt(1.0 - eta**2)
    binding = False
    need = inputs.delta * inputs.p_ref
    if p_pv < need:
        if eta >= 1.0:
            raise InfeasibleEta("a pure-var PV inverter cannot meet a minimum real output")
        s_pv = need / math.sqrt(1.0 - eta**2)
        s_ch = math.hypot(max(0.0, q_ref - eta * s_pv), p)
        q_ch = charger_reactive_capacity(s_ch, p)
        q_pv = eta * s_pv
        p_pv = s_pv * math.sqrt(1.0 - eta**2)
        binding = True
    e_es = prices.alpha * s_pv
    p_es = prices.beta * s_pv
    return SizingResult(s_ch, s_pv, e_es, p_es, cost(s_ch, s_pv, prices), scenario, binding,
                        q_ch, q_pv, p_pv)


def storage_requirements(pv_kw: np.ndarray, need_kw: np.ndarray, step_minutes: int = 1):
    """Energy (kWh) and power (kW) storage must absorb for one day.

    Surplus is PV above the concurrent support need; the energy figure is
    the running total of surplus, i.e. everything that has to be shifted.
    """
    surplus = np.clip(np.asarray(pv_kw) - np.asarray(need_kw), 0.0, None)
    cum = np.cumsum(surplus) * step_minutes / 60.0
    return float(cum.max(initial=0.0)), float(surplus.max(initial=0.0))


def fit_alpha_beta(pv_profiles, charging_profiles, q_ref: float, need_threshold_kw: float = 0.0,
                   grid=None) -> tuple[float, float]:
    """Least-squares slopes through the origin of storage energy and power vs PV size.

    ``pv_profiles`` are per-unit (output per kVA of PV) daily series and
    ``charging_profiles`` matching daily station loads in kW. Support need
    at each step is the station load above ``need_threshold_kw``. PV sizes
    sweep 10 % to 200 % of ``q_ref`` unless ``grid`` is given.
    """
    pv = [np.asarray(getattr(p, "values", p), dtype=float) for p in pv_profiles]
    ch = [np.asarray(getattr(c, "values", c), dtype=float) for c in charging_profiles]
    if not pv or not ch:
        raise EmptyProfiles("need at least one PV and one charging day")
    if len(pv) != len(ch) or any(len(a) != len(b) for a, b in zip(pv, ch)):
        raise ValueError("PV and charging profiles must pair up day by day with equal lengths")
    if grid is None:
        grid = np.arange(1, 21) * 0.1 * q_ref
    sizes, energies, powers = [], [], []
    for s in np.asarray(grid, dtype=float):
        for p_day, c_day in zip(pv, ch):
            need = np.clip(c_day - need_threshold_kw, 0.0, None)
            e, pw = storage_requirements(s * p_day, need)
            sizes.append(s)
            energies.append(e)
            powers.append(pw)
    x = np.array(sizes)
    denom = float(x @ x)
    if denom == 0:
        return 0.0, 0.0
    return float(x @ np.array(energies) / denom), float(x @ np.array(powers) / denom)


def dumps_result(inputs: SizingInputs, prices: PriceSet, result: SizingResult) -> str:
    doc = {
        "inputs": asdict(inputs),
        "prices": {**asdict(prices), "lambda_pv_es": prices.lambda_pv_es},
        "result": result.to_dict(),
    }
    return json.dumps(doc, indent=2, sort_keys=True)


def inputs_from_dict(doc: dict) -> SizingInputs:
    return SizingInputs(**doc)


def prices_from_dict(doc: dict) -> PriceSet:
    doc = {k: v for k, v in doc.items() if k != "lambda_pv_es"}
    return PriceSet(**doc)
