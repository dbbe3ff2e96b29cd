"""Problem constants, road geometry and configuration ingestion.

All other modules read from the two frozen dataclasses defined here.
Geometry conventions (positions are own-lane arc length from the origin):

* ``L2``       station of the mid merge point on the l2/l3 paths.
* ``L3``       control-zone length; exit station for every vehicle that
               does not change lanes (their final merge point sits there).
* ``L4``       station of the lane-1 final merge point as seen by vehicles
               that entered at the lane-1 origin.  A lane change costs an
               extra ``l_extra`` of path, so the same physical point sits at
               ``L4 + l_extra`` (= ``L3`` with the default numbers) for a
               vehicle that entered on l2/l3 and crosses over.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

MODE_OCBF = "ocbf"
MODE_CBF_ONLY = "cbf"


class ConfigError(ValueError):
    """Raised on unparseable config input or an invariant violation."""


def beta_from_alpha(alpha: float, u_min: float, u_max: float) -> float:
    """Time-vs-energy weight derived from the trade-off fraction ``alpha``.

    ``alpha`` must lie in [0, 1); 1 would be the pure minimum-time problem,
    which is outside this operation's domain.
    """
    if not 0.0 <= alpha < 1.0:
        raise ConfigError(f"alpha must be in [0, 1), got {alpha}")
    return alpha * max(u_max * u_max, u_min * u_min) / (2.0 * (1.0 - alpha))


@dataclass(frozen=True)
class ScenarioParams:
    """Fixed constants of the merging scenario; immutable after load."""

    L2: float = 400.0
    L3: float = 407.0
    L4: float = 406.0622
    l_extra: float = 0.9378
    phi: float = 1.8           # reaction time [s]
    delta: float = 0.0         # standstill gap [m]
    v_min: float = 0.0
    v_max: float = 30.0
    u_min: float = -5.886
    u_max: float = 3.924
    alpha: float | None = None  # optional trade-off used to derive beta
    beta: float = 1.0          # time weight in the per-vehicle objective
    eps_clf: float = 10.0      # convergence rate of the tracking constraint
    classk_gain: float = 1.0   # coefficient of the cubic class-K function
    dt: float = 0.1            # control / integration step [s]
    capacity_n: int = 1000     # index offset between the two queues

    def validate(self) -> None:
        if self.v_min < 0.0:
            raise ConfigError(f"v_min must be >= 0, got {self.v_min}")
        if self.v_max <= self.v_min:
            raise ConfigError("v_max must exceed v_min")
        if not self.u_min < 0.0 < self.u_max:
            raise ConfigError("acceleration bounds must satisfy u_min < 0 < u_max")
        if self.phi <= 0.0:
            raise ConfigError(f"phi must be > 0, got {self.phi}")
        if self.delta < 0.0:
            raise ConfigError(f"delta must be >= 0, got {self.delta}")
        if self.dt <= 0.0:
            raise ConfigError(f"dt must be > 0, got {self.dt}")
        if self.capacity_n <= 0:
            raise ConfigError("capacity_n must be a positive integer")
        if not self.L2 < self.L3:
            raise ConfigError("geometry requires L2 < L3")
        if self.l_extra < 0.0:
            raise ConfigError(f"l_extra must be >= 0, got {self.l_extra}")
        if self.alpha is not None and not 0.0 <= self.alpha < 1.0:
            raise ConfigError(f"alpha must be in [0, 1), got {self.alpha}")
        if self.beta < 0.0:
            raise ConfigError(f"beta must be >= 0, got {self.beta}")
        if self.eps_clf <= 0.0:
            raise ConfigError(f"eps_clf must be > 0, got {self.eps_clf}")
        if self.classk_gain <= 0.0:
            raise ConfigError(f"classk_gain must be > 0, got {self.classk_gain}")


@dataclass(frozen=True)
class SimConfig:
    """Arrival, noise and run-control settings for one simulation."""

    arrival_rate_main: float = 2000.0   # vehicles/hour on the main road
    arrival_rate_merge: float = 1200.0  # vehicles/hour on the merging road
    v0_low: float = 15.0
    v0_high: float = 20.0
    noise_enabled: bool = False
    w1_bound: float = 2.0      # position-channel noise amplitude [m/s]
    w2_bound: float = 0.05     # acceleration-channel amplitude [m/s^2]
    rng_seed: int = 0
    horizon: float = 600.0     # simulated seconds
    controller_mode: str = MODE_OCBF

    def validate(self, params: ScenarioParams | None = None) -> None:
        if self.arrival_rate_main <= 0.0 or self.arrival_rate_merge <= 0.0:
            raise ConfigError("arrival rates must be > 0")
        if self.v0_low > self.v0_high:
            raise ConfigError("v0 range inverted: v0_low > v0_high")
        if self.w1_bound < 0.0 or self.w2_bound < 0.0:
            raise ConfigError("noise bounds must be nonnegative")
        if self.horizon < 0.0:
            raise ConfigError(f"horizon must be >= 0, got {self.horizon}")
        if self.controller_mode not in (MODE_OCBF, MODE_CBF_ONLY):
            raise ConfigError(f"unknown controller_mode {self.controller_mode!r}")
        if params is not None:
            if self.v0_low < params.v_min or self.v0_high > params.v_max:
                raise ConfigError("v0 range must lie within [v_min, v_max]")


def _coerce(section: dict, cls, label: str):
    fields = {f.name: f for f in dataclasses.fields(cls)}
    clean = {}
    for key, value in section.items():
        if key not in fields:
            raise ConfigError(f"unknown {label} key {key!r}")
        clean[key] = value
    try:
        return cls(**clean)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(source) -> tuple[ScenarioParams, SimConfig]:
    """Build ``(ScenarioParams, SimConfig)`` from a JSON document or dict.

    ``source`` may be a mapping, a JSON string, or a path to a JSON file
    with optional top-level sections ``scenario`` and ``sim``.  Missing
    keys take the defaults above.  When ``alpha`` is given without an
    explicit ``beta``, ``beta`` is derived from it; an explicit ``beta``
    always wins.
    """
    if isinstance(source, dict):
        doc = source
    else:
        text = None
        if isinstance(source, Path):
            text = source.read_text()
        elif isinstance(source, str):
            stripped = source.lstrip()
            if stripped.startswith("{") or stripped == "":
                text = source or "{}"
            else:
                text = Path(source).read_text()
        elif hasattr(source, "read"):
            text = source.read()
        else:
            raise ConfigError(f"unsupported config source {type(source)!r}")
        try:
            doc = json.loads(text) if text.strip() else {}
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config parse failure: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a JSON object")

    scen_sec = dict(doc.get("scenario", {}))
    sim_sec = dict(doc.get("sim", {}))
    explicit_beta = "beta" in scen_sec

    params = _coerce(scen_sec, ScenarioParams, "scenario")
    if params.alpha is not None and not explicit_beta:
        derived = beta_from_alpha(params.alpha, params.u_min, params.u_max)
        params = dataclasses.replace(params, beta=derived)
    params.validate()

    sim = _coerce(sim_sec, SimConfig, "sim")
    sim.validate(params)
    return params, sim


def dump_config(params: ScenarioParams, sim: SimConfig) -> dict:
    """Serialize a parameter pair back to the nested dict form."""
    return {
        "scenario": dataclasses.asdict(params),
        "sim": dataclasses.asdict(sim),
    }
