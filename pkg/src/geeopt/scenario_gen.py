"""Random scenario generation (uniform drops, path loss, Rayleigh fading)
and JSON persistence of :class:`~geeopt.model.Scenario`."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .model import Scenario, ScenarioError

TOPOLOGIES = ("paired", "single-center")
MIN_DISTANCE = 1.0  # meters


class ScenarioFormatError(ScenarioError):
    """Malformed scenario file; ``field`` names the offending entry."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


def dbw_to_watt(x):
    return 10.0 ** (np.asarray(x, dtype=float) / 10.0)


def dbm_to_watt(x):
    return 10.0 ** ((np.asarray(x, dtype=float) - 30.0) / 10.0)


@dataclass(frozen=True)
class GenConfig:
    """Parameters of the random network drop. Powers are in dB units."""

    K: int = 12
    N: int = 4
    edge: float = 200.0
    bandwidth: float = 10930.0
    noise_density_dbm: float = -173.0
    p_static_dbw: float = -20.0
    pathloss_exp: float = 4.0
    xi_ratio: float = 0.01
    mu: float = 1.02
    p_max_dbw: float = -10.0
    r_min: float = 0.0
    topology: str = "paired"
    seed: int = 0

    def __post_init__(self):
        if self.K < 1 or self.N < 1:
            raise ValueError("K and N must be at least 1")
        if self.edge <= 0 or self.pathloss_exp <= 0:
            raise ValueError("edge and pathloss_exp must be positive")
        if self.xi_ratio < 0:
            raise ValueError("xi_ratio must be non-negative")
        if self.topology not in TOPOLOGIES:
            raise ValueError(f"topology must be one of {TOPOLOGIES}")

    @classmethod
    def from_dict(cls, d: dict) -> "GenConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown GenConfig field(s): {sorted(unknown)}")
        return cls(**d)

    def with_(self, **changes) -> "GenConfig":
        return GenConfig(**{**asdict(self), **changes})


def _draw_positions(rng, cfg: GenConfig):
    while True:
        tx = rng.uniform(0.0, cfg.edge, size=(cfg.K, 2))
        if cfg.topology == "paired":
            rx = rng.uniform(0.0, cfg.edge, size=(cfg.K, 2))
        else:
            rx = np.full((1, 2), cfg.edge / 2.0)
        dist = np.linalg.norm(tx[:, None, :] - rx[None, :, :], axis=-1)
        if dist.min() >= MIN_DISTANCE:
            return tx, rx, dist


def generate(cfg: GenConfig) -> Scenario:
    """Draw one scenario. Identical ``cfg`` (seed included) gives an identical result."""
    rng = np.random.default_rng(cfg.seed)
    _, _, dist = _draw_positions(rng, cfg)
    K, N = cfg.K, cfg.N
    pathloss = dist ** (-cfg.pathloss_exp)  # (K tx, R rx)
    # unit-mean exponential power = Rayleigh envelope
    fading = rng.exponential(1.0, size=pathloss.shape + (N,))
    gain = fading * pathloss[:, :, None]
    if cfg.topology == "paired":
        alpha = gain[np.arange(K), np.arange(K)]
        beta = gain
    else:
        alpha = gain[:, 0, :]
        beta = np.repeat(gain, K, axis=1)
    noise = np.full(N, float(dbm_to_watt(cfg.noise_density_dbm)) * cfg.bandwidth)
    return Scenario(
        bandwidth=cfg.bandwidth,
        noise=noise,
        alpha=alpha,
        xi=cfg.xi_ratio * alpha,
        beta=beta,
        mu=np.full((K, N), cfg.mu),
        p_static=np.full(K, float(dbw_to_watt(cfg.p_static_dbw))),
        p_max=np.full(K, float(dbw_to_watt(cfg.p_max_dbw))),
        r_min=np.full(K, float(cfg.r_min)),
        meta={"gen": asdict(cfg), "seed": cfg.seed},
    )


_ARRAY_FIELDS = ("noise", "alpha", "xi", "beta", "mu", "p_static", "p_max", "r_min")


def to_dict(s: Scenario) -> dict:
    d = {"bandwidth": s.bandwidth}
    for name in _ARRAY_FIELDS:
        d[name] = getattr(s, name).tolist()
    d["meta"] = s.meta
    return d


def from_dict(d) -> Scenario:
    if not isinstance(d, dict):
        raise ScenarioFormatError("scenario document must be a JSON object")
    for name in ("bandwidth",) + _ARRAY_FIELDS:
        if name not in d:
            raise ScenarioFormatError(f"missing field {name}", field=name)
    kw = {}
    for name in ("bandwidth",) + _ARRAY_FIELDS:
        try:
            kw[name] = np.array(d[name], dtype=float)
        except (TypeError, ValueError) as exc:
            raise ScenarioFormatError(f"field {name} is not numeric: {exc}", field=name) from None
    kw["bandwidth"] = float(kw["bandwidth"]) if kw["bandwidth"].ndim == 0 else None
    if kw["bandwidth"] is None:
        raise ScenarioFormatError("field bandwidth must be a scalar", field="bandwidth")
    meta = d.get("meta", {})
    if not isinstance(meta, dict):
        raise ScenarioFormatError("field meta must be an object", field="meta")
    return Scenario(meta=meta, **kw)


def save(s: Scenario, path) -> None:
    Path(path).write_text(json.dumps(to_dict(s), indent=1))


def load(path) -> Scenario:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioFormatError(f"invalid JSON: {exc}") from None
    return from_dict(doc)
