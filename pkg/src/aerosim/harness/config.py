"""Scenario configuration: a line-oriented ``section.key = value`` file.

Blank lines and ``#`` comments are ignored.  Every key belongs to one of the
sections below and has a default; unknown keys, repeated keys and values that
fail to parse are errors carrying the line number.  After parsing, a rule
table checks cross-key constraints and names the offending key.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Callable

SECTIONS = ("ofdm", "dme", "channel", "estimation", "beams", "access", "rl", "run")


class ConfigError(ValueError):
    """Invalid configuration; ``key`` and ``line`` locate the problem when known."""

    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(key)
        super().__init__(f"{': '.join(where)}: {message}" if where else message)
        self.key = key
        self.line = line


@dataclass(frozen=True)
class Field:
    key: str
    kind: str  # "int", "float", "str", "ints", "floats"
    default: Any
    doc: str


SCHEMA: tuple[Field, ...] = (
    Field("ofdm.subcarrier_spacing", "float", 9765.625, "subcarrier spacing (Hz)"),
    Field("ofdm.fft_size", "int", 64, "FFT length"),
    Field("ofdm.cp_len", "int", 11, "cyclic prefix (samples), < fft_size"),
    Field("ofdm.used_subcarriers", "int", 50, "occupied subcarriers around DC, even"),
    Field("ofdm.n_nulls", "int", 8, "null subcarriers spread over the used band"),
    Field("ofdm.n_short_syms", "int", 4, "repetitions in the short training section"),
    Field("ofdm.short_decimation", "int", 4, "short symbol length is fft_size / short_decimation"),
    Field("ofdm.frame_syms", "int", 40, "frame length (symbols) that pilot overhead refers to"),
    Field("dme.mode", "str", "X", "pulse-pair mode, X (12 us) or Y (30 us)"),
    Field("dme.pulse_half_amp_width", "float", 3.5e-6, "Gaussian pulse width at half amplitude (s)"),
    Field("dme.arrival_rate", "float", 3600.0, "pulse pairs per second per DME channel"),
    Field("dme.channel_offset", "float", 0.5e6, "DME channel offset from the link centre (Hz)"),
    Field("dme.sir_db", "float", -3.8, "element-level SIR of the estimation frame (dB)"),
    Field("channel.n_gs", "int", 32, "GS array elements"),
    Field("channel.n_ac", "int", 4, "aircraft array elements"),
    Field("channel.n_rf_gs", "int", 4, "GS RF chains"),
    Field("channel.element_spacing", "float", 0.5, "element spacing (wavelengths)"),
    Field("channel.rician_db", "float", 15.0, "LoS to scattered power ratio (dB)"),
    Field("channel.n_scatter", "int", 4, "scattered paths"),
    Field("channel.beamwidth_deg", "float", 3.5, "angular spread of scattered paths (deg)"),
    Field("channel.speed", "float", 277.78, "ground speed (m/s)"),
    Field("channel.pass_altitude_m", "float", 10000.0, "track-pass altitude (m)"),
    Field("channel.pass_lateral_m", "float", 2000.0, "track-pass horizontal miss distance (m)"),
    Field("channel.pass_halfspan_s", "float", 120.0, "track-pass window either side of closest approach (s)"),
    Field("channel.pass_points", "int", 241, "track-pass time samples"),
    Field("channel.plan_offset_m", "float", 500.0, "cross-track error of the actual pass against the plan (m)"),
    Field("estimation.snr_db", "float", 15.0, "element-level SNR of the estimation frame (dB)"),
    Field("estimation.pilot_overhead_pct", "floats", (10.0, 15.0, 20.0, 25.0, 30.0), "pilot overhead grid (%)"),
    Field("estimation.n_seeds", "int", 100, "frames per overhead point"),
    Field("estimation.dme_budget", "int", 16, "DME atoms per excision window"),
    Field("estimation.max_support", "int", 10, "largest joint angular support"),
    Field("estimation.dict_oversample", "int", 2, "angular dictionary oversampling"),
    Field("beams.snr_grid_db", "floats", (0.0, 3.0, 6.0, 9.0, 12.0), "data-phase matched-beam SNR grid (dB)"),
    Field("beams.n_bits", "int", 100000, "minimum bits per SNR point"),
    Field("beams.data_sir_db", "float", -15.0, "data-phase DME level per antenna against the matched beam (dB)"),
    Field("beams.n_pilot_syms", "int", 8, "pilot symbols of the estimation frame"),
    Field("beams.n_train_syms", "int", 2, "training symbols for low-dimensional tracking"),
    Field("beams.n_data_syms", "int", 29, "data symbols per frame"),
    Field("beams.min_range_m", "float", 5000.0, "smallest initial slant range (m)"),
    Field("beams.max_range_m", "float", 20000.0, "largest initial slant range (m)"),
    Field("beams.frames_per_flight", "int", 10, "frames per simulated flight"),
    Field("beams.frame_interval", "float", 0.5, "time between beam updates (s)"),
    Field("beams.forgetting", "float", 0.5, "DME covariance forgetting factor in (0, 1]"),
    Field("beams.pgd_step", "float", 0.05, "PGD step (rad of analog phase)"),
    Field("beams.pgd_iters", "int", 5, "PGD iterations per frame"),
    Field("beams.ao_max_outer", "int", 20, "AO outer iterations"),
    Field("access.n_aircraft", "int", 6, "aircraft served"),
    Field("access.n_clusters", "int", 0, "clusters; 0 means ceil(n_aircraft / 2)"),
    Field("access.n_slots", "int", 2, "time slots per frame"),
    Field("access.budget", "float", 1.0, "transmit power per cluster"),
    Field("access.min_rate", "float", 0.5, "minimum rate per aircraft (bits/s/Hz)"),
    Field("access.snr_grid_db", "floats", (-10.0, -5.0, 0.0, 5.0, 10.0), "element-level SNR grid (dB)"),
    Field("access.n_draws", "int", 50, "random geometries per SNR point"),
    Field("access.airway_spread_deg", "float", 1.0, "bearing spread of the aircraft sharing an airway (deg)"),
    Field("rl.sigma_m", "float", 1500.0, "cross-track offset standard deviation (m)"),
    Field("rl.episodes", "int", 800, "training episodes per run"),
    Field("rl.n_checkpoints", "int", 8, "evenly spaced evaluation checkpoints"),
    Field("rl.n_seeds", "int", 5, "runs per algorithm"),
    Field("rl.tau", "float", 1.0, "softmax temperature"),
    Field("rl.eps", "float", 1.0, "KL radius of the robust target (nats)"),
    Field("rl.alpha", "float", 0.1, "TD step size"),
    Field("rl.gamma", "float", 0.9, "discount"),
    Field("rl.explore", "float", 0.1, "epsilon-greedy rate of the standard learner"),
    Field("rl.n_eval", "int", 50, "evaluation episodes per checkpoint"),
    Field("run.threads", "int", 0, "worker processes; 0 means all cores (AEROSIM_THREADS caps either)"),
)

_BY_KEY = {f.key: f for f in SCHEMA}


def _parse_value(kind: str, text: str):
    if kind == "int":
        return int(text)
    if kind == "float":
        v = float(text)
        if not math.isfinite(v):
            raise ValueError("must be finite")
        return v
    if kind == "str":
        return text
    items = [t.strip() for t in text.split(",") if t.strip()]
    if not items:
        raise ValueError("empty list")
    conv = int if kind == "ints" else float
    return tuple(conv(t) for t in items)


def format_value(kind: str, v) -> str:
    if kind == "float":
        return repr(float(v))
    if kind == "floats":
        return ", ".join(repr(float(x)) for x in v)
    if kind == "ints":
        return ", ".join(str(int(x)) for x in v)
    return str(v)


class Config:
    """Immutable mapping from ``section.key`` to a typed value."""

    def __init__(self, values: dict | None = None):
        vals = {f.key: f.default for f in SCHEMA}
        for k, v in (values or {}).items():
            if k not in _BY_KEY:
                raise ConfigError("unknown key", key=k)
            vals[k] = v
        self._values = vals

    def __getitem__(self, key: str):
        return self._values[key]

    def __eq__(self, other) -> bool:
        return isinstance(other, Config) and self._values == other._values

    def __repr__(self) -> str:
        return f"Config({self._values!r})"

    def as_dict(self) -> dict:
        return dict(self._values)

    def replace(self, **changes) -> "Config":
        """Copy with keys given as ``section__key=value``."""
        vals = dict(self._values)
        for k, v in changes.items():
            vals[k.replace("__", ".", 1)] = v
        cfg = Config(vals)
        validate(cfg)
        return cfg

    def section(self, name: str) -> dict:
        pre = name + "."
        return {k[len(pre) :]: v for k, v in self._values.items() if k.startswith(pre)}


def default_config() -> Config:
    return Config()


def format_config(cfg: Config) -> str:
    """Schema-complete text that :func:`parse_config_text` reads back unchanged."""
    lines = []
    current = None
    for f in SCHEMA:
        sec = f.key.split(".", 1)[0]
        if sec != current:
            if current is not None:
                lines.append("")
            lines.append(f"# [{sec}]")
            current = sec
        lines.append(f"# {f.doc}")
        lines.append(f"{f.key} = {format_value(f.kind, cfg[f.key])}")
    return "\n".join(lines) + "\n"


def parse_config_text(text: str) -> Config:
    values: dict = {}
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("expected 'section.key = value'", line=n)
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in _BY_KEY:
            raise ConfigError("unknown key", key=key, line=n)
        if key in values:
            raise ConfigError("key given twice", key=key, line=n)
        try:
            values[key] = _parse_value(_BY_KEY[key].kind, val)
        except ValueError as e:
            raise ConfigError(f"cannot read {val!r} as {_BY_KEY[key].kind}: {e}", key=key, line=n) from None
    cfg = Config(values)
    validate(cfg)
    return cfg


def parse_config(path) -> Config:
    """Read and validate a configuration file."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        raise ConfigError(f"cannot read config file: {e}") from None
    return parse_config_text(text)


Rule = tuple[str, Callable[[Config], bool], str]

RULES: tuple[Rule, ...] = (
    ("ofdm.subcarrier_spacing", lambda c: c["ofdm.subcarrier_spacing"] > 0, "must be positive"),
    ("ofdm.fft_size", lambda c: c["ofdm.fft_size"] >= 2, "must be at least 2"),
    ("ofdm.cp_len", lambda c: 0 <= c["ofdm.cp_len"] < c["ofdm.fft_size"], "must satisfy 0 <= cp_len < fft_size"),
    (
        "ofdm.used_subcarriers",
        lambda c: 0 < c["ofdm.used_subcarriers"] <= c["ofdm.fft_size"] - 1 and c["ofdm.used_subcarriers"] % 2 == 0,
        "must be even and in [2, fft_size - 1]",
    ),
    ("ofdm.n_nulls", lambda c: 0 <= c["ofdm.n_nulls"] < c["ofdm.used_subcarriers"], "must be in [0, used_subcarriers)"),
    ("ofdm.n_short_syms", lambda c: c["ofdm.n_short_syms"] >= 2, "must be at least 2"),
    (
        "ofdm.short_decimation",
        lambda c: c["ofdm.short_decimation"] >= 1 and c["ofdm.fft_size"] % c["ofdm.short_decimation"] == 0,
        "must divide fft_size",
    ),
    ("ofdm.frame_syms", lambda c: c["ofdm.frame_syms"] >= 2, "must be at least 2"),
    ("dme.mode", lambda c: c["dme.mode"] in ("X", "Y"), "must be X or Y"),
    ("dme.pulse_half_amp_width", lambda c: c["dme.pulse_half_amp_width"] > 0, "must be positive"),
    ("dme.arrival_rate", lambda c: c["dme.arrival_rate"] >= 0, "must be nonnegative"),
    ("dme.channel_offset", lambda c: abs(c["dme.channel_offset"]) >= 0.5e6, "must be at least 0.5 MHz in magnitude"),
    ("channel.n_gs", lambda c: c["channel.n_gs"] >= 1, "must be at least 1"),
    ("channel.n_ac", lambda c: c["channel.n_ac"] >= 1, "must be at least 1"),
    ("channel.n_rf_gs", lambda c: 1 <= c["channel.n_rf_gs"] <= c["channel.n_gs"], "must be in [1, n_gs]"),
    ("channel.element_spacing", lambda c: c["channel.element_spacing"] > 0, "must be positive"),
    ("channel.n_scatter", lambda c: c["channel.n_scatter"] >= 0, "must be nonnegative"),
    ("channel.beamwidth_deg", lambda c: c["channel.beamwidth_deg"] > 0, "must be positive"),
    ("channel.speed", lambda c: c["channel.speed"] > 0, "must be positive"),
    ("channel.pass_altitude_m", lambda c: c["channel.pass_altitude_m"] > 0, "must be positive"),
    ("channel.pass_lateral_m", lambda c: c["channel.pass_lateral_m"] >= 0, "must be nonnegative"),
    ("channel.pass_halfspan_s", lambda c: c["channel.pass_halfspan_s"] > 0, "must be positive"),
    ("channel.pass_points", lambda c: c["channel.pass_points"] >= 3, "must be at least 3"),
    (
        "estimation.pilot_overhead_pct",
        lambda c: all(0 < x < 100 and round(x / 100 * c["ofdm.frame_syms"]) < c["ofdm.frame_syms"] for x in c["estimation.pilot_overhead_pct"]),
        "each value must be in (0, 100) and leave room in the frame",
    ),
    ("estimation.n_seeds", lambda c: c["estimation.n_seeds"] >= 1, "must be at least 1"),
    ("estimation.dme_budget", lambda c: c["estimation.dme_budget"] >= 1, "must be at least 1"),
    ("estimation.max_support", lambda c: c["estimation.max_support"] >= 1, "must be at least 1"),
    ("estimation.dict_oversample", lambda c: c["estimation.dict_oversample"] >= 1, "must be at least 1"),
    ("beams.n_bits", lambda c: c["beams.n_bits"] >= 1, "must be at least 1"),
    ("beams.n_pilot_syms", lambda c: c["beams.n_pilot_syms"] >= 1, "must be at least 1"),
    ("beams.n_train_syms", lambda c: c["beams.n_train_syms"] >= 1, "must be at least 1"),
    ("beams.n_data_syms", lambda c: c["beams.n_data_syms"] >= 1, "must be at least 1"),
    ("beams.min_range_m", lambda c: 0 < c["beams.min_range_m"], "must be positive"),
    ("beams.max_range_m", lambda c: c["beams.max_range_m"] >= c["beams.min_range_m"], "must be >= beams.min_range_m"),
    ("beams.frames_per_flight", lambda c: c["beams.frames_per_flight"] >= 1, "must be at least 1"),
    ("beams.frame_interval", lambda c: c["beams.frame_interval"] > 0, "must be positive"),
    ("beams.forgetting", lambda c: 0 < c["beams.forgetting"] <= 1, "must be in (0, 1]"),
    ("beams.pgd_step", lambda c: c["beams.pgd_step"] > 0, "must be positive"),
    ("beams.pgd_iters", lambda c: c["beams.pgd_iters"] >= 0, "must be nonnegative"),
    ("beams.ao_max_outer", lambda c: c["beams.ao_max_outer"] >= 1, "must be at least 1"),
    ("access.n_aircraft", lambda c: c["access.n_aircraft"] >= 1, "must be at least 1"),
    ("access.n_clusters", lambda c: 0 <= c["access.n_clusters"] <= c["access.n_aircraft"], "must be in [0, n_aircraft]"),
    ("access.n_slots", lambda c: c["access.n_slots"] >= 1, "must be at least 1"),
    ("access.budget", lambda c: c["access.budget"] > 0, "must be positive"),
    ("access.min_rate", lambda c: c["access.min_rate"] >= 0, "must be nonnegative"),
    ("access.n_draws", lambda c: c["access.n_draws"] >= 1, "must be at least 1"),
    ("access.airway_spread_deg", lambda c: c["access.airway_spread_deg"] >= 0, "must be nonnegative"),
    ("rl.sigma_m", lambda c: c["rl.sigma_m"] >= 0, "must be nonnegative"),
    ("rl.episodes", lambda c: c["rl.episodes"] >= 1, "must be at least 1"),
    ("rl.n_checkpoints", lambda c: 1 <= c["rl.n_checkpoints"] <= c["rl.episodes"], "must be in [1, episodes]"),
    ("rl.n_seeds", lambda c: c["rl.n_seeds"] >= 2, "must be at least 2"),
    ("rl.tau", lambda c: c["rl.tau"] > 0, "must be positive"),
    ("rl.eps", lambda c: c["rl.eps"] >= 0, "must be nonnegative"),
    ("rl.alpha", lambda c: 0 < c["rl.alpha"] <= 1, "must be in (0, 1]"),
    ("rl.gamma", lambda c: 0 <= c["rl.gamma"] < 1, "must be in [0, 1)"),
    ("rl.explore", lambda c: 0 <= c["rl.explore"] <= 1, "must be in [0, 1]"),
    ("rl.n_eval", lambda c: c["rl.n_eval"] >= 1, "must be at least 1"),
    ("run.threads", lambda c: c["run.threads"] >= 0, "must be nonnegative"),
)


def validate(cfg: Config) -> None:
    """Apply the rule table in order; the first violated rule raises."""
    for key, ok, msg in RULES:
        if not ok(cfg):
            raise ConfigError(f"{msg} (got {format_value(_BY_KEY[key].kind, cfg[key])})", key=key)
