"""Run configuration: INI-style files flattened to ``section.key`` entries.

Grammar (``configparser`` dialect)::

    [section]
    key = value          ; comments with ; or #

Lists are comma separated. Hotspots of the synthetic city are sections named
``hotspot.<name>``. Every key can be overridden on the command line with
``--set section.key=value``.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass

from .geom import BBox, GeoPoint
from .ingest import ConfigError, Hotspot, SplitPlan, SynthConfig
from .models.registry import MODEL_NAMES, ModelSpec
from .models.training import TrainConfig
from .sweep import SweepConfig

# key -> (parser, default); None default means required when used
SCHEMA = {
    "data.bbox": ("floats", None),
    "data.tz_offset_h": ("float", 8.0),
    "data.start_ts": ("int", None),
    "data.n_days": ("int", None),
    "synth.preset": ("str", "two_hotspot"),
    "synth.n_days": ("int", 30),
    "synth.interval_min": ("float", 5.0),
    "synth.start_ts": ("int", 1477929600),
    "synth.volatility": ("float", 0.25),
    "synth.persistence": ("float", 0.95),
    "synth.day_sigma": ("float", 0.2),
    "synth.weekend_factor": ("float", 1.108),
    "synth.rate": ("float", 30.0),
    "grid.shape": ("str", "hex"),
    "grid.spatial_m": ("float", 800.0),
    "grid.interval_min": ("int", 30),
    "grid.kind": ("str", "departure"),
    "split.plans": ("strs", ["G0"]),
    "split.n_train": ("int", 21),
    "sweep.shapes": ("strs", ["hex", "square"]),
    "sweep.hex_sides_m": ("floats", [200, 500, 800, 1200, 1600, 2000]),
    "sweep.square_sides_m": ("floats", [300, 800, 1300, 1900, 2600, 3200]),
    "sweep.intervals_min": ("ints", [15, 30, 45, 60, 90, 120]),
    "sweep.kinds": ("strs", ["departure", "arrival"]),
    "sweep.models": ("strs", ["ha"]),
    "model.name": ("str", "hconvlstm"),
    "model.layers": ("ints", [8, 16, 32, 32]),
    "model.lstm_hidden": ("int", 128),
    "model.h": ("int", 8),
    "model.dropout_p": ("float", 0.2),
    "model.use_batch_norm": ("bool", True),
    "model.kernel_size": ("int", 3),
    "train.epochs": ("int", 50),
    "train.batch_size": ("int", 128),
    "train.lam": ("float", 0.01),
    "train.lr": ("float", 1e-3),
    "train.beta1": ("float", 0.9),
    "train.beta2": ("float", 0.999),
    "train.eps": ("float", 1e-8),
    "train.max_train_samples": ("int", None),
    "output.timing": ("bool", False),
}
HOTSPOT_KEYS = {"lon": "float", "lat": "float", "sigma_m": "float", "rate": "float", "attraction": "float",
                "profile": "str", "phase_h": "float"}


def _convert(kind: str, raw: str, key: str):
    raw = raw.strip()
    try:
        if kind == "str":
            return raw
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        items = [s.strip() for s in raw.split(",") if s.strip()]
        if kind == "strs":
            return items
        if kind == "ints":
            return [int(s) for s in items]
        if kind == "floats":
            return [float(s) for s in items]
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {kind}") from None
    raise ConfigError(f"{key}: unknown value type {kind}")


@dataclass
class RunConfig:
    values: dict  # flattened "section.key" -> parsed value
    hotspots: dict  # name -> {field: value}

    def get(self, key: str, default=None):
        if key in self.values:
            return self.values[key]
        if key in SCHEMA and SCHEMA[key][1] is not None:
            return SCHEMA[key][1]
        return default

    def require(self, key: str):
        v = self.get(key)
        if v is None:
            raise ConfigError(f"missing required setting {key}")
        return v

    # ------------------------------------------------------------ builders

    def bbox(self) -> BBox:
        """data.bbox, or the preset city's box when none is given."""
        if "data.bbox" not in self.values and not self.hotspots and self.get("synth.preset") == "two_hotspot":
            from .sweep import two_hotspot_city

            return two_hotspot_city(n_days=1)[0].bbox
        vals = self.require("data.bbox")
        if len(vals) != 4:
            raise ConfigError("data.bbox needs min_lon,min_lat,max_lon,max_lat")
        return BBox(*vals)

    def tz_offset(self) -> int:
        return int(round(self.get("data.tz_offset_h") * 3600))

    def train_config(self, seed: int) -> TrainConfig:
        kw = {k: self.get(f"train.{k}") for k in ("epochs", "batch_size", "lam", "lr", "beta1", "beta2", "eps",
                                                    "max_train_samples")}
        return TrainConfig(seed=seed, **kw)

    def model_spec(self, seed: int) -> ModelSpec:
        return ModelSpec(layers=tuple(self.get("model.layers")), lstm_hidden=self.get("model.lstm_hidden"),
                         h=self.get("model.h"), dropout_p=self.get("model.dropout_p"),
                         use_batch_norm=self.get("model.use_batch_norm"), kernel_size=self.get("model.kernel_size"),
                         train=self.train_config(seed))

    def plans(self, n_days: int) -> list[SplitPlan]:
        return [SplitPlan(c, n_days, self.get("split.n_train")) for c in self.get("split.plans")]

    def synth_config(self) -> SynthConfig:
        from .sweep import two_hotspot_city

        n_days = self.get("synth.n_days")
        if self.hotspots:
            spots = []
            for name in sorted(self.hotspots):
                h = dict(self.hotspots[name])
                try:
                    center = GeoPoint(h.pop("lon"), h.pop("lat"))
                except KeyError:
                    raise ConfigError(f"hotspot.{name} needs lon and lat") from None
                spots.append(Hotspot(center, **h))
            bbox = self.bbox() if "data.bbox" in self.values else None
            synth = SynthConfig(spots, n_days=n_days, bbox=bbox)
        elif self.get("synth.preset") == "two_hotspot":
            synth, _, _ = two_hotspot_city(n_days=n_days, rate=self.get("synth.rate"),
                                           volatility=self.get("synth.volatility"),
                                           day_sigma=self.get("synth.day_sigma"))
        else:
            raise ConfigError(f"unknown synth.preset {self.get('synth.preset')!r}")
        synth.interval_min = self.get("synth.interval_min")
        synth.start_ts = self.get("synth.start_ts")
        synth.volatility = self.get("synth.volatility")
        synth.persistence = self.get("synth.persistence")
        synth.day_sigma = self.get("synth.day_sigma")
        synth.weekend_factor = self.get("synth.weekend_factor")
        synth.tz_offset = self.tz_offset()
        return synth

    def sweep_config(self, n_days: int) -> SweepConfig:
        models = tuple(self.get("sweep.models"))
        unknown = [m for m in models if m not in MODEL_NAMES]
        if unknown:
            raise ConfigError(f"unknown models in sweep.models: {unknown}")
        return SweepConfig(bbox=self.bbox(), shapes=tuple(self.get("sweep.shapes")),
                           hex_sides_m=tuple(self.get("sweep.hex_sides_m")),
                           square_sides_m=tuple(self.get("sweep.square_sides_m")),
                           intervals_min=tuple(self.get("sweep.intervals_min")),
                           kinds=tuple(self.get("sweep.kinds")), models=models, plans=tuple(self.plans(n_days)),
                           tz_offset=self.tz_offset(), start_ts=self.get("data.start_ts"), n_days=n_days)


def parse_config(text: str = "", overrides=()) -> RunConfig:
    """Parse INI text and ``section.key=value`` overrides into a :class:`RunConfig`."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config syntax error: {exc}") from None
    raw: dict[str, str] = {}
    for section in cp.sections():
        for key, value in cp.items(section):
            raw[f"{section}.{key}"] = value
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep or "." not in key:
            raise ConfigError(f"override {item!r} is not section.key=value")
        raw[key.strip()] = value
    values, hotspots = {}, {}
    for key, value in raw.items():
        if key.startswith("hotspot."):
            name, _, field = key[len("hotspot."):].rpartition(".")
            if field not in HOTSPOT_KEYS or not name:
                raise ConfigError(f"unknown hotspot setting {key}")
            hotspots.setdefault(name, {})[field] = _convert(HOTSPOT_KEYS[field], value, key)
            continue
        if key not in SCHEMA:
            raise ConfigError(f"unknown setting {key}")
        values[key] = _convert(SCHEMA[key][0], value, key)
    return RunConfig(values, hotspots)


def load_config(path=None, overrides=()) -> RunConfig:
    text = ""
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, overrides)
