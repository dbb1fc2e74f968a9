"""Flat ``key = value`` run configuration with strict key checking."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .data import SplitSpec, gen_ambiguity, gen_blobs, load_csv, split
from .errors import ConfigError
from .losses import SyncConfig
from .scores import ScoreKind
from .train import TrainConfig

# key -> (default, parser). Order here is the order of config.resolved.
_int, _float, _str = int, float, str


def _int_list(text):
    text = text.strip()
    return [int(v) for v in text.split(",")] if text else []


def _auto_int(text):
    return "auto" if text.strip() == "auto" else int(text)


def _batch(text):
    return "full" if text.strip() == "full" else int(text)


SCHEMA = {
    "seed": (0, _int),
    "out_dir": ("run", _str),
    # data
    "data": ("", _str),
    "dataset": ("ambiguity", _str),
    "classes": (4, _int),
    "per_class": (250, _int),
    "noise": (0.2, _float),
    "dim": ("auto", _auto_int),
    "separation": (5.0, _float),
    "train_frac": (0.8, _float),
    "cal_frac": (0.1, _float),
    "test_frac": (0.1, _float),
    # model
    "hidden": ("32,32", _int_list),
    "g_hidden": (32, _int),
    # optimiser
    "epochs": (1000, _int),
    "batch_size": ("full", _batch),
    "lr": (0.05, _float),
    "momentum": (0.9, _float),
    "weight_decay": (5e-4, _float),
    # loss
    "loss": ("sync", _str),
    "coverage": (0.7, _float),
    "lambda": (6.0, _float),
    "alpha": (0.5, _float),
    "mu": (1.0, _float),
    "score": ("smp:0.5", _str),
    "penalty": ("hinge", _str),
    "odds": (2.0, _float),
    # eval
    "mechanism": ("head", _str),
    "grid": ("0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0", _str),
}


def _unquote(v):
    if len(v) >= 2 and v[0] == v[-1] and v[0] in "\"'":
        return v[1:-1]
    return v


def parse_text(text, source="<config>"):
    """Parse config text into ``{key: raw string}``; unknown or repeated keys are errors."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        key, eq, value = stripped.partition("=")
        key = key.strip()
        if not eq or not key:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        if key not in SCHEMA:
            raise ConfigError(f"{source}:{lineno}: unknown key '{key}'")
        if key in raw:
            raise ConfigError(f"{source}:{lineno}: duplicate key '{key}'")
        raw[key] = _unquote(value.strip())
    return raw


@dataclass
class RunConfig:
    values: dict

    def __getitem__(self, key):
        return self.values[key]

    @classmethod
    def from_raw(cls, raw):
        vals = {}
        for key, (default, conv) in SCHEMA.items():
            if key in raw:
                try:
                    vals[key] = conv(raw[key])
                except ValueError:
                    raise ConfigError(f"bad value for '{key}': {raw[key]!r}") from None
            else:
                vals[key] = conv(default) if isinstance(default, str) and conv is not _str else default
        cfg = cls(vals)
        cfg.sync_config()  # validate loss keys early
        return cfg

    @classmethod
    def load(cls, path):
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        return cls.from_raw(parse_text(text, str(path)))

    def with_overrides(self, **kw):
        vals = dict(self.values)
        vals.update(kw)
        return RunConfig(vals)

    def sync_config(self):
        kind = ScoreKind.parse(self["score"])
        return SyncConfig(
            loss_mode=self["loss"],
            target_coverage=self["coverage"],
            lam=self["lambda"],
            alpha=self["alpha"],
            mu=self["mu"],
            score=kind,
            penalty=self["penalty"],
            odds=self["odds"],
        )

    def train_config(self, n_train):
        bs = n_train if self["batch_size"] == "full" else self["batch_size"]
        try:
            return TrainConfig(
                epochs=self["epochs"],
                batch_size=bs,
                lr0=self["lr"],
                momentum=self["momentum"],
                weight_decay=self["weight_decay"],
                seed=self["seed"],
                sync=self.sync_config(),
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def split_spec(self):
        return SplitSpec(self["train_frac"], self["cal_frac"], self["test_frac"], self["seed"])

    @property
    def dim(self):
        """Feature dimension; ``auto`` means one per class (regular simplex)."""
        return self["classes"] if self["dim"] == "auto" else self["dim"]

    def full_dataset(self):
        """The whole generated dataset (ignores ``data``)."""
        kind = self["dataset"]
        if kind == "ambiguity":
            return gen_ambiguity(self["classes"], self["per_class"], self["noise"], self["seed"],
                                 d=self.dim, separation=self["separation"])
        if kind == "blobs":
            return gen_blobs(self["classes"], self["per_class"], self.dim, self["separation"], self["seed"])
        raise ConfigError(f"unknown dataset '{kind}' (expected ambiguity or blobs)")

    def training_set(self):
        """CSV file if ``data`` is set, else the train split of the generated data."""
        if self["data"]:
            return load_csv(self["data"])
        return split(self.full_dataset(), self.split_spec())[0]

    def grid(self):
        try:
            return [float(v) for v in self["grid"].split(",")]
        except ValueError:
            raise ConfigError(f"bad grid {self['grid']!r}") from None

    def render(self):
        """Canonical text with every key; parsing it back gives the same config."""
        lines = []
        for key, value in self.values.items():
            if isinstance(value, list):
                value = ",".join(str(v) for v in value)
            elif isinstance(value, float):
                value = repr(value)
            lines.append(f"{key} = {value}")
        return "\n".join(lines) + "\n"
