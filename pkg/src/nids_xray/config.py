"""Flat dotted-key run configuration.

Config files are plain text, one ``key = value`` per line, ``#`` starts
a comment.  Every key has a typed default below; unknown keys are
rejected so typos fail fast.  CLI ``--set key=value`` overrides use the
same syntax and validation.
"""

from __future__ import annotations


class ConfigError(Exception):
    pass


def _parse_int(raw: str) -> int:
    return int(raw)


def _parse_float(raw: str) -> float:
    return float(raw)


def _parse_bool(raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ValueError("not a boolean: %r" % raw)


def _parse_str(raw: str) -> str:
    return raw.strip()


def _parse_rows(raw: str):
    low = raw.strip().lower()
    if low == "auto":
        return None
    n = int(raw)
    if n < 1:
        raise ValueError("row count must be >= 1 or auto")
    return n


def _parse_names(raw: str) -> tuple[str, ...]:
    names = tuple(p.strip() for p in raw.split(",") if p.strip())
    if not names:
        raise ValueError("empty list")
    return names


def _parse_bands(raw: str) -> tuple[tuple[int, int], ...]:
    bands = []
    for part in raw.split(","):
        part = part.strip()
        if not part:
            continue
        if ":" not in part:
            raise ValueError("band %r must be lo:hi" % part)
        lo, hi = part.split(":", 1)
        lo, hi = int(lo), int(hi)
        if not 1 <= lo <= hi:
            raise ValueError("band %r needs 1 <= lo <= hi" % part)
        bands.append((lo, hi))
    if not bands:
        raise ValueError("no bands given")
    return tuple(bands)


def _parse_floats(raw: str) -> tuple[float, ...]:
    vals = tuple(float(p) for p in raw.split(",") if p.strip())
    if not vals:
        raise ValueError("empty list")
    return vals


# key -> (parser, default)
SCHEMA = {
    "seed": (_parse_int, 0),
    "models": (_parse_names, ("reference", "rate_blind")),
    "ingest.labels": (_parse_str, ""),
    "features.evict": (_parse_bool, True),
    "train.rows": (_parse_rows, None),
    "train.m_max": (_parse_int, 10),
    "train.lr": (_parse_float, 0.01),
    "train.hidden_ratio": (_parse_float, 0.75),
    "train.calibration_fraction": (_parse_float, 0.1),
    "train.phi_multiplier": (_parse_float, 1.0),
    "rate_blind.column": (_parse_str, "MI_dir_1_mean"),
    "distill.sample_fraction": (_parse_float, 0.3),
    "distill.iterations": (_parse_int, 50),
    "distill.max_depth": (_parse_int, 100),
    "distill.min_leaf": (_parse_int, 5),
    "distill.holdout_fraction": (_parse_float, 0.3),
    "distill.stability_k": (_parse_int, 3),
    "distill.prune_k": (_parse_int, 10),
    "shap.budget": (_parse_int, 2048),
    "shap.background_rows": (_parse_int, 100),
    "shap.rows": (_parse_int, 200),
    "shap.top_n": (_parse_int, 10),
    "agree.m": (_parse_int, 3),
    "agree.top_n": (_parse_int, 10),
    "agree.min_rows": (_parse_int, 300),
    "agree.rows_per_subset": (_parse_int, 1000),
    "agree.budget": (_parse_int, 2048),
    "tamper.bands": (_parse_bands, ((10, 50), (30, 70), (50, 90))),
    "tamper.match": (_parse_str, "label=malicious"),
    "bias.vulnerable_below": (_parse_float, 0.5),
    "bias.stable_above": (_parse_float, 0.9),
    "report.alphas": (_parse_floats, (0.25, 0.5, 0.75)),
    "report.sort_alpha": (_parse_float, 0.5),
}


class Config(dict):
    """Validated flat configuration; behaves as a plain dict."""

    def set_entry(self, key: str, raw: str) -> None:
        if key not in SCHEMA:
            raise ConfigError("unknown config key %r" % key)
        parser, _ = SCHEMA[key]
        try:
            self[key] = parser(raw)
        except ValueError as exc:
            raise ConfigError("bad value for %s: %s" % (key, exc)) from None

    @staticmethod
    def load(path: str | None = None, overrides: tuple[str, ...] = ()) -> "Config":
        cfg = Config({key: default for key, (_, default) in SCHEMA.items()})
        if path is not None:
            with open(path, "r", encoding="utf-8") as fh:
                for lineno, line in enumerate(fh, start=1):
                    line = line.split("#", 1)[0].strip()
                    if not line:
                        continue
                    if "=" not in line:
                        raise ConfigError(
                            "%s:%d: expected key = value" % (path, lineno)
                        )
                    key, raw = line.split("=", 1)
                    try:
                        cfg.set_entry(key.strip(), raw.strip())
                    except ConfigError as exc:
                        raise ConfigError("%s:%d: %s" % (path, lineno, exc)) from None
        for item in overrides:
            if "=" not in item:
                raise ConfigError("override %r must be key=value" % item)
            key, raw = item.split("=", 1)
            cfg.set_entry(key.strip(), raw.strip())
        return cfg

    def as_json_dict(self) -> dict:
        """JSON-friendly copy (tuples become lists, bands become lo:hi)."""
        out = {}
        for key, val in sorted(self.items()):
            if key == "tamper.bands":
                out[key] = ["%d:%d" % (lo, hi) for lo, hi in val]
            elif isinstance(val, tuple):
                out[key] = list(val)
            else:
                out[key] = val
        return out
