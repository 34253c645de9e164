"""JSON game-spec files.

A spec is a JSON object with a ``schema_version`` and exactly one of

* ``game``: explicit tables ``reward_lo``, ``reward_gl`` (nested lists
  ``[s][a_lo][a_gl]``), ``transition`` (``[s][a_lo][a_gl][s']``), ``beta_lo``,
  ``beta_gl`` and an optional stationary ``la_policy`` (``[s][a_lo]``);
* ``generator``: ``{"kind": "wireless", "seed": int, "params": {...}}`` or
  ``{"kind": "random", "seed": int, "dims": [n_s, n_a_lo, n_a_gl], "beta": float}``.

Unknown keys are rejected at every level. Floats are written with ``repr`` so a
parse/serialize/parse cycle reproduces the tables bit for bit.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields
from typing import Any

import numpy as np

from .errors import ValidationError
from .game import (
    MarkovGame,
    WirelessParams,
    check_game,
    check_la_policy,
    random_game,
    wireless_example,
)

SCHEMA_VERSION = 1

_TOP_KEYS = {"schema_version", "game", "generator"}
_GAME_KEYS = {"reward_lo", "reward_gl", "transition", "beta_lo", "beta_gl", "la_policy"}
_GAME_REQUIRED = _GAME_KEYS - {"la_policy"}
_WIRELESS_KEYS = {"kind", "seed", "params"}
_RANDOM_KEYS = {"kind", "seed", "dims", "beta"}
_PARAM_KEYS = {f.name for f in fields(WirelessParams)}


@dataclass(frozen=True, eq=False)
class GameSpec:
    """A parsed spec: the game, the LA policy used by fixed-LA modes, and the source stanza."""

    game: MarkovGame
    la_policy: np.ndarray
    kind: str
    source: dict

    def to_dict(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, **self.source}

    def dumps(self) -> str:
        return dumps(self.to_dict())


def dumps(doc: Any) -> str:
    """Deterministic JSON text; non-finite floats become ``null``."""
    return json.dumps(_finite(doc), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _finite(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, np.floating):
        return _finite(float(obj))
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _finite(obj.tolist())
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    return obj


def _reject_constant(name):
    raise ValidationError(f"non-finite number {name} is not allowed")


def _check_keys(obj, allowed, required, where):
    if not isinstance(obj, dict):
        raise ValidationError(f"{where}: expected an object, got {type(obj).__name__}")
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise ValidationError(f"{where}: unknown field(s) {', '.join(unknown)}")
    missing = sorted(required - set(obj))
    if missing:
        raise ValidationError(f"{where}: missing field(s) {', '.join(missing)}")


def _number(value, where) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(f"{where}: expected a number, got {value!r}")
    return float(value)


def _integer(value, where) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValidationError(f"{where}: expected an integer, got {value!r}")
    return value


def _table(value, ndim, where) -> np.ndarray:
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{where}: not a rectangular numeric table ({exc})") from None
    if arr.ndim != ndim:
        raise ValidationError(f"{where}: expected {ndim}-d table, got shape {arr.shape}")
    return arr


def _explicit(stanza) -> tuple[MarkovGame, np.ndarray]:
    _check_keys(stanza, _GAME_KEYS, _GAME_REQUIRED, "game")
    try:
        game = MarkovGame(
            _table(stanza["reward_lo"], 3, "game.reward_lo"),
            _table(stanza["reward_gl"], 3, "game.reward_gl"),
            _table(stanza["transition"], 4, "game.transition"),
            _number(stanza["beta_lo"], "game.beta_lo"),
            _number(stanza["beta_gl"], "game.beta_gl"),
        )
    except ValueError as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(f"game: {exc}") from None
    check_game(game)
    if "la_policy" in stanza:
        try:
            pi_lo = check_la_policy(game, _table(stanza["la_policy"], 2, "game.la_policy"))
        except ValueError as exc:
            raise ValidationError(f"game.la_policy: {exc}") from None
    else:
        pi_lo = np.full((game.n_states, game.n_actions_lo), 1.0 / game.n_actions_lo)
    return game, pi_lo


def _generated(stanza) -> tuple[MarkovGame, np.ndarray, str]:
    if not isinstance(stanza, dict) or "kind" not in stanza:
        raise ValidationError("generator: missing field kind")
    kind = stanza["kind"]
    if kind == "wireless":
        _check_keys(stanza, _WIRELESS_KEYS, {"kind", "seed"}, "generator")
        seed = _integer(stanza["seed"], "generator.seed")
        raw = stanza.get("params", {})
        _check_keys(raw, _PARAM_KEYS, set(), "generator.params")
        params = {}
        for key, value in raw.items():
            where = f"generator.params.{key}"
            if key in ("n_actions_lo", "n_actions_gl"):
                params[key] = _integer(value, where)
            elif key in ("penalty", "beta"):
                params[key] = _number(value, where)
            elif value is None and key == "gains":
                params[key] = None
            else:
                if not isinstance(value, list):
                    raise ValidationError(f"{where}: expected a list of numbers")
                params[key] = tuple(_number(v, f"{where}[{i}]") for i, v in enumerate(value))
        game = check_game(wireless_example(seed, WirelessParams(**params)))
        pi_lo = np.full((game.n_states, game.n_actions_lo), 1.0 / game.n_actions_lo)
        return game, pi_lo, "wireless"
    if kind == "random":
        _check_keys(stanza, _RANDOM_KEYS, {"kind", "seed"}, "generator")
        seed = _integer(stanza["seed"], "generator.seed")
        dims = stanza.get("dims", [7, 4, 5])
        if not isinstance(dims, list) or len(dims) != 3:
            raise ValidationError("generator.dims: expected [n_states, n_a_lo, n_a_gl]")
        dims = [_integer(d, f"generator.dims[{i}]") for i, d in enumerate(dims)]
        if min(dims) < 1:
            raise ValidationError("generator.dims: dimensions must be positive")
        beta = _number(stanza.get("beta", 0.8), "generator.beta")
        game, pi_lo = random_game(seed, *dims, beta=beta)
        return check_game(game), pi_lo, "random"
    raise ValidationError(f"generator.kind: unknown generator {kind!r}")


def parse_spec(doc: dict) -> GameSpec:
    """Build a validated ``GameSpec`` from a decoded JSON object."""
    _check_keys(doc, _TOP_KEYS, {"schema_version"}, "spec")
    version = doc["schema_version"]
    if version != SCHEMA_VERSION:
        raise ValidationError(f"spec: unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")
    if ("game" in doc) == ("generator" in doc):
        raise ValidationError("spec: exactly one of 'game' or 'generator' is required")
    if "game" in doc:
        game, pi_lo = _explicit(doc["game"])
        return GameSpec(game, pi_lo, "explicit", {"game": doc["game"]})
    game, pi_lo, kind = _generated(doc["generator"])
    return GameSpec(game, pi_lo, kind, {"generator": doc["generator"]})


def loads(text: str) -> GameSpec:
    """Parse spec text. JSON syntax errors are reported with line and column."""
    try:
        doc = json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return parse_spec(doc)


def load(path) -> GameSpec:
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())


def game_to_spec(game: MarkovGame, la_policy=None) -> GameSpec:
    """Explicit spec for an in-memory game."""
    stanza = {
        "reward_lo": game.reward_lo.tolist(),
        "reward_gl": game.reward_gl.tolist(),
        "transition": game.transition.tolist(),
        "beta_lo": game.beta_lo,
        "beta_gl": game.beta_gl,
    }
    if la_policy is not None:
        stanza["la_policy"] = np.asarray(la_policy, dtype=float).tolist()
    return parse_spec({"schema_version": SCHEMA_VERSION, "game": stanza})


def with_generator_seed(spec: GameSpec, seed: int) -> GameSpec:
    """Same generator stanza with a different seed; explicit specs are returned unchanged."""
    if spec.kind == "explicit":
        return spec
    stanza = dict(spec.source["generator"], seed=int(seed))
    return parse_spec({"schema_version": SCHEMA_VERSION, "generator": stanza})
